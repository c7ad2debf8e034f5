#![allow(dead_code)]

use kws::encoder::EncoderConfig;
use kws::frontend::{GenConfig, PairKind, PairSample, Synthesizer};
use kws::graph::{Graph, Var};
use kws::matcher::MatcherConfig;
use kws::params::ParamStore;
use kws::trainer::LossWeights;
use kws::{KwsModel, ModelConfig, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn tiny_gen() -> GenConfig {
    GenConfig {
        vocab_size: 4,
        min_len: 2,
        max_len: 4,
        max_keyword_len: 6,
        frames_min: 2,
        frames_max: 3,
        feature_dim: 3,
        ..GenConfig::default()
    }
}

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 4,
        feature_dim: 3,
        max_keyword_len: 6,
        encoder: EncoderConfig {
            layers: 1,
            dim: 8,
            conv_kernel: 3,
            ff_expansion: 2,
            heads: 2,
        },
        matcher: MatcherConfig {
            hidden: 8,
            filter: 8,
            layers: 1,
            heads: 2,
        },
    }
}

pub fn tiny_model(seed: u64) -> KwsModel {
    KwsModel::new(tiny_config(), seed).unwrap()
}

pub fn tiny_sample(seed: u64) -> PairSample {
    let synth = Synthesizer::new(tiny_gen()).unwrap();
    let kind = [PairKind::Positive, PairKind::EasyNegative, PairKind::HardNegative][seed as usize % 3];
    synth
        .synth_pair(&mut ChaCha8Rng::seed_from_u64(seed), kind)
        .unwrap()
}

/// `2·utt + 1·ss + 5·ctc` with the parameters taken from `store`.
pub fn composite_loss(model: &KwsModel, store: &ParamStore, g: &mut Graph, sample: &PairSample) -> Result<Var> {
    let mut m = model.clone();
    m.params = store.clone();
    let w = LossWeights::default();
    let l = m.losses(g, sample)?;
    let a = g.scale(l.utterance, w.utterance);
    let b = g.scale(l.subsequence, w.subsequence);
    let mut total = g.add(a, b)?;
    if let Some(c) = l.ctc {
        let c = g.scale(c, w.ctc);
        total = g.add(total, c)?;
    }
    Ok(total)
}

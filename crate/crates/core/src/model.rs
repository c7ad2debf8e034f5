//! The full keyword spotter: encoder, CTC head, matcher and both heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ctc::ctc_loss_node;
use crate::encoder::{AudioEncoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::frontend::{
    subsequence_labels, AudioFeatures, PaddedAnchor, PairSample, PhonemeVocab, DEFAULT_MAX_LEN,
};
use crate::graph::{Graph, Var};
use crate::layers::Linear;
use crate::matcher::{
    subsequence_loss, MatchDecision, Matcher, MatcherConfig, SubsequenceHeads, UtteranceHead,
};
use crate::params::ParamStore;

/// Parameter-name prefixes that exist only for the auxiliary training tasks.
pub const TRAINING_ONLY_PREFIXES: [&str; 2] = ["ctc.", "subseq."];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub feature_dim: usize,
    /// Maximum supported keyword length T.
    pub max_keyword_len: usize,
    pub encoder: EncoderConfig,
    pub matcher: MatcherConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 12,
            feature_dim: 16,
            max_keyword_len: DEFAULT_MAX_LEN,
            encoder: EncoderConfig::default(),
            matcher: MatcherConfig::default(),
        }
    }
}

impl ModelConfig {
    /// Sizes used in the reference experiments (D = 64, 4 + 4 layers).
    pub fn full_scale(vocab_size: usize, feature_dim: usize) -> Self {
        Self {
            vocab_size,
            feature_dim,
            ..Self::default()
        }
    }

    /// The small CPU configuration: D = 16, 1 encoder layer, 2 matcher layers.
    pub fn desk_scale(vocab_size: usize, feature_dim: usize) -> Self {
        Self {
            vocab_size,
            feature_dim,
            max_keyword_len: DEFAULT_MAX_LEN,
            encoder: EncoderConfig {
                layers: 1,
                dim: 16,
                conv_kernel: 7,
                ff_expansion: 2,
                heads: 4,
            },
            matcher: MatcherConfig {
                hidden: 16,
                filter: 32,
                layers: 2,
                heads: 4,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.matcher.validate()?;
        if self.encoder.dim != self.matcher.hidden {
            return Err(Error::Config(format!(
                "encoder dim {} must equal matcher hidden {}",
                self.encoder.dim, self.matcher.hidden
            )));
        }
        if self.vocab_size == 0 || self.feature_dim == 0 || self.max_keyword_len == 0 {
            return Err(Error::Config("vocab, feature and keyword sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn blank_id(&self) -> usize {
        self.vocab_size
    }

    pub fn pad_id(&self) -> usize {
        self.vocab_size + 1
    }
}

/// Loss nodes for one sample. `ctc` is `None` when the target cannot be
/// aligned in the available frames.
pub struct SampleLosses {
    pub utterance: Var,
    pub subsequence: Var,
    pub ctc: Option<Var>,
}

/// Everything the forward pass exposes.
pub struct ForwardOutput {
    pub audio: Var,
    pub attention: Var,
    pub utterance_logits: Var,
}

#[derive(Clone, Debug)]
pub struct KwsModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub encoder: AudioEncoder,
    pub matcher: Matcher,
    pub utterance: UtteranceHead,
    pub ctc_head: Option<Linear>,
    pub subsequence: Option<SubsequenceHeads>,
}

impl KwsModel {
    /// Fresh model with seeded initialisation.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let d = config.encoder.dim;
        let t = config.max_keyword_len;
        let encoder = AudioEncoder::new(&mut params, config.feature_dim, &config.encoder, &mut rng)?;
        let matcher = Matcher::new(
            &mut params,
            config.vocab_size + 2,
            config.pad_id(),
            &config.matcher,
            &mut rng,
        )?;
        let utterance = UtteranceHead::new(&mut params, t, d, &mut rng);
        // training-only parameters go last
        let ctc_head = Linear::new(&mut params, "ctc.proj", d, config.vocab_size + 1, &mut rng);
        let subsequence = SubsequenceHeads::new(&mut params, t, d, &mut rng);
        Ok(Self {
            config,
            params,
            encoder,
            matcher,
            utterance,
            ctc_head: Some(ctc_head),
            subsequence: Some(subsequence),
        })
    }

    /// Rebuilds a model with the given parameter values. When `stripped`,
    /// the training-only heads are dropped and their parameters not required.
    pub fn from_params(config: ModelConfig, params: &ParamStore, stripped: bool) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if stripped {
            model.strip();
        }
        model.params.load_from(params)?;
        if model.params.len() != params.len() {
            return Err(Error::Format(format!(
                "expected {} parameter tensors, found {}",
                model.params.len(),
                params.len()
            )));
        }
        Ok(model)
    }

    pub fn is_stripped(&self) -> bool {
        self.subsequence.is_none()
    }

    /// Drops the CTC projection and the prefix heads.
    pub fn strip(&mut self) {
        if self.is_stripped() {
            return;
        }
        self.params
            .retain(|n| !TRAINING_ONLY_PREFIXES.iter().any(|pre| n.starts_with(pre)));
        self.ctc_head = None;
        self.subsequence = None;
    }

    pub fn encode(&self, g: &mut Graph, audio: &AudioFeatures) -> Result<Var> {
        if audio.feature_dim() != self.config.feature_dim {
            return Err(Error::DimensionMismatch {
                op: "encode_audio",
                lhs: audio.frames().shape().to_vec(),
                rhs: vec![self.config.feature_dim],
            });
        }
        let x = g.input(audio.frames().clone());
        self.encoder.forward(g, &self.params, x)
    }

    /// Per-frame phoneme + blank logits (n × (V+1)).
    pub fn ctc_logits(&self, g: &mut Graph, encoded: Var) -> Result<Var> {
        let head = self.ctc_head.as_ref().ok_or(Error::Stripped)?;
        head.forward(g, &self.params, encoded)
    }

    fn check_anchor(&self, anchor: &PaddedAnchor) -> Result<()> {
        if anchor.max_len() != self.config.max_keyword_len {
            return Err(Error::Mismatch(format!(
                "anchor padded to {} but the model supports T={}",
                anchor.max_len(),
                self.config.max_keyword_len
            )));
        }
        Ok(())
    }

    /// The utterance path: encode, cross-attend, flatten, classify.
    pub fn forward(&self, g: &mut Graph, audio: &AudioFeatures, anchor: &PaddedAnchor) -> Result<ForwardOutput> {
        self.check_anchor(anchor)?;
        let encoded = self.encode(g, audio)?;
        let query = self.matcher.text_query(g, &self.params, anchor)?;
        let attention = self.matcher.cross_attend(g, &self.params, query, encoded)?;
        let utterance_logits = self.utterance.forward(g, &self.params, attention)?;
        Ok(ForwardOutput {
            audio: encoded,
            attention,
            utterance_logits,
        })
    }

    /// Prefix-head logits for all T heads (1×2 each).
    pub fn subsequence_logits(&self, g: &mut Graph, attention: Var) -> Result<Vec<Var>> {
        let heads = self.subsequence.as_ref().ok_or(Error::Stripped)?;
        heads.forward(g, &self.params, attention, self.config.max_keyword_len)
    }

    /// Builds the three task losses for a training pair.
    pub fn losses(&self, g: &mut Graph, sample: &PairSample) -> Result<SampleLosses> {
        let out = self.forward(g, &sample.audio, &sample.anchor)?;
        let utterance = g.cross_entropy(out.utterance_logits, &[sample.utterance_label().class()])?;

        let heads = self.subsequence.as_ref().ok_or(Error::Stripped)?;
        let labels = subsequence_labels(&sample.anchor, &sample.spoken);
        let logits = heads.forward(g, &self.params, out.attention, sample.anchor.valid_len())?;
        let subsequence = subsequence_loss(g, &logits, &labels)?;

        let ctc_logits = self.ctc_logits(g, out.audio)?;
        let ctc = match ctc_loss_node(g, ctc_logits, &sample.spoken) {
            Ok(v) => Some(v),
            Err(Error::InfeasibleAlignment { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(SampleLosses {
            utterance,
            subsequence,
            ctc,
        })
    }

    pub fn decide(&self, audio: &AudioFeatures, anchor: &PaddedAnchor) -> Result<MatchDecision> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, audio, anchor)?;
        let l = g.value(out.utterance_logits).data();
        Ok(MatchDecision::from_logits([l[0], l[1]]))
    }

    /// Probability of the match class.
    pub fn score(&self, audio: &AudioFeatures, anchor: &PaddedAnchor) -> Result<f64> {
        Ok(self.decide(audio, anchor)?.score)
    }

    /// Match probability of every prefix head (length T).
    pub fn subsequence_scores(&self, audio: &AudioFeatures, anchor: &PaddedAnchor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, audio, anchor)?;
        let logits = self.subsequence_logits(&mut g, out.attention)?;
        Ok(logits
            .iter()
            .map(|&l| {
                let v = g.value(l).data();
                MatchDecision::from_logits([v[0], v[1]]).score
            })
            .collect())
    }

    pub fn greedy_transcript(&self, audio: &AudioFeatures) -> Result<Vec<usize>> {
        let mut g = Graph::new();
        let h = self.encode(&mut g, audio)?;
        let logits = self.ctc_logits(&mut g, h)?;
        Ok(crate::ctc::greedy_decode(g.value(logits)))
    }

    pub fn vocab(&self) -> PhonemeVocab {
        PhonemeVocab::arpabet(self.config.vocab_size).expect("vocab size validated at synthesis")
    }

    /// Parameter counts grouped by the first name component.
    pub fn parameter_groups(&self) -> Vec<(String, usize)> {
        let mut groups: Vec<(String, usize)> = Vec::new();
        for (name, t) in self.params.iter() {
            let group = name.split('.').next().unwrap_or(name).to_string();
            match groups.iter_mut().find(|(g, _)| *g == group) {
                Some((_, c)) => *c += t.len(),
                None => groups.push((group, t.len())),
            }
        }
        groups
    }

    /// Number of scalars kept after [`KwsModel::strip`].
    pub fn inference_numel(&self) -> usize {
        self.params
            .iter()
            .filter(|(n, _)| !TRAINING_ONLY_PREFIXES.iter().any(|p| n.starts_with(p)))
            .map(|(_, t)| t.len())
            .sum()
    }
}

//! Synthetic paired keyword/audio corpus.
//!
//! Each phoneme owns a fixed prototype feature vector. Spoken text becomes
//! audio by emitting a random number of noisy copies of each prototype in
//! order. Pairs come in three kinds: positives (anchor = spoken), easy
//! negatives (an unrelated keyword with a different first phoneme) and hard
//! negatives (one or two substitutions after position 0).

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::anchor::{pad_anchor, PaddedAnchor, DEFAULT_MAX_LEN};
use super::vocab::{PhonemeSeq, PhonemeVocab};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Variable-length n×F acoustic frames.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioFeatures {
    frames: Tensor,
}

impl AudioFeatures {
    pub fn new(frames: Tensor) -> Result<Self> {
        if frames.shape().len() != 2 {
            return Err(Error::Shape(format!("audio must be n×F, got {:?}", frames.shape())));
        }
        if frames.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("audio features"));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn num_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.frames.cols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairKind {
    Positive,
    EasyNegative,
    HardNegative,
}

impl PairKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PairKind::Positive => "positive",
            PairKind::EasyNegative => "easy",
            PairKind::HardNegative => "hard",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            PairKind::Positive => 0,
            PairKind::EasyNegative => 1,
            PairKind::HardNegative => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(PairKind::Positive),
            1 => Ok(PairKind::EasyNegative),
            2 => Ok(PairKind::HardNegative),
            _ => Err(Error::Format(format!("unknown pair kind code {c}"))),
        }
    }
}

impl fmt::Display for PairKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(PairKind::Positive),
            "easy" => Ok(PairKind::EasyNegative),
            "hard" => Ok(PairKind::HardNegative),
            _ => Err(Error::Config(format!("unknown pair kind `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UtteranceLabel {
    Mismatch,
    Match,
}

impl UtteranceLabel {
    pub fn class(self) -> usize {
        match self {
            UtteranceLabel::Mismatch => 0,
            UtteranceLabel::Match => 1,
        }
    }

    pub fn is_match(self) -> bool {
        self == UtteranceLabel::Match
    }
}

/// One training or test pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSample {
    pub audio: AudioFeatures,
    pub anchor: PaddedAnchor,
    pub spoken: PhonemeSeq,
    pub kind: PairKind,
}

impl PairSample {
    pub fn utterance_label(&self) -> UtteranceLabel {
        if self.anchor.phonemes() == &self.spoken[..] {
            UtteranceLabel::Match
        } else {
            UtteranceLabel::Mismatch
        }
    }
}

/// Generation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Maximum supported keyword length T.
    pub max_keyword_len: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    pub feature_dim: usize,
    pub noise: f64,
    /// Seed of the phoneme prototypes; shared by every corpus that should be
    /// drawn from the same "speaker".
    pub world_seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            vocab_size: 12,
            min_len: 3,
            max_len: 12,
            max_keyword_len: DEFAULT_MAX_LEN,
            frames_min: 4,
            frames_max: 12,
            feature_dim: 16,
            noise: 0.3,
            world_seed: 0x5eed,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.vocab_size < 2 {
            return bad(format!(
                "vocab_size {} leaves no room for distinct negatives",
                self.vocab_size
            ));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad(format!("length range {}..={} is empty", self.min_len, self.max_len));
        }
        if self.max_len > self.max_keyword_len {
            return bad(format!(
                "max_len {} exceeds the supported keyword length {}",
                self.max_len, self.max_keyword_len
            ));
        }
        if self.frames_min == 0 || self.frames_min > self.frames_max {
            return bad(format!(
                "frame range {}..={} is empty",
                self.frames_min, self.frames_max
            ));
        }
        if self.feature_dim == 0 || !(self.noise >= 0.0) {
            return bad("feature_dim must be positive and noise non-negative".into());
        }
        Ok(())
    }
}

/// The fixed acoustic world: vocabulary plus one prototype per phoneme.
#[derive(Clone, Debug)]
pub struct Synthesizer {
    cfg: GenConfig,
    vocab: PhonemeVocab,
    prototypes: Tensor,
}

impl Synthesizer {
    pub fn new(cfg: GenConfig) -> Result<Self> {
        cfg.validate()?;
        let vocab = PhonemeVocab::arpabet(cfg.vocab_size)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.world_seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let data = (0..cfg.vocab_size * cfg.feature_dim)
            .map(|_| normal.sample(&mut rng))
            .collect();
        let prototypes = Tensor::matrix(cfg.vocab_size, cfg.feature_dim, data);
        Ok(Self {
            cfg,
            vocab,
            prototypes,
        })
    }

    pub fn config(&self) -> &GenConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &PhonemeVocab {
        &self.vocab
    }

    pub fn prototypes(&self) -> &Tensor {
        &self.prototypes
    }

    /// Keyword length: `min_len + Binomial(max_len − min_len, ½)`, peaked mid-range.
    pub fn sample_length<R: Rng>(&self, rng: &mut R) -> usize {
        let span = (self.cfg.max_len - self.cfg.min_len) as u64;
        let extra = if span == 0 {
            0
        } else {
            Binomial::new(span, 0.5).expect("valid binomial").sample(rng) as usize
        };
        self.cfg.min_len + extra
    }

    pub fn sample_keyword<R: Rng>(&self, rng: &mut R) -> PhonemeSeq {
        let len = self.sample_length(rng);
        PhonemeSeq((0..len).map(|_| rng.gen_range(0..self.cfg.vocab_size)).collect())
    }

    /// Realises `spoken` as noisy frames, rounded through `f32` to match the
    /// on-disk representation.
    pub fn render_audio<R: Rng>(&self, rng: &mut R, spoken: &[usize]) -> AudioFeatures {
        let f = self.cfg.feature_dim;
        let noise = Normal::new(0.0, self.cfg.noise.max(f64::MIN_POSITIVE)).expect("valid sigma");
        let mut data = Vec::new();
        for &p in spoken {
            let frames = rng.gen_range(self.cfg.frames_min..=self.cfg.frames_max);
            for _ in 0..frames {
                for j in 0..f {
                    let x = self.prototypes.at(p, j)
                        + if self.cfg.noise > 0.0 {
                            noise.sample(rng)
                        } else {
                            0.0
                        };
                    data.push(x as f32 as f64);
                }
            }
        }
        let n = data.len() / f;
        AudioFeatures::new(Tensor::matrix(n, f, data)).expect("finite synthetic audio")
    }

    fn substitute<R: Rng>(&self, rng: &mut R, old: usize) -> usize {
        let mut p = rng.gen_range(0..self.cfg.vocab_size - 1);
        if p >= old {
            p += 1;
        }
        p
    }

    /// Draws one pair of the requested kind.
    pub fn synth_pair<R: Rng>(&self, rng: &mut R, kind: PairKind) -> Result<PairSample> {
        let (anchor_seq, spoken) = match kind {
            PairKind::Positive => {
                let k = self.sample_keyword(rng);
                (k.clone(), k)
            }
            PairKind::EasyNegative => {
                let anchor = self.sample_keyword(rng);
                let mut spoken = self.sample_keyword(rng);
                if spoken[0] == anchor[0] {
                    spoken.0[0] = self.substitute(rng, anchor[0]);
                }
                (anchor, spoken)
            }
            PairKind::HardNegative => {
                if self.cfg.max_len < 2 {
                    return Err(Error::Config(
                        "hard negatives need keywords of at least 2 phonemes".into(),
                    ));
                }
                let mut anchor = self.sample_keyword(rng);
                while anchor.len() < 2 {
                    anchor = self.sample_keyword(rng);
                }
                let subs = if anchor.len() >= 3 && rng.gen_bool(0.5) { 2 } else { 1 };
                let mut positions: Vec<usize> = (1..anchor.len()).collect();
                positions.shuffle(rng);
                let mut spoken = anchor.clone();
                for &pos in &positions[..subs] {
                    spoken.0[pos] = self.substitute(rng, anchor[pos]);
                }
                (anchor, spoken)
            }
        };
        let audio = self.render_audio(rng, &spoken);
        let anchor = pad_anchor(&anchor_seq, self.cfg.max_keyword_len, self.vocab.pad_id())?;
        Ok(PairSample {
            audio,
            anchor,
            spoken,
            kind,
        })
    }
}

/// Requested number of pairs per kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub positive: usize,
    pub easy: usize,
    pub hard: usize,
}

impl PairCounts {
    pub fn total(&self) -> usize {
        self.positive + self.easy + self.hard
    }
}

/// Per-sample generator: a pure function of `(seed, index)`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index + 1);
    rng
}

/// Generates a corpus whose record `i` depends only on `(seed, i)`; the
/// order of kinds is a seeded shuffle.
pub fn generate(synth: &Synthesizer, counts: PairCounts, seed: u64) -> Result<Vec<PairSample>> {
    let mut kinds = Vec::with_capacity(counts.total());
    kinds.extend(std::iter::repeat(PairKind::Positive).take(counts.positive));
    kinds.extend(std::iter::repeat(PairKind::EasyNegative).take(counts.easy));
    kinds.extend(std::iter::repeat(PairKind::HardNegative).take(counts.hard));
    kinds.shuffle(&mut sample_rng(seed, u64::MAX - 1));
    kinds
        .into_iter()
        .enumerate()
        .map(|(i, kind)| synth.synth_pair(&mut sample_rng(seed, i as u64), kind))
        .collect()
}

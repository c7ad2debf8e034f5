//! Run configuration file.
//!
//! A TOML document with optional sections; anything omitted takes its
//! default. Command-line flags are applied on top, and the resolved result is
//! written next to the run's outputs.
//!
//! ```toml
//! seed = 7
//!
//! [generator]
//! vocab_size = 12
//! min_len = 3
//! max_len = 12
//!
//! [corpus]
//! positive = 2000
//! easy = 2000
//! hard = 2000
//! test_seed_offset = 1000
//!
//! [train]
//! batch_size = 64
//! epochs = 30
//!
//! [train.weights]
//! utterance = 2.0
//! subsequence = 1.0
//! ctc = 5.0
//!
//! [train.model.encoder]
//! layers = 1
//! dim = 16
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{Corpus, GenConfig, PairCounts, Synthesizer};
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub positive: usize,
    pub easy: usize,
    pub hard: usize,
    /// The test corpus is drawn with `seed + test_seed_offset`.
    pub test_seed_offset: u64,
    pub test_positive: usize,
    pub test_easy: usize,
    pub test_hard: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            positive: 2000,
            easy: 2000,
            hard: 2000,
            test_seed_offset: 1000,
            test_positive: 500,
            test_easy: 500,
            test_hard: 500,
        }
    }
}

impl CorpusSection {
    pub fn train_counts(&self) -> PairCounts {
        PairCounts {
            positive: self.positive,
            easy: self.easy,
            hard: self.hard,
        }
    }

    pub fn test_counts(&self) -> PairCounts {
        PairCounts {
            positive: self.test_positive,
            easy: self.test_easy,
            hard: self.test_hard,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed: corpus synthesis and training both derive from it.
    pub seed: u64,
    pub generator: GenConfig,
    pub corpus: CorpusSection,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg.resolved())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Replaces the master seed and every seed derived from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.resolved()
    }

    fn resolved(mut self) -> Self {
        self.train.seed = self.seed;
        self
    }

    /// Checks every section and that the model matches the generator.
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.train.validate()?;
        let (g, m) = (&self.generator, &self.train.model);
        if (g.vocab_size, g.feature_dim, g.max_keyword_len)
            != (m.vocab_size, m.feature_dim, m.max_keyword_len)
        {
            return Err(Error::Config(format!(
                "generator (vocab {}, F {}, T {}) and model (vocab {}, F {}, T {}) disagree",
                g.vocab_size, g.feature_dim, g.max_keyword_len, m.vocab_size, m.feature_dim, m.max_keyword_len
            )));
        }
        Ok(())
    }

    pub fn synthesizer(&self) -> Result<Synthesizer> {
        Synthesizer::new(self.generator.clone())
    }

    pub fn train_corpus(&self) -> Result<Corpus> {
        Corpus::synthesize(&self.synthesizer()?, self.corpus.train_counts(), self.seed)
    }

    pub fn test_corpus(&self) -> Result<Corpus> {
        Corpus::synthesize(
            &self.synthesizer()?,
            self.corpus.test_counts(),
            self.seed.wrapping_add(self.corpus.test_seed_offset),
        )
    }

    /// Writes the resolved configuration as `config.toml` in `dir`.
    pub fn echo_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), self.to_toml())?;
        Ok(())
    }
}

//! Open-vocabulary keyword spotting from a phoneme text anchor.
//!
//! A conformer audio encoder and a cross-attention matcher decide whether a
//! clip contains the keyword given as phonemes. Training combines three
//! tasks: the utterance-level match, a per-prefix match with one classifier
//! per keyword length, and CTC phoneme recognition on the audio encoder. Only
//! the utterance path is kept for inference.
//!
//! Everything runs on a small reverse-mode autodiff tape over row-major f64
//! tensors, so the crate has no native dependencies.
//!
//! ```no_run
//! use kws::{config::RunConfig, trainer, eval::EvalReport, KwsModel};
//!
//! let cfg = RunConfig::default();
//! let corpus = cfg.train_corpus()?;
//! let run = trainer::train(&corpus, &cfg.train, None, |m| println!("{}", m.csv_row()))?;
//! let ck = run.checkpoint;
//! let model = KwsModel::from_params(ck.model.clone(), &ck.params, false)?;
//! println!("{}", EvalReport::compute(&model, &cfg.test_corpus()?)?);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod checkpoint;
pub mod config;
pub mod ctc;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod matcher;
pub mod model;
pub mod params;
pub mod tensor;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use model::{KwsModel, ModelConfig};
pub use tensor::Tensor;

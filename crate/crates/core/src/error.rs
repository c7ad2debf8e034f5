use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    DimensionMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite input to {0}")]
    NonFinite(&'static str),
    #[error("expected a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("unknown layer kind `{0}`")]
    UnknownLayerKind(String),
    #[error("unknown word `{0}` (not in lexicon)")]
    UnknownWord(String),
    #[error("unknown phoneme `{0}`")]
    UnknownPhoneme(String),
    #[error("keyword has {len} phonemes, exceeding the maximum supported length T={max}")]
    KeywordTooLong { len: usize, max: usize },
    #[error("empty keyword")]
    EmptyKeyword,
    #[error("id {id} out of range for table with {rows} rows")]
    IdOutOfRange { id: usize, rows: usize },
    #[error("empty audio (zero frames)")]
    EmptyAudio,
    #[error("infeasible alignment: target of length {target_len} cannot be emitted in {frames} frames")]
    InfeasibleAlignment { target_len: usize, frames: usize },
    #[error("instance too large for exhaustive enumeration: {0} paths")]
    TooLarge(u128),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("scored set needs both classes (positives: {positives}, negatives: {negatives})")]
    SingleClass { positives: usize, negatives: usize },
    #[error("checkpoint has been stripped for inference; subsequence heads are absent")]
    Stripped,
    #[error("non-finite loss component `{0}`")]
    NonFiniteLoss(&'static str),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("mismatched inputs: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

//! Phoneme text handling and the synthetic paired corpus.

mod anchor;
mod corpus;
mod lexicon;
mod synth;
mod vocab;

pub use anchor::{
    embed_anchor, keyword_length_histogram, pad_anchor, subsequence_labels, PaddedAnchor,
    SubseqLabel, SubseqLabels, DEFAULT_MAX_LEN,
};
pub use corpus::{audio_from_bytes, audio_to_bytes, load_audio, save_audio, Corpus};
pub use lexicon::Lexicon;
pub use synth::{
    generate, sample_rng, AudioFeatures, GenConfig, PairCounts, PairKind, PairSample, Synthesizer,
    UtteranceLabel,
};
pub use vocab::{PhonemeSeq, PhonemeVocab, ARPABET};

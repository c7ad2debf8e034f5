//! Static pronunciation lexicon standing in for grapheme-to-phoneme conversion.
//!
//! File format: one entry per line, `word<TAB>PH1 PH2 …`. Blank lines and
//! lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::path::Path;

use super::vocab::{PhonemeSeq, PhonemeVocab};
use crate::error::{Error, Result};

const BUILTIN: &str = include_str!("../../data/lexicon.txt");

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<String, PhonemeSeq>,
}

impl Lexicon {
    pub fn parse(text: &str, vocab: &PhonemeVocab) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, phones) = line.split_once('\t').ok_or_else(|| {
                Error::Format(format!("lexicon line {}: expected word<TAB>phonemes", lineno + 1))
            })?;
            let seq = vocab.parse(phones)?;
            if seq.is_empty() {
                return Err(Error::Format(format!(
                    "lexicon line {}: `{word}` has no phonemes",
                    lineno + 1
                )));
            }
            entries.insert(word.to_lowercase(), seq);
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path, vocab: &PhonemeVocab) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, vocab)
    }

    /// The bundled entries whose phonemes all exist in `vocab`.
    pub fn builtin(vocab: &PhonemeVocab) -> Self {
        let mut entries = BTreeMap::new();
        for line in BUILTIN.lines() {
            if let Some((word, phones)) = line.split_once('\t') {
                if let Ok(seq) = vocab.parse(phones) {
                    entries.insert(word.to_string(), seq);
                }
            }
        }
        Self { entries }
    }

    pub fn insert(&mut self, word: impl Into<String>, seq: PhonemeSeq) {
        self.entries.insert(word.into().to_lowercase(), seq);
    }

    pub fn get(&self, word: &str) -> Option<&PhonemeSeq> {
        self.entries.get(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &PhonemeSeq)> {
        self.entries.iter().map(|(w, s)| (w.as_str(), s))
    }

    /// Concatenates the pronunciations of whitespace-separated words.
    pub fn lookup(&self, words: &str) -> Result<PhonemeSeq> {
        let mut out = Vec::new();
        for w in words.split_whitespace() {
            let seq = self.get(w).ok_or_else(|| Error::UnknownWord(w.to_string()))?;
            out.extend_from_slice(seq);
        }
        Ok(PhonemeSeq(out))
    }

    pub fn to_text(&self, vocab: &PhonemeVocab) -> String {
        let mut s = String::new();
        for (w, seq) in &self.entries {
            s.push_str(w);
            s.push('\t');
            s.push_str(&vocab.render(seq));
            s.push('\n');
        }
        s
    }
}

use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;

use crate::error::{Error, Result};

/// ARPAbet symbols in the order vocabularies are cut from. The first twelve
/// cover "service", "surface" and "nervous".
pub const ARPABET: &[&str] = &[
    "S", "ER1", "V", "AH0", "F", "N", "T", "K", "IY1", "L", "M", "D", "R", "P", "B", "G", "Z",
    "HH", "W", "Y", "JH", "CH", "SH", "ZH", "TH", "DH", "NG", "AE1", "EH1", "IH0", "IH1", "IH2",
    "AA1", "AA2", "AO1", "OW1", "UW1", "AY0", "AY1", "EY1", "ER0", "IY0", "AH1", "AW1", "OY1",
    "UH1",
];

/// Phoneme inventory. Phonemes take ids `0..len()`; the CTC blank is `len()`
/// and padding is `len() + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhonemeVocab {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl PhonemeVocab {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::Config("empty phoneme vocabulary".into()));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate phoneme `{s}`")));
            }
        }
        Ok(Self { symbols, index })
    }

    /// The first `size` symbols of [`ARPABET`].
    pub fn arpabet(size: usize) -> Result<Self> {
        if size > ARPABET.len() {
            return Err(Error::Config(format!(
                "vocabulary size {size} exceeds the {} available symbols",
                ARPABET.len()
            )));
        }
        Self::new(ARPABET[..size].iter().map(|s| s.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn blank_id(&self) -> usize {
        self.symbols.len()
    }

    pub fn pad_id(&self) -> usize {
        self.symbols.len() + 1
    }

    /// Rows in the phoneme-to-vector table (phonemes, blank, pad).
    pub fn table_rows(&self) -> usize {
        self.symbols.len() + 2
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn id(&self, symbol: &str) -> Result<usize> {
        self.index
            .get(symbol)
            .copied()
            .ok_or_else(|| Error::UnknownPhoneme(symbol.to_string()))
    }

    pub fn symbol(&self, id: usize) -> &str {
        if id == self.blank_id() {
            "<blank>"
        } else if id == self.pad_id() {
            "<pad>"
        } else {
            &self.symbols[id]
        }
    }

    pub fn render(&self, seq: &[usize]) -> String {
        seq.iter()
            .map(|&id| self.symbol(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn parse(&self, text: &str) -> Result<PhonemeSeq> {
        text.split_whitespace()
            .map(|s| self.id(s))
            .collect::<Result<Vec<_>>>()
            .map(PhonemeSeq)
    }
}

/// A variable-length sequence of phoneme ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct PhonemeSeq(pub Vec<usize>);

impl Deref for PhonemeSeq {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for PhonemeSeq {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

impl fmt::Display for PhonemeSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

//! Fixed-length anchors and prefix-level ground truth.
//!
//! Prefix heads are indexed from 0 here: head `t` looks at the first `t + 1`
//! phonemes. Everything user-facing (CSV dumps, logs) prints `t + 1`.

use std::collections::BTreeMap;
use std::fmt;

use super::vocab::PhonemeSeq;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default maximum supported keyword length, in phonemes.
pub const DEFAULT_MAX_LEN: usize = 25;

/// A keyword padded to exactly `T` ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedAnchor {
    ids: Vec<usize>,
    valid_len: usize,
}

impl PaddedAnchor {
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn valid_len(&self) -> usize {
        self.valid_len
    }

    /// The `T` this anchor was padded to.
    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    pub fn phonemes(&self) -> &[usize] {
        &self.ids[..self.valid_len]
    }
}

/// Pads `seq` with `pad_id` up to `max_len`.
pub fn pad_anchor(seq: &[usize], max_len: usize, pad_id: usize) -> Result<PaddedAnchor> {
    if seq.is_empty() {
        return Err(Error::EmptyKeyword);
    }
    if seq.len() > max_len {
        return Err(Error::KeywordTooLong {
            len: seq.len(),
            max: max_len,
        });
    }
    if let Some(&id) = seq.iter().find(|&&id| id == pad_id) {
        return Err(Error::IdOutOfRange { id, rows: pad_id });
    }
    let mut ids = seq.to_vec();
    ids.resize(max_len, pad_id);
    Ok(PaddedAnchor {
        ids,
        valid_len: seq.len(),
    })
}

/// Looks up one table row per anchor position (T×D). The pad row of a
/// well-formed table is zero, so padded positions come out zero.
pub fn embed_anchor(anchor: &PaddedAnchor, table: &Tensor) -> Result<Tensor> {
    let rows = table.rows();
    let d = table.cols();
    let mut out = Vec::with_capacity(anchor.ids.len() * d);
    for &id in &anchor.ids {
        if id >= rows {
            return Err(Error::IdOutOfRange { id, rows });
        }
        out.extend_from_slice(table.row(id));
    }
    Ok(Tensor::matrix(anchor.ids.len(), d, out))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SubseqLabel {
    Match,
    Mismatch,
    Invalid,
}

impl SubseqLabel {
    /// Cross-entropy class index (match = 1), or `None` for invalid positions.
    pub fn class(self) -> Option<usize> {
        match self {
            SubseqLabel::Match => Some(1),
            SubseqLabel::Mismatch => Some(0),
            SubseqLabel::Invalid => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SubseqLabel::Match => "match",
            SubseqLabel::Mismatch => "mismatch",
            SubseqLabel::Invalid => "invalid",
        }
    }
}

impl fmt::Display for SubseqLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One label per prefix head, length `T`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubseqLabels(pub Vec<SubseqLabel>);

impl SubseqLabels {
    pub fn iter(&self) -> impl Iterator<Item = SubseqLabel> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Labels each anchor prefix: match while the anchor prefix equals the
/// spoken prefix of the same length (mismatch once spoken runs out), invalid
/// past the anchor's valid length.
pub fn subsequence_labels(anchor: &PaddedAnchor, spoken: &[usize]) -> SubseqLabels {
    let mut labels = Vec::with_capacity(anchor.max_len());
    let mut matching = true;
    for t in 0..anchor.max_len() {
        if t >= anchor.valid_len {
            labels.push(SubseqLabel::Invalid);
            continue;
        }
        matching = matching && spoken.get(t) == Some(&anchor.ids[t]);
        labels.push(if matching {
            SubseqLabel::Match
        } else {
            SubseqLabel::Mismatch
        });
    }
    SubseqLabels(labels)
}

/// Number of keywords per phoneme length.
pub fn keyword_length_histogram<'a, I>(keywords: I) -> BTreeMap<usize, usize>
where
    I: IntoIterator<Item = &'a PhonemeSeq>,
{
    let mut hist = BTreeMap::new();
    for k in keywords {
        *hist.entry(k.len()).or_insert(0) += 1;
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::vocab::PhonemeVocab;

    fn vocab() -> PhonemeVocab {
        PhonemeVocab::arpabet(12).unwrap()
    }

    #[test]
    fn pad_service_to_25() {
        let v = vocab();
        let seq = v.parse("S ER1 V AH0 S").unwrap();
        let a = pad_anchor(&seq, DEFAULT_MAX_LEN, v.pad_id()).unwrap();
        assert_eq!(a.valid_len(), 5);
        assert_eq!(a.ids().len(), 25);
        assert!(a.ids()[5..].iter().all(|&id| id == v.pad_id()));
        assert_eq!(a.phonemes(), &seq[..]);
    }

    #[test]
    fn pad_boundaries() {
        let v = vocab();
        let exact = vec![0; 25];
        let a = pad_anchor(&exact, 25, v.pad_id()).unwrap();
        assert_eq!(a.valid_len(), 25);
        assert!(a.ids().iter().all(|&id| id != v.pad_id()));

        let err = pad_anchor(&[0; 26], 25, v.pad_id()).unwrap_err();
        assert!(matches!(err, Error::KeywordTooLong { len: 26, max: 25 }));
        assert!(err.to_string().contains("T=25"));
        assert!(matches!(pad_anchor(&[], 25, v.pad_id()), Err(Error::EmptyKeyword)));
    }

    #[test]
    fn service_surface_labels() {
        let v = vocab();
        let anchor = pad_anchor(&v.parse("S ER1 V AH0 S").unwrap(), 25, v.pad_id()).unwrap();
        let spoken = v.parse("S ER1 F AH0 S").unwrap();
        let labels = subsequence_labels(&anchor, &spoken);
        use SubseqLabel::*;
        assert_eq!(&labels.0[..5], &[Match, Match, Mismatch, Mismatch, Mismatch]);
        assert!(labels.0[5..].iter().all(|&l| l == Invalid));
        assert_eq!(labels.len(), 25);
    }

    #[test]
    fn identical_is_all_match_and_short_spoken_mismatches() {
        let v = vocab();
        let seq = v.parse("N ER1 V AH0 S").unwrap();
        let anchor = pad_anchor(&seq, 8, v.pad_id()).unwrap();
        let labels = subsequence_labels(&anchor, &seq);
        assert!(labels.0[..5].iter().all(|&l| l == SubseqLabel::Match));

        let labels = subsequence_labels(&anchor, &seq[..3]);
        use SubseqLabel::*;
        assert_eq!(&labels.0[..5], &[Match, Match, Match, Mismatch, Mismatch]);
    }

    #[test]
    fn embed_pads_to_zero_rows() {
        let v = vocab();
        let d = 3;
        let mut table = Tensor::zeros(v.table_rows(), d);
        for (i, x) in table.data_mut().iter_mut().enumerate() {
            *x = (i as f64).sin();
        }
        let pad = v.pad_id();
        table.data_mut()[pad * d..(pad + 1) * d].fill(0.0);
        let anchor = pad_anchor(&[0, 1, 2, 3, 4], 25, pad).unwrap();
        let e = embed_anchor(&anchor, &table).unwrap();
        assert_eq!(e.shape(), &[25, 3]);
        for t in 5..25 {
            assert!(e.row(t).iter().all(|&x| x == 0.0));
        }
        for t in 0..5 {
            assert_eq!(e.row(t), table.row(anchor.ids()[t]));
        }
    }

    #[test]
    fn embed_one_hot_table() {
        let v = vocab();
        let rows = v.table_rows();
        let mut table = Tensor::identity(rows);
        let pad = v.pad_id();
        table.data_mut()[pad * rows + pad] = 0.0;
        let anchor = pad_anchor(&[3, 1, 7], 6, pad).unwrap();
        let e = embed_anchor(&anchor, &table).unwrap();
        for t in 0..3 {
            let id = anchor.ids()[t];
            for j in 0..rows {
                assert_eq!(e.at(t, j), if j == id { 1.0 } else { 0.0 });
            }
        }
        let small = Tensor::zeros(5, 2);
        assert!(matches!(
            embed_anchor(&anchor, &small),
            Err(Error::IdOutOfRange { .. })
        ));
    }

    #[test]
    fn histogram_examples() {
        let empty: Vec<PhonemeSeq> = Vec::new();
        assert!(keyword_length_histogram(&empty).is_empty());

        let v = PhonemeVocab::arpabet(super::super::vocab::ARPABET.len()).unwrap();
        let lex = crate::frontend::Lexicon::builtin(&v);
        let kws = vec![lex.lookup("i").unwrap(), lex.lookup("a").unwrap()];
        assert_eq!(keyword_length_histogram(&kws), BTreeMap::from([(1, 2)]));
    }
}

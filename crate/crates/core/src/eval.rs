//! Detection metrics, evaluation reports and ablation tables.

use std::fmt;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::frontend::{subsequence_labels, Corpus, PairKind, PairSample, PhonemeVocab, SubseqLabel};
use crate::model::KwsModel;
use crate::trainer::LossWeights;

/// Scores with binary ground truth and the pair kind that produced them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub positive: Vec<bool>,
    pub kinds: Vec<PairKind>,
}

impl ScoredSet {
    /// Builds a set without kind information (all marked by label).
    pub fn from_labels(scores: Vec<f64>, positive: Vec<bool>) -> Self {
        let kinds = positive
            .iter()
            .map(|&p| if p { PairKind::Positive } else { PairKind::EasyNegative })
            .collect();
        Self {
            scores,
            positive,
            kinds,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn counts(&self) -> (usize, usize) {
        let p = self.positive.iter().filter(|&&x| x).count();
        (p, self.len() - p)
    }

    /// Fraction of entries classified correctly at threshold ½.
    pub fn accuracy(&self) -> f64 {
        let correct = self
            .scores
            .iter()
            .zip(&self.positive)
            .filter(|(s, p)| (**s >= 0.5) == **p)
            .count();
        correct as f64 / self.len().max(1) as f64
    }

    /// Entries whose pair kind is in `kinds`.
    pub fn subset(&self, kinds: &[PairKind]) -> ScoredSet {
        let mut out = ScoredSet::default();
        for i in 0..self.len() {
            if kinds.contains(&self.kinds[i]) {
                out.scores.push(self.scores[i]);
                out.positive.push(self.positive[i]);
                out.kinds.push(self.kinds[i]);
            }
        }
        out
    }

    fn check(&self) -> Result<(usize, usize)> {
        let (p, n) = self.counts();
        if p == 0 || n == 0 {
            return Err(Error::SingleClass {
                positives: p,
                negatives: n,
            });
        }
        if self.scores.iter().any(|s| s.is_nan()) {
            return Err(Error::NonFinite("scored set"));
        }
        Ok((p, n))
    }
}

/// Area under the ROC curve: the probability that a random positive
/// outscores a random negative, ties counting one half.
pub fn auc(set: &ScoredSet) -> Result<f64> {
    let (p, n) = set.check()?;
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| set.scores[a].total_cmp(&set.scores[b]));
    // average ranks over tie groups
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && set.scores[order[j + 1]] == set.scores[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += rank * order[i..=j].iter().filter(|&&k| set.positive[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (p as f64, n as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Equal error rate. A sample is accepted when its score is at least the
/// threshold; thresholds sweep the distinct scores and `+∞`, and the
/// crossing of false-accept and false-reject rates is linearly interpolated
/// between neighbouring thresholds.
pub fn eer(set: &ScoredSet) -> Result<f64> {
    let (p, n) = set.check()?;
    let mut thresholds: Vec<f64> = set.scores.clone();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let mut pos: Vec<f64> = Vec::with_capacity(p);
    let mut neg: Vec<f64> = Vec::with_capacity(n);
    for (s, &lab) in set.scores.iter().zip(&set.positive) {
        if lab {
            pos.push(*s);
        } else {
            neg.push(*s);
        }
    }
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);

    let rates = |theta: f64| {
        let rejected_pos = pos.partition_point(|&s| s < theta);
        let rejected_neg = neg.partition_point(|&s| s < theta);
        let far = (n - rejected_neg) as f64 / n as f64;
        let frr = rejected_pos as f64 / p as f64;
        (far, frr)
    };

    let mut prev = rates(thresholds[0]);
    for &theta in &thresholds[1..] {
        let cur = rates(theta);
        let (d_prev, d_cur) = (prev.0 - prev.1, cur.0 - cur.1);
        if d_prev == 0.0 {
            return Ok(prev.0);
        }
        if d_cur <= 0.0 {
            let lambda = d_prev / (d_prev - d_cur);
            return Ok(prev.0 + lambda * (cur.0 - prev.0));
        }
        prev = cur;
    }
    unreachable!("FAR − FRR reaches −1 at the infinite threshold")
}

/// Scores every pair in the corpus with the utterance head.
pub fn score_corpus(model: &KwsModel, corpus: &Corpus) -> Result<ScoredSet> {
    let mut set = ScoredSet::default();
    for s in &corpus.samples {
        set.scores.push(model.score(&s.audio, &s.anchor)?);
        set.positive.push(s.utterance_label().is_match());
        set.kinds.push(s.kind);
    }
    Ok(set)
}

/// Whole-set, positive-vs-easy and positive-vs-hard metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub samples: usize,
    pub accuracy: f64,
    pub auc: f64,
    pub eer: f64,
    pub easy_auc: Option<f64>,
    pub easy_eer: Option<f64>,
    pub hard_auc: Option<f64>,
    pub hard_eer: Option<f64>,
}

impl EvalReport {
    pub fn compute(model: &KwsModel, corpus: &Corpus) -> Result<Self> {
        let set = score_corpus(model, corpus)?;
        let easy = set.subset(&[PairKind::Positive, PairKind::EasyNegative]);
        let hard = set.subset(&[PairKind::Positive, PairKind::HardNegative]);
        Ok(Self {
            samples: set.len(),
            accuracy: set.accuracy(),
            auc: auc(&set)?,
            eer: eer(&set)?,
            easy_auc: auc(&easy).ok(),
            easy_eer: eer(&easy).ok(),
            hard_auc: auc(&hard).ok(),
            hard_eer: eer(&hard).ok(),
        })
    }

    /// Machine-readable `key=value` lines.
    pub fn to_kv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "na".into());
        format!(
            "samples={}\naccuracy={:.6}\nauc={:.6}\neer={:.6}\neasy_auc={}\neasy_eer={}\nhard_auc={}\nhard_eer={}\n",
            self.samples,
            self.accuracy,
            self.auc,
            self.eer,
            opt(self.easy_auc),
            opt(self.easy_eer),
            opt(self.hard_auc),
            opt(self.hard_eer)
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = |v: Option<f64>| v.map(|x| format!("{:6.2}%", 100.0 * x)).unwrap_or_else(|| "    n/a".into());
        writeln!(f, "pairs evaluated: {}", self.samples)?;
        writeln!(f, "accuracy@0.5:    {}", pct(Some(self.accuracy)))?;
        writeln!(f, "            AUC      EER")?;
        writeln!(f, "all     {}  {}", pct(Some(self.auc)), pct(Some(self.eer)))?;
        writeln!(f, "easy    {}  {}", pct(self.easy_auc), pct(self.easy_eer))?;
        write!(f, "hard    {}  {}", pct(self.hard_auc), pct(self.hard_eer))
    }
}

/// One prefix prediction for the subsequence dump.
#[derive(Clone, Debug, PartialEq)]
pub struct SubseqPrediction {
    /// 1-based prefix length.
    pub t: usize,
    pub anchor_prefix: String,
    pub spoken_prefix: String,
    pub truth: SubseqLabel,
    pub match_prob: f64,
}

/// Prefix-head predictions for `t = 1..=T` of one pair, invalid positions
/// included. Needs the training heads, so a stripped model is rejected.
pub fn dump_subsequence_predictions(
    model: &KwsModel,
    vocab: &PhonemeVocab,
    sample: &PairSample,
) -> Result<Vec<SubseqPrediction>> {
    if model.is_stripped() {
        return Err(Error::Stripped);
    }
    let probs = model.subsequence_scores(&sample.audio, &sample.anchor)?;
    let labels = subsequence_labels(&sample.anchor, &sample.spoken);
    let anchor = sample.anchor.phonemes();
    Ok((1..=sample.anchor.max_len())
        .map(|t| SubseqPrediction {
            t,
            anchor_prefix: vocab.render(&anchor[..t.min(anchor.len())]),
            spoken_prefix: vocab.render(&sample.spoken[..t.min(sample.spoken.len())]),
            truth: labels.0[t - 1],
            match_prob: probs[t - 1],
        })
        .collect())
}

pub const SUBSEQ_CSV_HEADER: &str = "sample,kind,t,anchor_prefix,spoken_prefix,truth,match_prob";

/// The dump for every pair in `corpus` as CSV, `T` rows per pair.
pub fn subsequence_csv(model: &KwsModel, corpus: &Corpus) -> Result<String> {
    let mut out = String::from(SUBSEQ_CSV_HEADER);
    out.push('\n');
    for (i, s) in corpus.samples.iter().enumerate() {
        for r in dump_subsequence_predictions(model, &corpus.vocab, s)? {
            out += &format!(
                "{i},{},{},{},{},{},{:.6}\n",
                s.kind,
                r.t,
                r.anchor_prefix,
                r.spoken_prefix,
                r.truth,
                r.match_prob
            );
        }
    }
    Ok(out)
}

/// ROC operating points `(threshold, FAR, FRR)` over the same threshold
/// sweep as [`eer`].
pub fn roc_points(set: &ScoredSet) -> Result<Vec<(f64, f64, f64)>> {
    let (p, n) = set.check()?;
    let mut thresholds: Vec<f64> = set.scores.clone();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    Ok(thresholds
        .into_iter()
        .map(|th| {
            let mut fa = 0;
            let mut fr = 0;
            for (s, &pos) in set.scores.iter().zip(&set.positive) {
                match (pos, *s >= th) {
                    (true, false) => fr += 1,
                    (false, true) => fa += 1,
                    _ => {}
                }
            }
            (th, fa as f64 / n as f64, fr as f64 / p as f64)
        })
        .collect())
}

/// A trained variant entering an ablation comparison.
pub struct AblationRun {
    pub variant: String,
    pub checkpoint: Checkpoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub weights: LossWeights,
    pub seeds: Vec<u64>,
    pub easy_auc: f64,
    pub easy_eer: f64,
    pub hard_auc: f64,
    pub hard_eer: f64,
    /// Hard-negative AUC of each seed, same order as `seeds`.
    pub hard_auc_per_seed: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, variant: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let v = &r.variant;
            out += &format!(
                "{v}.easy_auc={:.6}\n{v}.easy_eer={:.6}\n{v}.hard_auc={:.6}\n{v}.hard_eer={:.6}\n",
                r.easy_auc, r.easy_eer, r.hard_auc, r.hard_eer
            );
        }
        out
    }
}

impl fmt::Display for AblationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<14} {:>5} {:>5} {:>5} {:>6} {:>9} {:>9} {:>9} {:>9}",
            "variant", "a_utt", "a_ss", "a_ctc", "seeds", "easy AUC", "easy EER", "hard AUC", "hard EER"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<14} {:>5} {:>5} {:>5} {:>6} {:>8.2}% {:>8.2}% {:>8.2}% {:>8.2}%",
                r.variant,
                r.weights.utterance,
                r.weights.subsequence,
                r.weights.ctc,
                r.seeds.len(),
                100.0 * r.easy_auc,
                100.0 * r.easy_eer,
                100.0 * r.hard_auc,
                100.0 * r.hard_eer
            )?;
        }
        Ok(())
    }
}

/// Evaluates every run on `test` and averages per variant. All runs must be
/// trained on the same corpus, and every variant on the same set of seeds.
pub fn ablation_table(runs: &[AblationRun], test: &Corpus) -> Result<AblationTable> {
    let first = runs.first().ok_or_else(|| Error::Config("no runs to compare".into()))?;
    let digest = &first.checkpoint.corpus_digest;
    let mut variants: Vec<(&str, Vec<&AblationRun>)> = Vec::new();
    for run in runs {
        if &run.checkpoint.corpus_digest != digest {
            return Err(Error::Mismatch(format!(
                "run `{}` was trained on a different corpus",
                run.variant
            )));
        }
        let train = run.checkpoint.train.as_ref().ok_or_else(|| {
            Error::Mismatch(format!("run `{}` has no training record", run.variant))
        })?;
        match variants.iter_mut().find(|(v, _)| *v == run.variant) {
            Some((_, list)) => {
                if list.iter().any(|r| r.checkpoint.seed() == Some(train.seed)) {
                    return Err(Error::Mismatch(format!(
                        "variant `{}` has seed {} twice",
                        run.variant, train.seed
                    )));
                }
                list.push(run)
            }
            None => variants.push((&run.variant, vec![run])),
        }
    }
    let seeds_of = |list: &[&AblationRun]| {
        let mut s: Vec<u64> = list.iter().filter_map(|r| r.checkpoint.seed()).collect();
        s.sort_unstable();
        s
    };
    let reference = seeds_of(&variants[0].1);
    for (v, list) in &variants {
        if seeds_of(list) != reference {
            return Err(Error::Mismatch(format!(
                "variant `{v}` was trained with seeds {:?}, expected {:?}",
                seeds_of(list),
                reference
            )));
        }
    }

    let mut rows = Vec::new();
    for (variant, list) in variants {
        let mut sums = [0.0; 4];
        let mut hard_per_seed = Vec::new();
        for run in &list {
            let model = KwsModel::from_params(
                run.checkpoint.model.clone(),
                &run.checkpoint.params,
                run.checkpoint.stripped,
            )?;
            let set = score_corpus(&model, test)?;
            let easy = set.subset(&[PairKind::Positive, PairKind::EasyNegative]);
            let hard = set.subset(&[PairKind::Positive, PairKind::HardNegative]);
            let vals = [auc(&easy)?, eer(&easy)?, auc(&hard)?, eer(&hard)?];
            hard_per_seed.push(vals[2]);
            for (s, v) in sums.iter_mut().zip(vals) {
                *s += v;
            }
        }
        let k = list.len() as f64;
        rows.push(AblationRow {
            variant: variant.to_string(),
            weights: list[0].checkpoint.train.as_ref().expect("checked above").weights,
            seeds: list.iter().filter_map(|r| r.checkpoint.seed()).collect(),
            easy_auc: sums[0] / k,
            easy_eer: sums[1] / k,
            hard_auc: sums[2] / k,
            hard_eer: sums[3] / k,
            hard_auc_per_seed: hard_per_seed,
        });
    }
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(scores: &[f64], labels: &[bool]) -> ScoredSet {
        ScoredSet::from_labels(scores.to_vec(), labels.to_vec())
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&set(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false])).unwrap(), 1.0);
        assert_eq!(auc(&set(&[0.1, 0.2, 0.8, 0.9], &[true, true, false, false])).unwrap(), 0.0);
        assert_eq!(auc(&set(&[0.5; 4], &[true, false, true, false])).unwrap(), 0.5);
        // 3 of 4 pairs ordered correctly
        assert_eq!(auc(&set(&[0.9, 0.3, 0.5, 0.1], &[true, true, false, false])).unwrap(), 0.75);
    }

    #[test]
    fn eer_examples() {
        assert_eq!(eer(&set(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false])).unwrap(), 0.0);
        assert_eq!(eer(&set(&[0.1, 0.2, 0.8, 0.9], &[true, true, false, false])).unwrap(), 1.0);
        assert_eq!(eer(&set(&[0.5; 4], &[true, false, true, false])).unwrap(), 0.5);
        // FAR/FRR: θ=0.1 (1,0) θ=0.3 (.5,0) θ=0.5 (.5,.5)
        assert_eq!(eer(&set(&[0.9, 0.3, 0.5, 0.1], &[true, true, false, false])).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(
            auc(&set(&[0.1, 0.2], &[true, true])),
            Err(Error::SingleClass { positives: 2, negatives: 0 })
        ));
        assert!(eer(&set(&[0.1], &[false])).is_err());
    }

    #[test]
    fn subset_by_kind() {
        let s = ScoredSet {
            scores: vec![0.9, 0.1, 0.4],
            positive: vec![true, false, false],
            kinds: vec![PairKind::Positive, PairKind::EasyNegative, PairKind::HardNegative],
        };
        let hard = s.subset(&[PairKind::Positive, PairKind::HardNegative]);
        assert_eq!(hard.scores, vec![0.9, 0.4]);
    }
}

//! Randomised invariants.

use kws::ctc::ctc_loss;
use kws::eval::{auc, eer, ScoredSet};
use kws::frontend::{
    embed_anchor, pad_anchor, subsequence_labels, Corpus, GenConfig, PairCounts, PairKind,
    SubseqLabel, Synthesizer, UtteranceLabel,
};
use kws::tensor::softmax_rows;
use kws::trainer::{lr_schedule, total_loss, LossWeights};
use kws::Tensor;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-scale..scale, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d))
}

fn scored_set() -> impl Strategy<Value = ScoredSet> {
    (2usize..60).prop_flat_map(|n| {
        (
            // few distinct values so ties are common
            prop::collection::vec(0u8..12, n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_filter("both classes", |(_, l)| l.iter().any(|&x| x) && l.iter().any(|&x| !x))
            .prop_map(|(s, l)| ScoredSet::from_labels(s.into_iter().map(|v| v as f64 / 11.0).collect(), l))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_distributions(x in (1usize..6, 1usize..9).prop_flat_map(|(r, c)| matrix(r, c, 50.0))) {
        let p = softmax_rows(&x).unwrap();
        for i in 0..p.rows() {
            let row = p.row(i);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn matmul_is_associative(
        (a, b, c) in (1usize..6, 1usize..6, 1usize..6, 1usize..6)
            .prop_flat_map(|(m, k, p, q)| (matrix(m, k, 1.0), matrix(k, p, 1.0), matrix(p, q, 1.0)))
    ) {
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) <= 1e-8);
    }

    #[test]
    fn ctc_is_nonnegative_and_shift_invariant(
        logits in (1usize..7).prop_flat_map(|n| matrix(n, 4, 4.0)),
        target in prop::collection::vec(0usize..3, 1..4),
        shift in -30.0f64..30.0,
    ) {
        if let Ok(out) = ctc_loss(&logits, &target) {
            prop_assert!(out.loss >= 0.0);
            let shifted = Tensor::matrix(
                logits.rows(),
                4,
                logits.data().iter().enumerate().map(|(i, v)| v + shift * (i / 4) as f64).collect(),
            );
            prop_assert!((ctc_loss(&shifted, &target).unwrap().loss - out.loss).abs() <= 1e-9);
        }
    }

    #[test]
    fn subsequence_labels_invariants(
        anchor in prop::collection::vec(0usize..4, 1..10),
        spoken in prop::collection::vec(0usize..4, 0..12),
    ) {
        let a = pad_anchor(&anchor, 10, 5).unwrap();
        let labels = subsequence_labels(&a, &spoken);
        prop_assert_eq!(labels.len(), 10);
        let mut seen_mismatch = false;
        for (t, l) in labels.iter().enumerate() {
            prop_assert_eq!(l == SubseqLabel::Invalid, t >= a.valid_len());
            if l == SubseqLabel::Mismatch {
                seen_mismatch = true;
            }
            if seen_mismatch {
                prop_assert_ne!(l, SubseqLabel::Match);
            }
        }
    }

    #[test]
    fn padded_rows_embed_to_zero(anchor in prop::collection::vec(0usize..4, 1..8)) {
        let table = Tensor::matrix(6, 3, (0..18).map(|i| i as f64 + 1.0).collect());
        let mut table = table;
        table.data_mut()[15..18].fill(0.0);
        let a = pad_anchor(&anchor, 8, 5).unwrap();
        let e = embed_anchor(&a, &table).unwrap();
        for t in 0..8 {
            let zero = e.row(t).iter().all(|&v| v == 0.0);
            prop_assert_eq!(zero, t >= a.valid_len());
        }
    }

    #[test]
    fn auc_and_eer_ignore_monotone_transforms_and_order(set in scored_set(), rot in 0usize..60) {
        let a = auc(&set).unwrap();
        let e = eer(&set).unwrap();
        let warped = ScoredSet::from_labels(
            set.scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect(),
            set.positive.clone(),
        );
        prop_assert!((auc(&warped).unwrap() - a).abs() <= 1e-12);
        prop_assert!((eer(&warped).unwrap() - e).abs() <= 1e-12);

        let k = rot % set.len();
        let mut s = set.scores.clone();
        let mut l = set.positive.clone();
        s.rotate_left(k);
        l.rotate_left(k);
        let permuted = ScoredSet::from_labels(s, l);
        prop_assert!((auc(&permuted).unwrap() - a).abs() <= 1e-12);
        prop_assert!((eer(&permuted).unwrap() - e).abs() <= 1e-12);

        let flipped = ScoredSet::from_labels(set.scores.clone(), set.positive.iter().map(|p| !p).collect());
        prop_assert!((auc(&flipped).unwrap() + a - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn total_loss_is_linear(
        x in prop::array::uniform3(0.0f64..10.0),
        y in prop::array::uniform3(0.0f64..10.0),
        w in prop::array::uniform3(0.0f64..5.0),
    ) {
        let w = LossWeights { utterance: w[0], subsequence: w[1], ctc: w[2] };
        let lhs = total_loss(x[0], x[1], x[2], &w).unwrap() + total_loss(y[0], y[1], y[2], &w).unwrap();
        let rhs = total_loss(x[0] + y[0], x[1] + y[1], x[2] + y[2], &w).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn lr_rises_then_falls(warmup in 1u64..3000, d in 1usize..256, step in 1u64..10_000) {
        let now = lr_schedule(step, warmup, d, 1.0);
        let next = lr_schedule(step + 1, warmup, d, 1.0);
        if step < warmup {
            prop_assert!(next > now);
        } else {
            prop_assert!(next < now);
        }
    }

    #[test]
    fn synthesized_labels_match_kinds(seed in any::<u64>()) {
        let cfg = GenConfig { frames_max: 6, ..GenConfig::default() };
        let synth = Synthesizer::new(cfg).unwrap();
        let corpus = Corpus::synthesize(&synth, PairCounts { positive: 4, easy: 4, hard: 4 }, seed).unwrap();
        for s in &corpus.samples {
            let labels = subsequence_labels(&s.anchor, &s.spoken);
            let last = labels.0[s.anchor.valid_len() - 1];
            match s.kind {
                PairKind::Positive => {
                    prop_assert_eq!(s.utterance_label(), UtteranceLabel::Match);
                    prop_assert_eq!(last, SubseqLabel::Match);
                }
                _ => {
                    prop_assert_eq!(s.utterance_label(), UtteranceLabel::Mismatch);
                    prop_assert_eq!(last, SubseqLabel::Mismatch);
                }
            }
        }
        prop_assert_eq!(Corpus::from_bytes(&corpus.to_bytes()).unwrap(), corpus);
    }
}

//! Multi-task training: weighted loss, Adam, warm-up schedule, checkpoints.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{AdamState, Checkpoint};
use crate::error::{Error, Result};
use crate::eval::{auc, eer, score_corpus};
use crate::frontend::{sample_rng, Corpus, PairKind};
use crate::graph::{zeros_like, Graph};
use crate::model::{KwsModel, ModelConfig};
use crate::tensor::Tensor;

/// Task weights of the combined objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub utterance: f64,
    pub subsequence: f64,
    pub ctc: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            utterance: 2.0,
            subsequence: 1.0,
            ctc: 5.0,
        }
    }
}

impl LossWeights {
    /// Utterance + CTC, no prefix task.
    pub fn without_subsequence() -> Self {
        Self {
            subsequence: 0.0,
            ..Self::default()
        }
    }

    /// Utterance task only.
    pub fn utterance_only() -> Self {
        Self {
            utterance: 2.0,
            subsequence: 0.0,
            ctc: 0.0,
        }
    }
}

/// `α₁·utt + α₂·ss + α₃·ctc`; a NaN component aborts.
pub fn total_loss(utt: f64, ss: f64, ctc: f64, w: &LossWeights) -> Result<f64> {
    for (v, name) in [(utt, "utterance"), (ss, "subsequence"), (ctc, "ctc")] {
        if v.is_nan() {
            return Err(Error::NonFiniteLoss(name));
        }
    }
    Ok(w.utterance * utt + w.subsequence * ss + w.ctc * ctc)
}

/// Inverse-square-root schedule with linear warm-up:
/// `scale · d_model^−½ · min(step^−½, step · warmup^−3/2)`.
pub fn lr_schedule(step: u64, warmup: u64, d_model: usize, scale: f64) -> f64 {
    let s = step.max(1) as f64;
    let w = warmup.max(1) as f64;
    scale * (d_model as f64).powf(-0.5) * s.powf(-0.5).min(s * w.powf(-1.5))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update; `step` counts from 1.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    step: u64,
    lr: f64,
    cfg: &AdamConfig,
) {
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, (x, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let mhat = m[j] / bc1;
            let vhat = v[j] / bc2;
            *x -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup: u64,
    pub lr_scale: f64,
    pub seed: u64,
    pub val_fraction: f64,
    pub adam: AdamConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            batch_size: 64,
            epochs: 30,
            warmup: 500,
            lr_scale: 0.5,
            seed: 0,
            val_fraction: 0.1,
            adam: AdamConfig::default(),
            model: ModelConfig::desk_scale(12, 16),
        }
    }
}

impl TrainConfig {
    /// Batch 1024 for 300 epochs with the full-size model.
    pub fn full_scale(vocab_size: usize, feature_dim: usize) -> Self {
        Self {
            batch_size: 1024,
            epochs: 300,
            warmup: 4000,
            lr_scale: 1.0,
            model: ModelConfig::full_scale(vocab_size, feature_dim),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        if [w.utterance, w.subsequence, w.ctc].iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must be in [0, 1)".into()));
        }
        self.model.validate()
    }
}

/// Deterministic train/validation split.
pub fn split_indices(len: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut sample_rng(seed, u64::MAX - 2));
    let n_val = (len as f64 * val_fraction).round() as usize;
    let val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    train.sort_unstable();
    (train, val)
}

/// Validation AUC/EER per subset; `None` when a subset lacks a class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SplitMetrics {
    pub auc: Option<f64>,
    pub eer: Option<f64>,
    pub easy_auc: Option<f64>,
    pub hard_auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub step: u64,
    pub utterance: f64,
    pub subsequence: f64,
    pub ctc: f64,
    pub total: f64,
    pub ctc_skipped: usize,
    pub validation: SplitMetrics,
}

impl EpochMetrics {
    pub fn csv_header() -> &'static str {
        "epoch,step,l_utt,l_ss,l_ctc,total,ctc_skipped,val_auc,val_eer,val_easy_auc,val_hard_auc"
    }

    pub fn csv_row(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{}",
            self.epoch,
            self.step,
            self.utterance,
            self.subsequence,
            self.ctc,
            self.total,
            self.ctc_skipped,
            f(self.validation.auc),
            f(self.validation.eer),
            f(self.validation.easy_auc),
            f(self.validation.hard_auc),
        )
    }
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
}

/// Training failure that still carries the last finite parameters.
#[derive(Debug)]
pub struct Diverged {
    pub step: u64,
    pub last_good: Box<Checkpoint>,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("loss diverged at step {}", .0.step)]
    Diverged(Diverged),
}

fn all_finite(t: &Tensor) -> bool {
    t.data().iter().all(|x| x.is_finite())
}

fn diverged(last_good: Checkpoint) -> TrainError {
    TrainError::Diverged(Diverged {
        step: last_good.step,
        last_good: Box::new(last_good),
    })
}

/// Summed gradients and loss sums over one batch.
struct BatchResult {
    grads: Vec<Tensor>,
    utt: f64,
    ss: f64,
    ctc: f64,
    ctc_count: usize,
}

fn batch_gradients(
    model: &KwsModel,
    corpus: &Corpus,
    batch: &[usize],
    w: &LossWeights,
) -> Result<BatchResult> {
    let mut grads: Vec<Tensor> = model.params.iter().map(|(_, t)| zeros_like(t)).collect();
    let mut res_utt = 0.0;
    let mut res_ss = 0.0;
    let mut res_ctc = 0.0;
    let mut ctc_count = 0;

    // the CTC term averages over feasible samples only
    let feasible: Vec<bool> = batch
        .iter()
        .map(|&i| {
            let s = &corpus.samples[i];
            s.audio.num_frames() >= crate::ctc::min_frames(&s.spoken)
        })
        .collect();
    let n_ctc = feasible.iter().filter(|&&f| f).count();
    let b = batch.len() as f64;

    for &i in batch {
        let sample = &corpus.samples[i];
        let mut g = Graph::new();
        let l = model.losses(&mut g, sample)?;
        let utt = g.value(l.utterance).item()?;
        let ss = g.value(l.subsequence).item()?;
        res_utt += utt;
        res_ss += ss;
        let mut terms = vec![(l.utterance, w.utterance / b), (l.subsequence, w.subsequence / b)];
        if let Some(c) = l.ctc {
            res_ctc += g.value(c).item()?;
            ctc_count += 1;
            terms.push((c, w.ctc / n_ctc as f64));
        }
        if utt.is_nan() || ss.is_nan() {
            return Ok(BatchResult {
                grads,
                utt: f64::NAN,
                ss: f64::NAN,
                ctc: f64::NAN,
                ctc_count,
            });
        }
        let scaled: Vec<_> = terms
            .into_iter()
            .filter(|(_, a)| *a != 0.0)
            .map(|(v, a)| g.scale(v, a))
            .collect();
        if scaled.is_empty() {
            continue;
        }
        let mut total = scaled[0];
        for &s in &scaled[1..] {
            total = g.add(total, s)?;
        }
        g.backward(total)?.accumulate_params(&g, &mut grads);
    }
    Ok(BatchResult {
        grads,
        utt: res_utt,
        ss: res_ss,
        ctc: res_ctc,
        ctc_count,
    })
}

/// Validation AUC/EER over the given samples.
pub fn validation_metrics(model: &KwsModel, corpus: &Corpus, indices: &[usize]) -> Result<SplitMetrics> {
    if indices.is_empty() {
        return Ok(SplitMetrics::default());
    }
    let sub = corpus.subset(indices);
    let scored = score_corpus(model, &sub)?;
    let easy = scored.subset(&[PairKind::Positive, PairKind::EasyNegative]);
    let hard = scored.subset(&[PairKind::Positive, PairKind::HardNegative]);
    Ok(SplitMetrics {
        auc: auc(&scored).ok(),
        eer: eer(&scored).ok(),
        easy_auc: auc(&easy).ok(),
        hard_auc: auc(&hard).ok(),
    })
}

/// Trains from scratch, or continues from `resume` (which must come from a
/// run with the same corpus and configuration, except possibly `epochs`). Resuming at step k and
/// training to the end is bitwise identical to an uninterrupted run.
pub fn train(
    corpus: &Corpus,
    cfg: &TrainConfig,
    resume: Option<Checkpoint>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> std::result::Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Config("empty corpus".into()).into());
    }
    if corpus.vocab.len() != cfg.model.vocab_size
        || corpus.feature_dim != cfg.model.feature_dim
        || corpus.max_keyword_len != cfg.model.max_keyword_len
    {
        return Err(Error::Mismatch(format!(
            "corpus (vocab {}, F {}, T {}) does not fit the model (vocab {}, F {}, T {})",
            corpus.vocab.len(),
            corpus.feature_dim,
            corpus.max_keyword_len,
            cfg.model.vocab_size,
            cfg.model.feature_dim,
            cfg.model.max_keyword_len
        ))
        .into());
    }
    let digest = corpus.digest();
    let (train_idx, val_idx) = split_indices(corpus.len(), cfg.val_fraction, cfg.seed);
    if train_idx.is_empty() {
        return Err(Error::Config("no training samples after the validation split".into()).into());
    }

    let (mut model, mut adam, mut step) = match resume {
        Some(ck) => {
            if ck.stripped {
                return Err(Error::Stripped.into());
            }
            let same_run = ck.train.as_ref().is_some_and(|t| {
                TrainConfig {
                    epochs: cfg.epochs,
                    ..t.clone()
                } == *cfg
            });
            if ck.corpus_digest != digest || !same_run {
                return Err(Error::Mismatch(
                    "resume checkpoint was trained with a different corpus or configuration".into(),
                )
                .into());
            }
            let model = KwsModel::from_params(cfg.model.clone(), &ck.params, false)?;
            let adam = ck
                .adam
                .unwrap_or_else(|| AdamState::zeros(&model.params));
            (model, adam, ck.step)
        }
        None => {
            let model = KwsModel::new(cfg.model.clone(), cfg.seed)?;
            let adam = AdamState::zeros(&model.params);
            (model, adam, 0)
        }
    };

    let batches_per_epoch = train_idx.len().div_ceil(cfg.batch_size) as u64;
    let total_steps = batches_per_epoch * cfg.epochs as u64;
    let mut metrics = Vec::new();
    let snapshot = |model: &KwsModel, adam: &AdamState, step: u64| Checkpoint {
        model: cfg.model.clone(),
        train: Some(cfg.clone()),
        params: model.params.clone(),
        adam: Some(adam.clone()),
        step,
        stripped: false,
        corpus_digest: digest.clone(),
    };

    while step < total_steps {
        let epoch = (step / batches_per_epoch) as usize;
        let mut order = train_idx.clone();
        order.shuffle(&mut sample_rng(cfg.seed, 1_000_000 + epoch as u64));
        let first_batch = (step % batches_per_epoch) as usize;
        let (mut sum_utt, mut sum_ss, mut sum_ctc) = (0.0, 0.0, 0.0);
        let (mut seen, mut ctc_seen) = (0usize, 0usize);

        for batch in order.chunks(cfg.batch_size).skip(first_batch) {
            let res = match batch_gradients(&model, corpus, batch, &cfg.weights) {
                Ok(r) => r,
                Err(Error::NonFinite(_) | Error::NonFiniteLoss(_)) => {
                    return Err(diverged(snapshot(&model, &adam, step)))
                }
                Err(e) => return Err(e.into()),
            };
            let b = batch.len() as f64;
            let ctc_mean = if res.ctc_count > 0 {
                res.ctc / res.ctc_count as f64
            } else {
                0.0
            };
            if total_loss(res.utt / b, res.ss / b, ctc_mean, &cfg.weights).is_err()
                || !res.grads.iter().all(|t| all_finite(t))
            {
                return Err(diverged(snapshot(&model, &adam, step)));
            }
            sum_utt += res.utt;
            sum_ss += res.ss;
            sum_ctc += res.ctc;
            seen += batch.len();
            ctc_seen += res.ctc_count;

            let before = snapshot(&model, &adam, step);
            step += 1;
            let lr = lr_schedule(step, cfg.warmup, cfg.model.encoder.dim, cfg.lr_scale);
            adam_step(
                model.params.tensors_mut(),
                &res.grads,
                &mut adam,
                step,
                lr,
                &cfg.adam,
            );
            if !model.params.iter().all(|(_, t)| all_finite(t)) {
                return Err(diverged(before));
            }
        }

        let utt = sum_utt / seen.max(1) as f64;
        let ss = sum_ss / seen.max(1) as f64;
        let ctc = if ctc_seen > 0 { sum_ctc / ctc_seen as f64 } else { 0.0 };
        let m = EpochMetrics {
            epoch: epoch + 1,
            step,
            utterance: utt,
            subsequence: ss,
            ctc,
            total: total_loss(utt, ss, ctc, &cfg.weights)?,
            ctc_skipped: seen - ctc_seen,
            validation: validation_metrics(&model, corpus, &val_idx)?,
        };
        on_epoch(&m);
        metrics.push(m);
    }

    Ok(TrainOutcome {
        checkpoint: snapshot(&model, &adam, step),
        metrics,
    })
}

/// Fraction of samples whose utterance decision (score ≥ ½) is correct.
pub fn utterance_accuracy(model: &KwsModel, corpus: &Corpus) -> Result<f64> {
    Ok(score_corpus(model, corpus)?.accuracy())
}

/// Drops the training-only heads (prefix classifiers and CTC projection)
/// together with optimiser state. Idempotent.
pub fn strip_for_inference(ck: &Checkpoint) -> Result<Checkpoint> {
    if ck.stripped {
        return Ok(ck.clone());
    }
    let mut model = KwsModel::from_params(ck.model.clone(), &ck.params, false)?;
    model.strip();
    Ok(Checkpoint {
        model: ck.model.clone(),
        train: ck.train.clone(),
        params: model.params,
        adam: None,
        step: ck.step,
        stripped: true,
        corpus_digest: ck.corpus_digest.clone(),
    })
}

/// Gradients of the combined objective for one sample, as a flat store
/// layout. Used by verification code.
pub fn sample_gradients(model: &KwsModel, corpus: &Corpus, index: usize, w: &LossWeights) -> Result<Vec<Tensor>> {
    Ok(batch_gradients(model, corpus, &[index], w)?.grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;

    #[test]
    fn total_loss_examples() {
        let w = LossWeights::default();
        assert_eq!(total_loss(1.0, 1.0, 1.0, &w).unwrap(), 8.0);
        assert_eq!(total_loss(0.0, 0.0, 0.0, &w).unwrap(), 0.0);
        let only = LossWeights {
            utterance: 1.0,
            subsequence: 0.0,
            ctc: 0.0,
        };
        assert_eq!(total_loss(0.37, 5.0, 9.0, &only).unwrap(), 0.37);
        assert!(matches!(
            total_loss(1.0, f64::NAN, 1.0, &w),
            Err(Error::NonFiniteLoss("subsequence"))
        ));
    }

    #[test]
    fn total_loss_is_linear() {
        let w = LossWeights::default();
        let a = total_loss(0.3, 1.1, 2.5, &w).unwrap() + total_loss(0.9, 0.2, 0.4, &w).unwrap();
        let b = total_loss(1.2, 1.3, 2.9, &w).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn lr_schedule_shape() {
        let (warmup, d) = (4000, 64);
        let at = |s| lr_schedule(s, warmup, d, 1.0);
        // both branches coincide at the peak
        let s = warmup as f64;
        assert!((s.powf(-0.5) - s * s.powf(-1.5)).abs() < 1e-15 * s.powf(-0.5));
        assert!((at(1) / (64f64.powf(-0.5) * 4000f64.powf(-1.5)) - 1.0).abs() < 1e-12);
        for step in 1..warmup {
            assert!(at(step) < at(step + 1));
        }
        for step in warmup..warmup + 5000 {
            assert!(at(step) > at(step + 1));
        }
        assert_eq!(lr_schedule(10, 100, 16, 2.0), 2.0 * lr_schedule(10, 100, 16, 1.0));
    }

    fn state(shape: usize) -> AdamState {
        let mut p = ParamStore::new();
        p.add("x", Tensor::zeros(1, shape));
        AdamState::zeros(&p)
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut params = vec![Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5])];
        let before = params.clone();
        let mut st = state(3);
        for step in 1..=5 {
            adam_step(&mut params, &[Tensor::zeros(1, 3)], &mut st, step, 0.1, &AdamConfig::default());
        }
        assert_eq!(params, before);
    }

    #[test]
    fn adam_first_step_by_hand() {
        let cfg = AdamConfig::default();
        let g = [0.5, -3.0, 1e-3];
        let mut params = vec![Tensor::zeros(1, 3)];
        let mut st = state(3);
        adam_step(&mut params, &[Tensor::matrix(1, 3, g.to_vec())], &mut st, 1, 0.01, &cfg);
        for (j, &gj) in g.iter().enumerate() {
            // m̂ = g, v̂ = g², so Δ = −lr·g/(|g| + ε)
            let m = (1.0 - cfg.beta1) * gj / (1.0 - cfg.beta1);
            let v = (1.0 - cfg.beta2) * gj * gj / (1.0 - cfg.beta2);
            let expect = -0.01 * m / (v.sqrt() + cfg.eps);
            assert!((params[0].data()[j] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_constant_gradient_steady_state() {
        let cfg = AdamConfig::default();
        let mut params = vec![Tensor::zeros(1, 2)];
        let mut st = state(2);
        let g = Tensor::matrix(1, 2, vec![0.2, -4.0]);
        let lr = 1e-3;
        let mut prev = params[0].clone();
        for step in 1..=2000 {
            adam_step(&mut params, std::slice::from_ref(&g), &mut st, step, lr, &cfg);
            let delta: Vec<f64> = params[0]
                .data()
                .iter()
                .zip(prev.data())
                .map(|(a, b)| a - b)
                .collect();
            // closed form with constant g: m̂ = g and v̂ = g² at every step
            assert!((delta[0] + lr * 0.2 / (0.2 + cfg.eps)).abs() < 1e-12);
            assert!((delta[1] - lr * 4.0 / (4.0 + cfg.eps)).abs() < 1e-12);
            prev = params[0].clone();
        }
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let (t1, v1) = split_indices(100, 0.1, 5);
        let (t2, v2) = split_indices(100, 0.1, 5);
        assert_eq!((t1.clone(), v1.clone()), (t2, v2));
        assert_eq!(v1.len(), 10);
        assert!(v1.iter().all(|i| !t1.contains(i)));
        let (t3, v3) = split_indices(64, 0.0, 5);
        assert_eq!(t3.len(), 64);
        assert!(v3.is_empty());
    }
}

//! Connectionist temporal classification loss.
//!
//! Frame scores are `n × C` logits where class `C − 1` is the blank. The loss
//! is the negative log of the total probability of every frame labelling that
//! collapses (merge repeats, then drop blanks) to the target, computed with
//! the forward–backward recursions over the blank-interleaved target in log
//! space.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::{log_sum_exp, Tensor};

/// Per-row log-softmax.
pub fn log_softmax_rows(logits: &Tensor) -> Tensor {
    let (n, c) = (logits.rows(), logits.cols());
    let mut out = logits.data().to_vec();
    for t in 0..n {
        let row = &mut out[t * c..(t + 1) * c];
        let lse = log_sum_exp(row);
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    Tensor::matrix(n, c, out)
}

/// Fewest frames that can emit `target`: one per label plus a separating
/// blank between each pair of equal neighbours.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

fn check_target(target: &[usize], classes: usize) -> Result<()> {
    if target.is_empty() {
        return Err(Error::EmptyKeyword);
    }
    if let Some(&id) = target.iter().find(|&&id| id + 1 >= classes) {
        return Err(Error::IdOutOfRange {
            id,
            rows: classes - 1,
        });
    }
    Ok(())
}

/// Loss value and its gradient with respect to the logits.
#[derive(Clone, Debug)]
pub struct CtcOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// CTC loss via forward–backward. Returns [`Error::InfeasibleAlignment`] when
/// no alignment of the target fits in the available frames.
pub fn ctc_loss(logits: &Tensor, target: &[usize]) -> Result<CtcOutput> {
    let (n, c) = (logits.rows(), logits.cols());
    let blank = c - 1;
    check_target(target, c)?;
    if n < min_frames(target) {
        return Err(Error::InfeasibleAlignment {
            target_len: target.len(),
            frames: n,
        });
    }
    let lp = log_softmax_rows(logits);
    let s_len = 2 * target.len() + 1;
    let label = |s: usize| if s % 2 == 0 { blank } else { target[s / 2] };
    let can_skip = |s: usize| s >= 2 && label(s) != blank && label(s) != label(s - 2);
    let ninf = f64::NEG_INFINITY;

    // alpha includes the emission at t
    let mut alpha = vec![ninf; n * s_len];
    alpha[0] = lp.at(0, blank);
    alpha[1] = lp.at(0, label(1));
    for t in 1..n {
        for s in 0..s_len {
            let prev = &alpha[(t - 1) * s_len..t * s_len];
            let mut terms = [prev[s], ninf, ninf];
            if s >= 1 {
                terms[1] = prev[s - 1];
            }
            if can_skip(s) {
                terms[2] = prev[s - 2];
            }
            alpha[t * s_len + s] = log_sum_exp(&terms) + lp.at(t, label(s));
        }
    }
    let last = (n - 1) * s_len;
    let log_p = log_sum_exp(&[alpha[last + s_len - 1], alpha[last + s_len - 2]]);

    // beta excludes the emission at t
    let mut beta = vec![ninf; n * s_len];
    beta[last + s_len - 1] = 0.0;
    beta[last + s_len - 2] = 0.0;
    for t in (0..n - 1).rev() {
        for s in 0..s_len {
            let next = (t + 1) * s_len;
            let mut terms = [beta[next + s] + lp.at(t + 1, label(s)), ninf, ninf];
            if s + 1 < s_len {
                terms[1] = beta[next + s + 1] + lp.at(t + 1, label(s + 1));
            }
            if s + 2 < s_len && can_skip(s + 2) {
                terms[2] = beta[next + s + 2] + lp.at(t + 1, label(s + 2));
            }
            beta[t * s_len + s] = log_sum_exp(&terms);
        }
    }

    // d(−log p)/dz[t,k] = softmax[t,k] − occupancy[t,k]
    let mut grad: Vec<f64> = lp.data().iter().map(|v| v.exp()).collect();
    for t in 0..n {
        for s in 0..s_len {
            let a = alpha[t * s_len + s] + beta[t * s_len + s];
            if a > ninf {
                grad[t * c + label(s)] -= (a - log_p).exp();
            }
        }
    }
    Ok(CtcOutput { loss: -log_p, grad })
}

/// Records the CTC loss on the tape as a scalar node over `logits`.
pub fn ctc_loss_node(g: &mut Graph, logits: Var, target: &[usize]) -> Result<Var> {
    let out = ctc_loss(g.value(logits), target)?;
    Ok(g.precomputed_loss(logits, out.loss, out.grad))
}

/// Exhaustive enumeration of every frame labelling. A verification oracle;
/// returns `+∞` when no labelling collapses to the target.
pub fn ctc_brute_force(logits: &Tensor, target: &[usize]) -> Result<f64> {
    let (n, c) = (logits.rows(), logits.cols());
    let blank = c - 1;
    check_target(target, c)?;
    let paths = (c as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if paths > 1_000_000 {
        return Err(Error::TooLarge(paths));
    }
    let lp = log_softmax_rows(logits);
    let mut total = 0.0f64;
    let mut path = vec![0usize; n];
    for code in 0..paths as usize {
        let mut rest = code;
        for p in path.iter_mut() {
            *p = rest % c;
            rest /= c;
        }
        if collapse(&path, blank) == target {
            total += path
                .iter()
                .enumerate()
                .map(|(t, &k)| lp.at(t, k))
                .sum::<f64>()
                .exp();
        }
    }
    Ok(-total.ln())
}

/// Merges repeats then removes blanks.
pub fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != blank {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

/// Best-path decoding, for diagnostics.
pub fn greedy_decode(logits: &Tensor) -> Vec<usize> {
    let c = logits.cols();
    let path: Vec<usize> = (0..logits.rows())
        .map(|t| {
            let row = logits.row(t);
            (0..c)
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .expect("non-empty row")
        })
        .collect();
    collapse(&path, c - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_frame_uniform() {
        let v = 5;
        let logits = Tensor::zeros(1, v + 1);
        let out = ctc_loss(&logits, &[2]).unwrap();
        assert!((out.loss - (-(1.0 / (v as f64 + 1.0)).ln())).abs() < 1e-12);
    }

    #[test]
    fn certain_path_has_zero_loss() {
        // path a, blank, b with overwhelming scores
        let mut logits = Tensor::zeros(3, 3);
        for (t, k) in [(0, 0), (1, 2), (2, 1)] {
            logits.data_mut()[t * 3 + k] = 800.0;
        }
        let out = ctc_loss(&logits, &[0, 1]).unwrap();
        assert!(out.loss.abs() < 1e-12);
        assert_eq!(greedy_decode(&logits), vec![0, 1]);
    }

    #[test]
    fn two_frame_hand_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let logits = Tensor::matrix(2, 3, (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let lp = log_softmax_rows(&logits);
        let p = |t: usize, k: usize| lp.at(t, k).exp();
        let (a, blank) = (0, 2);
        let expected = -(p(0, a) * p(1, a) + p(0, a) * p(1, blank) + p(0, blank) * p(1, a)).ln();
        assert!((ctc_loss(&logits, &[a]).unwrap().loss - expected).abs() < 1e-12);
        assert!((ctc_brute_force(&logits, &[a]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn infeasible_targets() {
        let logits = Tensor::zeros(2, 3);
        assert!(matches!(
            ctc_loss(&logits, &[0, 0]),
            Err(Error::InfeasibleAlignment { .. })
        ));
        assert_eq!(ctc_brute_force(&logits, &[0, 0]).unwrap(), f64::INFINITY);
        assert_eq!(ctc_brute_force(&logits, &[0, 1, 0]).unwrap(), f64::INFINITY);
        // three frames suffice for a repeat
        assert!(ctc_loss(&Tensor::zeros(3, 3), &[0, 0]).is_ok());
    }

    #[test]
    fn brute_force_refuses_large_instances() {
        assert!(matches!(
            ctc_brute_force(&Tensor::zeros(12, 5), &[0]),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn blank_in_target_is_rejected() {
        assert!(ctc_loss(&Tensor::zeros(4, 3), &[2]).is_err());
    }

    #[test]
    fn shift_invariance_per_frame() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let logits = Tensor::matrix(6, 4, (0..24).map(|_| rng.gen_range(-3.0..3.0)).collect());
        let base = ctc_loss(&logits, &[1, 0, 1]).unwrap().loss;
        let mut shifted = logits.clone();
        for t in 0..6 {
            let c: f64 = rng.gen_range(-50.0..50.0);
            for k in 0..4 {
                shifted.data_mut()[t * 4 + k] += c;
            }
        }
        assert!((ctc_loss(&shifted, &[1, 0, 1]).unwrap().loss - base).abs() <= 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let logits = Tensor::matrix(7, 4, (0..28).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let target = [0, 2, 2];
        let out = ctc_loss(&logits, &target).unwrap();
        let eps = 1e-5;
        for i in 0..28 {
            let mut plus = logits.clone();
            plus.data_mut()[i] += eps;
            let mut minus = logits.clone();
            minus.data_mut()[i] -= eps;
            let fd = (ctc_loss(&plus, &target).unwrap().loss
                - ctc_loss(&minus, &target).unwrap().loss)
                / (2.0 * eps);
            assert!((fd - out.grad[i]).abs() / fd.abs().max(1.0) < 1e-4);
        }
        assert!(out.loss >= 0.0);
    }

    #[test]
    fn collapse_examples() {
        assert_eq!(collapse(&[0, 0, 3, 0, 1, 1, 3], 3), vec![0, 0, 1]);
        assert_eq!(min_frames(&[1, 1, 2]), 4);
    }
}

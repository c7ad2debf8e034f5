//! Tape gradients against central differences, layer by layer and end to end.

mod common;

use kws::gradcheck::grad_check;
use kws::graph::Graph;
use kws::layers::{LayerDims, LayerInput, LayerKind};
use kws::params::ParamStore;
use kws::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{composite_loss, tiny_model, tiny_sample};

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Tensor {
    Tensor::matrix(m, n, (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// Max relative error of one layer kind at one random point. The input is
/// registered as a parameter so parameter-free kinds are checked too, and
/// the output is reduced against fixed random weights.
fn check_kind(kind: LayerKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = LayerDims {
        dim: 8,
        expansion: 2,
        kernel: 7,
        heads: 4,
        vocab: 6,
        pad_row: Some(5),
    };
    let mut store = ParamStore::new();
    let layer = kind.build(&mut store, "layer", &dims, &mut rng);
    let rows = 5;
    let in_cols = if kind == LayerKind::Glu { 16 } else { 8 };
    let x = store.add("x", random(&mut rng, rows, in_cols));
    let ids: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..6)).collect();
    let r = random(&mut rng, rows, 8);
    let report = grad_check(&store, EPS, |g: &mut Graph, s: &ParamStore| {
        let input = if kind == LayerKind::Embedding {
            LayerInput::Ids(&ids)
        } else {
            LayerInput::Dense(g.param(s, x))
        };
        let y = layer.forward(g, s, input)?;
        let w = g.input(r.clone());
        let p = g.mul(y, w)?;
        Ok(g.sum(p))
    })
    .unwrap();
    report.max_rel_error
}

#[test]
fn every_layer_kind_at_ten_points() {
    for kind in LayerKind::ALL {
        for point in 0..10 {
            let err = check_kind(kind, 100 + point);
            assert!(err <= TOL, "{kind} point {point}: max relative error {err:e}");
        }
    }
}

#[test]
fn composite_loss_at_ten_points() {
    for point in 0..10 {
        let model = tiny_model(point);
        let sample = tiny_sample(point);
        let report = grad_check(&model.params, EPS, |g, s| composite_loss(&model, s, g, &sample)).unwrap();
        assert!(
            report.max_rel_error <= TOL,
            "point {point}: {:e} at {:?}",
            report.max_rel_error,
            report.worst
        );
    }
}

#[test]
fn backward_is_linear_in_the_loss() {
    let model = tiny_model(3);
    let sample = tiny_sample(3);
    let grads = |scale: [f64; 2]| {
        let mut g = Graph::new();
        let l = model.losses(&mut g, &sample).unwrap();
        let a = g.scale(l.utterance, scale[0]);
        let b = g.scale(l.subsequence, scale[1]);
        let total = g.add(a, b).unwrap();
        g.backward(total).unwrap().params(&g, &model.params)
    };
    let both = grads([1.5, -0.5]);
    let first = grads([1.5, 0.0]);
    let second = grads([0.0, -0.5]);
    for ((ab, a), b) in both.iter().zip(&first).zip(&second) {
        for ((x, y), z) in ab.data().iter().zip(a.data()).zip(b.data()) {
            assert!((x - (y + z)).abs() <= 1e-10);
        }
    }
}

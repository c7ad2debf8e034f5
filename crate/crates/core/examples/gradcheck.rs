//! Central-difference check of every layer kind's backward rule.
//!
//! `cargo run --release --example gradcheck`

use kws::gradcheck::grad_check;
use kws::layers::{LayerDims, LayerInput, LayerKind};
use kws::params::ParamStore;
use kws::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dims = LayerDims {
        dim: 8,
        vocab: 6,
        pad_row: Some(5),
        ..LayerDims::default()
    };
    for kind in LayerKind::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let layer = kind.build(&mut store, "layer", &dims, &mut rng);
        let cols = if kind == LayerKind::Glu { 16 } else { 8 };
        let x = store.add("input", Tensor::matrix(5, cols, (0..5 * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()));
        let mix = Tensor::matrix(5, 8, (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let ids = [0, 3, 5, 1, 5];
        let report = grad_check(&store, 1e-5, |g, s| {
            let input = match kind {
                LayerKind::Embedding => LayerInput::Ids(&ids),
                _ => LayerInput::Dense(g.param(s, x)),
            };
            let y = layer.forward(g, s, input)?;
            let w = g.input(mix.clone());
            let p = g.mul(y, w)?;
            Ok(g.sum(p))
        })?;
        println!(
            "{:<22} {:>5} scalars  max relative error {:.2e}",
            kind.to_string(),
            report.checked,
            report.max_rel_error
        );
    }
    Ok(())
}

//! CTC forward-backward against exhaustive path enumeration.
//!
//! `cargo run --release --example ctc_oracle`

use kws::ctc::{ctc_brute_force, ctc_loss, min_frames};
use kws::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let n = rng.gen_range(1..=6);
        let classes = rng.gen_range(2..=4) + 1;
        let len = rng.gen_range(1..=3);
        let target: Vec<usize> = (0..len).map(|_| rng.gen_range(0..classes - 1)).collect();
        let logits = Tensor::matrix(n, classes, (0..n * classes).map(|_| rng.gen_range(-3.0..3.0)).collect());
        let brute = ctc_brute_force(&logits, &target)?;
        match ctc_loss(&logits, &target) {
            Ok(out) => {
                worst = worst.max((out.loss - brute).abs());
                println!("#{i}: n={n} target={target:?} forward-backward {:.12} enumeration {brute:.12}", out.loss);
            }
            Err(e) => println!("#{i}: n={n} target={target:?} needs {} frames: {e} (enumeration {brute})", min_frames(&target)),
        }
    }
    println!("largest difference {worst:.3e}");
    Ok(())
}

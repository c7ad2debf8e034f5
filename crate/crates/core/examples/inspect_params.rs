//! Parameter budget of the full-size and desk-scale configurations, before
//! and after dropping the training-only heads.
//!
//! `cargo run --release --example inspect_params`

use kws::{KwsModel, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (name, cfg) in [
        ("full-size", ModelConfig::full_scale(46, 40)),
        ("desk", ModelConfig::desk_scale(12, 16)),
    ] {
        let mut model = KwsModel::new(cfg, 0)?;
        println!("{name}");
        for (group, n) in model.parameter_groups() {
            println!("  {group:<10} {n:>9}");
        }
        let total = model.params.numel();
        model.strip();
        println!("  total      {total:>9}\n  inference  {:>9}\n", model.params.numel());
    }
    Ok(())
}

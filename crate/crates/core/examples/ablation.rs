//! Loss-weight ablation on one corpus: full objective, without the prefix
//! task, and utterance-only, each trained with several seeds.
//!
//! `cargo run --release --example ablation -- [seeds] [epochs]`

use kws::config::RunConfig;
use kws::eval::{ablation_table, AblationRun};
use kws::trainer::{self, LossWeights, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(30);

    let cfg = RunConfig::default();
    let corpus = cfg.train_corpus()?;
    let test = cfg.test_corpus()?;
    let variants = [
        ("full", LossWeights::default()),
        ("no-ss", LossWeights::without_subsequence()),
        ("utt-only", LossWeights::utterance_only()),
    ];

    let mut runs = Vec::new();
    for seed in 0..seeds {
        for (name, weights) in variants {
            let train_cfg = TrainConfig {
                weights,
                seed,
                epochs,
                ..cfg.train.clone()
            };
            let out = trainer::train(&corpus, &train_cfg, None, |_| {})?;
            let last = out.metrics.last().map(|m| m.validation.hard_auc);
            eprintln!("seed {seed} {name:<9} done, validation hard AUC {last:?}");
            runs.push(AblationRun {
                variant: name.to_string(),
                checkpoint: out.checkpoint,
            });
        }
    }
    let table = ablation_table(&runs, &test)?;
    println!("{table}");
    for row in &table.rows {
        println!("{:<9} hard AUC per seed {:?}", row.variant, row.hard_auc_per_seed);
    }
    Ok(())
}

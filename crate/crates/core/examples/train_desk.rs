//! Desk-scale training run: 6,000 synthetic pairs, D = 16, 30 epochs.
//!
//! `cargo run --release --example train_desk -- [epochs] [out.ckpt]`

use std::time::Instant;

use kws::config::RunConfig;
use kws::eval::EvalReport;
use kws::trainer::{self, EpochMetrics};
use kws::KwsModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let mut cfg = RunConfig::default();
    if let Some(epochs) = args.next() {
        cfg.train.epochs = epochs.parse()?;
    }
    let out = args.next();
    cfg.validate()?;

    let corpus = cfg.train_corpus()?;
    let test = cfg.test_corpus()?;
    println!("corpus {} pairs, digest {}", corpus.len(), &corpus.digest()[..16]);
    println!("{}", EpochMetrics::csv_header());
    let start = Instant::now();
    let run = trainer::train(&corpus, &cfg.train, None, |m| {
        println!("{}  [{:.0}s]", m.csv_row(), start.elapsed().as_secs_f64())
    })?;
    let ck = run.checkpoint;
    let model = KwsModel::from_params(ck.model.clone(), &ck.params, false)?;
    println!("\nheld-out test set\n{}", EvalReport::compute(&model, &test)?);
    if let Some(path) = out {
        ck.save(path.as_ref())?;
        println!("checkpoint written to {path}");
    }
    Ok(())
}

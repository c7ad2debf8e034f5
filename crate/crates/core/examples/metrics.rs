//! AUC, EER and ROC points on a small hand-made score set.
//!
//! `cargo run --release --example metrics`

use kws::eval::{auc, eer, roc_points, ScoredSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scores = vec![0.95, 0.9, 0.8, 0.7, 0.7, 0.6, 0.4, 0.35, 0.3, 0.1];
    let positive = vec![true, true, false, true, false, true, false, true, false, false];
    let set = ScoredSet::from_labels(scores, positive);

    println!("AUC {:.4}  EER {:.4}", auc(&set)?, eer(&set)?);
    println!("threshold   FAR    FRR");
    for (th, far, frr) in roc_points(&set)? {
        println!("{th:>9} {far:>6.2} {frr:>6.2}");
    }
    Ok(())
}

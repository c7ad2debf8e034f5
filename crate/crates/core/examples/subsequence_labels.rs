//! Prefix labels for an anchor against what was actually said.
//!
//! `cargo run --release --example subsequence_labels -- service surface`

use kws::frontend::{pad_anchor, subsequence_labels, Lexicon, PhonemeVocab, ARPABET};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let anchor_word = args.next().unwrap_or_else(|| "service".into());
    let spoken_word = args.next().unwrap_or_else(|| "surface".into());

    let vocab = PhonemeVocab::arpabet(ARPABET.len())?;
    let lexicon = Lexicon::builtin(&vocab);
    let anchor = lexicon.lookup(&anchor_word)?;
    let spoken = lexicon.lookup(&spoken_word)?;
    let padded = pad_anchor(&anchor, 25, vocab.pad_id())?;
    let labels = subsequence_labels(&padded, &spoken);

    println!("anchor  {anchor_word}: {}", vocab.render(&anchor));
    println!("spoken  {spoken_word}: {}", vocab.render(&spoken));
    for (t, label) in labels.iter().enumerate().take(anchor.len()) {
        println!("t={:<2} {:<24} {label}", t + 1, vocab.render(&anchor[..=t]));
    }
    if let Some(pad) = labels.0.get(anchor.len()) {
        println!("t={}..25 padding, all {pad}", anchor.len() + 1);
    }
    Ok(())
}

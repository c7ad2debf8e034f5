//! Synthesise a paired corpus, print its keyword-length histogram and write
//! it in the binary corpus format.
//!
//! `cargo run --release --example synth_corpus -- [out.corpus]`

use kws::frontend::{keyword_length_histogram, Corpus, GenConfig, PairCounts, PairKind, Synthesizer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let synth = Synthesizer::new(GenConfig::default())?;
    let counts = PairCounts {
        positive: 1000,
        easy: 1000,
        hard: 1000,
    };
    let corpus = Corpus::synthesize(&synth, counts, 42)?;
    let vocab = &corpus.vocab;

    for kind in [PairKind::Positive, PairKind::EasyNegative, PairKind::HardNegative] {
        let s = corpus.samples.iter().find(|s| s.kind == kind).expect("every kind present");
        println!(
            "{kind:<8} anchor [{}]  spoken [{}]  {} frames",
            vocab.render(s.anchor.phonemes()),
            vocab.render(&s.spoken),
            s.audio.num_frames()
        );
    }

    println!("\nkeyword length (phonemes) histogram");
    let hist = keyword_length_histogram(corpus.samples.iter().map(|s| &s.spoken));
    for (len, n) in &hist {
        println!("{len:>3} {n:>5} {}", "*".repeat(n / 10));
    }

    let path = std::env::args().nth(1).unwrap_or_else(|| "synthetic.corpus".into());
    corpus.save(path.as_ref())?;
    println!("\n{} pairs written to {path} (sha256 {})", corpus.len(), corpus.digest());
    Ok(())
}

//! Score a synthetic clip against typed keywords with a trained checkpoint.
//!
//! `cargo run --release --example infer -- model.ckpt`
//!
//! Without a checkpoint argument a small model is trained on the spot.

use kws::checkpoint::Checkpoint;
use kws::config::RunConfig;
use kws::frontend::{pad_anchor, sample_rng, Lexicon, PhonemeVocab};
use kws::trainer::{self, strip_for_inference};
use kws::KwsModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig::default();
    let ck = match std::env::args().nth(1) {
        Some(path) => Checkpoint::load(path.as_ref())?,
        None => {
            let mut small = cfg.clone();
            small.corpus.positive = 500;
            small.corpus.easy = 500;
            small.corpus.hard = 500;
            small.train.epochs = 10;
            eprintln!("training a small model (1,500 pairs, 10 epochs)...");
            trainer::train(&small.train_corpus()?, &small.train, None, |_| {})?.checkpoint
        }
    };
    let deploy = strip_for_inference(&ck)?;
    let model = KwsModel::from_params(deploy.model.clone(), &deploy.params, true)?;
    let vocab: PhonemeVocab = model.vocab();
    let lexicon = Lexicon::builtin(&vocab);
    let synth = cfg.synthesizer()?;

    let spoken = lexicon.lookup("service")?;
    let audio = synth.render_audio(&mut sample_rng(7, 0), &spoken);
    println!("clip: \"service\" [{}], {} frames", vocab.render(&spoken), audio.num_frames());
    for word in ["service", "surface", "nervous", "a"] {
        let Ok(seq) = lexicon.lookup(word) else {
            continue;
        };
        let anchor = pad_anchor(&seq, model.config.max_keyword_len, vocab.pad_id())?;
        let d = model.decide(&audio, &anchor)?;
        println!("  {word:<10} [{:<18}] score {:.4}", vocab.render(&seq), d.score);
    }
    Ok(())
}

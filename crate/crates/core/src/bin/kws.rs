use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use kws::checkpoint::Checkpoint;
use kws::config::RunConfig;
use kws::eval::{roc_points, score_corpus, subsequence_csv, EvalReport};
use kws::frontend::{keyword_length_histogram, load_audio, pad_anchor, Corpus, Lexicon};
use kws::trainer::{self, strip_for_inference, EpochMetrics, TrainError};
use kws::KwsModel;

/// Text-anchored keyword spotting on synthetic phoneme audio.
#[derive(Parser)]
#[command(name = "kws", version)]
struct Cli {
    /// TOML run configuration; omitted keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "runs/default")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train and test corpora plus the lexicon.
    Synth,
    /// Train a model and write `model.ckpt`, `model.stripped.ckpt` and `metrics.csv`.
    Train {
        /// Training corpus; synthesised from the config when absent.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        alpha2: Option<f64>,
        #[arg(long)]
        alpha3: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Continue from a checkpoint of the same run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// AUC/EER on a test corpus.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Test corpus; synthesised from the config when absent.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Write per-prefix predictions to this CSV (needs an unstripped checkpoint).
        #[arg(long)]
        dump_subseq: Option<PathBuf>,
    },
    /// Score one audio file against a keyword.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        audio: PathBuf,
        /// Keyword as words looked up in the lexicon.
        #[arg(long, conflicts_with = "phonemes")]
        keyword: Option<String>,
        /// Keyword as space-separated phoneme symbols.
        #[arg(long)]
        phonemes: Option<String>,
        /// Lexicon file (word TAB phonemes); the built-in one otherwise.
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Parameter counts of a checkpoint, or of a fresh model from the config.
    Inspect {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    let out = cli.out.as_path();
    match cli.command {
        Command::Synth => synth(cfg, out),
        Command::Train {
            corpus,
            alpha2,
            alpha3,
            epochs,
            resume,
        } => {
            if let Some(a) = alpha2 {
                cfg.train.weights.subsequence = a;
            }
            if let Some(a) = alpha3 {
                cfg.train.weights.ctc = a;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            train(cfg, out, corpus.as_deref(), resume.as_deref())
        }
        Command::Eval {
            checkpoint,
            corpus,
            dump_subseq,
        } => eval(cfg, out, &checkpoint, corpus.as_deref(), dump_subseq.as_deref()),
        Command::Infer {
            checkpoint,
            audio,
            keyword,
            phonemes,
            lexicon,
        } => infer(&checkpoint, &audio, keyword, phonemes, lexicon.as_deref()),
        Command::Inspect { checkpoint } => inspect(cfg, checkpoint.as_deref()),
    }
}

fn synth(cfg: RunConfig, out: &Path) -> anyhow::Result<()> {
    cfg.validate()?;
    cfg.echo_to(out)?;
    let synth = cfg.synthesizer()?;
    for (name, corpus) in [("train", cfg.train_corpus()?), ("test", cfg.test_corpus()?)] {
        let path = out.join(format!("{name}.corpus"));
        corpus.save(&path)?;
        let count = |k| corpus.samples.iter().filter(|s| s.kind == k).count();
        println!(
            "{name}: {} pairs (positive {}, easy {}, hard {}) -> {}",
            corpus.len(),
            count(kws::frontend::PairKind::Positive),
            count(kws::frontend::PairKind::EasyNegative),
            count(kws::frontend::PairKind::HardNegative),
            path.display()
        );
        println!("  sha256 {}", corpus.digest());
        println!("  spoken keyword length histogram (phonemes: pairs)");
        let hist = keyword_length_histogram(corpus.samples.iter().map(|s| &s.spoken));
        let max = hist.values().copied().max().unwrap_or(1);
        for (len, n) in hist {
            println!("  {len:>3}: {n:>6} {}", "#".repeat((40 * n).div_ceil(max)));
        }
    }
    let lexicon = Lexicon::builtin(synth.vocab());
    std::fs::write(out.join("lexicon.txt"), lexicon.to_text(synth.vocab()))?;
    println!("lexicon: {} words -> {}", lexicon.len(), out.join("lexicon.txt").display());
    Ok(())
}

fn train(cfg: RunConfig, out: &Path, corpus: Option<&Path>, resume: Option<&Path>) -> anyhow::Result<()> {
    cfg.validate()?;
    cfg.echo_to(out)?;
    let corpus = match corpus {
        Some(p) => Corpus::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => cfg.train_corpus()?,
    };
    let resume = resume.map(Checkpoint::load).transpose()?;
    let mut log = format!("{}\n", EpochMetrics::csv_header());
    println!("{}", EpochMetrics::csv_header());
    let result = trainer::train(&corpus, &cfg.train, resume, |m| {
        println!("{}", m.csv_row());
        log += &m.csv_row();
        log.push('\n');
    });
    std::fs::write(out.join("metrics.csv"), &log)?;
    let ck = match result {
        Ok(r) => r.checkpoint,
        Err(TrainError::Diverged(d)) => {
            let path = out.join("last_good.ckpt");
            d.last_good.save(&path)?;
            bail!(
                "loss diverged at step {}; last good checkpoint written to {}",
                d.step,
                path.display()
            );
        }
        Err(TrainError::Invalid(e)) => return Err(e.into()),
    };
    ck.save(&out.join("model.ckpt"))?;
    strip_for_inference(&ck)?.save(&out.join("model.stripped.ckpt"))?;
    println!("wrote {} (step {})", out.join("model.ckpt").display(), ck.step);
    Ok(())
}

fn load_model(path: &Path) -> anyhow::Result<(Checkpoint, KwsModel)> {
    let ck = Checkpoint::load(path).with_context(|| format!("reading {}", path.display()))?;
    let model = KwsModel::from_params(ck.model.clone(), &ck.params, ck.stripped)?;
    Ok((ck, model))
}

fn eval(
    cfg: RunConfig,
    out: &Path,
    checkpoint: &Path,
    corpus: Option<&Path>,
    dump: Option<&Path>,
) -> anyhow::Result<()> {
    let (ck, model) = load_model(checkpoint)?;
    if dump.is_some() && ck.stripped {
        bail!("--dump-subseq needs the prefix heads, but {} is stripped", checkpoint.display());
    }
    cfg.echo_to(out)?;
    let corpus = match corpus {
        Some(p) => Corpus::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => cfg.test_corpus()?,
    };
    let report = EvalReport::compute(&model, &corpus)?;
    println!("{report}");
    std::fs::write(out.join("eval.txt"), report.to_kv())?;
    let mut roc = String::from("threshold,far,frr\n");
    for (th, far, frr) in roc_points(&score_corpus(&model, &corpus)?)? {
        roc += &format!("{th},{far:.6},{frr:.6}\n");
    }
    std::fs::write(out.join("roc.csv"), roc)?;
    if let Some(path) = dump {
        std::fs::write(path, subsequence_csv(&model, &corpus)?)?;
        println!("subsequence predictions -> {}", path.display());
    }
    Ok(())
}

fn infer(
    checkpoint: &Path,
    audio: &Path,
    keyword: Option<String>,
    phonemes: Option<String>,
    lexicon: Option<&Path>,
) -> anyhow::Result<()> {
    let (_, model) = load_model(checkpoint)?;
    let vocab = model.vocab();
    let seq = match (keyword, phonemes) {
        (_, Some(p)) => vocab.parse(&p)?,
        (Some(words), None) => {
            let lex = match lexicon {
                Some(p) => Lexicon::load(p, &vocab)?,
                None => Lexicon::builtin(&vocab),
            };
            lex.lookup(&words)?
        }
        (None, None) => bail!("give the keyword with --keyword or --phonemes"),
    };
    let anchor = pad_anchor(&seq, model.config.max_keyword_len, vocab.pad_id())?;
    let audio = load_audio(audio).with_context(|| format!("reading {}", audio.display()))?;
    let decision = model.decide(&audio, &anchor)?;
    println!("keyword: {}", vocab.render(&seq));
    println!("score={:.6}", decision.score);
    println!("decision={}", if decision.score >= 0.5 { "match" } else { "no-match" });
    Ok(())
}

const REFERENCE_INFERENCE_PARAMS: usize = 596_000;

fn inspect(cfg: RunConfig, checkpoint: Option<&Path>) -> anyhow::Result<()> {
    let model = match checkpoint {
        Some(p) => load_model(p)?.1,
        None => KwsModel::new(cfg.train.model.clone(), cfg.seed)?,
    };
    let c = &model.config;
    println!(
        "model: D={} encoder layers={} matcher layers={} T={} vocab={} F={}{}",
        c.encoder.dim,
        c.encoder.layers,
        c.matcher.layers,
        c.max_keyword_len,
        c.vocab_size,
        c.feature_dim,
        if model.is_stripped() { " (stripped)" } else { "" }
    );
    let total = model.params.numel();
    for (group, n) in model.parameter_groups() {
        println!("  {group:<12} {n:>10}");
    }
    println!("  {:<12} {total:>10}", "total");
    println!("  {:<12} {:>10}", "inference", model.inference_numel());
    println!(
        "reference inference size {}K; this model keeps {:.1}K ({:.1}%)",
        REFERENCE_INFERENCE_PARAMS / 1000,
        model.inference_numel() as f64 / 1000.0,
        100.0 * model.inference_numel() as f64 / REFERENCE_INFERENCE_PARAMS as f64
    );
    Ok(())
}

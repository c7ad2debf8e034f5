//! End-to-end runs of the `kws` binary on a tiny configuration.

use std::path::Path;
use std::process::{Command, Output};

use kws::frontend::{save_audio, Corpus, PhonemeVocab};
use tempfile::TempDir;

const TINY: &str = r#"
seed = 3

[generator]
vocab_size = 4
min_len = 2
max_len = 4
frames_min = 2
frames_max = 3
feature_dim = 3

[corpus]
positive = 8
easy = 8
hard = 8
test_positive = 4
test_easy = 4
test_hard = 4

[train]
batch_size = 8
epochs = 1
warmup = 10

[train.model]
vocab_size = 4
feature_dim = 3

[train.model.encoder]
layers = 1
dim = 8
conv_kernel = 3
heads = 2

[train.model.matcher]
hidden = 8
filter = 8
layers = 1
heads = 2
"#;

fn kws(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kws"))
        .arg("--config")
        .arg(dir.join("tiny.toml"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(out.status.success(), "kws failed: {stderr}");
    String::from_utf8(out.stdout).unwrap()
}

fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn synth_is_reproducible() {
    let dir = workspace();
    let d = dir.path();
    ok(kws(d, &["--out", &path(d, "a"), "synth"]));
    ok(kws(d, &["--out", &path(d, "b"), "synth"]));
    for f in ["train.corpus", "test.corpus", "lexicon.txt"] {
        let a = std::fs::read(d.join("a").join(f)).unwrap();
        let b = std::fs::read(d.join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between identical runs");
    }
    let other = ok(kws(d, &["--seed", "4", "--out", &path(d, "c"), "synth"]));
    assert!(other.contains("sha256"));
    assert_ne!(
        std::fs::read(d.join("a/train.corpus")).unwrap(),
        std::fs::read(d.join("c/train.corpus")).unwrap()
    );
}

#[test]
fn train_eval_infer_round_trip() {
    let dir = workspace();
    let d = dir.path();
    let run = path(d, "run");
    ok(kws(d, &["--out", &run, "synth"]));
    let log = ok(kws(d, &["--out", &run, "train", "--corpus", &path(d, "run/train.corpus")]));
    assert!(log.starts_with("epoch,step"));
    let metrics = std::fs::read_to_string(d.join("run/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 2);

    let full = path(d, "run/model.ckpt");
    let stripped = path(d, "run/model.stripped.ckpt");
    let test = path(d, "run/test.corpus");
    let dump = path(d, "subseq.csv");
    let report = ok(kws(d, &["--out", &run, "eval", "--checkpoint", &full, "--corpus", &test, "--dump-subseq", &dump]));
    assert!(report.contains("AUC"));
    let rows = std::fs::read_to_string(&dump).unwrap();
    assert!(rows.starts_with("sample,kind,t,"));
    assert!(d.join("run/eval.txt").exists() && d.join("run/roc.csv").exists());

    let refused = kws(d, &["--out", &run, "eval", "--checkpoint", &stripped, "--corpus", &test, "--dump-subseq", &dump]);
    assert!(!refused.status.success());
    assert!(String::from_utf8_lossy(&refused.stderr).contains("stripped"));

    let sample = &Corpus::load(Path::new(&test)).unwrap().samples[0];
    let audio = path(d, "clip.audio");
    save_audio(&sample.audio, Path::new(&audio)).unwrap();
    let vocab = PhonemeVocab::arpabet(4).unwrap();
    let phonemes = vocab.render(&sample.spoken);
    let infer = |ck: &str| ok(kws(d, &["infer", "--checkpoint", ck, "--audio", &audio, "--phonemes", &phonemes]));
    let a = infer(&full);
    assert!(a.contains("score=") && a.contains("decision="));
    assert_eq!(a, infer(&full));
    assert_eq!(a, infer(&stripped));

    let long = vec![vocab.render(&sample.spoken[..1]); 26].join(" ");
    let too_long = kws(d, &["infer", "--checkpoint", &full, "--audio", &audio, "--phonemes", &long]);
    assert!(!too_long.status.success());
    let err = String::from_utf8_lossy(&too_long.stderr);
    assert!(err.contains("26") && err.contains("25"), "{err}");
}

#[test]
fn zero_epochs_writes_the_initial_model() {
    let dir = workspace();
    let d = dir.path();
    let run = path(d, "run");
    ok(kws(d, &["--out", &run, "train", "--epochs", "0"]));
    let ck = kws::Checkpoint::load(&d.join("run/model.ckpt")).unwrap();
    assert_eq!(ck.step, 0);
    let fresh = kws::KwsModel::new(ck.model.clone(), 3).unwrap();
    assert_eq!(ck.params, fresh.params);

    let inspect = ok(kws(d, &["inspect", "--checkpoint", &path(d, "run/model.stripped.ckpt")]));
    assert!(inspect.contains("(stripped)"));
}

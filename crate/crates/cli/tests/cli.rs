use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &[&str] = &[
    "--set",
    "synth.max_groups=3",
    "--set",
    "synth.categories=2",
    "--set",
    "synth.attributes_per_category=1",
    "--set",
    "synth.values_per_attribute=2",
    "--set",
    "synth.length=84",
    "--set",
    "train.iterations=10",
    "--set",
    "train.batch_size=8",
    "--set",
    "train.hidden=6",
    "--set",
    "train.embed_dim=4",
];

fn kern(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kern"))
        .current_dir(dir)
        .args(args)
        .args(SMALL)
        .output()
        .expect("spawn kern")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = kern(dir, args);
    assert!(
        out.status.success(),
        "kern {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str], class: &str, code: i32) -> String {
    let out = kern(dir, args);
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert_eq!(out.status.code(), Some(code), "{args:?}: {err}");
    assert!(err.starts_with(&format!("error[{class}]")), "{args:?}: {err}");
    err
}

/// Synthesizes a corpus and trains a checkpoint in a fresh directory.
fn prepared() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--seed", "3", "--out", "c.csv"]);
    ok(dir.path(), &["train", "--corpus", "c.csv", "--seed", "1", "--out", "m.json"]);
    dir
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn end_to_end_pipeline() {
    let dir = prepared();
    let d = dir.path();
    assert!(read(d, "c.taxonomy.csv").lines().count() > 1);
    let log = read(d, "m.json.log");
    assert!(log.starts_with("# variant KERN (internal on, external on)"), "{log}");
    assert_eq!(log.lines().filter(|l| !l.starts_with('#')).count(), 11);

    let table = ok(d, &["evaluate", "--corpus", "c.csv", "--checkpoint", "m.json", "--out", "r"]);
    assert!(table.contains("Improvement"), "{table}");
    let tsv = read(d, "r.tsv");
    assert_eq!(tsv.lines().count(), 1 + 9 + 1, "{tsv}");
    assert!(tsv.lines().all(|l| l.split('\t').count() == 10));
    assert!(read(d, "r.forecasts.csv").contains("forecast:KERN"));

    let fc = ok(d, &["forecast", "--corpus", "c.csv", "--checkpoint", "m.json", "--group", "paris/0", "--element", "cat0"]);
    let rows: Vec<&str> = fc.lines().skip(1).collect();
    assert_eq!(rows.len(), 2 * (48 + 12));
    assert_eq!(rows.iter().filter(|r| !r.ends_with(',')).count(), 2 * 12);

    let rep = ok(d, &["report", "--corpus", "c.csv", "--checkpoint", "m.json", "--group", "paris/0/1", "--top", "2"]);
    assert!(rep.contains("[category]") && rep.contains("[attribute_value]"), "{rep}");
    assert_eq!(rep.lines().filter(|l| l.contains(",riser,")).count(), 3 * 2);
}

#[test]
fn runs_are_byte_identical() {
    let a = prepared();
    let b = prepared();
    for name in ["c.csv", "c.taxonomy.csv", "m.json", "m.json.log"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let eval = |d: &Path| {
        ok(d, &["evaluate", "--corpus", "c.csv", "--checkpoint", "m.json", "--out", "r"]);
        (read(d, "r.tsv"), read(d, "r.forecasts.csv"))
    };
    assert_eq!(eval(a.path()), eval(b.path()));
}

#[test]
fn checkpoint_round_trips_unchanged() {
    let dir = prepared();
    let path: PathBuf = dir.path().join("m.json");
    let ck = kern_core::kern::Checkpoint::load(&path).unwrap();
    let again = dir.path().join("m2.json");
    ck.save(&again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn ablation_writes_four_rows() {
    let dir = prepared();
    ok(dir.path(), &["evaluate", "--ablation", "--corpus", "c.csv", "--out", "a"]);
    let tsv = read(dir.path(), "a.ablation.tsv");
    assert_eq!(tsv.lines().count(), 5, "{tsv}");
    for v in ["KERN-IE", "KERN-E", "KERN-I"] {
        assert!(tsv.contains(v), "{tsv}");
    }
}

#[test]
fn errors_are_classified() {
    let dir = prepared();
    let d = dir.path();
    let err = fails(d, &["evaluate", "--corpus", "c.csv", "--methods", " , "], "usage", 2);
    assert!(err.contains("empty method list"), "{err}");
    let err = fails(d, &["evaluate", "--corpus", "c.csv", "--methods", "mean,arma"], "usage", 2);
    assert!(err.contains("did you mean"), "{err}");
    fails(d, &["train"], "usage", 2);
    fails(d, &["frobnicate"], "usage", 2);
    let err = fails(d, &["synth", "--out", "x.csv", "--set", "train.iteration=4"], "config", 1);
    assert!(err.contains("train.iterations"), "{err}");
    fails(d, &["train", "--corpus", "missing.csv", "--out", "m.json"], "io", 1);
    fails(d, &["report", "--corpus", "c.csv", "--checkpoint", "m.json", "--group", "paris"], "usage", 2);
    fails(d, &["forecast", "--corpus", "c.csv", "--checkpoint", "m.json", "--group", "paris", "--element", "nope"], "not-found", 1);
    std::fs::write(d.join("bad.json"), "{").unwrap();
    fails(d, &["forecast", "--corpus", "c.csv", "--checkpoint", "bad.json", "--group", "paris", "--element", "cat0"], "checkpoint", 1);
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sorr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sorr"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn toy_config(dir: &Path, optimizer: &str) -> String {
    let path = dir.join("toy.toml");
    fs::write(
        &path,
        format!(
            "name = \"toy\"\ntask = \"binary\"\nrepeats = 3\nseed = 4\n\
             [dataset]\npreset = \"multimodal-200\"\noutliers = 1\n\
             [model]\nmethod = \"aorr\"\nloss = \"logistic\"\nk = 2\nm = 1\n\
             [optimizer]\n{optimizer}\n\
             [grid]\nc = [10.0, 1000.0]\n\
             [sweep]\nk = 4\nm = [\"all\"]\n"
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

const FAST: &str = "outer_epochs = 3\ninner_epochs = 500\nlearning_rate = 0.05";

#[test]
fn experiment_reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), FAST);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = sorr(&["experiment", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    }
    for file in ["per_repeat.csv", "summary.csv"] {
        let first = fs::read(a.join(file)).unwrap();
        assert!(!first.is_empty());
        assert_eq!(first, fs::read(b.join(file)).unwrap(), "{file}");
    }
    let header = fs::read_to_string(a.join("per_repeat.csv")).unwrap();
    assert!(header.starts_with("repeat,seed,status,c,k,m,error\n"));
}

#[test]
fn seed_flag_changes_the_splits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), FAST);
    let out = |seed: &str| {
        let o = dir.path().join(seed);
        assert_eq!(code(&sorr(&["experiment", "--config", &cfg, "--seed", seed, "--out", o.to_str().unwrap()])), 0);
        fs::read_to_string(o.join("per_repeat.csv")).unwrap()
    };
    let (a, b) = (out("1"), out("2"));
    assert!(a.contains("\n0,1,ok,") && b.contains("\n0,2,ok,"));
}

#[test]
fn gen_synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str| {
        let p = dir.path().join(name);
        let res = sorr(&["gen-synth", "--preset", "imbalanced-200", "--outliers", "3", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert_eq!(code(&res), 0);
        fs::read(p).unwrap()
    };
    let first = write("a.csv");
    assert_eq!(first, write("b.csv"));
    assert_eq!(String::from_utf8(first).unwrap().lines().count(), 201);
    assert_eq!(code(&sorr(&["gen-synth", "--preset", "nope", "--out", "/dev/null"])), 2);
}

#[test]
fn train_then_eval_round_trips_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), FAST);
    let out = dir.path().join("run");
    let out_s = out.to_str().unwrap();
    assert_eq!(code(&sorr(&["train", "--config", &cfg, "--out", out_s])), 0);
    for file in ["model.txt", "metrics.csv", "trace.csv", "boundary.csv"] {
        assert!(out.join(file).is_file(), "{file}");
    }
    assert!(fs::read_to_string(out.join("boundary.csv")).unwrap().starts_with("x,y\n"));
    let model = out.join("model.txt");
    assert_eq!(code(&sorr(&["eval", "--config", &cfg, "--model", model.to_str().unwrap(), "--out", out_s])), 0);
    // Same model, same test split.
    assert_eq!(
        fs::read_to_string(out.join("metrics.csv")).unwrap(),
        fs::read_to_string(out.join("eval.csv")).unwrap()
    );
}

#[test]
fn grid_and_sweep_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), FAST);
    let out = dir.path().join("g");
    let out_s = out.to_str().unwrap();
    assert_eq!(code(&sorr(&["grid", "--config", &cfg, "--out", out_s])), 0);
    let grid = fs::read_to_string(out.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 3);
    assert_eq!(code(&sorr(&["sweep", "--config", &cfg, "--out", out_s])), 0);
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(sweep.starts_with("series,m,mean,std\n"));
    for series in ["aorr", "average", "maximum", "atk"] {
        assert!(out.join(format!("curve_{series}.csv")).is_file());
    }
}

#[test]
fn config_problems_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&sorr(&["experiment", "--config", "/nonexistent.toml"])), 2);
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "name = \"x\"\ntask = \"binary\"\ncolour = 1\n[dataset]\npreset = \"monk\"\n[model]\nmethod = \"aorr\"\n").unwrap();
    assert_eq!(code(&sorr(&["experiment", "--config", bad.to_str().unwrap()])), 2);
    let cfg = toy_config(dir.path(), FAST);
    // Label noise needs a multi-class task.
    assert_eq!(code(&sorr(&["noise", "--config", &cfg, "--out", dir.path().to_str().unwrap()])), 2);
    assert_eq!(code(&sorr(&["experiment", "--config", &cfg, "--preset", "unknown-preset"])), 2);
    assert_eq!(code(&sorr(&["frobnicate"])), 2);
}

#[test]
fn divergence_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy_config(dir.path(), "outer_epochs = 2\ninner_epochs = 200\nlearning_rate = 1e12\nc = 1e-6");
    let res = sorr(&["train", "--config", &cfg, "--out", dir.path().join("d").to_str().unwrap()]);
    assert_eq!(code(&res), 3, "{}", String::from_utf8_lossy(&res.stderr));
}

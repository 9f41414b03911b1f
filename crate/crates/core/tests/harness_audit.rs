use std::path::Path;

use sorr::data::LabeledDataset;
use sorr::harness::{
    lr_baseline, mean_std, per_repeat_csv, run_experiment, tendency_sweep, write_report, CountToken,
    ExperimentConfig, MToken,
};
use sorr::metrics::{average_precision, PredictionBatch};
use sorr::{DcaConfig, LabelSet};

fn toy(method: &str, extra: &str) -> ExperimentConfig {
    let text = format!(
        "name = \"audit\"\ntask = \"binary\"\nrepeats = 4\nseed = 21\n\
         [dataset]\npreset = \"multimodal-200\"\noutliers = 2\n\
         [model]\nmethod = \"{method}\"\nloss = \"hinge\"\n{extra}\n\
         [optimizer]\nouter_epochs = 3\ninner_epochs = 400\n"
    );
    ExperimentConfig::from_toml(&text, Path::new(".")).unwrap()
}

#[test]
fn summary_is_recomputable_from_the_per_repeat_file() {
    let cfg = toy("aorr", "k = 10\nm = 2\n[grid]\nc = [1.0, 100.0]\nm = [1, 2, 3]");
    let report = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_report(&report, dir.path()).unwrap();

    let mut per = csv::Reader::from_path(dir.path().join("per_repeat.csv")).unwrap();
    let headers = per.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = per.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    let mut summary = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.headers().unwrap(), vec!["metric", "mean", "std", "count"]);
    for rec in summary.records() {
        let rec = rec.unwrap();
        let col = headers.iter().position(|h| h == &rec[0]).unwrap();
        let values: Vec<f64> = rows.iter().map(|r| r[col].parse().unwrap()).collect();
        let (mean, std) = mean_std(&values);
        assert_eq!(rec[1].parse::<f64>().unwrap(), mean);
        assert_eq!(rec[2].parse::<f64>().unwrap(), std);
        assert_eq!(rec[3].parse::<usize>().unwrap(), values.len());
    }
}

#[test]
fn one_repeat_with_fixed_hyperparameters_is_one_run() {
    let mut cfg = toy("aorr", "k = 10\nm = 2");
    cfg.repeats = 1;
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.summary[0].mean, report.repeats[0].metrics[0].1);
    assert_eq!(report.summary[0].std, 0.0);
}

#[test]
fn baseline_rows_equal_their_ranked_range_forms() {
    let pairs = [
        ("average", "", "k = \"n\"\nm = 0"),
        ("maximum", "", "k = 1\nm = 0"),
        ("atk", "k = 7", "k = 7\nm = 0"),
    ];
    for (method, base_extra, aorr_extra) in pairs {
        let a = run_experiment(&toy(method, base_extra)).unwrap();
        let b = run_experiment(&toy("aorr", aorr_extra)).unwrap();
        assert_eq!(per_repeat_csv(&a), per_repeat_csv(&b), "{method}");
    }
}

#[test]
fn sweep_rows_include_references_and_m_zero_matches_atk() {
    let cfg = toy("aorr", "k = 6");
    let rows = tendency_sweep(&cfg, &CountToken::Exact(6), &[MToken::Exact(0), MToken::Exact(2)]).unwrap();
    let series: Vec<(&str, usize)> = rows.iter().map(|r| (r.series.as_str(), r.m)).collect();
    assert_eq!(series, vec![("aorr", 0), ("aorr", 2), ("average", 0), ("maximum", 0), ("atk", 0)]);
    assert_eq!(rows[0].mean, rows[4].mean);
    assert_eq!(rows[0].std, rows[4].std);
    let single = tendency_sweep(&cfg, &CountToken::Exact(6), &[MToken::Exact(3)]).unwrap();
    assert_eq!(single.iter().filter(|r| r.series == "aorr").count(), 1);
    assert!(tendency_sweep(&cfg, &CountToken::Exact(1), &[MToken::Exact(0)]).is_err());
}

fn separable_labels() -> LabeledDataset {
    // Label j is on iff feature j is positive; bit patterns 1..=7 keep every
    // set non-empty.
    let x = ndarray::Array2::from_shape_fn((42, 3), |(i, j)| {
        let sign = if ((i % 7 + 1) >> j) & 1 == 1 { 1.0 } else { -1.0 };
        sign * (1.0 + (i % 5) as f64 * 0.1)
    });
    let sets = (0..42)
        .map(|i| LabelSet::from_indicators(&[x[[i, 0]] > 0.0, x[[i, 1]] > 0.0, x[[i, 2]] > 0.0]).unwrap())
        .collect();
    LabeledDataset::multilabel(x, sets, 3).unwrap()
}

#[test]
fn lr_baseline_limits() {
    let ds = separable_labels();
    let zero = lr_baseline(&ds, &DcaConfig { outer_epochs: 0, ..DcaConfig::default() }).unwrap();
    assert!(zero.params().iter().all(|&p| p == 0.0));
    let sigmoid = |s: f64| 1.0 / (1.0 + (-s).exp());
    assert!(zero.scores(ds.row(0)).unwrap().iter().all(|&s| sigmoid(s) == 0.5));

    let ap = |outer: usize| {
        let cfg = DcaConfig { outer_epochs: outer, inner_epochs: 500, learning_rate: 0.1, minibatch: 8, ..DcaConfig::default() };
        let model = lr_baseline(&ds, &cfg).unwrap();
        average_precision(&PredictionBatch::from_model(&model, &ds).unwrap()).unwrap()
    };
    let (short, long) = (ap(1), ap(20));
    assert!(long >= short);
    assert!(long > 0.99, "{long}");
}

#[test]
fn descriptor_datasets_resolve_against_the_data_root() {
    use sorr::data::{gen_gaussian_mixture, synth_preset, write_csv};
    let root = tempfile::tempdir().unwrap();
    let sub = root.path().join("toy");
    std::fs::create_dir_all(&sub).unwrap();
    let ds = gen_gaussian_mixture(&synth_preset("imbalanced-200", 0, 2).unwrap()).unwrap();
    write_csv(&ds, &sub.join("toy.csv")).unwrap();
    std::fs::write(
        sub.join("toy.toml"),
        "name = \"toy\"\npath = \"toy.csv\"\nmode = \"binary\"\nstandardize = true\n",
    )
    .unwrap();
    let text = format!(
        "name = \"d\"\ntask = \"binary\"\nrepeats = 2\n[dataset]\ndescriptor = \"toy/toy.toml\"\ndata_dir = {:?}\n\
         [model]\nmethod = \"average\"\n[optimizer]\nouter_epochs = 2\ninner_epochs = 300\n",
        root.path()
    );
    let cfg = ExperimentConfig::from_toml(&text, Path::new(".")).unwrap();
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.summary[0].count, 2);
    assert!(report.summary[0].mean < 10.0, "{}", report.summary[0].mean);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        if name.ends_with(".toml") && !name.contains("descriptor") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(format!("{}.toml", cfg.name), name);
            seen += 1;
        }
    }
    assert!(seen >= 10);
}

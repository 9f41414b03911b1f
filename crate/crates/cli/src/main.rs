use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sorr::data::{gen_gaussian_mixture, synth_preset, write_csv};
use sorr::harness::{
    self, boundary_points, curve_csv, evaluate, grid_csv, load_source, per_repeat_csv, prepare_repeat,
    summary_csv, trace_csv, xy_csv, ExperimentConfig, Metrics,
};
use sorr::{LinearModel, SorrError};

/// Ranked-range learning: train, evaluate and run experiment protocols.
#[derive(Parser)]
#[command(name = "sorr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output_dir` or results/<name>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces the config's dataset with a built-in preset.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic preset dataset as CSV.
    GenSynth {
        #[arg(long)]
        preset: String,
        /// Number of flipped-label outliers.
        #[arg(long, default_value_t = 0)]
        outliers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train once with the config's fixed hyperparameters on the first split.
    Train(Common),
    /// Evaluate a saved model on the first split's test part.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Grid search on the first split.
    Grid(Common),
    /// Full repeated-split protocol.
    Experiment(Common),
    /// Error as a function of m at fixed k, with baseline reference rows.
    Sweep(Common),
    /// Repeat the experiment for every rate in `noise_levels`.
    Noise(Common),
}

fn load_config(common: &Common) -> anyhow::Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(preset) = &common.preset {
        cfg.dataset.preset = Some(preset.clone());
        cfg.dataset.descriptor = None;
    }
    cfg.validate()?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir());
    Ok((cfg, out))
}

fn metrics_csv(metrics: &Metrics) -> String {
    let mut s = String::from("metric,value\n");
    for (name, v) in metrics {
        s.push_str(&format!("{name},{v}\n"));
    }
    s
}

fn save(path: &Path, text: &str) -> anyhow::Result<()> {
    harness::write_file(path, text)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenSynth { preset, outliers, seed, out } => {
            let ds = gen_gaussian_mixture(&synth_preset(&preset, outliers, seed)?)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| SorrError::io(dir, e))?;
            }
            write_csv(&ds, &out)?;
        }
        Command::Train(common) => {
            let (cfg, out) = load_config(&common)?;
            let source = load_source(&cfg)?;
            let data = prepare_repeat(&cfg, &source, 0)?;
            let labels = data.train.label_sets().map(|(_, l)| l).unwrap_or(1);
            let hp = harness::candidate_grid(&cfg, data.train.len(), labels)?[0];
            let trained = harness::train_once(&cfg, &data.train, hp, cfg.seed)?;
            std::fs::create_dir_all(&out).map_err(|e| SorrError::io(&out, e))?;
            trained.model.save(&out.join("model.txt"), cfg.model.loss.name())?;
            save(&out.join("metrics.csv"), &metrics_csv(&evaluate(&cfg, &trained.model, &data.test)?))?;
            if let Some(state) = &trained.state {
                save(&out.join("trace.csv"), &trace_csv(state))?;
            }
            let line = boundary_points(&trained.model, &data.train);
            if !line.is_empty() {
                save(&out.join("boundary.csv"), &xy_csv(&line))?;
            }
        }
        Command::Eval { common, model } => {
            let (cfg, out) = load_config(&common)?;
            let (model, _) = LinearModel::load(&model)?;
            let source = load_source(&cfg)?;
            let data = prepare_repeat(&cfg, &source, 0)?;
            save(&out.join("eval.csv"), &metrics_csv(&evaluate(&cfg, &model, &data.test)?))?;
        }
        Command::Grid(common) => {
            let (cfg, out) = load_config(&common)?;
            let source = load_source(&cfg)?;
            let data = prepare_repeat(&cfg, &source, 0)?;
            let val = data
                .val
                .as_ref()
                .ok_or_else(|| SorrError::Config("grid search needs a validation split".into()))?;
            let g = harness::grid_search(&cfg, &data.train, val, cfg.seed)?;
            save(&out.join("grid.csv"), &grid_csv(&g.table))?;
            println!("best: C={} k={} m={}", g.best.c, g.best.k, g.best.m);
        }
        Command::Experiment(common) => {
            let (cfg, out) = load_config(&common)?;
            let report = harness::run_experiment(&cfg)?;
            harness::write_report(&report, &out)?;
            print!("{}", summary_csv(&report.summary));
        }
        Command::Sweep(common) => {
            let (cfg, out) = load_config(&common)?;
            let spec = cfg
                .sweep
                .clone()
                .ok_or_else(|| SorrError::Config("config has no [sweep] section".into()))?;
            let rows = harness::tendency_sweep(&cfg, &spec.k, &spec.m)?;
            save(&out.join("sweep.csv"), &curve_csv(&rows))?;
            let aorr: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.series == "aorr")
                .map(|r| (r.m as f64, r.mean))
                .collect();
            let (lo, hi) = aorr
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
            save(&out.join("curve_aorr.csv"), &xy_csv(&aorr))?;
            for r in rows.iter().filter(|r| r.series != "aorr") {
                let flat = [(lo, r.mean), (hi, r.mean)];
                save(&out.join(format!("curve_{}.csv", r.series)), &xy_csv(&flat))?;
            }
        }
        Command::Noise(common) => {
            let (cfg, out) = load_config(&common)?;
            if cfg.noise_levels.is_empty() {
                return Err(SorrError::Config("config has no noise_levels".into()).into());
            }
            let mut table = String::from("p,metric,mean,std,count\n");
            for &p in &cfg.noise_levels {
                let mut c = cfg.clone();
                let map = c.dataset.noise.as_ref().and_then(|n| n.map.clone());
                c.dataset.noise = Some(harness::NoiseSpec { p, map });
                c.validate()?;
                let report = harness::run_experiment(&c)?;
                save(&out.join(format!("p{p}")).join("per_repeat.csv"), &per_repeat_csv(&report))?;
                for r in &report.summary {
                    table.push_str(&format!("{p},{},{},{},{}\n", r.metric, r.mean, r.std, r.count));
                }
            }
            save(&out.join("noise.csv"), &table)?;
            print!("{table}");
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<SorrError>() {
        Some(e) if e.is_divergence() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

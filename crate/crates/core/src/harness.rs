//! Experiment protocol: configuration, repeated splits, validation grid
//! search, baselines, tendency sweeps and CSV reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::data::{
    asymmetric_label_noise, gen_gaussian_mixture, load_descriptor, load_mnist, monk_dataset, split,
    synth_preset, FlipMap, LabeledDataset, Standardizer,
};
use crate::error::{Result, SorrError};
use crate::losses::IndividualLoss;
use crate::metrics::{
    average_precision, error_rate, topk_accuracy, topk_multilabel_accuracy, PredictionBatch,
};
use crate::model::{add_augmented, affine, LinearModel};
use crate::optimizer::{
    dca_minimize, train_tkml, DcaConfig, DcaState, Initialization, StepSchedule, TopSelection,
    UpdateScaling,
};

/// Environment variable naming the dataset root.
pub const DATA_DIR_ENV: &str = "SORR_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Binary,
    Multiclass,
    Multilabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Average of the `(m, k)` ranked range of individual losses.
    Aorr,
    /// AoRR with `k = n`, `m = 0`.
    Average,
    /// AoRR with `k = 1`, `m = 0`.
    Maximum,
    /// AoRR with `m = 0`.
    Atk,
    /// Top-k multi-label loss.
    Tkml,
    /// Independent per-label logistic regression.
    Lr,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Aorr => "aorr",
            Method::Average => "average",
            Method::Maximum => "maximum",
            Method::Atk => "atk",
            Method::Tkml => "tkml",
            Method::Lr => "lr",
        }
    }
}

/// A sample count: an integer, `"n"`, or a fraction of the training size
/// such as `"0.1n"` (rounded down).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum CountToken {
    Exact(usize),
    Expr(String),
}

impl CountToken {
    pub fn resolve(&self, n: usize) -> Result<usize> {
        match self {
            CountToken::Exact(v) => Ok(*v),
            CountToken::Expr(s) => scaled(s, 'n', n),
        }
    }
}

/// Candidate `m` values: an integer, a fraction of `k` such as `"0.5k"`, or
/// `"all"` for every integer in `[1, k)`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MToken {
    Exact(usize),
    Expr(String),
}

impl MToken {
    pub fn resolve(&self, k: usize) -> Result<Vec<usize>> {
        match self {
            MToken::Exact(v) => Ok(vec![*v]),
            MToken::Expr(s) if s.trim() == "all" => Ok((1..k).collect()),
            MToken::Expr(s) => Ok(vec![scaled(s, 'k', k)?]),
        }
    }
}

fn scaled(token: &str, unit: char, base: usize) -> Result<usize> {
    let t = token.trim();
    let bad = || SorrError::Config(format!("cannot read '{token}' as a count relative to {unit}"));
    if let Ok(v) = t.parse::<usize>() {
        return Ok(v);
    }
    let coef = t.strip_suffix(unit).ok_or_else(bad)?.trim();
    let coef: f64 = if coef.is_empty() { 1.0 } else { coef.parse().map_err(|_| bad())? };
    if !(coef.is_finite() && coef >= 0.0) {
        return Err(bad());
    }
    // Guard against 0.3 * 10 = 2.9999999999999996.
    Ok((coef * base as f64 + 1e-9).floor() as usize)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub p: f64,
    /// `"from>to"` pairs; defaults to the digit confusions.
    #[serde(default)]
    pub map: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    /// Built-in source: `monk`, `mnist`, or a synthetic preset name.
    #[serde(default)]
    pub preset: Option<String>,
    /// Descriptor file, relative to the data root unless absolute.
    #[serde(default)]
    pub descriptor: Option<PathBuf>,
    /// Data root; relative paths resolve against the config file.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    /// Synthetic presets: flipped labels in the outlier class.
    #[serde(default)]
    pub outliers: usize,
    /// Synthetic presets: generator seed.
    #[serde(default)]
    pub seed: u64,
    /// Multi-class training-label corruption.
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub method: Method,
    #[serde(default = "default_loss")]
    pub loss: IndividualLoss,
    #[serde(default)]
    pub k: Option<CountToken>,
    #[serde(default)]
    pub m: Option<usize>,
}

fn default_loss() -> IndividualLoss {
    IndividualLoss::Logistic
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSpec {
    pub outer_epochs: usize,
    pub inner_epochs: usize,
    pub learning_rate: f64,
    pub c: f64,
    pub minibatch: usize,
    pub adaptive_k: bool,
    pub update_scaling: UpdateScaling,
    pub schedule: StepSchedule,
    pub selection: TopSelection,
    pub init: Initialization,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        let d = DcaConfig::default();
        OptimizerSpec {
            outer_epochs: d.outer_epochs,
            inner_epochs: d.inner_epochs,
            learning_rate: d.learning_rate,
            c: d.c,
            minibatch: d.minibatch,
            adaptive_k: d.adaptive_k,
            update_scaling: d.update_scaling,
            schedule: d.schedule,
            selection: d.selection,
            init: d.init,
        }
    }
}

impl OptimizerSpec {
    pub fn dca(&self, hp: HyperParams, seed: u64) -> DcaConfig {
        DcaConfig {
            outer_epochs: self.outer_epochs,
            inner_epochs: self.inner_epochs,
            learning_rate: self.learning_rate,
            c: hp.c,
            k: hp.k,
            m: hp.m,
            seed,
            adaptive_k: self.adaptive_k,
            update_scaling: self.update_scaling,
            minibatch: self.minibatch,
            schedule: self.schedule,
            selection: self.selection,
            init: self.init,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub c: Vec<f64>,
    #[serde(default)]
    pub k: Vec<CountToken>,
    #[serde(default)]
    pub m: Vec<MToken>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub k: CountToken,
    pub m: Vec<MToken>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    /// Cut-offs for top-k accuracies; defaults to 1..=5 (capped by the label count).
    pub topk: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: Task,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default)]
    pub seed: u64,
    /// Standardize features with training-split statistics.
    #[serde(default)]
    pub standardize: bool,
    /// Record diverged repeats and leave them out of the summary instead of
    /// aborting.
    #[serde(default)]
    pub exclude_diverged: bool,
    pub dataset: DatasetSpec,
    pub model: ModelSpec,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    /// Noise rates for the `noise` command.
    #[serde(default)]
    pub noise_levels: Vec<f64>,
    #[serde(default)]
    pub eval: EvalSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_repeats() -> usize {
    10
}

fn default_split() -> [f64; 3] {
    [0.5, 0.25, 0.25]
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| SorrError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| SorrError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::from_toml(&text, &base).map_err(|e| match e {
            SorrError::Config(msg) => SorrError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(SorrError::Config(m));
        if self.repeats == 0 {
            return cfg_err("repeats must be positive".into());
        }
        if self.dataset.preset.is_some() == self.dataset.descriptor.is_some() {
            return cfg_err("dataset needs exactly one of 'preset' or 'descriptor'".into());
        }
        let method = self.model.method;
        match (self.task, method) {
            (Task::Binary, Method::Tkml | Method::Lr) => {
                return cfg_err(format!("method '{}' needs a multi-class or multi-label task", method.name()))
            }
            (Task::Multiclass | Task::Multilabel, Method::Tkml | Method::Lr) => {}
            (Task::Multiclass | Task::Multilabel, _) => {
                return cfg_err(format!("method '{}' needs a binary task", method.name()))
            }
            _ => {}
        }
        if self.dataset.noise.is_some() && self.task != Task::Multiclass {
            return cfg_err("label noise applies to multi-class tasks only".into());
        }
        if let Some(grid) = &self.grid {
            if grid.c.iter().any(|c| !(*c > 0.0)) {
                return cfg_err("grid C values must be positive".into());
            }
        }
        self.optimizer
            .dca(HyperParams { c: self.optimizer.c, k: 1, m: 0 }, 0)
            .validate()
            .map_err(|e| SorrError::Config(e.to_string()))
    }

    /// Config-relative path.
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Dataset root: `dataset.data_dir`, else `$SORR_DATA_DIR`, else `./data`.
    pub fn data_root(&self) -> PathBuf {
        if let Some(d) = &self.dataset.data_dir {
            return self.resolve(d);
        }
        match std::env::var_os(DATA_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => PathBuf::from("data"),
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        match &self.output_dir {
            Some(d) => self.resolve(d),
            None => PathBuf::from("results").join(&self.name),
        }
    }

    fn ratios(&self) -> (f64, f64, f64) {
        (self.split[0], self.split[1], self.split[2])
    }

    fn repeat_seed(&self, repeat: usize) -> u64 {
        self.seed.wrapping_add(repeat as u64)
    }
}

/// Where train/validation/test data come from.
pub enum DataSource {
    /// One dataset, re-split every repeat.
    Pool(LabeledDataset),
    /// As `Pool`, with standardization requested by the dataset descriptor.
    StandardizedPool(LabeledDataset),
    /// Fixed training and test sets; no validation split.
    Fixed { train: LabeledDataset, test: LabeledDataset },
}

pub fn load_source(cfg: &ExperimentConfig) -> Result<DataSource> {
    let spec = &cfg.dataset;
    if let Some(desc) = &spec.descriptor {
        let path = if desc.is_absolute() { desc.clone() } else { cfg.data_root().join(desc) };
        let descriptor = load_descriptor(&path)?;
        let ds = descriptor.load()?;
        return Ok(if descriptor.standardize {
            DataSource::StandardizedPool(ds)
        } else {
            DataSource::Pool(ds)
        });
    }
    let preset = spec.preset.as_deref().expect("validated");
    match preset {
        "monk" => Ok(DataSource::Pool(monk_dataset()?)),
        "mnist" => {
            let dir = cfg.data_root().join("mnist");
            Ok(DataSource::Fixed {
                train: load_mnist(&dir, true)?,
                test: load_mnist(&dir, false)?,
            })
        }
        name => {
            let ds = gen_gaussian_mixture(&synth_preset(name, spec.outliers, spec.seed)?)?;
            Ok(DataSource::Pool(ds.with_name(name)))
        }
    }
}

/// Regularization and range parameters of one training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub c: f64,
    pub k: usize,
    pub m: usize,
}

/// Train/validation/test parts of one repeat, after noise and standardization.
pub struct RepeatData {
    pub train: LabeledDataset,
    pub val: Option<LabeledDataset>,
    pub test: LabeledDataset,
}

pub fn prepare_repeat(cfg: &ExperimentConfig, source: &DataSource, repeat: usize) -> Result<RepeatData> {
    let seed = cfg.repeat_seed(repeat);
    let (mut train, mut val, mut test) = match source {
        DataSource::Pool(ds) | DataSource::StandardizedPool(ds) => {
            let (a, b, c) = split(ds, cfg.ratios(), seed)?;
            (a, Some(b), c)
        }
        DataSource::Fixed { train, test } => (train.clone(), None, test.clone()),
    };
    if let Some(noise) = &cfg.dataset.noise {
        let map = match &noise.map {
            Some(text) => FlipMap::parse(text)?,
            None => FlipMap::digits(),
        };
        train = asymmetric_label_noise(&train, noise.p, &map, seed ^ 0x6e6f_6973_65)?;
    }
    if cfg.standardize || matches!(source, DataSource::StandardizedPool(_)) {
        let st = Standardizer::fit(&train);
        train = st.apply(&train)?;
        test = st.apply(&test)?;
        val = val.map(|v| st.apply(&v)).transpose()?;
    }
    Ok(RepeatData { train, val, test })
}

/// Candidate hyperparameters for `method` on a training set of size `n`.
pub fn candidate_grid(cfg: &ExperimentConfig, n: usize, labels: usize) -> Result<Vec<HyperParams>> {
    let method = cfg.model.method;
    let base_k = match &cfg.model.k {
        Some(t) => t.resolve(n)?,
        None => match method {
            Method::Tkml => 1,
            _ => n,
        },
    };
    let base_m = cfg.model.m.unwrap_or(0);
    let (cs, ks, ms) = match &cfg.grid {
        None => (vec![cfg.optimizer.c], vec![base_k], None),
        Some(g) => {
            let cs = if g.c.is_empty() { vec![cfg.optimizer.c] } else { g.c.clone() };
            let ks = if g.k.is_empty() {
                vec![base_k]
            } else {
                g.k.iter().map(|t| t.resolve(n)).collect::<Result<Vec<_>>>()?
            };
            let ms = (!g.m.is_empty()).then(|| g.m.clone());
            (cs, ks, ms)
        }
    };
    let ks: Vec<usize> = match method {
        Method::Average => vec![n],
        Method::Maximum => vec![1],
        Method::Lr => vec![1],
        _ => ks,
    };
    let mut out = Vec::new();
    for &c in &cs {
        for &k in &ks {
            let m_values: Vec<usize> = match method {
                Method::Aorr => match &ms {
                    Some(tokens) => {
                        let mut v = Vec::new();
                        for t in tokens {
                            v.extend(t.resolve(k)?);
                        }
                        v.sort_unstable();
                        v.dedup();
                        v
                    }
                    None => vec![base_m],
                },
                _ => vec![0],
            };
            for m in m_values {
                let valid = match method {
                    Method::Tkml => k >= 1 && k < labels,
                    Method::Lr => true,
                    _ => m < k && k >= 1 && k <= n,
                };
                if valid {
                    out.push(HyperParams { c, k, m });
                }
            }
        }
    }
    if out.is_empty() {
        return Err(SorrError::Config(format!(
            "no valid hyperparameter combination for method '{}' with n={n}",
            method.name()
        )));
    }
    Ok(out)
}

/// Result of training once.
pub struct Trained {
    pub model: LinearModel,
    pub state: Option<DcaState>,
}

pub fn train_once(cfg: &ExperimentConfig, train: &LabeledDataset, hp: HyperParams, seed: u64) -> Result<Trained> {
    let dca = cfg.optimizer.dca(hp, seed);
    match cfg.model.method {
        Method::Tkml => {
            let (model, state) = train_tkml(train, &dca, None)?;
            Ok(Trained { model, state: Some(state) })
        }
        Method::Lr => Ok(Trained {
            model: lr_baseline(train, &dca)?,
            state: None,
        }),
        _ => {
            let (model, state) = dca_minimize(train, cfg.model.loss, &dca, None)?;
            Ok(Trained { model, state: Some(state) })
        }
    }
}

/// Independent per-label logistic regression trained by minibatch SGD on
/// `mean_i sum_j log2(1 + exp(-y_ij theta_j^T x_i)) + ||theta||^2 / 2C`, with
/// `y_ij = +1` iff label `j` is in the sample's set. Uses the step count,
/// learning rate, minibatch size and seed of `config`; zero epochs leave the
/// all-zero model.
pub fn lr_baseline(train: &LabeledDataset, config: &DcaConfig) -> Result<LinearModel> {
    use rand::{Rng, SeedableRng};
    DcaConfig { outer_epochs: 1, inner_epochs: 1, ..config.clone() }.validate()?;
    let (sets, l) = train.label_sets()?;
    let d = train.dim();
    let w = d + 1;
    let n = train.len();
    let mut params = vec![0.0; w * l];
    let mut grad = vec![0.0; w * l];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let full = config.minibatch >= n;
    let b = config.minibatch.min(n);
    let reg = if config.c.is_infinite() { 0.0 } else { 1.0 / config.c };
    let loss = IndividualLoss::Logistic;
    let steps = config.outer_epochs * config.inner_epochs;
    let per_outer = config.inner_epochs.max(1);
    for step in 0..steps {
        grad.fill(0.0);
        for t in 0..b {
            let i = if full { t } else { rng.random_range(0..n) };
            let x = train.row(i);
            for j in 0..l {
                let y = if sets[i].contains(j) { 1.0 } else { -1.0 };
                let col = &params[j * w..(j + 1) * w];
                let g = loss.derivative(y * affine(col, x)) * y;
                add_augmented(&mut grad[j * w..(j + 1) * w], x, g);
            }
        }
        let eta = match config.schedule {
            StepSchedule::Constant => config.learning_rate,
            StepSchedule::InvSqrt => config.learning_rate / (((step % per_outer) + 1) as f64).sqrt(),
        };
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= eta * (g / b as f64 + reg * *p);
        }
        let norm = params.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > crate::optimizer::DIVERGENCE_NORM {
            return Err(SorrError::Divergence {
                outer: step / per_outer,
                inner: step % per_outer,
                reason: format!("parameter norm {norm:.3e}"),
            });
        }
    }
    LinearModel::from_params(params, d, l)
}

/// Named metric values of one evaluation, in a fixed order.
pub type Metrics = Vec<(String, f64)>;

fn topk_list(cfg: &ExperimentConfig, labels: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = if cfg.eval.topk.is_empty() { (1..=5).collect() } else { cfg.eval.topk.clone() };
    let cap = if cfg.task == Task::Multilabel { labels - 1 } else { labels };
    ks.retain(|&k| k >= 1 && k <= cap);
    ks
}

/// Test metrics, all in percent.
pub fn evaluate(cfg: &ExperimentConfig, model: &LinearModel, ds: &LabeledDataset) -> Result<Metrics> {
    let batch = PredictionBatch::from_model(model, ds)?;
    let pct = |v: f64| 100.0 * v;
    let mut out = Vec::new();
    match cfg.task {
        Task::Binary => out.push(("error".to_string(), pct(error_rate(&batch)?))),
        Task::Multiclass => {
            for k in topk_list(cfg, batch.num_labels()) {
                out.push((format!("top{k}_accuracy"), pct(topk_accuracy(&batch, k)?)));
            }
        }
        Task::Multilabel => {
            for k in topk_list(cfg, batch.num_labels()) {
                out.push((format!("top{k}_multilabel_accuracy"), pct(topk_multilabel_accuracy(&batch, k)?)));
            }
            out.push(("average_precision".to_string(), pct(average_precision(&batch)?)));
        }
    }
    Ok(out)
}

/// Validation loss used for model selection (lower is better).
fn selection_score(cfg: &ExperimentConfig, model: &LinearModel, ds: &LabeledDataset, hp: HyperParams) -> Result<f64> {
    let batch = PredictionBatch::from_model(model, ds)?;
    match cfg.task {
        Task::Binary => error_rate(&batch),
        Task::Multiclass => Ok(1.0 - topk_accuracy(&batch, 1)?),
        Task::Multilabel => {
            let k = if cfg.model.method == Method::Tkml {
                hp.k
            } else {
                match &cfg.model.k {
                    Some(t) => t.resolve(ds.len())?.clamp(1, batch.num_labels() - 1),
                    None => 1,
                }
            };
            Ok(1.0 - topk_multilabel_accuracy(&batch, k)?)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub hp: HyperParams,
    /// `None` when training diverged.
    pub val_score: Option<f64>,
}

pub struct GridOutcome {
    pub best: HyperParams,
    pub best_model: Trained,
    pub table: Vec<GridRow>,
}

/// `a` is preferred over `b` on equal validation score: smaller C, then
/// larger m, then smaller k.
fn tie_prefers(a: HyperParams, b: HyperParams) -> bool {
    (a.c, std::cmp::Reverse(a.m), a.k) < (b.c, std::cmp::Reverse(b.m), b.k)
}

/// Trains every candidate on `train` and keeps the best on `val`.
pub fn grid_search(
    cfg: &ExperimentConfig,
    train: &LabeledDataset,
    val: &LabeledDataset,
    seed: u64,
) -> Result<GridOutcome> {
    let labels = match train.label_sets() {
        Ok((_, l)) => l,
        Err(_) => 1,
    };
    let grid = candidate_grid(cfg, train.len(), labels)?;
    let mut table = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, HyperParams, Trained)> = None;
    for hp in grid {
        match train_once(cfg, train, hp, seed) {
            Ok(trained) => {
                let score = selection_score(cfg, &trained.model, val, hp)?;
                table.push(GridRow { hp, val_score: Some(score) });
                let better = match &best {
                    None => true,
                    Some((s, b, _)) => score < *s || (score == *s && tie_prefers(hp, *b)),
                };
                if better {
                    best = Some((score, hp, trained));
                }
            }
            Err(e) if e.is_divergence() => {
                log::warn!("grid point C={} k={} m={} diverged: {e}", hp.c, hp.k, hp.m);
                table.push(GridRow { hp, val_score: None });
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some((_, hp, trained)) => Ok(GridOutcome { best: hp, best_model: trained, table }),
        None => Err(SorrError::Divergence {
            outer: 0,
            inner: 0,
            reason: "every grid point diverged".into(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub hp: Option<HyperParams>,
    /// Empty when the repeat diverged.
    pub metrics: Metrics,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single repeat.
    pub std: f64,
    pub count: usize,
}

pub struct Report {
    pub repeats: Vec<RepeatResult>,
    pub summary: Vec<SummaryRow>,
}

impl Report {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.summary.iter().find(|r| r.metric == metric).map(|r| r.mean)
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(repeats: &[RepeatResult]) -> Vec<SummaryRow> {
    let Some(first) = repeats.iter().find(|r| !r.diverged) else {
        return Vec::new();
    };
    first
        .metrics
        .iter()
        .enumerate()
        .map(|(j, (name, _))| {
            let vals: Vec<f64> = repeats
                .iter()
                .filter(|r| !r.diverged)
                .map(|r| r.metrics[j].1)
                .collect();
            let (mean, std) = mean_std(&vals);
            SummaryRow { metric: name.clone(), mean, std, count: vals.len() }
        })
        .collect()
}

/// Runs one repeat: split, select on validation (when there is a grid and
/// a validation part), evaluate on test.
pub fn run_repeat(cfg: &ExperimentConfig, source: &DataSource, repeat: usize) -> Result<(RepeatResult, Vec<GridRow>)> {
    let seed = cfg.repeat_seed(repeat);
    let data = prepare_repeat(cfg, source, repeat)?;
    let train_seed = seed ^ 0x7472_6169_6e;
    let outcome = match (&cfg.grid, &data.val) {
        (Some(_), Some(val)) => grid_search(cfg, &data.train, val, train_seed).map(|g| (g.best, g.best_model, g.table)),
        (Some(_), None) => {
            return Err(SorrError::Config("grid search needs a validation split; this dataset has a fixed train/test split".into()))
        }
        (None, _) => {
            let labels = data.train.label_sets().map(|(_, l)| l).unwrap_or(1);
            let hp = candidate_grid(cfg, data.train.len(), labels)?[0];
            train_once(cfg, &data.train, hp, train_seed).map(|t| (hp, t, Vec::new()))
        }
    };
    match outcome {
        Ok((hp, trained, table)) => {
            let metrics = evaluate(cfg, &trained.model, &data.test)?;
            Ok((RepeatResult { repeat, seed, hp: Some(hp), metrics, diverged: false }, table))
        }
        Err(e) if e.is_divergence() && cfg.exclude_diverged => {
            log::warn!("repeat {repeat} diverged and is excluded: {e}");
            Ok((RepeatResult { repeat, seed, hp: None, metrics: Vec::new(), diverged: true }, Vec::new()))
        }
        Err(e) => Err(e),
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    let source = load_source(cfg)?;
    run_experiment_on(cfg, &source)
}

pub fn run_experiment_on(cfg: &ExperimentConfig, source: &DataSource) -> Result<Report> {
    let mut repeats = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        let (res, _) = run_repeat(cfg, source, r)?;
        log::info!("repeat {r}: {:?} {:?}", res.hp, res.metrics);
        repeats.push(res);
    }
    if repeats.iter().all(|r| r.diverged) {
        return Err(SorrError::Divergence { outer: 0, inner: 0, reason: "every repeat diverged".into() });
    }
    let summary = summarize(&repeats);
    Ok(Report { repeats, summary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub series: String,
    pub m: usize,
    pub mean: f64,
    pub std: f64,
}

/// Test error of AoRR with fixed `k` for each `m`, plus reference rows for
/// the average, maximum and AT_k aggregates. Binary tasks only.
pub fn tendency_sweep(cfg: &ExperimentConfig, k: &CountToken, m_values: &[MToken]) -> Result<Vec<CurveRow>> {
    if cfg.task != Task::Binary {
        return Err(SorrError::Config("tendency sweeps need a binary task".into()));
    }
    let source = load_source(cfg)?;
    let n_train = match &source {
        DataSource::Pool(ds) | DataSource::StandardizedPool(ds) => split(ds, cfg.ratios(), cfg.repeat_seed(0))?.0.len(),
        DataSource::Fixed { train, .. } => train.len(),
    };
    let k = k.resolve(n_train)?;
    if k < 2 {
        return Err(SorrError::Config(format!("sweep needs k >= 2, got {k}")));
    }
    let mut ms = Vec::new();
    for t in m_values {
        ms.extend(t.resolve(k)?);
    }
    ms.sort_unstable();
    ms.dedup();
    let run = |method: Method, k: usize, m: usize| -> Result<(f64, f64)> {
        let mut c = cfg.clone();
        c.grid = None;
        c.model.method = method;
        c.model.k = Some(CountToken::Exact(k));
        c.model.m = Some(m);
        let report = run_experiment_on(&c, &source)?;
        let vals: Vec<f64> = report
            .repeats
            .iter()
            .filter(|r| !r.diverged)
            .map(|r| r.metrics[0].1)
            .collect();
        Ok(mean_std(&vals))
    };
    let mut rows = Vec::new();
    for &m in &ms {
        if m >= k {
            return Err(SorrError::Config(format!("sweep m={m} must be below k={k}")));
        }
        let (mean, std) = if m == 0 { run(Method::Atk, k, 0)? } else { run(Method::Aorr, k, m)? };
        rows.push(CurveRow { series: "aorr".into(), m, mean, std });
    }
    for (series, method, kk) in [("average", Method::Average, n_train), ("maximum", Method::Maximum, 1), ("atk", Method::Atk, k)] {
        let (mean, std) = run(method, kk, 0)?;
        rows.push(CurveRow { series: series.into(), m: 0, mean, std });
    }
    Ok(rows)
}

fn fmt_hp(hp: Option<HyperParams>) -> [String; 3] {
    match hp {
        Some(h) => [h.c.to_string(), h.k.to_string(), h.m.to_string()],
        None => [String::new(), String::new(), String::new()],
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| SorrError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| SorrError::io(path, e))
}

/// `per_repeat.csv`: `repeat,seed,status,c,k,m,<metrics...>`.
pub fn per_repeat_csv(report: &Report) -> String {
    let names: Vec<String> = report
        .repeats
        .iter()
        .find(|r| !r.diverged)
        .map(|r| r.metrics.iter().map(|(n, _)| n.clone()).collect())
        .unwrap_or_default();
    let mut s = String::from("repeat,seed,status,c,k,m");
    for n in &names {
        s.push(',');
        s.push_str(n);
    }
    s.push('\n');
    for r in &report.repeats {
        let [c, k, m] = fmt_hp(r.hp);
        let status = if r.diverged { "diverged" } else { "ok" };
        write!(s, "{},{},{status},{c},{k},{m}", r.repeat, r.seed).unwrap();
        if r.diverged {
            s.push_str(&",".repeat(names.len()));
        } else {
            for (_, v) in &r.metrics {
                write!(s, ",{v}").unwrap();
            }
        }
        s.push('\n');
    }
    s
}

/// `summary.csv`: `metric,mean,std,count`.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("metric,mean,std,count\n");
    for r in rows {
        writeln!(s, "{},{},{},{}", r.metric, r.mean, r.std, r.count).unwrap();
    }
    s
}

pub fn grid_csv(rows: &[GridRow]) -> String {
    let mut s = String::from("c,k,m,val_score\n");
    for r in rows {
        let score = r.val_score.map(|v| v.to_string()).unwrap_or_else(|| "diverged".into());
        writeln!(s, "{},{},{},{score}", r.hp.c, r.hp.k, r.hp.m).unwrap();
    }
    s
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut s = String::from("series,m,mean,std\n");
    for r in rows {
        writeln!(s, "{},{},{},{}", r.series, r.m, r.mean, r.std).unwrap();
    }
    s
}

/// Two-column `x,y` file for one curve.
pub fn xy_csv(points: &[(f64, f64)]) -> String {
    let mut s = String::from("x,y\n");
    for (x, y) in points {
        writeln!(s, "{x},{y}").unwrap();
    }
    s
}

pub fn trace_csv(state: &DcaState) -> String {
    let mut s = String::from("outer,objective,regularized,k\n");
    for (i, (o, r)) in state.objective_trace.iter().zip(&state.regularized_trace).enumerate() {
        let k = if i == 0 { state.k_trace.first() } else { state.k_trace.get(i - 1) };
        let k = k.map(|v| v.to_string()).unwrap_or_default();
        writeln!(s, "{i},{o},{r},{k}").unwrap();
    }
    s
}

pub fn write_report(report: &Report, dir: &Path) -> Result<()> {
    write_text(&dir.join("per_repeat.csv"), &per_repeat_csv(report))?;
    write_text(&dir.join("summary.csv"), &summary_csv(&report.summary))
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    write_text(path, text)
}

/// Endpoints of the zero-level line of a 2-D binary model across the
/// feature range of `ds`, sampled at 50 points; empty for other shapes.
pub fn boundary_points(model: &LinearModel, ds: &LabeledDataset) -> Vec<(f64, f64)> {
    if model.dim() != 2 || model.outputs() != 1 {
        return Vec::new();
    }
    let w = model.params();
    let col = ds.features().column(0);
    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if w[1] == 0.0 {
        return Vec::new();
    }
    (0..50)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / 49.0;
            (x, -(w[0] * x + w[2]) / w[1])
        })
        .collect()
}

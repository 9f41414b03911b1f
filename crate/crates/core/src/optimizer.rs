//! Difference-of-convex minimization of ranked-range objectives.
//!
//! The objective `phi_k(S) - phi_m(S) + ||theta||^2 / 2C` is split into the
//! convex part `phi_k + reg` and the convex part `phi_m` that is subtracted.
//! Each outer iteration linearizes `phi_m` at the current iterate and runs a
//! stochastic subgradient solver on the resulting convex majorant, with
//! `phi_k` written variationally as `min_lambda k*lambda + sum [s_i - lambda]_+`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Result, SorrError};
use crate::losses::{evaluate_aggregate, AggregateSpec, IndividualLoss};
use crate::model::{add_augmented, affine, LinearModel};
use crate::ranked_range::{kth_largest, range_sum, top_indices, RangeSpec, ValueSet};
use crate::tkml::{GapScratch, LabelSet};

/// Parameter norm beyond which a run is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e8;

/// How the single-sample inner update is normalized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateScaling {
    /// `k` and the linearization term enter unscaled, as in the single-sample
    /// update written for the full sum.
    Unscaled,
    /// `k` and the linearization term are divided by `n`, making the sampled
    /// gradient unbiased for `(1/n)` times the inner objective.
    #[default]
    PerSampleScaled,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepSchedule {
    #[default]
    Constant,
    /// `eta / sqrt(l + 1)`, with `l` restarting every outer iteration.
    InvSqrt,
}

/// Which samples make up the subgradient of `phi_m`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopSelection {
    /// The `m` highest-ranked samples under the crate-wide tie-break. This is
    /// a subgradient of `phi_m` everywhere.
    #[default]
    Ranked,
    /// Only samples strictly above `s_[m]`; at most `m - 1` of them when the
    /// values are distinct. Kept for auditing the strict-indicator reading.
    Strict,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Initialization {
    #[default]
    Zeros,
    Gaussian { std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DcaConfig {
    pub outer_epochs: usize,
    /// Stochastic steps per outer iteration.
    pub inner_epochs: usize,
    pub learning_rate: f64,
    /// Regularization constant; `inf` disables the penalty.
    pub c: f64,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub adaptive_k: bool,
    pub update_scaling: UpdateScaling,
    /// Samples per inner step; values `>= n` give the deterministic full-batch
    /// solver, which also keeps the best inner iterate of the majorant.
    pub minibatch: usize,
    pub schedule: StepSchedule,
    pub selection: TopSelection,
    pub init: Initialization,
}

impl Default for DcaConfig {
    fn default() -> Self {
        DcaConfig {
            outer_epochs: 5,
            inner_epochs: 1000,
            learning_rate: 0.01,
            c: 1e4,
            k: 1,
            m: 0,
            seed: 0,
            adaptive_k: false,
            update_scaling: UpdateScaling::default(),
            minibatch: 1,
            schedule: StepSchedule::default(),
            selection: TopSelection::default(),
            init: Initialization::default(),
        }
    }
}

impl DcaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_epochs == 0 || self.inner_epochs == 0 {
            return Err(SorrError::param("outer and inner epoch counts must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(SorrError::param(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.c > 0.0) {
            return Err(SorrError::param(format!("C must be positive, got {}", self.c)));
        }
        if self.minibatch == 0 {
            return Err(SorrError::param("minibatch must be positive"));
        }
        if let Initialization::Gaussian { std } = self.init {
            if !(std.is_finite() && std >= 0.0) {
                return Err(SorrError::param(format!("initial std must be >= 0, got {std}")));
            }
        }
        Ok(())
    }

    fn reg_weight(&self) -> f64 {
        if self.c.is_infinite() {
            0.0
        } else {
            1.0 / self.c
        }
    }

    /// `||theta||^2 / 2C`.
    pub fn regularizer(&self, params: &[f64]) -> f64 {
        0.5 * self.reg_weight() * params.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Loop variables of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct DcaState {
    pub theta: Vec<f64>,
    pub lambda: f64,
    /// Subgradient of the subtracted part at the start of the current outer
    /// iteration, as a raw sum over samples.
    pub theta_hat: Vec<f64>,
    pub outer_iter: usize,
    pub inner_iter: usize,
    /// Full-batch ranked-range objective, before training and after each
    /// outer iteration.
    pub objective_trace: Vec<f64>,
    /// `objective / n + regularizer`, aligned with `objective_trace`.
    pub regularized_trace: Vec<f64>,
    /// Upper range index in effect during each outer iteration.
    pub k_trace: Vec<usize>,
}

impl DcaState {
    pub fn new(theta: Vec<f64>) -> Self {
        let p = theta.len();
        DcaState {
            theta,
            lambda: 0.0,
            theta_hat: vec![0.0; p],
            outer_iter: 0,
            inner_iter: 0,
            objective_trace: Vec::new(),
            regularized_trace: Vec::new(),
            k_trace: Vec::new(),
        }
    }
}

/// A ranked-range objective in the form the DCA driver needs.
///
/// All data terms are sums over samples; the driver applies the `1/n`
/// normalization dictated by [`UpdateScaling`].
pub trait DcaProblem {
    fn num_params(&self) -> usize;
    fn num_samples(&self) -> usize;

    /// Hook run before each outer iteration (used by the adaptive-k schedule).
    fn begin_outer(&mut self, _params: &[f64]) {}

    /// Current upper range index, for tracing.
    fn current_k(&self) -> usize;

    /// Full-batch objective recorded in the trace.
    fn objective(&self, params: &[f64]) -> f64;

    /// Full-batch value of the convex part `g` without the regularizer.
    fn convex_part(&self, params: &[f64]) -> f64;

    /// Writes a subgradient of the subtracted convex part into `out`.
    fn concave_subgradient(&self, params: &[f64], out: &mut [f64]);

    /// Count `k` multiplying the threshold in the variational form, or `None`
    /// when the problem has no threshold variable.
    fn threshold_count(&self) -> Option<usize>;

    /// Whether the objective is already a per-sample average, in which case
    /// both scaling modes coincide.
    fn sample_averaged(&self) -> bool {
        false
    }

    /// Adds the sum over `batch` of per-sample subgradients of the convex part
    /// into `grad` and returns how many samples had a loss above `lambda`.
    fn accumulate_batch(&self, params: &[f64], lambda: f64, batch: &[usize], grad: &mut [f64]) -> usize;
}

/// AoRR over individual binary-classification losses of a linear scorer.
pub struct AorrProblem<'a> {
    rows: &'a [f64],
    labels: &'a [i8],
    dim: usize,
    loss: IndividualLoss,
    m: usize,
    k: usize,
    adaptive: bool,
    selection: TopSelection,
}

impl<'a> AorrProblem<'a> {
    pub fn new(dataset: &'a LabeledDataset, loss: IndividualLoss, config: &DcaConfig) -> Result<Self> {
        let labels = dataset.binary_labels()?;
        let n = dataset.len();
        let k = if config.adaptive_k { n } else { config.k };
        RangeSpec::new(config.m, k).validate(n)?;
        Ok(AorrProblem {
            rows: dataset.features().as_slice().expect("standard layout"),
            labels,
            dim: dataset.dim(),
            loss,
            m: config.m,
            k,
            adaptive: config.adaptive_k,
            selection: config.selection,
        })
    }

    #[inline]
    fn row(&self, i: usize) -> &'a [f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    fn margin(&self, params: &[f64], i: usize) -> f64 {
        f64::from(self.labels[i]) * affine(params, self.row(i))
    }

    pub fn losses(&self, params: &[f64]) -> Vec<f64> {
        (0..self.labels.len())
            .map(|i| self.loss.eval(self.margin(params, i)))
            .collect()
    }

    fn add_sample_gradient(&self, params: &[f64], i: usize, scale: f64, grad: &mut [f64]) {
        let t = self.margin(params, i);
        let g = self.loss.derivative(t) * f64::from(self.labels[i]) * scale;
        if g != 0.0 {
            add_augmented(grad, self.row(i), g);
        }
    }

    fn accuracy(&self, params: &[f64]) -> f64 {
        let correct = (0..self.labels.len())
            .filter(|&i| self.margin(params, i) > 0.0)
            .count();
        correct as f64 / self.labels.len() as f64
    }
}

impl DcaProblem for AorrProblem<'_> {
    fn num_params(&self) -> usize {
        self.dim + 1
    }

    fn num_samples(&self) -> usize {
        self.labels.len()
    }

    fn begin_outer(&mut self, params: &[f64]) {
        if self.adaptive {
            let n = self.labels.len();
            self.k = adaptive_k(self.accuracy(params), n).max(self.m + 1).min(n);
        }
    }

    fn current_k(&self) -> usize {
        self.k
    }

    fn objective(&self, params: &[f64]) -> f64 {
        range_sum(&self.losses(params), self.m, self.k)
    }

    fn convex_part(&self, params: &[f64]) -> f64 {
        range_sum(&self.losses(params), 0, self.k)
    }

    fn concave_subgradient(&self, params: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        if self.m == 0 {
            return;
        }
        let s = self.losses(params);
        let chosen: Vec<usize> = match self.selection {
            TopSelection::Ranked => top_indices(&s, self.m),
            TopSelection::Strict => {
                let cut = kth_largest(&s, self.m);
                (0..s.len()).filter(|&i| s[i] > cut).collect()
            }
        };
        for i in chosen {
            self.add_sample_gradient(params, i, 1.0, out);
        }
    }

    fn threshold_count(&self) -> Option<usize> {
        Some(self.k)
    }

    fn accumulate_batch(&self, params: &[f64], lambda: f64, batch: &[usize], grad: &mut [f64]) -> usize {
        let mut active = 0;
        for &i in batch {
            let t = self.margin(params, i);
            if self.loss.eval(t) > lambda {
                active += 1;
                let g = self.loss.derivative(t) * f64::from(self.labels[i]);
                if g != 0.0 {
                    add_augmented(grad, self.row(i), g);
                }
            }
        }
        active
    }
}

/// Top-k multi-label objective: the mean over samples of the `(k+1)`-th
/// largest label gap, written as `phi_{k+1} - phi_k` per sample.
pub struct TkmlProblem<'a> {
    rows: &'a [f64],
    sets: &'a [LabelSet],
    dim: usize,
    labels: usize,
    k: usize,
}

impl<'a> TkmlProblem<'a> {
    pub fn new(dataset: &'a LabeledDataset, k: usize) -> Result<Self> {
        let (sets, labels) = dataset.label_sets()?;
        if k == 0 || k >= labels {
            return Err(SorrError::param(format!(
                "top-k multi-label training needs 1 <= k < {labels}, got k={k}"
            )));
        }
        Ok(TkmlProblem {
            rows: dataset.features().as_slice().expect("standard layout"),
            sets,
            dim: dataset.dim(),
            labels,
            k,
        })
    }

    #[inline]
    fn row(&self, i: usize) -> &'a [f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    fn sum_over_samples(&self, params: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut scratch = GapScratch::new(self.labels);
        (0..self.sets.len())
            .map(|i| f(scratch.fill(params, self.dim, self.row(i), &self.sets[i])))
            .sum()
    }
}

impl DcaProblem for TkmlProblem<'_> {
    fn num_params(&self) -> usize {
        (self.dim + 1) * self.labels
    }

    fn num_samples(&self) -> usize {
        self.sets.len()
    }

    fn current_k(&self) -> usize {
        self.k
    }

    fn objective(&self, params: &[f64]) -> f64 {
        self.sum_over_samples(params, |g| kth_largest(g, self.k + 1))
    }

    fn convex_part(&self, params: &[f64]) -> f64 {
        self.sum_over_samples(params, |g| range_sum(g, 0, self.k + 1))
    }

    fn concave_subgradient(&self, params: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut scratch = GapScratch::new(self.labels);
        for i in 0..self.sets.len() {
            let x = self.row(i);
            scratch.fill(params, self.dim, x, &self.sets[i]);
            scratch.add_top_sum_subgradient(self.k, x, 1.0, out);
        }
    }

    fn threshold_count(&self) -> Option<usize> {
        None
    }

    fn sample_averaged(&self) -> bool {
        true
    }

    fn accumulate_batch(&self, params: &[f64], _lambda: f64, batch: &[usize], grad: &mut [f64]) -> usize {
        let mut scratch = GapScratch::new(self.labels);
        for &i in batch {
            let x = self.row(i);
            scratch.fill(params, self.dim, x, &self.sets[i]);
            scratch.add_top_sum_subgradient(self.k + 1, x, 1.0, grad);
        }
        0
    }
}

/// Upper range index for the adaptive schedule: `n` until the training
/// accuracy reaches 70%, then `n/2`, `n/4`, `n/8`, `n/16`, `n/32` at 70%,
/// 80%, 90%, 95% and 99.5%. Never below 1.
pub fn adaptive_k(train_accuracy: f64, n: usize) -> usize {
    let divisor = if train_accuracy >= 0.995 {
        32
    } else if train_accuracy >= 0.95 {
        16
    } else if train_accuracy >= 0.90 {
        8
    } else if train_accuracy >= 0.80 {
        4
    } else if train_accuracy >= 0.70 {
        2
    } else {
        1
    };
    (n / divisor).max(1)
}

/// Subgradient of `phi_m` of the individual losses, summed over the selected
/// samples. Returned in the model's flat parameter layout.
pub fn subgrad_phi_m(
    model: &LinearModel,
    dataset: &LabeledDataset,
    loss: IndividualLoss,
    m: usize,
    selection: TopSelection,
) -> Result<Vec<f64>> {
    if m > dataset.len() {
        return Err(SorrError::param(format!(
            "m={m} exceeds the sample count {}",
            dataset.len()
        )));
    }
    check_binary_model(model, dataset)?;
    // Any k > m satisfies the constructor; only m matters here.
    let config = DcaConfig {
        k: dataset.len(),
        m: m.min(dataset.len().saturating_sub(1)),
        selection,
        ..DcaConfig::default()
    };
    let mut problem = AorrProblem::new(dataset, loss, &config)?;
    problem.m = m;
    let mut out = vec![0.0; model.params().len()];
    problem.concave_subgradient(model.params(), &mut out);
    Ok(out)
}

fn check_binary_model(model: &LinearModel, dataset: &LabeledDataset) -> Result<()> {
    if model.outputs() != 1 || model.dim() != dataset.dim() {
        return Err(SorrError::param(format!(
            "model of shape d={} l={} does not fit binary data with d={}",
            model.dim(),
            model.outputs(),
            dataset.dim()
        )));
    }
    Ok(())
}

/// One inner update on `batch`, using `state.theta_hat` as the linearization.
pub fn inner_sgd_step<P: DcaProblem + ?Sized>(
    problem: &P,
    state: &mut DcaState,
    batch: &[usize],
    config: &DcaConfig,
    step: f64,
) -> Result<()> {
    let mut grad = vec![0.0; state.theta.len()];
    inner_step_with(problem, state, batch, config, step, &mut grad)
}

fn inner_step_with<P: DcaProblem + ?Sized>(
    problem: &P,
    state: &mut DcaState,
    batch: &[usize],
    config: &DcaConfig,
    step: f64,
    grad: &mut [f64],
) -> Result<()> {
    let n = problem.num_samples() as f64;
    let b = batch.len() as f64;
    let scale = if problem.sample_averaged() || config.update_scaling == UpdateScaling::PerSampleScaled {
        1.0 / n
    } else {
        1.0
    };
    grad.fill(0.0);
    let active = problem.accumulate_batch(&state.theta, state.lambda, batch, grad);
    let reg = config.reg_weight();
    for ((g, &th), &hat) in grad.iter_mut().zip(&state.theta).zip(&state.theta_hat) {
        *g = *g / b - scale * hat + reg * th;
    }
    for (th, g) in state.theta.iter_mut().zip(grad.iter()) {
        *th -= step * g;
    }
    if let Some(k) = problem.threshold_count() {
        state.lambda -= step * (scale * k as f64 - active as f64 / b);
    }
    state.inner_iter += 1;
    check_finite(state)
}

fn check_finite(state: &DcaState) -> Result<()> {
    let norm = state.theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let reason = if !norm.is_finite() || !state.lambda.is_finite() {
        Some("non-finite iterate".to_string())
    } else if norm > DIVERGENCE_NORM {
        Some(format!("parameter norm {norm:.3e} exceeds {DIVERGENCE_NORM:.0e}"))
    } else {
        None
    };
    match reason {
        Some(reason) => Err(SorrError::Divergence {
            outer: state.outer_iter,
            inner: state.inner_iter,
            reason,
        }),
        None => Ok(()),
    }
}

fn initial_params(config: &DcaConfig, p: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match config.init {
        Initialization::Zeros => vec![0.0; p],
        Initialization::Gaussian { std } => {
            let normal = Normal::new(0.0, std).expect("std validated");
            (0..p).map(|_| normal.sample(rng)).collect()
        }
    }
}

/// Runs the DCA outer loop on `problem`.
pub fn dca_run<P: DcaProblem + ?Sized>(
    problem: &mut P,
    config: &DcaConfig,
    initial: Option<Vec<f64>>,
) -> Result<DcaState> {
    config.validate()?;
    let n = problem.num_samples();
    if n == 0 {
        return Err(SorrError::param("cannot train on an empty dataset"));
    }
    let p = problem.num_params();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let theta = match initial {
        Some(v) if v.len() != p => {
            return Err(SorrError::param(format!(
                "initial parameters have length {}, expected {p}",
                v.len()
            )))
        }
        Some(v) => v,
        None => initial_params(config, p, &mut rng),
    };
    let mut state = DcaState::new(theta);
    check_finite(&state)?;

    let nf = n as f64;
    let record = |problem: &P, state: &mut DcaState| -> Result<()> {
        let obj = problem.objective(&state.theta);
        if !obj.is_finite() {
            return Err(SorrError::Divergence {
                outer: state.outer_iter,
                inner: state.inner_iter,
                reason: "non-finite objective".into(),
            });
        }
        state.objective_trace.push(obj);
        state
            .regularized_trace
            .push(obj / nf + config.regularizer(&state.theta));
        Ok(())
    };
    problem.begin_outer(&state.theta);
    record(problem, &mut state)?;

    let full_batch = config.minibatch >= n;
    let batch_len = config.minibatch.min(n);
    let mut batch: Vec<usize> = if full_batch { (0..n).collect() } else { vec![0; batch_len] };
    let mut grad = vec![0.0; p];
    let reg = config.reg_weight();

    for outer in 0..config.outer_epochs {
        state.outer_iter = outer;
        state.inner_iter = 0;
        if outer > 0 {
            problem.begin_outer(&state.theta);
        }
        state.k_trace.push(problem.current_k());
        problem.concave_subgradient(&state.theta, &mut state.theta_hat);

        // Majorant of the normalized objective, used to keep the best
        // full-batch iterate so that every outer step is a descent step.
        let majorant = |problem: &P, theta: &[f64], hat: &[f64]| {
            let lin: f64 = theta.iter().zip(hat).map(|(a, b)| a * b).sum();
            (problem.convex_part(theta) - lin) / nf + 0.5 * reg * theta.iter().map(|v| v * v).sum::<f64>()
        };
        let mut best = if full_batch {
            Some((majorant(problem, &state.theta, &state.theta_hat), state.theta.clone()))
        } else {
            None
        };

        for l in 0..config.inner_epochs {
            let step = match config.schedule {
                StepSchedule::Constant => config.learning_rate,
                StepSchedule::InvSqrt => config.learning_rate / ((l + 1) as f64).sqrt(),
            };
            if !full_batch {
                for slot in batch.iter_mut() {
                    *slot = rng.random_range(0..n);
                }
            }
            inner_step_with(problem, &mut state, &batch, config, step, &mut grad)?;
            if let Some((best_value, best_theta)) = best.as_mut() {
                let value = majorant(problem, &state.theta, &state.theta_hat);
                if value < *best_value {
                    *best_value = value;
                    best_theta.copy_from_slice(&state.theta);
                }
            }
        }
        if let Some((_, best_theta)) = best {
            state.theta = best_theta;
        }
        state.outer_iter = outer + 1;
        record(problem, &mut state)?;
        log::debug!(
            "outer {}: objective {:.6} (k={})",
            outer + 1,
            state.objective_trace.last().copied().unwrap_or(f64::NAN),
            problem.current_k()
        );
    }
    Ok(state)
}

/// Trains a binary linear classifier under the AoRR aggregate of `loss`.
pub fn dca_minimize(
    dataset: &LabeledDataset,
    loss: IndividualLoss,
    config: &DcaConfig,
    initial: Option<&LinearModel>,
) -> Result<(LinearModel, DcaState)> {
    let mut problem = AorrProblem::new(dataset, loss, config)?;
    if let Some(model) = initial {
        check_binary_model(model, dataset)?;
    }
    let state = dca_run(&mut problem, config, initial.map(|m| m.params().to_vec()))?;
    let model = LinearModel::from_params(state.theta.clone(), dataset.dim(), 1)?;
    Ok((model, state))
}

/// Trains a multi-label linear scorer under the top-k multi-label loss.
/// `config.k` is the loss's `k`; `config.m` is ignored.
pub fn train_tkml(
    dataset: &LabeledDataset,
    config: &DcaConfig,
    initial: Option<&LinearModel>,
) -> Result<(LinearModel, DcaState)> {
    let mut problem = TkmlProblem::new(dataset, config.k)?;
    let labels = problem.labels;
    if let Some(model) = initial {
        if model.dim() != dataset.dim() || model.outputs() != labels {
            return Err(SorrError::param("initial model shape does not match the dataset"));
        }
    }
    let state = dca_run(&mut problem, config, initial.map(|m| m.params().to_vec()))?;
    let model = LinearModel::from_params(state.theta.clone(), dataset.dim(), labels)?;
    Ok((model, state))
}

/// Aggregate of the individual losses plus `||theta||^2 / 2C`.
pub fn full_objective(
    model: &LinearModel,
    dataset: &LabeledDataset,
    loss: IndividualLoss,
    spec: AggregateSpec,
    c: f64,
) -> Result<f64> {
    check_binary_model(model, dataset)?;
    if !(c > 0.0) {
        return Err(SorrError::param(format!("C must be positive, got {c}")));
    }
    let labels = dataset.binary_labels()?;
    let losses = (0..dataset.len())
        .map(|i| loss.eval(f64::from(labels[i]) * affine(model.params(), dataset.row(i))))
        .collect();
    let data = evaluate_aggregate(&ValueSet::new(losses)?, spec)?;
    let reg = if c.is_infinite() { 0.0 } else { model.squared_norm() / (2.0 * c) };
    Ok(data + reg)
}

//! Individual surrogate losses over the signed margin `t = y f(x)` and the
//! rank-based aggregates built on top of them.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SorrError};
use crate::ranked_range::{self, kth_largest, range_sum, RangeSpec, ValueSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndividualLoss {
    /// `log2(1 + exp(-t))`
    Logistic,
    /// `[1 - t]_+`
    Hinge,
}

impl IndividualLoss {
    /// Loss value without argument validation.
    #[inline]
    pub fn eval(self, margin: f64) -> f64 {
        match self {
            IndividualLoss::Logistic => {
                // log(1 + e^{-t}) = max(-t, 0) + log1p(e^{-|t|})
                ((-margin).max(0.0) + (-margin.abs()).exp().ln_1p()) / LN_2
            }
            IndividualLoss::Hinge => (1.0 - margin).max(0.0),
        }
    }

    /// Derivative with respect to the margin, without argument validation.
    /// The hinge kink at `t = 1` takes the subgradient 0.
    #[inline]
    pub fn derivative(self, margin: f64) -> f64 {
        match self {
            IndividualLoss::Logistic => -sigmoid(-margin) / LN_2,
            IndividualLoss::Hinge => {
                if margin < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IndividualLoss::Logistic => "logistic",
            IndividualLoss::Hinge => "hinge",
        }
    }
}

impl fmt::Display for IndividualLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IndividualLoss {
    type Err = SorrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logistic" => Ok(IndividualLoss::Logistic),
            "hinge" => Ok(IndividualLoss::Hinge),
            other => Err(SorrError::param(format!("unknown individual loss {other:?}"))),
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn individual_loss(kind: IndividualLoss, margin: f64) -> Result<f64> {
    if !margin.is_finite() {
        return Err(SorrError::param(format!("margin must be finite, got {margin}")));
    }
    Ok(kind.eval(margin))
}

pub fn individual_loss_subgradient(kind: IndividualLoss, margin: f64) -> Result<f64> {
    if !margin.is_finite() {
        return Err(SorrError::param(format!("margin must be finite, got {margin}")));
    }
    Ok(kind.derivative(margin))
}

/// Rank-based aggregate of a set of individual losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregateSpec {
    Average,
    Maximum,
    Median,
    AverageTopK { k: usize },
    Aorr { k: usize, m: usize },
    BottomAverage { m: usize },
}

impl AggregateSpec {
    /// The equivalent `(m, k)` ranked range for `n` values, when one exists.
    /// The two-sided median has no single-range form for even `n`.
    pub fn range(&self, n: usize) -> Result<Option<RangeSpec>> {
        let range = match *self {
            AggregateSpec::Average => RangeSpec::new(0, n),
            AggregateSpec::Maximum => RangeSpec::new(0, 1),
            AggregateSpec::Median => {
                if n % 2 == 1 {
                    RangeSpec::new(n.div_ceil(2) - 1, n.div_ceil(2))
                } else {
                    return Ok(None);
                }
            }
            AggregateSpec::AverageTopK { k } => {
                if k == 0 {
                    return Err(SorrError::param("average top-k requires k >= 1"));
                }
                RangeSpec::new(0, k)
            }
            AggregateSpec::Aorr { k, m } => RangeSpec::new(m, k),
            AggregateSpec::BottomAverage { m } => RangeSpec::new(m, n),
        };
        range.validate(n)?;
        Ok(Some(range))
    }

    pub fn label(&self) -> String {
        match *self {
            AggregateSpec::Average => "average".into(),
            AggregateSpec::Maximum => "maximum".into(),
            AggregateSpec::Median => "median".into(),
            AggregateSpec::AverageTopK { k } => format!("atk(k={k})"),
            AggregateSpec::Aorr { k, m } => format!("aorr(k={k},m={m})"),
            AggregateSpec::BottomAverage { m } => format!("bottom(m={m})"),
        }
    }
}

/// Evaluates an aggregate loss over the given individual losses.
pub fn evaluate_aggregate(losses: &ValueSet, spec: AggregateSpec) -> Result<f64> {
    let n = losses.len();
    let values = losses.values();
    if spec == AggregateSpec::Median {
        if n == 0 {
            return Err(SorrError::param("median of an empty set"));
        }
        let lo = (n + 1) / 2;
        let hi = (n + 1).div_ceil(2);
        return Ok(0.5 * (kth_largest(values, lo) + kth_largest(values, hi)));
    }
    let range = spec.range(n)?.expect("single-range aggregate");
    if spec == AggregateSpec::Maximum {
        return ranked_range::top_k_value(losses, 1);
    }
    Ok(range_sum(values, range.m, range.k) / range.width() as f64)
}

/// `[s - lambda]_+ - [s - lambda_hat]_+`, the per-sample contribution to the
/// AoRR objective for fixed thresholds: shifted down by `lambda` and
/// truncated to `[0, lambda_hat - lambda]`.
pub fn truncated_individual(s: f64, lambda: f64, lambda_hat: f64) -> Result<f64> {
    if lambda_hat < lambda {
        return Err(SorrError::param(format!(
            "truncation requires lambda_hat >= lambda, got {lambda_hat} < {lambda}"
        )));
    }
    // Branchwise so that the result is exactly monotone in `s` and exactly
    // capped at `lambda_hat - lambda` in floating point.
    Ok(if s > lambda_hat {
        lambda_hat - lambda
    } else if s > lambda {
        s - lambda
    } else {
        0.0
    })
}

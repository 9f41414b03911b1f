use std::collections::BTreeMap;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use super::{inject_flip_outliers, LabeledDataset};
use crate::error::{Result, SorrError};

/// Shipped preset definitions, keyed by name.
pub const SYNTH_PRESETS: &str = include_str!("../../presets/synth.toml");

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianComponent {
    pub mean: [f64; 2],
    /// Row-major covariance; must be symmetric positive definite.
    pub cov: [[f64; 2]; 2],
    pub count: usize,
    pub class: i8,
}

impl GaussianComponent {
    /// Lower Cholesky factor `[l11, l21, l22]`.
    fn cholesky(&self) -> Result<[f64; 3]> {
        let [[a, b], [b2, c]] = self.cov;
        let finite = [a, b, b2, c].iter().all(|v| v.is_finite());
        if !finite || b != b2 {
            return Err(SorrError::param(format!("covariance {:?} is not symmetric", self.cov)));
        }
        if !(a > 0.0 && a * c - b * b > 0.0) {
            return Err(SorrError::param(format!(
                "covariance {:?} is not positive definite",
                self.cov
            )));
        }
        let l11 = a.sqrt();
        let l21 = b / l11;
        Ok([l11, l21, (c - l21 * l21).sqrt()])
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub components: Vec<GaussianComponent>,
    #[serde(default)]
    pub outlier_count: usize,
    /// Class whose samples get flipped when outliers are requested.
    #[serde(default = "default_outlier_class")]
    pub outlier_class: i8,
    #[serde(default)]
    pub class_ratio: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_outlier_class() -> i8 {
    -1
}

/// Looks up a shipped preset and sets its outlier count and seed.
pub fn synth_preset(name: &str, outlier_count: usize, seed: u64) -> Result<SynthConfig> {
    let mut presets: BTreeMap<String, SynthConfig> = toml::from_str(SYNTH_PRESETS)
        .map_err(|e| SorrError::Config(format!("shipped synthetic presets: {e}")))?;
    let known = presets.keys().cloned().collect::<Vec<_>>().join(", ");
    let mut config = presets
        .remove(name)
        .ok_or_else(|| SorrError::Config(format!("unknown preset '{name}' (known: {known})")))?;
    config.outlier_count = outlier_count;
    config.seed = seed;
    Ok(config)
}

/// Samples each component in order, then flips `outlier_count` labels of
/// `outlier_class`. Deterministic in `config.seed`.
pub fn gen_gaussian_mixture(config: &SynthConfig) -> Result<LabeledDataset> {
    if config.components.is_empty() {
        return Err(SorrError::param("mixture needs at least one component"));
    }
    let factors = config
        .components
        .iter()
        .map(|c| {
            if c.count == 0 {
                return Err(SorrError::param("component counts must be positive"));
            }
            if c.class != 1 && c.class != -1 {
                return Err(SorrError::param(format!("component class {} is not +-1", c.class)));
            }
            c.cholesky()
        })
        .collect::<Result<Vec<_>>>()?;
    let n: usize = config.components.iter().map(|c| c.count).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut x = Array2::zeros((n, 2));
    let mut y = Vec::with_capacity(n);
    let mut row = 0;
    for (c, [l11, l21, l22]) in config.components.iter().zip(factors) {
        for _ in 0..c.count {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            x[[row, 0]] = c.mean[0] + l11 * z1;
            x[[row, 1]] = c.mean[1] + l21 * z1 + l22 * z2;
            y.push(c.class);
            row += 1;
        }
    }
    let mut ds = LabeledDataset::binary(x, y)?
        .with_feature_names(vec!["x1".into(), "x2".into()])?;
    ds.meta.class_ratio = config.class_ratio;
    inject_flip_outliers(&ds, config.outlier_count, config.outlier_class, config.seed ^ 0x6f75_746c)
}

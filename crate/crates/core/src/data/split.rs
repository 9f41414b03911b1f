use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LabeledDataset;
use crate::error::{Result, SorrError};

/// Seeded shuffle of `0..n` cut into train/validation/test blocks. The
/// validation and test blocks get `floor(r n)` indices; train keeps the rest.
pub fn split_indices(n: usize, ratios: (f64, f64, f64), seed: u64) -> Result<[Vec<usize>; 3]> {
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(SorrError::param(format!("split ratios must be positive, got {ratios:?}")));
    }
    if (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(SorrError::param(format!("split ratios must sum to 1, got {ratios:?}")));
    }
    let n_val = (va * n as f64).floor() as usize;
    let n_test = (te * n as f64).floor() as usize;
    let n_train = n.saturating_sub(n_val + n_test);
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(SorrError::param(format!(
            "split of {n} samples leaves an empty part ({n_train}/{n_val}/{n_test})"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok([idx, val, test])
}

pub fn split(
    dataset: &LabeledDataset,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let [a, b, c] = split_indices(dataset.len(), ratios, seed)?;
    Ok((dataset.subset(&a), dataset.subset(&b), dataset.subset(&c)))
}

/// Per-feature affine map to zero mean and unit variance, fitted on one
/// dataset and reused verbatim on others.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; constant columns use 1.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(dataset: &LabeledDataset) -> Self {
        let x = dataset.features();
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let mu = col.sum() / n;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            mean.push(mu);
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Standardizer { mean, scale }
    }

    pub fn apply(&self, dataset: &LabeledDataset) -> Result<LabeledDataset> {
        if dataset.dim() != self.mean.len() {
            return Err(SorrError::param(format!(
                "standardizer fitted on {} features applied to {}",
                self.mean.len(),
                dataset.dim()
            )));
        }
        let mut out = dataset.clone();
        for mut row in out.features_mut().rows_mut() {
            for ((v, mu), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - mu) / s;
            }
        }
        Ok(out)
    }
}

//! Labeled datasets: synthetic generation, label corruption, CSV/IDX ingestion
//! and seeded splitting.

mod csv_io;
mod idx;
mod monk;
mod noise;
mod split;
mod synth;

use ndarray::{Array2, Axis};

use crate::error::{Result, SorrError};
use crate::tkml::LabelSet;

pub use csv_io::{load_csv, load_descriptor, write_csv, CsvSchema, DatasetDescriptor, LabelMode};
pub use idx::{load_mnist, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels, IdxImages};
pub use monk::monk_dataset;
pub use noise::{asymmetric_label_noise, inject_flip_outliers, FlipMap};
pub use split::{split, split_indices, Standardizer};
pub use synth::{gen_gaussian_mixture, synth_preset, GaussianComponent, SynthConfig, SYNTH_PRESETS};

/// Ground-truth labels of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Labels {
    /// One label in `{-1, +1}` per sample.
    Binary(Vec<i8>),
    /// One non-empty label set per sample over `num_labels` labels. Multi-class
    /// data uses singleton sets.
    Sets {
        sets: Vec<LabelSet>,
        num_labels: usize,
    },
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Binary(y) => y.len(),
            Labels::Sets { sets, .. } => sets.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, indices: &[usize]) -> Labels {
        match self {
            Labels::Binary(y) => Labels::Binary(indices.iter().map(|&i| y[i]).collect()),
            Labels::Sets { sets, num_labels } => Labels::Sets {
                sets: indices.iter().map(|&i| sets[i].clone()).collect(),
                num_labels: *num_labels,
            },
        }
    }
}

/// Provenance recorded alongside a dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetMeta {
    pub name: String,
    /// Indices whose labels were flipped by [`inject_flip_outliers`].
    pub flipped: Vec<usize>,
    /// Majority/minority class ratio, for documentation only.
    pub class_ratio: Option<f64>,
}

/// An `n x d` feature matrix with matching labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Labels,
    feature_names: Option<Vec<String>>,
    pub meta: DatasetMeta,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Labels) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(SorrError::param("dataset must contain at least one sample"));
        }
        if features.ncols() == 0 {
            return Err(SorrError::param("dataset must have at least one feature"));
        }
        if labels.len() != n {
            return Err(SorrError::param(format!(
                "{} labels for {n} feature rows",
                labels.len()
            )));
        }
        if let Some(((i, j), v)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(SorrError::Data(format!(
                "non-finite feature value {v} at row {i}, column {j}"
            )));
        }
        match &labels {
            Labels::Binary(y) => {
                if let Some(i) = y.iter().position(|&v| v != 1 && v != -1) {
                    return Err(SorrError::Data(format!(
                        "binary label {} at row {i} is not in {{-1, +1}}",
                        y[i]
                    )));
                }
            }
            Labels::Sets { sets, num_labels } => {
                if *num_labels < 2 {
                    return Err(SorrError::param("label sets need at least two labels"));
                }
                if let Some(i) = sets.iter().position(|s| s.num_labels() != *num_labels) {
                    return Err(SorrError::Data(format!(
                        "label set at row {i} is over {} labels, expected {num_labels}",
                        sets[i].num_labels()
                    )));
                }
            }
        }
        let features = if features.is_standard_layout() {
            features
        } else {
            features.as_standard_layout().to_owned()
        };
        Ok(LabeledDataset {
            features,
            labels,
            feature_names: None,
            meta: DatasetMeta::default(),
        })
    }

    pub fn binary(features: Array2<f64>, labels: Vec<i8>) -> Result<Self> {
        Self::new(features, Labels::Binary(labels))
    }

    pub fn multilabel(features: Array2<f64>, sets: Vec<LabelSet>, num_labels: usize) -> Result<Self> {
        Self::new(features, Labels::Sets { sets, num_labels })
    }

    /// Multi-class data: one 0-based class index per sample.
    pub fn multiclass(features: Array2<f64>, classes: &[usize], num_classes: usize) -> Result<Self> {
        let sets = classes
            .iter()
            .map(|&c| LabelSet::single(c, num_classes))
            .collect::<Result<Vec<_>>>()?;
        Self::multilabel(features, sets, num_classes)
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.dim() {
            return Err(SorrError::param(format!(
                "{} feature names for {} features",
                names.len(),
                self.dim()
            )));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.meta.name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn features_mut(&mut self) -> &mut Array2<f64> {
        &mut self.features
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Feature row `i` as a contiguous slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.features.ncols();
        &self.features.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn binary_labels(&self) -> Result<&[i8]> {
        match &self.labels {
            Labels::Binary(y) => Ok(y),
            Labels::Sets { .. } => Err(SorrError::param("expected binary labels, found label sets")),
        }
    }

    pub fn label_sets(&self) -> Result<(&[LabelSet], usize)> {
        match &self.labels {
            Labels::Sets { sets, num_labels } => Ok((sets, *num_labels)),
            Labels::Binary(_) => Err(SorrError::param("expected label sets, found binary labels")),
        }
    }

    /// Single class per sample; errors if any sample has several labels.
    pub fn classes(&self) -> Result<Vec<usize>> {
        let (sets, _) = self.label_sets()?;
        sets.iter()
            .enumerate()
            .map(|(i, s)| match s.labels() {
                [c] => Ok(*c),
                _ => Err(SorrError::param(format!(
                    "sample {i} has {} labels, expected exactly one",
                    s.len()
                ))),
            })
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select(Axis(0), indices),
            labels: self.labels.select(indices),
            feature_names: self.feature_names.clone(),
            meta: DatasetMeta {
                name: self.meta.name.clone(),
                flipped: Vec::new(),
                class_ratio: self.meta.class_ratio,
            },
        }
    }

    pub(crate) fn replace_labels(&self, labels: Labels) -> LabeledDataset {
        LabeledDataset {
            features: self.features.clone(),
            labels,
            feature_names: self.feature_names.clone(),
            meta: self.meta.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_bad_binary_labels() {
        let x = array![[1.0], [2.0]];
        assert!(LabeledDataset::binary(x.clone(), vec![1, 0]).is_err());
        assert!(LabeledDataset::binary(x.clone(), vec![1]).is_err());
        assert!(LabeledDataset::binary(x, vec![1, -1]).is_ok());
    }

    #[test]
    fn rejects_non_finite_features() {
        let x = array![[1.0, f64::NAN]];
        assert!(matches!(LabeledDataset::binary(x, vec![1]), Err(SorrError::Data(_))));
    }

    #[test]
    fn subset_selects_rows_and_labels() {
        let x = array![[1.0, 1.5], [2.0, 2.5], [3.0, 3.5]];
        let ds = LabeledDataset::binary(x, vec![1, -1, 1]).unwrap();
        let sub = ds.subset(&[2, 0]);
        assert_eq!(sub.row(0), &[3.0, 3.5]);
        assert_eq!(sub.binary_labels().unwrap(), &[1, 1]);
    }

    #[test]
    fn multiclass_wraps_singletons() {
        let x = array![[0.0], [1.0]];
        let ds = LabeledDataset::multiclass(x, &[2, 0], 3).unwrap();
        assert_eq!(ds.classes().unwrap(), vec![2, 0]);
        assert!(ds.binary_labels().is_err());
    }
}

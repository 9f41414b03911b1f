//! Evaluation metrics for binary margins and per-label scores.

use ndarray::Array2;

use crate::data::{LabeledDataset, Labels};
use crate::error::{Result, SorrError};
use crate::model::LinearModel;
use crate::ranked_range::{ranks, top_indices};
use crate::tkml::LabelSet;

#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    Binary(Vec<i8>),
    LabelSets(Vec<LabelSet>),
}

/// Model scores (`n x l`, `l = 1` for binary margins) with the matching truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBatch {
    scores: Array2<f64>,
    truth: GroundTruth,
}

impl PredictionBatch {
    pub fn new(scores: Array2<f64>, truth: GroundTruth) -> Result<Self> {
        let n = scores.nrows();
        if n == 0 {
            return Err(SorrError::param("prediction batch is empty"));
        }
        match &truth {
            GroundTruth::Binary(y) => {
                if scores.ncols() != 1 || y.len() != n {
                    return Err(SorrError::param(format!(
                        "binary batch needs n x 1 scores and n labels, got {}x{} and {}",
                        n,
                        scores.ncols(),
                        y.len()
                    )));
                }
            }
            GroundTruth::LabelSets(sets) => {
                if sets.len() != n {
                    return Err(SorrError::param(format!("{} label sets for {n} rows", sets.len())));
                }
                if let Some(s) = sets.iter().find(|s| s.num_labels() != scores.ncols()) {
                    return Err(SorrError::param(format!(
                        "label set over {} labels for {} score columns",
                        s.num_labels(),
                        scores.ncols()
                    )));
                }
            }
        }
        Ok(PredictionBatch { scores, truth })
    }

    /// Scores every sample of `dataset` with `model`.
    pub fn from_model(model: &LinearModel, dataset: &LabeledDataset) -> Result<Self> {
        let n = dataset.len();
        let mut scores = Array2::zeros((n, model.outputs()));
        for i in 0..n {
            let row = model.scores(dataset.row(i))?;
            scores.row_mut(i).assign(&ndarray::ArrayView1::from(&row));
        }
        let truth = match dataset.labels() {
            Labels::Binary(y) => GroundTruth::Binary(y.clone()),
            Labels::Sets { sets, .. } => GroundTruth::LabelSets(sets.clone()),
        };
        Self::new(scores, truth)
    }

    pub fn len(&self) -> usize {
        self.scores.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_labels(&self) -> usize {
        self.scores.ncols()
    }

    pub fn scores(&self) -> &Array2<f64> {
        &self.scores
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    fn row(&self, i: usize) -> Vec<f64> {
        self.scores.row(i).to_vec()
    }

    fn binary(&self) -> Result<&[i8]> {
        match &self.truth {
            GroundTruth::Binary(y) => Ok(y),
            GroundTruth::LabelSets(_) => Err(SorrError::param("metric needs binary labels")),
        }
    }

    fn sets(&self) -> Result<&[LabelSet]> {
        match &self.truth {
            GroundTruth::LabelSets(s) => Ok(s),
            GroundTruth::Binary(_) => Err(SorrError::param("metric needs label sets")),
        }
    }

    fn classes(&self) -> Result<Vec<usize>> {
        self.sets()?
            .iter()
            .enumerate()
            .map(|(i, s)| match s.labels() {
                [c] => Ok(*c),
                _ => Err(SorrError::param(format!(
                    "sample {i} has {} labels; metric needs exactly one",
                    s.len()
                ))),
            })
            .collect()
    }
}

/// Fraction of samples whose margin sign disagrees with the label; a zero
/// margin is an error.
pub fn error_rate(batch: &PredictionBatch) -> Result<f64> {
    let y = batch.binary()?;
    let wrong = y
        .iter()
        .zip(batch.scores.column(0))
        .filter(|(&yi, &s)| f64::from(yi) * s <= 0.0)
        .count();
    Ok(wrong as f64 / y.len() as f64)
}

/// Label `c` is within the top `k` of `scores` under the crate-wide tie-break.
fn in_top_k(scores: &[f64], c: usize, k: usize) -> bool {
    top_indices(scores, k).contains(&c)
}

/// Fraction of single-label samples whose label is among the `k` highest scores.
pub fn topk_accuracy(batch: &PredictionBatch, k: usize) -> Result<f64> {
    let classes = batch.classes()?;
    let l = batch.num_labels();
    if k == 0 || k > l {
        return Err(SorrError::param(format!("top-k accuracy needs 1 <= k <= {l}, got {k}")));
    }
    let hits = classes
        .iter()
        .enumerate()
        .filter(|&(i, &c)| in_top_k(&batch.row(i), c, k))
        .count();
    Ok(hits as f64 / classes.len() as f64)
}

/// Fraction of samples whose top-`k` label set `Z` satisfies `Z ⊆ Y` or `Y ⊆ Z`.
pub fn topk_multilabel_accuracy(batch: &PredictionBatch, k: usize) -> Result<f64> {
    let sets = batch.sets()?;
    let l = batch.num_labels();
    if k == 0 || k >= l {
        return Err(SorrError::param(format!(
            "top-k multi-label accuracy needs 1 <= k < {l}, got {k}"
        )));
    }
    let hits = sets
        .iter()
        .enumerate()
        .filter(|&(i, y)| {
            let z = top_indices(&batch.row(i), k);
            let z_in_y = z.iter().all(|&j| y.contains(j));
            let y_in_z = y.labels().iter().all(|j| z.contains(j));
            z_in_y || y_in_z
        })
        .count();
    Ok(hits as f64 / sets.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum PrecisionCount {
    /// True labels ranked at or above the current one; perfect rankings score 1.
    #[default]
    AtOrAbove,
    /// True labels ranked strictly above the current one.
    StrictlyAbove,
}

/// Mean over samples of the precision at each true label's rank.
pub fn average_precision(batch: &PredictionBatch) -> Result<f64> {
    average_precision_with(batch, PrecisionCount::AtOrAbove)
}

pub fn average_precision_with(batch: &PredictionBatch, count: PrecisionCount) -> Result<f64> {
    let sets = batch.sets()?;
    let mut total = 0.0;
    for (i, y) in sets.iter().enumerate() {
        let rank = ranks(&batch.row(i));
        let mut true_ranks: Vec<usize> = y.labels().iter().map(|&j| rank[j]).collect();
        true_ranks.sort_unstable();
        let mut sample = 0.0;
        for (pos, &r) in true_ranks.iter().enumerate() {
            // Ranks are distinct, so `pos` true labels sit strictly above `r`.
            let above = match count {
                PrecisionCount::AtOrAbove => pos + 1,
                PrecisionCount::StrictlyAbove => pos,
            };
            sample += above as f64 / r as f64;
        }
        total += sample / y.len() as f64;
    }
    Ok(total / sets.len() as f64)
}

/// Per-class error of the top-1 prediction; `None` for classes with no samples.
pub fn classwise_error(batch: &PredictionBatch) -> Result<Vec<Option<f64>>> {
    let classes = batch.classes()?;
    let l = batch.num_labels();
    let mut seen = vec![0usize; l];
    let mut wrong = vec![0usize; l];
    for (i, &c) in classes.iter().enumerate() {
        seen[c] += 1;
        if !in_top_k(&batch.row(i), c, 1) {
            wrong[c] += 1;
        }
    }
    Ok(seen
        .iter()
        .zip(&wrong)
        .map(|(&s, &w)| (s > 0).then(|| w as f64 / s as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sets(one_based: &[&[usize]], l: usize) -> GroundTruth {
        GroundTruth::LabelSets(
            one_based
                .iter()
                .map(|y| LabelSet::from_one_based(y, l).unwrap())
                .collect(),
        )
    }

    #[test]
    fn error_rate_examples() {
        let b = PredictionBatch::new(array![[1.0], [-2.0]], GroundTruth::Binary(vec![1, -1])).unwrap();
        assert_eq!(error_rate(&b).unwrap(), 0.0);
        let b = PredictionBatch::new(array![[-1.0], [-1.0]], GroundTruth::Binary(vec![1, -1])).unwrap();
        assert_eq!(error_rate(&b).unwrap(), 0.5);
        let b = PredictionBatch::new(array![[0.0], [3.0]], GroundTruth::Binary(vec![1, 1])).unwrap();
        assert_eq!(error_rate(&b).unwrap(), 0.5);
    }

    #[test]
    fn topk_accuracy_examples() {
        let b = PredictionBatch::new(array![[0.1, 0.5, 0.4]], sets(&[&[3]], 3)).unwrap();
        assert_eq!(topk_accuracy(&b, 1).unwrap(), 0.0);
        assert_eq!(topk_accuracy(&b, 2).unwrap(), 1.0);
        assert_eq!(topk_accuracy(&b, 3).unwrap(), 1.0);
        assert!(topk_accuracy(&b, 4).is_err());
        assert!(topk_accuracy(&b, 0).is_err());
    }

    #[test]
    fn multilabel_accuracy_examples() {
        let s = array![[0.0, 0.9, 0.1, 0.5, 0.8]];
        let b = PredictionBatch::new(s.clone(), sets(&[&[2, 5]], 5)).unwrap();
        assert_eq!(topk_multilabel_accuracy(&b, 1).unwrap(), 1.0);
        let b = PredictionBatch::new(s.clone(), sets(&[&[2]], 5)).unwrap();
        assert_eq!(topk_multilabel_accuracy(&b, 3).unwrap(), 1.0);
        let s2 = array![[0.0, 0.9, 0.1, 0.8, 0.5]];
        let b = PredictionBatch::new(s2, sets(&[&[2, 5]], 5)).unwrap();
        assert_eq!(topk_multilabel_accuracy(&b, 2).unwrap(), 0.0);
        assert!(topk_multilabel_accuracy(&b, 5).is_err());
    }

    #[test]
    fn average_precision_examples() {
        let b = PredictionBatch::new(array![[3.0, 2.0, 1.0, 0.0]], sets(&[&[1, 2]], 4)).unwrap();
        assert_eq!(average_precision(&b).unwrap(), 1.0);
        let b = PredictionBatch::new(array![[0.5, 0.9, 0.1]], sets(&[&[1]], 3)).unwrap();
        assert_eq!(average_precision(&b).unwrap(), 0.5);
        assert_eq!(average_precision_with(&b, PrecisionCount::StrictlyAbove).unwrap(), 0.0);
        let b = PredictionBatch::new(array![[0.9, 0.2, 0.5, 0.1]], sets(&[&[1, 2]], 4)).unwrap();
        assert!((average_precision(&b).unwrap() - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn classwise_error_flags_absent_classes() {
        let s = array![[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 1.0]];
        let b = PredictionBatch::new(s, sets(&[&[2], &[2], &[3]], 3)).unwrap();
        assert_eq!(classwise_error(&b).unwrap(), vec![None, Some(0.5), Some(0.0)]);
    }

    #[test]
    fn batch_shape_checks() {
        assert!(PredictionBatch::new(array![[1.0, 2.0]], GroundTruth::Binary(vec![1])).is_err());
        assert!(PredictionBatch::new(array![[1.0, 2.0]], sets(&[&[1]], 3)).is_err());
        assert!(PredictionBatch::new(Array2::zeros((0, 1)), GroundTruth::Binary(vec![])).is_err());
    }
}

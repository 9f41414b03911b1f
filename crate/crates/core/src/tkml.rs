//! Top-k multi-label loss: per sample, the `(k+1)`-th largest hinge gap between
//! each label's score and the weakest ground-truth label.

use crate::data::LabeledDataset;
use crate::error::{Result, SorrError};
use crate::model::{add_augmented, scores_into, MultiLabelModel};
use crate::ranked_range::{kth_largest, ValueSet};

/// Non-empty set of 0-based labels drawn from `0..num_labels`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelSet {
    labels: Vec<usize>,
    num_labels: usize,
}

impl LabelSet {
    /// Duplicates are merged; order is irrelevant.
    pub fn new(mut labels: Vec<usize>, num_labels: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(SorrError::param("label set must not be empty"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_labels) {
            return Err(SorrError::param(format!(
                "label {bad} out of range for {num_labels} labels"
            )));
        }
        labels.sort_unstable();
        labels.dedup();
        Ok(LabelSet { labels, num_labels })
    }

    /// From labels numbered `1..=num_labels`.
    pub fn from_one_based(labels: &[usize], num_labels: usize) -> Result<Self> {
        if labels.contains(&0) {
            return Err(SorrError::param("1-based label set contains 0"));
        }
        Self::new(labels.iter().map(|y| y - 1).collect(), num_labels)
    }

    pub fn single(label: usize, num_labels: usize) -> Result<Self> {
        Self::new(vec![label], num_labels)
    }

    /// From a 0/1 indicator row.
    pub fn from_indicators(indicators: &[bool]) -> Result<Self> {
        let labels = indicators
            .iter()
            .enumerate()
            .filter_map(|(j, &on)| on.then_some(j))
            .collect();
        Self::new(labels, indicators.len())
    }

    /// Sorted ascending.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn contains(&self, label: usize) -> bool {
        self.labels.binary_search(&label).is_ok()
    }

    /// At least one label lies outside the set.
    pub fn is_proper(&self) -> bool {
        self.labels.len() < self.num_labels
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|y| y + 1).collect()
    }
}

fn check_instance(model: &MultiLabelModel, x: &[f64], y: &LabelSet) -> Result<()> {
    if model.outputs() < 2 {
        return Err(SorrError::param("multi-label model needs at least two labels"));
    }
    model.check_input(x)?;
    if y.num_labels() != model.outputs() {
        return Err(SorrError::param(format!(
            "label set is over {} labels, model scores {}",
            y.num_labels(),
            model.outputs()
        )));
    }
    Ok(())
}

/// Turns label scores into hinge gaps `[1 + score_j - min_{y in Y} score_y]_+`
/// in place and returns the first ground-truth label attaining the minimum.
pub(crate) fn gaps_in_place(scores: &mut [f64], y: &LabelSet) -> usize {
    let mut arg = y.labels()[0];
    for &label in &y.labels()[1..] {
        if scores[label] < scores[arg] {
            arg = label;
        }
    }
    let floor = scores[arg];
    for s in scores.iter_mut() {
        *s = (1.0 + *s - floor).max(0.0);
    }
    arg
}

pub fn tkml_score_set(model: &MultiLabelModel, x: &[f64], y: &LabelSet) -> Result<ValueSet> {
    check_instance(model, x, y)?;
    let mut s = vec![0.0; model.outputs()];
    scores_into(model.params(), model.dim(), x, &mut s);
    gaps_in_place(&mut s, y);
    ValueSet::new(s)
}

fn check_k(k: usize, labels: usize) -> Result<()> {
    if k == 0 || k >= labels {
        return Err(SorrError::param(format!(
            "top-k multi-label loss needs 1 <= k < {labels}, got k={k}"
        )));
    }
    Ok(())
}

pub fn tkml_loss(model: &MultiLabelModel, x: &[f64], y: &LabelSet, k: usize) -> Result<f64> {
    check_instance(model, x, y)?;
    check_k(k, model.outputs())?;
    let s = tkml_score_set(model, x, y)?;
    Ok(kth_largest(s.values(), k + 1))
}

/// `[1 + max_{j not in Y} score_j - min_{y in Y} score_y]_+`.
pub fn conventional_multilabel_loss(model: &MultiLabelModel, x: &[f64], y: &LabelSet) -> Result<f64> {
    check_instance(model, x, y)?;
    if !y.is_proper() {
        return Err(SorrError::param("label set covers every label; no competitor exists"));
    }
    let scores = model.scores(x)?;
    let min_true = y
        .labels()
        .iter()
        .map(|&j| scores[j])
        .fold(f64::INFINITY, f64::min);
    let max_other = (0..scores.len())
        .filter(|&j| !y.contains(j))
        .map(|j| scores[j])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((1.0 + max_other - min_true).max(0.0))
}

/// Mean per-sample loss over a multi-label dataset.
pub fn tkml_data_loss(model: &MultiLabelModel, dataset: &LabeledDataset, k: usize) -> Result<f64> {
    let (sets, _) = dataset.label_sets()?;
    check_k(k, model.outputs())?;
    let mut total = 0.0;
    for (i, y) in sets.iter().enumerate() {
        total += tkml_loss(model, dataset.row(i), y, k)?;
    }
    Ok(total / sets.len() as f64)
}

/// Per-sample evaluation workspace shared by the loss and its subgradient.
pub(crate) struct GapScratch {
    gaps: Vec<f64>,
    arg_min: usize,
}

impl GapScratch {
    pub(crate) fn new(labels: usize) -> Self {
        GapScratch {
            gaps: vec![0.0; labels],
            arg_min: 0,
        }
    }

    pub(crate) fn fill(&mut self, params: &[f64], dim: usize, x: &[f64], y: &LabelSet) -> &[f64] {
        scores_into(params, dim, x, &mut self.gaps);
        self.arg_min = gaps_in_place(&mut self.gaps, y);
        &self.gaps
    }

    /// Adds `scale` times a subgradient of the sum of the top `r` gaps to
    /// `grad`, for the instance last passed to [`fill`](Self::fill).
    ///
    /// Gaps tied with the `r`-th largest share the remaining slots equally,
    /// so the choice does not depend on label order. At `theta = 0` every
    /// gap equals 1, and an order-based pick would favour low label indices.
    pub(crate) fn add_top_sum_subgradient(&self, r: usize, x: &[f64], scale: f64, grad: &mut [f64]) {
        if r == 0 {
            return;
        }
        let r = r.min(self.gaps.len());
        let cut = kth_largest(&self.gaps, r);
        let above = self.gaps.iter().filter(|&&g| g > cut).count();
        let tied = self.gaps.iter().filter(|&&g| g == cut).count();
        let share = (r - above) as f64 / tied as f64;
        let w = x.len() + 1;
        let mut pull = 0.0;
        for (j, &g) in self.gaps.iter().enumerate() {
            if g <= 0.0 || j == self.arg_min {
                // The arg-min label's own gap is the constant 1.
                continue;
            }
            let weight = if g > cut {
                1.0
            } else if g == cut {
                share
            } else {
                continue;
            };
            add_augmented(&mut grad[j * w..(j + 1) * w], x, scale * weight);
            pull += weight;
        }
        if pull > 0.0 {
            let y = self.arg_min;
            add_augmented(&mut grad[y * w..(y + 1) * w], x, -scale * pull);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearModel;

    /// A model whose label scores are exactly `scores` for input `x = [0]`.
    fn with_scores(scores: &[f64]) -> LinearModel {
        let params = scores.iter().flat_map(|&b| [0.0, b]).collect();
        LinearModel::from_params(params, 1, scores.len()).unwrap()
    }

    fn y(one_based: &[usize], l: usize) -> LabelSet {
        LabelSet::from_one_based(one_based, l).unwrap()
    }

    #[test]
    fn score_set_examples() {
        let x = [0.0];
        let s = tkml_score_set(&with_scores(&[0.5, 2.0, 1.0]), &x, &y(&[2], 3)).unwrap();
        assert_eq!(s.values(), &[0.0, 1.0, 0.0]);
        let s = tkml_score_set(&with_scores(&[0.5, 2.0, 2.5]), &x, &y(&[2], 3)).unwrap();
        assert_eq!(s.values(), &[0.0, 1.0, 1.5]);
        let s = tkml_score_set(&with_scores(&[0.7, 0.7]), &x, &y(&[1], 2)).unwrap();
        assert_eq!(s.values(), &[1.0, 1.0]);
    }

    #[test]
    fn loss_examples() {
        let x = [0.0];
        let a = with_scores(&[0.5, 2.0, 1.0]);
        let b = with_scores(&[0.5, 2.0, 2.5]);
        assert_eq!(tkml_loss(&a, &x, &y(&[2], 3), 1).unwrap(), 0.0);
        assert_eq!(tkml_loss(&b, &x, &y(&[2], 3), 1).unwrap(), 1.0);
        assert_eq!(tkml_loss(&b, &x, &y(&[2], 3), 2).unwrap(), 0.0);
        assert!(tkml_loss(&b, &x, &y(&[2], 3), 3).is_err());
        assert!(tkml_loss(&b, &x, &y(&[2], 3), 0).is_err());
    }

    #[test]
    fn conventional_examples() {
        let x = [0.0];
        let b = with_scores(&[0.5, 2.0, 2.5]);
        assert_eq!(conventional_multilabel_loss(&b, &x, &y(&[2], 3)).unwrap(), 1.5);
        let a = with_scores(&[0.5, 2.0, 1.0]);
        assert_eq!(conventional_multilabel_loss(&a, &x, &y(&[2], 3)).unwrap(), 0.0);
        let c = with_scores(&[-3.0, -3.0]);
        assert_eq!(conventional_multilabel_loss(&c, &x, &y(&[1], 2)).unwrap(), 1.0);
        assert!(conventional_multilabel_loss(&b, &x, &y(&[1, 2, 3], 3)).is_err());
    }

    #[test]
    fn data_loss_examples() {
        use ndarray::array;
        let ds = LabeledDataset::multilabel(
            array![[0.0], [1.0]],
            vec![y(&[2], 3), y(&[1, 3], 3)],
            3,
        )
        .unwrap();
        let zero = LinearModel::zeros(1, 3).unwrap();
        assert_eq!(tkml_data_loss(&zero, &ds, 1).unwrap(), 1.0);

        let b = with_scores(&[0.5, 2.0, 2.5]);
        let one = ds.subset(&[0]);
        assert_eq!(
            tkml_data_loss(&b, &one, 1).unwrap(),
            tkml_loss(&b, &[0.0], &y(&[2], 3), 1).unwrap()
        );
        let per: Vec<f64> = (0..2)
            .map(|i| tkml_loss(&b, ds.row(i), &ds.label_sets().unwrap().0[i], 1).unwrap())
            .collect();
        let mean = (per[0] + per[1]) / 2.0;
        assert_eq!(tkml_data_loss(&b, &ds, 1).unwrap(), mean);
    }

    #[test]
    fn label_set_validation() {
        assert!(LabelSet::new(vec![], 3).is_err());
        assert!(LabelSet::new(vec![3], 3).is_err());
        assert!(LabelSet::from_one_based(&[0], 3).is_err());
        let s = LabelSet::new(vec![2, 0, 2], 4).unwrap();
        assert_eq!(s.labels(), &[0, 2]);
        assert_eq!(s.to_one_based(), vec![1, 3]);
        assert!(s.is_proper());
        let t = LabelSet::from_indicators(&[false, true, true, false]).unwrap();
        assert_eq!(t.to_one_based(), vec![2, 3]);
        assert!(LabelSet::from_indicators(&[false, false]).is_err());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = with_scores(&[0.0, 1.0]);
        assert!(tkml_score_set(&m, &[0.0, 1.0], &y(&[1], 2)).is_err());
        assert!(tkml_score_set(&m, &[0.0], &y(&[1], 3)).is_err());
    }

    #[test]
    fn tied_gaps_share_the_subgradient() {
        // All-zero scores: every gap is 1, the true label is index 2 of 4.
        let params = vec![0.0; 2 * 4];
        let mut scratch = GapScratch::new(4);
        scratch.fill(&params, 1, &[1.0], &y(&[3], 4));
        let mut grad = vec![0.0; 8];
        scratch.add_top_sum_subgradient(2, &[1.0], 1.0, &mut grad);
        // Two slots over four tied labels; the true label absorbs its share.
        assert_eq!(grad, vec![0.5, 0.5, 0.5, 0.5, -1.5, -1.5, 0.5, 0.5]);
    }
}

//! Top-k values, sums of top-k values and sums/averages of ranked ranges.
//!
//! Every rank in this crate is taken under one total order: values in
//! descending order, ties broken by ascending original index. Partial
//! selection is used where possible, but the selected positions are always
//! the ones a full stable descending sort would produce.

use std::cmp::Ordering;

use crate::error::{Result, SorrError};

/// A non-empty list of finite reals to be rank-aggregated.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSet {
    values: Vec<f64>,
}

impl ValueSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(SorrError::param("value set must contain at least one value"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(SorrError::param(format!(
                "value set entry {pos} is not finite ({})",
                values[pos]
            )));
        }
        Ok(ValueSet { values })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }
}

impl TryFrom<Vec<f64>> for ValueSet {
    type Error = SorrError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        ValueSet::new(values)
    }
}

/// The `(m, k)` ranked range: sorted positions `m+1..=k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RangeSpec {
    pub m: usize,
    pub k: usize,
}

impl RangeSpec {
    pub fn new(m: usize, k: usize) -> Self {
        RangeSpec { m, k }
    }

    /// Checks `0 <= m < k <= n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.m >= self.k {
            return Err(SorrError::param(format!(
                "ranked range requires m < k, got m={} k={}",
                self.m, self.k
            )));
        }
        if self.k > n {
            return Err(SorrError::param(format!(
                "ranked range requires k <= n, got k={} n={n}",
                self.k
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.k - self.m
    }
}

/// Descending-by-value, ascending-by-index comparison of two positions.
#[inline]
pub(crate) fn rank_cmp(values: &[f64], a: usize, b: usize) -> Ordering {
    values[b]
        .partial_cmp(&values[a])
        .unwrap_or(Ordering::Equal)
        .then(a.cmp(&b))
}

/// All indices of `values` in rank order (rank 1 first).
pub fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| rank_cmp(values, a, b));
    idx
}

/// Indices of the `k` highest-ranked entries, in rank order.
///
/// Uses expected linear-time selection followed by a sort of the selected
/// prefix; `k` must not exceed `values.len()`.
pub fn top_indices(values: &[f64], k: usize) -> Vec<usize> {
    debug_assert!(k <= values.len());
    let mut idx: Vec<usize> = (0..values.len()).collect();
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, |&a, &b| rank_cmp(values, a, b));
        idx.truncate(k);
    }
    idx.sort_by(|&a, &b| rank_cmp(values, a, b));
    idx
}

/// Rank (1-based) of every entry under the crate-wide tie-break.
pub fn ranks(values: &[f64]) -> Vec<usize> {
    let mut rank = vec![0; values.len()];
    for (pos, &i) in descending_order(values).iter().enumerate() {
        rank[i] = pos + 1;
    }
    rank
}

pub(crate) fn kth_largest(values: &[f64], k: usize) -> f64 {
    debug_assert!(k >= 1 && k <= values.len());
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let (_, nth, _) = idx.select_nth_unstable_by(k - 1, |&a, &b| rank_cmp(values, a, b));
    values[*nth]
}

/// Sum of sorted positions `m+1..=k`, accumulated in rank order.
pub(crate) fn range_sum(values: &[f64], m: usize, k: usize) -> f64 {
    top_indices(values, k)[m..].iter().map(|&i| values[i]).sum()
}

fn check_k(n: usize, k: usize, allow_zero: bool) -> Result<()> {
    if (k == 0 && !allow_zero) || k > n {
        let lo = if allow_zero { 0 } else { 1 };
        return Err(SorrError::param(format!(
            "k must lie in [{lo}, {n}], got {k}"
        )));
    }
    Ok(())
}

/// The k-th largest value `s_[k]`.
pub fn top_k_value(set: &ValueSet, k: usize) -> Result<f64> {
    check_k(set.len(), k, false)?;
    Ok(kth_largest(set.values(), k))
}

/// `phi_k(S)`: sum of the k largest values, with `phi_0 = 0`.
pub fn sum_top_k(set: &ValueSet, k: usize) -> Result<f64> {
    check_k(set.len(), k, true)?;
    Ok(range_sum(set.values(), 0, k))
}

/// `psi_{m,k}(S) = phi_k(S) - phi_m(S)`, computed as the direct sum of the
/// sorted positions `m+1..=k` to avoid cancellation.
pub fn sum_ranked_range(set: &ValueSet, range: RangeSpec) -> Result<f64> {
    range.validate(set.len())?;
    Ok(range_sum(set.values(), range.m, range.k))
}

/// Average of the `(m, k)` ranked range.
pub fn avg_ranked_range(set: &ValueSet, range: RangeSpec) -> Result<f64> {
    Ok(sum_ranked_range(set, range)? / range.width() as f64)
}

/// `k * lambda + sum_i [s_i - lambda]_+`.
///
/// Minimized over `lambda` by `s_[k]`, where it equals `phi_k(S)`.
pub fn variational_phi(set: &ValueSet, k: usize, lambda: f64) -> Result<f64> {
    check_k(set.len(), k, false)?;
    if !lambda.is_finite() {
        return Err(SorrError::param("lambda must be finite"));
    }
    let excess: f64 = set.values().iter().map(|&s| (s - lambda).max(0.0)).sum();
    Ok(k as f64 * lambda + excess)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pi_like() -> ValueSet {
        ValueSet::new(vec![3.0, 1.0, 4.0, 1.0, 5.0]).unwrap()
    }

    /// Brute-force oracle: full stable sort, then positional sum.
    fn sorted_desc(values: &[f64]) -> Vec<f64> {
        let mut v = values.to_vec();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        v
    }

    #[test]
    fn top_k_value_examples() {
        let s = pi_like();
        assert_eq!(top_k_value(&s, 1).unwrap(), 5.0);
        assert_eq!(top_k_value(&s, 3).unwrap(), 3.0);
        let flat = ValueSet::new(vec![2.0, 2.0, 2.0]).unwrap();
        assert_eq!(top_k_value(&flat, 2).unwrap(), 2.0);
    }

    #[test]
    fn top_k_value_rejects_out_of_range() {
        let s = pi_like();
        assert!(matches!(top_k_value(&s, 0), Err(SorrError::Parameter(_))));
        assert!(matches!(top_k_value(&s, 6), Err(SorrError::Parameter(_))));
    }

    #[test]
    fn sum_top_k_examples() {
        let s = pi_like();
        assert_eq!(sum_top_k(&s, 2).unwrap(), 9.0);
        assert_eq!(sum_top_k(&s, 0).unwrap(), 0.0);
        assert_eq!(sum_top_k(&s, 5).unwrap(), 14.0);
        assert!(sum_top_k(&s, 6).is_err());
    }

    #[test]
    fn ranked_range_examples() {
        let s = pi_like();
        assert_eq!(sum_ranked_range(&s, RangeSpec::new(1, 3)).unwrap(), 7.0);
        assert_eq!(sum_ranked_range(&s, RangeSpec::new(2, 3)).unwrap(), 3.0);
        assert_eq!(sum_ranked_range(&s, RangeSpec::new(0, 5)).unwrap(), 14.0);
        assert!(sum_ranked_range(&s, RangeSpec::new(3, 3)).is_err());
        assert!(sum_ranked_range(&s, RangeSpec::new(4, 2)).is_err());
        assert!(sum_ranked_range(&s, RangeSpec::new(0, 6)).is_err());
    }

    #[test]
    fn average_ranked_range_examples() {
        let s = pi_like();
        assert_eq!(avg_ranked_range(&s, RangeSpec::new(2, 3)).unwrap(), 3.0);
        assert!((avg_ranked_range(&s, RangeSpec::new(0, 5)).unwrap() - 2.8).abs() < 1e-15);
        let single = ValueSet::new(vec![7.0]).unwrap();
        assert_eq!(avg_ranked_range(&single, RangeSpec::new(0, 1)).unwrap(), 7.0);
    }

    #[test]
    fn variational_examples() {
        let s = pi_like();
        assert_eq!(variational_phi(&s, 2, 4.0).unwrap(), 9.0);
        assert_eq!(variational_phi(&s, 2, 0.0).unwrap(), 14.0);
        let zeros = ValueSet::new(vec![0.0; 3]).unwrap();
        assert_eq!(variational_phi(&zeros, 1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn value_set_rejects_empty_and_non_finite() {
        assert!(ValueSet::new(vec![]).is_err());
        assert!(ValueSet::new(vec![1.0, f64::NAN]).is_err());
        assert!(ValueSet::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn ties_follow_index_order() {
        let v = [1.0, 3.0, 3.0, 2.0, 3.0];
        assert_eq!(descending_order(&v), vec![1, 2, 4, 3, 0]);
        assert_eq!(top_indices(&v, 2), vec![1, 2]);
        assert_eq!(ranks(&v), vec![5, 1, 2, 4, 3]);
    }

    fn value_sets() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 1..50)
    }

    proptest! {
        #[test]
        fn selection_matches_full_sort(values in value_sets(), k in 0usize..50) {
            let k = k.min(values.len());
            let full = descending_order(&values);
            prop_assert_eq!(top_indices(&values, k), full[..k].to_vec());
        }

        #[test]
        fn ranked_range_matches_sorted_sum(values in value_sets()) {
            let s = ValueSet::new(values.clone()).unwrap();
            let sorted = sorted_desc(&values);
            let n = values.len();
            for k in 1..=n {
                for m in 0..k {
                    let direct: f64 = sorted[m..k].iter().sum();
                    let got = sum_ranked_range(&s, RangeSpec::new(m, k)).unwrap();
                    prop_assert!((got - direct).abs() <= 1e-12 * direct.abs().max(1.0));
                }
            }
        }

        #[test]
        fn shift_equivariance(values in value_sets(), c in -5.0f64..5.0, k in 0usize..50) {
            let k = k.min(values.len());
            let s = ValueSet::new(values.clone()).unwrap();
            let shifted = ValueSet::new(values.iter().map(|v| v + c).collect()).unwrap();
            let lhs = sum_top_k(&shifted, k).unwrap();
            let rhs = sum_top_k(&s, k).unwrap() + k as f64 * c;
            prop_assert!((lhs - rhs).abs() <= 1e-10);
        }

        #[test]
        fn special_cases_collapse(values in value_sets()) {
            let s = ValueSet::new(values.clone()).unwrap();
            let n = values.len();
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mean = values.iter().sum::<f64>() / n as f64;
            prop_assert_eq!(avg_ranked_range(&s, RangeSpec::new(0, 1)).unwrap(), max);
            prop_assert!((avg_ranked_range(&s, RangeSpec::new(0, n)).unwrap() - mean).abs() < 1e-12);
            for k in 1..=n {
                prop_assert_eq!(
                    avg_ranked_range(&s, RangeSpec::new(k - 1, k)).unwrap(),
                    top_k_value(&s, k).unwrap()
                );
            }
        }

        #[test]
        fn variational_minimum_at_top_k(values in value_sets(), probes in prop::collection::vec(-15.0f64..15.0, 20)) {
            let s = ValueSet::new(values.clone()).unwrap();
            for k in 1..=values.len() {
                let phi = sum_top_k(&s, k).unwrap();
                let lam = top_k_value(&s, k).unwrap();
                prop_assert!((variational_phi(&s, k, lam).unwrap() - phi).abs() <= 1e-12 * phi.abs().max(1.0));
                for &p in &probes {
                    prop_assert!(variational_phi(&s, k, p).unwrap() >= phi - 1e-12);
                }
            }
        }

        #[test]
        fn larger_rank_has_smaller_value(values in value_sets()) {
            let s = ValueSet::new(values.clone()).unwrap();
            let n = values.len();
            for k in 2..=n {
                for m in 1..k {
                    let hi = top_k_value(&s, m).unwrap();
                    let lo = top_k_value(&s, k).unwrap();
                    prop_assert!(hi >= lo);
                    let sorted = sorted_desc(&values);
                    if sorted[m - 1] != sorted[k - 1] {
                        prop_assert!(hi > lo);
                    }
                }
            }
        }
    }
}

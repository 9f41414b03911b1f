use ndarray::Array2;

use super::LabeledDataset;
use crate::error::Result;

/// Value counts of the six categorical attributes.
const ARITY: [usize; 6] = [3, 3, 2, 3, 4, 2];

/// The full 432-example grid of the third MONK's problem, noise-free:
/// positive iff `(a5 = 3 and a4 = 1) or (a5 != 4 and a2 != 3)`.
///
/// Attributes keep their 1-based integer codes as features. Rows enumerate
/// the grid with `a1` varying slowest. The class ratio is 228:204.
pub fn monk_dataset() -> Result<LabeledDataset> {
    let n: usize = ARITY.iter().product();
    let mut x = Array2::zeros((n, ARITY.len()));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let mut rest = i;
        let mut a = [0usize; 6];
        for j in (0..6).rev() {
            a[j] = rest % ARITY[j] + 1;
            rest /= ARITY[j];
        }
        for (j, &v) in a.iter().enumerate() {
            x[[i, j]] = v as f64;
        }
        let positive = (a[4] == 3 && a[3] == 1) || (a[4] != 4 && a[1] != 3);
        y.push(if positive { 1 } else { -1 });
    }
    let names = (1..=6).map(|j| format!("a{j}")).collect();
    let mut ds = LabeledDataset::binary(x, y)?.with_feature_names(names)?.with_name("monk");
    ds.meta.class_ratio = Some(228.0 / 204.0);
    Ok(ds)
}

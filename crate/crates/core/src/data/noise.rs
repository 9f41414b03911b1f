use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LabeledDataset, Labels};
use crate::error::{Result, SorrError};
use crate::tkml::LabelSet;

/// Flips the binary label of `count` seeded-random members of `target_class`.
/// The flipped indices are recorded in `meta.flipped`, in ascending order.
pub fn inject_flip_outliers(
    dataset: &LabeledDataset,
    count: usize,
    target_class: i8,
    seed: u64,
) -> Result<LabeledDataset> {
    let y = dataset.binary_labels()?;
    let members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == target_class).collect();
    if count > members.len() {
        return Err(SorrError::param(format!(
            "cannot flip {count} labels: class {target_class} has {} samples",
            members.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flipped: Vec<usize> = index::sample(&mut rng, members.len(), count)
        .into_iter()
        .map(|j| members[j])
        .collect();
    flipped.sort_unstable();
    let mut labels = y.to_vec();
    for &i in &flipped {
        labels[i] = -labels[i];
    }
    let mut out = dataset.replace_labels(Labels::Binary(labels));
    out.meta.flipped = flipped;
    Ok(out)
}

/// Partial map between class indices (0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlipMap {
    pairs: Vec<(usize, usize)>,
}

impl FlipMap {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        for (i, (from, _)) in pairs.iter().enumerate() {
            if pairs[..i].iter().any(|(f, _)| f == from) {
                return Err(SorrError::param(format!("class {from} is mapped twice")));
            }
        }
        Ok(FlipMap { pairs })
    }

    /// Digit confusions 2→7, 3→8, 5↔6, 7→1.
    pub fn digits() -> Self {
        FlipMap {
            pairs: vec![(2, 7), (3, 8), (5, 6), (6, 5), (7, 1)],
        }
    }

    /// Parses `"2>7,3>8,5>6,6>5,7>1"`.
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|pair| {
                let (a, b) = pair
                    .split_once('>')
                    .ok_or_else(|| SorrError::Config(format!("flip pair '{pair}' lacks '>'")))?;
                let parse = |s: &str| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| SorrError::Config(format!("flip pair '{pair}' is not numeric")))
                };
                Ok((parse(a)?, parse(b)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs)
    }

    pub fn get(&self, class: usize) -> Option<usize> {
        self.pairs.iter().find(|(f, _)| *f == class).map(|&(_, t)| t)
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

/// Relabels each sample whose class is in the map's domain with probability
/// `p`, independently. Every mapped sample consumes one uniform draw, in
/// sample order, so the result depends only on `(dataset, p, map, seed)`.
pub fn asymmetric_label_noise(
    dataset: &LabeledDataset,
    p: f64,
    map: &FlipMap,
    seed: u64,
) -> Result<LabeledDataset> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SorrError::param(format!("noise rate must lie in [0, 1], got {p}")));
    }
    let classes = dataset.classes()?;
    let (_, num_labels) = dataset.label_sets()?;
    if let Some(&(f, t)) = map.pairs().iter().find(|(f, t)| *f >= num_labels || *t >= num_labels) {
        return Err(SorrError::param(format!(
            "flip {f}->{t} is outside the {num_labels} classes"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flipped = Vec::new();
    let sets = classes
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let mut label = c;
            if let Some(target) = map.get(c) {
                if rng.random::<f64>() < p {
                    label = target;
                    flipped.push(i);
                }
            }
            LabelSet::single(label, num_labels)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = dataset.replace_labels(Labels::Sets { sets, num_labels });
    out.meta.flipped = flipped;
    Ok(out)
}

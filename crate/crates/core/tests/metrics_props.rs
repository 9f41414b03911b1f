use ndarray::Array2;
use proptest::prelude::*;
use sorr::metrics::{
    average_precision, error_rate, topk_accuracy, topk_multilabel_accuracy, GroundTruth, PredictionBatch,
};
use sorr::LabelSet;

/// Scores for `n` samples over `l` labels plus one label set per sample.
fn batch_parts() -> impl Strategy<Value = (Array2<f64>, Vec<Vec<usize>>, usize)> {
    (1usize..8, 2usize..7).prop_flat_map(|(n, l)| {
        (
            prop::collection::vec(-5.0f64..5.0, n * l).prop_map(move |v| Array2::from_shape_vec((n, l), v).unwrap()),
            prop::collection::vec(prop::collection::btree_set(0..l, 1..l).prop_map(|s| s.into_iter().collect()), n),
            Just(l),
        )
    })
}

fn label_batch(scores: Array2<f64>, sets: &[Vec<usize>], l: usize) -> PredictionBatch {
    let sets = sets.iter().map(|s| LabelSet::new(s.clone(), l).unwrap()).collect();
    PredictionBatch::new(scores, GroundTruth::LabelSets(sets)).unwrap()
}

proptest! {
    #[test]
    fn topk_accuracy_is_nondecreasing_in_k((scores, sets, l) in batch_parts()) {
        let single: Vec<Vec<usize>> = sets.iter().map(|s| vec![s[0]]).collect();
        let batch = label_batch(scores, &single, l);
        let acc: Vec<f64> = (1..=l).map(|k| topk_accuracy(&batch, k).unwrap()).collect();
        prop_assert!(acc.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(acc[l - 1], 1.0);
    }

    #[test]
    fn multilabel_top1_is_at_least_exact_match((scores, sets, l) in batch_parts()) {
        let single: Vec<Vec<usize>> = sets.iter().map(|s| vec![s[0]]).collect();
        let exact = topk_accuracy(&label_batch(scores.clone(), &single, l), 1).unwrap();
        let multi = topk_multilabel_accuracy(&label_batch(scores, &sets, l), 1).unwrap();
        // Each sample's first label is in its full set, so a top-1 hit on it is
        // also a containment hit.
        prop_assert!(multi >= exact);
    }

    #[test]
    fn metrics_ignore_strictly_increasing_transforms((scores, sets, l) in batch_parts(), a in 0.1f64..3.0, b in -4.0f64..4.0) {
        let warped = scores.mapv(|s| (a * s + b).tanh() * 10.0 + (a * s).exp().ln_1p());
        let (p, q) = (label_batch(scores.clone(), &sets, l), label_batch(warped.clone(), &sets, l));
        prop_assert_eq!(average_precision(&p).unwrap(), average_precision(&q).unwrap());
        for k in 1..l {
            prop_assert_eq!(topk_multilabel_accuracy(&p, k).unwrap(), topk_multilabel_accuracy(&q, k).unwrap());
        }
        // Binary margins only keep their sign under odd increasing maps.
        let margins = scores.column(0).to_owned().insert_axis(ndarray::Axis(1));
        let y: Vec<i8> = sets.iter().map(|s| if s[0] % 2 == 0 { 1 } else { -1 }).collect();
        let bin = PredictionBatch::new(margins.clone(), GroundTruth::Binary(y.clone())).unwrap();
        let cubed = PredictionBatch::new(margins.mapv(|m| m * m * m + m), GroundTruth::Binary(y)).unwrap();
        prop_assert_eq!(error_rate(&bin).unwrap(), error_rate(&cubed).unwrap());
    }
}

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Support-weighted mean of per-class F1 over the classes present in
/// `labels`. Classes that only ever appear as predictions contribute nothing
/// (but still cost precision of the classes they were mistaken for).
pub fn weighted_f1<T: Ord>(predictions: &[T], labels: &[T]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("weighted F1 of an empty set".into()));
    }

    #[derive(Default)]
    struct Tally {
        support: usize,
        predicted: usize,
        hits: usize,
    }
    let mut tallies: BTreeMap<&T, Tally> = BTreeMap::new();
    for (p, l) in predictions.iter().zip(labels) {
        tallies.entry(l).or_default().support += 1;
        tallies.entry(p).or_default().predicted += 1;
        if p == l {
            tallies.get_mut(l).expect("just inserted").hits += 1;
        }
    }

    let n = labels.len() as f64;
    let score = tallies
        .values()
        .filter(|t| t.support > 0)
        .map(|t| {
            let precision = if t.predicted > 0 {
                t.hits as f64 / t.predicted as f64
            } else {
                0.0
            };
            let recall = t.hits as f64 / t.support as f64;
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            t.support as f64 / n * f1
        })
        .sum();
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Explicit confusion matrix over the label alphabet `0..k`.
    fn oracle(pred: &[usize], lab: &[usize], k: usize) -> f64 {
        let mut cm = vec![vec![0usize; k]; k];
        for (&p, &l) in pred.iter().zip(lab) {
            cm[l][p] += 1;
        }
        let n = lab.len() as f64;
        let mut total = 0.0;
        for c in 0..k {
            let support: usize = cm[c].iter().sum();
            if support == 0 {
                continue;
            }
            let col: usize = (0..k).map(|r| cm[r][c]).sum();
            let tp = cm[c][c] as f64;
            let p = if col == 0 { 0.0 } else { tp / col as f64 };
            let r = tp / support as f64;
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            total += support as f64 / n * f;
        }
        total
    }

    #[test]
    fn perfect_predictions() {
        assert_eq!(weighted_f1(&["a", "b", "b"], &["a", "b", "b"]).unwrap(), 1.0);
    }

    #[test]
    fn hand_computed_case() {
        // class a: P=1, R=1/2 -> 2/3; class b: P=2/3, R=1 -> 0.8
        let f = weighted_f1(&["a", "b", "b", "b"], &["a", "a", "b", "b"]).unwrap();
        assert!((f - (0.5 * 2.0 / 3.0 + 0.5 * 0.8)).abs() < 1e-15);
        assert!((f - 0.733_333_333_333_333_3).abs() < 1e-12);
    }

    #[test]
    fn all_wrong_is_zero() {
        assert_eq!(weighted_f1(&["b", "b"], &["a", "a"]).unwrap(), 0.0);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let empty: [&str; 0] = [];
        assert!(weighted_f1(&empty, &empty).is_err());
        assert!(weighted_f1(&["a"], &["a", "b"]).is_err());
    }

    #[test]
    fn equals_accuracy_for_balanced_support() {
        // support 2 per class, predictions stay inside the label set
        let labels = [0, 0, 1, 1, 2, 2];
        let preds = [0, 1, 1, 1, 2, 0];
        let f = weighted_f1(&preds, &labels).unwrap();
        assert!((f - oracle(&preds, &labels, 3)).abs() < 1e-12);
        // This construction has per-class P = R, so F1 = recall.
        let balanced_preds = [0, 1, 1, 2, 2, 0];
        let acc = 3.0 / 6.0;
        assert!((weighted_f1(&balanced_preds, &labels).unwrap() - acc).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn matches_confusion_matrix(
            (k, pairs) in (1usize..=6).prop_flat_map(|k| (Just(k), proptest::collection::vec((0..k, 0..k), 1..=50)))
        ) {
            let (pred, lab): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let f = weighted_f1(&pred, &lab).unwrap();
            prop_assert!((f - oracle(&pred, &lab, k)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }
}

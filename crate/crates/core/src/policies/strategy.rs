use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a policy turns its model into an action during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionStrategy {
    /// Draw from the model's own distribution (explorative).
    Sample,
    /// Best arm with probability `1 - epsilon`, otherwise a uniform arm.
    EpsilonGreedy { epsilon: f64 },
}

impl SelectionStrategy {
    pub const DEFAULT_EPSILON: f64 = 0.1;

    pub fn epsilon_greedy(epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::config("epsilon", format!("must lie in [0, 1], got {epsilon}")));
        }
        Ok(SelectionStrategy::EpsilonGreedy { epsilon })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SelectionStrategy::Sample => "sample",
            SelectionStrategy::EpsilonGreedy { .. } => "epsilon_greedy",
        }
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Explores uniformly with probability `epsilon`, else returns `greedy`.
/// Always consumes one uniform draw so the stream position is independent of
/// the outcome of the coin.
pub(crate) fn epsilon_greedy(greedy: usize, k: usize, epsilon: f64, rng: &mut impl Rng) -> usize {
    if rng.random::<f64>() < epsilon {
        rng.random_range(0..k)
    } else {
        greedy
    }
}

/// Draws an index from a probability vector.
pub(crate) fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn epsilon_bounds() {
        assert!(SelectionStrategy::epsilon_greedy(1.5).is_err());
        assert!(SelectionStrategy::epsilon_greedy(-0.1).is_err());
        assert!(SelectionStrategy::epsilon_greedy(0.0).is_ok());
    }

    #[test]
    fn categorical_skips_zero_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&[0.0, 1.0, 0.0], &mut rng), 1);
        }
    }

    #[test]
    fn softmax_shift_invariant() {
        let a = softmax(&[1.0, 2.0, -3.0]);
        let b = softmax(&[101.0, 102.0, 97.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

//! Dense feed-forward network trained one bandit sample at a time.
//!
//! Hidden layers use ReLU, the output layer is linear and produces one score
//! per arm. Training applies binary cross-entropy to `sigmoid(score[arm])` of
//! the chosen arm only, so other output units receive no gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    /// `weights[l]` is row-major `(layer_sizes[l+1], layer_sizes[l])`.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    seed: u64,
}

/// Per-layer activations of one forward pass. `activations[0]` is the input
/// and `activations[L]` the output scores.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn scores(&self) -> &[f64] {
        self.activations.last().expect("cache holds the output layer")
    }
}

/// Loss gradients laid out like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    /// Flattened in [`Mlp::param`] order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(score)` against `reward`, in logit form.
pub fn bce_with_logit(score: f64, reward: u8) -> f64 {
    // softplus(s) - r*s
    let softplus = if score > 0.0 {
        score + (-score).exp().ln_1p()
    } else {
        score.exp().ln_1p()
    };
    softplus - f64::from(reward) * score
}

impl Mlp {
    /// Glorot-uniform weights from a seeded generator, zero biases.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer sizes must have at least two positive entries, got {layer_sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = Self::init_bound(fan_in, fan_out);
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            seed,
        })
    }

    pub fn init_bound(fan_in: usize, fan_out: usize) -> f64 {
        (6.0 / (fan_in + fan_out) as f64).sqrt()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    /// Replaces one layer's parameters. Shapes must match.
    pub fn set_layer(&mut self, layer: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<()> {
        let (fan_in, fan_out) = (self.layer_sizes[layer], self.layer_sizes[layer + 1]);
        if weights.len() != fan_in * fan_out {
            return Err(Error::LengthMismatch {
                expected: fan_in * fan_out,
                got: weights.len(),
            });
        }
        if biases.len() != fan_out {
            return Err(Error::LengthMismatch {
                expected: fan_out,
                got: biases.len(),
            });
        }
        if weights.iter().chain(&biases).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        self.weights[layer] = weights;
        self.biases[layer] = biases;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    fn locate(&mut self, mut index: usize) -> &mut f64 {
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            if index < w.len() {
                return &mut w[index];
            }
            index -= w.len();
            if index < b.len() {
                return &mut b[index];
            }
            index -= b.len();
        }
        panic!("parameter index out of range");
    }

    /// Flat parameter access: each layer's weights then its biases.
    pub fn param(&self, mut index: usize) -> f64 {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            if index < w.len() {
                return w[index];
            }
            index -= w.len();
            if index < b.len() {
                return b[index];
            }
            index -= b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        *self.locate(index) = value;
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.input_dim() {
            return Err(Error::LengthMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let last = self.num_layers() - 1;
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        activations.push(x.to_vec());
        for l in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let input = &activations[l];
            let w = &self.weights[l];
            let mut out = self.biases[l].clone();
            for (o, row) in out.iter_mut().zip(w.chunks_exact(fan_in)) {
                *o += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            }
            if l < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            debug_assert_eq!(out.len(), fan_out);
            activations.push(out);
        }
        Ok(ForwardCache { activations })
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.activations.pop().expect("output layer"))
    }

    /// Loss and parameter gradients for one `(x, arm, reward)` sample.
    pub fn gradients(&self, x: &[f64], arm: usize, reward: u8) -> Result<(f64, Gradients)> {
        if arm >= self.output_dim() {
            return Err(Error::InvalidArgument(format!(
                "arm {arm} out of range for {} outputs",
                self.output_dim()
            )));
        }
        if reward > 1 {
            return Err(Error::InvalidArgument(format!("reward must be 0 or 1, got {reward}")));
        }
        let cache = self.forward(x)?;
        let score = cache.scores()[arm];
        let loss = bce_with_logit(score, reward);

        let n = self.num_layers();
        let mut gw: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut gb: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();

        // delta = dLoss / d(pre-activation) of the current layer
        let mut delta = vec![0.0; self.output_dim()];
        delta[arm] = sigmoid(score) - f64::from(reward);

        for l in (0..n).rev() {
            let fan_in = self.layer_sizes[l];
            let input = &cache.activations[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[l][o] += d;
                let row = &mut gw[l][o * fan_in..(o + 1) * fan_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; fan_in];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &self.weights[l][o * fan_in..(o + 1) * fan_in];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                // ReLU derivative; activation > 0 iff pre-activation > 0
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }

        let grads = Gradients {
            weights: gw,
            biases: gb,
        };
        if !loss.is_finite() || grads.flat().iter().any(|g| !g.is_finite()) {
            return Err(Error::NumericalDivergence);
        }
        Ok((loss, grads))
    }

    /// One SGD step on a single bandit sample; returns the pre-step loss.
    pub fn train_step(&mut self, x: &[f64], arm: usize, reward: u8, learning_rate: f64) -> Result<f64> {
        let (loss, grads) = self.gradients(x, arm, reward)?;
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            for (p, d) in w.iter_mut().zip(g) {
                *p -= learning_rate * d;
            }
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            for (p, d) in b.iter_mut().zip(g) {
                *p -= learning_rate * d;
            }
        }
        if self
            .weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .any(|p| !p.is_finite())
        {
            return Err(Error::NumericalDivergence);
        }
        Ok(loss)
    }
}

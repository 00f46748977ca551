//! Skip-gram with negative sampling over browsing sequences ("prod2vec").

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EmbeddingTable;
use crate::domain::SessionRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: super::DEFAULT_CONTEXT_DIM,
            window: 3,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_learning_rate: 0.0001,
            seed: 0,
        }
    }
}

impl SkipGramConfig {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("window", self.window),
            ("negatives", self.negatives),
            ("epochs", self.epochs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be a positive number"));
        }
        if !(self.min_learning_rate >= 0.0 && self.min_learning_rate <= self.learning_rate) {
            return Err(Error::config("min_learning_rate", "must lie in [0, learning_rate]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedEmbeddings {
    pub table: EmbeddingTable,
    /// Mean per-pair negative-sampling loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `-ln sigmoid(x)`, computed without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// Cumulative unigram^0.75 table for negative sampling.
struct NoiseDistribution {
    cumulative: Vec<f64>,
}

impl NoiseDistribution {
    fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        NoiseDistribution { cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

/// Trains product embeddings over each session's context sequence.
///
/// The returned table holds the input vectors of exactly the products that
/// appear in some context sequence. Deterministic for a given seed.
pub fn train_prod2vec(sessions: &[SessionRecord], config: &SkipGramConfig) -> Result<TrainedEmbeddings> {
    config.validate()?;

    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut sequences: Vec<Vec<usize>> = Vec::new();
    for s in sessions {
        let seq: Vec<usize> = s
            .context_products
            .iter()
            .map(|p| {
                *index.entry(p.as_str()).or_insert_with(|| {
                    ids.push(p.clone());
                    ids.len() - 1
                })
            })
            .collect();
        if !seq.is_empty() {
            sequences.push(seq);
        }
    }
    let mut counts = vec![0u64; ids.len()];
    for seq in &sequences {
        for &p in seq {
            counts[p] += 1;
        }
    }
    let trainable: Vec<&Vec<usize>> = sequences.iter().filter(|s| s.len() >= 2).collect();
    if trainable.is_empty() {
        return Err(Error::InsufficientCooccurrence);
    }

    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let half_width = 0.5 / dim as f64;
    let mut input: Vec<f64> = (0..ids.len() * dim)
        .map(|_| rng.random_range(-half_width..half_width))
        .collect();
    let mut output = vec![0.0; ids.len() * dim];
    let noise = NoiseDistribution::new(&counts);

    let tokens_per_epoch: usize = trainable.iter().map(|s| s.len()).sum();
    let total_tokens = (tokens_per_epoch * config.epochs) as f64;
    let mut processed = 0usize;
    let mut order: Vec<usize> = (0..trainable.len()).collect();
    let mut grad = vec![0.0; dim];
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut pairs = 0usize;
        for &si in &order {
            let seq = trainable[si];
            for (i, &center) in seq.iter().enumerate() {
                let progress = processed as f64 / total_tokens;
                let lr = (config.learning_rate * (1.0 - progress)).max(config.min_learning_rate);
                processed += 1;

                let lo = i.saturating_sub(config.window);
                let hi = (i + config.window).min(seq.len() - 1);
                for (j, &target) in seq.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i || target == center {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let inp = center * dim;
                    let mut pair_loss = 0.0;
                    for k in 0..=config.negatives {
                        let (word, label) = if k == 0 {
                            (target, 1.0)
                        } else {
                            let w = noise.sample(&mut rng);
                            if w == target {
                                continue;
                            }
                            (w, 0.0)
                        };
                        let out = word * dim;
                        let dot: f64 = (0..dim).map(|d| input[inp + d] * output[out + d]).sum();
                        pair_loss += if label > 0.0 {
                            neg_log_sigmoid(dot)
                        } else {
                            neg_log_sigmoid(-dot)
                        };
                        let g = (label - sigmoid(dot)) * lr;
                        for d in 0..dim {
                            grad[d] += g * output[out + d];
                            output[out + d] += g * input[inp + d];
                        }
                    }
                    for d in 0..dim {
                        input[inp + d] += grad[d];
                    }
                    loss_sum += pair_loss;
                    pairs += 1;
                }
            }
        }
        let mean = if pairs > 0 { loss_sum / pairs as f64 } else { 0.0 };
        if !mean.is_finite() {
            return Err(Error::NumericalDivergence);
        }
        epoch_losses.push(mean);
    }

    let mut table = EmbeddingTable::new(dim, config.seed)?;
    for (i, id) in ids.into_iter().enumerate() {
        table.insert(id, input[i * dim..(i + 1) * dim].to_vec())?;
    }
    Ok(TrainedEmbeddings { table, epoch_losses })
}

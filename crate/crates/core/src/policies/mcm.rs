//! Deep contextual bandit: an MLP scoring every arm from the session's
//! feature vector, retrained in batches from a sliding feedback buffer.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::strategy::{argmax, epsilon_greedy, sample_categorical, softmax, SelectionStrategy};
use crate::codec::{ByteReader, ByteWriter};
use crate::domain::FeedbackRecord;
use crate::encoders::{DEFAULT_CONTEXT_DIM, DEFAULT_QUERY_DIM};
use crate::error::{Error, Result};
use crate::neural::Mlp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmConfig {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub retrain_interval: u64,
    pub epochs_per_retrain: usize,
    pub buffer_capacity: usize,
    pub seed: u64,
}

impl Default for McmConfig {
    fn default() -> Self {
        McmConfig {
            input_dim: DEFAULT_CONTEXT_DIM + DEFAULT_QUERY_DIM,
            hidden_layers: vec![128],
            learning_rate: 0.05,
            retrain_interval: 5000,
            epochs_per_retrain: 2,
            buffer_capacity: 50_000,
            seed: 0,
        }
    }
}

impl McmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("input_dim", "must be positive"));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::config("hidden_layers", "sizes must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be a positive number"));
        }
        if self.retrain_interval == 0 {
            return Err(Error::config("retrain_interval", "must be positive"));
        }
        if self.epochs_per_retrain == 0 {
            return Err(Error::config("epochs_per_retrain", "must be positive"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("buffer_capacity", "must be positive"));
        }
        Ok(())
    }

    fn layer_sizes(&self, arms: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_layers.len() + 2);
        sizes.push(self.input_dim);
        sizes.extend_from_slice(&self.hidden_layers);
        sizes.push(arms);
        sizes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmState {
    config: McmConfig,
    net: Mlp,
    buffer: VecDeque<FeedbackRecord>,
    feedback_seen: u64,
    retrains: u64,
}

impl McmState {
    pub fn new(arms: usize, config: McmConfig) -> Result<Self> {
        config.validate()?;
        let net = Mlp::new(&config.layer_sizes(arms), config.seed)?;
        Ok(McmState {
            config,
            net,
            buffer: VecDeque::new(),
            feedback_seen: 0,
            retrains: 0,
        })
    }

    pub fn config(&self) -> &McmConfig {
        &self.config
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn arms(&self) -> usize {
        self.net.output_dim()
    }

    pub fn feedback_seen(&self) -> u64 {
        self.feedback_seen
    }

    /// Number of retraining passes run so far.
    pub fn retrains(&self) -> u64 {
        self.retrains
    }

    pub fn buffer(&self) -> &VecDeque<FeedbackRecord> {
        &self.buffer
    }

    /// Raw arm scores and their softmax.
    pub fn scores(&self, features: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let scores = self.net.scores(features)?;
        let dist = softmax(&scores);
        Ok((scores, dist))
    }

    pub fn greedy(&self, features: &[f64]) -> Result<usize> {
        Ok(argmax(&self.net.scores(features)?))
    }

    pub fn select(&self, features: &[f64], strategy: SelectionStrategy, rng: &mut impl Rng) -> Result<usize> {
        let (scores, dist) = self.scores(features)?;
        Ok(match strategy {
            SelectionStrategy::Sample => sample_categorical(&dist, rng),
            SelectionStrategy::EpsilonGreedy { epsilon } => epsilon_greedy(argmax(&scores), self.arms(), epsilon, rng),
        })
    }

    /// Buffers one feedback sample and retrains when the running count hits a
    /// multiple of the retrain interval. Returns whether a retrain ran.
    pub fn record_feedback(&mut self, features: &[f64], chosen_arm: usize, reward: u8) -> Result<bool> {
        if features.len() != self.net.input_dim() {
            return Err(Error::LengthMismatch {
                expected: self.net.input_dim(),
                got: features.len(),
            });
        }
        if chosen_arm >= self.arms() {
            return Err(Error::InvalidArgument(format!(
                "arm {chosen_arm} out of range for {} arms",
                self.arms()
            )));
        }
        if reward > 1 {
            return Err(Error::InvalidArgument(format!("reward must be 0 or 1, got {reward}")));
        }
        if self.buffer.len() == self.config.buffer_capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(FeedbackRecord {
            features: features.to_vec(),
            chosen_arm,
            reward,
        });
        self.feedback_seen += 1;
        if self.feedback_seen.is_multiple_of(self.config.retrain_interval) {
            self.retrain()?;
            return Ok(true);
        }
        Ok(false)
    }

    /// Runs `epochs_per_retrain` shuffled passes over the buffer. The shuffle
    /// stream depends only on the seed and the retrain ordinal, so a restored
    /// snapshot retrains identically.
    pub fn retrain(&mut self) -> Result<()> {
        let stream = self.config.seed ^ self.retrains.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        let mut order: Vec<usize> = (0..self.buffer.len()).collect();
        for _ in 0..self.config.epochs_per_retrain {
            order.shuffle(&mut rng);
            for &i in &order {
                let rec = &self.buffer[i];
                self.net
                    .train_step(&rec.features, rec.chosen_arm, rec.reward, self.config.learning_rate)?;
            }
        }
        self.retrains += 1;
        Ok(())
    }

    pub(crate) fn encode(&self, w: &mut ByteWriter) {
        w.tag(b"MCM1");
        let c = &self.config;
        w.usize(c.input_dim);
        w.usize(c.hidden_layers.len());
        c.hidden_layers.iter().for_each(|&h| w.usize(h));
        w.f64(c.learning_rate);
        w.u64(c.retrain_interval);
        w.usize(c.epochs_per_retrain);
        w.usize(c.buffer_capacity);
        w.u64(c.seed);
        w.u64(self.feedback_seen);
        w.u64(self.retrains);
        w.usize(self.net.num_layers());
        for l in 0..self.net.num_layers() {
            w.f64s(self.net.weights(l));
            w.f64s(self.net.biases(l));
        }
        w.usize(self.buffer.len());
        for rec in &self.buffer {
            w.f64s(&rec.features);
            w.usize(rec.chosen_arm);
            w.u8(rec.reward);
        }
    }

    pub(crate) fn decode(r: &mut ByteReader<'_>, arms: usize) -> Result<Self> {
        r.expect_tag(b"MCM1")?;
        let corrupt = |e: Error| Error::CorruptSnapshot(e.to_string());
        let input_dim = r.usize()?;
        let n_hidden = r.count()?;
        let hidden_layers = (0..n_hidden).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let config = McmConfig {
            input_dim,
            hidden_layers,
            learning_rate: r.f64()?,
            retrain_interval: r.u64()?,
            epochs_per_retrain: r.usize()?,
            buffer_capacity: r.usize()?,
            seed: r.u64()?,
        };
        let mut state = McmState::new(arms, config).map_err(corrupt)?;
        state.feedback_seen = r.u64()?;
        state.retrains = r.u64()?;
        let layers = r.usize()?;
        if layers != state.net.num_layers() {
            return Err(Error::CorruptSnapshot("layer count mismatch".into()));
        }
        for l in 0..layers {
            let weights = r.f64s()?;
            let biases = r.f64s()?;
            state.net.set_layer(l, weights, biases).map_err(corrupt)?;
        }
        let n = r.count()?;
        if n > state.config.buffer_capacity {
            return Err(Error::CorruptSnapshot("buffer exceeds capacity".into()));
        }
        for _ in 0..n {
            let features = r.f64s()?;
            let chosen_arm = r.usize()?;
            let reward = r.u8()?;
            if features.len() != input_dim || chosen_arm >= arms || reward > 1 {
                return Err(Error::CorruptSnapshot("invalid feedback record".into()));
            }
            state.buffer.push_back(FeedbackRecord {
                features,
                chosen_arm,
                reward,
            });
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(arms: usize, interval: u64, capacity: usize) -> McmState {
        McmState::new(
            arms,
            McmConfig {
                input_dim: 3,
                hidden_layers: vec![4],
                retrain_interval: interval,
                epochs_per_retrain: 1,
                buffer_capacity: capacity,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_net_gives_uniform_distribution() {
        let mut s = small(5, 10, 10);
        for i in 0..s.net.param_count() {
            s.net.set_param(i, 0.0);
        }
        let (_, dist) = s.scores(&[0.3, 0.1, -0.2]).unwrap();
        assert!(dist.iter().all(|&p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn buffer_keeps_most_recent() {
        let mut s = small(2, 1_000_000, 5);
        for i in 0..12 {
            s.record_feedback(&[i as f64, 0.0, 0.0], 0, 1).unwrap();
        }
        assert_eq!(s.buffer.len(), 5);
        assert_eq!(s.buffer.front().unwrap().features[0], 7.0);
        assert_eq!(s.buffer.back().unwrap().features[0], 11.0);
        assert_eq!(s.feedback_seen(), 12);
    }

    #[test]
    fn retrain_fires_on_multiples() {
        let mut s = small(2, 4, 100);
        let mut fired = Vec::new();
        for _ in 0..13 {
            if s.record_feedback(&[0.1, 0.2, 0.3], 1, 0).unwrap() {
                fired.push(s.feedback_seen());
            }
        }
        assert_eq!(fired, vec![4, 8, 12]);
        assert_eq!(s.retrains(), 3);
    }

    #[test]
    fn rejects_bad_feedback() {
        let mut s = small(2, 4, 100);
        assert!(s.record_feedback(&[0.0; 2], 0, 1).is_err());
        assert!(s.record_feedback(&[0.0; 3], 2, 1).is_err());
        assert!(s.record_feedback(&[0.0; 3], 0, 3).is_err());
        assert_eq!(s.feedback_seen(), 0);
    }

    #[test]
    fn invalid_config() {
        let bad = McmConfig {
            retrain_interval: 0,
            ..Default::default()
        };
        assert!(McmState::new(3, bad).is_err());
        let bad = McmConfig {
            hidden_layers: vec![0],
            ..Default::default()
        };
        assert!(McmState::new(3, bad).is_err());
    }
}

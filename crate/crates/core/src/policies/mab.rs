//! Discounted Beta-Bernoulli bandits, one per distinct query.
//!
//! Every update to a query's bandit first decays all of its arms by `gamma`,
//! then credits the played arm with the reward. A global bandit receives the
//! same sequence of updates and serves queries never seen in training.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::strategy::{argmax, epsilon_greedy, SelectionStrategy};
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MabConfig {
    pub gamma: f64,
    pub alpha0: f64,
    pub beta0: f64,
}

impl Default for MabConfig {
    fn default() -> Self {
        MabConfig {
            gamma: 0.9,
            alpha0: 1.0,
            beta0: 1.0,
        }
    }
}

impl MabConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gamma", "must lie in (0, 1]"));
        }
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(Error::config("alpha0", "must be positive"));
        }
        if !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            return Err(Error::config("beta0", "must be positive"));
        }
        Ok(())
    }
}

/// Discounted success and failure mass of one arm.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ArmStats {
    pub successes: f64,
    pub failures: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MabState {
    config: MabConfig,
    arms: usize,
    per_query: BTreeMap<String, Vec<ArmStats>>,
    global: Vec<ArmStats>,
    updates: u64,
}

fn discounted_update(stats: &mut [ArmStats], gamma: f64, arm: usize, reward: u8) {
    for s in stats.iter_mut() {
        s.successes *= gamma;
        s.failures *= gamma;
    }
    let r = f64::from(reward);
    stats[arm].successes += r;
    stats[arm].failures += 1.0 - r;
}

impl MabState {
    pub fn new(arms: usize, config: MabConfig) -> Result<Self> {
        config.validate()?;
        Ok(MabState {
            config,
            arms,
            per_query: BTreeMap::new(),
            global: vec![ArmStats::default(); arms],
            updates: 0,
        })
    }

    pub fn config(&self) -> &MabConfig {
        &self.config
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn query_stats(&self, query: &str) -> Option<&[ArmStats]> {
        self.per_query.get(query).map(Vec::as_slice)
    }

    pub fn global_stats(&self) -> &[ArmStats] {
        &self.global
    }

    /// The bandit that answers for `query`: its own, or the global one.
    fn stats_for(&self, query: &str) -> &[ArmStats] {
        self.per_query.get(query).unwrap_or(&self.global)
    }

    pub fn update(&mut self, query: &str, arm: usize, reward: u8) -> Result<()> {
        if arm >= self.arms {
            return Err(Error::InvalidArgument(format!(
                "arm {arm} out of range for {} arms",
                self.arms
            )));
        }
        if reward > 1 {
            return Err(Error::InvalidArgument(format!("reward must be 0 or 1, got {reward}")));
        }
        let (arms, gamma) = (self.arms, self.config.gamma);
        let stats = self
            .per_query
            .entry(query.to_string())
            .or_insert_with(|| vec![ArmStats::default(); arms]);
        discounted_update(stats, gamma, arm, reward);
        discounted_update(&mut self.global, gamma, arm, reward);
        self.updates += 1;
        Ok(())
    }

    pub fn posterior_means(&self, query: &str) -> Vec<f64> {
        let (a0, b0) = (self.config.alpha0, self.config.beta0);
        self.stats_for(query)
            .iter()
            .map(|s| (s.successes + a0) / (s.successes + a0 + s.failures + b0))
            .collect()
    }

    pub fn greedy(&self, query: &str) -> usize {
        argmax(&self.posterior_means(query))
    }

    pub fn select(&self, query: &str, strategy: SelectionStrategy, rng: &mut impl Rng) -> usize {
        match strategy {
            SelectionStrategy::Sample => {
                let (a0, b0) = (self.config.alpha0, self.config.beta0);
                let draws: Vec<f64> = self
                    .stats_for(query)
                    .iter()
                    .map(|s| {
                        Beta::new(s.successes + a0, s.failures + b0)
                            .expect("posterior parameters are positive")
                            .sample(rng)
                    })
                    .collect();
                argmax(&draws)
            }
            SelectionStrategy::EpsilonGreedy { epsilon } => epsilon_greedy(self.greedy(query), self.arms, epsilon, rng),
        }
    }

    fn encode_stats(w: &mut ByteWriter, stats: &[ArmStats]) {
        w.usize(stats.len());
        for s in stats {
            w.f64(s.successes);
            w.f64(s.failures);
        }
    }

    fn decode_stats(r: &mut ByteReader<'_>, arms: usize) -> Result<Vec<ArmStats>> {
        let n = r.count()?;
        if n != arms {
            return Err(Error::CorruptSnapshot("arm count mismatch".into()));
        }
        (0..n)
            .map(|_| {
                let successes = r.f64()?;
                let failures = r.f64()?;
                if !(successes >= 0.0 && failures >= 0.0) {
                    return Err(Error::CorruptSnapshot("negative arm statistics".into()));
                }
                Ok(ArmStats { successes, failures })
            })
            .collect()
    }

    pub(crate) fn encode(&self, w: &mut ByteWriter) {
        w.tag(b"MAB1");
        w.f64(self.config.gamma);
        w.f64(self.config.alpha0);
        w.f64(self.config.beta0);
        w.usize(self.arms);
        w.u64(self.updates);
        Self::encode_stats(w, &self.global);
        w.usize(self.per_query.len());
        for (q, stats) in &self.per_query {
            w.str(q);
            Self::encode_stats(w, stats);
        }
    }

    pub(crate) fn decode(r: &mut ByteReader<'_>) -> Result<Self> {
        r.expect_tag(b"MAB1")?;
        let config = MabConfig {
            gamma: r.f64()?,
            alpha0: r.f64()?,
            beta0: r.f64()?,
        };
        config.validate().map_err(|e| Error::CorruptSnapshot(e.to_string()))?;
        let arms = r.usize()?;
        let updates = r.u64()?;
        let global = Self::decode_stats(r, arms)?;
        let n = r.count()?;
        let mut per_query = BTreeMap::new();
        for _ in 0..n {
            let q = r.str()?;
            per_query.insert(q, Self::decode_stats(r, arms)?);
        }
        Ok(MabState {
            config,
            arms,
            per_query,
            global,
            updates,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(gamma: f64, arms: usize) -> MabState {
        MabState::new(
            arms,
            MabConfig {
                gamma,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn played_arm_decays_then_increments() {
        let mut s = state(0.9, 2);
        s.per_query.insert(
            "q".into(),
            vec![
                ArmStats {
                    successes: 2.0,
                    failures: 1.0,
                },
                ArmStats {
                    successes: 4.0,
                    failures: 0.0,
                },
            ],
        );
        s.update("q", 0, 1).unwrap();
        let st = s.query_stats("q").unwrap();
        assert!((st[0].successes - 2.8).abs() < 1e-12);
        assert!((st[0].failures - 0.9).abs() < 1e-12);
        assert!((st[1].successes - 3.6).abs() < 1e-12);
        assert_eq!(st[1].failures, 0.0);
    }

    #[test]
    fn undiscounted_counts() {
        let mut s = state(1.0, 3);
        for _ in 0..17 {
            s.update("q", 2, 1).unwrap();
        }
        assert_eq!(s.query_stats("q").unwrap()[2].successes, 17.0);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(MabState::new(
            2,
            MabConfig {
                gamma: 0.0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(MabState::new(
            2,
            MabConfig {
                gamma: 1.1,
                ..Default::default()
            }
        )
        .is_err());
        assert!(MabState::new(
            2,
            MabConfig {
                alpha0: 0.0,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn unseen_query_uses_global_stats() {
        let mut s = state(0.9, 3);
        for _ in 0..10 {
            s.update("a", 1, 1).unwrap();
            s.update("b", 2, 0).unwrap();
        }
        assert_eq!(s.posterior_means("zzz"), {
            let g = s.global_stats();
            g.iter()
                .map(|x| (x.successes + 1.0) / (x.successes + x.failures + 2.0))
                .collect::<Vec<_>>()
        });
        assert_eq!(s.greedy("zzz"), 1);
    }

    proptest! {
        #[test]
        fn stats_stay_non_negative(updates in proptest::collection::vec((0usize..3, 0usize..4, 0u8..2), 0..300),
                                   gamma in 0.01f64..=1.0) {
            let mut s = state(gamma, 4);
            for (q, a, r) in updates {
                s.update(&format!("q{q}"), a, r).unwrap();
            }
            for st in s.per_query.values().chain(std::iter::once(&s.global)) {
                for a in st {
                    prop_assert!(a.successes >= 0.0 && a.failures >= 0.0);
                }
            }
        }

        #[test]
        fn queries_are_isolated(updates in proptest::collection::vec((0usize..4, 0u8..2), 1..60)) {
            let mut s = state(0.9, 4);
            s.update("b", 3, 1).unwrap();
            let before = s.query_stats("b").unwrap().to_vec();
            for (a, r) in updates {
                s.update("a", a, r).unwrap();
            }
            prop_assert_eq!(s.query_stats("b").unwrap(), &before[..]);
        }
    }
}

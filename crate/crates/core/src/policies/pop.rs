//! Popularity baseline: the most clicked value for each query.

use std::collections::BTreeMap;

use rand::Rng;

use super::strategy::{argmax, epsilon_greedy, sample_categorical, SelectionStrategy};
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PopState {
    arms: usize,
    per_query: BTreeMap<String, Vec<u64>>,
    global: Vec<u64>,
}

fn normalized(counts: &[u64]) -> Option<Vec<f64>> {
    let total: u64 = counts.iter().sum();
    (total > 0).then(|| counts.iter().map(|&c| c as f64 / total as f64).collect())
}

impl PopState {
    pub fn new(arms: usize) -> Self {
        PopState {
            arms,
            per_query: BTreeMap::new(),
            global: vec![0; arms],
        }
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn query_counts(&self, query: &str) -> Option<&[u64]> {
        self.per_query.get(query).map(Vec::as_slice)
    }

    pub fn global_counts(&self) -> &[u64] {
        &self.global
    }

    pub fn total_clicks(&self) -> u64 {
        self.global.iter().sum()
    }

    /// Per-query click distribution, falling back to the global one and then
    /// to uniform.
    pub fn distribution(&self, query: &str) -> Vec<f64> {
        self.per_query
            .get(query)
            .and_then(|c| normalized(c))
            .or_else(|| normalized(&self.global))
            .unwrap_or_else(|| vec![1.0 / self.arms as f64; self.arms])
    }

    pub fn update(&mut self, query: &str, clicked_arm: usize) -> Result<()> {
        if clicked_arm >= self.arms {
            return Err(Error::InvalidArgument(format!(
                "arm {clicked_arm} out of range for {} arms",
                self.arms
            )));
        }
        let arms = self.arms;
        self.per_query.entry(query.to_string()).or_insert_with(|| vec![0; arms])[clicked_arm] += 1;
        self.global[clicked_arm] += 1;
        Ok(())
    }

    pub fn greedy(&self, query: &str) -> usize {
        argmax(&self.distribution(query))
    }

    pub fn select(&self, query: &str, strategy: SelectionStrategy, rng: &mut impl Rng) -> usize {
        let dist = self.distribution(query);
        match strategy {
            SelectionStrategy::Sample => sample_categorical(&dist, rng),
            SelectionStrategy::EpsilonGreedy { epsilon } => epsilon_greedy(argmax(&dist), self.arms, epsilon, rng),
        }
    }

    pub(crate) fn encode(&self, w: &mut ByteWriter) {
        w.tag(b"POP1");
        w.usize(self.arms);
        w.u64s(&self.global);
        w.usize(self.per_query.len());
        for (q, counts) in &self.per_query {
            w.str(q);
            w.u64s(counts);
        }
    }

    pub(crate) fn decode(r: &mut ByteReader<'_>) -> Result<Self> {
        r.expect_tag(b"POP1")?;
        let arms = r.usize()?;
        let global = r.u64s()?;
        let n = r.count()?;
        let mut per_query = BTreeMap::new();
        for _ in 0..n {
            let q = r.str()?;
            let counts = r.u64s()?;
            if counts.len() != arms {
                return Err(Error::CorruptSnapshot("per-query arm count mismatch".into()));
            }
            per_query.insert(q, counts);
        }
        if global.len() != arms {
            return Err(Error::CorruptSnapshot("global arm count mismatch".into()));
        }
        Ok(PopState {
            arms,
            per_query,
            global,
        })
    }
}

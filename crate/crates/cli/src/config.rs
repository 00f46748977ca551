//! TOML experiment configuration for `replay`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use discotag::encoders::{SkipGramConfig, DEFAULT_CONTEXT_DIM, DEFAULT_QUERY_DIM};
use discotag::policies::{MabConfig, McmConfig, PolicyKind, SelectionStrategy};
use discotag::replay::DEFAULT_ROUNDS;
use discotag::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    Sample,
    EpsilonGreedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextEncoderKind {
    /// Skip-gram embeddings trained on the training contexts.
    Prod2vec,
    /// Seeded hash embeddings; no training.
    Hash,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding `catalog.jsonl`, `train.jsonl` and `test.jsonl`.
    pub dir: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub context: ContextEncoderKind,
    pub context_dim: usize,
    pub query_dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for EncoderSection {
    fn default() -> Self {
        let sg = SkipGramConfig::default();
        EncoderSection {
            context: ContextEncoderKind::Prod2vec,
            context_dim: DEFAULT_CONTEXT_DIM,
            query_dim: DEFAULT_QUERY_DIM,
            window: sg.window,
            negatives: sg.negatives,
            epochs: sg.epochs,
            learning_rate: sg.learning_rate,
        }
    }
}

impl EncoderSection {
    pub fn skip_gram(&self, seed: u64) -> SkipGramConfig {
        SkipGramConfig {
            dim: self.context_dim,
            window: self.window,
            negatives: self.negatives,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmSection {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub retrain_interval: u64,
    pub epochs_per_retrain: usize,
    pub buffer_capacity: usize,
}

impl Default for McmSection {
    fn default() -> Self {
        let c = McmConfig::default();
        McmSection {
            hidden_layers: c.hidden_layers,
            learning_rate: c.learning_rate,
            retrain_interval: c.retrain_interval,
            epochs_per_retrain: c.epochs_per_retrain,
            buffer_capacity: c.buffer_capacity,
        }
    }
}

impl McmSection {
    pub fn config(&self, input_dim: usize, seed: u64) -> McmConfig {
        McmConfig {
            input_dim,
            hidden_layers: self.hidden_layers.clone(),
            learning_rate: self.learning_rate,
            retrain_interval: self.retrain_interval,
            epochs_per_retrain: self.epochs_per_retrain,
            buffer_capacity: self.buffer_capacity,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub tenant: String,
    pub tag_type: String,
    pub policies: Vec<PolicyKind>,
    pub strategy: StrategyName,
    pub epsilon: f64,
    pub n_rounds: usize,
    pub ablate_context: bool,
    pub parallel_policies: bool,
    pub snapshots: bool,
    pub data: DataSection,
    pub encoder: EncoderSection,
    pub mab: MabConfig,
    pub mcm: McmSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 17,
            tenant: "default".into(),
            tag_type: "sport".into(),
            policies: vec![PolicyKind::Pop, PolicyKind::Mab, PolicyKind::Mcm],
            strategy: StrategyName::Sample,
            epsilon: SelectionStrategy::DEFAULT_EPSILON,
            n_rounds: DEFAULT_ROUNDS,
            ablate_context: false,
            parallel_policies: false,
            snapshots: true,
            data: DataSection::default(),
            encoder: EncoderSection::default(),
            mab: MabConfig::default(),
            mcm: McmSection::default(),
        }
    }
}

/// Resolved input file locations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPaths {
    pub train: PathBuf,
    pub test: PathBuf,
    pub catalog: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let field = |f: &str, m: &str| Error::Config {
            field: f.to_string(),
            message: m.to_string(),
        };
        if self.n_rounds == 0 {
            return Err(field("n_rounds", "must be at least 1"));
        }
        if self.policies.is_empty() {
            return Err(field("policies", "must list at least one of pop, mab, mcm"));
        }
        let mut sorted = self.policies.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.policies.len() {
            return Err(field("policies", "lists a policy twice"));
        }
        if self.tenant.trim().is_empty() {
            return Err(field("tenant", "must not be empty"));
        }
        if self.tag_type.is_empty() {
            return Err(field("tag_type", "must not be empty"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(field("epsilon", "must lie in [0, 1]"));
        }
        if self.encoder.context_dim == 0 {
            return Err(field("encoder.context_dim", "must be positive"));
        }
        if self.encoder.query_dim == 0 {
            return Err(field("encoder.query_dim", "must be positive"));
        }
        self.mab.validate()?;
        self.mcm
            .config(self.encoder.context_dim + self.encoder.query_dim, self.seed)
            .validate()?;
        Ok(())
    }

    pub fn strategy(&self) -> SelectionStrategy {
        match self.strategy {
            StrategyName::Sample => SelectionStrategy::Sample,
            StrategyName::EpsilonGreedy => SelectionStrategy::EpsilonGreedy { epsilon: self.epsilon },
        }
    }

    /// Input paths, with `data_dir` taking precedence over the file.
    /// Relative paths in the file resolve against `base`.
    pub fn data_paths(&self, base: &Path, data_dir: Option<&Path>) -> Result<DataPaths, Error> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let dir = match data_dir {
            Some(d) => Some(d.to_path_buf()),
            None => self.data.dir.as_deref().map(resolve),
        };
        let pick = |explicit: &Option<PathBuf>, name: &str, field: &str| -> Result<PathBuf, Error> {
            if data_dir.is_none() {
                if let Some(p) = explicit {
                    return Ok(resolve(p));
                }
            }
            dir.as_ref().map(|d| d.join(name)).ok_or_else(|| Error::Config {
                field: format!("data.{field}"),
                message: "is not set and no data directory was given".into(),
            })
        };
        Ok(DataPaths {
            train: pick(&self.data.train, "train.jsonl", "train")?,
            test: pick(&self.data.test, "test.jsonl", "test")?,
            catalog: pick(&self.data.catalog, "catalog.jsonl", "catalog")?,
        })
    }
}

/// Reads a TOML file into `T`, reporting the offending key on failure.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_toml(&text).with_context(|| format!("in {}", path.display()))
}

pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = toml::Deserializer::parse(text).map_err(|e| config_error("<syntax>", e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        config_error(&field, e.into_inner().to_string())
    })
}

fn config_error(field: &str, message: String) -> anyhow::Error {
    Error::Config {
        field: field.to_string(),
        message: message.trim().to_string(),
    }
    .into()
}

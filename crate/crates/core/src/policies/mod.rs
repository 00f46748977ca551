//! POP, MAB and MCM behind one selection contract.
//!
//! A [`Policy`] owns the vocabulary of the tag type it serves and one of the
//! three model states. Training-time decisions go through [`Policy::select`]
//! with a [`SelectionStrategy`]; evaluation uses [`Policy::greedy`], which
//! never consumes randomness or mutates state.

mod mab;
mod mcm;
mod pop;
mod strategy;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use mab::{ArmStats, MabConfig, MabState};
pub use mcm::{McmConfig, McmState};
pub use pop::PopState;
pub use strategy::{argmax, softmax, SelectionStrategy};

use crate::codec::{ByteReader, ByteWriter};
use crate::domain::{normalize_query, SessionRecord, TagVocabulary};
use crate::encoders::FeatureEncoder;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Pop,
    Mab,
    Mcm,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Pop => "pop",
            PolicyKind::Mab => "mab",
            PolicyKind::Mcm => "mcm",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pop" => Ok(PolicyKind::Pop),
            "mab" => Ok(PolicyKind::Mab),
            "mcm" => Ok(PolicyKind::Mcm),
            other => Err(Error::InvalidArgument(format!("unknown policy `{other}`"))),
        }
    }
}

/// Hyperparameters for a fresh policy; the variant selects the kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PolicyConfig {
    Pop,
    Mab(MabConfig),
    Mcm(McmConfig),
}

impl PolicyConfig {
    pub fn kind(&self) -> PolicyKind {
        match self {
            PolicyConfig::Pop => PolicyKind::Pop,
            PolicyConfig::Mab(_) => PolicyKind::Mab,
            PolicyConfig::Mcm(_) => PolicyKind::Mcm,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyState {
    Pop(PopState),
    Mab(MabState),
    Mcm(McmState),
}

/// What a policy sees of a session at decision time.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub query: String,
    pub features: Option<Vec<f64>>,
}

impl Observation {
    pub fn new(raw_query: &str, features: Option<Vec<f64>>) -> Self {
        Observation {
            query: normalize_query(raw_query),
            features,
        }
    }

    pub fn from_session(session: &SessionRecord, encoder: Option<&FeatureEncoder>) -> Result<Self> {
        let features = match encoder {
            Some(enc) => Some(enc.encode_session(session)?.into_inner()),
            None => None,
        };
        Ok(Observation::new(&session.query, features))
    }

    fn features(&self) -> Result<&[f64]> {
        self.features
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("MCM needs a feature encoder".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    vocabulary: TagVocabulary,
    config: PolicyConfig,
    state: PolicyState,
}

impl Policy {
    pub fn new(vocabulary: TagVocabulary, config: PolicyConfig) -> Result<Self> {
        let arms = vocabulary.len();
        let state = match &config {
            PolicyConfig::Pop => PolicyState::Pop(PopState::new(arms)),
            PolicyConfig::Mab(c) => PolicyState::Mab(MabState::new(arms, *c)?),
            PolicyConfig::Mcm(c) => PolicyState::Mcm(McmState::new(arms, c.clone())?),
        };
        Ok(Policy {
            vocabulary,
            config,
            state,
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.config.kind()
    }

    pub fn vocabulary(&self) -> &TagVocabulary {
        &self.vocabulary
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut PolicyState {
        &mut self.state
    }

    /// Feedback events absorbed so far.
    pub fn feedback_count(&self) -> u64 {
        match &self.state {
            PolicyState::Pop(s) => s.total_clicks(),
            PolicyState::Mab(s) => s.updates(),
            PolicyState::Mcm(s) => s.feedback_seen(),
        }
    }

    /// Model distribution over arms, where the model has one (POP and MCM).
    pub fn distribution(&self, obs: &Observation) -> Result<Option<Vec<f64>>> {
        Ok(match &self.state {
            PolicyState::Pop(s) => Some(s.distribution(&obs.query)),
            PolicyState::Mab(_) => None,
            PolicyState::Mcm(s) => Some(s.scores(obs.features()?)?.1),
        })
    }

    pub fn select(&self, obs: &Observation, strategy: SelectionStrategy, rng: &mut impl Rng) -> Result<usize> {
        match &self.state {
            PolicyState::Pop(s) => Ok(s.select(&obs.query, strategy, rng)),
            PolicyState::Mab(s) => Ok(s.select(&obs.query, strategy, rng)),
            PolicyState::Mcm(s) => s.select(obs.features()?, strategy, rng),
        }
    }

    /// Deterministic decision: argmax of counts, posterior means or scores.
    pub fn greedy(&self, obs: &Observation) -> Result<usize> {
        match &self.state {
            PolicyState::Pop(s) => Ok(s.greedy(&obs.query)),
            PolicyState::Mab(s) => Ok(s.greedy(&obs.query)),
            PolicyState::Mcm(s) => s.greedy(obs.features()?),
        }
    }

    /// Applies the outcome of one decision. POP learns from the clicked
    /// value; MAB and MCM learn from the reward of the arm they played.
    pub fn learn(&mut self, obs: &Observation, played_arm: usize, reward: u8, clicked_arm: usize) -> Result<()> {
        match &mut self.state {
            PolicyState::Pop(s) => s.update(&obs.query, clicked_arm),
            PolicyState::Mab(s) => s.update(&obs.query, played_arm, reward),
            PolicyState::Mcm(s) => s.record_feedback(obs.features()?, played_arm, reward).map(|_| ()),
        }
    }

    fn check_session(&self, session: &SessionRecord) -> Result<()> {
        if &session.tag_type != self.vocabulary.tag_type() {
            return Err(Error::VocabularyMismatch(format!(
                "session `{}` asks for `{}` but the policy serves `{}`",
                session.session_id,
                session.tag_type,
                self.vocabulary.tag_type()
            )));
        }
        Ok(())
    }

    /// Picks a tag value for a session under the given strategy.
    pub fn act(
        &self,
        session: &SessionRecord,
        encoder: Option<&FeatureEncoder>,
        strategy: SelectionStrategy,
        rng: &mut impl Rng,
    ) -> Result<(String, usize)> {
        self.check_session(session)?;
        let encoder = if self.kind() == PolicyKind::Mcm { encoder } else { None };
        let obs = Observation::from_session(session, encoder)?;
        let arm = self.select(&obs, strategy, rng)?;
        let value = self.vocabulary.value(arm).expect("arm within vocabulary").to_string();
        Ok((value, arm))
    }

    pub(crate) fn encode_state(&self, w: &mut ByteWriter) {
        match &self.state {
            PolicyState::Pop(s) => s.encode(w),
            PolicyState::Mab(s) => s.encode(w),
            PolicyState::Mcm(s) => s.encode(w),
        }
    }

    /// Serialized state bytes; equal bytes mean equal decisions.
    pub fn state_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        self.encode_state(&mut w);
        w.into_bytes()
    }

    pub(crate) fn decode_state(vocabulary: TagVocabulary, kind: PolicyKind, payload: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(payload);
        let arms = vocabulary.len();
        let (state, config) = match kind {
            PolicyKind::Pop => (PolicyState::Pop(PopState::decode(&mut r)?), PolicyConfig::Pop),
            PolicyKind::Mab => {
                let s = MabState::decode(&mut r)?;
                let c = *s.config();
                (PolicyState::Mab(s), PolicyConfig::Mab(c))
            }
            PolicyKind::Mcm => {
                let s = McmState::decode(&mut r, arms)?;
                let c = s.config().clone();
                (PolicyState::Mcm(s), PolicyConfig::Mcm(c))
            }
        };
        r.finish()?;
        let state_arms = match &state {
            PolicyState::Pop(s) => s.arms(),
            PolicyState::Mab(s) => s.arms(),
            PolicyState::Mcm(s) => s.arms(),
        };
        if state_arms != arms {
            return Err(Error::CorruptSnapshot("state does not match vocabulary size".into()));
        }
        Ok(Policy {
            vocabulary,
            config,
            state,
        })
    }
}

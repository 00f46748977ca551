//! Offline log replay: stream time-ordered training sessions to each policy
//! in rounds, reward decisions from logged clicks and score greedy decisions
//! on held-out sessions after every round.

mod metrics;
mod report;

use std::collections::HashMap;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use metrics::weighted_f1;
pub use report::{ReplayReport, ReportRow};

use crate::domain::{normalize_query, Catalog, SessionRecord, TagVocabulary};
use crate::encoders::{seeded_hash, FeatureEncoder};
use crate::error::{Error, Result};
use crate::policies::{Observation, Policy, PolicyConfig, PolicyKind, SelectionStrategy};

pub const DEFAULT_ROUNDS: usize = 60;

/// Contiguous index ranges partitioning a time-ordered session list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundPlan {
    rounds: Vec<Range<usize>>,
}

impl RoundPlan {
    pub fn rounds(&self) -> &[Range<usize>] {
        &self.rounds
    }

    pub fn n_rounds(&self) -> usize {
        self.rounds.len()
    }
}

pub fn split_rounds(n_sessions: usize, n_rounds: usize) -> Result<RoundPlan> {
    if n_rounds == 0 {
        return Err(Error::InvalidArgument("n_rounds must be at least 1".into()));
    }
    if n_sessions < n_rounds {
        return Err(Error::InvalidArgument(format!(
            "{n_sessions} sessions cannot fill {n_rounds} rounds"
        )));
    }
    let size = n_sessions / n_rounds;
    let rounds = (0..n_rounds)
        .map(|r| {
            let end = if r + 1 == n_rounds { n_sessions } else { (r + 1) * size };
            r * size..end
        })
        .collect();
    Ok(RoundPlan { rounds })
}

/// Majority attribute value of the clicked products for the session's tag
/// type, ties going to the value clicked first.
pub fn ground_truth_value<'c>(session: &SessionRecord, catalog: &'c Catalog) -> Option<&'c str> {
    let clicked: Vec<&str> = session
        .clicked_products
        .iter()
        .filter_map(|p| catalog.attribute(p, session.tag_type.as_str()))
        .collect();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for v in &clicked {
        *counts.entry(v).or_default() += 1;
    }
    let mut best: Option<(&str, usize)> = None;
    for v in clicked {
        let c = counts[v];
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((v, c));
        }
    }
    best.map(|(v, _)| v)
}

/// 1 when `predicted` matches the attribute of any clicked product.
pub fn assign_reward(predicted: &str, session: &SessionRecord, catalog: &Catalog) -> u8 {
    let hit = session
        .clicked_products
        .iter()
        .any(|p| catalog.attribute(p, session.tag_type.as_str()) == Some(predicted));
    u8::from(hit)
}

/// Weighted F1 of one evaluation pass and the number of sessions scored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub weighted_f1: f64,
    pub n_eval: usize,
}

/// Scores greedy decisions against ground truth. Takes the policy by shared
/// reference, so evaluation cannot alter its state.
pub fn evaluate(
    policy: &Policy,
    test_sessions: &[SessionRecord],
    catalog: &Catalog,
    encoder: Option<&FeatureEncoder>,
) -> Result<Evaluation> {
    let prepared = prepare(test_sessions, catalog, policy.vocabulary())?;
    let features = features_for(policy.config(), &prepared, encoder)?;
    evaluate_prepared(policy, &prepared, &features)
}

/// How to build one policy for a replay run.
#[derive(Clone)]
pub struct PolicySpec {
    pub label: String,
    pub config: PolicyConfig,
    /// Feature encoder; required for MCM and ignored otherwise.
    pub encoder: Option<FeatureEncoder>,
}

impl PolicySpec {
    pub fn new(label: impl Into<String>, config: PolicyConfig) -> Self {
        PolicySpec {
            label: label.into(),
            config,
            encoder: None,
        }
    }

    pub fn with_encoder(mut self, encoder: FeatureEncoder) -> Self {
        self.encoder = Some(encoder);
        self
    }
}

/// Inputs shared by every policy of a replay run.
#[derive(Clone, Copy)]
pub struct ReplayData<'a> {
    pub train: &'a [SessionRecord],
    pub test: &'a [SessionRecord],
    pub catalog: &'a Catalog,
    pub vocabulary: &'a TagVocabulary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplaySettings {
    pub strategy: SelectionStrategy,
    pub n_rounds: usize,
    pub seed: u64,
    /// Replay policies on separate threads. Output is identical either way.
    pub parallel: bool,
}

impl Default for ReplaySettings {
    fn default() -> Self {
        ReplaySettings {
            strategy: SelectionStrategy::Sample,
            n_rounds: DEFAULT_ROUNDS,
            seed: 0,
            parallel: false,
        }
    }
}

/// Report plus the trained policies, in spec order.
#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub report: ReplayReport,
    pub policies: Vec<(String, Policy)>,
}

/// Session facts that do not depend on the policy.
struct Prepared<'a> {
    session: &'a SessionRecord,
    query: String,
    truth: Option<String>,
    truth_arm: Option<usize>,
}

fn prepare<'a>(
    sessions: &'a [SessionRecord],
    catalog: &Catalog,
    vocabulary: &TagVocabulary,
) -> Result<Vec<Prepared<'a>>> {
    sessions
        .iter()
        .map(|s| {
            if &s.tag_type != vocabulary.tag_type() {
                return Err(Error::VocabularyMismatch(format!(
                    "session `{}` asks for `{}` but the replay serves `{}`",
                    s.session_id,
                    s.tag_type,
                    vocabulary.tag_type()
                )));
            }
            let truth = ground_truth_value(s, catalog).map(str::to_string);
            let truth_arm = truth.as_deref().and_then(|v| vocabulary.arm_of(v));
            Ok(Prepared {
                session: s,
                query: normalize_query(&s.query),
                truth,
                truth_arm,
            })
        })
        .collect()
}

fn features_for(
    config: &PolicyConfig,
    sessions: &[Prepared<'_>],
    encoder: Option<&FeatureEncoder>,
) -> Result<Vec<Option<Vec<f64>>>> {
    match (config.kind(), encoder) {
        (PolicyKind::Mcm, None) => Err(Error::InvalidArgument("MCM needs a feature encoder".into())),
        (PolicyKind::Mcm, Some(enc)) => sessions
            .iter()
            .map(|p| enc.encode_session(p.session).map(|f| Some(f.into_inner())))
            .collect(),
        _ => Ok(vec![None; sessions.len()]),
    }
}

fn evaluate_prepared(policy: &Policy, sessions: &[Prepared<'_>], features: &[Option<Vec<f64>>]) -> Result<Evaluation> {
    let mut predictions = Vec::new();
    let mut labels = Vec::new();
    for (p, f) in sessions.iter().zip(features) {
        let Some(truth) = &p.truth else { continue };
        let obs = Observation {
            query: p.query.clone(),
            features: f.clone(),
        };
        let arm = policy.greedy(&obs)?;
        predictions.push(policy.vocabulary().value(arm).expect("arm within vocabulary"));
        labels.push(truth.as_str());
    }
    if labels.is_empty() {
        return Err(Error::NoScorableSessions);
    }
    Ok(Evaluation {
        weighted_f1: weighted_f1(&predictions, &labels)?,
        n_eval: labels.len(),
    })
}

/// Per-policy rng seed: depends on the run seed and the label only, so each
/// policy's trajectory is independent of which others run beside it.
fn policy_seed(seed: u64, label: &str) -> u64 {
    seeded_hash(seed, label, 0)
}

fn replay_one(
    spec: &PolicySpec,
    data: &ReplayData<'_>,
    train: &[Prepared<'_>],
    test: &[Prepared<'_>],
    plan: &RoundPlan,
    settings: &ReplaySettings,
) -> Result<(Vec<ReportRow>, Policy)> {
    let mut policy = Policy::new(data.vocabulary.clone(), spec.config.clone())?;
    let encoder = spec.encoder.as_ref();
    let train_features = features_for(&spec.config, train, encoder)?;
    let test_features = features_for(&spec.config, test, encoder)?;
    let mut rng = ChaCha8Rng::seed_from_u64(policy_seed(settings.seed, &spec.label));
    let mut rows = Vec::with_capacity(plan.n_rounds());

    for (r, range) in plan.rounds().iter().enumerate() {
        for i in range.clone() {
            let p = &train[i];
            if p.truth.is_none() {
                continue;
            }
            let obs = Observation {
                query: p.query.clone(),
                features: train_features[i].clone(),
            };
            let arm = policy.select(&obs, settings.strategy, &mut rng)?;
            let value = data.vocabulary.value(arm).expect("arm within vocabulary");
            let reward = assign_reward(value, p.session, data.catalog);
            match (policy.kind(), p.truth_arm) {
                // POP counts ground-truth values; one outside the vocabulary
                // has no arm to credit.
                (PolicyKind::Pop, None) => {}
                (PolicyKind::Pop, Some(t)) => policy.learn(&obs, arm, reward, t)?,
                _ => policy.learn(&obs, arm, reward, arm)?,
            }
        }
        let eval = evaluate_prepared(&policy, test, &test_features)?;
        rows.push(ReportRow {
            round: r + 1,
            policy: spec.label.clone(),
            strategy: settings.strategy.name().to_string(),
            tag_type: data.vocabulary.tag_type().to_string(),
            weighted_f1: eval.weighted_f1,
            n_eval: eval.n_eval,
        });
    }
    Ok((rows, policy))
}

/// Replays every spec over the same data. Rows come out round-ascending, and
/// within a round in spec order.
pub fn run_replay(data: ReplayData<'_>, specs: &[PolicySpec], settings: &ReplaySettings) -> Result<ReplayOutcome> {
    let mut labels: Vec<&str> = specs.iter().map(|s| s.label.as_str()).collect();
    labels.sort_unstable();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("policy labels must be unique".into()));
    }
    let plan = split_rounds(data.train.len(), settings.n_rounds)?;
    let train = prepare(data.train, data.catalog, data.vocabulary)?;
    let test = prepare(data.test, data.catalog, data.vocabulary)?;
    if test.iter().all(|p| p.truth.is_none()) {
        return Err(Error::NoScorableSessions);
    }

    let results: Vec<Result<(Vec<ReportRow>, Policy)>> = if settings.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = specs
                .iter()
                .map(|spec| {
                    let (train, test, plan, data) = (&train, &test, &plan, &data);
                    scope.spawn(move || replay_one(spec, data, train, test, plan, settings))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("replay thread panicked"))
                .collect()
        })
    } else {
        specs
            .iter()
            .map(|spec| replay_one(spec, &data, &train, &test, &plan, settings))
            .collect()
    };

    let mut per_policy = Vec::with_capacity(specs.len());
    let mut policies = Vec::with_capacity(specs.len());
    for (spec, res) in specs.iter().zip(results) {
        let (rows, policy) = res?;
        per_policy.push(rows);
        policies.push((spec.label.clone(), policy));
    }
    let mut rows = Vec::with_capacity(plan.n_rounds() * specs.len());
    for r in 0..plan.n_rounds() {
        rows.extend(per_policy.iter().map(|p| p[r].clone()));
    }
    Ok(ReplayOutcome {
        report: ReplayReport::new(rows),
        policies,
    })
}

//! Synthetic catalogs and session logs with planted context-to-tag structure.
//!
//! Every session belongs to a latent persona holding one preferred value per
//! tag type. Browsed products lean towards the persona's value for the
//! session's tag type, clicked products carry it up to label noise, and the
//! query comes from a small generic list shared by all personas. Persona
//! popularity is Zipf-shaped and, with drift enabled, its ranking rotates
//! every `period` training sessions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{write_catalog, write_sessions, Catalog, Product, SessionRecord, TagType};
use crate::encoders::seeded_hash;
use crate::error::{Error, Result};

const CATALOG_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const TEST_STREAM: u64 = 3;

const SPORTS: [&str; 8] = [
    "soccer",
    "running",
    "basketball",
    "tennis",
    "training",
    "outdoor",
    "swimming",
    "cycling",
];
const GENDERS: [&str; 2] = ["women", "men"];
const PRICES: [&str; 4] = ["0-50", "50-100", "100-500", "500+"];

const DEFAULT_QUERIES: [&str; 12] = [
    "shoes",
    "shirt",
    "jacket",
    "shorts",
    "socks",
    "bag",
    "pants",
    "cap",
    "running shoes",
    "t-shirt",
    "sports bra",
    "gift ideas",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    /// Training sessions between two rotations of the persona ranking.
    pub period: u64,
    /// Ranking positions the popularity weights rotate by at each period.
    /// Fractional rotations interpolate between neighbouring ranks.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub seed: u64,
    pub n_train_sessions: usize,
    pub n_test_sessions: usize,
    pub catalog_size: usize,
    pub tag_cardinalities: BTreeMap<String, usize>,
    /// Tag types sessions ask about, drawn uniformly per session.
    pub session_tag_types: Vec<String>,
    pub zipf_exponent: f64,
    pub context_len_range: [usize; 2],
    pub click_len_range: [usize; 2],
    pub noise: f64,
    pub context_strength: f64,
    pub queries: Vec<String>,
    pub start_timestamp: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftConfig>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 17,
            n_train_sessions: 20_000,
            n_test_sessions: 5_000,
            catalog_size: 1_000,
            tag_cardinalities: BTreeMap::from([
                ("sport".into(), 8),
                ("gender".into(), 2),
                ("brand".into(), 349),
                ("price".into(), 4),
            ]),
            session_tag_types: vec!["sport".into()],
            zipf_exponent: 2.0,
            context_len_range: [1, 5],
            click_len_range: [1, 2],
            noise: 0.1,
            context_strength: 0.9,
            queries: DEFAULT_QUERIES.iter().map(|q| q.to_string()).collect(),
            start_timestamp: 1_600_000_000_000,
            drift: None,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train_sessions == 0 {
            return Err(Error::config("n_train_sessions", "must be positive"));
        }
        if self.n_test_sessions == 0 {
            return Err(Error::config("n_test_sessions", "must be positive"));
        }
        if self.tag_cardinalities.is_empty() {
            return Err(Error::config("tag_cardinalities", "must name at least one tag type"));
        }
        for (t, &k) in &self.tag_cardinalities {
            TagType::new(t.as_str()).map_err(|_| Error::config("tag_cardinalities", "has an empty tag type"))?;
            if k < 2 {
                return Err(Error::config(
                    "tag_cardinalities",
                    format!("`{t}` needs at least 2 values"),
                ));
            }
        }
        let max_k = self.tag_cardinalities.values().copied().max().unwrap_or(0);
        if self.catalog_size == 0 || self.catalog_size < max_k {
            return Err(Error::config(
                "catalog_size",
                format!("must be positive and at least the largest cardinality ({max_k})"),
            ));
        }
        if self.session_tag_types.is_empty() {
            return Err(Error::config("session_tag_types", "must not be empty"));
        }
        if let Some(t) = self
            .session_tag_types
            .iter()
            .find(|t| !self.tag_cardinalities.contains_key(*t))
        {
            return Err(Error::config("session_tag_types", format!("`{t}` has no cardinality")));
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return Err(Error::config("zipf_exponent", "must be a non-negative number"));
        }
        let [cmin, cmax] = self.context_len_range;
        if cmin > cmax {
            return Err(Error::config("context_len_range", "min exceeds max"));
        }
        let [kmin, kmax] = self.click_len_range;
        if kmin == 0 || kmin > kmax {
            return Err(Error::config("click_len_range", "needs 1 <= min <= max"));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::config("noise", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.context_strength) {
            return Err(Error::config("context_strength", "must lie in [0, 1]"));
        }
        if self.queries.is_empty() || self.queries.iter().any(|q| q.trim().is_empty()) {
            return Err(Error::config(
                "queries",
                "must be a non-empty list of non-blank queries",
            ));
        }
        if let Some(d) = &self.drift {
            if d.period == 0 {
                return Err(Error::config("drift.period", "must be positive"));
            }
            if !(d.magnitude >= 0.0 && d.magnitude.is_finite()) {
                return Err(Error::config("drift.magnitude", "must be a non-negative number"));
            }
        }
        Ok(())
    }

    fn cardinality(&self, tag_type: &str) -> Result<usize> {
        self.tag_cardinalities
            .get(tag_type)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown tag type `{tag_type}`")))
    }

    /// How far, in ranking positions, the persona ranking has rotated by
    /// drift period `epoch`.
    pub fn drift_offset(&self, epoch: u64) -> f64 {
        match &self.drift {
            Some(d) => d.magnitude * epoch as f64,
            None => 0.0,
        }
    }

    /// Drift period in force for the training session at `index`.
    pub fn drift_epoch(&self, index: usize) -> u64 {
        match &self.drift {
            Some(d) => index as u64 / d.period,
            None => 0,
        }
    }
}

/// Display names of a tag type's values, in value-index order.
pub fn value_names(tag_type: &str, k: usize) -> Vec<String> {
    let known: &[&str] = match tag_type {
        "sport" => &SPORTS,
        "gender" => &GENDERS,
        "price" => &PRICES,
        _ => &[],
    };
    if k <= known.len() {
        return known[..k].iter().map(|s| s.to_string()).collect();
    }
    let width = (k - 1).to_string().len().max(3);
    (0..k).map(|i| format!("{tag_type}_{i:0width$}")).collect()
}

/// Normalized Zipf weights by rank: `w_r ∝ (r + 1)^-s`.
pub fn zipf_weights(k: usize, exponent: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|r| (r as f64 + 1.0).powf(-exponent)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Seeded permutation mapping popularity rank to value index.
fn rank_order(seed: u64, tag_type: &str, k: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seeded_hash(seed, tag_type, 0));
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut rng);
    order
}

/// Popularity of each value (by value index) in drift period `epoch`. Epoch 0
/// is also the distribution products are drawn from. Drift moves every value
/// up the ranking, the leader wrapping around to the bottom.
pub fn popularity(config: &GenConfig, tag_type: &str, epoch: u64) -> Result<Vec<f64>> {
    let k = config.cardinality(tag_type)?;
    let zipf = zipf_weights(k, config.zipf_exponent);
    let order = rank_order(config.seed, tag_type, k);
    let offset = config.drift_offset(epoch);
    let mut weights = vec![0.0; k];
    for (r, &v) in order.iter().enumerate() {
        let pos = (r as f64 - offset).rem_euclid(k as f64);
        let lo = (pos.floor() as usize).min(k - 1);
        let frac = pos - lo as f64;
        weights[v] = (1.0 - frac) * zipf[lo] + frac * zipf[(lo + 1) % k];
    }
    Ok(weights)
}

pub fn gen_catalog(config: &GenConfig) -> Result<Catalog> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(CATALOG_STREAM);
    let mut samplers = Vec::new();
    for (t, &k) in &config.tag_cardinalities {
        let weights = popularity(config, t, 0)?;
        let dist = WeightedIndex::new(&weights).expect("zipf weights are positive");
        samplers.push((t.clone(), value_names(t, k), dist));
    }
    let products = (0..config.catalog_size)
        .map(|i| Product {
            product_id: format!("p{i}"),
            attributes: samplers
                .iter()
                .map(|(t, names, dist)| (t.clone(), names[dist.sample(&mut rng)].clone()))
                .collect(),
        })
        .collect();
    Catalog::from_products(products)
}

/// Catalog lookups for one tag type.
struct TagIndex {
    name: String,
    /// Product indices carrying each value.
    by_value: Vec<Vec<usize>>,
    /// Values with at least one product.
    present: Vec<usize>,
}

impl TagIndex {
    fn build(config: &GenConfig, catalog: &Catalog, tag_type: &str) -> Result<Self> {
        let names = value_names(tag_type, config.cardinality(tag_type)?);
        let mut by_value = vec![Vec::new(); names.len()];
        for (i, p) in catalog.products().iter().enumerate() {
            let value = p
                .attribute(tag_type)
                .ok_or_else(|| Error::InvalidArgument(format!("product `{}` lacks `{tag_type}`", p.product_id)))?;
            let v = names.iter().position(|n| n == value).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "product `{}` has unknown `{tag_type}` value `{value}`",
                    p.product_id
                ))
            })?;
            by_value[v].push(i);
        }
        let present: Vec<usize> = (0..names.len()).filter(|&v| !by_value[v].is_empty()).collect();
        Ok(TagIndex {
            name: tag_type.to_string(),
            by_value,
            present,
        })
    }

    /// Persona sampler for a drift epoch, restricted to values in stock.
    fn persona_sampler(&self, config: &GenConfig, epoch: u64) -> Result<WeightedIndex<f64>> {
        let mut weights = popularity(config, &self.name, epoch)?;
        for (v, w) in weights.iter_mut().enumerate() {
            if self.by_value[v].is_empty() {
                *w = 0.0;
            }
        }
        WeightedIndex::new(&weights)
            .map_err(|_| Error::InvalidArgument(format!("no products carry any `{}` value", self.name)))
    }

    fn product_with(&self, value: usize, rng: &mut ChaCha8Rng) -> usize {
        let pool = &self.by_value[value];
        pool[rng.random_range(0..pool.len())]
    }

    fn other_value(&self, value: usize, rng: &mut ChaCha8Rng) -> usize {
        let others: Vec<usize> = self.present.iter().copied().filter(|&v| v != value).collect();
        if others.is_empty() {
            value
        } else {
            others[rng.random_range(0..others.len())]
        }
    }
}

struct SessionFactory<'a> {
    config: &'a GenConfig,
    catalog: &'a Catalog,
    tags: Vec<TagIndex>,
    session_tags: Vec<usize>,
}

impl<'a> SessionFactory<'a> {
    fn new(config: &'a GenConfig, catalog: &'a Catalog) -> Result<Self> {
        let tags = config
            .tag_cardinalities
            .keys()
            .map(|t| TagIndex::build(config, catalog, t))
            .collect::<Result<Vec<_>>>()?;
        let session_tags = config
            .session_tag_types
            .iter()
            .map(|t| tags.iter().position(|x| &x.name == t).expect("validated"))
            .collect::<Vec<_>>();
        for &t in &session_tags {
            if tags[t].present.len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "catalog carries fewer than 2 `{}` values",
                    tags[t].name
                )));
            }
        }
        Ok(SessionFactory {
            config,
            catalog,
            tags,
            session_tags,
        })
    }

    fn samplers(&self, epoch: u64) -> Result<Vec<WeightedIndex<f64>>> {
        self.tags
            .iter()
            .map(|t| t.persona_sampler(self.config, epoch))
            .collect()
    }

    fn generate(
        &self,
        n: usize,
        stream: u64,
        prefix: &str,
        start_ts: u64,
        epoch_of: impl Fn(usize) -> u64,
    ) -> Result<Vec<SessionRecord>> {
        let cfg = self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        let mut samplers: Option<(u64, Vec<WeightedIndex<f64>>)> = None;
        let mut ts = start_ts;
        let mut sessions = Vec::with_capacity(n);
        for i in 0..n {
            let epoch = epoch_of(i);
            if samplers.as_ref().is_none_or(|(e, _)| *e != epoch) {
                samplers = Some((epoch, self.samplers(epoch)?));
            }
            let (_, persona_dist) = samplers.as_ref().expect("just set");
            let persona: Vec<usize> = persona_dist.iter().map(|d| d.sample(&mut rng)).collect();

            let tag = self.session_tags[rng.random_range(0..self.session_tags.len())];
            let index = &self.tags[tag];
            let preferred = persona[tag];
            let query = cfg.queries[rng.random_range(0..cfg.queries.len())].clone();

            let [cmin, cmax] = cfg.context_len_range;
            let context = (0..rng.random_range(cmin..=cmax))
                .map(|_| {
                    let p = if rng.random::<f64>() < cfg.context_strength {
                        index.product_with(preferred, &mut rng)
                    } else {
                        rng.random_range(0..self.catalog.len())
                    };
                    self.catalog.products()[p].product_id.clone()
                })
                .collect();

            let [kmin, kmax] = cfg.click_len_range;
            let clicks = (0..rng.random_range(kmin..=kmax))
                .map(|_| {
                    let value = if rng.random::<f64>() < cfg.noise {
                        index.other_value(preferred, &mut rng)
                    } else {
                        preferred
                    };
                    self.catalog.products()[index.product_with(value, &mut rng)]
                        .product_id
                        .clone()
                })
                .collect();

            ts += rng.random_range(1..=60_000u64);
            sessions.push(SessionRecord {
                session_id: format!("{prefix}{i:06}"),
                timestamp: ts,
                context_products: context,
                query,
                tag_type: TagType::new(index.name.as_str())?,
                clicked_products: clicks,
            });
        }
        Ok(sessions)
    }
}

/// Generated training and test logs.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSessions {
    pub train: Vec<SessionRecord>,
    pub test: Vec<SessionRecord>,
}

/// Generates both splits. Test sessions follow the last training session in
/// time and are drawn under the drift period in force at the end of training.
pub fn gen_sessions(config: &GenConfig, catalog: &Catalog) -> Result<GeneratedSessions> {
    config.validate()?;
    let factory = SessionFactory::new(config, catalog)?;
    let train = factory.generate(
        config.n_train_sessions,
        TRAIN_STREAM,
        "tr",
        config.start_timestamp,
        |i| config.drift_epoch(i),
    )?;
    let last_ts = train.last().map_or(config.start_timestamp, |s| s.timestamp);
    let final_epoch = config.drift_epoch(config.n_train_sessions - 1);
    let test = factory.generate(config.n_test_sessions, TEST_STREAM, "te", last_ts + 86_400_000, |_| {
        final_epoch
    })?;
    Ok(GeneratedSessions { train, test })
}

/// Paths of the files [`write_dataset`] produces, echo file excluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub catalog: PathBuf,
    pub train: PathBuf,
    pub test: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: &Path) -> Self {
        DatasetPaths {
            catalog: dir.join("catalog.jsonl"),
            train: dir.join("train.jsonl"),
            test: dir.join("test.jsonl"),
        }
    }
}

pub fn write_dataset(dir: &Path, catalog: &Catalog, sessions: &GeneratedSessions) -> Result<DatasetPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = DatasetPaths::in_dir(dir);
    write_catalog(&paths.catalog, catalog)?;
    write_sessions(&paths.train, &sessions.train)?;
    write_sessions(&paths.test, &sessions.test)?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GenConfig {
        GenConfig {
            n_train_sessions: 300,
            n_test_sessions: 100,
            catalog_size: 400,
            ..Default::default()
        }
    }

    #[test]
    fn catalog_is_valid_and_deterministic() {
        let cfg = GenConfig::default();
        let a = gen_catalog(&cfg).unwrap();
        assert_eq!(a.len(), 1000);
        for p in a.products() {
            for (t, &k) in &cfg.tag_cardinalities {
                assert!(value_names(t, k).iter().any(|v| Some(v.as_str()) == p.attribute(t)));
            }
        }
        assert_eq!(a.products(), gen_catalog(&cfg).unwrap().products());
    }

    #[test]
    fn session_counts_and_order() {
        let cfg = small();
        let cat = gen_catalog(&cfg).unwrap();
        let s = gen_sessions(&cfg, &cat).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (300, 100));
        for split in [&s.train, &s.test] {
            assert!(split.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
            assert!(split.iter().all(|x| x.has_ground_truth()));
        }
        assert!(s.test[0].timestamp > s.train.last().unwrap().timestamp);
        assert_eq!(s, gen_sessions(&cfg, &cat).unwrap());
    }

    #[test]
    fn value_name_tables() {
        assert_eq!(value_names("sport", 8)[0], "soccer");
        assert_eq!(value_names("price", 4), vec!["0-50", "50-100", "100-500", "500+"]);
        let brands = value_names("brand", 349);
        assert_eq!((brands[0].as_str(), brands[348].as_str()), ("brand_000", "brand_348"));
        assert_eq!(value_names("color", 2), vec!["color_000", "color_001"]);
    }

    #[test]
    fn zipf_weights_sum_to_one_and_decrease() {
        let w = zipf_weights(8, 2.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.windows(2).all(|p| p[0] > p[1]));
        assert!(zipf_weights(5, 0.0).iter().all(|&x| (x - 0.2).abs() < 1e-12));
    }

    #[test]
    fn drift_rotates_ranking() {
        let cfg = GenConfig {
            drift: Some(DriftConfig {
                period: 2000,
                magnitude: 0.5,
            }),
            ..Default::default()
        };
        let z = zipf_weights(8, cfg.zipf_exponent);
        let order = rank_order(cfg.seed, "sport", 8);
        let p0 = popularity(&cfg, "sport", 0).unwrap();
        let p1 = popularity(&cfg, "sport", 1).unwrap();
        let p2 = popularity(&cfg, "sport", 2).unwrap();
        assert_eq!(argmax(&p0), order[0]);
        // half a position: the runner-up blends the top two weights
        assert!((p1[order[1]] - (z[0] + z[1]) / 2.0).abs() < 1e-15);
        assert!((p1[order[0]] - (z[7] + z[0]) / 2.0).abs() < 1e-15);
        assert_eq!(argmax(&p2), order[1]);
        assert!((p2[order[0]] - z[7]).abs() < 1e-15);
        for p in [&p1, &p2] {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(popularity(&cfg, "sport", 16).unwrap(), p0);
        assert_eq!(cfg.drift_epoch(1999), 0);
        assert_eq!(cfg.drift_epoch(2000), 1);
        assert_eq!(GenConfig::default().drift_offset(5), 0.0);
    }

    fn argmax(v: &[f64]) -> usize {
        crate::policies::argmax(v)
    }

    #[test]
    fn validation_names_fields() {
        let cases: Vec<(GenConfig, &str)> = vec![
            (
                GenConfig {
                    n_train_sessions: 0,
                    ..Default::default()
                },
                "n_train_sessions",
            ),
            (
                GenConfig {
                    noise: 1.5,
                    ..Default::default()
                },
                "noise",
            ),
            (
                GenConfig {
                    context_strength: -0.1,
                    ..Default::default()
                },
                "context_strength",
            ),
            (
                GenConfig {
                    catalog_size: 10,
                    ..Default::default()
                },
                "catalog_size",
            ),
            (
                GenConfig {
                    click_len_range: [0, 2],
                    ..Default::default()
                },
                "click_len_range",
            ),
            (
                GenConfig {
                    session_tag_types: vec!["color".into()],
                    ..Default::default()
                },
                "session_tag_types",
            ),
        ];
        for (cfg, field) in cases {
            match cfg.validate() {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected config error for {field}, got {other:?}"),
            }
        }
    }
}

//! Context and query encoders producing the MCM input vector.
//!
//! Products are embedded either by seeded hashing or by a trained
//! [`EmbeddingTable`]; a session context is the mean of its product vectors.
//! Queries are embedded as signed-hashed character trigrams. The feature
//! vector is the context vector followed by the query vector.

mod hashing;
mod prod2vec;
mod table;

use std::sync::Arc;

pub use hashing::seeded_hash;
pub use prod2vec::{train_prod2vec, SkipGramConfig, TrainedEmbeddings};
pub use table::EmbeddingTable;

use crate::domain::{normalize_query, SessionRecord};
use crate::error::{Error, Result};

pub const DEFAULT_CONTEXT_DIM: usize = 32;
pub const DEFAULT_QUERY_DIM: usize = 32;

/// Anything that can map a product id to a fixed-length vector.
pub trait ProductEmbedding: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, product_id: &str) -> Vec<f64>;
}

/// Unit-norm vector whose coordinates are seeded hashes of the id.
pub fn hash_embed_product(product_id: &str, dim: usize, seed: u64) -> Vec<f64> {
    assert!(dim >= 1, "embedding dimension must be positive");
    let mut v: Vec<f64> = (0..dim as u64)
        .map(|i| hashing::unit_interval_signed(seeded_hash(seed, product_id, i)))
        .collect();
    l2_normalize(&mut v);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashProductEncoder {
    pub dim: usize,
    pub seed: u64,
}

impl ProductEmbedding for HashProductEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, product_id: &str) -> Vec<f64> {
        hash_embed_product(product_id, self.dim, self.seed)
    }
}

/// Mean of the product vectors; zeros for an empty context.
pub fn encode_context<S: AsRef<str>>(products: &[S], encoder: &dyn ProductEmbedding) -> Vec<f64> {
    let dim = encoder.dim();
    let mut acc = vec![0.0; dim];
    if products.is_empty() {
        return acc;
    }
    for p in products {
        for (a, x) in acc.iter_mut().zip(encoder.embed(p.as_ref())) {
            *a += x;
        }
    }
    let n = products.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Signed feature hashing of the character trigrams of `#query#`.
///
/// Expects an already normalized query. Empty input maps to zeros.
pub fn encode_query(query: &str, dim: usize, seed: u64) -> Vec<f64> {
    assert!(dim >= 1, "embedding dimension must be positive");
    let mut v = vec![0.0; dim];
    if query.is_empty() {
        return v;
    }
    let padded: Vec<char> = std::iter::once('#')
        .chain(query.chars())
        .chain(std::iter::once('#'))
        .collect();
    let mut gram = String::with_capacity(12);
    for w in padded.windows(3) {
        gram.clear();
        gram.extend(w);
        let h = seeded_hash(seed, &gram, 0);
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    l2_normalize(&mut v);
    v
}

/// Concatenated context and query vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn build_features(context: &[f64], query: &[f64], context_dim: usize, query_dim: usize) -> Result<FeatureVector> {
    if context.len() != context_dim {
        return Err(Error::LengthMismatch {
            expected: context_dim,
            got: context.len(),
        });
    }
    if query.len() != query_dim {
        return Err(Error::LengthMismatch {
            expected: query_dim,
            got: query.len(),
        });
    }
    let mut v = Vec::with_capacity(context_dim + query_dim);
    v.extend_from_slice(context);
    v.extend_from_slice(query);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite feature value".into()));
    }
    Ok(FeatureVector(v))
}

/// Session-to-features pipeline shared by MCM policies.
///
/// With `ablate_context` set the context half is always zero, which is how
/// the no-session-information variant is produced.
#[derive(Clone)]
pub struct FeatureEncoder {
    products: Arc<dyn ProductEmbedding>,
    query_dim: usize,
    query_seed: u64,
    ablate_context: bool,
}

impl std::fmt::Debug for FeatureEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureEncoder")
            .field("context_dim", &self.products.dim())
            .field("query_dim", &self.query_dim)
            .field("query_seed", &self.query_seed)
            .field("ablate_context", &self.ablate_context)
            .finish()
    }
}

impl FeatureEncoder {
    pub fn new(products: Arc<dyn ProductEmbedding>, query_dim: usize, query_seed: u64) -> Self {
        FeatureEncoder {
            products,
            query_dim,
            query_seed,
            ablate_context: false,
        }
    }

    /// Hash encoders for both halves with default dimensions.
    pub fn hashed(seed: u64) -> Self {
        Self::new(
            Arc::new(HashProductEncoder {
                dim: DEFAULT_CONTEXT_DIM,
                seed,
            }),
            DEFAULT_QUERY_DIM,
            seed,
        )
    }

    pub fn with_context_ablated(mut self, ablate: bool) -> Self {
        self.ablate_context = ablate;
        self
    }

    pub fn context_ablated(&self) -> bool {
        self.ablate_context
    }

    pub fn context_dim(&self) -> usize {
        self.products.dim()
    }

    pub fn query_dim(&self) -> usize {
        self.query_dim
    }

    pub fn input_dim(&self) -> usize {
        self.context_dim() + self.query_dim
    }

    pub fn encode(&self, context_products: &[String], raw_query: &str) -> Result<FeatureVector> {
        let context = if self.ablate_context {
            vec![0.0; self.context_dim()]
        } else {
            encode_context(context_products, self.products.as_ref())
        };
        let query = encode_query(&normalize_query(raw_query), self.query_dim, self.query_seed);
        build_features(&context, &query, self.context_dim(), self.query_dim)
    }

    pub fn encode_session(&self, session: &SessionRecord) -> Result<FeatureVector> {
        self.encode(&session.context_products, &session.query)
    }
}

pub(crate) fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn product_hash_is_deterministic_and_unit() {
        let a = hash_embed_product("p1", 16, 42);
        let b = hash_embed_product("p1", 16, 42);
        assert_eq!(a, b);
        assert!((norm(&a) - 1.0).abs() < 1e-9);
        assert_ne!(a, hash_embed_product("p1", 16, 43));
    }

    #[test]
    fn random_ids_are_nearly_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut total = 0.0;
        for _ in 0..1000 {
            let a = format!("id{}", rng.random::<u64>());
            let b = format!("id{}", rng.random::<u64>());
            total += cosine(&hash_embed_product(&a, 16, 42), &hash_embed_product(&b, 16, 42)).abs();
        }
        assert!(total / 1000.0 < 0.3, "mean |cos| = {}", total / 1000.0);
    }

    #[test]
    fn context_mean_rules() {
        let enc = HashProductEncoder { dim: 8, seed: 3 };
        assert_eq!(encode_context(&["p9"], &enc), enc.embed("p9"));
        let empty: [&str; 0] = [];
        assert_eq!(encode_context(&empty, &enc), vec![0.0; 8]);
        let a = encode_context(&["p1", "p2", "p3"], &enc);
        let b = encode_context(&["p3", "p1", "p2"], &enc);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_query_is_zero() {
        assert_eq!(encode_query("", 16, 1), vec![0.0; 16]);
        let q = encode_query("shoes", 64, 7);
        assert_eq!(q, encode_query("shoes", 64, 7));
        assert!((norm(&q) - 1.0).abs() < 1e-9);
    }

    fn trigram_set(q: &str) -> BTreeSet<String> {
        let chars: Vec<char> = format!("#{q}#").chars().collect();
        chars.windows(3).map(|w| w.iter().collect()).collect()
    }

    #[test]
    fn shared_trigrams_drive_similarity() {
        // Exact trigram-set cosines (no hashing) predict the ordering.
        let exact = |a: &str, b: &str| {
            let (sa, sb) = (trigram_set(a), trigram_set(b));
            sa.intersection(&sb).count() as f64 / ((sa.len() * sb.len()) as f64).sqrt()
        };
        assert!(exact("shoes", "shoess") > 0.7);
        assert_eq!(exact("shoes", "yoga"), 0.0);

        let c1 = cosine(&encode_query("shoes", 64, 7), &encode_query("shoess", 64, 7));
        let c2 = cosine(&encode_query("shoes", 64, 7), &encode_query("yoga", 64, 7));
        assert!(c1 > c2, "{c1} vs {c2}");
    }

    #[test]
    fn feature_concatenation() {
        let f = build_features(&[1.0, 2.0], &[3.0], 2, 1).unwrap();
        assert_eq!(f.as_slice(), &[1.0, 2.0, 3.0]);
        let f = build_features(&[0.0; 4], &[0.5; 3], 4, 3).unwrap();
        assert!(f.as_slice()[..4].iter().all(|&x| x == 0.0));
        assert!(matches!(
            build_features(&[1.0], &[1.0], 2, 1),
            Err(Error::LengthMismatch { expected: 2, got: 1 })
        ));
        assert!(build_features(&[1.0], &[1.0, 2.0], 1, 1).is_err());
    }

    #[test]
    fn ablation_zeroes_context_half() {
        let enc = FeatureEncoder::hashed(9).with_context_ablated(true);
        let f = enc.encode(&["p1".to_string()], "Shoes").unwrap();
        assert_eq!(f.len(), enc.input_dim());
        assert!(f.as_slice()[..enc.context_dim()].iter().all(|&x| x == 0.0));
        assert!(f.as_slice()[enc.context_dim()..].iter().any(|&x| x != 0.0));
    }

    proptest! {
        #[test]
        fn feature_length_is_sum(c in proptest::collection::vec(-1.0f64..1.0, 0..20),
                                 q in proptest::collection::vec(-1.0f64..1.0, 0..20)) {
            let f = build_features(&c, &q, c.len(), q.len()).unwrap();
            prop_assert_eq!(f.len(), c.len() + q.len());
        }

        #[test]
        fn query_norm_is_unit_or_zero(q in "[a-z ]{0,20}", dim in 1usize..80, seed in 0u64..100) {
            let v = encode_query(&q, dim, seed);
            let n = norm(&v);
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
            if q.is_empty() { prop_assert_eq!(n, 0.0); }
        }

        #[test]
        fn product_norm_is_unit(id in "[a-z0-9]{1,12}", dim in 1usize..64, seed: u64) {
            prop_assert!((norm(&hash_embed_product(&id, dim, seed)) - 1.0).abs() < 1e-9);
        }
    }
}

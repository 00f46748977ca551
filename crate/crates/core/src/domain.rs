//! Tag vocabularies, catalog products, session records and the line-delimited
//! log formats they are stored in.
//!
//! Every log file starts with a header record `{"format":"dslog","version":1}`
//! followed by one JSON object per line. Records that fail validation are
//! rejected individually and reported with their 1-based line number; only an
//! unreadable file or a bad header is fatal.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOG_FORMAT: &str = "dslog";
pub const LOG_VERSION: u32 = 1;

/// A facet dimension such as `sport` or `brand`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TagType(String);

impl TagType {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(Error::InvalidArgument("tag type name is empty".into()));
        }
        Ok(TagType(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for TagType {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        TagType::new(value)
    }
}

impl From<TagType> for String {
    fn from(value: TagType) -> Self {
        value.0
    }
}

impl fmt::Display for TagType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The closed set of values for one tag type. Arm index = position in `values`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagVocabulary {
    tag_type: TagType,
    values: Vec<String>,
    index: HashMap<String, usize>,
}

impl TagVocabulary {
    pub fn new(tag_type: TagType, values: Vec<String>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "vocabulary for `{tag_type}` needs at least 2 values, got {}",
                values.len()
            )));
        }
        let mut index = HashMap::with_capacity(values.len());
        for (arm, value) in values.iter().enumerate() {
            if value.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "empty value in vocabulary for `{tag_type}`"
                )));
            }
            if index.insert(value.clone(), arm).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate value `{value}` in vocabulary for `{tag_type}`"
                )));
            }
        }
        Ok(TagVocabulary {
            tag_type,
            values,
            index,
        })
    }

    pub fn tag_type(&self) -> &TagType {
        &self.tag_type
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, arm: usize) -> Option<&str> {
        self.values.get(arm).map(String::as_str)
    }

    pub fn arm_of(&self, value: &str) -> Option<usize> {
        self.index.get(value).copied()
    }
}

/// Vocabularies for every configured tag type of one tenant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSchema {
    vocabularies: Vec<TagVocabulary>,
}

impl TagSchema {
    pub fn new(vocabularies: Vec<TagVocabulary>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for v in &vocabularies {
            if !seen.insert(v.tag_type().clone()) {
                return Err(Error::InvalidArgument(format!(
                    "tag type `{}` configured twice",
                    v.tag_type()
                )));
            }
        }
        Ok(TagSchema { vocabularies })
    }

    pub fn vocabulary(&self, tag_type: &str) -> Option<&TagVocabulary> {
        self.vocabularies.iter().find(|v| v.tag_type().as_str() == tag_type)
    }

    pub fn vocabularies(&self) -> &[TagVocabulary] {
        &self.vocabularies
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Product {
    pub product_id: String,
    #[serde(rename = "attrs")]
    pub attributes: BTreeMap<String, String>,
}

impl Product {
    pub fn attribute(&self, tag_type: &str) -> Option<&str> {
        self.attributes.get(tag_type).map(String::as_str)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    products: Vec<Product>,
    index: HashMap<String, usize>,
}

impl Catalog {
    pub fn from_products(products: Vec<Product>) -> Result<Self> {
        let mut index = HashMap::with_capacity(products.len());
        for (i, p) in products.iter().enumerate() {
            if p.product_id.is_empty() {
                return Err(Error::InvalidArgument("empty product id".into()));
            }
            if index.insert(p.product_id.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate product id `{}`",
                    p.product_id
                )));
            }
        }
        Ok(Catalog { products, index })
    }

    pub fn get(&self, product_id: &str) -> Option<&Product> {
        self.index.get(product_id).map(|&i| &self.products[i])
    }

    pub fn contains(&self, product_id: &str) -> bool {
        self.index.contains_key(product_id)
    }

    pub fn attribute(&self, product_id: &str, tag_type: &str) -> Option<&str> {
        self.get(product_id).and_then(|p| p.attribute(tag_type))
    }

    pub fn products(&self) -> &[Product] {
        &self.products
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }

    /// Builds a schema from the distinct attribute values present in the
    /// catalog, values sorted lexicographically.
    pub fn derive_schema(&self) -> Result<TagSchema> {
        let mut values: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for p in &self.products {
            for (t, v) in &p.attributes {
                values.entry(t.as_str()).or_default().insert(v.as_str());
            }
        }
        let vocabularies = values
            .into_iter()
            .map(|(t, vs)| TagVocabulary::new(TagType::new(t)?, vs.into_iter().map(str::to_string).collect()))
            .collect::<Result<Vec<_>>>()?;
        TagSchema::new(vocabularies)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    #[serde(rename = "ts")]
    pub timestamp: u64,
    #[serde(rename = "context")]
    pub context_products: Vec<String>,
    pub query: String,
    pub tag_type: TagType,
    #[serde(rename = "clicks")]
    pub clicked_products: Vec<String>,
}

impl SessionRecord {
    pub fn has_ground_truth(&self) -> bool {
        !self.clicked_products.is_empty()
    }
}

/// Chosen arm and observed reward for one decision, as seen by a learner.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackRecord {
    pub features: Vec<f64>,
    pub chosen_arm: usize,
    pub reward: u8,
}

/// Lowercases, trims and collapses internal whitespace runs.
pub fn normalize_query(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
}

/// Outcome of a validated load: accepted records plus per-line rejects.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub records: T,
    pub rejects: Vec<Reject>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

fn header_line() -> String {
    serde_json::to_string(&Header {
        format: LOG_FORMAT.to_string(),
        version: LOG_VERSION,
    })
    .expect("header serializes")
}

/// Reads `(line_number, text)` pairs after validating the header.
fn read_body(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = Vec::new();
    let mut header_seen = false;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            let header: Header = serde_json::from_str(&line).map_err(|e| Error::Format {
                path: path.to_path_buf(),
                message: format!("line {}: missing or malformed header: {e}", i + 1),
            })?;
            if header.format != LOG_FORMAT || header.version != LOG_VERSION {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!(
                        "unsupported log format {}/{} (expected {LOG_FORMAT}/{LOG_VERSION})",
                        header.format, header.version
                    ),
                });
            }
            header_seen = true;
            continue;
        }
        lines.push((i + 1, line));
    }
    Ok(lines)
}

fn check_product_attributes(product: &Product, schema: &TagSchema) -> std::result::Result<(), String> {
    for vocab in schema.vocabularies() {
        let t = vocab.tag_type().as_str();
        match product.attribute(t) {
            None => return Err(format!("product `{}` has no `{t}` attribute", product.product_id)),
            Some(v) if vocab.arm_of(v).is_none() => {
                return Err(format!("unknown `{t}` value `{v}` on product `{}`", product.product_id))
            }
            Some(_) => {}
        }
    }
    for t in product.attributes.keys() {
        if schema.vocabulary(t).is_none() {
            return Err(format!("unknown tag type `{t}` on product `{}`", product.product_id));
        }
    }
    Ok(())
}

/// Loads a catalog. With a schema, products carrying unknown tag types or
/// values are rejected; without one, every well-formed product is accepted.
pub fn load_catalog(path: &Path, schema: Option<&TagSchema>) -> Result<Loaded<Catalog>> {
    let mut products = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, text) in read_body(path)? {
        let product: Product = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(e) => {
                rejects.push(Reject {
                    line,
                    reason: format!("malformed product: {e}"),
                });
                continue;
            }
        };
        if product.product_id.is_empty() || !seen.insert(product.product_id.clone()) {
            rejects.push(Reject {
                line,
                reason: format!("empty or duplicate product id `{}`", product.product_id),
            });
            continue;
        }
        if let Some(schema) = schema {
            if let Err(reason) = check_product_attributes(&product, schema) {
                rejects.push(Reject { line, reason });
                continue;
            }
        }
        products.push(product);
    }
    Ok(Loaded {
        records: Catalog::from_products(products)?,
        rejects,
    })
}

fn check_session(session: &SessionRecord, catalog: &Catalog, schema: &TagSchema) -> std::result::Result<(), String> {
    if session.session_id.is_empty() {
        return Err("empty session id".into());
    }
    if schema.vocabulary(session.tag_type.as_str()).is_none() {
        return Err(format!("unknown tag type `{}`", session.tag_type));
    }
    for id in session.context_products.iter().chain(&session.clicked_products) {
        let Some(product) = catalog.get(id) else {
            return Err(format!("unknown product `{id}`"));
        };
        check_product_attributes(product, schema)?;
    }
    Ok(())
}

/// Loads a session log, validating against the catalog and schema. Records
/// come back sorted by timestamp, stable on ties.
pub fn load_sessions(path: &Path, catalog: &Catalog, schema: &TagSchema) -> Result<Loaded<Vec<SessionRecord>>> {
    let mut sessions = Vec::new();
    let mut rejects = Vec::new();
    for (line, text) in read_body(path)? {
        let session: SessionRecord = match serde_json::from_str(&text) {
            Ok(s) => s,
            Err(e) => {
                rejects.push(Reject {
                    line,
                    reason: format!("malformed session: {e}"),
                });
                continue;
            }
        };
        match check_session(&session, catalog, schema) {
            Ok(()) => sessions.push(session),
            Err(reason) => rejects.push(Reject { line, reason }),
        }
    }
    sessions.sort_by_key(|s| s.timestamp);
    Ok(Loaded {
        records: sessions,
        rejects,
    })
}

fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", header_line())?;
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sessions(path: &Path, sessions: &[SessionRecord]) -> Result<()> {
    write_records(path, sessions)
}

pub fn write_catalog(path: &Path, catalog: &Catalog) -> Result<()> {
    write_records(path, catalog.products())
}

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{hash_embed_product, ProductEmbedding};
use crate::error::{Error, Result};

const TABLE_FORMAT: &str = "dsemb";
const TABLE_VERSION: u32 = 1;

/// Product vectors keyed by id. Unknown ids fall back to the seeded hash
/// embedding of the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    seed: u64,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        Ok(EmbeddingTable {
            dim,
            seed,
            vectors: HashMap::new(),
        })
    }

    pub fn insert(&mut self, product_id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let product_id = product_id.into();
        if vector.len() != self.dim {
            return Err(Error::LengthMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite embedding for `{product_id}`"
            )));
        }
        if product_id.is_empty() || product_id.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!(
                "product id `{product_id}` cannot be stored in an embedding table"
            )));
        }
        self.vectors.insert(product_id, vector);
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn get(&self, product_id: &str) -> Option<&[f64]> {
        self.vectors.get(product_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Ids in sorted order.
    pub fn ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.vectors.keys().map(String::as_str).collect();
        ids.sort_unstable();
        ids
    }

    /// Text layout: a `dsemb <version> <dim> <seed>` header, then one
    /// `product_id v_1 .. v_dim` row per product in id order. Values use the
    /// shortest representation that parses back to the same binary64.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{TABLE_FORMAT} {TABLE_VERSION} {} {}", self.dim, self.seed)?;
        for id in self.ids() {
            write!(w, "{id}")?;
            for x in &self.vectors[id] {
                write!(w, " {x:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let bad = |line: usize, msg: &str| Error::Format {
            path: path.to_path_buf(),
            message: format!("line {line}: {msg}"),
        };
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| bad(1, "missing header"))?
            .map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != TABLE_FORMAT {
            return Err(bad(1, "malformed header"));
        }
        if fields[1] != TABLE_VERSION.to_string() {
            return Err(bad(1, "unsupported table version"));
        }
        let dim: usize = fields[2].parse().map_err(|_| bad(1, "bad dim"))?;
        let seed: u64 = fields[3].parse().map_err(|_| bad(1, "bad seed"))?;
        let mut table = EmbeddingTable::new(dim, seed)?;
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let id = parts.next().ok_or_else(|| bad(i + 2, "missing id"))?;
            let values = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad(i + 2, "bad value"))?;
            table.insert(id, values).map_err(|e| bad(i + 2, &e.to_string()))?;
        }
        Ok(table)
    }
}

impl ProductEmbedding for EmbeddingTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, product_id: &str) -> Vec<f64> {
        match self.vectors.get(product_id) {
            Some(v) => v.clone(),
            None => hash_embed_product(product_id, self.dim, self.seed),
        }
    }
}

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "round,policy,strategy,tag_type,weighted_f1,n_eval";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub round: usize,
    pub policy: String,
    pub strategy: String,
    pub tag_type: String,
    pub weighted_f1: f64,
    pub n_eval: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayReport {
    rows: Vec<ReportRow>,
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("malformed report: {e}"))
}

impl ReplayReport {
    pub fn new(rows: Vec<ReportRow>) -> Self {
        ReplayReport { rows }
    }

    pub fn rows(&self) -> &[ReportRow] {
        &self.rows
    }

    /// Policy labels in order of first appearance.
    pub fn policies(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.policy.as_str()) {
                seen.push(&r.policy);
            }
        }
        seen
    }

    /// `(round, f1)` points of one policy, round-ascending.
    pub fn series(&self, policy: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.policy == policy)
            .map(|r| (r.round, r.weighted_f1))
            .collect()
    }

    pub fn final_f1(&self, policy: &str) -> Option<f64> {
        self.series(policy).last().map(|&(_, f)| f)
    }

    pub fn f1_at(&self, policy: &str, round: usize) -> Option<f64> {
        self.series(policy)
            .into_iter()
            .find(|&(r, _)| r == round)
            .map(|(_, f)| f)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.round.to_string(),
                r.policy.clone(),
                r.strategy.clone(),
                r.tag_type.clone(),
                format!("{:.6}", r.weighted_f1),
                r.n_eval.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader.headers().map_err(csv_error)?;
        if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
            return Err(Error::InvalidArgument(format!(
                "malformed report: header must be `{CSV_HEADER}`"
            )));
        }
        let rows = reader
            .deserialize::<ReportRow>()
            .map(|r| r.map_err(csv_error))
            .collect::<Result<Vec<_>>>()?;
        if let Some(r) = rows.iter().find(|r| !(0.0..=1.0).contains(&r.weighted_f1)) {
            return Err(Error::InvalidArgument(format!(
                "malformed report: weighted_f1 {} outside [0, 1]",
                r.weighted_f1
            )));
        }
        Ok(ReplayReport { rows })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    /// Writes `<policy>.tsv` with `round<TAB>f1` lines for each policy and
    /// returns the paths written.
    pub fn write_plot_data(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for policy in self.policies() {
            if policy.is_empty() || policy.contains(['/', '\\']) || policy.starts_with('.') {
                return Err(Error::InvalidArgument(format!(
                    "policy label `{policy}` is not a file name"
                )));
            }
            let mut body = String::new();
            for (round, f1) in self.series(policy) {
                writeln!(body, "{round}\t{f1:.6}").expect("writing to a String");
            }
            let path = dir.join(format!("{policy}.tsv"));
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

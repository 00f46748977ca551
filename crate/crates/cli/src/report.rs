use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use discotag::replay::ReplayReport;
use serde::Serialize;

use crate::{Globals, ReportMode};

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policy: String,
    pub first_round: usize,
    pub first_f1: f64,
    pub final_round: usize,
    pub final_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub policies: Vec<PolicySummary>,
    /// `<a>_vs_<b>_{first,final}_gap` is a's F1 minus b's;
    /// `<a>_vs_<b>_final_rel_gap` divides the final gap by b's final F1.
    pub gaps: BTreeMap<String, f64>,
}

pub fn summarize(report: &ReplayReport) -> Summary {
    let policies: Vec<PolicySummary> = report
        .policies()
        .into_iter()
        .map(|p| {
            let series = report.series(p);
            let (first_round, first_f1) = series[0];
            let (final_round, final_f1) = *series.last().expect("non-empty series");
            PolicySummary {
                policy: p.to_string(),
                first_round,
                first_f1,
                final_round,
                final_f1,
            }
        })
        .collect();
    let mut gaps = BTreeMap::new();
    for a in &policies {
        for b in policies.iter().filter(|b| b.policy != a.policy) {
            let key = format!("{}_vs_{}", a.policy, b.policy);
            gaps.insert(format!("{key}_first_gap"), a.first_f1 - b.first_f1);
            gaps.insert(format!("{key}_final_gap"), a.final_f1 - b.final_f1);
            if b.final_f1 > 0.0 {
                gaps.insert(format!("{key}_final_rel_gap"), (a.final_f1 - b.final_f1) / b.final_f1);
            }
        }
    }
    Summary { policies, gaps }
}

pub fn render_text(summary: &Summary) -> String {
    let width = summary
        .policies
        .iter()
        .map(|p| p.policy.len())
        .max()
        .unwrap_or(6)
        .max(6);
    let mut out = format!(
        "{:<width$}  {:>11}  {:>8}  {:>11}  {:>8}\n",
        "policy", "first_round", "first_f1", "final_round", "final_f1"
    );
    for p in &summary.policies {
        out += &format!(
            "{:<width$}  {:>11}  {:>8.6}  {:>11}  {:>8.6}\n",
            p.policy, p.first_round, p.first_f1, p.final_round, p.final_f1
        );
    }
    let finals: Vec<_> = summary.gaps.iter().filter(|(k, _)| k.ends_with("_final_gap")).collect();
    if !finals.is_empty() {
        out += "\nfinal-round gaps\n";
        let kw = finals.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in finals {
            out += &format!("{k:<kw$}  {v:+.6}\n");
        }
    }
    out
}

fn default_dir(csv: &Path) -> PathBuf {
    csv.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn run(g: &Globals, csv: &Path, mode: ReportMode) -> Result<()> {
    let report = ReplayReport::read_csv(csv)?;
    let out = g.out.clone().unwrap_or_else(|| default_dir(csv));
    match mode {
        ReportMode::Summary => {
            let summary = summarize(&report);
            print!("{}", render_text(&summary));
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let path = out.join(SUMMARY_FILE);
            let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
            std::fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
            g.progress(format!("summary written to {}", path.display()));
        }
        ReportMode::Plot => {
            let files = report.write_plot_data(&out)?;
            g.progress(format!("wrote {} series to {}", files.len(), out.display()));
        }
    }
    Ok(())
}

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use clique_ust::sim::LabelStats;
use serde::Serialize;

use crate::config::ResolvedConfig;
use crate::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    /// Rough 99.9% critical value, reported only.
    pub threshold: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LedgerSummary {
    pub total_rounds: u64,
    pub mean_rounds: f64,
    pub max_rounds: u64,
    /// Per-label totals over all runs.
    pub labels: BTreeMap<String, LabelStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseSummary {
    pub max_phases: usize,
    pub mean_phases: f64,
    /// Runs in which some level used direct placement.
    pub idealized_runs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadSummary {
    /// Most tuples received by one machine in one iteration, over all runs.
    pub max_tuples: u64,
    /// Runs in which some iteration reached `16 c k log2 n`.
    pub runs_over_bound: u64,
}

/// One experiment's results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub config: ResolvedConfig,
    /// Outcome to count; trees as sorted 1-based edges, walks by endpoint.
    pub frequencies: BTreeMap<String, u64>,
    pub tv: Option<f64>,
    pub tv_unavailable: Option<String>,
    pub chi_square: Option<ChiSquare>,
    pub flag_rate: f64,
    pub ledger: LedgerSummary,
    pub phases: Option<PhaseSummary>,
    pub load: Option<LoadSummary>,
}

/// One trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub trial: u64,
    pub seed: u64,
    pub outcome: String,
    pub flagged: bool,
    pub phases: usize,
    pub rounds: u64,
    pub idealized: bool,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }
}

pub fn records_csv(records: &[RunRecord]) -> Result<Vec<u8>, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    w.into_inner().map_err(|e| BenchError::Io(e.into_error()))
}

/// Writes `report.json` and `runs.csv` into `dir`.
pub fn write_outputs(dir: &Path, report: &Report, records: &[RunRecord]) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir)?;
    std::fs::File::create(dir.join("report.json"))?.write_all(report.to_json().as_bytes())?;
    std::fs::File::create(dir.join("runs.csv"))?.write_all(&records_csv(records)?)?;
    Ok(())
}

/// Wilson-Hilferty approximation of the 99.9% chi-square quantile.
pub fn chi_square_threshold(dof: usize) -> f64 {
    if dof == 0 {
        return 0.0;
    }
    let k = dof as f64;
    let z = 3.090_232;
    k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3)
}

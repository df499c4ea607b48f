use std::path::{Path, PathBuf};

use clique_ust::corpus;
use clique_ust::engine::PrecisionConfig;
use clique_ust::graph::{load_graph, Graph};
use clique_ust::phase::{PhaseConfig, PlacementMode};
use clique_ust::sim::CostModel;
use clique_ust::tree::TreeConfig;
use serde::{Deserialize, Serialize};

use crate::BenchError;

/// Environment variable holding the default seed.
pub const SEED_ENV: &str = "CLIQUE_UST_SEED";
pub const DEFAULT_SEED: u64 = 1;
/// Largest census enumerated for TV against the uniform law.
pub const DEFAULT_CENSUS_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    TreeSublinear,
    TreeViaDoubling,
    AldousBroderRef,
    DoublingWalk,
}

impl Algorithm {
    pub fn samples_trees(self) -> bool {
        self != Algorithm::DoublingWalk
    }
}

/// Everything an experiment depends on. Unset overrides take the library
/// defaults for the graph at hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Corpus name or path to an edge-list file.
    pub graph: String,
    pub algorithm: Algorithm,
    pub runs: u64,
    pub seed: u64,
    pub rho: Option<usize>,
    pub c1: Option<f64>,
    pub ell: Option<u64>,
    pub placement_mode: PlacementMode,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub round_bits: Option<u32>,
    /// Walk length for `doubling-walk`.
    pub tau: Option<usize>,
    /// Hash constant of the doubling walker.
    pub c: f64,
    /// Initial walk length for `tree-via-doubling`.
    pub cover_budget: Option<usize>,
    pub census_cap: usize,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(graph: impl Into<String>, algorithm: Algorithm, runs: u64, seed: u64) -> Self {
        ExperimentConfig {
            graph: graph.into(),
            algorithm,
            runs,
            seed,
            rho: None,
            c1: None,
            ell: None,
            placement_mode: PlacementMode::ExactMatching,
            alpha: None,
            beta: None,
            round_bits: None,
            tau: None,
            c: clique_ust::doubling::DEFAULT_C,
            cover_budget: None,
            census_cap: DEFAULT_CENSUS_CAP,
            out: None,
        }
    }

    /// Loads the graph and fills in every default.
    pub fn resolve(&self) -> Result<(Graph, ResolvedConfig), BenchError> {
        if self.runs == 0 {
            return Err(BenchError::Config("runs must be at least 1".into()));
        }
        let (name, g) = load_source(&self.graph)?;
        let n = g.n();
        let mut phase = PhaseConfig::with_c1(n, self.c1.unwrap_or(1.0));
        if let Some(rho) = self.rho {
            phase.rho = rho;
        }
        if let Some(ell) = self.ell {
            phase.ell_target = ell;
        }
        phase.placement_mode = self.placement_mode;
        phase.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        let mut precision = PrecisionConfig::default();
        if let Some(beta) = self.beta {
            precision.beta = beta;
        }
        if let Some(bits) = self.round_bits {
            precision.round_bits = bits;
        }
        precision.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        let mut cost = CostModel::new(n);
        if let Some(alpha) = self.alpha {
            if !(alpha > 0.0) {
                return Err(BenchError::Config("alpha must be positive".into()));
            }
            cost = cost.with_alpha(alpha);
        }
        if !(self.c > 1.0) {
            return Err(BenchError::Config("c must exceed 1".into()));
        }
        let tau = match (self.algorithm, self.tau) {
            (_, Some(0)) => return Err(BenchError::Config("tau must be at least 1".into())),
            (Algorithm::DoublingWalk, t) => Some(t.unwrap_or(8 * n)),
            (_, t) => t,
        };
        let cover_budget = match self.algorithm {
            Algorithm::TreeViaDoubling => Some(self.cover_budget.unwrap_or_else(|| default_cover_budget(n)).max(1)),
            _ => self.cover_budget,
        };
        let resolved = ResolvedConfig {
            graph: name,
            n,
            m: g.m(),
            edges: g.to_edge_list(),
            algorithm: self.algorithm,
            runs: self.runs,
            seed: self.seed,
            tree: TreeConfig { phase, precision },
            cost,
            tau,
            c: self.c,
            cover_budget,
            census_cap: self.census_cap,
        };
        Ok((g, resolved))
    }
}

/// `8 n ceil(log2 n)`: a cover-time proxy for well-connected graphs. Walks
/// that fall short are extended, so the choice affects cost only.
pub fn default_cover_budget(n: usize) -> usize {
    8 * n * (n.max(2) as f64).log2().ceil() as usize
}

/// The configuration as actually run, embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub graph: String,
    pub n: usize,
    pub m: usize,
    /// The graph itself, in edge-list format.
    pub edges: String,
    pub algorithm: Algorithm,
    pub runs: u64,
    pub seed: u64,
    pub tree: TreeConfig,
    pub cost: CostModel,
    pub tau: Option<usize>,
    pub c: f64,
    pub cover_budget: Option<usize>,
    pub census_cap: usize,
}

fn load_source(source: &str) -> Result<(String, Graph), BenchError> {
    if let Some(g) = corpus::named(source) {
        return Ok((source.to_string(), g));
    }
    let path = Path::new(source);
    let text = std::fs::read_to_string(path)
        .map_err(|e| BenchError::Config(format!("graph {source:?} is neither a corpus name nor a readable file: {e}")))?;
    let g = load_graph(&text).map_err(|e| BenchError::Config(format!("{source}: {e}")))?;
    Ok((source.to_string(), g))
}

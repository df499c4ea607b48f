//! Experiment runner for the clique-ust samplers: resolves configurations,
//! runs seeded trials, compares against exact oracles and writes reports.

pub mod config;
pub mod cover;
pub mod experiment;
pub mod report;

use thiserror::Error;

pub use config::{Algorithm, ExperimentConfig, ResolvedConfig};
pub use cover::{tree_via_doubling, CoverTree};
pub use experiment::{run_experiment, tree_key, Experiment};
pub use report::{Report, RunRecord};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Tree(#[from] clique_ust::tree::TreeError),
    #[error(transparent)]
    Doubling(#[from] clique_ust::doubling::DoublingError),
}

impl BenchError {
    pub fn is_config(&self) -> bool {
        matches!(self, BenchError::Config(_) | BenchError::Tree(_) | BenchError::Doubling(_))
    }
}

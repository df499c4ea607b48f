//! Ground-truth computations used to check every sampler: spanning-tree
//! counts and censuses, exact walk laws, exact Schur complements and shortcut
//! matrices, and permanents.
//!
//! Everything here is plain local computation. Where the input is small
//! enough (`n <= EXACT_LIMIT`) results are exact rationals; above that the
//! oracles fall back to `f64` and say so through [`OracleMode`].

mod derived;
mod field;
mod permanent;
mod trees;
mod walks;

use serde::Serialize;
use thiserror::Error;

pub use derived::{exact_schur, exact_shortcut, first_hit_distribution, OracleMatrix, SchurGraph};
pub use field::Field;
pub use permanent::{brute_force_permanent, exact_permanent, MAX_PERMANENT_SIDE};
pub use trees::{count_spanning_trees, enumerate_spanning_trees, TreeCensus, DEFAULT_CENSUS_CAP};
pub use walks::{
    exact_walk_distribution, stopped_walk_distribution, RationalMatrix, WalkDistribution,
};

/// Largest vertex count handled in exact rational mode.
pub const EXACT_LIMIT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OracleMode {
    Rational,
    Float,
}

impl OracleMode {
    pub fn for_size(n: usize) -> Self {
        if n <= EXACT_LIMIT {
            OracleMode::Rational
        } else {
            OracleMode::Float
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("spanning tree count overflows 128-bit integers")]
    Overflow,
    #[error("census of {count} trees exceeds cap {cap}")]
    CapExceeded { count: u128, cap: usize },
    #[error("input too large for exhaustive enumeration: {0}")]
    TooLarge(String),
    #[error("vertex subset is invalid: {0}")]
    BadSubset(String),
    #[error("eliminated block is singular")]
    Singular,
}

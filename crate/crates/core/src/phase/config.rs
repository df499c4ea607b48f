use serde::{Deserialize, Serialize};

use super::PhaseError;
use crate::matching::EXACT_CAP;

/// Multiplier in the default target length `C n^3 ceil(log2 c2)`.
pub const ELL_CONSTANT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementMode {
    /// Place midpoints by sampling a weighted perfect matching; falls back to
    /// direct placement above the exact cap.
    ExactMatching,
    /// Ship every midpoint with its position.
    Direct,
}

impl std::str::FromStr for PlacementMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact-matching" | "exact" => Ok(PlacementMode::ExactMatching),
            "direct" => Ok(PlacementMode::Direct),
            other => Err(format!("unknown placement mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseConfig {
    /// Distinct vertices a phase stops at. Values above the vertex count
    /// disable truncation.
    pub rho: usize,
    pub c1: f64,
    /// Failure budget; a phase fails with probability about `1 / c2`.
    pub c2: f64,
    /// Target walk length, a power of two.
    pub ell_target: u64,
    pub placement_mode: PlacementMode,
    /// Largest matching instance sampled exactly.
    pub exact_cap: usize,
}

impl PhaseConfig {
    /// Defaults for an `n`-vertex graph with `c1 = 1`.
    pub fn for_n(n: usize) -> Self {
        Self::with_c1(n, 1.0)
    }

    pub fn with_c1(n: usize, c1: f64) -> Self {
        let nf = n.max(2) as f64;
        let c2 = nf.powf(0.5 + c1);
        PhaseConfig {
            rho: default_rho(n),
            c1,
            c2,
            ell_target: default_ell(n, c2),
            placement_mode: PlacementMode::ExactMatching,
            exact_cap: EXACT_CAP,
        }
    }

    pub fn validate(&self) -> Result<(), PhaseError> {
        if self.rho < 2 {
            return Err(PhaseError::Config(format!("rho must be at least 2, got {}", self.rho)));
        }
        if !self.ell_target.is_power_of_two() {
            return Err(PhaseError::Config(format!("ell_target {} is not a power of two", self.ell_target)));
        }
        if self.exact_cap > EXACT_CAP {
            return Err(PhaseError::Config(format!("exact_cap above {EXACT_CAP}")));
        }
        Ok(())
    }
}

/// `ceil(sqrt(n))`.
pub fn default_rho(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r < n {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r.max(2)
}

/// Smallest power of two at least `C n^3 ceil(log2 c2)`.
pub fn default_ell(n: usize, c2: f64) -> u64 {
    let n = n.max(2) as f64;
    let log = c2.log2().ceil().max(1.0);
    ((ELL_CONSTANT * n * n * n * log).ceil() as u64).next_power_of_two()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        assert_eq!(default_rho(4), 2);
        assert_eq!(default_rho(5), 3);
        assert_eq!(default_rho(10), 4);
        assert_eq!(default_rho(64), 8);
        assert_eq!(default_rho(2), 2);
        let c = PhaseConfig::for_n(5);
        assert_eq!(c.ell_target, 2048);
        assert!((c.c2 - 5f64.powf(1.5)).abs() < 1e-12);
        assert_eq!(PhaseConfig::for_n(4).ell_target, 1024);
        assert_eq!(PhaseConfig::for_n(10).ell_target, 32768);
        assert!(PhaseConfig { rho: 1, ..c }.validate().is_err());
        assert!(PhaseConfig { ell_target: 12, ..c }.validate().is_err());
        assert_eq!("direct".parse::<PlacementMode>(), Ok(PlacementMode::Direct));
    }
}

//! Sampling perfect matchings of a weighted complete bipartite graph with
//! probability proportional to the product of edge weights.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::engine::sample_weighted;
use crate::oracles::exact_permanent;

/// Largest instance handled by the exact sampler.
pub const EXACT_CAP: usize = 12;
/// Largest instance [`matching_distribution`] enumerates.
pub const ENUMERATION_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchingError {
    #[error("instance has no perfect matching of positive weight{}", .column.map(|c| format!(" (column {c} is all zero)")).unwrap_or_default())]
    ZeroPermanent { column: Option<usize> },
    #[error("instance of size {0} exceeds the exact cap")]
    CapExceeded(usize),
}

/// `weights[i][j]` is the weight of matching row `i` (a midpoint) to column
/// `j` (an open position).
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementInstance {
    r: usize,
    weights: Vec<f64>,
}

impl PlacementInstance {
    pub fn new(r: usize, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), r * r);
        assert!(weights.iter().all(|w| w.is_finite() && *w >= 0.0), "weights must be non-negative");
        PlacementInstance { r, weights }
    }

    pub fn size(&self) -> usize {
        self.r
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.r + j]
    }

    /// Weight of the matching `row i -> assignment[i]`.
    pub fn matching_weight(&self, assignment: &[usize]) -> f64 {
        assignment.iter().enumerate().map(|(i, &j)| self.weight(i, j)).product()
    }

    fn zero_column(&self) -> Option<usize> {
        (0..self.r).find(|&j| (0..self.r).all(|i| self.weight(i, j) == 0.0))
    }

    fn minor(&self, rows: &[usize], cols: &[usize]) -> Vec<f64> {
        rows.iter().flat_map(|&i| cols.iter().map(move |&j| self.weight(i, j))).collect()
    }
}

/// Draws a perfect matching exactly proportional to its weight, fixing one
/// row at a time with probability `weight * permanent(minor)`.
/// Returns `assignment[i]`, the column matched to row `i`.
pub fn sample_matching<R: Rng + ?Sized>(inst: &PlacementInstance, rng: &mut R) -> Result<Vec<usize>, MatchingError> {
    let r = inst.r;
    if r > EXACT_CAP {
        return Err(MatchingError::CapExceeded(r));
    }
    if let Some(c) = inst.zero_column() {
        return Err(MatchingError::ZeroPermanent { column: Some(c) });
    }
    let mut free: Vec<usize> = (0..r).collect();
    let mut out = Vec::with_capacity(r);
    for i in 0..r {
        let rest: Vec<usize> = (i + 1..r).collect();
        let mut probs = vec![0.0; free.len()];
        for (slot, &c) in free.iter().enumerate() {
            let w = inst.weight(i, c);
            if w == 0.0 {
                continue;
            }
            let cols: Vec<usize> = free.iter().copied().filter(|&x| x != c).collect();
            let minor = inst.minor(&rest, &cols);
            probs[slot] = w * exact_permanent(rest.len(), &minor).expect("within cap");
        }
        let slot = sample_weighted(&probs, rng).ok_or(MatchingError::ZeroPermanent { column: None })?;
        out.push(free.remove(slot));
    }
    Ok(out)
}

/// Every perfect matching with its exact probability (weight / permanent).
pub fn matching_distribution(inst: &PlacementInstance) -> Result<BTreeMap<Vec<usize>, f64>, MatchingError> {
    let r = inst.r;
    if r > ENUMERATION_CAP {
        return Err(MatchingError::CapExceeded(r));
    }
    let mut out = BTreeMap::new();
    let mut perm: Vec<usize> = (0..r).collect();
    permute(&mut perm, 0, &mut |p| {
        let w = inst.matching_weight(p);
        if w > 0.0 {
            out.insert(p.to_vec(), w);
        }
    });
    let total: f64 = out.values().sum();
    if total <= 0.0 {
        return Err(MatchingError::ZeroPermanent { column: inst.zero_column() });
    }
    for v in out.values_mut() {
        *v /= total;
    }
    Ok(out)
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        f(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, f);
        p.swap(k, i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{tally, tv_to_target};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = PlacementInstance::new(1, vec![2.5]);
        assert_eq!(sample_matching(&one, &mut rng).unwrap(), vec![0]);

        let two = PlacementInstance::new(2, vec![1.0, 2.0, 3.0, 4.0]);
        let d = matching_distribution(&two).unwrap();
        assert!((d[&vec![0, 1]] - 0.4).abs() < 1e-12);
        assert!((d[&vec![1, 0]] - 0.6).abs() < 1e-12);

        let id = PlacementInstance::new(3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let d = matching_distribution(&id).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[&vec![0, 1, 2]], 1.0);
        for _ in 0..20 {
            assert_eq!(sample_matching(&id, &mut rng).unwrap(), vec![0, 1, 2]);
        }
        let ones = PlacementInstance::new(3, vec![1.0; 9]);
        let d = matching_distribution(&ones).unwrap();
        assert_eq!(d.len(), 6);
        assert!(d.values().all(|p| (p - 1.0 / 6.0).abs() < 1e-12));
    }

    #[test]
    fn errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = PlacementInstance::new(2, vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(sample_matching(&z, &mut rng), Err(MatchingError::ZeroPermanent { column: Some(1) }));
        let big = PlacementInstance::new(13, vec![1.0; 169]);
        assert_eq!(sample_matching(&big, &mut rng), Err(MatchingError::CapExceeded(13)));
        let nine = PlacementInstance::new(9, vec![1.0; 81]);
        assert!(matches!(matching_distribution(&nine), Err(MatchingError::CapExceeded(9))));
    }

    #[test]
    fn two_by_two_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let two = PlacementInstance::new(2, vec![1.0, 2.0, 3.0, 4.0]);
        let counts = tally((0..50_000).map(|_| sample_matching(&two, &mut rng).unwrap()));
        let target = matching_distribution(&two).unwrap();
        assert!(tv_to_target(&counts, &target) < 0.01);
    }
}

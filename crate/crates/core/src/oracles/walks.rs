use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::graph::Graph;


use super::OracleError;

/// Exact law over walk sequences (vertex lists including the start).
pub type WalkDistribution = BTreeMap<Vec<usize>, BigRational>;

/// Dense square matrix of exact rationals.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalMatrix {
    n: usize,
    entries: Vec<BigRational>,
}

impl RationalMatrix {
    pub fn new(n: usize, entries: Vec<BigRational>) -> Self {
        assert_eq!(entries.len(), n * n);
        RationalMatrix { n, entries }
    }

    pub fn identity(n: usize) -> Self {
        let entries = (0..n * n)
            .map(|x| if x / n == x % n { BigRational::one() } else { BigRational::zero() })
            .collect();
        RationalMatrix { n, entries }
    }

    /// Exact random-walk transition matrix of `g`.
    pub fn transition(g: &Graph) -> Self {
        let n = g.n();
        let mut entries = vec![BigRational::zero(); n * n];
        for u in 0..n {
            let deg = g.weighted_degree(u);
            for &(v, w) in g.neighbors(u) {
                entries[u * n + v] = BigRational::new(w.into(), deg.into());
            }
        }
        RationalMatrix { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &BigRational {
        &self.entries[i * self.n + j]
    }

    pub fn get_f64(&self, i: usize, j: usize) -> f64 {
        super::field::Field::to_f64(self.get(i, j))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut entries = vec![BigRational::zero(); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let b = other.get(k, j);
                    if !b.is_zero() {
                        entries[i * n + j] += a * b;
                    }
                }
            }
        }
        RationalMatrix { n, entries }
    }

    pub fn pow(&self, mut e: u64) -> Self {
        let mut base = self.clone();
        let mut acc = Self::identity(self.n);
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }
}

fn guard(n: usize, length: usize) -> Result<(), OracleError> {
    let bits = (n.max(2) as f64).log2() * length as f64;
    if bits > 24.0 {
        return Err(OracleError::TooLarge(format!("{length} steps on {n} vertices")));
    }
    Ok(())
}

/// Every length-`length` walk from `start` with its exact probability.
pub fn exact_walk_distribution(
    g: &Graph,
    start: usize,
    length: usize,
) -> Result<WalkDistribution, OracleError> {
    let p = RationalMatrix::transition(g);
    stopped_walk_distribution(&p, start, length, usize::MAX)
}

/// Law of the walk stopped at the first visit of its `rho`-th distinct
/// vertex, or after `length` steps if that never happens.
pub fn stopped_walk_distribution(
    p: &RationalMatrix,
    start: usize,
    length: usize,
    rho: usize,
) -> Result<WalkDistribution, OracleError> {
    guard(p.n(), length)?;
    let mut out = WalkDistribution::new();
    let mut walk = vec![start];
    let mut seen = vec![false; p.n()];
    seen[start] = true;
    descend(p, length, rho, &mut walk, &mut seen, 1, BigRational::one(), &mut out);
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn descend(
    p: &RationalMatrix,
    length: usize,
    rho: usize,
    walk: &mut Vec<usize>,
    seen: &mut [bool],
    distinct: usize,
    prob: BigRational,
    out: &mut WalkDistribution,
) {
    if walk.len() == length + 1 || distinct >= rho {
        *out.entry(walk.clone()).or_insert_with(BigRational::zero) += prob;
        return;
    }
    let u = *walk.last().unwrap();
    for v in 0..p.n() {
        let step = p.get(u, v);
        if step.is_zero() {
            continue;
        }
        let fresh = !seen[v];
        seen[v] = true;
        walk.push(v);
        descend(p, length, rho, walk, seen, distinct + fresh as usize, &prob * step, out);
        walk.pop();
        if fresh {
            seen[v] = false;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::named;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    #[test]
    fn single_steps() {
        let p3 = named("p3").unwrap();
        let d = exact_walk_distribution(&p3, 1, 1).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[&vec![1, 0]], q(1, 2));
        assert_eq!(d[&vec![1, 2]], q(1, 2));

        let k3 = named("k3").unwrap();
        let d = exact_walk_distribution(&k3, 0, 2).unwrap();
        assert_eq!(d.len(), 4);
        assert!(d.values().all(|x| *x == q(1, 4)));
    }

    #[test]
    fn k3_midpoint_of_closed_length_four_walks() {
        let k3 = named("k3").unwrap();
        let d = exact_walk_distribution(&k3, 0, 4).unwrap();
        let total: BigRational = d.values().sum();
        assert_eq!(total, BigRational::one());
        let mut marginal = [BigRational::zero(), BigRational::zero(), BigRational::zero()];
        let mut closed = BigRational::zero();
        for (w, pr) in &d {
            if w[4] == 0 {
                marginal[w[2]] += pr;
                closed += pr;
            }
        }
        let cond: Vec<BigRational> = marginal.iter().map(|m| m / &closed).collect();
        assert_eq!(cond, vec![q(2, 3), q(1, 6), q(1, 6)]);
        // Agrees with the matrix-power route: P^4[0][0] = 3/8.
        let p4 = RationalMatrix::transition(&k3).pow(4);
        assert_eq!(p4.get(0, 0), &closed);
        assert_eq!(closed, q(3, 8));
    }

    #[test]
    fn stopped_walks_sum_to_one() {
        let k3 = named("k3").unwrap();
        let p = RationalMatrix::transition(&k3);
        let d = stopped_walk_distribution(&p, 0, 8, 3).unwrap();
        let total: BigRational = d.values().sum();
        assert_eq!(total, BigRational::one());
        // Third distinct vertex at step 2 w.p. 1/2.
        let at_two: BigRational = d.iter().filter(|(w, _)| w.len() == 3).map(|(_, p)| p).sum();
        assert_eq!(at_two, q(1, 2));
    }

    #[test]
    fn too_large_is_rejected() {
        let p = named("petersen").unwrap();
        assert!(matches!(exact_walk_distribution(&p, 0, 8), Err(OracleError::TooLarge(_))));
    }
}

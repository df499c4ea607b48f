use std::collections::BTreeMap;

use crate::graph::{laplacian, Dsu, Edge, Graph};

use super::OracleError;

pub const DEFAULT_CENSUS_CAP: usize = 10_000;

/// Weighted spanning-tree count (sum over trees of the product of edge
/// weights) by the Matrix-Tree theorem: the determinant of the Laplacian with
/// its last row and column removed, computed by fraction-free (Bareiss)
/// elimination.
pub fn count_spanning_trees(g: &Graph) -> Result<u128, OracleError> {
    let lap = laplacian(g);
    let k = g.n() - 1;
    if k == 0 {
        return Ok(1);
    }
    let mut m: Vec<i128> = (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| lap.get(i, j) as i128)
        .collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for p in 0..k {
        if m[p * k + p] == 0 {
            let Some(swap) = (p + 1..k).find(|&r| m[r * k + p] != 0) else {
                return Ok(0);
            };
            for j in 0..k {
                m.swap(p * k + j, swap * k + j);
            }
            sign = -sign;
        }
        let pivot = m[p * k + p];
        for i in p + 1..k {
            for j in p + 1..k {
                let num = m[i * k + j]
                    .checked_mul(pivot)
                    .and_then(|a| m[i * k + p].checked_mul(m[p * k + j]).and_then(|b| a.checked_sub(b)))
                    .ok_or(OracleError::Overflow)?;
                m[i * k + j] = num / prev;
            }
            m[i * k + p] = 0;
        }
        prev = pivot;
    }
    let det = sign * m[k * k - 1];
    u128::try_from(det).map_err(|_| OracleError::Overflow)
}

/// Exhaustive list of spanning trees in canonical order (each tree is its
/// sorted edge list; trees are sorted lexicographically).
#[derive(Debug, Clone, PartialEq)]
pub struct TreeCensus {
    pub tree_count: u128,
    trees: Vec<Vec<Edge>>,
    index: BTreeMap<Vec<(usize, usize)>, usize>,
}

impl TreeCensus {
    pub fn trees(&self) -> &[Vec<Edge>] {
        &self.trees
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    /// Position of a tree in the census, if it is one of its trees.
    pub fn index_of(&self, edges: &[Edge]) -> Option<usize> {
        let mut key: Vec<(usize, usize)> = edges.iter().map(Edge::key).collect();
        key.sort_unstable();
        self.index.get(&key).copied()
    }

    /// Target law: probability of each tree proportional to the product of
    /// its edge weights (uniform for unweighted graphs).
    pub fn target_distribution(&self) -> Vec<f64> {
        let weights: Vec<f64> = self
            .trees
            .iter()
            .map(|t| t.iter().map(|e| e.w as f64).product())
            .collect();
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }
}

pub fn enumerate_spanning_trees(g: &Graph, cap: usize) -> Result<TreeCensus, OracleError> {
    let weighted = count_spanning_trees(g)?;
    if g.is_unweighted() && weighted > cap as u128 {
        return Err(OracleError::CapExceeded { count: weighted, cap });
    }
    let mut trees = Vec::new();
    let mut chosen = Vec::with_capacity(g.n() - 1);
    extend(g, 0, &mut chosen, &Dsu::new(g.n()), cap, &mut trees)?;
    trees.sort();
    let index = trees
        .iter()
        .enumerate()
        .map(|(i, t)| (t.iter().map(Edge::key).collect(), i))
        .collect();
    Ok(TreeCensus { tree_count: weighted, trees, index })
}

fn extend(
    g: &Graph,
    next: usize,
    chosen: &mut Vec<Edge>,
    dsu: &Dsu,
    cap: usize,
    out: &mut Vec<Vec<Edge>>,
) -> Result<(), OracleError> {
    let need = g.n() - 1 - chosen.len();
    if need == 0 {
        if out.len() == cap {
            return Err(OracleError::CapExceeded { count: cap as u128 + 1, cap });
        }
        out.push(chosen.clone());
        return Ok(());
    }
    if g.m() - next < need {
        return Ok(());
    }
    let e = g.edges()[next];
    let mut with = dsu.clone();
    if with.union(e.u, e.v) {
        chosen.push(e);
        extend(g, next + 1, chosen, &with, cap, out)?;
        chosen.pop();
    }
    extend(g, next + 1, chosen, dsu, cap, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::named;
    use crate::graph::load_graph;

    #[test]
    fn counts() {
        assert_eq!(count_spanning_trees(&named("k3").unwrap()), Ok(3));
        assert_eq!(count_spanning_trees(&named("k4").unwrap()), Ok(16));
        assert_eq!(count_spanning_trees(&named("c5").unwrap()), Ok(5));
        assert_eq!(count_spanning_trees(&named("star-s3").unwrap()), Ok(1));
        assert_eq!(count_spanning_trees(&load_graph("1 2").unwrap()), Ok(1));
        // Weighted triangle: trees {12,23}: 2*3, {12,13}: 2*5, {23,13}: 3*5.
        let w = load_graph("1 2 2\n2 3 3\n1 3 5").unwrap();
        assert_eq!(count_spanning_trees(&w), Ok(31));
    }

    #[test]
    fn petersen_matches_independent_determinant() {
        // Oracle: cofactor expansion-free check by rational Gaussian
        // elimination of the same minor.
        use crate::oracles::field::Field;
        use num_rational::BigRational;
        let g = named("petersen").unwrap();
        let lap = laplacian(&g);
        let k = g.n() - 1;
        let mut m: Vec<BigRational> = (0..k * k)
            .map(|x| BigRational::from_integer(lap.get(x / k, x % k).into()))
            .collect();
        let mut det = BigRational::one();
        for p in 0..k {
            let piv = m[p * k + p].clone();
            det = det.mul(&piv);
            for i in p + 1..k {
                let f = m[i * k + p].div(&piv);
                for j in p..k {
                    let t = m[p * k + j].mul(&f);
                    m[i * k + j] = m[i * k + j].sub(&t);
                }
            }
        }
        assert_eq!(det, BigRational::from_integer(2000.into()));
        assert_eq!(count_spanning_trees(&g), Ok(2000));
    }

    #[test]
    fn census_examples() {
        let k3 = enumerate_spanning_trees(&named("k3").unwrap(), DEFAULT_CENSUS_CAP).unwrap();
        let keys: Vec<Vec<(usize, usize)>> =
            k3.trees().iter().map(|t| t.iter().map(Edge::key).collect()).collect();
        assert_eq!(keys, vec![vec![(0, 1), (0, 2)], vec![(0, 1), (1, 2)], vec![(0, 2), (1, 2)]]);

        let star = named("star-s3").unwrap();
        let census = enumerate_spanning_trees(&star, DEFAULT_CENSUS_CAP).unwrap();
        assert_eq!(census.trees(), &[star.edges().to_vec()]);

        let c5 = named("c5").unwrap();
        let census = enumerate_spanning_trees(&c5, DEFAULT_CENSUS_CAP).unwrap();
        assert_eq!(census.len(), 5);
        for t in census.trees() {
            assert_eq!(t.len(), 4);
            assert!(c5.is_spanning_tree(t));
        }
    }

    #[test]
    fn census_matches_count_on_corpus() {
        for (name, g) in crate::corpus::all() {
            let census = enumerate_spanning_trees(&g, DEFAULT_CENSUS_CAP).unwrap();
            assert_eq!(census.len() as u128, census.tree_count, "{name}");
            for (i, t) in census.trees().iter().enumerate() {
                assert!(g.is_spanning_tree(t));
                assert_eq!(census.index_of(t), Some(i));
            }
        }
    }

    #[test]
    fn cap_is_enforced() {
        let k4 = named("k4").unwrap();
        assert_eq!(
            enumerate_spanning_trees(&k4, 10),
            Err(OracleError::CapExceeded { count: 16, cap: 10 })
        );
    }

    #[test]
    fn weighted_target() {
        let w = load_graph("1 2 2\n2 3 3\n1 3 5").unwrap();
        let census = enumerate_spanning_trees(&w, 100).unwrap();
        let target = census.target_distribution();
        // Canonical order: {12,13}, {12,23}, {13,23}.
        let expect = [10.0 / 31.0, 6.0 / 31.0, 15.0 / 31.0];
        for (a, b) in target.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}

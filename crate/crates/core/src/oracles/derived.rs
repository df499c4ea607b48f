use num_rational::BigRational;

use crate::graph::Graph;

use super::field::{solve, Field};
use super::{OracleError, OracleMode};

/// Dense oracle result. Float values are always present; exact values are
/// kept when the computation ran in rational mode.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMatrix {
    pub mode: OracleMode,
    rows: usize,
    cols: usize,
    float: Vec<f64>,
    exact: Option<Vec<BigRational>>,
}

impl OracleMatrix {
    fn from_field<F: Field + 'static>(rows: usize, cols: usize, values: Vec<F>) -> Self {
        let float = values.iter().map(Field::to_f64).collect();
        let exact = (&values as &dyn std::any::Any)
            .downcast_ref::<Vec<BigRational>>()
            .cloned();
        let mode = if exact.is_some() { OracleMode::Rational } else { OracleMode::Float };
        OracleMatrix { mode, rows, cols, float, exact }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.float[i * self.cols + j]
    }

    pub fn exact(&self, i: usize, j: usize) -> Option<&BigRational> {
        self.exact.as_ref().map(|e| &e[i * self.cols + j])
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.float[i * self.cols..(i + 1) * self.cols]
    }
}

/// Exact Schur complement of `L(G)` onto `subset`, seen as a weighted graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SchurGraph {
    /// Sorted vertices of the kept set; row `i` of both matrices is `subset[i]`.
    pub subset: Vec<usize>,
    pub laplacian: OracleMatrix,
    pub transition: OracleMatrix,
}

impl SchurGraph {
    /// Edge weight between the `i`-th and `j`-th kept vertices.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            -self.laplacian.get(i, j)
        }
    }
}

fn check_subset(g: &Graph, subset: &[usize]) -> Result<(Vec<usize>, Vec<bool>), OracleError> {
    let mut s = subset.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.is_empty() {
        return Err(OracleError::BadSubset("empty".into()));
    }
    if let Some(&v) = s.iter().find(|&&v| v >= g.n()) {
        return Err(OracleError::BadSubset(format!("vertex {} out of range", v + 1)));
    }
    let mut mask = vec![false; g.n()];
    for &v in &s {
        mask[v] = true;
    }
    Ok((s, mask))
}

fn transition<F: Field>(g: &Graph, u: usize, v: usize) -> F {
    match g.weight(u, v) {
        Some(w) => F::from_ratio(w, g.weighted_degree(u)),
        None => F::zero(),
    }
}

fn lap_entry<F: Field>(g: &Graph, u: usize, v: usize) -> F {
    if u == v {
        F::from_ratio(g.weighted_degree(u), 1)
    } else {
        match g.weight(u, v) {
            Some(w) => F::zero().sub(&F::from_ratio(w, 1)),
            None => F::zero(),
        }
    }
}

fn schur_in<F: Field + 'static>(g: &Graph, s: &[usize], mask: &[bool]) -> Result<SchurGraph, OracleError> {
    let out: Vec<usize> = (0..g.n()).filter(|&v| !mask[v]).collect();
    let (m, k) = (s.len(), out.len());
    let mut lap: Vec<F> = s
        .iter()
        .flat_map(|&a| s.iter().map(move |&b| (a, b)))
        .map(|(a, b)| lap_entry(g, a, b))
        .collect();
    if k > 0 {
        let mut a: Vec<F> = out
            .iter()
            .flat_map(|&x| out.iter().map(move |&y| (x, y)))
            .map(|(x, y)| lap_entry(g, x, y))
            .collect();
        let mut b: Vec<F> = out
            .iter()
            .flat_map(|&x| s.iter().map(move |&y| (x, y)))
            .map(|(x, y)| lap_entry(g, x, y))
            .collect();
        solve(k, &mut a, m, &mut b).ok_or(OracleError::Singular)?;
        for (i, &u) in s.iter().enumerate() {
            for (r, &x) in out.iter().enumerate() {
                let l: F = lap_entry(g, u, x);
                if l.is_zero() {
                    continue;
                }
                for j in 0..m {
                    let t = l.mul(&b[r * m + j]);
                    lap[i * m + j] = lap[i * m + j].sub(&t);
                }
            }
        }
    }
    let mut trans = vec![F::zero(); m * m];
    for i in 0..m {
        let total = (0..m)
            .filter(|&j| j != i)
            .fold(F::zero(), |acc, j| acc.sub(&lap[i * m + j]));
        if total.is_zero() {
            trans[i * m + i] = F::one();
            continue;
        }
        for j in (0..m).filter(|&j| j != i) {
            trans[i * m + j] = F::zero().sub(&lap[i * m + j]).div(&total);
        }
    }
    Ok(SchurGraph {
        subset: s.to_vec(),
        laplacian: OracleMatrix::from_field(m, m, lap),
        transition: OracleMatrix::from_field(m, m, trans),
    })
}

/// Schur complement graph of `g` onto `subset` by eliminating the remaining
/// vertices from the Laplacian.
pub fn exact_schur(g: &Graph, subset: &[usize]) -> Result<SchurGraph, OracleError> {
    let (s, mask) = check_subset(g, subset)?;
    match OracleMode::for_size(g.n()) {
        OracleMode::Rational => schur_in::<BigRational>(g, &s, &mask),
        OracleMode::Float => schur_in::<f64>(g, &s, &mask),
    }
}

/// Solves the absorbing chain with absorbing vertices `absorb`: returns the
/// fundamental matrix `(I - P_TT)^{-1}` over the transient vertices `trans`.
fn fundamental<F: Field>(g: &Graph, trans: &[usize]) -> Result<Vec<F>, OracleError> {
    let k = trans.len();
    let mut a: Vec<F> = Vec::with_capacity(k * k);
    for (i, &x) in trans.iter().enumerate() {
        for (j, &y) in trans.iter().enumerate() {
            let p: F = transition(g, x, y);
            let id = if i == j { F::one() } else { F::zero() };
            a.push(id.sub(&p));
        }
    }
    let mut b: Vec<F> = (0..k * k)
        .map(|x| if x / k == x % k { F::one() } else { F::zero() })
        .collect();
    solve(k, &mut a, k, &mut b).ok_or(OracleError::Singular)?;
    Ok(b)
}

fn shortcut_in<F: Field + 'static>(g: &Graph, mask: &[bool]) -> Result<OracleMatrix, OracleError> {
    let n = g.n();
    let out: Vec<usize> = (0..n).filter(|&v| !mask[v]).collect();
    let k = out.len();
    let fund: Vec<F> = fundamental(g, &out)?;
    let into_s: Vec<F> = (0..n)
        .map(|v| (0..n).filter(|&s| mask[s]).fold(F::zero(), |acc, s| acc.add(&transition(g, v, s))))
        .collect();
    let mut q = vec![F::zero(); n * n];
    for u in 0..n {
        q[u * n + u] = into_s[u].clone();
        for (r, &x) in out.iter().enumerate() {
            let step: F = transition(g, u, x);
            if step.is_zero() {
                continue;
            }
            for (c, &v) in out.iter().enumerate() {
                let t = step.mul(&fund[r * k + c]).mul(&into_s[v]);
                q[u * n + v] = q[u * n + v].add(&t);
            }
        }
    }
    Ok(OracleMatrix::from_field(n, n, q))
}

/// Shortcut matrix: `Q[u][v]` is the probability that a walk from `u` is at
/// `v` one step before its first visit to `subset` (counting steps from 1).
pub fn exact_shortcut(g: &Graph, subset: &[usize]) -> Result<OracleMatrix, OracleError> {
    let (_, mask) = check_subset(g, subset)?;
    match OracleMode::for_size(g.n()) {
        OracleMode::Rational => shortcut_in::<BigRational>(g, &mask),
        OracleMode::Float => shortcut_in::<f64>(g, &mask),
    }
}

fn first_hit_in<F: Field + 'static>(g: &Graph, s: &[usize]) -> Result<OracleMatrix, OracleError> {
    let n = g.n();
    let m = s.len();
    let mut out = vec![F::zero(); m * m];
    for (i, &u) in s.iter().enumerate() {
        let targets: Vec<usize> = s.iter().copied().filter(|&v| v != u).collect();
        if targets.is_empty() {
            out[i * m + i] = F::one();
            continue;
        }
        let trans: Vec<usize> = (0..n).filter(|v| !targets.contains(v)).collect();
        let fund: Vec<F> = fundamental(g, &trans)?;
        let k = trans.len();
        let r = trans.iter().position(|&v| v == u).unwrap();
        for (j, &t) in s.iter().enumerate() {
            if t == u {
                continue;
            }
            let mut acc = F::zero();
            for (c, &x) in trans.iter().enumerate() {
                let p: F = transition(g, x, t);
                if !p.is_zero() {
                    acc = acc.add(&fund[r * k + c].mul(&p));
                }
            }
            out[i * m + j] = acc;
        }
    }
    Ok(OracleMatrix::from_field(m, m, out))
}

/// For each `u` in `subset` (sorted), the law of the first vertex of
/// `subset \ {u}` that a walk from `u` visits. Computed from absorbing-chain
/// hitting probabilities, independently of [`exact_schur`].
pub fn first_hit_distribution(g: &Graph, subset: &[usize]) -> Result<OracleMatrix, OracleError> {
    let (s, _) = check_subset(g, subset)?;
    match OracleMode::for_size(g.n()) {
        OracleMode::Rational => first_hit_in::<BigRational>(g, &s),
        OracleMode::Float => first_hit_in::<f64>(g, &s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{all, named};

    fn q(a: u64, b: u64) -> BigRational {
        <BigRational as Field>::from_ratio(a, b)
    }

    #[test]
    fn schur_examples() {
        let star = named("star-s3").unwrap();
        // Leaves are 0, 1, 3; centre is 2.
        let h = exact_schur(&star, &[0, 1, 3]).unwrap();
        assert_eq!(h.transition.mode, OracleMode::Rational);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { q(0, 1) } else { q(1, 2) };
                assert_eq!(h.transition.exact(i, j).unwrap(), &want);
            }
        }
        let p3 = named("p3").unwrap();
        let h = exact_schur(&p3, &[0, 2]).unwrap();
        assert_eq!(h.transition.exact(0, 1).unwrap(), &<BigRational as Field>::one());
        assert_eq!(h.transition.exact(1, 0).unwrap(), &<BigRational as Field>::one());
        assert_eq!(h.weight(0, 1), 0.5);

        let k4 = named("k4").unwrap();
        let h = exact_schur(&k4, &[0, 1, 2, 3]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(h.laplacian.get(i, j), crate::graph::laplacian(&k4).get(i, j) as f64);
            }
        }
    }

    #[test]
    fn schur_matches_first_hits_on_small_corpus() {
        for (name, g) in all() {
            if g.n() > 5 {
                continue;
            }
            let n = g.n();
            for bits in 1u32..(1 << n) {
                let s: Vec<usize> = (0..n).filter(|&v| bits >> v & 1 == 1).collect();
                if s.len() < 2 {
                    continue;
                }
                let h = exact_schur(&g, &s).unwrap();
                let f = first_hit_distribution(&g, &s).unwrap();
                for i in 0..s.len() {
                    for j in 0..s.len() {
                        assert_eq!(h.transition.exact(i, j), f.exact(i, j), "{name} {s:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn shortcut_examples() {
        let star = named("star-s3").unwrap();
        let sc = exact_shortcut(&star, &[0, 1, 3]).unwrap();
        for leaf in [0, 1, 3] {
            assert_eq!(sc.exact(leaf, 2).unwrap(), &<BigRational as Field>::one());
        }
        let p3 = named("p3").unwrap();
        let sc = exact_shortcut(&p3, &[0, 2]).unwrap();
        assert_eq!(sc.exact(0, 1).unwrap(), &<BigRational as Field>::one());
        // With nothing to skip the predecessor of the first step is the start.
        let k3 = named("k3").unwrap();
        let sc = exact_shortcut(&k3, &[0, 1, 2]).unwrap();
        for u in 0..3 {
            for v in 0..3 {
                assert_eq!(sc.get(u, v), if u == v { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn shortcut_rows_are_distributions() {
        for (name, g) in all() {
            let n = g.n();
            let s: Vec<usize> = (0..n).step_by(2).collect();
            let sc = exact_shortcut(&g, &s).unwrap();
            for u in 0..n {
                match sc.mode {
                    OracleMode::Rational => {
                        let total: BigRational = (0..n).map(|v| sc.exact(u, v).unwrap().clone()).sum();
                        assert_eq!(total, <BigRational as Field>::one(), "{name}");
                    }
                    OracleMode::Float => {
                        let total: f64 = sc.row(u).iter().sum();
                        assert!((total - 1.0).abs() < 1e-12, "{name}");
                    }
                }
            }
        }
    }

    #[test]
    fn shortcut_agrees_with_walk_enumeration() {
        // Walks on C4 from 0 until the first visit of {2}, truncated at 14
        // steps; the predecessor of 2 is 1 or 3 with probability 1/2 each.
        let c4 = named("c4").unwrap();
        let sc = exact_shortcut(&c4, &[2]).unwrap();
        assert_eq!(sc.exact(0, 1).unwrap(), &q(1, 2));
        assert_eq!(sc.exact(0, 3).unwrap(), &q(1, 2));
        let walks = crate::oracles::exact_walk_distribution(&c4, 0, 12).unwrap();
        let mut pred1 = 0.0;
        let mut hit = 0.0;
        for (w, p) in &walks {
            if let Some(j) = w.iter().skip(1).position(|&x| x == 2) {
                hit += Field::to_f64(p);
                if w[j] == 1 {
                    pred1 += Field::to_f64(p);
                }
            }
        }
        assert!((pred1 / hit - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bad_subsets() {
        let k3 = named("k3").unwrap();
        assert!(matches!(exact_schur(&k3, &[]), Err(OracleError::BadSubset(_))));
        assert!(matches!(exact_shortcut(&k3, &[5]), Err(OracleError::BadSubset(_))));
    }
}

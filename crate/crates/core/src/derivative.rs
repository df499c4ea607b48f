//! Shortcut and Schur complement transition matrices built with the matrix
//! engine: the shortcut from a power of an absorbing auxiliary chain, the
//! Schur complement by normalising `Q R`.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::engine::{install_ladder, EngineError, FixedMatrix, PowerLadder, PrecisionConfig};
use crate::graph::{Graph, TransitionMatrix};
use crate::sim::{ClusterState, MessageBatch};

/// Multiplier `C` in the absorbing power `k = C n^3 log2(1/beta)`.
pub const SHORTCUT_CONSTANT: f64 = 8.0;

/// Store key for a machine's [`ShortcutColumn`].
pub const SHORTCUT_COLUMN: &str = "shortcut/column";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DerivativeError {
    #[error("error budget {budget:e} exceeds beta {beta:e}")]
    BudgetExceeded { budget: f64, beta: f64 },
    #[error("row scaler for vertex {vertex} is {scaler:e}, above the n^6 guard")]
    DegenerateRow { vertex: usize, scaler: f64 },
    #[error("invalid vertex subset: {0}")]
    BadSubset(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn normalise_subset(g: &Graph, subset: &[usize], min: usize) -> Result<Vec<usize>, DerivativeError> {
    let mut s = subset.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() < min {
        return Err(DerivativeError::BadSubset(format!("need at least {min} vertices")));
    }
    if s.last().is_some_and(|&v| v >= g.n()) {
        return Err(DerivativeError::BadSubset("vertex out of range".into()));
    }
    Ok(s)
}

fn membership(n: usize, s: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; n];
    for &v in s {
        mask[v] = true;
    }
    mask
}

/// `Q[u][v]`: probability that `v` is the vertex just before the first visit
/// (at time at least 1) of a walk from `u` to the subset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShortcutMatrix {
    pub q: TransitionMatrix,
    #[serde(skip)]
    pub fixed: FixedMatrix,
    pub subset: Vec<usize>,
    /// Per-entry subtractive bound, covering both the absorption tail and
    /// rounding.
    pub error_budget: f64,
    /// Squarings of the `2n x 2n` auxiliary matrix.
    pub squarings: u64,
}

/// Power of two used to approximate the absorbed limit.
pub fn absorbing_power(n: usize, beta: f64) -> u64 {
    let n = n as f64;
    let k = (SHORTCUT_CONSTANT * n * n * n * (1.0 / beta).log2()).ceil().max(1.0) as u64;
    k.next_power_of_two()
}

pub fn compute_shortcut(
    g: &Graph,
    subset: &[usize],
    precision: &PrecisionConfig,
) -> Result<ShortcutMatrix, DerivativeError> {
    precision.validate()?;
    let s = normalise_subset(g, subset, 1)?;
    let n = g.n();
    let bits = precision.round_bits;
    let mask = membership(n, &s);
    let mut r = FixedMatrix::zeros(2 * n, bits);
    for u in 0..n {
        let deg = g.weighted_degree(u) as u128;
        let to_s: u64 = g.neighbors(u).iter().filter(|(v, _)| mask[*v]).map(|(_, w)| w).sum();
        r.set_raw(u, n + u, ((to_s as u128) << bits) / deg);
        for &(v, w) in g.neighbors(u) {
            if !mask[v] {
                r.set_raw(u, v, ((w as u128) << bits) / deg);
            }
        }
        r.set_raw(n + u, n + u, r.one());
    }
    let k = absorbing_power(n, precision.beta);
    let squarings = k.trailing_zeros() as u64;
    for _ in 0..squarings {
        r = r.mul(&r);
    }
    let mut fixed = FixedMatrix::zeros(n, bits);
    for u in 0..n {
        for v in 0..n {
            fixed.set_raw(u, v, r.raw(u, n + v));
        }
    }
    // The exact rows sum to one and every computed entry sits below its exact
    // value, so the row deficit bounds each entry's error.
    let error_budget = fixed.max_row_deficit();
    if error_budget > precision.beta {
        return Err(DerivativeError::BudgetExceeded { budget: error_budget, beta: precision.beta });
    }
    let q = TransitionMatrix::from_rows(n, fixed.to_f64_entries(), error_budget + f64::EPSILON / 2.0, k);
    Ok(ShortcutMatrix { q, fixed, subset: s, error_budget, squarings })
}

/// A machine's column of `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortcutColumn {
    pub column: usize,
    pub values: Vec<f64>,
}

/// Charges the squarings (each as eight `n x n` block products) and sends
/// `Q[u][v]` from machine `u` to machine `v`.
pub fn install_shortcut(cs: &mut ClusterState, sc: &ShortcutMatrix, label: &str) {
    let n = sc.q.n();
    cs.charge_matmul(8 * sc.squarings, &format!("{label}/matmul"));
    let mut batch = MessageBatch::new();
    for u in 0..n {
        for v in 0..n {
            batch.push(u, v, 1, sc.q.get(u, v));
        }
    }
    let inbox = cs.deliver(batch, &format!("{label}/distribute"));
    for v in 0..n {
        let mut values = vec![0.0; n];
        for r in inbox.at(v) {
            values[r.src] = r.payload;
        }
        cs.machine(v).store.put(SHORTCUT_COLUMN, ShortcutColumn { column: v, values });
    }
}

pub fn build_shortcut(
    cs: &mut ClusterState,
    g: &Graph,
    subset: &[usize],
    precision: &PrecisionConfig,
) -> Result<ShortcutMatrix, DerivativeError> {
    let sc = compute_shortcut(g, subset, precision)?;
    install_shortcut(cs, &sc, "shortcut");
    Ok(sc)
}

/// Transition matrix of the Schur complement graph on a subset, indexed by
/// position in the sorted subset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchurMatrix {
    pub sch: TransitionMatrix,
    #[serde(skip)]
    pub fixed: FixedMatrix,
    pub subset: Vec<usize>,
    /// `M_u = 1 / (1 - (QR)[u][u])` from the computed product.
    pub row_scalers: Vec<f64>,
    /// `Q R` on the subset with its diagonal cleared, before rescaling.
    /// Entrywise below the exact values.
    pub pre_normalization: TransitionMatrix,
    /// Two-sided per-entry bound on `sch`.
    pub error_budget: f64,
    /// Bound on the L1 error of any row of `sch`.
    pub row_budget: f64,
}

pub fn compute_schur(
    g: &Graph,
    shortcut: &ShortcutMatrix,
    precision: &PrecisionConfig,
) -> Result<SchurMatrix, DerivativeError> {
    let s = normalise_subset(g, &shortcut.subset, 2)?;
    let n = g.n();
    let m = s.len();
    let bits = precision.round_bits;
    let mask = membership(n, &s);
    let mut r = FixedMatrix::zeros(n, bits);
    for u in 0..n {
        let deg_s: u64 = g.neighbors(u).iter().filter(|(v, _)| mask[*v]).map(|(_, w)| w).sum();
        if deg_s == 0 {
            r.set_raw(u, u, r.one());
            continue;
        }
        for &(v, w) in g.neighbors(u) {
            if mask[v] {
                r.set_raw(u, v, ((w as u128) << bits) / deg_s as u128);
            }
        }
    }
    let qr = shortcut.fixed.mul(&r).block(&s, &s);
    let guard = (n as f64).powi(6);
    let mut fixed = FixedMatrix::zeros(m, bits);
    let mut pre = FixedMatrix::zeros(m, bits);
    let mut scalers = Vec::with_capacity(m);
    let (mut entry_budget, mut row_budget) = (0.0f64, 0.0f64);
    for a in 0..m {
        let deficit = qr.row_deficit(a);
        let off: u128 = (0..m).filter(|&b| b != a).map(|b| qr.raw(a, b)).sum();
        let off_f = qr.ulp() * off as f64;
        let scaler = 1.0 / off_f;
        if !(scaler <= guard) {
            return Err(DerivativeError::DegenerateRow { vertex: s[a], scaler });
        }
        scalers.push(scaler);
        for b in (0..m).filter(|&b| b != a) {
            pre.set_raw(a, b, qr.raw(a, b));
            fixed.set_raw(a, b, qr.div_raw(qr.raw(a, b), off));
        }
        let e = 2.0 * deficit * scaler;
        entry_budget = entry_budget.max(e + fixed.ulp());
        row_budget = row_budget.max(e + m as f64 * fixed.ulp());
    }
    if entry_budget > precision.beta {
        return Err(DerivativeError::BudgetExceeded { budget: entry_budget, beta: precision.beta });
    }
    Ok(SchurMatrix {
        sch: TransitionMatrix::from_rows(m, fixed.to_f64_entries(), entry_budget + f64::EPSILON / 2.0, 1),
        pre_normalization: TransitionMatrix::from_rows(m, pre.to_f64_entries(), shortcut.error_budget, 1),
        fixed,
        subset: s,
        row_scalers: scalers,
        error_budget: entry_budget,
        row_budget,
    })
}

/// Charges the single `Q R` product. Rows and columns reach their machines
/// when the power ladder is installed.
pub fn install_schur(cs: &mut ClusterState, label: &str) {
    cs.charge_matmul(1, &format!("{label}/matmul"));
}

pub fn build_schur(
    cs: &mut ClusterState,
    g: &Graph,
    subset: &[usize],
    precision: &PrecisionConfig,
) -> Result<(ShortcutMatrix, SchurMatrix), DerivativeError> {
    let sc = build_shortcut(cs, g, subset, precision)?;
    let sch = compute_schur(g, &sc, precision)?;
    install_schur(cs, "schur");
    Ok((sc, sch))
}

/// Power ladder of a Schur matrix, hosted by the subset's own machines.
pub fn compute_schur_ladder(
    sch: &SchurMatrix,
    target: u64,
    precision: &PrecisionConfig,
) -> Result<PowerLadder, DerivativeError> {
    Ok(PowerLadder::compute(
        sch.fixed.clone(),
        sch.error_budget,
        sch.row_budget,
        target,
        precision,
        sch.subset.clone(),
    )?)
}

pub fn schur_power_ladder(
    cs: &mut ClusterState,
    sch: &SchurMatrix,
    target: u64,
    precision: &PrecisionConfig,
) -> Result<Arc<PowerLadder>, DerivativeError> {
    let ladder = Arc::new(compute_schur_ladder(sch, target, precision)?);
    install_ladder(cs, &ladder, "schur-ladder");
    Ok(ladder)
}

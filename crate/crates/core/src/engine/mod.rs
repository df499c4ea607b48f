//! Rounded powers `P, P^2, P^4, ..., P^l` of a transition matrix, computed in
//! fixed point with a tracked subtractive error budget and laid out so that
//! the machine hosting index `i` holds row `i` and column `i` of every power.

mod fixed;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{Graph, TransitionMatrix};
use crate::sim::{ClusterState, MessageBatch};

pub use fixed::{FixedMatrix, MAX_BITS};

/// Store key for a machine's [`LadderRow`].
pub const LADDER_ROW: &str = "ladder/row";
/// Store key for a machine's [`LadderColumn`].
pub const LADDER_COLUMN: &str = "ladder/column";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("error budget {budget:e} exceeds beta {beta:e}; more fractional bits are needed")]
    BudgetExceeded { budget: f64, beta: f64 },
    #[error("target length {0} is not a power of two")]
    NotPowerOfTwo(u64),
    #[error("invalid precision settings: {0}")]
    InvalidPrecision(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrecisionConfig {
    /// Largest acceptable subtractive error per entry.
    pub beta: f64,
    /// Fractional bits kept after each product.
    pub round_bits: u32,
    /// Optional exponent bounds `k <= n^c3`, `beta >= n^-c4`, checked if set.
    pub c3: Option<f64>,
    pub c4: Option<f64>,
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        PrecisionConfig { beta: 1e-9, round_bits: 96, c3: None, c4: None }
    }
}

impl PrecisionConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.beta > 0.0) {
            return Err(EngineError::InvalidPrecision("beta must be positive".into()));
        }
        if !(8..=MAX_BITS).contains(&self.round_bits) {
            return Err(EngineError::InvalidPrecision(format!(
                "round_bits must lie in 8..={MAX_BITS}"
            )));
        }
        Ok(())
    }

    /// Checks the optional polynomial guards for a power `k` on `n` vertices.
    pub fn check_guards(&self, n: usize, k: u64) -> Result<(), EngineError> {
        let n = n.max(2) as f64;
        if let Some(c3) = self.c3 {
            if k as f64 > n.powf(c3) {
                return Err(EngineError::InvalidPrecision(format!("power {k} exceeds n^{c3}")));
            }
        }
        if let Some(c4) = self.c4 {
            if self.beta < n.powf(-c4) {
                return Err(EngineError::InvalidPrecision(format!("beta below n^-{c4}")));
            }
        }
        Ok(())
    }
}

/// Truncates each entry toward zero to `bits` fractional bits.
pub fn round_matrix(m: &TransitionMatrix, bits: u32) -> TransitionMatrix {
    assert!(bits >= 1);
    let scale = 2f64.powi(bits as i32);
    let entries = m.entries().iter().map(|&x| (x * scale).floor() / scale).collect();
    TransitionMatrix::from_rows(m.n(), entries, m.error_budget + 1.0 / scale, m.power)
}

/// The ladder `M^(2^j)` for `j = 0..=L`.
#[derive(Clone, PartialEq)]
pub struct PowerLadder {
    fixed: Vec<FixedMatrix>,
    matrices: Vec<TransitionMatrix>,
    entry_bound: Vec<f64>,
    row_bound: Vec<f64>,
    hosts: Vec<usize>,
}

impl fmt::Debug for PowerLadder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PowerLadder")
            .field("size", &self.size())
            .field("top_power", &self.top_power())
            .field("budget", &self.budget(self.levels() - 1))
            .finish()
    }
}

impl PowerLadder {
    /// Repeatedly squares `base` until the power reaches `target`.
    ///
    /// `base_budget` bounds the error of each base entry and `base_row_budget`
    /// the L1 error of each base row, against a row-stochastic exact base.
    pub fn compute(
        base: FixedMatrix,
        base_budget: f64,
        base_row_budget: f64,
        target: u64,
        precision: &PrecisionConfig,
        hosts: Vec<usize>,
    ) -> Result<Self, EngineError> {
        precision.validate()?;
        if !target.is_power_of_two() {
            return Err(EngineError::NotPowerOfTwo(target));
        }
        precision.check_guards(hosts.len(), target)?;
        assert_eq!(base.n(), hosts.len());
        assert_eq!(base.bits(), precision.round_bits);
        let side = base.n() as f64;
        let delta = base.ulp();
        let mut entry = vec![base_budget];
        let mut rows = vec![base_row_budget];
        let mut fixed = vec![base];
        let levels = target.trailing_zeros() as usize;
        for _ in 0..levels {
            let last = fixed.last().unwrap();
            let next = last.mul(last);
            entry.push((side + 1.0) * entry.last().unwrap() + delta);
            rows.push(2.0 * rows.last().unwrap() + side * delta);
            fixed.push(next);
        }
        let matrices = fixed
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let budget = entry[j].min(rows[j]) + f64::EPSILON / 2.0;
                TransitionMatrix::from_rows(m.n(), m.to_f64_entries(), budget, 1 << j)
            })
            .collect();
        let ladder = PowerLadder { fixed, matrices, entry_bound: entry, row_bound: rows, hosts };
        let top = ladder.budget(ladder.levels() - 1);
        if top > precision.beta {
            return Err(EngineError::BudgetExceeded { budget: top, beta: precision.beta });
        }
        Ok(ladder)
    }

    /// Ladder for the random walk on `g`, with machine `i` hosting vertex `i`.
    pub fn for_graph(g: &Graph, target: u64, precision: &PrecisionConfig) -> Result<Self, EngineError> {
        let base = FixedMatrix::transition(g, precision.round_bits);
        // Entries sit below the exact values, so the row deficit is the L1 error.
        let rows = base.max_row_deficit();
        Self::compute(base.clone(), base.ulp(), rows, target, precision, (0..g.n()).collect())
    }

    /// Number of matrices, `L + 1`.
    pub fn levels(&self) -> usize {
        self.fixed.len()
    }

    /// Number of squarings performed.
    pub fn squarings(&self) -> u64 {
        (self.levels() - 1) as u64
    }

    pub fn top_power(&self) -> u64 {
        1 << (self.levels() - 1)
    }

    pub fn size(&self) -> usize {
        self.hosts.len()
    }

    /// Machine hosting local index `i`.
    pub fn hosts(&self) -> &[usize] {
        &self.hosts
    }

    pub fn matrix(&self, j: usize) -> &TransitionMatrix {
        &self.matrices[j]
    }

    pub fn fixed(&self, j: usize) -> &FixedMatrix {
        &self.fixed[j]
    }

    /// Index `j` with `2^j == power`.
    pub fn index_of(&self, power: u64) -> usize {
        assert!(power.is_power_of_two() && power <= self.top_power(), "power {power} not in ladder");
        power.trailing_zeros() as usize
    }

    /// Entry of `M^power`.
    pub fn entry(&self, power: u64, i: usize, k: usize) -> f64 {
        self.matrices[self.index_of(power)].get(i, k)
    }

    /// Analytic per-entry subtractive bound for `M^(2^j)`.
    pub fn budget(&self, j: usize) -> f64 {
        self.entry_bound[j].min(self.row_bound[j])
    }

    /// The `E(k) <= (n+1) E(k/2) + delta` recurrence alone.
    pub fn entry_bound(&self, j: usize) -> f64 {
        self.entry_bound[j]
    }
}

/// A machine's row of every power in a ladder.
#[derive(Clone)]
pub struct LadderRow {
    ladder: Arc<PowerLadder>,
    row: usize,
}

impl LadderRow {
    pub fn index(&self) -> usize {
        self.row
    }

    /// `M^power[row, k]`.
    pub fn get(&self, power: u64, k: usize) -> f64 {
        self.ladder.entry(power, self.row, k)
    }

    pub fn row(&self, power: u64) -> &[f64] {
        self.ladder.matrix(self.ladder.index_of(power)).row(self.row)
    }
}

impl fmt::Debug for LadderRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = self.ladder.matrices.iter().map(|m| m.row(self.row)).collect();
        f.debug_struct("LadderRow").field("row", &self.row).field("values", &rows).finish()
    }
}

/// A machine's column of every power, assembled from received messages.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderColumn {
    pub column: usize,
    /// `values[j][i] = M^(2^j)[i, column]`.
    pub values: Vec<Vec<f64>>,
}

impl LadderColumn {
    pub fn get(&self, power: u64, i: usize) -> f64 {
        self.values[power.trailing_zeros() as usize][i]
    }
}

/// Charges the squarings of `ladder` and distributes it: each host keeps its
/// row and sends entry `(i, j)` of every power to the host of `j`.
pub fn install_ladder(cs: &mut ClusterState, ladder: &Arc<PowerLadder>, label: &str) {
    cs.charge_matmul(ladder.squarings(), &format!("{label}/matmul"));
    distribute(cs, ladder, label);
}

fn distribute(cs: &mut ClusterState, ladder: &Arc<PowerLadder>, label: &str) {
    let hosts = ladder.hosts().to_vec();
    let k = hosts.len();
    let levels = ladder.levels();
    let mut batch = MessageBatch::new();
    for (i, &src) in hosts.iter().enumerate() {
        let m = cs.machine(src);
        m.store.put(LADDER_ROW, LadderRow { ladder: Arc::clone(ladder), row: i });
        let row = m.store.get::<LadderRow>(LADDER_ROW).unwrap().clone();
        for (j, &dst) in hosts.iter().enumerate() {
            let vals: Vec<f64> = (0..levels).map(|l| row.get(1 << l, j)).collect();
            batch.push(src, dst, levels as u64, (j, vals));
        }
    }
    let inbox = cs.deliver(batch, &format!("{label}/distribute"));
    for (j, &dst) in hosts.iter().enumerate() {
        let mut values = vec![vec![0.0; k]; levels];
        for r in inbox.at(dst) {
            let (col, vals) = &r.payload;
            if *col != j {
                continue;
            }
            let i = hosts.iter().position(|&h| h == r.src).unwrap();
            for (l, v) in vals.iter().enumerate() {
                values[l][i] = *v;
            }
        }
        cs.machine(dst).store.put(LADDER_COLUMN, LadderColumn { column: j, values });
    }
}

/// Builds and installs the ladder of `p` up to power `target`.
pub fn build_ladder(
    cs: &mut ClusterState,
    p: &TransitionMatrix,
    target: u64,
    precision: &PrecisionConfig,
) -> Result<Arc<PowerLadder>, EngineError> {
    precision.validate()?;
    let base = FixedMatrix::from_f64(p.n(), p.entries(), precision.round_bits);
    let budget = p.error_budget + base.ulp();
    let rows = budget * p.n() as f64;
    let ladder = Arc::new(PowerLadder::compute(base, budget, rows, target, precision, (0..p.n()).collect())?);
    install_ladder(cs, &ladder, "ladder");
    Ok(ladder)
}

/// Draws an index from a row that may sum to slightly less than one; the
/// missing mass goes to the largest entry.
pub fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let x: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if x < acc {
            return i;
        }
    }
    argmax(row)
}

/// Draws from `ladder`'s power `2^j`, row `u`.
pub fn sample_ladder_row<R: Rng + ?Sized>(ladder: &PowerLadder, j: usize, u: usize, rng: &mut R) -> usize {
    sample_row(ladder.matrix(j).row(u), rng)
}

/// Draws an index with probability proportional to `weights`. Returns `None`
/// when all weights are zero.
pub fn sample_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let x = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = Some(i);
            if x < acc {
                return Some(i);
            }
        }
    }
    last
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{all, named};
    use crate::graph::{load_graph, transition_matrix};
    use crate::oracles::{Field, RationalMatrix};
    use crate::sim::CostModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cluster(n: usize) -> ClusterState {
        ClusterState::new(n, 1, CostModel::new(n))
    }

    #[test]
    fn round_matrix_examples() {
        let m = TransitionMatrix::from_rows(2, vec![1.0 / 3.0, 2.0 / 3.0, 0.5, 0.0], 0.0, 1);
        let r = round_matrix(&m, 2);
        assert_eq!(r.get(0, 0), 0.25);
        assert_eq!(r.get(1, 0), 0.5);
        assert_eq!(r.get(1, 1), 0.0);
        assert_eq!(r.error_budget, 0.25);
    }

    #[test]
    fn period_two_chain() {
        let g = load_graph("1 2").unwrap();
        let mut cs = cluster(2);
        let ladder = build_ladder(&mut cs, &transition_matrix(&g), 4, &PrecisionConfig::default()).unwrap();
        assert_eq!(ladder.levels(), 3);
        assert_eq!(ladder.matrix(0).entries(), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(ladder.matrix(1).entries(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(ladder.matrix(2).entries(), &[1.0, 0.0, 0.0, 1.0]);

        let one = build_ladder(&mut cluster(2), &transition_matrix(&g), 1, &PrecisionConfig::default()).unwrap();
        assert_eq!(one.levels(), 1);
        assert_eq!(one.matrix(0).power, 1);
    }

    #[test]
    fn k3_fourth_power() {
        let k3 = named("k3").unwrap();
        let mut cs = cluster(3);
        let ladder = build_ladder(&mut cs, &transition_matrix(&k3), 4, &PrecisionConfig::default()).unwrap();
        for u in 0..3 {
            let v = ladder.entry(4, u, u);
            assert!(v <= 0.375 && 0.375 - v <= ladder.budget(2));
        }
        assert_eq!(cs.ledger().label("ladder/matmul").units, 2);
        assert_eq!(cs.ledger().label("ladder/distribute").units, 1);
        let col = cs.peek(1).get::<LadderColumn>(LADDER_COLUMN).unwrap();
        assert_eq!(col.column, 1);
        assert_eq!(col.get(2, 0), ladder.entry(2, 0, 1));
    }

    #[test]
    fn subtractive_against_exact_powers() {
        let precision = PrecisionConfig::default();
        for (name, g) in all() {
            if g.n() > 6 {
                continue;
            }
            let ladder = PowerLadder::for_graph(&g, 64, &precision).unwrap();
            let exact = RationalMatrix::transition(&g);
            let mut power = exact.clone();
            for j in 0..ladder.levels() {
                let mut worst: f64 = 0.0;
                for u in 0..g.n() {
                    for v in 0..g.n() {
                        let e = power.get(u, v);
                        let got = ladder.fixed(j).raw(u, v);
                        // Compare in exact arithmetic: got / 2^bits <= e.
                        let scaled = e * num_rational::BigRational::from_integer(num_bigint::BigInt::from(1u8) << 96);
                        let got_r = num_rational::BigRational::from_integer(got.into());
                        assert!(got_r <= scaled, "{name} power 2^{j} not subtractive");
                        worst = worst.max(Field::to_f64(&((scaled - got_r) / num_rational::BigRational::from_integer(num_bigint::BigInt::from(1u8) << 96))));
                    }
                }
                assert!(worst <= ladder.budget(j), "{name}: {worst} > {}", ladder.budget(j));
                power = power.mul(&power);
            }
        }
    }

    #[test]
    fn budget_guard() {
        let k4 = named("k4").unwrap();
        let tight = PrecisionConfig { round_bits: 8, ..PrecisionConfig::default() };
        assert!(matches!(
            PowerLadder::for_graph(&k4, 16, &tight),
            Err(EngineError::BudgetExceeded { .. })
        ));
        assert!(matches!(
            PowerLadder::for_graph(&k4, 12, &PrecisionConfig::default()),
            Err(EngineError::NotPowerOfTwo(12))
        ));
    }

    #[test]
    fn sampling_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(sample_row(&[0.0, 1.0, 0.0], &mut rng), 1);
        }
        let star = named("star-s3").unwrap();
        let ladder = PowerLadder::for_graph(&star, 2, &PrecisionConfig::default()).unwrap();
        let mut counts = [0usize; 4];
        for _ in 0..30_000 {
            counts[sample_ladder_row(&ladder, 1, 0, &mut rng)] += 1;
        }
        assert_eq!(counts[2], 0);
        for v in [0, 1, 3] {
            assert!((counts[v] as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.015);
        }
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_row(&[0.25; 4], &mut rng)] += 1;
        }
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 3.0 * sigma);
        }
        assert_eq!(sample_row(&[0.2, 0.3, 0.0], &mut ChaCha8Rng::seed_from_u64(0)), sample_row(&[0.2, 0.3, 0.0], &mut ChaCha8Rng::seed_from_u64(0)));
        assert_eq!(sample_weighted(&[0.0, 0.0], &mut rng), None);
    }
}

//! Load-balanced doubling: every machine ends up holding a random walk from
//! its own vertex. Each machine starts with `k` one-step walks; every
//! iteration pairs walk `i` ending at `u` with `u`'s walk `k + 1 - i` at a
//! rendezvous machine picked by a shared `t`-wise independent hash, halving
//! `k` and doubling the walk length.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::graph::Graph;
use crate::phase::LEADER;
use crate::sim::{ClusterState, MessageBatch, ADJACENCY};

/// Store key for a machine's walks, `Vec<Vec<usize>>` indexed from 0.
pub const WALKS: &str = "doubling/walks";
/// Default constant `c` of the hash independence `8 c log2 n`.
pub const DEFAULT_C: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DoublingError {
    #[error("walk {index} of machine {owner} found no partner at its rendezvous")]
    MissingPartner { owner: usize, index: usize },
    #[error("tau must be at least 1")]
    ZeroTau,
    #[error("c must exceed 1, got {0}")]
    BadConstant(f64),
}

/// Degree `t - 1` polynomial hash over the prime field `F_p`, reduced mod
/// the machine count. Keys are `(vertex, index)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HashFamily {
    pub prime: u64,
    pub coeffs: Vec<u64>,
    pub n: usize,
    pub k: usize,
}

impl HashFamily {
    /// `t = ceil(8 c log2 n)`.
    pub fn independence(n: usize, c: f64) -> usize {
        (8.0 * c * (n.max(2) as f64).log2()).ceil() as usize
    }

    /// Bits per coefficient: enough for a prime of at least `n k`.
    pub fn coefficient_bits(n: usize, k: usize) -> u32 {
        ((n * k).max(2) as f64).log2().ceil() as u32 + 1
    }

    /// Builds the hash from a packed little-endian seed of `t * b` bits.
    pub fn from_seed(n: usize, k: usize, t: usize, seed: &[u64]) -> Self {
        let b = Self::coefficient_bits(n, k);
        let prime = prime_below(1u64 << b);
        let coeffs = (0..t).map(|j| take_bits(seed, j as u64 * b as u64, b) % prime).collect();
        HashFamily { prime, coeffs, n, k }
    }

    /// `h(v, i)` for `i` in `1..=k`.
    pub fn eval(&self, v: usize, i: usize) -> usize {
        let x = (v * self.k + (i - 1)) as u128;
        let p = self.prime as u128;
        let mut acc = 0u128;
        for &a in self.coeffs.iter().rev() {
            acc = (acc * x + a as u128) % p;
        }
        (acc % self.n as u128) as usize
    }
}

fn take_bits(seed: &[u64], start: u64, len: u32) -> u64 {
    let mut out = 0u64;
    for b in 0..len as u64 {
        let pos = start + b;
        let word = seed.get((pos / 64) as usize).copied().unwrap_or(0);
        out |= ((word >> (pos % 64)) & 1) << b;
    }
    out
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut a: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    a %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, a, m);
        }
        a = mul_mod(a, a, m);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin for 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let (mut d, mut s) = (n - 1, 0);
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'bases: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

/// Largest prime strictly below `bound` (`bound > 2`).
pub fn prime_below(bound: u64) -> u64 {
    (2..bound).rev().find(|&x| is_prime(x)).expect("bound above 2")
}

/// Index (1-based) of the walk that continues walk `i` out of `k`.
pub fn partner_index(k: usize, i: usize) -> usize {
    k + 1 - i
}

/// Walk bookkeeping between iterations. The walks themselves live in the
/// machine stores under [`WALKS`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DoublingState {
    pub k: usize,
    pub eta: usize,
    pub tau: usize,
    pub iteration: usize,
}

/// Per-iteration record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub eta: usize,
    /// Tuples received by each machine in the shipping step.
    pub tuples: Vec<u64>,
    pub rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoublingRun {
    /// Walk of machine `v`, starting at `v`.
    pub walks: Vec<Vec<usize>>,
    pub iterations: Vec<IterationRecord>,
    pub c: f64,
}

impl DoublingRun {
    /// Largest tuple count any machine received in any iteration.
    pub fn load_max(&self) -> u64 {
        load_audit(self.iterations.iter().map(|r| r.tuples.as_slice()))
    }

    /// Whether every iteration stayed below `16 c k log2 n`.
    pub fn within_load_bound(&self) -> bool {
        let n = self.walks.len();
        self.iterations
            .iter()
            .all(|r| (load_audit([r.tuples.as_slice()]) as f64) < load_bound(r.k, self.c, n))
    }
}

/// Maximum tuples received by one machine over the given per-machine logs.
pub fn load_audit<'a>(logs: impl IntoIterator<Item = &'a [u64]>) -> u64 {
    logs.into_iter().flat_map(|l| l.iter().copied()).max().unwrap_or(0)
}

/// `16 c k log2 n`.
pub fn load_bound(k: usize, c: f64, n: usize) -> f64 {
    16.0 * c * k as f64 * (n.max(2) as f64).log2()
}

/// `k` one-step walks per machine, drawn locally from each adjacency row.
pub fn init_doubling(cs: &mut ClusterState, tau: usize) -> Result<DoublingState, DoublingError> {
    if tau == 0 {
        return Err(DoublingError::ZeroTau);
    }
    let k = tau.next_power_of_two();
    for v in 0..cs.n() {
        let mut m = cs.machine(v);
        let adj = m.store.get::<Vec<(usize, u64)>>(ADJACENCY).expect("adjacency not loaded").clone();
        let total: u64 = adj.iter().map(|(_, w)| w).sum();
        let rng = m.rng();
        let walks: Vec<Vec<usize>> = (0..k)
            .map(|_| {
                let mut x = rng.gen_range(0..total);
                let next = adj.iter().find(|(_, w)| x < *w || { x -= w; false }).unwrap().0;
                vec![v, next]
            })
            .collect();
        m.store.put(WALKS, walks);
    }
    Ok(DoublingState { k, eta: 1, tau, iteration: 0 })
}

/// One doubling step: seed broadcast, shipping to rendezvous machines,
/// concatenation and return to the owners.
pub fn doubling_iteration(
    cs: &mut ClusterState,
    st: DoublingState,
    c: f64,
) -> Result<(DoublingState, IterationRecord), DoublingError> {
    assert!(st.k >= 2, "nothing left to pair");
    let n = cs.n();
    let k = st.k;
    let label = format!("doubling-iter-{}", st.iteration + 1);
    let before = cs.ledger().rounds_charged();

    let t = HashFamily::independence(n, c);
    let bits = t as u64 * HashFamily::coefficient_bits(n, k) as u64;
    let seed = cs.shared_seed_relayed(LEADER, bits, &label);
    let h = HashFamily::from_seed(n, k, t, &seed);

    // Ship: first-half walks keyed by (end, k + 1 - i), second-half walks by (owner, i).
    let mut batch = MessageBatch::new();
    for v in 0..n {
        let walks = cs.peek(v).get::<Vec<Vec<usize>>>(WALKS).unwrap();
        for (idx, w) in walks.iter().enumerate() {
            let i = idx + 1;
            let (key, first) = if i <= k / 2 { ((*w.last().unwrap(), partner_index(k, i)), true) } else { ((v, i), false) };
            let dst = h.eval(key.0, key.1);
            batch.push(v, dst, w.len() as u64 + 2, (first, key, v, i, w.clone()));
        }
    }
    let inbox = cs.deliver(batch, &label);
    let tuples: Vec<u64> = (0..n).map(|m| inbox.at(m).len() as u64).collect();

    // Rendezvous: join each first-half walk with its partner.
    let mut back = MessageBatch::new();
    for m in 0..n {
        let msgs = inbox.at(m);
        let seconds: std::collections::HashMap<(usize, usize), &Vec<usize>> =
            msgs.iter().filter(|r| !r.payload.0).map(|r| (r.payload.1, &r.payload.4)).collect();
        for r in msgs.iter().filter(|r| r.payload.0) {
            let (_, key, owner, i, ref w) = r.payload;
            let partner = seconds.get(&key).ok_or(DoublingError::MissingPartner { owner, index: i })?;
            let mut joined = w.clone();
            joined.extend_from_slice(&partner[1..]);
            back.push(m, owner, joined.len() as u64 + 1, (i, joined));
        }
    }
    let inbox = cs.deliver(back, &label);
    for (v, msgs) in inbox.into_machines().into_iter().enumerate() {
        let mut walks = vec![Vec::new(); k / 2];
        for r in msgs {
            let (i, w) = r.payload;
            walks[i - 1] = w;
        }
        cs.machine(v).store.put(WALKS, walks);
    }
    let next = DoublingState { k: k / 2, eta: st.eta * 2, tau: st.tau, iteration: st.iteration + 1 };
    let rec = IterationRecord { k, eta: st.eta, tuples, rounds: cs.ledger().rounds_charged() - before };
    Ok((next, rec))
}

/// Runs doubling until one walk of length `tau.next_power_of_two()` remains
/// per machine.
pub fn run_doubling(cs: &mut ClusterState, tau: usize, c: f64) -> Result<DoublingRun, DoublingError> {
    if !(c > 1.0) {
        return Err(DoublingError::BadConstant(c));
    }
    let mut st = init_doubling(cs, tau)?;
    let mut iterations = Vec::new();
    while st.k > 1 {
        let (next, rec) = doubling_iteration(cs, st, c)?;
        iterations.push(rec);
        st = next;
    }
    let walks = (0..cs.n())
        .map(|v| cs.peek(v).get::<Vec<Vec<usize>>>(WALKS).unwrap()[0].clone())
        .collect();
    Ok(DoublingRun { walks, iterations, c })
}

/// Runs doubling on a fresh cluster for `g`.
pub fn doubling_for_graph(g: &Graph, seed: u64, tau: usize, c: f64) -> Result<(ClusterState, DoublingRun), DoublingError> {
    let mut cs = ClusterState::for_graph(g, seed, crate::sim::CostModel::new(g.n()));
    let run = run_doubling(&mut cs, tau, c)?;
    Ok((cs, run))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::corpus::named;
    use crate::graph::Edge;
    use crate::oracles::{exact_walk_distribution, Field, RationalMatrix};
    use crate::stats::{tally, tv_to_target};

    #[test]
    fn primes_and_bits() {
        assert_eq!(prime_below(1 << 5), 31);
        assert_eq!(prime_below(1 << 8), 251);
        assert_eq!(prime_below(1 << 17), 131_071);
        assert!(is_prime((1 << 61) - 1) && !is_prime(561) && !is_prime(1));
        let seed = [0b1011_0110u64, u64::MAX];
        assert_eq!(take_bits(&seed, 1, 3), 0b011);
        assert_eq!(take_bits(&seed, 62, 4), 0b1100);
        assert_eq!(HashFamily::independence(8, 2.0), 48);
        assert_eq!(HashFamily::coefficient_bits(8, 4), 6);
    }

    #[test]
    fn pairing() {
        assert_eq!(partner_index(8, 3), 6);
        assert_eq!(partner_index(2, 1), 2);
        let pairs: Vec<usize> = (1..=4).map(|i| partner_index(8, i)).collect();
        assert_eq!(pairs, vec![8, 7, 6, 5]);
    }

    #[test]
    fn hash_collisions_look_uniform() {
        let (n, k, t) = (16, 8, HashFamily::independence(16, 2.0));
        let mut cs = ClusterState::new(n, 3, crate::sim::CostModel::new(n));
        let bits = t as u64 * HashFamily::coefficient_bits(n, k) as u64;
        let trials = 4000;
        let mut hits = 0u64;
        for _ in 0..trials {
            let h = HashFamily::from_seed(n, k, t, &cs.shared_seed(0, bits, "seed"));
            if h.eval(3, 2) == h.eval(11, 7) {
                hits += 1;
            }
        }
        let p = 1.0 / n as f64;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        assert!((hits as f64 - trials as f64 * p).abs() < 3.0 * sigma, "{hits}");
    }

    #[test]
    fn trivial_cases() {
        let edge = Graph::from_edges(2, [Edge::new(0, 1, 1)]).unwrap();
        let (cs, run) = doubling_for_graph(&edge, 1, 1, DEFAULT_C).unwrap();
        assert_eq!(run.walks, vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(cs.ledger().rounds_charged(), 0);
        assert_eq!(run.load_max(), 0);
        let (_, run) = doubling_for_graph(&edge, 1, 2, DEFAULT_C).unwrap();
        assert_eq!(run.walks, vec![vec![0, 1, 0], vec![1, 0, 1]]);
        assert!(matches!(doubling_for_graph(&edge, 1, 0, 2.0), Err(DoublingError::ZeroTau)));
        assert!(matches!(doubling_for_graph(&edge, 1, 2, 1.0), Err(DoublingError::BadConstant(_))));
    }

    #[test]
    fn walks_are_valid() {
        for name in ["petersen", "c8", "star-s3"] {
            let g = named(name).unwrap();
            for tau in [3, 16, 40] {
                let (cs, run) = doubling_for_graph(&g, tau as u64, tau, DEFAULT_C).unwrap();
                assert!(cs.ledger().audit());
                assert_eq!(run.iterations.len(), tau.next_power_of_two().trailing_zeros() as usize);
                for (v, w) in run.walks.iter().enumerate() {
                    assert_eq!((w[0], w.len()), (v, tau.next_power_of_two() + 1));
                    assert!(w.windows(2).all(|e| g.has_edge(e[0], e[1])));
                }
                assert!(run.within_load_bound());
            }
        }
    }

    #[test]
    fn endpoint_law_is_the_power_row() {
        let g = named("c4").unwrap();
        let p2 = RationalMatrix::transition(&g).pow(2);
        let target: BTreeMap<usize, f64> = (0..4).map(|v| (v, p2.get_f64(1, v))).filter(|x| x.1 > 0.0).collect();
        let ends = tally((0..20_000).map(|s| *doubling_for_graph(&g, s, 2, DEFAULT_C).unwrap().1.walks[1].last().unwrap()));
        assert!(tv_to_target(&ends, &target) < 0.02);
    }

    #[test]
    fn full_walk_law() {
        let g = named("k4-minus-edge").unwrap();
        let target: BTreeMap<Vec<usize>, f64> = exact_walk_distribution(&g, 0, 4)
            .unwrap()
            .into_iter()
            .map(|(w, p)| (w, Field::to_f64(&p)))
            .collect();
        let walks = tally((0..20_000).map(|s| doubling_for_graph(&g, s, 4, DEFAULT_C).unwrap().1.walks[0].clone()));
        let tv = tv_to_target(&walks, &target);
        assert!(tv < 0.05, "tv {tv}");
    }

    #[test]
    fn load_audit_bounds() {
        assert_eq!(load_audit(std::iter::empty::<&[u64]>()), 0);
        assert_eq!(load_bound(4, 2.0, 8), 384.0);
        let g = named("c8").unwrap();
        for s in 0..20 {
            let (_, run) = doubling_for_graph(&g, s, 8, DEFAULT_C).unwrap();
            assert!(run.load_max() < 384);
            // Every walk is shipped once per iteration.
            assert_eq!(run.iterations[0].tuples.iter().sum::<u64>(), 8 * 8);
        }
    }
}

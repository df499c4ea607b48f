//! One phase of the sampler: a random walk from a start vertex, filled in
//! top-down by midpoints and truncated at the first visit of its `rho`-th
//! distinct vertex (or at the target length).
//!
//! The leader (machine 0) holds the partial walk. Each level it hands every
//! distinct consecutive `(p, q)` pair to a pair machine, which gathers the
//! midpoint weights `P^h[p][j] P^h[j][q]` from the machines hosting each `j`
//! and draws a sequence of midpoints. The leader then locates the truncation
//! point by binary search over `check`, and places the collected multiset of
//! midpoints either by sampling a weighted perfect matching or, in direct
//! mode, by having pair machines ship midpoints with their positions.

mod config;
mod sequential;

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{sample_row, LadderColumn, LadderRow, PowerLadder, LADDER_COLUMN, LADDER_ROW};
use crate::matching::{sample_matching, MatchingError, PlacementInstance};
use crate::sim::{ClusterState, MessageBatch};

pub use config::{default_ell, default_rho, PhaseConfig, PlacementMode, ELL_CONSTANT};
pub use sequential::sequential_truncated;

/// The leader machine.
pub const LEADER: usize = 0;
/// Leader store key for the finished walk, `Vec<usize>` of local indices.
pub const WALK: &str = "walk/result";
const PAIRS: &str = "walk/pairs";

const L_INIT: &str = "walk/init";
const L_REQUEST: &str = "walk/request";
const L_GENERATE: &str = "walk/generate";
const L_CHECK: &str = "walk/check";
const L_COLLECT: &str = "walk/collect";
const L_PLACE: &str = "walk/place";
/// Label for direct placement traffic, which bypasses the compressed scheme.
pub const L_PLACE_IDEALIZED: &str = "walk/place-idealized";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhaseError {
    #[error("invalid phase configuration: {0}")]
    Config(String),
    #[error("no midpoint between {p} and {q} has positive weight")]
    ZeroMass { p: usize, q: usize },
    #[error(transparent)]
    Matching(#[from] MatchingError),
}

/// A partial walk: vertices at indices `0, spacing, 2 spacing, ...`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialWalk {
    pub vertices: Vec<usize>,
    pub spacing: u64,
    pub level: usize,
    /// Index of the final entry.
    pub target_length: u64,
    pub distinct_count: usize,
}

impl PartialWalk {
    fn new(vertices: Vec<usize>, spacing: u64, level: usize, size: usize) -> Self {
        let target_length = spacing * (vertices.len() as u64 - 1);
        let distinct_count = count_distinct(&vertices, size);
        PartialWalk { vertices, spacing, level, target_length, distinct_count }
    }

    /// `(index, vertex)` pairs.
    pub fn entries(&self) -> impl Iterator<Item = (u64, usize)> + '_ {
        self.vertices.iter().enumerate().map(|(i, &v)| (i as u64 * self.spacing, v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Placement {
    /// A single open slot: only the final midpoint.
    Forced,
    /// `r` midpoints placed by an exact weighted matching.
    Exact { r: usize },
    /// Direct mode as configured.
    Direct,
    /// Direct mode because `r` exceeded the exact cap.
    Fallback { r: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelTrace {
    pub level: usize,
    /// Spacing of the partial walk at the start of the level.
    pub delta: u64,
    /// Truncation index found by the binary search.
    pub t: u64,
    pub truncated: bool,
    pub distinct: usize,
    pub gaps: usize,
    pub pairs: usize,
    /// Invocations of `check`.
    pub checks: usize,
    /// Delivers made on behalf of `check`.
    pub check_delivers: u64,
    /// All other delivers of the level.
    pub other_delivers: u64,
    pub placement: Placement,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseOutcome {
    /// Local indices, one per step.
    pub walk: Vec<usize>,
    pub reached_rho: bool,
    pub levels: Vec<LevelTrace>,
    /// Some level used direct placement.
    pub idealized: bool,
}

/// Pair machine state for one `(p, q)` pair.
#[derive(Debug, Clone, PartialEq)]
struct PairSeq {
    p: usize,
    q: usize,
    count: usize,
    pi: Vec<usize>,
}

/// Algorithm-visible state of the leader during one level.
struct Level<'a> {
    hosts: &'a [usize],
    n: usize,
    half: u64,
    walk: &'a [usize],
    pairs: Vec<(usize, usize)>,
    gap_pair: Vec<usize>,
    gap_occ: Vec<usize>,
}

impl Level<'_> {
    fn machine_of(&self, pair: usize) -> usize {
        pair % self.n
    }

    fn size(&self) -> usize {
        self.hosts.len()
    }

    fn counts_upto(&self, gaps: usize) -> Vec<usize> {
        let mut c = vec![0; self.pairs.len()];
        for &id in &self.gap_pair[..gaps] {
            c[id] += 1;
        }
        c
    }
}

/// Samples the end of the walk and hands `W_1 = (start, end)` to the leader.
pub fn init_phase(cs: &mut ClusterState, ladder: &PowerLadder, start: usize, cfg: &PhaseConfig) -> Result<PartialWalk, PhaseError> {
    cfg.validate()?;
    let host = ladder.hosts()[start];
    let top = ladder.top_power();
    let end = {
        let mut m = cs.machine(host);
        let row = m.store.get::<LadderRow>(LADDER_ROW).expect("ladder not installed").clone();
        sample_row(row.row(top), m.rng())
    };
    let mut batch = MessageBatch::new();
    batch.push(host, LEADER, 1, end);
    let inbox = cs.deliver(batch, L_INIT);
    let end = inbox.at(LEADER)[0].payload;
    Ok(PartialWalk::new(vec![start, end], top, 1, ladder.size()))
}

/// Runs every level and returns the walk ending at the first visit of the
/// `rho`-th distinct vertex, or at the target length.
pub fn run_phase(cs: &mut ClusterState, ladder: &PowerLadder, start: usize, cfg: &PhaseConfig) -> Result<PhaseOutcome, PhaseError> {
    let mut w = init_phase(cs, ladder, start, cfg)?;
    let mut levels = Vec::new();
    let mut idealized = false;
    let total = ladder.levels() - 1;
    for level in 1..=total {
        let (next, trace) = fill_level(cs, ladder, &w, cfg, level)?;
        idealized |= matches!(trace.placement, Placement::Direct | Placement::Fallback { .. });
        levels.push(trace);
        w = next;
    }
    let mut walk = w.vertices;
    if total == 0 {
        cut_at_rho(&mut walk, cfg.rho, ladder.size());
    }
    let reached_rho = count_distinct(&walk, ladder.size()) >= cfg.rho;
    cs.machine(LEADER).store.put(WALK, walk.clone());
    Ok(PhaseOutcome { walk, reached_rho, levels, idealized })
}

fn fill_level(
    cs: &mut ClusterState,
    ladder: &PowerLadder,
    w: &PartialWalk,
    cfg: &PhaseConfig,
    level_no: usize,
) -> Result<(PartialWalk, LevelTrace), PhaseError> {
    let before = cs.ledger().with_prefix("walk/").units;
    let checks_before = cs.ledger().label(L_CHECK).units;
    let half = w.spacing / 2;
    let walk = &w.vertices;
    let gaps = walk.len() - 1;

    // Leader: distinct consecutive pairs, ranked in sorted order.
    let mut ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for g in 0..gaps {
        ids.insert((walk[g], walk[g + 1]), 0);
    }
    let pairs: Vec<(usize, usize)> = ids.keys().copied().collect();
    for (rank, id) in ids.values_mut().enumerate() {
        *id = rank;
    }
    let mut seen_pairs = vec![0usize; pairs.len()];
    let mut gap_pair = Vec::with_capacity(gaps);
    let mut gap_occ = Vec::with_capacity(gaps);
    for g in 0..gaps {
        let id = ids[&(walk[g], walk[g + 1])];
        gap_pair.push(id);
        gap_occ.push(seen_pairs[id]);
        seen_pairs[id] += 1;
    }
    let lv = Level { hosts: ladder.hosts(), n: cs.n(), half, walk, pairs, gap_pair, gap_occ };

    request_and_generate(cs, &lv, &seen_pairs)?;

    // Largest grid point g (index g * half) with check true; g = 1 always is.
    let mut checks = 0;
    let (mut lo, mut hi) = (1u64, 2 * gaps as u64);
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        checks += 1;
        if check(cs, &lv, mid, cfg.rho) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let open = lo.div_ceil(2) as usize;
    let r = open - 1;
    let direct = cfg.placement_mode == PlacementMode::Direct || r > cfg.exact_cap;
    let mids = if direct {
        direct_placement(cs, &lv, open)
    } else {
        let (counts, final_mid) = collect(cs, &lv, open);
        if r == 0 {
            vec![final_mid]
        } else {
            matching_placement(cs, &lv, open, counts, final_mid)?
        }
    };
    let placement = match (direct, cfg.placement_mode, r) {
        (true, PlacementMode::Direct, _) => Placement::Direct,
        (true, _, r) => Placement::Fallback { r },
        (false, _, 0) => Placement::Forced,
        (false, _, r) => Placement::Exact { r },
    };

    let mut next = Vec::with_capacity(2 * open + 1);
    for g in 0..open {
        next.push(walk[g]);
        next.push(mids[g]);
    }
    if lo % 2 == 0 {
        next.push(walk[open]);
    }
    let truncated = lo < 2 * gaps as u64;
    let new = PartialWalk::new(next, half, level_no + 1, ladder.size());
    let check_delivers = cs.ledger().label(L_CHECK).units - checks_before;
    let all = cs.ledger().with_prefix("walk/").units - before;
    let trace = LevelTrace {
        level: level_no,
        delta: w.spacing,
        t: lo * half,
        truncated,
        distinct: new.distinct_count,
        gaps,
        pairs: lv.pairs.len(),
        checks,
        check_delivers,
        other_delivers: all - check_delivers,
        placement,
    };
    Ok((new, trace))
}

/// Pair machines receive their counts, gather midpoint weights from every
/// host and draw their midpoint sequences.
fn request_and_generate(cs: &mut ClusterState, lv: &Level, counts: &[usize]) -> Result<(), PhaseError> {
    let k = lv.size();
    let mut batch = MessageBatch::new();
    for (id, &(p, q)) in lv.pairs.iter().enumerate() {
        batch.push(LEADER, lv.machine_of(id), 3, (id, p, q, counts[id]));
    }
    let inbox = cs.deliver(batch, L_REQUEST);
    let mut asks = MessageBatch::new();
    let mut active = Vec::new();
    for m in 0..cs.n() {
        let msgs = inbox.at(m);
        if msgs.is_empty() {
            continue;
        }
        let mut table = BTreeMap::new();
        for r in msgs {
            let (id, p, q, count) = r.payload;
            table.insert(id, PairSeq { p, q, count, pi: Vec::new() });
            for j in 0..k {
                asks.push(m, lv.hosts[j], 2, (id, j, p, q));
            }
        }
        cs.machine(m).store.put(PAIRS, table);
        active.push(m);
    }
    let inbox = cs.deliver(asks, L_GENERATE);
    let mut answers = MessageBatch::new();
    for (j, &h) in lv.hosts.iter().enumerate() {
        let msgs = inbox.at(h);
        if msgs.is_empty() {
            continue;
        }
        let m = cs.machine(h);
        let row = m.store.get::<LadderRow>(LADDER_ROW).expect("ladder not installed");
        let col = m.store.get::<LadderColumn>(LADDER_COLUMN).expect("ladder not installed");
        debug_assert_eq!((row.index(), col.column), (j, j));
        for r in msgs {
            let (id, jj, p, q) = r.payload;
            debug_assert_eq!(jj, j);
            let value = col.get(lv.half, p) * row.get(lv.half, q);
            answers.push(h, r.src, 1, (id, j, value));
        }
    }
    let inbox = cs.deliver(answers, L_GENERATE);
    for m in active {
        let mut ctx = cs.machine(m);
        let mut table = ctx.store.take::<BTreeMap<usize, PairSeq>>(PAIRS).unwrap();
        let mut weights: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in inbox.at(m) {
            let (id, j, value) = r.payload;
            weights.entry(id).or_insert_with(|| vec![0.0; k])[j] = value;
        }
        for (id, seq) in table.iter_mut() {
            let w = &weights[id];
            seq.pi = sample_many(w, seq.count, ctx.rng()).ok_or(PhaseError::ZeroMass { p: seq.p, q: seq.q })?;
        }
        ctx.store.put(PAIRS, table);
    }
    Ok(())
}

/// `a(v, .)` for the midpoints of the first `open` gaps, aggregated at the
/// machines hosting each `v` and reported to the leader.
fn aggregate(cs: &mut ClusterState, lv: &Level, open: usize, label: &str) -> Vec<u64> {
    let k = lv.size();
    let counts = lv.counts_upto(open);
    let mut batch = MessageBatch::new();
    for (id, &c) in counts.iter().enumerate() {
        if c > 0 {
            batch.push(LEADER, lv.machine_of(id), 2, (id, c));
        }
    }
    let inbox = cs.deliver(batch, label);
    let mut tallies = MessageBatch::new();
    let mut local = vec![0u64; k];
    for m in 0..cs.n() {
        let msgs = inbox.at(m);
        if msgs.is_empty() {
            continue;
        }
        let ctx = cs.machine(m);
        let table = ctx.store.get::<BTreeMap<usize, PairSeq>>(PAIRS).unwrap();
        for r in msgs {
            let (id, c) = r.payload;
            local.iter_mut().for_each(|x| *x = 0);
            for &v in &table[&id].pi[..c] {
                local[v] += 1;
            }
            for (v, &a) in local.iter().enumerate() {
                if a > 0 {
                    tallies.push(m, lv.hosts[v], 2, (v, a));
                }
            }
        }
    }
    let inbox = cs.deliver(tallies, label);
    let mut sums = MessageBatch::new();
    for (v, &h) in lv.hosts.iter().enumerate() {
        let a: u64 = inbox.at(h).iter().filter(|r| r.payload.0 == v).map(|r| r.payload.1).sum();
        if a > 0 {
            sums.push(h, LEADER, 2, (v, a));
        }
    }
    let inbox = cs.deliver(sums, label);
    let mut out = vec![0u64; k];
    for r in inbox.at(LEADER) {
        out[r.payload.0] = r.payload.1;
    }
    out
}

/// `m(j)` for the midpoint of gap `gap`.
fn query_midpoint(cs: &mut ClusterState, lv: &Level, gap: usize, label: &str) -> usize {
    let id = lv.gap_pair[gap];
    let machine = lv.machine_of(id);
    let mut batch = MessageBatch::new();
    batch.push(LEADER, machine, 2, (id, lv.gap_occ[gap]));
    let inbox = cs.deliver(batch, label);
    let (id, occ) = inbox.at(machine)[0].payload;
    let v = cs.peek(machine).get::<BTreeMap<usize, PairSeq>>(PAIRS).unwrap()[&id].pi[occ];
    let mut reply = MessageBatch::new();
    reply.push(machine, LEADER, 1, v);
    cs.deliver(reply, label).at(LEADER)[0].payload
}

/// Whether grid point `g` (index `g * half`) is at most the truncation point.
fn check(cs: &mut ClusterState, lv: &Level, g: u64, rho: usize) -> bool {
    let open = g.div_ceil(2) as usize;
    let a = aggregate(cs, lv, open, L_CHECK);
    let prefix = &lv.walk[..(g / 2) as usize + 1];
    let mut present: Vec<bool> = a.iter().map(|&x| x > 0).collect();
    for &v in prefix {
        present[v] = true;
    }
    let d = present.iter().filter(|&&x| x).count();
    if d > rho {
        return false;
    }
    if d < rho {
        return true;
    }
    let m = if g % 2 == 0 {
        lv.walk[(g / 2) as usize]
    } else {
        query_midpoint(cs, lv, open - 1, L_CHECK)
    };
    let o = prefix.iter().filter(|&&v| v == m).count() as u64 + a[m];
    o == 1
}

/// The multiset of midpoints up to the truncation point and the final one.
fn collect(cs: &mut ClusterState, lv: &Level, open: usize) -> (Vec<u64>, usize) {
    let counts = aggregate(cs, lv, open, L_COLLECT);
    let last = query_midpoint(cs, lv, open - 1, L_COLLECT);
    (counts, last)
}

fn matching_placement(
    cs: &mut ClusterState,
    lv: &Level,
    open: usize,
    mut counts: Vec<u64>,
    final_mid: usize,
) -> Result<Vec<usize>, PhaseError> {
    counts[final_mid] -= 1;
    let items: Vec<usize> = counts.iter().enumerate().flat_map(|(v, &c)| std::iter::repeat_n(v, c as usize)).collect();
    let r = open - 1;
    debug_assert_eq!(items.len(), r);

    // Leader fetches P^half restricted to the vertices involved.
    let mut involved = vec![false; lv.size()];
    for &v in lv.walk[..open].iter().chain(&items) {
        involved[v] = true;
    }
    let s: Vec<usize> = (0..lv.size()).filter(|&v| involved[v]).collect();
    let mut batch = MessageBatch::new();
    for &v in &s {
        batch.push(LEADER, lv.hosts[v], s.len() as u64, (v, s.clone()));
    }
    let inbox = cs.deliver(batch, L_PLACE);
    let mut rows = MessageBatch::new();
    for &v in &s {
        let h = lv.hosts[v];
        let row = cs.peek(h).get::<LadderRow>(LADDER_ROW).unwrap();
        let (vv, ref cols) = inbox.at(h)[0].payload;
        debug_assert_eq!(vv, v);
        let vals: Vec<f64> = cols.iter().map(|&c| row.get(lv.half, c)).collect();
        rows.push(h, LEADER, s.len() as u64, (v, vals));
    }
    let inbox = cs.deliver(rows, L_PLACE);
    let mut sub = vec![vec![0.0; lv.size()]; lv.size()];
    for rcv in inbox.at(LEADER) {
        let (v, ref vals) = rcv.payload;
        for (&c, &x) in s.iter().zip(vals) {
            sub[v][c] = x;
        }
    }

    let mut weights = Vec::with_capacity(r * r);
    for &j in &items {
        for g in 0..r {
            let (p, q) = (lv.walk[g], lv.walk[g + 1]);
            weights.push(sub[p][j] * sub[j][q]);
        }
    }
    let inst = PlacementInstance::new(r, weights);
    let assignment = sample_matching(&inst, cs.machine(LEADER).rng())?;
    let mut mids = vec![usize::MAX; open];
    for (i, &g) in assignment.iter().enumerate() {
        mids[g] = items[i];
    }
    mids[open - 1] = final_mid;
    Ok(mids)
}

/// Pair machines send their first `c` midpoints to the leader, which puts
/// the `k`-th one into the `k`-th gap with that pair.
fn direct_placement(cs: &mut ClusterState, lv: &Level, open: usize) -> Vec<usize> {
    let counts = lv.counts_upto(open);
    let mut batch = MessageBatch::new();
    for (id, &c) in counts.iter().enumerate() {
        if c > 0 {
            batch.push(LEADER, lv.machine_of(id), 2, (id, c));
        }
    }
    let inbox = cs.deliver(batch, L_PLACE_IDEALIZED);
    let mut ship = MessageBatch::new();
    for m in 0..cs.n() {
        for r in inbox.at(m) {
            let (id, c) = r.payload;
            let table = cs.peek(m).get::<BTreeMap<usize, PairSeq>>(PAIRS).unwrap();
            ship.push(m, LEADER, c as u64, (id, table[&id].pi[..c].to_vec()));
        }
    }
    let inbox = cs.deliver(ship, L_PLACE_IDEALIZED);
    let mut seqs: Vec<Vec<usize>> = vec![Vec::new(); lv.pairs.len()];
    for r in inbox.into_machines().swap_remove(LEADER) {
        let (id, pi) = r.payload;
        seqs[id] = pi;
    }
    (0..open).map(|g| seqs[lv.gap_pair[g]][lv.gap_occ[g]]).collect()
}

/// `count` independent draws proportional to `weights`.
fn sample_many<R: Rng + ?Sized>(weights: &[f64], count: usize, rng: &mut R) -> Option<Vec<usize>> {
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cum.push(acc);
    }
    if !(acc > 0.0) {
        return None;
    }
    let last = weights.iter().rposition(|&w| w > 0.0)?;
    Some(
        (0..count)
            .map(|_| {
                let x = rng.gen::<f64>() * acc;
                cum.partition_point(|&c| c <= x).min(last)
            })
            .collect(),
    )
}

fn count_distinct(walk: &[usize], size: usize) -> usize {
    let mut seen = vec![false; size];
    walk.iter().filter(|&&v| !std::mem::replace(&mut seen[v], true)).count()
}

fn cut_at_rho(walk: &mut Vec<usize>, rho: usize, size: usize) {
    let mut seen = vec![false; size];
    let mut d = 0;
    for i in 0..walk.len() {
        if !std::mem::replace(&mut seen[walk[i]], true) {
            d += 1;
            if d == rho {
                walk.truncate(i + 1);
                return;
            }
        }
    }
}

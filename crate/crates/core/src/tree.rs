//! The spanning tree sampler: phases of truncated walks, the first on the
//! graph itself and each later one on the Schur complement onto the last
//! vertex plus the unvisited vertices, with first-visit edges recovered
//! through the shortcut matrix. Also a sequential Aldous-Broder reference.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::derivative::{
    compute_schur, compute_schur_ladder, compute_shortcut, install_schur, install_shortcut, DerivativeError,
    ShortcutColumn, ShortcutMatrix, SHORTCUT_COLUMN,
};
use crate::engine::{install_ladder, sample_weighted, EngineError, PowerLadder, PrecisionConfig};
use crate::graph::{Edge, Graph};
use crate::phase::{run_phase, LevelTrace, PhaseConfig, PhaseError, PhaseOutcome, LEADER};
use crate::sim::{ClusterState, MessageBatch, ADJACENCY};

const L_FIRST_VISIT: &str = "tree/first-visit";
const L_VISITED: &str = "tree/visited";
const CACHE_LIMIT: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("phase {phase} stopped with fewer than {rho} distinct vertices")]
    PhaseFailed { phase: usize, rho: usize },
    #[error("no neighbour of {vertex} can precede its first visit")]
    ZeroMass { vertex: usize },
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error(transparent)]
    Derivative(#[from] DerivativeError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TreeConfig {
    pub phase: PhaseConfig,
    pub precision: PrecisionConfig,
}

impl TreeConfig {
    pub fn for_n(n: usize) -> Self {
        TreeConfig { phase: PhaseConfig::for_n(n), precision: PrecisionConfig::default() }
    }
}

/// Between phases: the visited set, the vertex the walk stopped at and the
/// first-visit edges so far.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerState {
    pub old: Vec<bool>,
    pub visited: usize,
    pub v_f: usize,
    pub tree_edges: Vec<Edge>,
    pub phase_count: usize,
}

impl SamplerState {
    fn new(n: usize) -> Self {
        let mut old = vec![false; n];
        old[0] = true;
        SamplerState { old, visited: 1, v_f: 0, tree_edges: Vec::with_capacity(n - 1), phase_count: 0 }
    }

    /// `{v_f}` together with every unvisited vertex, sorted.
    pub fn subset(&self) -> Vec<usize> {
        (0..self.old.len()).filter(|&v| v == self.v_f || !self.old[v]).collect()
    }

    fn done(&self) -> bool {
        self.visited == self.old.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRecord {
    pub subset_size: usize,
    pub rho: usize,
    /// Start vertex, 0-based.
    pub start: usize,
    pub walk_length: usize,
    pub new_vertices: usize,
    pub reached_rho: bool,
    pub idealized: bool,
    pub levels: Vec<LevelTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeRun {
    /// Sorted edges.
    pub edges: Vec<Edge>,
    /// The sampler failed and `edges` is the BFS tree instead.
    pub flagged: bool,
    pub failure: Option<String>,
    pub phases: Vec<PhaseRecord>,
}

impl TreeRun {
    pub fn phase_count(&self) -> usize {
        self.phases.len()
    }

    pub fn idealized(&self) -> bool {
        self.phases.iter().any(|p| p.idealized)
    }
}

struct Derived {
    shortcut: ShortcutMatrix,
    ladder: Arc<PowerLadder>,
}

/// Samples trees of one graph. Derived matrices are computed once per
/// subset and reused, but installed (and charged) on every run.
pub struct TreeSampler<'g> {
    g: &'g Graph,
    cfg: TreeConfig,
    base: Option<Arc<PowerLadder>>,
    cache: HashMap<Vec<usize>, Arc<Derived>>,
    pairs: HashMap<Vec<usize>, Arc<ShortcutMatrix>>,
}

impl<'g> TreeSampler<'g> {
    pub fn new(g: &'g Graph, cfg: TreeConfig) -> Result<Self, TreeError> {
        cfg.phase.validate()?;
        cfg.precision.validate()?;
        Ok(TreeSampler { g, cfg, base: None, cache: HashMap::new(), pairs: HashMap::new() })
    }

    pub fn config(&self) -> &TreeConfig {
        &self.cfg
    }

    /// One tree. `cs` must be a cluster for this graph.
    pub fn sample(&mut self, cs: &mut ClusterState) -> TreeRun {
        let mut phases = Vec::new();
        match self.run(cs, &mut phases) {
            Ok(mut edges) => {
                edges.sort_unstable();
                TreeRun { edges, flagged: false, failure: None, phases }
            }
            Err(e) => TreeRun { edges: self.g.bfs_tree(), flagged: true, failure: Some(e.to_string()), phases },
        }
    }

    fn run(&mut self, cs: &mut ClusterState, phases: &mut Vec<PhaseRecord>) -> Result<Vec<Edge>, TreeError> {
        let g = self.g;
        let n = g.n();
        if n == 1 {
            return Ok(Vec::new());
        }
        let rho = self.cfg.phase.rho;
        let mut st = SamplerState::new(n);

        // Phase 1 walks on g itself, so first-visit edges are read off.
        let base = match &self.base {
            Some(l) => Arc::clone(l),
            None => {
                let l = Arc::new(PowerLadder::for_graph(g, self.cfg.phase.ell_target, &self.cfg.precision)?);
                self.base = Some(Arc::clone(&l));
                l
            }
        };
        install_ladder(cs, &base, "ladder");
        let out = run_phase(cs, &base, 0, &self.cfg.phase)?;
        let mut fresh = Vec::new();
        for w in out.walk.windows(2) {
            if !st.old[w[1]] {
                st.old[w[1]] = true;
                fresh.push(w[1]);
                st.tree_edges.push(Edge::new(w[0], w[1], g.weight(w[0], w[1]).expect("walk step is an edge")));
            }
        }
        self.finish_phase(cs, &mut st, phases, &out, 0, n, rho, fresh)?;

        while !st.done() {
            let subset = st.subset();
            let rho_here = rho.min(subset.len());
            let start = subset.binary_search(&st.v_f).unwrap();
            let (out, walk) = if subset.len() == 2 {
                // The Schur walk on two vertices has no self-loops: its first
                // step is forced, so only the shortcut is needed.
                let shortcut = self.shortcut_only(&subset)?;
                install_shortcut(cs, &shortcut, "shortcut");
                let walk = vec![st.v_f, subset[1 - start]];
                let out = PhaseOutcome { walk: vec![start, 1 - start], reached_rho: true, levels: Vec::new(), idealized: false };
                (out, walk)
            } else {
                let derived = self.derived(&subset)?;
                install_shortcut(cs, &derived.shortcut, "shortcut");
                install_schur(cs, "schur");
                install_ladder(cs, &derived.ladder, "schur-ladder");
                let cfg = PhaseConfig { rho: rho_here, ..self.cfg.phase };
                let out = run_phase(cs, &derived.ladder, start, &cfg)?;
                let walk: Vec<usize> = out.walk.iter().map(|&i| subset[i]).collect();
                (out, walk)
            };
            let in_s: Vec<bool> = (0..n).map(|v| !st.old[v] || v == st.v_f).collect();
            let edges = first_visit_edges(cs, g, &walk, &in_s)?;
            let fresh: Vec<usize> = edges.iter().map(|&(_, v)| v).collect();
            for &(u, v) in &edges {
                st.old[v] = true;
                st.tree_edges.push(Edge::new(u, v, g.weight(u, v).unwrap()));
            }
            let start = st.v_f;
            let mut rec_out = out;
            rec_out.walk = walk;
            self.finish_phase(cs, &mut st, phases, &rec_out, start, subset.len(), rho_here, fresh)?;
        }
        Ok(st.tree_edges)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish_phase(
        &self,
        cs: &mut ClusterState,
        st: &mut SamplerState,
        phases: &mut Vec<PhaseRecord>,
        out: &PhaseOutcome,
        start: usize,
        subset_size: usize,
        rho: usize,
        fresh: Vec<usize>,
    ) -> Result<(), TreeError> {
        st.phase_count += 1;
        st.visited += fresh.len();
        st.v_f = *out.walk.last().unwrap();
        phases.push(PhaseRecord {
            subset_size,
            rho,
            start,
            walk_length: out.walk.len() - 1,
            new_vertices: fresh.len(),
            reached_rho: out.reached_rho,
            idealized: out.idealized,
            levels: out.levels.clone(),
        });
        if !out.reached_rho {
            return Err(TreeError::PhaseFailed { phase: st.phase_count, rho });
        }
        // Every machine learns which vertices are now visited.
        let words = fresh.len() as u64;
        cs.broadcast(LEADER, fresh, words, L_VISITED);
        Ok(())
    }

    fn shortcut_only(&mut self, subset: &[usize]) -> Result<Arc<ShortcutMatrix>, TreeError> {
        if let Some(q) = self.pairs.get(subset) {
            return Ok(Arc::clone(q));
        }
        let q = Arc::new(compute_shortcut(self.g, subset, &self.cfg.precision)?);
        if self.pairs.len() >= CACHE_LIMIT {
            self.pairs.clear();
        }
        self.pairs.insert(subset.to_vec(), Arc::clone(&q));
        Ok(q)
    }

    fn derived(&mut self, subset: &[usize]) -> Result<Arc<Derived>, TreeError> {
        if let Some(d) = self.cache.get(subset) {
            return Ok(Arc::clone(d));
        }
        let shortcut = compute_shortcut(self.g, subset, &self.cfg.precision)?;
        let schur = compute_schur(self.g, &shortcut, &self.cfg.precision)?;
        let ladder = Arc::new(compute_schur_ladder(&schur, self.cfg.phase.ell_target, &self.cfg.precision)?);
        let d = Arc::new(Derived { shortcut, ladder });
        if self.cache.len() >= CACHE_LIMIT {
            self.cache.clear();
        }
        self.cache.insert(subset.to_vec(), Arc::clone(&d));
        Ok(d)
    }
}

/// Convenience wrapper building a fresh sampler for one tree.
pub fn sample_tree(cs: &mut ClusterState, g: &Graph, cfg: &TreeConfig) -> Result<TreeRun, TreeError> {
    Ok(TreeSampler::new(g, *cfg)?.sample(cs))
}

/// First-visit edges for the vertices a walk on the Schur complement visits
/// for the first time, as `(u, v)` with `u` the predecessor of `v`.
///
/// The shortcut matrix for the same subset must be installed; `in_s` marks
/// the subset. For the step `w_{i-1} -> v` at which `v` first appears, `u` is
/// drawn from the neighbours of `v` with weight `Q[w_{i-1}][u] w(u, v) / w_S(u)`.
pub fn first_visit_edges(
    cs: &mut ClusterState,
    g: &Graph,
    walk: &[usize],
    in_s: &[bool],
) -> Result<Vec<(usize, usize)>, TreeError> {
    let n = g.n();
    let mut seen = vec![false; n];
    seen[walk[0]] = true;
    let mut batch = MessageBatch::new();
    for i in 1..walk.len() {
        if !std::mem::replace(&mut seen[walk[i]], true) {
            batch.push(LEADER, walk[i], 1, walk[i - 1]);
        }
    }
    let inbox = cs.deliver(batch, L_FIRST_VISIT);
    let mut order = Vec::new();
    let mut asks = MessageBatch::new();
    for v in 0..n {
        if let Some(r) = inbox.at(v).first() {
            order.push(v);
            let adj = cs.peek(v).get::<Vec<(usize, u64)>>(ADJACENCY).expect("adjacency not loaded");
            for &(u, _) in adj {
                asks.push(v, u, 1, r.payload);
            }
        }
    }
    let inbox = cs.deliver(asks, L_FIRST_VISIT);
    let mut replies = MessageBatch::new();
    for u in 0..n {
        let msgs = inbox.at(u);
        if msgs.is_empty() {
            continue;
        }
        let store = cs.peek(u);
        let col = store.get::<ShortcutColumn>(SHORTCUT_COLUMN).expect("shortcut not installed");
        let adj = store.get::<Vec<(usize, u64)>>(ADJACENCY).unwrap();
        let w_s: u64 = adj.iter().filter(|(x, _)| in_s[*x]).map(|(_, w)| w).sum();
        for r in msgs {
            replies.push(u, r.src, 1, col.values[r.payload] / w_s as f64);
        }
    }
    let inbox = cs.deliver(replies, L_FIRST_VISIT);
    let mut answers = MessageBatch::new();
    for &v in &order {
        let mut ctx = cs.machine(v);
        let adj = ctx.store.get::<Vec<(usize, u64)>>(ADJACENCY).unwrap().clone();
        let msgs = inbox.at(v);
        // Replies arrive sorted by sender, as is the adjacency list.
        let weights: Vec<f64> = msgs
            .iter()
            .map(|r| r.payload * adj.iter().find(|(u, _)| *u == r.src).unwrap().1 as f64)
            .collect();
        let pick = sample_weighted(&weights, ctx.rng()).ok_or(TreeError::ZeroMass { vertex: v })?;
        answers.push(v, LEADER, 1, (msgs[pick].src, v));
    }
    let inbox = cs.deliver(answers, L_FIRST_VISIT);
    let by_vertex: HashMap<usize, usize> = inbox.at(LEADER).iter().map(|r| (r.payload.1, r.payload.0)).collect();
    // Report in order of first visit.
    let mut seen = vec![false; n];
    seen[walk[0]] = true;
    Ok(walk[1..]
        .iter()
        .filter(|&&v| !std::mem::replace(&mut seen[v], true))
        .map(|&v| (by_vertex[&v], v))
        .collect())
}

/// Sequential Aldous-Broder from vertex 0: the first-entry edges of a
/// covering walk. Sorted edges.
pub fn aldous_broder_reference<R: Rng + ?Sized>(g: &Graph, rng: &mut R) -> Vec<Edge> {
    let n = g.n();
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut left = n - 1;
    let mut cur = 0;
    let mut edges = Vec::with_capacity(n - 1);
    while left > 0 {
        let nb = g.neighbors(cur);
        let total = g.weighted_degree(cur);
        let mut x = rng.gen_range(0..total);
        let &(next, w) = nb
            .iter()
            .find(|(_, w)| {
                if x < *w {
                    true
                } else {
                    x -= w;
                    false
                }
            })
            .unwrap();
        if !seen[next] {
            seen[next] = true;
            left -= 1;
            edges.push(Edge::new(cur, next, w));
        }
        cur = next;
    }
    edges.sort_unstable();
    edges
}

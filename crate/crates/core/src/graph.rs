//! Undirected weighted graphs, their Laplacians and random-walk transition
//! matrices.
//!
//! Vertices are indexed `0..n` internally; the edge-list format and every
//! human-facing output use 1-based ids, so vertex `i` is hosted by the machine
//! printed as `i + 1`.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("self loop at vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {{{0}, {1}}}")]
    DuplicateEdge(usize, usize),
    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("graph has no edges")]
    Empty,
}

/// An undirected edge with `u < v` (0-based) and a positive integer weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: u64,
}

impl Edge {
    pub fn new(a: usize, b: usize, w: u64) -> Self {
        Edge { u: a.min(b), v: a.max(b), w }
    }

    pub fn key(&self) -> (usize, usize) {
        (self.u, self.v)
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.u + 1, self.v + 1)
    }
}

/// A simple, connected, undirected graph with positive integer weights.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    adj: Vec<Vec<(usize, u64)>>,
    weight_bound: u64,
}

impl Graph {
    /// Builds and validates a graph on `n` vertices.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self, GraphError> {
        let mut seen = BTreeMap::new();
        for e in edges {
            if e.u == e.v {
                return Err(GraphError::SelfLoop(e.u + 1));
            }
            if seen.insert(e.key(), e).is_some() {
                return Err(GraphError::DuplicateEdge(e.u + 1, e.v + 1));
            }
        }
        if seen.is_empty() {
            return Err(GraphError::Empty);
        }
        let edges: Vec<Edge> = seen.into_values().collect();
        let n = n.max(edges.iter().map(|e| e.v + 1).max().unwrap_or(0));
        let mut adj = vec![Vec::new(); n];
        for e in &edges {
            adj[e.u].push((e.v, e.w));
            adj[e.v].push((e.u, e.w));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        let weight_bound = edges.iter().map(|e| e.w).max().unwrap_or(1);
        let g = Graph { n, edges, adj, weight_bound };
        let components = g.component_count();
        if components != 1 {
            return Err(GraphError::Disconnected { components });
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn weight_bound(&self) -> u64 {
        self.weight_bound
    }

    pub fn is_unweighted(&self) -> bool {
        self.weight_bound == 1
    }

    /// Sorted `(neighbor, weight)` pairs of `u`.
    pub fn neighbors(&self, u: usize) -> &[(usize, u64)] {
        &self.adj[u]
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<u64> {
        self.adj[u]
            .binary_search_by_key(&v, |&(x, _)| x)
            .ok()
            .map(|i| self.adj[u][i].1)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.weight(u, v).is_some()
    }

    pub fn weighted_degree(&self, u: usize) -> u64 {
        self.adj[u].iter().map(|&(_, w)| w).sum()
    }

    /// Total weight from `u` into the vertices accepted by `in_set`.
    pub fn weight_into(&self, u: usize, in_set: impl Fn(usize) -> bool) -> u64 {
        self.adj[u].iter().filter(|&&(v, _)| in_set(v)).map(|&(_, w)| w).sum()
    }

    fn component_count(&self) -> usize {
        let mut seen = vec![false; self.n];
        let mut components = 0;
        for s in 0..self.n {
            if seen[s] {
                continue;
            }
            components += 1;
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &self.adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        components
    }

    /// Breadth-first spanning tree rooted at vertex 0, as sorted edges.
    pub fn bfs_tree(&self) -> Vec<Edge> {
        let mut seen = vec![false; self.n];
        let mut tree = Vec::with_capacity(self.n.saturating_sub(1));
        seen[0] = true;
        let mut queue = VecDeque::from([0]);
        while let Some(u) = queue.pop_front() {
            for &(v, w) in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    tree.push(Edge::new(u, v, w));
                    queue.push_back(v);
                }
            }
        }
        tree.sort_unstable();
        tree
    }

    /// Returns `true` when `edges` is a spanning tree of this graph.
    pub fn is_spanning_tree(&self, edges: &[Edge]) -> bool {
        if edges.len() + 1 != self.n {
            return false;
        }
        let mut dsu = Dsu::new(self.n);
        edges
            .iter()
            .all(|e| self.weight(e.u, e.v) == Some(e.w) && dsu.union(e.u, e.v))
    }

    /// Renders the graph in the edge-list format accepted by [`load_graph`].
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            if e.w == 1 {
                out.push_str(&format!("{} {}\n", e.u + 1, e.v + 1));
            } else {
                out.push_str(&format!("{} {} {}\n", e.u + 1, e.v + 1, e.w));
            }
        }
        out
    }
}

/// Union-find over `0..n`.
#[derive(Debug, Clone)]
pub struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    pub fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect() }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; returns `false` if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Parses an edge list of `u v [w]` lines with 1-based vertex ids.
///
/// Blank lines and `#` comments are ignored.
pub fn load_graph(text: &str) -> Result<Graph, GraphError> {
    let mut edges = Vec::new();
    let mut n = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |reason: &str| GraphError::Parse { line: idx + 1, reason: reason.to_string() };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err("expected `u v [w]`"));
        }
        let mut ids = [0usize; 2];
        for (slot, f) in ids.iter_mut().zip(&fields[..2]) {
            let id: usize = f.parse().map_err(|_| parse_err("vertex id is not a positive integer"))?;
            if id == 0 {
                return Err(parse_err("vertex ids are 1-based"));
            }
            *slot = id - 1;
        }
        let w = match fields.get(2) {
            Some(f) => f.parse::<u64>().map_err(|_| parse_err("weight is not a positive integer"))?,
            None => 1,
        };
        if w == 0 {
            return Err(parse_err("weight must be at least 1"));
        }
        n = n.max(ids[0] + 1).max(ids[1] + 1);
        edges.push(Edge::new(ids[0], ids[1], w));
    }
    Graph::from_edges(n, edges)
}

/// Row-stochastic matrix with a uniform subtractive error bound on its entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    n: usize,
    entries: Vec<f64>,
    /// Every entry lies in `[exact - error_budget, exact]` unless the producer
    /// documents a two-sided bound.
    pub error_budget: f64,
    /// Which power of the base chain this matrix represents.
    pub power: u64,
}

impl TransitionMatrix {
    pub fn from_rows(n: usize, entries: Vec<f64>, error_budget: f64, power: u64) -> Self {
        assert_eq!(entries.len(), n * n, "matrix must be {n}x{n}");
        TransitionMatrix { n, entries, error_budget, power }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.entries[u * self.n + v]
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.entries[u * self.n..(u + 1) * self.n]
    }

    pub fn column(&self, v: usize) -> Vec<f64> {
        (0..self.n).map(|u| self.get(u, v)).collect()
    }

    pub fn row_sum(&self, u: usize) -> f64 {
        self.row(u).iter().sum()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// Random-walk transition matrix: `P[u][v] = w({u,v}) / deg_w(u)`.
pub fn transition_matrix(g: &Graph) -> TransitionMatrix {
    let n = g.n();
    let mut entries = vec![0.0; n * n];
    for u in 0..n {
        let deg = g.weighted_degree(u) as f64;
        for &(v, w) in g.neighbors(u) {
            entries[u * n + v] = w as f64 / deg;
        }
    }
    TransitionMatrix::from_rows(n, entries, 0.0, 1)
}

/// Integer Laplacian `L = D - A` of a weighted graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Laplacian {
    n: usize,
    entries: Vec<i64>,
}

impl Laplacian {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.n + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i64]> {
        self.entries.chunks(self.n)
    }
}

pub fn laplacian(g: &Graph) -> Laplacian {
    let n = g.n();
    let mut entries = vec![0i64; n * n];
    for e in g.edges() {
        let w = e.w as i64;
        entries[e.u * n + e.v] -= w;
        entries[e.v * n + e.u] -= w;
        entries[e.u * n + e.u] += w;
        entries[e.v * n + e.v] += w;
    }
    Laplacian { n, entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_path() {
        let g = load_graph("1 2\n2 3").unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edges(), &[Edge::new(0, 1, 1), Edge::new(1, 2, 1)]);
    }

    #[test]
    fn rejects_duplicates_loops_and_components() {
        assert_eq!(load_graph("1 2\n1 2"), Err(GraphError::DuplicateEdge(1, 2)));
        assert_eq!(load_graph("1 2\n2 1"), Err(GraphError::DuplicateEdge(1, 2)));
        assert_eq!(load_graph("1 1"), Err(GraphError::SelfLoop(1)));
        assert_eq!(load_graph("1 2\n3 4"), Err(GraphError::Disconnected { components: 2 }));
        assert!(matches!(load_graph("1 x"), Err(GraphError::Parse { line: 1, .. })));
        assert!(matches!(load_graph("1 2\n0 2"), Err(GraphError::Parse { line: 2, .. })));
        assert!(matches!(load_graph("1 2 0"), Err(GraphError::Parse { .. })));
        assert_eq!(load_graph("# nothing\n"), Err(GraphError::Empty));
    }

    #[test]
    fn transition_examples() {
        let edge = load_graph("1 2").unwrap();
        assert_eq!(transition_matrix(&edge).entries(), &[0.0, 1.0, 1.0, 0.0]);

        let k3 = load_graph("1 2\n2 3\n1 3").unwrap();
        let p = transition_matrix(&k3);
        for u in 0..3 {
            for v in 0..3 {
                assert_eq!(p.get(u, v), if u == v { 0.0 } else { 0.5 });
            }
        }

        // Star with center C = vertex 3 (index 2).
        let star = load_graph("1 3\n2 3\n3 4").unwrap();
        let p = transition_matrix(&star);
        assert_eq!(p.row(2), &[1.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0]);
        for leaf in [0, 1, 3] {
            assert_eq!(p.get(leaf, 2), 1.0);
            assert_eq!(p.row_sum(leaf), 1.0);
        }
    }

    #[test]
    fn laplacian_examples() {
        let edge = load_graph("1 2").unwrap();
        assert_eq!(laplacian(&edge).entries, vec![1, -1, -1, 1]);
        let k3 = load_graph("1 2\n2 3\n1 3").unwrap();
        assert_eq!(laplacian(&k3).entries, vec![2, -1, -1, -1, 2, -1, -1, -1, 2]);
        let p3 = load_graph("1 2\n2 3").unwrap();
        assert_eq!(laplacian(&p3).entries, vec![1, -1, 0, -1, 2, -1, 0, -1, 1]);
    }

    #[test]
    fn weighted_rows() {
        let g = load_graph("1 2 3\n2 3 1").unwrap();
        let p = transition_matrix(&g);
        assert_eq!(p.get(1, 0), 0.75);
        assert_eq!(p.get(1, 2), 0.25);
        assert_eq!(g.weight_bound(), 3);
    }

    #[test]
    fn spanning_tree_check() {
        let k3 = load_graph("1 2\n2 3\n1 3").unwrap();
        assert!(k3.is_spanning_tree(&k3.bfs_tree()));
        assert!(!k3.is_spanning_tree(&[Edge::new(0, 1, 1)]));
        assert!(!k3.is_spanning_tree(&[Edge::new(0, 1, 1), Edge::new(0, 1, 1)]));
    }
}

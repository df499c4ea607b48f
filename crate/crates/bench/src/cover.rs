use clique_ust::doubling::{run_doubling, DoublingError};
use clique_ust::graph::{Edge, Graph};
use clique_ust::phase::LEADER;
use clique_ust::sim::{ClusterState, MessageBatch};
use serde::Serialize;

pub const L_EXTRACT: &str = "tree-via-doubling/extract";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverTree {
    /// Sorted edges.
    pub edges: Vec<Edge>,
    /// Steps of the walk that was scanned.
    pub walk_length: usize,
    /// Doubling runs beyond the first.
    pub extensions: usize,
}

/// Aldous-Broder on a doubled walk from vertex 0.
///
/// Runs doubling to length `cover_budget`, ships the walk of the machine
/// where the walk currently stands to the leader and scans it for first
/// visits. If some vertex is still unvisited the walk is continued with
/// another doubling run from its last vertex, so the scanned walk is always
/// an unconditioned random walk.
pub fn tree_via_doubling(cs: &mut ClusterState, g: &Graph, cover_budget: usize, c: f64) -> Result<CoverTree, DoublingError> {
    let n = g.n();
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut left = n - 1;
    let mut edges = Vec::with_capacity(n - 1);
    let (mut cur, mut walk_length, mut runs) = (0, 0, 0usize);
    while left > 0 {
        let run = run_doubling(cs, cover_budget, c)?;
        runs += 1;
        let mut batch = MessageBatch::new();
        let piece = run.walks[cur].clone();
        batch.push(cur, LEADER, piece.len() as u64, piece);
        let piece = cs.deliver(batch, L_EXTRACT).into_machines().swap_remove(LEADER).remove(0).payload;
        for w in piece.windows(2) {
            if !seen[w[1]] {
                seen[w[1]] = true;
                left -= 1;
                edges.push(Edge::new(w[0], w[1], g.weight(w[0], w[1]).expect("walk step is an edge")));
                if left == 0 {
                    break;
                }
            }
        }
        walk_length += piece.len() - 1;
        cur = *piece.last().unwrap();
    }
    edges.sort_unstable();
    Ok(CoverTree { edges, walk_length, extensions: runs.saturating_sub(1) })
}

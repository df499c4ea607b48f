use std::collections::BTreeSet;

use clique_ust::corpus;
use clique_ust::doubling::{doubling_for_graph, DEFAULT_C};
use clique_ust::oracles::enumerate_spanning_trees;
use clique_ust::sim::{ClusterState, CostModel};
use clique_ust::tree::{sample_tree, TreeConfig};

#[test]
fn every_corpus_graph_yields_a_spanning_tree() {
    for (name, g) in corpus::all() {
        let cfg = TreeConfig::for_n(g.n());
        let mut cs = ClusterState::for_graph(&g, 11, CostModel::new(g.n()));
        let run = sample_tree(&mut cs, &g, &cfg).unwrap();
        assert!(g.is_spanning_tree(&run.edges), "{name}");
        assert!(!run.flagged, "{name}: {:?}", run.failure);
    }
}

#[test]
fn k4_hits_every_tree() {
    let g = corpus::named("k4").unwrap();
    let want = enumerate_spanning_trees(&g, 100).unwrap().tree_count as usize;
    let cfg = TreeConfig::for_n(4);
    let mut seen = BTreeSet::new();
    for seed in 0..400 {
        let mut cs = ClusterState::for_graph(&g, seed, CostModel::new(4));
        let run = sample_tree(&mut cs, &g, &cfg).unwrap();
        seen.insert(run.edges.iter().map(|e| e.key()).collect::<Vec<_>>());
    }
    assert_eq!(seen.len(), want);
}

#[test]
fn same_seed_same_tree_and_ledger() {
    let g = corpus::named("petersen").unwrap();
    let cfg = TreeConfig::for_n(g.n());
    let go = || {
        let mut cs = ClusterState::for_graph(&g, 99, CostModel::new(g.n()));
        let run = sample_tree(&mut cs, &g, &cfg).unwrap();
        (run.edges, cs.ledger().rounds_charged())
    };
    assert_eq!(go(), go());
}

#[test]
fn doubling_walks_follow_edges() {
    let g = corpus::cycle(16);
    let (_, run) = doubling_for_graph(&g, 5, 64, DEFAULT_C).unwrap();
    for (v, w) in run.walks.iter().enumerate() {
        assert_eq!(w[0], v);
        assert!(w.len() >= 65);
        assert!(w.windows(2).all(|p| g.has_edge(p[0], p[1])));
    }
    assert!(run.within_load_bound());
}

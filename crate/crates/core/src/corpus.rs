//! Bundled small graphs used by tests, the acceptance suite and the CLI.

use crate::graph::{load_graph, Edge, Graph};

/// `(name, edge list)` for every bundled graph.
pub const CORPUS: &[(&str, &str)] = &[
    ("k3", include_str!("../corpus/k3.txt")),
    ("k4", include_str!("../corpus/k4.txt")),
    ("c4", include_str!("../corpus/c4.txt")),
    ("c5", include_str!("../corpus/c5.txt")),
    ("p3", include_str!("../corpus/p3.txt")),
    ("p4", include_str!("../corpus/p4.txt")),
    ("star-s3", include_str!("../corpus/star-s3.txt")),
    ("k4-minus-edge", include_str!("../corpus/k4-minus-edge.txt")),
    ("c8", include_str!("../corpus/c8.txt")),
    ("petersen", include_str!("../corpus/petersen.txt")),
];

/// Looks up a bundled graph by name.
pub fn named(name: &str) -> Option<Graph> {
    CORPUS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| load_graph(text).expect("bundled graph is valid"))
}

pub fn all() -> impl Iterator<Item = (&'static str, Graph)> {
    CORPUS
        .iter()
        .map(|(n, text)| (*n, load_graph(text).expect("bundled graph is valid")))
}

/// The cycle `C_n`, `n >= 3`.
pub fn cycle(n: usize) -> Graph {
    Graph::from_edges(n, (0..n).map(|i| Edge::new(i, (i + 1) % n, 1))).expect("n >= 3")
}

/// The complete graph `K_n`, `n >= 2`.
pub fn complete(n: usize) -> Graph {
    Graph::from_edges(n, (0..n).flat_map(|a| (a + 1..n).map(move |b| Edge::new(a, b, 1)))).expect("n >= 2")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_loads() {
        let sizes: Vec<(usize, usize)> = all().map(|(_, g)| (g.n(), g.m())).collect();
        assert_eq!(
            sizes,
            vec![(3, 3), (4, 6), (4, 4), (5, 5), (3, 2), (4, 3), (4, 3), (4, 5), (8, 8), (10, 15)]
        );
        let petersen = named("petersen").unwrap();
        assert!((0..10).all(|v| petersen.neighbors(v).len() == 3));
        assert!(named("nope").is_none());
        assert_eq!(cycle(8), named("c8").unwrap());
        assert_eq!(complete(4), named("k4").unwrap());
    }
}

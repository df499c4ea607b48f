//! Uniform spanning tree sampling on a simulated CongestedClique.

pub mod corpus;
pub mod derivative;
pub mod doubling;
pub mod engine;
pub mod graph;
pub mod matching;
pub mod oracles;
pub mod phase;
pub mod sim;
pub mod stats;
pub mod tree;

//! Topological preprocessing for traffic networks: graph construction,
//! fundamental cycle bases, clique adjacency matrices, and the
//! temporal-product lifting used to verify that projected product-graph
//! cycle bases span the base cycle space.
//!
//! All operations are pure functions of immutable inputs and safe to call
//! from concurrent contexts.

pub mod cycles;
pub mod error;
pub mod gf2;
pub mod graph;
pub mod io;
pub mod product;
pub mod random;

pub use cycles::{
    basis_gf2_rank, clique_adjacency, cycle_basis_paton, cycle_stats, is_cycle_basis, CycleBasis,
};
pub use error::TopologyError;
pub use graph::{dense_adjacency, AdjacencyKind, AdjacencyMatrix, AdjacencyMode, Edge, Graph};
pub use product::{project_cycle_basis, temporal_product, ProjectedCycle, TemporalProductGraph};

//! Temporal-product lifting: layered copies of a base graph joined by
//! per-node temporal edges, plus the GF(2) projection back to the base.

use std::collections::BTreeSet;

use crate::cycles::CycleBasis;
use crate::error::TopologyError;
use crate::graph::Graph;

/// Discretization of the base graph crossed with a time interval of `k`
/// uniform steps. Node (v, t) maps to index `t * N + v`.
#[derive(Debug, Clone)]
pub struct TemporalProductGraph {
    graph: Graph,
    base_nodes: usize,
    num_steps: usize,
}

impl TemporalProductGraph {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn base_nodes(&self) -> usize {
        self.base_nodes
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn node_index(&self, v: usize, t: usize) -> usize {
        t * self.base_nodes + v
    }

    /// Inverse of `node_index`: (base node, time step).
    pub fn decompose(&self, index: usize) -> (usize, usize) {
        (index % self.base_nodes, index / self.base_nodes)
    }
}

/// Builds the temporal product of `g` with `k >= 2` time steps. Spatial
/// copies inherit base edge weights; temporal edges get weight 1.
pub fn temporal_product(g: &Graph, k: usize) -> Result<TemporalProductGraph, TopologyError> {
    if k < 2 {
        return Err(TopologyError::InvalidSteps(k));
    }
    let n = g.num_nodes();
    let mut edges = Vec::with_capacity(k * g.num_edges() + (k - 1) * n);
    for t in 0..k {
        let base = t * n;
        for e in g.edges() {
            edges.push((base + e.u, base + e.v, e.weight));
        }
    }
    for t in 0..k - 1 {
        for v in 0..n {
            edges.push((t * n + v, (t + 1) * n + v, 1.0));
        }
    }
    let graph = Graph::build(n * k, &edges).expect("product edges are valid by construction");
    Ok(TemporalProductGraph {
        graph,
        base_nodes: n,
        num_steps: k,
    })
}

/// A product-graph cycle projected to base-graph edges over GF(2). Edges
/// traversed an even number of times cancel; purely temporal edges vanish.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectedCycle {
    pub edges: BTreeSet<(usize, usize)>,
    /// True when the projection cancelled to the empty set.
    pub vanished: bool,
}

/// Projects each basis cycle of the product graph onto the base graph by
/// collapsing the time coordinate.
pub fn project_cycle_basis(
    tpg: &TemporalProductGraph,
    basis: &CycleBasis,
) -> Result<Vec<ProjectedCycle>, TopologyError> {
    if basis.parent_graph_nodes() != tpg.graph().num_nodes() {
        return Err(TopologyError::BasisGraphMismatch(format!(
            "basis is over {} nodes, product graph has {}",
            basis.parent_graph_nodes(),
            tpg.graph().num_nodes()
        )));
    }
    let mut projected = Vec::with_capacity(basis.len());
    for cycle in basis.cycles() {
        let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
        for i in 0..cycle.len() {
            let a = cycle[i];
            let b = cycle[(i + 1) % cycle.len()];
            if !tpg.graph().has_edge(a, b) {
                let (va, ta) = tpg.decompose(a);
                let (vb, tb) = tpg.decompose(b);
                return Err(TopologyError::BasisGraphMismatch(format!(
                    "cycle step ({va},{ta})-({vb},{tb}) is not a product edge"
                )));
            }
            let (va, ta) = tpg.decompose(a);
            let (vb, tb) = tpg.decompose(b);
            if ta == tb {
                let key = if va < vb { (va, vb) } else { (vb, va) };
                // GF(2) toggle: even traversals cancel
                if !edges.remove(&key) {
                    edges.insert(key);
                }
            }
            // temporal edges (va == vb) project to a point and vanish
        }
        let vanished = edges.is_empty();
        projected.push(ProjectedCycle { edges, vanished });
    }
    Ok(projected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycles::{cycle_basis_paton, is_cycle_basis};

    fn triangle() -> Graph {
        Graph::build(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap()
    }

    #[test]
    fn triangle_product_counts() {
        let tpg = temporal_product(&triangle(), 2).unwrap();
        assert_eq!(tpg.graph().num_nodes(), 6);
        // k|E| + (k-1)N = 2*3 + 1*3
        assert_eq!(tpg.graph().num_edges(), 9);
        assert_eq!(tpg.graph().cycle_space_dim(), 4);
    }

    #[test]
    fn single_node_product_is_a_path() {
        let g = Graph::build(1, &[]).unwrap();
        let tpg = temporal_product(&g, 5).unwrap();
        assert_eq!(tpg.graph().num_nodes(), 5);
        assert_eq!(tpg.graph().num_edges(), 4);
        assert!(cycle_basis_paton(tpg.graph()).is_empty());
    }

    #[test]
    fn steps_below_two_rejected() {
        assert!(matches!(
            temporal_product(&triangle(), 1),
            Err(TopologyError::InvalidSteps(1))
        ));
    }

    #[test]
    fn temporal_edges_have_unit_weight() {
        let g = Graph::build(2, &[(0, 1, 7.5)]).unwrap();
        let tpg = temporal_product(&g, 3).unwrap();
        assert_eq!(tpg.graph().edge_weight(0, 1), Some(7.5));
        assert_eq!(
            tpg.graph()
                .edge_weight(tpg.node_index(0, 0), tpg.node_index(0, 1)),
            Some(1.0)
        );
    }

    #[test]
    fn fixed_time_cycle_projects_to_itself() {
        let g = triangle();
        let tpg = temporal_product(&g, 2).unwrap();
        let basis = CycleBasis::new(vec![vec![0, 1, 2]], tpg.graph().num_nodes());
        let projected = project_cycle_basis(&tpg, &basis).unwrap();
        assert_eq!(projected.len(), 1);
        assert!(!projected[0].vanished);
        let expect: BTreeSet<_> = [(0, 1), (1, 2), (0, 2)].into_iter().collect();
        assert_eq!(projected[0].edges, expect);
    }

    #[test]
    fn ladder_cycle_cancels() {
        let g = Graph::build(2, &[(0, 1, 1.0)]).unwrap();
        let tpg = temporal_product(&g, 2).unwrap();
        // (v,0) -> (w,0) -> (w,1) -> (v,1) -> back to (v,0)
        let ladder = vec![
            tpg.node_index(0, 0),
            tpg.node_index(1, 0),
            tpg.node_index(1, 1),
            tpg.node_index(0, 1),
        ];
        let basis = CycleBasis::new(vec![ladder], tpg.graph().num_nodes());
        let projected = project_cycle_basis(&tpg, &basis).unwrap();
        assert!(projected[0].vanished);
        assert!(projected[0].edges.is_empty());
    }

    #[test]
    fn projected_paton_basis_spans_base_cycle_space() {
        let g = triangle();
        let tpg = temporal_product(&g, 2).unwrap();
        let basis = cycle_basis_paton(tpg.graph());
        assert_eq!(basis.len(), 4);
        let projected = project_cycle_basis(&tpg, &basis).unwrap();
        let sets: Vec<_> = projected.into_iter().map(|p| p.edges).collect();
        assert!(is_cycle_basis(&g, &sets).unwrap());
    }

    #[test]
    fn foreign_basis_rejected() {
        let tpg = temporal_product(&triangle(), 2).unwrap();
        let basis = CycleBasis::new(vec![vec![0, 1, 2]], 3);
        assert!(matches!(
            project_cycle_basis(&tpg, &basis),
            Err(TopologyError::BasisGraphMismatch(_))
        ));
    }
}

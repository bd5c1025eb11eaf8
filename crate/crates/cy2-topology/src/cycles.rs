//! Fundamental cycle bases, clique adjacency construction, and the GF(2)
//! cycle-basis verification oracle.

use std::collections::BTreeSet;

use crate::error::TopologyError;
use crate::gf2::BitMatrix;
use crate::graph::{AdjacencyKind, AdjacencyMatrix, Graph};

/// Ordered list of simple cycles, each a closed walk of distinct node
/// indices (last node connects back to the first through a graph edge).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleBasis {
    cycles: Vec<Vec<usize>>,
    parent_graph_nodes: usize,
}

impl CycleBasis {
    pub fn new(cycles: Vec<Vec<usize>>, parent_graph_nodes: usize) -> Self {
        Self {
            cycles,
            parent_graph_nodes,
        }
    }

    pub fn cycles(&self) -> &[Vec<usize>] {
        &self.cycles
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    pub fn parent_graph_nodes(&self) -> usize {
        self.parent_graph_nodes
    }

    /// Edge set of cycle `i` as normalized `(u, v)` pairs with `u < v`.
    pub fn cycle_edges(&self, i: usize) -> Vec<(usize, usize)> {
        closed_walk_edges(&self.cycles[i])
    }
}

fn closed_walk_edges(cycle: &[usize]) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(cycle.len());
    for i in 0..cycle.len() {
        let a = cycle[i];
        let b = cycle[(i + 1) % cycle.len()];
        edges.push(if a < b { (a, b) } else { (b, a) });
    }
    edges
}

/// Extracts a fundamental cycle basis with Paton's spanning-tree method.
///
/// Per connected component a BFS tree is grown from the lowest-index node,
/// visiting neighbors in ascending order; every non-tree edge contributes the
/// cycle closed by the tree path between its endpoints. The construction is
/// fully deterministic for a given edge insertion order.
pub fn cycle_basis_paton(g: &Graph) -> CycleBasis {
    let n = g.num_nodes();
    let mut parent = vec![usize::MAX; n];
    let mut depth = vec![0usize; n];
    let mut visited = vec![false; n];
    let mut tree_edge = vec![false; g.num_edges()];

    let mut queue = std::collections::VecDeque::new();
    for root in 0..n {
        if visited[root] {
            continue;
        }
        visited[root] = true;
        queue.push_back(root);
        while let Some(x) = queue.pop_front() {
            for &y in g.neighbors(x) {
                if !visited[y] {
                    visited[y] = true;
                    parent[y] = x;
                    depth[y] = depth[x] + 1;
                    tree_edge[g.edge_position(x, y).expect("adjacency edge")] = true;
                    queue.push_back(y);
                }
            }
        }
    }

    let mut cycles = Vec::new();
    for (pos, e) in g.edges().iter().enumerate() {
        if tree_edge[pos] {
            continue;
        }
        cycles.push(fundamental_cycle(e.u, e.v, &parent, &depth));
    }
    CycleBasis::new(cycles, n)
}

/// Tree path u -> lca -> v as a node sequence; the wrap-around pair (v, u)
/// is the non-tree chord.
fn fundamental_cycle(u: usize, v: usize, parent: &[usize], depth: &[usize]) -> Vec<usize> {
    let mut a = u;
    let mut b = v;
    let mut up_a = vec![a];
    let mut up_b = vec![b];
    while depth[a] > depth[b] {
        a = parent[a];
        up_a.push(a);
    }
    while depth[b] > depth[a] {
        b = parent[b];
        up_b.push(b);
    }
    while a != b {
        a = parent[a];
        b = parent[b];
        up_a.push(a);
        up_b.push(b);
    }
    // up_a ends at the lca; append the v-side path excluding the lca
    up_b.pop();
    up_a.extend(up_b.into_iter().rev());
    up_a
}

/// Number of cycles and mean cycle length (node count per cycle).
pub fn cycle_stats(basis: &CycleBasis) -> (usize, f64) {
    if basis.is_empty() {
        return (0, 0.0);
    }
    let total: usize = basis.cycles().iter().map(|c| c.len()).sum();
    (basis.len(), total as f64 / basis.len() as f64)
}

/// Clique adjacency matrix: entry (u, v) = 1 iff u != v and both nodes
/// co-occur in at least one basis cycle.
pub fn clique_adjacency(
    g: &Graph,
    basis: &CycleBasis,
) -> Result<AdjacencyMatrix, TopologyError> {
    if basis.parent_graph_nodes() != g.num_nodes() {
        return Err(TopologyError::BasisGraphMismatch(format!(
            "basis is over {} nodes, graph has {}",
            basis.parent_graph_nodes(),
            g.num_nodes()
        )));
    }
    let mut a = AdjacencyMatrix::zeros(g.num_nodes(), AdjacencyKind::Clique);
    for cycle in basis.cycles() {
        for (i, &u) in cycle.iter().enumerate() {
            if u >= g.num_nodes() {
                return Err(TopologyError::BasisGraphMismatch(format!(
                    "cycle node {u} out of range"
                )));
            }
            for &v in &cycle[i + 1..] {
                a.set_sym(u, v, 1.0);
            }
        }
    }
    Ok(a)
}

/// GF(2) incidence vectors of edge sets over the graph's edge list.
pub fn incidence_matrix(
    g: &Graph,
    sets: &[BTreeSet<(usize, usize)>],
) -> Result<BitMatrix, TopologyError> {
    let mut m = BitMatrix::new(g.num_edges());
    for set in sets {
        let mut bits = Vec::with_capacity(set.len());
        for &(u, v) in set {
            let pos = g
                .edge_position(u, v)
                .ok_or(TopologyError::UnknownEdge(u, v))?;
            bits.push(pos);
        }
        m.push_row(bits);
    }
    Ok(m)
}

/// True iff `candidate` spans the cycle space of `g`: every set has even
/// degree at each node and the GF(2) rank of the incidence vectors equals
/// |E| - |V| + #components. Dependent or duplicate sets are permitted.
pub fn is_cycle_basis(
    g: &Graph,
    candidate: &[BTreeSet<(usize, usize)>],
) -> Result<bool, TopologyError> {
    let mut degree = vec![0usize; g.num_nodes()];
    for set in candidate {
        degree.iter_mut().for_each(|d| *d = 0);
        for &(u, v) in set {
            if g.edge_position(u, v).is_none() {
                return Err(TopologyError::UnknownEdge(u, v));
            }
            degree[u] += 1;
            degree[v] += 1;
        }
        if degree.iter().any(|d| d % 2 != 0) {
            return Ok(false);
        }
    }
    let m = incidence_matrix(g, candidate)?;
    Ok(m.rank() == g.cycle_space_dim())
}

/// Incidence rank of a basis's own cycles; a valid basis has rank equal to
/// its cardinality.
pub fn basis_gf2_rank(g: &Graph, basis: &CycleBasis) -> Result<usize, TopologyError> {
    let sets: Vec<BTreeSet<(usize, usize)>> = (0..basis.len())
        .map(|i| basis.cycle_edges(i).into_iter().collect())
        .collect();
    Ok(incidence_matrix(g, &sets)?.rank())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Graph {
        Graph::build(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap()
    }

    fn k4() -> Graph {
        Graph::build(
            4,
            &[
                (0, 1, 1.0),
                (0, 2, 1.0),
                (0, 3, 1.0),
                (1, 2, 1.0),
                (1, 3, 1.0),
                (2, 3, 1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn triangle_basis_has_one_three_cycle() {
        let basis = cycle_basis_paton(&triangle());
        assert_eq!(basis.len(), 1);
        assert_eq!(basis.cycles()[0].len(), 3);
    }

    #[test]
    fn path_graph_has_empty_basis() {
        let g = Graph::build(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let basis = cycle_basis_paton(&g);
        assert!(basis.is_empty());
        assert_eq!(cycle_stats(&basis), (0, 0.0));
    }

    #[test]
    fn k4_basis_dimension_and_independence() {
        let g = k4();
        let basis = cycle_basis_paton(&g);
        // dim = 6 - 4 + 1 = 3
        assert_eq!(basis.len(), 3);
        assert_eq!(basis_gf2_rank(&g, &basis).unwrap(), 3);
        let (count, avg) = cycle_stats(&basis);
        assert_eq!(count, 3);
        let total: usize = basis.cycles().iter().map(|c| c.len()).sum();
        assert!((avg - total as f64 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn basis_cycles_are_graph_walks() {
        let g = k4();
        let basis = cycle_basis_paton(&g);
        for i in 0..basis.len() {
            for (u, v) in basis.cycle_edges(i) {
                assert!(g.has_edge(u, v));
            }
            let cycle = &basis.cycles()[i];
            let distinct: BTreeSet<_> = cycle.iter().collect();
            assert_eq!(distinct.len(), cycle.len());
            assert!(cycle.len() >= 3);
        }
    }

    #[test]
    fn four_cycle_clique_completion_is_k4() {
        let g = Graph::build(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)]).unwrap();
        let basis = cycle_basis_paton(&g);
        assert_eq!(basis.len(), 1);
        let ac = clique_adjacency(&g, &basis).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 0.0 } else { 1.0 };
                assert_eq!(ac.get(i, j), expect, "entry ({i},{j})");
            }
        }
        // chords of the square
        assert_eq!(ac.get(0, 2), 1.0);
        assert_eq!(ac.get(1, 3), 1.0);
    }

    #[test]
    fn tree_clique_adjacency_is_zero() {
        let g = Graph::build(4, &[(0, 1, 1.0), (1, 2, 1.0), (1, 3, 1.0)]).unwrap();
        let basis = cycle_basis_paton(&g);
        let ac = clique_adjacency(&g, &basis).unwrap();
        assert!(ac.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn disjoint_triangles_block_structure() {
        let g = Graph::build(
            6,
            &[
                (0, 1, 1.0),
                (1, 2, 1.0),
                (2, 0, 1.0),
                (3, 4, 1.0),
                (4, 5, 1.0),
                (5, 3, 1.0),
            ],
        )
        .unwrap();
        let basis = cycle_basis_paton(&g);
        assert_eq!(basis.len(), 2);
        let ac = clique_adjacency(&g, &basis).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let same_block = (i < 3) == (j < 3);
                let expect = if i != j && same_block { 1.0 } else { 0.0 };
                assert_eq!(ac.get(i, j), expect, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn mismatched_basis_rejected() {
        let basis = cycle_basis_paton(&k4());
        let err = clique_adjacency(&triangle(), &basis).unwrap_err();
        assert!(matches!(err, TopologyError::BasisGraphMismatch(_)));
    }

    #[test]
    fn is_cycle_basis_on_triangle() {
        let g = triangle();
        let full: BTreeSet<_> = [(0, 1), (1, 2), (0, 2)].into_iter().collect();
        assert!(is_cycle_basis(&g, &[full]).unwrap());
        assert!(!is_cycle_basis(&g, &[]).unwrap());
    }

    #[test]
    fn is_cycle_basis_rejects_non_cycle_sets() {
        let g = triangle();
        let open_path: BTreeSet<_> = [(0, 1), (1, 2)].into_iter().collect();
        assert!(!is_cycle_basis(&g, &[open_path]).unwrap());
    }

    #[test]
    fn is_cycle_basis_unknown_edge() {
        let g = triangle();
        let bogus: BTreeSet<_> = [(0, 1), (1, 2), (0, 5)].into_iter().collect();
        assert!(matches!(
            is_cycle_basis(&g, &[bogus]),
            Err(TopologyError::UnknownEdge(0, 5))
        ));
    }

    #[test]
    fn redundant_sum_cycle_preserves_span() {
        let g = k4();
        let basis = cycle_basis_paton(&g);
        let mut sets: Vec<BTreeSet<(usize, usize)>> = (0..basis.len())
            .map(|i| basis.cycle_edges(i).into_iter().collect())
            .collect();
        // GF(2) sum of the first two cycles is again a cycle-space element
        let sum: BTreeSet<_> = sets[0]
            .symmetric_difference(&sets[1])
            .copied()
            .collect();
        sets.push(sum);
        assert!(is_cycle_basis(&g, &sets).unwrap());
    }
}

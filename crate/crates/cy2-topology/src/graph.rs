use std::collections::HashMap;

use crate::error::TopologyError;

/// Undirected weighted graph over nodes `0..num_nodes`.
///
/// Edges are stored as normalized unordered pairs `(u, v)` with `u < v`,
/// in insertion order. Self-loops and duplicate pairs are rejected at
/// construction time.
#[derive(Debug, Clone)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<Edge>,
    edge_index: HashMap<(usize, usize), usize>,
    // neighbor lists sorted ascending, one per node
    adjacency: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

impl Graph {
    /// Builds a graph from an edge list, validating indices, self-loops and
    /// duplicate unordered pairs.
    pub fn build(
        num_nodes: usize,
        edge_list: &[(usize, usize, f64)],
    ) -> Result<Self, TopologyError> {
        assert!(num_nodes > 0, "graph must have at least one node");
        let mut edges = Vec::with_capacity(edge_list.len());
        let mut edge_index = HashMap::with_capacity(edge_list.len());
        let mut adjacency = vec![Vec::new(); num_nodes];
        for &(a, b, weight) in edge_list {
            for node in [a, b] {
                if node >= num_nodes {
                    return Err(TopologyError::IndexOutOfRange { node, num_nodes });
                }
            }
            if a == b {
                return Err(TopologyError::SelfLoop(a));
            }
            let (u, v) = if a < b { (a, b) } else { (b, a) };
            if edge_index.contains_key(&(u, v)) {
                return Err(TopologyError::DuplicateEdge(u, v));
            }
            edge_index.insert((u, v), edges.len());
            edges.push(Edge { u, v, weight });
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            num_nodes,
            edges,
            edge_index,
            adjacency,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `v`, sorted ascending.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edge_position(a, b).is_some()
    }

    /// Position of the unordered edge `(a, b)` in the edge list.
    pub fn edge_position(&self, a: usize, b: usize) -> Option<usize> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edge_index.get(&key).copied()
    }

    pub fn edge_weight(&self, a: usize, b: usize) -> Option<f64> {
        self.edge_position(a, b).map(|i| self.edges[i].weight)
    }

    /// Component id per node; ids are assigned in ascending order of the
    /// lowest-index node of each component.
    pub fn component_ids(&self) -> Vec<usize> {
        let mut ids = vec![usize::MAX; self.num_nodes];
        let mut next = 0;
        let mut queue = std::collections::VecDeque::new();
        for root in 0..self.num_nodes {
            if ids[root] != usize::MAX {
                continue;
            }
            ids[root] = next;
            queue.push_back(root);
            while let Some(x) = queue.pop_front() {
                for &y in self.neighbors(x) {
                    if ids[y] == usize::MAX {
                        ids[y] = next;
                        queue.push_back(y);
                    }
                }
            }
            next += 1;
        }
        ids
    }

    pub fn num_components(&self) -> usize {
        self.component_ids().iter().max().map_or(0, |m| m + 1)
    }

    /// Dimension of the cycle space: |E| - |V| + #components.
    pub fn cycle_space_dim(&self) -> usize {
        self.num_edges() + self.num_components() - self.num_nodes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjacencyKind {
    Standard,
    Clique,
    Dtw,
}

impl AdjacencyKind {
    pub fn label(self) -> &'static str {
        match self {
            AdjacencyKind::Standard => "standard",
            AdjacencyKind::Clique => "clique",
            AdjacencyKind::Dtw => "dtw",
        }
    }
}

/// Dense symmetric N x N matrix with a tag describing how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    n: usize,
    data: Vec<f64>,
    kind: AdjacencyKind,
}

impl AdjacencyMatrix {
    pub fn zeros(n: usize, kind: AdjacencyKind) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
            kind,
        }
    }

    pub fn from_data(n: usize, data: Vec<f64>, kind: AdjacencyKind) -> Self {
        assert_eq!(data.len(), n * n, "adjacency data must be n*n");
        Self { n, data, kind }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> AdjacencyKind {
        self.kind
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
    }

    /// Sets both (i, j) and (j, i).
    pub fn set_sym(&mut self, i: usize, j: usize, value: f64) {
        self.set(i, j, value);
        self.set(j, i, value);
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn has_zero_diagonal(&self) -> bool {
        (0..self.n).all(|i| self.get(i, i) == 0.0)
    }
}

/// Builds the dense adjacency matrix A from edge distances.
#[derive(Debug, Clone, Copy)]
pub enum AdjacencyMode {
    /// 1 where an edge exists, 0 elsewhere.
    Binary,
    /// exp(-d^2 / sigma^2) where that value reaches `threshold`, 0 elsewhere.
    GaussianKernel { sigma: f64, threshold: f64 },
}

pub fn dense_adjacency(g: &Graph, mode: AdjacencyMode) -> Result<AdjacencyMatrix, TopologyError> {
    if let AdjacencyMode::GaussianKernel { sigma, .. } = mode {
        if !(sigma > 0.0) {
            return Err(TopologyError::InvalidSigma(sigma));
        }
    }
    let mut a = AdjacencyMatrix::zeros(g.num_nodes(), AdjacencyKind::Standard);
    for e in g.edges() {
        let value = match mode {
            AdjacencyMode::Binary => 1.0,
            AdjacencyMode::GaussianKernel { sigma, threshold } => {
                let w = (-e.weight * e.weight / (sigma * sigma)).exp();
                if w >= threshold {
                    w
                } else {
                    0.0
                }
            }
        };
        a.set_sym(e.u, e.v, value);
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_builds() {
        let g = Graph::build(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap();
        assert_eq!(g.num_edges(), 3);
        assert_eq!(g.neighbors(0), &[1, 2]);
        assert_eq!(g.num_components(), 1);
    }

    #[test]
    fn self_loop_rejected() {
        let err = Graph::build(2, &[(0, 0, 1.0)]).unwrap_err();
        assert!(matches!(err, TopologyError::SelfLoop(0)));
    }

    #[test]
    fn unordered_duplicate_rejected() {
        let err = Graph::build(4, &[(0, 1, 1.0), (1, 0, 2.0)]).unwrap_err();
        assert!(matches!(err, TopologyError::DuplicateEdge(0, 1)));
    }

    #[test]
    fn out_of_range_rejected() {
        let err = Graph::build(2, &[(0, 5, 1.0)]).unwrap_err();
        assert!(matches!(err, TopologyError::IndexOutOfRange { node: 5, .. }));
    }

    #[test]
    fn binary_adjacency_of_triangle() {
        let g = Graph::build(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap();
        let a = dense_adjacency(&g, AdjacencyMode::Binary).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.0 } else { 1.0 };
                assert_eq!(a.get(i, j), expect);
            }
        }
    }

    #[test]
    fn gaussian_kernel_values() {
        let g = Graph::build(3, &[(0, 1, 0.0), (1, 2, 1.0)]).unwrap();
        let a = dense_adjacency(
            &g,
            AdjacencyMode::GaussianKernel {
                sigma: 1.0,
                threshold: 0.1,
            },
        )
        .unwrap();
        assert_eq!(a.get(0, 1), 1.0);
        let expect = (-1.0f64).exp();
        assert!((a.get(1, 2) - expect).abs() < 1e-12);
        assert!((expect - 0.3679).abs() < 1e-4);
        assert!(a.is_symmetric() && a.has_zero_diagonal());
    }

    #[test]
    fn gaussian_threshold_cuts() {
        let g = Graph::build(2, &[(0, 1, 10.0)]).unwrap();
        let a = dense_adjacency(
            &g,
            AdjacencyMode::GaussianKernel {
                sigma: 1.0,
                threshold: 0.1,
            },
        )
        .unwrap();
        assert_eq!(a.get(0, 1), 0.0);
    }

    #[test]
    fn invalid_sigma() {
        let g = Graph::build(2, &[(0, 1, 1.0)]).unwrap();
        let err = dense_adjacency(
            &g,
            AdjacencyMode::GaussianKernel {
                sigma: 0.0,
                threshold: 0.1,
            },
        )
        .unwrap_err();
        assert!(matches!(err, TopologyError::InvalidSigma(_)));
    }
}

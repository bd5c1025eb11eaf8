use thiserror::Error;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("node index {node} out of range for graph with {num_nodes} nodes")]
    IndexOutOfRange { node: usize, num_nodes: usize },
    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(usize),
    #[error("duplicate unordered edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("cycle basis does not belong to this graph: {0}")]
    BasisGraphMismatch(String),
    #[error("temporal product requires at least 2 steps, got {0}")]
    InvalidSteps(usize),
    #[error("gaussian kernel requires strictly positive sigma, got {0}")]
    InvalidSigma(f64),
    #[error("edge ({0}, {1}) does not exist in the graph")]
    UnknownEdge(usize, usize),
    #[error("edge file parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

//! Edge-list CSV (`from,to,cost`) and the `CY2M` binary matrix format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::TopologyError;
use crate::graph::{AdjacencyKind, AdjacencyMatrix, Graph};

const MATRIX_MAGIC: &[u8; 4] = b"CY2M";

/// Reads raw `from,to,cost` triples. Node ids are non-negative integers;
/// cost is a real number.
pub fn read_edge_csv(path: &Path) -> Result<Vec<(usize, usize, f64)>, TopologyError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| TopologyError::Parse(e.to_string()))?;
    let mut triples = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| TopologyError::Parse(e.to_string()))?;
        if record.len() < 3 {
            return Err(TopologyError::Parse(format!(
                "row {}: expected from,to,cost",
                line + 2
            )));
        }
        let parse_id = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| TopologyError::Parse(format!("row {}: bad node id {s:?}", line + 2)))
        };
        let from = parse_id(&record[0])?;
        let to = parse_id(&record[1])?;
        let cost = record[2]
            .parse::<f64>()
            .map_err(|_| TopologyError::Parse(format!("row {}: bad cost {:?}", line + 2, &record[2])))?;
        triples.push((from, to, cost));
    }
    Ok(triples)
}

/// Builds an undirected graph from an edge CSV, symmetrizing directed
/// source data: an edge is present if either direction is listed, the first
/// occurrence's cost wins, and self-loops are dropped. Node count is the
/// largest id plus one unless `num_nodes` is given.
pub fn graph_from_edge_csv(
    path: &Path,
    num_nodes: Option<usize>,
) -> Result<Graph, TopologyError> {
    let triples = read_edge_csv(path)?;
    let inferred = triples
        .iter()
        .map(|&(u, v, _)| u.max(v) + 1)
        .max()
        .unwrap_or(1);
    let n = num_nodes.unwrap_or(inferred).max(inferred);
    let mut seen = std::collections::HashSet::new();
    let mut edges = Vec::new();
    for (a, b, w) in triples {
        if a == b {
            continue;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        if seen.insert(key) {
            edges.push((key.0, key.1, w));
        }
    }
    Graph::build(n, &edges)
}

pub fn write_edge_csv(path: &Path, g: &Graph) -> Result<(), TopologyError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "from,to,cost")?;
    for e in g.edges() {
        writeln!(out, "{},{},{}", e.u, e.v, e.weight)?;
    }
    Ok(())
}

/// Writes `CY2M`: magic, u32 N, f32 little-endian row-major payload.
pub fn write_matrix(path: &Path, m: &AdjacencyMatrix) -> Result<(), TopologyError> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MATRIX_MAGIC)?;
    out.write_all(&(m.n() as u32).to_le_bytes())?;
    for &x in m.data() {
        out.write_all(&(x as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_matrix(path: &Path, kind: AdjacencyKind) -> Result<AdjacencyMatrix, TopologyError> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MATRIX_MAGIC {
        return Err(TopologyError::Parse(format!(
            "bad matrix magic {magic:?}, expected CY2M"
        )));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let n = u32::from_le_bytes(word) as usize;
    let mut data = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        input.read_exact(&mut word)?;
        data.push(f32::from_le_bytes(word) as f64);
    }
    Ok(AdjacencyMatrix::from_data(n, data, kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{dense_adjacency, AdjacencyMode};

    #[test]
    fn edge_csv_round_trip_symmetrizes() {
        let dir = std::env::temp_dir().join(format!("cy2_topo_io_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("edges.csv");
        std::fs::write(&path, "from,to,cost\n0,1,2.5\n1,0,9.0\n2,1,1.0\n3,3,4.0\n").unwrap();
        let g = graph_from_edge_csv(&path, None).unwrap();
        assert_eq!(g.num_nodes(), 4);
        // (1,0) is a duplicate of (0,1); the self-loop row is dropped
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.edge_weight(0, 1), Some(2.5));

        let out = dir.join("roundtrip.csv");
        write_edge_csv(&out, &g).unwrap();
        let g2 = graph_from_edge_csv(&out, None).unwrap();
        assert_eq!(g2.num_edges(), g.num_edges());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn matrix_round_trip() {
        let g = Graph::build(3, &[(0, 1, 1.0), (1, 2, 2.0)]).unwrap();
        let a = dense_adjacency(&g, AdjacencyMode::Binary).unwrap();
        let dir = std::env::temp_dir().join(format!("cy2_topo_m_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.cy2m");
        write_matrix(&path, &a).unwrap();
        let b = read_matrix(&path, AdjacencyKind::Standard).unwrap();
        assert_eq!(a, b);
        // second write is byte-identical
        let bytes1 = std::fs::read(&path).unwrap();
        write_matrix(&path, &b).unwrap();
        assert_eq!(bytes1, std::fs::read(&path).unwrap());
        std::fs::remove_dir_all(&dir).ok();
    }
}

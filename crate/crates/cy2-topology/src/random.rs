//! Seeded random graph generators for property sweeps.

use rand::Rng;

use crate::graph::Graph;

/// Erdos-Renyi G(n, p); may be disconnected or acyclic.
pub fn gnp<R: Rng>(n: usize, p: f64, rng: &mut R) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v, 1.0));
            }
        }
    }
    Graph::build(n, &edges).expect("generated edges are valid")
}

/// Connected graph: a random attachment tree plus `extra_edges` distinct
/// non-tree edges (fewer when the complete graph runs out of room).
pub fn random_connected<R: Rng>(n: usize, extra_edges: usize, rng: &mut R) -> Graph {
    assert!(n >= 1);
    let mut present = std::collections::HashSet::new();
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        present.insert((u, v));
        edges.push((u, v, 1.0));
    }
    let max_edges = n * (n - 1) / 2;
    let target = (edges.len() + extra_edges).min(max_edges);
    let mut guard = 0;
    while edges.len() < target && guard < 10_000 {
        guard += 1;
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        if present.insert(key) {
            edges.push((key.0, key.1, 1.0));
        }
    }
    Graph::build(n, &edges).expect("generated edges are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn random_connected_is_connected() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.gen_range(1..30);
            let g = random_connected(n, rng.gen_range(0..10), &mut rng);
            assert_eq!(g.num_components(), 1);
        }
    }

    #[test]
    fn gnp_determinism() {
        let g1 = gnp(12, 0.3, &mut ChaCha20Rng::seed_from_u64(3));
        let g2 = gnp(12, 0.3, &mut ChaCha20Rng::seed_from_u64(3));
        assert_eq!(g1.num_edges(), g2.num_edges());
    }
}

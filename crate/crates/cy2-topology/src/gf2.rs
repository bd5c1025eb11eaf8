//! Dense GF(2) linear algebra over u64 blocks, used to rank-check cycle
//! incidence vectors.

/// Row-major bit matrix; each row is a set of `cols` bits packed into u64
/// words.
#[derive(Debug, Clone)]
pub struct BitMatrix {
    cols: usize,
    words: usize,
    rows: Vec<Vec<u64>>,
}

impl BitMatrix {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            words: cols.div_ceil(64),
            rows: Vec::new(),
        }
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.cols
    }

    /// Appends a row given the indices of its set bits.
    pub fn push_row(&mut self, set_bits: impl IntoIterator<Item = usize>) {
        let mut row = vec![0u64; self.words];
        for bit in set_bits {
            assert!(bit < self.cols, "bit index out of range");
            row[bit / 64] ^= 1u64 << (bit % 64);
        }
        self.rows.push(row);
    }

    /// Rank over GF(2) by Gaussian elimination. Consumes a working copy.
    pub fn rank(&self) -> usize {
        let mut rows = self.rows.clone();
        let mut rank = 0;
        for col in 0..self.cols {
            let word = col / 64;
            let mask = 1u64 << (col % 64);
            let Some(pivot) = (rank..rows.len()).find(|&r| rows[r][word] & mask != 0) else {
                continue;
            };
            rows.swap(rank, pivot);
            let (pivot_row, rest) = {
                let (a, b) = rows.split_at_mut(rank + 1);
                (&a[rank], b)
            };
            for row in rest.iter_mut() {
                if row[word] & mask != 0 {
                    for (w, p) in row.iter_mut().zip(pivot_row.iter()) {
                        *w ^= p;
                    }
                }
            }
            rank += 1;
            if rank == rows.len() {
                break;
            }
        }
        rank
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_independent_rows() {
        let mut m = BitMatrix::new(4);
        m.push_row([0, 1]);
        m.push_row([1, 2]);
        m.push_row([0, 3]);
        assert_eq!(m.rank(), 3);
    }

    #[test]
    fn rank_with_dependent_row() {
        let mut m = BitMatrix::new(4);
        m.push_row([0, 1]);
        m.push_row([1, 2]);
        m.push_row([0, 2]); // xor of the first two
        assert_eq!(m.rank(), 2);
    }

    #[test]
    fn rank_of_zero_rows() {
        let mut m = BitMatrix::new(8);
        m.push_row([]);
        m.push_row([]);
        assert_eq!(m.rank(), 0);
    }

    #[test]
    fn rank_spanning_wide_words() {
        let mut m = BitMatrix::new(130);
        m.push_row([0]);
        m.push_row([64]);
        m.push_row([129]);
        m.push_row([0, 64, 129]);
        assert_eq!(m.rank(), 3);
    }
}

//! vec / vech index plumbing.
//!
//! `vec` stacks columns: entry `(i, j)` of an `n × n` matrix sits at
//! `i + j·n`. `vech` stacks the lower triangle column by column, so for
//! `n = 2` the order is `(0,0), (1,0), (1,1)`.

use nalgebra::{DMatrix, DVector};

use super::SymMatrix;
use crate::error::{Error, Result};

/// Bijection between lower-triangle pairs `(i, j)`, `i ≥ j`, and vech positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HalfVecIndex {
    n: usize,
}

impl HalfVecIndex {
    pub fn new(n: usize) -> Self {
        HalfVecIndex { n }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Position of `(i, j)` in vech; the pair is reordered so `i ≥ j`.
    #[inline]
    pub fn pos(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        j * self.n - j * j.saturating_sub(1) / 2 + i - j
    }

    /// Inverse of [`pos`](Self::pos).
    pub fn pair(&self, mut p: usize) -> (usize, usize) {
        let mut j = 0;
        loop {
            let col_len = self.n - j;
            if p < col_len {
                return (j + p, j);
            }
            p -= col_len;
            j += 1;
        }
    }

    /// All `(i, j)` pairs in vech order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |j| (j..self.n).map(move |i| (i, j)))
    }
}

pub fn vech(a: &SymMatrix) -> DVector<f64> {
    let idx = HalfVecIndex::new(a.dim());
    DVector::from_iterator(idx.len(), idx.pairs().map(|(i, j)| a.get(i, j)))
}

pub fn unvech(n: usize, v: &[f64]) -> Result<SymMatrix> {
    let idx = HalfVecIndex::new(n);
    if v.len() != idx.len() {
        return Err(Error::DimensionMismatch(format!("vech of length {} does not match dimension {n}", v.len())));
    }
    let mut m = DMatrix::zeros(n, n);
    for (p, (i, j)) in idx.pairs().enumerate() {
        m[(i, j)] = v[p];
        m[(j, i)] = v[p];
    }
    SymMatrix::from_lower(m)
}

pub fn vec(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pos_and_pair_are_inverse() {
        for n in 1..9 {
            let idx = HalfVecIndex::new(n);
            for (p, (i, j)) in idx.pairs().enumerate() {
                assert_eq!(idx.pos(i, j), p);
                assert_eq!(idx.pos(j, i), p);
                assert_eq!(idx.pair(p), (i, j));
            }
        }
    }

    #[test]
    fn vech_order_two_by_two() {
        let a = SymMatrix::from_fn(2, |i, j| [[1.0, 2.0], [2.0, 3.0]][i][j]);
        assert_eq!(vech(&a).as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(unvech(2, &[1.0, 2.0, 3.0]).unwrap(), a);
        assert!(unvech(3, &[1.0]).is_err());
    }
}

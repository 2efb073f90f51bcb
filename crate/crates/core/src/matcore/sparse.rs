//! Coordinate-list sparse matrices for the structural operators
//! `D_n`, `D_n⁺`, `K_{m,n}` and the Kronecker vec permutation.

use nalgebra::{DMatrix, DVector};

use super::vech::HalfVecIndex;

/// Sparse matrix stored as `(row, col, value)` triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(nrows: usize, ncols: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        debug_assert!(entries.iter().all(|&(r, c, _)| r < nrows && c < ncols));
        entries.sort_by_key(|&(r, c, _)| (c, r));
        SparseMatrix { nrows, ncols, entries }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix::new(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Triplets sorted by column, then row.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn transpose(&self) -> SparseMatrix {
        SparseMatrix::new(self.ncols, self.nrows, self.entries.iter().map(|&(r, c, v)| (c, r, v)).collect())
    }

    pub fn mul_vec(&self, x: &[f64]) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols, "sparse mul_vec dimension mismatch");
        let mut y = DVector::zeros(self.nrows);
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    pub fn tr_mul_vec(&self, x: &[f64]) -> DVector<f64> {
        assert_eq!(x.len(), self.nrows, "sparse tr_mul_vec dimension mismatch");
        let mut y = DVector::zeros(self.ncols);
        for &(r, c, v) in &self.entries {
            y[c] += v * x[r];
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    /// Product with another sparse matrix.
    pub fn mul(&self, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.ncols, other.nrows, "sparse product dimension mismatch");
        let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); other.nrows];
        for &(r, c, v) in &other.entries {
            by_row[r].push((c, v));
        }
        let mut acc = std::collections::BTreeMap::new();
        for &(r, k, v) in &self.entries {
            for &(c, w) in &by_row[k] {
                *acc.entry((r, c)).or_insert(0.0) += v * w;
            }
        }
        SparseMatrix::new(
            self.nrows,
            other.ncols,
            acc.into_iter().filter(|&(_, v)| v != 0.0).map(|((r, c), v)| (r, c, v)).collect(),
        )
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &SparseMatrix) -> SparseMatrix {
        let mut entries = Vec::with_capacity(self.nnz() * other.nnz());
        for &(r1, c1, v1) in &self.entries {
            for &(r2, c2, v2) in &other.entries {
                entries.push((r1 * other.nrows + r2, c1 * other.ncols + c2, v1 * v2));
            }
        }
        SparseMatrix::new(self.nrows * other.nrows, self.ncols * other.ncols, entries)
    }

    /// `A'A` as a dense matrix.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.ncols];
        for &(r, c, v) in &self.entries {
            cols[c].push((r, v));
        }
        let mut g = DMatrix::zeros(self.ncols, self.ncols);
        let mut dense_col = vec![0.0; self.nrows];
        for a in 0..self.ncols {
            for &(r, v) in &cols[a] {
                dense_col[r] = v;
            }
            for b in a..self.ncols {
                let s: f64 = cols[b].iter().map(|&(r, v)| v * dense_col[r]).sum();
                g[(a, b)] = s;
                g[(b, a)] = s;
            }
            for &(r, _) in &cols[a] {
                dense_col[r] = 0.0;
            }
        }
        g
    }
}

/// Duplication matrix `D_n` with `vec A = D_n vech A` for symmetric `A`.
pub fn duplication(n: usize) -> SparseMatrix {
    let idx = HalfVecIndex::new(n);
    let mut entries = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            entries.push((i + j * n, idx.pos(i, j), 1.0));
        }
    }
    SparseMatrix::new(n * n, idx.len(), entries)
}

/// Moore–Penrose inverse `D_n⁺ = (D_n'D_n)⁻¹D_n'`.
pub fn pinv_duplication(n: usize) -> SparseMatrix {
    let idx = HalfVecIndex::new(n);
    let mut entries = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let w = if i == j { 1.0 } else { 0.5 };
            entries.push((idx.pos(i, j), i + j * n, w));
        }
    }
    SparseMatrix::new(idx.len(), n * n, entries)
}

/// Commutation matrix `K_{m,n}`: `K_{m,n} vec(A) = vec(A')` for `A` of size `m × n`.
pub fn commutation(m: usize, n: usize) -> SparseMatrix {
    let mut entries = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            // A[i,j] sits at i + j·m in vec(A) and at j + i·n in vec(A').
            entries.push((j + i * n, i + j * m, 1.0));
        }
    }
    SparseMatrix::new(m * n, m * n, entries)
}

/// `P = I_n ⊗ K_{q,m} ⊗ I_p`, so `vec(A ⊗ B) = P (vec A ⊗ vec B)` for
/// `A` of size `m × n` and `B` of size `p × q`.
pub fn kron_vec_permutation(m: usize, n: usize, p: usize, q: usize) -> SparseMatrix {
    SparseMatrix::identity(n).kron(&commutation(q, m)).kron(&SparseMatrix::identity(p))
}

/// `P = I_n ⊗ K_{n,n} ⊗ I_n`.
pub fn vec_perm_p(n: usize) -> SparseMatrix {
    kron_vec_permutation(n, n, n, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{kron_dense, vec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn duplication_two() {
        let d = duplication(2);
        assert_eq!((d.nrows(), d.ncols()), (4, 3));
        let (a, b, c) = (1.5, -2.0, 4.0);
        let vec_a = [a, b, b, c];
        assert_eq!(pinv_duplication(2).mul_vec(&vec_a).as_slice(), &[a, b, c]);
        assert_eq!(d.mul_vec(&[a, b, c]).as_slice(), &vec_a);
    }

    #[test]
    fn duplication_identities() {
        for n in 1..7 {
            let d = duplication(n);
            let dp = pinv_duplication(n);
            let prod = dp.mul(&d).to_dense();
            assert_eq!(prod, DMatrix::identity(n * (n + 1) / 2, n * (n + 1) / 2));
            let dtd = d.gram();
            for r in 0..dtd.nrows() {
                for c in 0..dtd.ncols() {
                    if r == c {
                        assert!(dtd[(r, c)] == 1.0 || dtd[(r, c)] == 2.0);
                    } else {
                        assert_eq!(dtd[(r, c)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn commutation_transposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DMatrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
        let k = commutation(2, 3);
        let lhs = k.mul_vec(vec(&a).as_slice());
        // Direct permutation oracle: read vec(A') off A entry by entry.
        let mut oracle = Vec::new();
        for col in 0..2 {
            for row in 0..3 {
                oracle.push(a[(col, row)]);
            }
        }
        assert_eq!(lhs.as_slice(), oracle.as_slice());
    }

    #[test]
    fn kron_vec_permutation_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (m, n, p, q) = (2, 3, 3, 2);
        let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(p, q, |_, _| rng.random_range(-1.0..1.0));
        let va = vec(&a);
        let vb = vec(&b);
        let outer: Vec<f64> = va.iter().flat_map(|x| vb.iter().map(move |y| x * y)).collect();
        let lhs = kron_vec_permutation(m, n, p, q).mul_vec(&outer);
        let rhs = vec(&kron_dense(&a, &b));
        assert!((lhs - rhs).amax() < 1e-15);
        assert_eq!(vec_perm_p(3).nrows(), 81);
    }
}

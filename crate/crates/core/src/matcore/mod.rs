//! Dense symmetric matrix calculus.
//!
//! Symmetric eigendecompositions drive everything here: the principal
//! logarithm and exponential, and the two Fréchet-derivative kernels, are all
//! evaluated as functions of the spectrum. Sparse structural matrices
//! (duplication, commutation) live in [`sparse`], Kronecker helpers in
//! [`kron`], and vec/vech plumbing in [`vech`].

pub mod kernel;
pub mod kron;
pub mod sparse;
pub mod vech;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use kernel::{frechet_exp_kernel, frechet_log_kernel, EigenBasis, FrechetKernel};
pub use kron::{kron_apply, kron_apply_columns, kron_chain, kron_dense};
pub use sparse::{commutation, duplication, pinv_duplication, vec_perm_p, SparseMatrix};
pub use vech::{unvech, vec, vech, HalfVecIndex};

/// Largest `n` for which an `n² × n²` kernel may be materialized.
pub const DENSE_KERNEL_LIMIT: usize = 64;

/// Largest dimension a Kronecker product is allowed to materialize to.
pub const MATERIALIZATION_LIMIT: usize = 4096;

/// Relative eigenvalue floor below which a matrix is rejected as not SPD.
pub const SPD_TOLERANCE: f64 = 1e-10;

/// Dense real symmetric matrix.
///
/// The lower triangle is authoritative: constructors copy it onto the upper
/// triangle so `m[(i, j)] == m[(j, i)]` holds bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps a square matrix, mirroring its lower triangle.
    pub fn from_lower(mut m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "expected a non-empty square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                m[(j, i)] = m[(i, j)];
            }
        }
        Ok(SymMatrix(m))
    }

    /// Wraps a square matrix after averaging it with its transpose.
    pub fn symmetrize(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch("symmetrize needs a square matrix".into()));
        }
        Self::from_lower((m + m.transpose()) * 0.5)
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn scaled(&self, c: f64) -> Self {
        SymMatrix(&self.0 * c)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Upper-left `k × k` block.
    pub fn leading_block(&self, k: usize) -> Self {
        SymMatrix(self.0.view((0, 0), (k, k)).into_owned())
    }

    /// `D^{1/2} A D^{1/2}` for a diagonal `D` given by its entries.
    pub fn scale_by_diagonal_sqrt(&self, d: &[f64]) -> Self {
        let s: Vec<f64> = d.iter().map(|v| v.sqrt()).collect();
        SymMatrix::from_fn(self.dim(), |i, j| s[i] * self.0[(i, j)] * s[j])
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// `Q diag(f(λ)) Q'`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[k]);
        }
        SymMatrix::from_lower(&scaled * self.vectors.transpose()).expect("eigenvector matrix is square")
    }
}

/// Eigendecomposition of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct SpdEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SpdEigen {
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        SymEigen { values: self.values.clone(), vectors: self.vectors.clone() }.reconstruct_with(f)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.values[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn log(&self) -> SymMatrix {
        self.reconstruct_with(f64::ln)
    }

    pub fn inverse(&self) -> SymMatrix {
        self.reconstruct_with(|l| 1.0 / l)
    }
}

pub fn sym_eigen(a: &SymMatrix) -> SymEigen {
    let eig = nalgebra::SymmetricEigen::new(a.0.clone());
    let n = a.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    SymEigen { values, vectors }
}

/// Eigendecomposition that rejects matrices whose smallest eigenvalue is not
/// above `SPD_TOLERANCE` times the largest.
pub fn spd_eigen(a: &SymMatrix) -> Result<SpdEigen> {
    let SymEigen { values, vectors } = sym_eigen(a);
    let min = values[0];
    let max = values[values.len() - 1];
    if !(max > 0.0) || !(min > SPD_TOLERANCE * max) || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(SpdEigen { values, vectors })
}

/// Principal logarithm of an SPD matrix.
pub fn spd_log(a: &SymMatrix) -> Result<SymMatrix> {
    Ok(spd_eigen(a)?.log())
}

/// Exponential of a symmetric matrix.
pub fn sym_exp(omega: &SymMatrix) -> SymMatrix {
    sym_eigen(omega).reconstruct_with(f64::exp)
}

/// Inverse of an SPD matrix via Cholesky.
pub fn spd_inverse(a: &SymMatrix) -> Result<SymMatrix> {
    let chol = nalgebra::Cholesky::new(a.0.clone())
        .ok_or_else(|| Error::NotPositiveDefinite { min_eigenvalue: sym_eigen(a).values[0] })?;
    SymMatrix::from_lower(chol.inverse())
}

/// `log det` of an SPD matrix via Cholesky.
pub fn spd_log_det(a: &SymMatrix) -> Result<f64> {
    let chol = nalgebra::Cholesky::new(a.0.clone())
        .ok_or_else(|| Error::NotPositiveDefinite { min_eigenvalue: sym_eigen(a).values[0] })?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Relative Frobenius distance `‖a − b‖_F / ‖b‖_F`.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_spd(n: usize, rng: &mut impl Rng) -> SymMatrix {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        SymMatrix::from_lower(a.transpose() * &a + DMatrix::identity(n, n)).unwrap()
    }

    #[test]
    fn identity_eigen() {
        let e = spd_eigen(&SymMatrix::identity(4)).unwrap();
        assert!(e.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let qtq = e.vectors.transpose() * &e.vectors;
        assert!((qtq - DMatrix::identity(4, 4)).amax() < 1e-10);
    }

    #[test]
    fn two_by_two_correlation_eigenvalues() {
        let a = SymMatrix::from_fn(2, |i, j| if i == j { 1.0 } else { 0.5 });
        let e = spd_eigen(&a).unwrap();
        assert_relative_eq!(e.values[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(e.values[1], 1.5, epsilon = 1e-14);
    }

    #[test]
    fn random_spd_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_spd(8, &mut rng);
        let e = spd_eigen(&a).unwrap();
        let back = e.reconstruct_with(|l| l);
        assert!(relative_frobenius(back.matrix(), a.matrix()) < 1e-10);
        let qtq = e.vectors.transpose() * &e.vectors;
        assert!((qtq - DMatrix::identity(8, 8)).amax() < 1e-10);
    }

    #[test]
    fn rejects_singular() {
        let a = SymMatrix::from_fn(3, |_, _| 1.0);
        match spd_eigen(&a) {
            Err(Error::NotPositiveDefinite { min_eigenvalue }) => assert!(min_eigenvalue.abs() < 1e-12),
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn log_of_identity_is_zero() {
        let l = spd_log(&SymMatrix::identity(5)).unwrap();
        assert!(l.matrix().amax() < 1e-15);
        let e = sym_exp(&SymMatrix::zeros(5));
        assert!((e.matrix() - DMatrix::identity(5, 5)).amax() < 1e-15);
    }

    #[test]
    fn log_of_two_by_two_correlation() {
        let rho: f64 = 0.6;
        let a = SymMatrix::from_fn(2, |i, j| if i == j { 1.0 } else { rho });
        let l = spd_log(&a).unwrap();
        let diag = 0.5 * (1.0 - rho * rho).ln();
        let off = 0.5 * ((1.0 + rho) / (1.0 - rho)).ln();
        assert_relative_eq!(diag, -0.22314355131420976, epsilon = 1e-12);
        assert_relative_eq!(off, std::f64::consts::LN_2, epsilon = 1e-12);
        assert_relative_eq!(l.get(0, 0), diag, epsilon = 1e-13);
        assert_relative_eq!(l.get(1, 1), diag, epsilon = 1e-13);
        assert_relative_eq!(l.get(1, 0), off, epsilon = 1e-13);
        let back = sym_exp(&l);
        assert_relative_eq!(back.get(0, 1), rho, epsilon = 1e-13);
        assert_relative_eq!(back.get(0, 0), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn from_lower_mirrors() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 9.0, 2.0, 3.0]);
        let s = SymMatrix::from_lower(m).unwrap();
        assert_eq!(s.get(0, 1), 2.0);
        assert!(SymMatrix::from_lower(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn inverse_and_log_det() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spd(6, &mut rng);
        let inv = spd_inverse(&a).unwrap();
        assert!((a.matrix() * inv.matrix() - DMatrix::identity(6, 6)).amax() < 1e-10);
        let e = spd_eigen(&a).unwrap();
        let ld: f64 = e.values.iter().map(|v| v.ln()).sum();
        assert_relative_eq!(spd_log_det(&a).unwrap(), ld, epsilon = 1e-10);
    }
}

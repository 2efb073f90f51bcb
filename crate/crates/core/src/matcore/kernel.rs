//! Fréchet-derivative kernels of the matrix logarithm and exponential.
//!
//! Both kernels are diagonal in the eigenbasis of their argument. For an SPD
//! `Θ = Q diag(λ) Q'` the log kernel `H` acts as
//! `B ↦ Q (W ∘ (Q'BQ)) Q'` with `W_ij = (log λ_i − log λ_j)/(λ_i − λ_j)`,
//! and the exp kernel `Ψ₁` at `Ω = log Θ` uses the reciprocal weights
//! `(λ_i − λ_j)/(log λ_i − log λ_j)`. Coinciding eigenvalues take the
//! confluent limits `1/λ` and `λ`.

use nalgebra::DMatrix;

use super::{kron_apply_columns, spd_eigen, sym_eigen, SymMatrix, DENSE_KERNEL_LIMIT};
use crate::error::{Error, Result};

/// Relative eigenvalue gap below which the confluent limit is used.
pub const CONFLUENT_TOL: f64 = 1e-8;

/// Orthogonal eigenbasis, either dense or a Kronecker product of factor bases.
#[derive(Debug, Clone)]
pub enum EigenBasis {
    Dense(DMatrix<f64>),
    Kron { factors: Vec<DMatrix<f64>>, transposed: Vec<DMatrix<f64>> },
}

impl EigenBasis {
    pub fn kron(factors: Vec<DMatrix<f64>>) -> Self {
        let transposed = factors.iter().map(|q| q.transpose()).collect();
        EigenBasis::Kron { factors, transposed }
    }

    pub fn dim(&self) -> usize {
        match self {
            EigenBasis::Dense(q) => q.nrows(),
            EigenBasis::Kron { factors, .. } => factors.iter().map(|q| q.nrows()).product(),
        }
    }

    /// `Q' X Q`.
    pub fn to_eigen(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            EigenBasis::Dense(q) => q.tr_mul(x) * q,
            EigenBasis::Kron { transposed, .. } => {
                let y = kron_apply_columns(transposed, x);
                kron_apply_columns(transposed, &y.transpose()).transpose()
            }
        }
    }

    /// `Q X Q'`.
    pub fn from_eigen(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            EigenBasis::Dense(q) => q * x * q.transpose(),
            EigenBasis::Kron { factors, .. } => {
                let y = kron_apply_columns(factors, x);
                kron_apply_columns(factors, &y.transpose()).transpose()
            }
        }
    }

    /// `Q' v` for a single vector.
    pub fn vector_to_eigen(&self, v: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        match self {
            EigenBasis::Dense(q) => q.tr_mul(v),
            EigenBasis::Kron { transposed, .. } => super::kron_apply(transposed, v),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            EigenBasis::Dense(q) => q.clone(),
            EigenBasis::Kron { factors, .. } => {
                factors.iter().fold(DMatrix::from_element(1, 1, 1.0), |acc, q| acc.kronecker(q))
            }
        }
    }
}

/// A linear operator on symmetric matrices that is diagonal in an eigenbasis.
#[derive(Debug, Clone)]
pub struct FrechetKernel {
    basis: EigenBasis,
    weights: DMatrix<f64>,
}

impl FrechetKernel {
    pub fn new(basis: EigenBasis, weights: DMatrix<f64>) -> Self {
        debug_assert_eq!(basis.dim(), weights.nrows());
        FrechetKernel { basis, weights }
    }

    /// Log kernel from the eigenvalues `λ` of an SPD matrix.
    pub fn log_from_eigen(values: &[f64], basis: EigenBasis) -> Self {
        let n = values.len();
        let w = DMatrix::from_fn(n, n, |i, j| log_divided_difference(values[i], values[j]));
        FrechetKernel::new(basis, w)
    }

    /// Exp kernel from the eigenvalues `ω` of a symmetric matrix.
    pub fn exp_from_eigen(log_values: &[f64], basis: EigenBasis) -> Self {
        let n = log_values.len();
        let w = DMatrix::from_fn(n, n, |i, j| exp_divided_difference(log_values[i], log_values[j]));
        FrechetKernel::new(basis, w)
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn basis(&self) -> &EigenBasis {
        &self.basis
    }

    /// Pair weights in the eigenbasis.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Kernel applied to an `n × n` matrix (the matrix form of `K vec B`).
    pub fn apply(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let rotated = self.basis.to_eigen(b);
        self.basis.from_eigen(&rotated.component_mul(&self.weights))
    }

    pub fn apply_sym(&self, b: &SymMatrix) -> SymMatrix {
        SymMatrix::symmetrize(&self.apply(b.matrix())).expect("kernel output is square")
    }

    /// Kernel applied in vec-space.
    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let b = DMatrix::from_column_slice(n, n, v);
        self.apply(&b).as_slice().to_vec()
    }

    /// Operator with reciprocal weights on the same basis.
    pub fn inverse(&self) -> Self {
        FrechetKernel::new(self.basis.clone(), self.weights.map(|w| 1.0 / w))
    }

    /// Dense `n² × n²` matrix, only for `n ≤ DENSE_KERNEL_LIMIT`.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let n = self.dim();
        if n > DENSE_KERNEL_LIMIT {
            return Err(Error::DimensionOverflow {
                what: "dense Fréchet kernel",
                requested: n,
                limit: DENSE_KERNEL_LIMIT,
            });
        }
        let q = self.basis.to_dense();
        let qq = q.kronecker(&q);
        let mut scaled = qq.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.weights.as_slice()[k];
        }
        Ok(scaled * qq.transpose())
    }
}

/// `H = ∫₀¹ [t(Θ−I)+I]⁻¹ ⊗ [t(Θ−I)+I]⁻¹ dt` in eigen form.
pub fn frechet_log_kernel(theta: &SymMatrix) -> Result<FrechetKernel> {
    let e = spd_eigen(theta)?;
    Ok(FrechetKernel::log_from_eigen(e.values.as_slice(), EigenBasis::Dense(e.vectors)))
}

/// `Ψ₁ = ∫₀¹ e^{tΩ} ⊗ e^{(1−t)Ω} dt` in eigen form.
pub fn frechet_exp_kernel(omega: &SymMatrix) -> FrechetKernel {
    let e = sym_eigen(omega);
    FrechetKernel::exp_from_eigen(e.values.as_slice(), EigenBasis::Dense(e.vectors))
}

/// `(log a − log b)/(a − b)`, symmetric in its arguments.
pub fn log_divided_difference(a: f64, b: f64) -> f64 {
    let s = a + b;
    if (a - b).abs() <= CONFLUENT_TOL * a.max(b) {
        return 2.0 / s;
    }
    // (log a − log b)/(a − b) = (2/(a+b)) · atanh(r)/r with r = (a−b)/(a+b).
    let r = (a - b) / s;
    2.0 / s * r.atanh() / r
}

/// `(eˣ − eʸ)/(x − y)`, symmetric in its arguments.
pub fn exp_divided_difference(x: f64, y: f64) -> f64 {
    let m = 0.5 * (x + y);
    let h = 0.5 * (x - y);
    let (ex, ey) = (x.exp(), y.exp());
    if (ex - ey).abs() <= CONFLUENT_TOL * ex.max(ey) {
        return m.exp() * (1.0 + h * h / 6.0);
    }
    m.exp() * h.sinh() / h
}

/// Second divided difference `exp[x, y, z]`.
pub fn exp_second_divided_difference(x: f64, y: f64, z: f64) -> f64 {
    let mut v = [x, y, z];
    v.sort_by(f64::total_cmp);
    let spread = v[2] - v[0];
    let m = (v[0] + v[1] + v[2]) / 3.0;
    if spread < 1e-5 {
        let d2: f64 = v.iter().map(|t| (t - m) * (t - m)).sum();
        return m.exp() * (0.5 + d2 / 48.0);
    }
    (exp_divided_difference(v[2], v[1]) - exp_divided_difference(v[1], v[0])) / spread
}

/// Second Fréchet derivative of `exp` at `Ω = Q diag(ω) Q'`, expressed in
/// the eigenbasis: given `Ã = Q'AQ` and `B̃ = Q'BQ`, returns `Q' d²exp[A,B] Q`.
pub fn exp_second_frechet_eigen(log_values: &[f64], a_tilde: &DMatrix<f64>, b_tilde: &DMatrix<f64>) -> DMatrix<f64> {
    let n = log_values.len();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let mut s = 0.0;
            for m in 0..n {
                let f = exp_second_divided_difference(log_values[i], log_values[m], log_values[j]);
                s += f * (a_tilde[(i, m)] * b_tilde[(m, j)] + b_tilde[(i, m)] * a_tilde[(m, j)]);
            }
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_argument_gives_identity_operator() {
        let h = frechet_log_kernel(&SymMatrix::identity(3)).unwrap();
        assert!(h.weights().iter().all(|&w| (w - 1.0).abs() < 1e-15));
        let p = frechet_exp_kernel(&SymMatrix::zeros(3));
        assert!(p.weights().iter().all(|&w| (w - 1.0).abs() < 1e-15));
    }

    #[test]
    fn repeated_eigenvalue_limit() {
        let h = frechet_log_kernel(&SymMatrix::from_diagonal(&[2.0, 2.0])).unwrap();
        assert!(h.weights().iter().all(|&w| (w - 0.5).abs() < 1e-15));
    }

    #[test]
    fn confluent_branch_is_continuous() {
        for &lam in &[0.01f64, 1.0, 37.0] {
            let near = lam * (1.0 + 1e-6);
            let two_sided = (near.ln() - lam.ln()) / (near - lam);
            let ours = log_divided_difference(lam, near);
            assert!((ours - two_sided).abs() / two_sided < 1e-6);
            let limit = log_divided_difference(lam, lam * (1.0 + 1e-9));
            assert!((limit - 1.0 / lam).abs() * lam < 1e-6);

            let (x, y) = (lam.ln(), near.ln());
            let e_two_sided = (near - lam) / (y - x);
            assert!((exp_divided_difference(x, y) - e_two_sided).abs() / e_two_sided < 1e-6);
        }
    }

    #[test]
    fn second_divided_difference_matches_definition() {
        let (x, y, z): (f64, f64, f64) = (0.3, -0.7, 1.1);
        let f_xy = (x.exp() - y.exp()) / (x - y);
        let f_yz = (y.exp() - z.exp()) / (y - z);
        let direct = (f_xy - f_yz) / (x - z);
        assert!((exp_second_divided_difference(x, y, z) - direct).abs() < 1e-12);
        // All arguments equal: exp(x)/2.
        assert!((exp_second_divided_difference(0.4, 0.4, 0.4) - 0.4f64.exp() / 2.0).abs() < 1e-15);
        // Just above the series threshold, against a high-order series.
        let (x, y, z) = (0.2, 0.2 + 2e-5, 0.2 - 1e-5);
        let m: f64 = (x + y + z) / 3.0;
        let d = [x - m, y - m, z - m];
        let p2: f64 = d.iter().map(|t| t * t).sum();
        let p3: f64 = d.iter().map(|t| t * t * t).sum();
        let series = m.exp() * (0.5 + p2 / 48.0 + p3 / 360.0);
        assert!((exp_second_divided_difference(x, y, z) - series).abs() < 1e-10);
    }
}

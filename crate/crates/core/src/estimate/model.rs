//! Likelihood, score and Hessians of the Gaussian quasi-likelihood.
//!
//! `Θ(θ) = exp(Ω(θ))` factors as `⊗ exp(Ω_j)`, so its eigenbasis is the
//! Kronecker product of the factor eigenbases and its log-eigenvalues are
//! sums of factor log-eigenvalues. All evaluations rotate `M_T` into that
//! basis once, after which `Θ`, `Θ⁻¹` and `Ψ₁` are diagonal.

use nalgebra::{DMatrix, DVector};

use super::SampleStats;
use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::matcore::kernel::{exp_divided_difference, exp_second_frechet_eigen};
use crate::matcore::{spd_eigen, sym_eigen, EigenBasis, DENSE_KERNEL_LIMIT};

/// Spectral form of `Θ(θ)`.
#[derive(Debug, Clone)]
pub struct ModelPoint {
    basis: EigenBasis,
    omega: Vec<f64>,
    factor_eigs: Vec<(DVector<f64>, DMatrix<f64>)>,
}

impl ModelPoint {
    pub fn new(design: &DesignMatrix, theta: &[f64]) -> Result<Self> {
        let logs = design.factor_logs(theta)?;
        let factor_eigs: Vec<(DVector<f64>, DMatrix<f64>)> = logs
            .iter()
            .map(|l| {
                let e = sym_eigen(l);
                (e.values, e.vectors)
            })
            .collect();
        let mut omega = vec![0.0];
        for (vals, _) in &factor_eigs {
            omega = omega.iter().flat_map(|a| vals.iter().map(move |b| a + b)).collect();
        }
        let basis = EigenBasis::kron(factor_eigs.iter().map(|(_, q)| q.clone()).collect());
        Ok(ModelPoint { basis, omega, factor_eigs })
    }

    pub fn basis(&self) -> &EigenBasis {
        &self.basis
    }

    /// Eigenvalues of `Ω(θ)` in basis order.
    pub fn log_eigenvalues(&self) -> &[f64] {
        &self.omega
    }

    pub fn log_det(&self) -> f64 {
        self.omega.iter().sum()
    }

    /// Largest implied absolute correlation over all factors.
    pub fn max_factor_correlation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (vals, q) in &self.factor_eigs {
            let mut scaled = q.clone();
            for (k, mut col) in scaled.column_iter_mut().enumerate() {
                col *= vals[k].exp();
            }
            let f = scaled * q.transpose();
            for i in 0..f.nrows() {
                for j in 0..i {
                    worst = worst.max(f[(i, j)].abs() / (f[(i, i)] * f[(j, j)]).sqrt());
                }
            }
        }
        worst
    }

    fn psi_weights(&self) -> DMatrix<f64> {
        let n = self.omega.len();
        DMatrix::from_fn(n, n, |i, j| exp_divided_difference(self.omega[i], self.omega[j]))
    }
}

/// Gaussian quasi-log-likelihood evaluated through the factor spectra.
pub fn gaussian_loglik(design: &DesignMatrix, theta: &[f64], stats: &SampleStats) -> Result<f64> {
    let point = ModelPoint::new(design, theta)?;
    Ok(loglik_at(&point, stats))
}

fn loglik_at(point: &ModelPoint, stats: &SampleStats) -> f64 {
    let m_tilde = point.basis.to_eigen(stats.m.matrix());
    let quad: f64 = point.omega.iter().enumerate().map(|(i, w)| m_tilde[(i, i)] * (-w).exp()).sum();
    let (t, n) = (stats.t as f64, stats.n() as f64);
    -0.5 * t * n * (2.0 * std::f64::consts::PI).ln() - 0.5 * t * (stats.log_det_d + point.log_det() + quad)
}

/// `(T/2) E'D_n' vec Ψ₁[Θ⁻¹MΘ⁻¹ − Θ⁻¹]`.
pub fn score(design: &DesignMatrix, theta: &[f64], stats: &SampleStats) -> Result<DVector<f64>> {
    let point = ModelPoint::new(design, theta)?;
    Ok(score_at(design, &point, stats))
}

fn score_at(design: &DesignMatrix, point: &ModelPoint, stats: &SampleStats) -> DVector<f64> {
    let inv: Vec<f64> = point.omega.iter().map(|w| (-w).exp()).collect();
    let m_tilde = point.basis.to_eigen(stats.m.matrix());
    let w = point.psi_weights();
    let n = inv.len();
    let g = DMatrix::from_fn(n, n, |i, j| {
        let base = inv[i] * m_tilde[(i, j)] * inv[j] - if i == j { inv[i] } else { 0.0 };
        base * w[(i, j)]
    });
    design.adjoint(&point.basis.from_eigen(&g)) * (0.5 * stats.t as f64)
}

/// `−½ Σ_{ij} c_ij B̃_k[i,j] B̃_l[i,j]` with `B̃_k` the design columns rotated
/// into `basis`.
fn weighted_column_gram(design: &DesignMatrix, basis: &EigenBasis, c: &DMatrix<f64>) -> DMatrix<f64> {
    let rotated: Vec<DMatrix<f64>> = (0..design.q()).map(|k| design.column_in_basis(k, basis)).collect();
    let weighted: Vec<DMatrix<f64>> = rotated.iter().map(|b| b.component_mul(c)).collect();
    let q = design.q();
    let mut out = DMatrix::zeros(q, q);
    for k in 0..q {
        for l in k..q {
            let v = -0.5 * weighted[k].dot(&rotated[l]);
            out[(k, l)] = v;
            out[(l, k)] = v;
        }
    }
    out
}

/// `Υ̂_T = −½ E'D_n' Ψ₁(log M)(M⁻¹ ⊗ M⁻¹) Ψ₁(log M) D_n E`.
pub fn expected_hessian_hat(design: &DesignMatrix, m: &crate::matcore::SymMatrix) -> Result<DMatrix<f64>> {
    let e = spd_eigen(m)?;
    let lam = e.values.as_slice();
    let logs: Vec<f64> = lam.iter().map(|l| l.ln()).collect();
    let n = lam.len();
    let c = DMatrix::from_fn(n, n, |i, j| {
        let w = exp_divided_difference(logs[i], logs[j]);
        w * w / (lam[i] * lam[j])
    });
    Ok(weighted_column_gram(design, &EigenBasis::Dense(e.vectors), &c))
}

/// Expected Hessian per observation at `Θ(θ)`, the Fisher-scoring metric.
pub fn expected_hessian_at(design: &DesignMatrix, theta: &[f64]) -> Result<DMatrix<f64>> {
    let point = ModelPoint::new(design, theta)?;
    Ok(expected_hessian_point(design, &point))
}

fn expected_hessian_point(design: &DesignMatrix, point: &ModelPoint) -> DMatrix<f64> {
    let w = point.psi_weights();
    let om = &point.omega;
    let c = DMatrix::from_fn(om.len(), om.len(), |i, j| w[(i, j)] * w[(i, j)] * (-om[i] - om[j]).exp());
    weighted_column_gram(design, &point.basis, &c)
}

/// Exact Hessian of the quasi-log-likelihood.
pub fn full_hessian(design: &DesignMatrix, theta: &[f64], stats: &SampleStats) -> Result<DMatrix<f64>> {
    let n = design.n();
    if n > DENSE_KERNEL_LIMIT {
        return Err(Error::DimensionOverflow { what: "full Hessian", requested: n, limit: DENSE_KERNEL_LIMIT });
    }
    let point = ModelPoint::new(design, theta)?;
    let om = &point.omega;
    let inv: Vec<f64> = om.iter().map(|w| (-w).exp()).collect();
    let m_tilde = point.basis.to_eigen(stats.m.matrix());
    let w = point.psi_weights();
    let p = DMatrix::from_fn(n, n, |i, j| inv[i] * m_tilde[(i, j)] * inv[j]);
    let g = DMatrix::from_fn(n, n, |i, j| p[(i, j)] - if i == j { inv[i] } else { 0.0 });
    let q = design.q();
    let b: Vec<DMatrix<f64>> = (0..q).map(|k| design.column_in_basis(k, &point.basis)).collect();
    let d_theta: Vec<DMatrix<f64>> = b.iter().map(|bk| bk.component_mul(&w)).collect();
    let d_g: Vec<DMatrix<f64>> = d_theta
        .iter()
        .map(|tl| {
            let a = DMatrix::from_fn(n, n, |i, j| inv[i] * tl[(i, j)]);
            let lp = &a * &p;
            let scaled = DMatrix::from_fn(n, n, |i, j| tl[(i, j)] * inv[i] * inv[j]);
            -(&lp + lp.transpose()) + scaled
        })
        .collect();
    let half_t = 0.5 * stats.t as f64;
    let mut h = DMatrix::zeros(q, q);
    for k in 0..q {
        for l in k..q {
            let second = exp_second_frechet_eigen(om, &b[k], &b[l]);
            let v = half_t * (d_g[l].dot(&d_theta[k]) + g.dot(&second));
            h[(k, l)] = v;
            h[(l, k)] = v;
        }
    }
    Ok(h)
}

pub(crate) fn loglik_point(point: &ModelPoint, stats: &SampleStats) -> f64 {
    loglik_at(point, stats)
}

pub(crate) fn score_point(design: &DesignMatrix, point: &ModelPoint, stats: &SampleStats) -> DVector<f64> {
    score_at(design, point, stats)
}

pub(crate) fn fisher_point(design: &DesignMatrix, point: &ModelPoint) -> DMatrix<f64> {
    expected_hessian_point(design, point)
}

//! Plug-in asymptotic variances, Wald and over-identification tests, and
//! delta-method inference for spectral functionals.
//!
//! The minimum-distance estimator is linear in `vech(log M_T)`, so for each
//! parameter `r` there is a symmetric `R_r` with `θ̂_r = ⟨R_r, log M_T⟩`.
//! Linearizing the logarithm gives `dθ̂_r = ⟨K_r, dM⟩` with `K_r = H[R_r]`,
//! and the plug-in variance is the sample covariance of `y_t'K_r y_t`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::estimate::{md_estimate, sample_moment_matrix, solve_spd, ReturnPanel, Weight};
use crate::matcore::{frechet_log_kernel, spd_log, sym_eigen, unvech, vech, FrechetKernel, HalfVecIndex, SymMatrix};

/// Largest `n` for which `Ŝ` is formed and inverted.
pub const OVERID_N_LIMIT: usize = 32;

/// How the fourth-moment matrix `V` is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// Sample fourth moments.
    #[default]
    Empirical,
    /// `V = 2 D_n D_n⁺ (Σ ⊗ Σ)`, valid under normality.
    Gaussian,
}

/// Plug-in asymptotic variance `Ĵ_T` of `√T(θ̂ − θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JMatrix {
    pub matrix: DMatrix<f64>,
    pub mode: VarianceMode,
}

impl JMatrix {
    /// `Ĝ(c) = c'Ĵc`.
    pub fn quadratic(&self, c: &[f64]) -> f64 {
        let c = DVector::from_column_slice(c);
        (c.transpose() * &self.matrix * &c)[(0, 0)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.matrix.row_iter().map(|r| r.iter().copied().collect()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub rejected: bool,
}

impl TestResult {
    pub fn chi_squared(statistic: f64, df: usize) -> Result<Self> {
        if df == 0 {
            return Err(Error::InvalidConfig("test has zero degrees of freedom".into()));
        }
        let statistic = statistic.max(0.0);
        let dist = ChiSquared::new(df as f64).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let p_value = dist.sf(statistic);
        Ok(TestResult { statistic, df, p_value, rejected: p_value < 0.05 })
    }
}

/// `R_r` for each parameter, so that `θ̂_r = ⟨R_r, log M⟩_F`.
pub fn md_functionals(design: &DesignMatrix, weight: &Weight) -> Result<Vec<SymMatrix>> {
    let n = design.n();
    let q = design.q();
    match weight {
        Weight::Identity => {
            let mut inv = DMatrix::identity(q, q);
            for k in 0..q {
                let col = solve_spd(design.gram(), &DVector::from_column_slice(inv.column(k).as_slice()))
                    .ok_or(Error::SingularWeight)?;
                inv.set_column(k, &col);
            }
            let halved: Vec<DMatrix<f64>> = (0..q)
                .map(|k| {
                    let b = design.column_matrix(k);
                    DMatrix::from_fn(n, n, |i, j| if i == j { b[(i, j)] } else { 0.5 * b[(i, j)] })
                })
                .collect();
            (0..q)
                .map(|r| {
                    let mut acc = DMatrix::zeros(n, n);
                    for (k, h) in halved.iter().enumerate() {
                        acc += h * inv[(r, k)];
                    }
                    SymMatrix::from_lower(acc)
                })
                .collect()
        }
        Weight::Matrix(w) => {
            let e = design.e().to_dense();
            let etw = e.tr_mul(w);
            let a = &etw * &e;
            let mut l = DMatrix::zeros(q, etw.ncols());
            for c in 0..etw.ncols() {
                let col = solve_spd(&a, &DVector::from_column_slice(etw.column(c).as_slice()))
                    .ok_or(Error::SingularWeight)?;
                l.set_column(c, &col);
            }
            let idx = HalfVecIndex::new(n);
            (0..q)
                .map(|r| {
                    let mut m = DMatrix::zeros(n, n);
                    for (p, (i, j)) in idx.pairs().enumerate() {
                        let v = if i == j { l[(r, p)] } else { 0.5 * l[(r, p)] };
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                    SymMatrix::from_lower(m)
                })
                .collect()
        }
    }
}

/// `Ĵ_T` for the minimum-distance estimator with weight `W`.
pub fn jhat(panel: &ReturnPanel, design: &DesignMatrix, weight: &Weight, mode: VarianceMode) -> Result<JMatrix> {
    let m = sample_moment_matrix(panel);
    let h = frechet_log_kernel(&m)?;
    let k: Vec<DMatrix<f64>> = md_functionals(design, weight)?.iter().map(|r| h.apply(r.matrix())).collect();
    let q = k.len();
    let matrix = match mode {
        VarianceMode::Empirical => {
            let y = panel.standardized();
            let t = y.nrows();
            let mut u = DMatrix::zeros(t, q);
            for (r, kr) in k.iter().enumerate() {
                let yk = &y * kr;
                for s in 0..t {
                    u[(s, r)] = yk.row(s).dot(&y.row(s));
                }
            }
            let mean = DVector::from_iterator(q, u.column_iter().map(|c| c.mean()));
            let mut j = u.tr_mul(&u) / t as f64 - &mean * mean.transpose();
            j = (&j + j.transpose()) * 0.5;
            j
        }
        VarianceMode::Gaussian => {
            let mm = m.matrix();
            let mk: Vec<DMatrix<f64>> = k.iter().map(|kr| mm * kr).collect();
            DMatrix::from_fn(q, q, |r, s| 2.0 * (&mk[r] * &mk[s]).trace())
        }
    };
    Ok(JMatrix { matrix, mode })
}

/// Wald statistic `T (A'θ̂ − a)'(A'ĴA)⁻¹(A'θ̂ − a)` with `k` degrees of freedom.
pub fn wald_test(a_mat: &DMatrix<f64>, a: &[f64], theta: &[f64], j: &JMatrix, t: usize) -> Result<TestResult> {
    let k = a_mat.ncols();
    if a_mat.nrows() != theta.len() || a.len() != k || j.matrix.nrows() != theta.len() {
        return Err(Error::DimensionMismatch("Wald restriction shapes do not match θ".into()));
    }
    let diff = a_mat.tr_mul(&DVector::from_column_slice(theta)) - DVector::from_column_slice(a);
    let v = a_mat.transpose() * &j.matrix * a_mat;
    let sol = solve_spd(&v, &diff).ok_or(Error::SingularVariance)?;
    TestResult::chi_squared(t as f64 * diff.dot(&sol), k)
}

/// Linear map `vech X ↦ vech H[X]` for the log kernel at `M`.
fn vech_kernel_matrix(h: &FrechetKernel, n: usize) -> DMatrix<f64> {
    let len = n * (n + 1) / 2;
    let mut out = DMatrix::zeros(len, len);
    let mut unit = vec![0.0; len];
    for c in 0..len {
        unit[c] = 1.0;
        let x = unvech(n, &unit).expect("length matches");
        out.set_column(c, &vech(&h.apply_sym(&x)));
        unit[c] = 0.0;
    }
    out
}

/// `Ŝ`, the sample covariance of `vech H[y_t y_t']`; it does not depend on θ.
pub fn s_hat(panel: &ReturnPanel) -> Result<DMatrix<f64>> {
    let n = panel.n();
    if n > OVERID_N_LIMIT {
        return Err(Error::DimensionOverflow { what: "over-identification Ŝ", requested: n, limit: OVERID_N_LIMIT });
    }
    let m = sample_moment_matrix(panel);
    let h = frechet_log_kernel(&m)?;
    let hv = vech_kernel_matrix(&h, n);
    let y = panel.standardized();
    let t = y.nrows();
    let idx = HalfVecIndex::new(n);
    let pairs: Vec<(usize, usize)> = idx.pairs().collect();
    let z = DMatrix::from_fn(t, pairs.len(), |s, p| y[(s, pairs[p].0)] * y[(s, pairs[p].1)]);
    let mean = DVector::from_iterator(pairs.len(), z.column_iter().map(|c| c.mean()));
    let cov = z.tr_mul(&z) / t as f64 - &mean * mean.transpose();
    let s = &hv * cov * hv.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// `Ŝ⁻¹` with a condition-number guard.
pub fn optimal_weight(panel: &ReturnPanel, _design: &DesignMatrix) -> Result<DMatrix<f64>> {
    let s = SymMatrix::from_lower(s_hat(panel)?)?;
    let e = sym_eigen(&s);
    let (lo, hi) = (e.values[0], e.values[e.values.len() - 1]);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= 1e14) {
        return Err(Error::SingularS { condition });
    }
    if condition > 1e10 {
        log::warn!("Ŝ is ill-conditioned (condition number {condition:e})");
    }
    Ok(e.reconstruct_with(|l| 1.0 / l).into_matrix())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverIdResult {
    pub test: TestResult,
    /// `(stat − df)/√(2 df)`, asymptotically standard normal for large `df`.
    pub normalized: f64,
    pub theta: Vec<f64>,
}

/// Over-identification test of the Kronecker restriction.
pub fn overid_test(panel: &ReturnPanel, design: &DesignMatrix) -> Result<OverIdResult> {
    if panel.n() != design.n() {
        return Err(Error::DimensionMismatch(format!(
            "panel has {} columns, factorization needs {}",
            panel.n(),
            design.n()
        )));
    }
    let w = optimal_weight(panel, design)?;
    let m = sample_moment_matrix(panel);
    let est = md_estimate(&m, design, &Weight::Matrix(w.clone()))?;
    let g = vech(&spd_log(&m)?) - design.forward(&est.theta)?;
    let stat = panel.t() as f64 * (g.transpose() * &w * &g)[(0, 0)];
    let len = g.len();
    if len <= design.q() {
        return Err(Error::InvalidConfig("model is not over-identified".into()));
    }
    let df = len - design.q();
    let test = TestResult::chi_squared(stat, df)?;
    Ok(OverIdResult { normalized: (test.statistic - df as f64) / (2.0 * df as f64).sqrt(), test, theta: est.theta })
}

/// Point estimate with a delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// `value ± z·se`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.value - z * self.se, self.value + z * self.se)
    }
}

/// `√(g'Ĵg / T)`.
pub fn delta_se(gradient: &[f64], j: &JMatrix, t: usize) -> f64 {
    (j.quadratic(gradient).max(0.0) / t as f64).sqrt()
}

/// Delta method with a central-difference gradient, for arbitrary functionals.
pub fn delta_method_numeric(f: impl Fn(&[f64]) -> f64, theta: &[f64], j: &JMatrix, t: usize) -> Estimate {
    let mut grad = vec![0.0; theta.len()];
    let mut work = theta.to_vec();
    for i in 0..theta.len() {
        let h = 1e-6 * (1.0 + theta[i].abs());
        work[i] = theta[i] + h;
        let up = f(&work);
        work[i] = theta[i] - h;
        let down = f(&work);
        work[i] = theta[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    Estimate { value: f(theta), se: delta_se(&grad, j, t) }
}

fn check_binary_inputs(theta: &[f64], j: &JMatrix) -> Result<()> {
    if theta.len() < 2 {
        return Err(Error::NotBinary);
    }
    if j.matrix.shape() != (theta.len(), theta.len()) {
        return Err(Error::DimensionMismatch("Ĵ does not match θ".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    /// `Σ E ζ_j = θ₁`.
    pub mean: Estimate,
    /// `Σ var ζ_j = Σ θ_{j+1}²`.
    pub variance: Estimate,
}

/// Mean and variance of the log-eigenvalue distribution (binary case).
pub fn spectral_params(theta: &[f64], j: &JMatrix, t: usize) -> Result<SpectralParams> {
    check_binary_inputs(theta, j)?;
    let mut e1 = vec![0.0; theta.len()];
    e1[0] = 1.0;
    let mean = Estimate { value: theta[0], se: delta_se(&e1, j, t) };
    let b = &theta[1..];
    let ss: f64 = b.iter().map(|x| x * x).sum();
    if ss.sqrt() < 1e-12 {
        return Err(Error::DegenerateDirection("all off-diagonal parameters are zero"));
    }
    let norm = ss.sqrt();
    let mut c = vec![0.0; theta.len()];
    for (ci, bi) in c[1..].iter_mut().zip(b) {
        *ci = bi / norm;
    }
    let se = 2.0 * j.quadratic(&c).max(0.0).sqrt() * norm / (t as f64).sqrt();
    Ok(SpectralParams { mean, variance: Estimate { value: ss, se } })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremeLogEigs {
    pub omega_max: Estimate,
    pub omega_min: Estimate,
    /// Set when some `ρ̂_j < 0` and `|ρ̂_j|` was substituted.
    pub abs_corrected: bool,
}

/// `log(1 + tanh b)`.
fn f_upper(b: f64) -> f64 {
    std::f64::consts::LN_2 - (-2.0 * b).exp().ln_1p()
}

/// `log(1 − tanh b)`.
fn f_lower(b: f64) -> f64 {
    std::f64::consts::LN_2 - (2.0 * b).exp().ln_1p()
}

/// Largest and smallest log-eigenvalues of the implied correlation matrix.
pub fn extreme_log_eigs(theta: &[f64], j: &JMatrix, t: usize) -> Result<ExtremeLogEigs> {
    check_binary_inputs(theta, j)?;
    let b = &theta[1..];
    let abs_corrected = b.iter().any(|&x| x < 0.0);
    if abs_corrected {
        log::warn!("negative correlation estimates: using |ρ̂| in extreme eigenvalue formulas");
    }
    let mut gu = vec![0.0; theta.len()];
    let mut gl = vec![0.0; theta.len()];
    for (i, &x) in b.iter().enumerate() {
        let (a, s) = (x.abs(), if x < 0.0 { -1.0 } else { 1.0 });
        gu[i + 1] = s * 2.0 / (1.0 + (2.0 * a).exp());
        gl[i + 1] = -s * 2.0 / (1.0 + (-2.0 * a).exp());
    }
    if gu.iter().chain(&gl).all(|g| g.abs() < 1e-300) {
        return Err(Error::DegenerateDirection("extreme eigenvalue gradient vanishes"));
    }
    Ok(ExtremeLogEigs {
        omega_max: Estimate { value: b.iter().map(|x| f_upper(x.abs())).sum(), se: delta_se(&gu, j, t) },
        omega_min: Estimate { value: b.iter().map(|x| f_lower(x.abs())).sum(), se: delta_se(&gl, j, t) },
        abs_corrected,
    })
}

/// `log var(w_MV' y) = Σ −log(1 + e^{−2θ_{j+1}})` for the correlation scale.
pub fn mvp_log_variance(theta: &[f64], j: &JMatrix, t: usize) -> Result<Estimate> {
    check_binary_inputs(theta, j)?;
    let mut g = vec![0.0; theta.len()];
    let mut value = 0.0;
    for (i, &x) in theta[1..].iter().enumerate() {
        value -= (-2.0 * x).exp().ln_1p();
        g[i + 1] = 2.0 / (1.0 + (2.0 * x).exp());
    }
    Ok(Estimate { value, se: delta_se(&g, j, t) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_j(q: usize) -> JMatrix {
        JMatrix { matrix: DMatrix::identity(q, q), mode: VarianceMode::Gaussian }
    }

    #[test]
    fn spectral_example() {
        let theta = crate::design::rho_to_theta(&[0.6]).unwrap();
        let sp = spectral_params(&theta, &unit_j(2), 100).unwrap();
        assert!((sp.mean.value + 0.22314355131420976).abs() < 1e-12);
        assert!((sp.variance.value - std::f64::consts::LN_2.powi(2)).abs() < 1e-12);
        assert!(matches!(spectral_params(&[0.0, 0.0], &unit_j(2), 10), Err(Error::DegenerateDirection(_))));
    }

    #[test]
    fn extreme_example() {
        let theta = crate::design::rho_to_theta(&[0.3, 0.5]).unwrap();
        let e = extreme_log_eigs(&theta, &unit_j(3), 100).unwrap();
        assert!((e.omega_max.value - (1.3f64.ln() + 1.5f64.ln())).abs() < 1e-12);
        assert!((e.omega_min.value - (0.7f64.ln() + 0.5f64.ln())).abs() < 1e-12);
        assert!(!e.abs_corrected);
    }

    #[test]
    fn mvp_log_variance_examples() {
        let z = mvp_log_variance(&[0.0, 0.0, 0.0], &unit_j(3), 10).unwrap();
        assert!((z.value + 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        let theta = crate::design::rho_to_theta(&[0.6]).unwrap();
        let v = mvp_log_variance(&theta, &unit_j(2), 10).unwrap();
        assert!((v.value + (2.0f64 / 1.6).ln()).abs() < 1e-12);
    }

    #[test]
    fn wald_at_estimate_is_zero() {
        let a = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        let r = wald_test(&a, &[0.4], &[0.1, 0.4, 0.2], &unit_j(3), 100).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }
}

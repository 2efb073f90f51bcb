//! Minimum-distance, one-step and quasi-maximum-likelihood estimators.

mod model;
mod panel;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use model::{expected_hessian_at, expected_hessian_hat, full_hessian, gaussian_loglik, score, ModelPoint};
pub use panel::{sample_moment_matrix, ReturnPanel, SampleStats};

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::matcore::{vech, SymMatrix};

/// Which estimator produced a θ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Md,
    OneStep,
    Qmle,
}

/// Weight choice for the minimum-distance objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightChoice {
    #[default]
    Identity,
    /// `W = Ŝ⁻¹` from a preliminary identity-weighted fit.
    Optimal,
}

/// Concrete weight on vech space.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    Identity,
    Matrix(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub theta: Vec<f64>,
    pub method: Method,
    pub weight: WeightChoice,
    pub loglik: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl ThetaEstimate {
    pub fn theta_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta)
    }

    /// Fails when an iterative fit stopped without meeting its tolerance.
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::MaxIterationsExceeded { iterations: self.iterations })
        }
    }
}

/// `θ̂ = (E'WE)⁻¹E'W vech(log M_T)`.
pub fn md_estimate(m: &SymMatrix, design: &DesignMatrix, weight: &Weight) -> Result<ThetaEstimate> {
    if m.dim() != design.n() {
        return Err(Error::DimensionMismatch(format!(
            "moment matrix is {0}x{0}, design expects {1}",
            m.dim(),
            design.n()
        )));
    }
    let log_m = crate::matcore::spd_log(m)?;
    let (a, b, choice) = match weight {
        Weight::Identity => (design.gram().clone(), design.vech_adjoint(log_m.matrix()), WeightChoice::Identity),
        Weight::Matrix(w) => {
            let len = design.e().nrows();
            if w.shape() != (len, len) {
                return Err(Error::DimensionMismatch(format!("weight must be {len}x{len}")));
            }
            let e = design.e().to_dense();
            let etw = e.tr_mul(w);
            (&etw * &e, &etw * vech(&log_m), WeightChoice::Optimal)
        }
    };
    let theta = solve_spd(&a, &b).ok_or(Error::SingularWeight)?;
    Ok(ThetaEstimate {
        theta: theta.as_slice().to_vec(),
        method: Method::Md,
        weight: choice,
        loglik: None,
        iterations: 0,
        converged: true,
    })
}

/// Cholesky solve with a reciprocal-condition guard.
pub(crate) fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let sym = (a + a.transpose()) * 0.5;
    let chol = Cholesky::new(sym)?;
    let diag = chol.l().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
    if !(lo > 0.0) || (lo / hi).powi(2) < 1e-14 {
        return None;
    }
    Some(chol.solve(b))
}

/// `θ̃ = θ̂ − Υ̂_T⁻¹ score(θ̂)/T`.
pub fn one_step(design: &DesignMatrix, theta_md: &[f64], stats: &SampleStats) -> Result<ThetaEstimate> {
    let upsilon = expected_hessian_hat(design, &stats.m)?;
    let s = score(design, theta_md, stats)? / stats.t as f64;
    let step = solve_spd(&(-upsilon), &s).ok_or(Error::SingularHessian)?;
    let theta = DVector::from_column_slice(theta_md) + step;
    let loglik = gaussian_loglik(design, theta.as_slice(), stats)?;
    Ok(ThetaEstimate {
        theta: theta.as_slice().to_vec(),
        method: Method::OneStep,
        weight: WeightChoice::Identity,
        loglik: Some(loglik),
        iterations: 1,
        converged: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QmleOptions {
    /// Stop when `‖score‖_∞ / T` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Implied factor correlations must stay within `1 − rho_margin`.
    pub rho_margin: f64,
}

impl Default for QmleOptions {
    fn default() -> Self {
        QmleOptions { tol: 1e-8, max_iter: 100, rho_margin: 1e-6 }
    }
}

/// Fisher scoring on the quasi-likelihood with step halving.
///
/// Never errors on non-convergence: the best iterate is returned with
/// `converged = false`; call [`ThetaEstimate::require_converged`] to turn that
/// into [`Error::MaxIterationsExceeded`].
pub fn qmle(
    design: &DesignMatrix,
    stats: &SampleStats,
    init: Option<&[f64]>,
    opts: &QmleOptions,
) -> Result<ThetaEstimate> {
    let mut theta = match init {
        Some(t) => DVector::from_column_slice(t),
        None => md_estimate(&stats.m, design, &Weight::Identity)?.theta_vec(),
    };
    let t = stats.t as f64;
    let mut point = ModelPoint::new(design, theta.as_slice())?;
    let mut ll = model::loglik_point(&point, stats);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let s = model::score_point(design, &point, stats) / t;
        if s.amax() < opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let info = -model::fisher_point(design, &point);
        let direction = solve_spd(&info, &s).ok_or(Error::SingularHessian)?;
        let mut alpha = 1.0;
        let mut accepted = false;
        let mut stalled = false;
        for _ in 0..40 {
            let candidate = &theta + &direction * alpha;
            if let Ok(p) = ModelPoint::new(design, candidate.as_slice()) {
                if p.max_factor_correlation() < 1.0 - opts.rho_margin {
                    let cand_ll = model::loglik_point(&p, stats);
                    if cand_ll.is_finite() && cand_ll >= ll {
                        stalled = cand_ll - ll <= 4.0 * f64::EPSILON * ll.abs();
                        theta = candidate;
                        point = p;
                        ll = cand_ll;
                        accepted = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        if !accepted || stalled {
            // No ascent left at machine precision: stationary up to rounding.
            let s = model::score_point(design, &point, stats) / t;
            converged = s.amax() < opts.tol.sqrt();
            if converged || !accepted {
                break;
            }
        }
    }
    if !converged {
        log::warn!("QMLE stopped after {iterations} iterations without meeting tolerance {}", opts.tol);
    }
    Ok(ThetaEstimate {
        theta: theta.as_slice().to_vec(),
        method: Method::Qmle,
        weight: WeightChoice::Identity,
        loglik: Some(ll),
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitOptions {
    pub method: Method,
    pub weight: WeightChoice,
    pub qmle: QmleOptions,
}

/// Result of the two-step pipeline: standardize by `(μ, D)`, then fit θ.
#[derive(Debug, Clone)]
pub struct Fit {
    pub estimate: ThetaEstimate,
    pub md: ThetaEstimate,
    pub stats: SampleStats,
}

/// Standardizes the panel with its `(μ, D)` and fits θ with the chosen method.
pub fn fit(panel: &ReturnPanel, design: &DesignMatrix, opts: &FitOptions) -> Result<Fit> {
    if panel.n() != design.n() {
        return Err(Error::DimensionMismatch(format!(
            "panel has {} columns, factorization needs {}",
            panel.n(),
            design.n()
        )));
    }
    let stats = SampleStats::from_panel(panel);
    let weight = match opts.weight {
        WeightChoice::Identity => Weight::Identity,
        WeightChoice::Optimal => Weight::Matrix(crate::infer::optimal_weight(panel, design)?),
    };
    let mut md = md_estimate(&stats.m, design, &weight)?;
    md.loglik = Some(gaussian_loglik(design, &md.theta, &stats)?);
    let estimate = match opts.method {
        Method::Md => md.clone(),
        Method::OneStep => ThetaEstimate { weight: md.weight, ..one_step(design, &md.theta, &stats)? },
        Method::Qmle => ThetaEstimate { weight: md.weight, ..qmle(design, &stats, Some(&md.theta), &opts.qmle)? },
    };
    Ok(Fit { estimate, md, stats })
}

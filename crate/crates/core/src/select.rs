//! Enumeration of Kronecker factorizations and BIC model choice.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{DesignMatrix, FactorStructure, FactorizationSpec};
use crate::error::{Error, Result};
use crate::estimate::{fit, FitOptions, Method, ReturnPanel};

/// Ordered factorizations of every size in `[n, n + allow_padding_up_to]`
/// with at most `max_params` free correlation parameters.
pub fn enumerate_factorizations(n: usize, max_params: usize, allow_padding_up_to: usize) -> Vec<FactorizationSpec> {
    let mut out = Vec::new();
    for size in n..=n + allow_padding_up_to {
        let mut prefix = Vec::new();
        ordered_factorizations(size, &mut prefix, &mut |dims| {
            if let Ok(spec) = FactorizationSpec::with_pad(dims.to_vec(), size - n) {
                if spec.correlation_param_count() <= max_params {
                    out.push(spec);
                }
            }
        });
    }
    out
}

fn ordered_factorizations(rest: usize, prefix: &mut Vec<usize>, emit: &mut impl FnMut(&[usize])) {
    if rest == 1 {
        if !prefix.is_empty() {
            emit(prefix);
        }
        return;
    }
    for d in 2..=rest {
        if rest.is_multiple_of(d) {
            prefix.push(d);
            ordered_factorizations(rest / d, prefix, emit);
            prefix.pop();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCandidate {
    pub spec: FactorizationSpec,
    pub label: String,
    /// Identified parameter count, `rank(E)`.
    pub q: usize,
    pub loglik: f64,
    pub bic: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Ascending BIC; ties by smaller `q`, then dims.
    pub ranked: Vec<ModelCandidate>,
    /// `(label, reason)` for candidates whose fit failed.
    pub failures: Vec<(String, String)>,
    /// True when candidates differ in padding, making BICs not strictly comparable.
    pub mixed_padding: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectOptions {
    pub structure: FactorStructure,
    pub fit: FitOptions,
    /// Seed for pseudo-variable padding.
    pub seed: u64,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions {
            structure: FactorStructure::Correlation,
            fit: FitOptions { method: Method::Qmle, ..FitOptions::default() },
            seed: 0,
        }
    }
}

/// `−2ℓ + q log T`.
pub fn bic(loglik: f64, q: usize, t: usize) -> f64 {
    -2.0 * loglik + q as f64 * (t as f64).ln()
}

fn fit_candidate(panel: &ReturnPanel, spec: &FactorizationSpec, opts: &SelectOptions) -> Result<ModelCandidate> {
    if spec.data_dim() != panel.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} covers {} series, panel has {}",
            spec.label(),
            spec.data_dim(),
            panel.n()
        )));
    }
    let design = DesignMatrix::new(spec.clone(), opts.structure)?;
    let padded = panel.padded(spec.pad(), opts.seed);
    let f = fit(&padded, &design, &opts.fit)?;
    let loglik = f.estimate.loglik.ok_or_else(|| Error::InvalidConfig("fit produced no likelihood".into()))?;
    Ok(ModelCandidate {
        spec: spec.clone(),
        label: spec.label(),
        q: design.q(),
        loglik,
        bic: bic(loglik, design.q(), panel.t()),
        converged: f.estimate.converged,
    })
}

/// Fits every candidate and ranks by BIC.
pub fn select_model(
    panel: &ReturnPanel,
    candidates: &[FactorizationSpec],
    opts: &SelectOptions,
) -> Result<SelectionReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("no candidate factorizations".into()));
    }
    let results: Vec<(FactorizationSpec, Result<ModelCandidate>)> =
        candidates.par_iter().map(|s| (s.clone(), fit_candidate(panel, s, opts))).collect();
    let mut ranked = Vec::new();
    let mut failures = Vec::new();
    for (spec, r) in results {
        match r {
            Ok(c) => ranked.push(c),
            Err(e) => failures.push((spec.label(), e.to_string())),
        }
    }
    ranked.sort_by(rank_order);
    let mixed_padding = candidates.iter().any(|c| c.pad() != candidates[0].pad());
    Ok(SelectionReport { ranked, failures, mixed_padding })
}

fn rank_order(a: &ModelCandidate, b: &ModelCandidate) -> Ordering {
    a.bic.total_cmp(&b.bic).then(a.q.cmp(&b.q)).then_with(|| a.spec.dims().cmp(b.spec.dims()))
}

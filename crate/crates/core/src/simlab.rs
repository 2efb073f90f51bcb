//! Monte-Carlo comparison of the Kronecker estimator with the sample
//! covariance matrix: PRIAL in Frobenius and precision loss, and the
//! out-of-sample variance ratio of minimum-variance portfolios.
//!
//! Replication `r` draws from its own ChaCha stream `(seed, r)`, so results do
//! not depend on how replications are scheduled.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{theta_to_factors, DesignMatrix, FactorStructure, FactorizationSpec, KroneckerCorrelation};
use crate::error::{Error, Result};
use crate::estimate::{md_estimate, one_step, qmle, Method, QmleOptions, SampleStats, Weight};
use crate::matcore::{spd_inverse, SymMatrix};
use crate::portfolio::mvp_weights_dense;

/// Schema tag written into every replication record.
pub const RECORD_SCHEMA: &str = "kroncov-sim/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dgp {
    /// `Σ = ⊗ [[1, ρ_j], [ρ_j, 1]]` with `ρ_j ~ U(0, 1)`.
    KroneckerTrue,
    /// Diagonal `Σ` with log-normal entries of mean 1 and variance `alpha2`.
    LognormalDiag { alpha2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dgp: Dgp,
    pub n: usize,
    pub t: usize,
    pub replications: usize,
    pub seed: u64,
    #[serde(default = "default_method")]
    pub method: Method,
}

fn default_method() -> Method {
    Method::Qmle
}

impl SimConfig {
    pub fn new(dgp: Dgp, n: usize, t: usize, replications: usize, seed: u64) -> Self {
        SimConfig { dgp, n, t, replications, seed, method: Method::Qmle }
    }

    fn validate(&self) -> Result<usize> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be ≥ 1".into()));
        }
        if self.t < 2 {
            return Err(Error::InvalidConfig("T must be ≥ 2".into()));
        }
        if let Dgp::LognormalDiag { alpha2 } = self.dgp {
            if !(alpha2 > 0.0) {
                return Err(Error::InvalidConfig("α² must be positive".into()));
            }
        }
        if self.n < 2 || !self.n.is_power_of_two() {
            return Err(Error::InvalidConfig(format!("n = {} is not a power of two", self.n)));
        }
        Ok(self.n.trailing_zeros() as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub schema: String,
    pub rep: usize,
    pub prial1: Option<f64>,
    pub prial2: Option<f64>,
    pub vr: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: SimConfig,
    pub records: Vec<ReplicationRecord>,
    pub median_prial1: Option<f64>,
    pub median_prial2: Option<f64>,
    pub median_vr: Option<f64>,
    pub completed: usize,
    pub skipped: usize,
    /// Wall-clock time; not serialized so reports stay reproducible.
    #[serde(skip)]
    pub runtime_secs: f64,
}

/// Per-replication random stream.
pub fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

/// Binary correlation factors with off-diagonals drawn from `U(0, 1)`;
/// returns the factors and `θ₀` in the binary correlation parameterization.
pub fn gen_kronecker_dgp(v: usize, rng: &mut impl Rng) -> (KroneckerCorrelation, Vec<f64>) {
    let rho: Vec<f64> = (0..v).map(|_| rng.random_range(0.0..1.0)).collect();
    let factors = crate::design::binary_correlation(&rho).expect("uniform draws lie in [0, 1)");
    let theta = crate::design::rho_to_theta(&rho).expect("uniform draws lie in [0, 1)");
    (factors, theta)
}

/// Log-normal diagonal with mean 1 and variance `alpha2`.
pub fn gen_lognormal_diag_dgp(n: usize, alpha2: f64, rng: &mut impl Rng) -> Vec<f64> {
    let s2 = alpha2.ln_1p();
    let (m, s) = (-0.5 * s2, s2.sqrt());
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            (m + s * z).exp()
        })
        .collect()
}

/// `1 − ‖Σ̂ − Σ‖²_F / ‖Σ̃ − Σ‖²_F`, or the same on inverses.
pub fn prial(estimate: &SymMatrix, sample: &SymMatrix, truth: &SymMatrix, inverse: bool) -> Result<f64> {
    let (e, s, t) = if inverse {
        let s = spd_inverse(sample).map_err(|_| Error::SingularSampleCov)?;
        (spd_inverse(estimate)?, s, spd_inverse(truth)?)
    } else {
        (estimate.clone(), sample.clone(), truth.clone())
    };
    let num = (e.matrix() - t.matrix()).norm_squared();
    let den = (s.matrix() - t.matrix()).norm_squared();
    Ok(1.0 - num / den)
}

/// Ratio of out-of-sample MVP variances, structured over sample.
pub fn variance_ratio(estimate: &SymMatrix, sample: &SymMatrix, holdout: &DMatrix<f64>) -> f64 {
    let w_hat = robust_weights(estimate);
    let w_tilde = robust_weights(sample);
    holdout_variance(&w_hat, holdout) / holdout_variance(&w_tilde, holdout)
}

fn robust_weights(sigma: &SymMatrix) -> DVector<f64> {
    if let Ok(m) = mvp_weights_dense(sigma) {
        return m.weights;
    }
    let n = sigma.dim();
    let lambda = 1e-8 * sigma.trace() / n as f64;
    let ridged = SymMatrix::symmetrize(&(sigma.matrix() + DMatrix::identity(n, n) * lambda)).expect("square");
    mvp_weights_dense(&ridged).map(|m| m.weights).unwrap_or_else(|_| DVector::from_element(n, 1.0 / n as f64))
}

fn holdout_variance(w: &DVector<f64>, x: &DMatrix<f64>) -> f64 {
    let r = x * w;
    let mean = r.mean();
    r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / r.len() as f64
}

/// `T × n` draws `x_t = Σ^{1/2} z_t`, with the square root given factorwise
/// or as a diagonal.
fn draw(root: &Root, t: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = root.dim();
    let z = DMatrix::<f64>::from_fn(n, t, |_, _| StandardNormal.sample(rng));
    let x = match root {
        Root::Kron(f) => crate::matcore::kron_apply_columns(f, &z),
        Root::Diag(d) => DMatrix::from_fn(n, t, |i, s| d[i] * z[(i, s)]),
    };
    x.transpose()
}

enum Root {
    Kron(Vec<DMatrix<f64>>),
    Diag(Vec<f64>),
}

impl Root {
    fn dim(&self) -> usize {
        match self {
            Root::Kron(f) => f.iter().map(|m| m.nrows()).product(),
            Root::Diag(d) => d.len(),
        }
    }
}

/// Runs one replication; failures are recorded rather than propagated.
pub fn run_replication(config: &SimConfig, rep: usize) -> ReplicationRecord {
    let mut record = ReplicationRecord {
        schema: RECORD_SCHEMA.into(),
        rep,
        prial1: None,
        prial2: None,
        vr: None,
        converged: false,
        error: None,
    };
    if let Err(e) = replicate(config, rep, &mut record) {
        record.error = Some(e.to_string());
    }
    record
}

fn replicate(config: &SimConfig, rep: usize, record: &mut ReplicationRecord) -> Result<()> {
    let v = config.validate()?;
    let mut rng = replication_rng(config.seed, rep);
    let (truth, root) = match config.dgp {
        Dgp::KroneckerTrue => {
            let (factors, _) = gen_kronecker_dgp(v, &mut rng);
            let roots = factors
                .factors()
                .iter()
                .map(|f| crate::matcore::spd_eigen(f).map(|e| e.reconstruct_with(f64::sqrt).into_matrix()))
                .collect::<Result<Vec<_>>>()?;
            (factors.materialize()?, Root::Kron(roots))
        }
        Dgp::LognormalDiag { alpha2 } => {
            let d = gen_lognormal_diag_dgp(config.n, alpha2, &mut rng);
            (SymMatrix::from_diagonal(&d), Root::Diag(d.iter().map(|x| x.sqrt()).collect()))
        }
    };
    let x = draw(&root, config.t, &mut rng);
    let holdout = draw(&root, config.t, &mut rng);
    let sample = SymMatrix::symmetrize(&(x.tr_mul(&x) / config.t as f64))?;

    let design = DesignMatrix::new(FactorizationSpec::binary(v)?, FactorStructure::Covariance)?;
    let stats = SampleStats::from_moment(sample.clone(), config.t);
    let md = md_estimate(&stats.m, &design, &Weight::Identity)?;
    let est = match config.method {
        Method::Md => md,
        Method::OneStep => one_step(&design, &md.theta, &stats)?,
        Method::Qmle => qmle(&design, &stats, Some(&md.theta), &QmleOptions::default())?,
    };
    record.converged = est.converged;
    let sigma_hat = theta_to_factors(&est.theta, &design)?.materialize()?;

    record.prial1 = Some(prial(&sigma_hat, &sample, &truth, false)?);
    record.prial2 = match prial(&sigma_hat, &sample, &truth, true) {
        Ok(p) => Some(p),
        Err(Error::SingularSampleCov) => None,
        Err(e) => return Err(e),
    };
    record.vr = Some(variance_ratio(&sigma_hat, &sample, &holdout));
    Ok(())
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

fn summarize(config: &SimConfig, mut records: Vec<ReplicationRecord>, start: Instant) -> SimResult {
    records.sort_by_key(|r| r.rep);
    let ok: Vec<&ReplicationRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    SimResult {
        median_prial1: median(ok.iter().filter_map(|r| r.prial1).collect()),
        median_prial2: median(ok.iter().filter_map(|r| r.prial2).collect()),
        median_vr: median(ok.iter().filter_map(|r| r.vr).collect()),
        completed: ok.len(),
        skipped: records.len() - ok.len(),
        runtime_secs: start.elapsed().as_secs_f64(),
        config: config.clone(),
        records,
    }
}

/// Runs every replication in parallel and aggregates medians.
pub fn run_experiment(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let start = Instant::now();
    let records: Vec<ReplicationRecord> =
        (0..config.replications).into_par_iter().map(|r| run_replication(config, r)).collect();
    Ok(summarize(config, records, start))
}

/// Like [`run_experiment`], streaming records to a JSON-lines file. Records
/// already present in the file are reused, so an interrupted run resumes.
pub fn run_experiment_resumable(config: &SimConfig, path: &Path) -> Result<SimResult> {
    config.validate()?;
    let start = Instant::now();
    let mut done: Vec<ReplicationRecord> = Vec::new();
    if path.exists() {
        let file = File::open(path).map_err(|e| Error::Io(e.to_string()))?;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            // A torn final line from an interrupted run is simply recomputed.
            if let Ok(rec) = serde_json::from_str::<ReplicationRecord>(&line) {
                if rec.schema == RECORD_SCHEMA && rec.rep < config.replications {
                    done.push(rec);
                }
            }
        }
    }
    done.sort_by_key(|r| r.rep);
    done.dedup_by_key(|r| r.rep);
    let have: std::collections::HashSet<usize> = done.iter().map(|r| r.rep).collect();
    let missing: Vec<usize> = (0..config.replications).filter(|r| !have.contains(r)).collect();

    let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::Io(e.to_string()))?;
    let sink = std::sync::Mutex::new(file);
    let fresh: Vec<ReplicationRecord> = missing
        .into_par_iter()
        .map(|r| {
            let rec = run_replication(config, r);
            let line = serde_json::to_string(&rec).expect("record serializes");
            let mut f = sink.lock().expect("sink lock");
            // Write failures surface on the next resume as missing records.
            let _ = writeln!(f, "{line}");
            rec
        })
        .collect();
    done.extend(fresh);
    Ok(summarize(config, done, start))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prial_endpoints() {
        let truth = SymMatrix::identity(3);
        let sample = SymMatrix::from_diagonal(&[1.5, 0.7, 1.1]);
        assert_eq!(prial(&truth, &sample, &truth, false).unwrap(), 1.0);
        assert_eq!(prial(&sample, &sample, &truth, false).unwrap(), 0.0);
        assert_eq!(prial(&sample, &sample, &truth, true).unwrap(), 0.0);
    }

    #[test]
    fn variance_ratio_of_identical_estimates() {
        let s = SymMatrix::from_diagonal(&[1.0, 2.0]);
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, 2.0, 0.5, 0.5]);
        assert_eq!(variance_ratio(&s, &s, &x), 1.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = SimConfig::new(Dgp::KroneckerTrue, 8, 50, 3, 9);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.completed, 3);
    }

    #[test]
    fn lognormal_limit() {
        let mut rng = replication_rng(1, 0);
        let d = gen_lognormal_diag_dgp(100, 1e-12, &mut rng);
        assert!(d.iter().all(|x| (x - 1.0).abs() < 1e-5));
    }

    #[test]
    fn qmle_converges_near_unit_correlation() {
        let cfg = SimConfig::new(Dgp::KroneckerTrue, 16, 300, 40, 7);
        let res = run_experiment(&cfg).unwrap();
        assert!(res.records.iter().all(|r| r.converged && r.error.is_none()));
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(run_experiment(&SimConfig::new(Dgp::KroneckerTrue, 12, 50, 1, 0)).is_err());
    }
}

//! Subcommand bodies; each returns a serializable result.

use std::path::Path;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use kroncov::design::{theta_to_rho, DesignMatrix, FactorStructure, FactorizationSpec};
use kroncov::estimate::{fit, FitOptions, ReturnPanel, ThetaEstimate, Weight};
use kroncov::infer::{
    extreme_log_eigs, jhat, mvp_log_variance, overid_test, spectral_params, Estimate, ExtremeLogEigs, OverIdResult,
    SpectralParams,
};
use kroncov::portfolio::{rolling_backtest, BacktestConfig, BacktestReport, KroneckerEstimator};
use kroncov::select::{bic, enumerate_factorizations, select_model, ModelCandidate, SelectOptions, SelectionReport};
use kroncov::simlab::{run_experiment, run_experiment_resumable, Dgp, SimConfig, SimResult};

use crate::args::{BacktestArgs, DgpArg, FitArgs, InferArgs, ModelArgs, OverIdArgs, SelectArgs, SimulateArgs};
use crate::error::Failure;
use crate::ingest::{read_path, CsvOptions};
use crate::manifest::InputDigest;

/// Loaded input with its digest.
pub struct Loaded {
    pub panel: ReturnPanel,
    pub digest: InputDigest,
    pub dropped_rows: usize,
}

pub fn load(data: &crate::args::DataArgs) -> Result<Loaded, Failure> {
    if !data.delimiter.is_ascii() {
        return Err(Failure::Usage(format!("delimiter {:?} is not ASCII", data.delimiter)));
    }
    let opts = CsvOptions { delimiter: data.delimiter as u8, na_policy: data.na_policy };
    let (csv, bytes) = read_path(&data.input, &opts)?;
    let panel = ReturnPanel::new(csv.data, csv.names)?;
    Ok(Loaded {
        panel,
        digest: InputDigest::new(&data.input.display().to_string(), &bytes),
        dropped_rows: csv.dropped_rows,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpecInfo {
    pub label: String,
    pub dims: Vec<usize>,
    pub pad: usize,
    pub series: usize,
    pub structure: FactorStructure,
}

impl SpecInfo {
    fn new(spec: &FactorizationSpec, structure: FactorStructure) -> Self {
        SpecInfo {
            label: spec.label(),
            dims: spec.dims().to_vec(),
            pad: spec.pad(),
            series: spec.data_dim(),
            structure,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub spec: SpecInfo,
    pub t: usize,
    pub q: usize,
    pub estimate: ThetaEstimate,
    /// Factor correlations, for binary correlation designs.
    pub rho: Option<Vec<f64>>,
    pub bic: Option<f64>,
    pub dropped_rows: usize,
    /// Present when the factorization was chosen by BIC.
    pub selection: Option<SelectionReport>,
}

struct Fitted {
    result: FitResult,
    design: DesignMatrix,
    panel: ReturnPanel,
}

fn resolve_spec(
    panel: &ReturnPanel,
    model: &ModelArgs,
    seed: u64,
) -> Result<(FactorizationSpec, Option<SelectionReport>), Failure> {
    if let Some(dims) = &model.dims {
        return Ok((FactorizationSpec::for_data(dims.0.clone(), panel.n())?, None));
    }
    let candidates = enumerate_factorizations(panel.n(), model.max_params, model.max_pad);
    if candidates.is_empty() {
        return Err(Failure::Usage(format!(
            "no factorization of {} series within {} parameters and padding {}",
            panel.n(),
            model.max_params,
            model.max_pad
        )));
    }
    let opts = SelectOptions {
        structure: model.structure.into(),
        fit: FitOptions { method: model.estimator.into(), weight: model.weight.into(), ..FitOptions::default() },
        seed,
    };
    let report = select_model(panel, &candidates, &opts)?;
    let best = report.ranked.first().ok_or_else(|| Failure::Numeric("every candidate fit failed".into()))?;
    Ok((best.spec.clone(), Some(report)))
}

fn fit_model(loaded: &Loaded, model: &ModelArgs, seed: u64) -> Result<Fitted, Failure> {
    let (spec, selection) = resolve_spec(&loaded.panel, model, seed)?;
    let structure: FactorStructure = model.structure.into();
    let design = DesignMatrix::new(spec.clone(), structure)?;
    let panel = loaded.panel.padded(spec.pad(), seed);
    let opts = FitOptions { method: model.estimator.into(), weight: model.weight.into(), ..FitOptions::default() };
    let f = fit(&panel, &design, &opts)?;
    let rho = design.is_binary_correlation().then(|| theta_to_rho(&f.estimate.theta));
    let result = FitResult {
        spec: SpecInfo::new(&spec, structure),
        t: panel.t(),
        q: design.q(),
        bic: f.estimate.loglik.map(|ll| bic(ll, design.q(), panel.t())),
        estimate: f.estimate,
        rho,
        dropped_rows: loaded.dropped_rows,
        selection,
    };
    Ok(Fitted { result, design, panel })
}

pub fn cmd_fit(args: &FitArgs, seed: u64) -> Result<(FitResult, Vec<InputDigest>), Failure> {
    let loaded = load(&args.data)?;
    let fitted = fit_model(&loaded, &args.model, seed)?;
    Ok((fitted.result, vec![loaded.digest]))
}

#[derive(Debug, Clone, Serialize)]
pub struct Interval {
    pub estimate: Estimate,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    fn new(estimate: Estimate, z: f64) -> Self {
        let (lower, upper) = estimate.interval(z);
        Interval { estimate, lower, upper }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InferResult {
    pub fit: FitResult,
    pub variance: kroncov::infer::VarianceMode,
    pub level: f64,
    pub theta: Vec<Interval>,
    pub spectral_mean: Option<Interval>,
    pub spectral_variance: Option<Interval>,
    pub extreme: Option<ExtremeLogEigs>,
    pub log_mvp_variance: Option<Interval>,
    pub notes: Vec<String>,
}

pub fn cmd_infer(args: &InferArgs, seed: u64) -> Result<(InferResult, Vec<InputDigest>), Failure> {
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(Failure::Usage(format!("level {} is not in (0, 1)", args.level)));
    }
    let z = Normal::standard().inverse_cdf(0.5 + 0.5 * args.level);
    let loaded = load(&args.data)?;
    let fitted = fit_model(&loaded, &args.model, seed)?;
    let weight = match args.model.weight {
        crate::args::WeightArg::Identity => Weight::Identity,
        crate::args::WeightArg::Optimal => {
            Weight::Matrix(kroncov::infer::optimal_weight(&fitted.panel, &fitted.design)?)
        }
    };
    let j = jhat(&fitted.panel, &fitted.design, &weight, args.variance.into())?;
    let t = fitted.panel.t();
    let theta = &fitted.result.estimate.theta;
    let theta_ci = theta
        .iter()
        .enumerate()
        .map(|(k, &v)| Interval::new(Estimate { value: v, se: (j.matrix[(k, k)].max(0.0) / t as f64).sqrt() }, z))
        .collect();
    let mut notes = Vec::new();
    if args.model.estimator != crate::args::EstimatorArg::Md {
        notes.push("standard errors use the minimum-distance asymptotic variance".to_string());
    }
    let (mut spectral_mean, mut spectral_variance, mut extreme, mut log_mvp_variance) = (None, None, None, None);
    if fitted.design.is_binary_correlation() {
        match spectral_params(theta, &j, t) {
            Ok(SpectralParams { mean, variance }) => {
                spectral_mean = Some(Interval::new(mean, z));
                spectral_variance = Some(Interval::new(variance, z));
            }
            Err(e) => notes.push(format!("spectral parameters: {e}")),
        }
        match extreme_log_eigs(theta, &j, t) {
            Ok(e) => {
                if e.abs_corrected {
                    notes.push("negative correlation estimates replaced by absolute values".into());
                }
                extreme = Some(e);
            }
            Err(e) => notes.push(format!("extreme eigenvalues: {e}")),
        }
        log_mvp_variance = Some(Interval::new(mvp_log_variance(theta, &j, t)?, z));
    } else {
        notes.push("spectral functionals need all factor dimensions 2 and the correlation structure".into());
    }
    Ok((
        InferResult {
            fit: fitted.result,
            variance: args.variance.into(),
            level: args.level,
            theta: theta_ci,
            spectral_mean,
            spectral_variance,
            extreme,
            log_mvp_variance,
            notes,
        },
        vec![loaded.digest],
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct OverIdReport {
    pub spec: SpecInfo,
    pub t: usize,
    pub q: usize,
    #[serde(flatten)]
    pub result: OverIdResult,
}

pub fn cmd_overid(args: &OverIdArgs) -> Result<(OverIdReport, Vec<InputDigest>), Failure> {
    let loaded = load(&args.data)?;
    let spec = FactorizationSpec::new(args.dims.0.clone())?;
    let structure: FactorStructure = args.structure.into();
    let design = DesignMatrix::new(spec.clone(), structure)?;
    let result = overid_test(&loaded.panel, &design)?;
    Ok((
        OverIdReport { spec: SpecInfo::new(&spec, structure), t: loaded.panel.t(), q: design.q(), result },
        vec![loaded.digest],
    ))
}

pub fn cmd_backtest(args: &BacktestArgs, seed: u64) -> Result<(BacktestReport, Vec<InputDigest>), Failure> {
    let loaded = load(&args.data)?;
    let estimators = args
        .dims
        .iter()
        .map(|d| KroneckerEstimator {
            dims: d.0.clone(),
            structure: args.structure.into(),
            method: args.estimator.into(),
        })
        .collect();
    let config = BacktestConfig { window: args.window, horizon: args.horizon, estimators, seed };
    Ok((rolling_backtest(&loaded.panel, &config)?, vec![loaded.digest]))
}

pub fn cmd_simulate(args: &SimulateArgs, seed: u64) -> Result<(SimResult, Vec<InputDigest>), Failure> {
    let dgp = match args.dgp {
        DgpArg::Kronecker => Dgp::KroneckerTrue,
        DgpArg::Lognormal => Dgp::LognormalDiag { alpha2: args.alpha2.unwrap_or(f64::NAN) },
    };
    let config = SimConfig { method: args.estimator.into(), ..SimConfig::new(dgp, args.n, args.t, args.reps, seed) };
    let mut result = match &args.records {
        Some(path) => run_experiment_resumable(&config, Path::new(path))?,
        None => run_experiment(&config)?,
    };
    if args.summary_only {
        result.records.clear();
    }
    Ok((result, Vec::new()))
}

#[derive(Debug, Clone, Serialize)]
pub struct PadGroup {
    pub pad: usize,
    pub ranked: Vec<ModelCandidate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectResult {
    pub t: usize,
    pub series: usize,
    /// All candidates by BIC; compare across padding levels with care.
    pub ranked: Vec<ModelCandidate>,
    pub by_pad: Vec<PadGroup>,
    pub failures: Vec<(String, String)>,
    pub mixed_padding: bool,
}

pub fn cmd_select(args: &SelectArgs, seed: u64) -> Result<(SelectResult, Vec<InputDigest>), Failure> {
    let loaded = load(&args.data)?;
    let n = loaded.panel.n();
    let candidates = if args.dims.is_empty() {
        enumerate_factorizations(n, args.max_params, args.max_pad)
    } else {
        args.dims.iter().map(|d| FactorizationSpec::for_data(d.0.clone(), n)).collect::<Result<Vec<_>, _>>()?
    };
    if candidates.is_empty() {
        return Err(Failure::Usage(format!("no candidate factorizations for {n} series")));
    }
    let opts = SelectOptions {
        structure: args.structure.into(),
        fit: FitOptions { method: args.estimator.into(), ..FitOptions::default() },
        seed,
    };
    let report = select_model(&loaded.panel, &candidates, &opts)?;
    let mut pads: Vec<usize> = report.ranked.iter().map(|c| c.spec.pad()).collect();
    pads.sort_unstable();
    pads.dedup();
    let by_pad = pads
        .into_iter()
        .map(|pad| PadGroup { pad, ranked: report.ranked.iter().filter(|c| c.spec.pad() == pad).cloned().collect() })
        .collect();
    Ok((
        SelectResult {
            t: loaded.panel.t(),
            series: n,
            ranked: report.ranked,
            by_pad,
            failures: report.failures,
            mixed_padding: report.mixed_padding,
        },
        vec![loaded.digest],
    ))
}

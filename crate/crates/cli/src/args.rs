use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use kroncov::design::FactorStructure;
use kroncov::estimate::{Method, WeightChoice};
use kroncov::infer::VarianceMode;

use crate::ingest::NaPolicy;

#[derive(Debug, Parser)]
#[command(name = "kroncov", version, about = "Kronecker-structured covariance estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true, env = "KRONCOV_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate θ for one factorization.
    Fit(FitArgs),
    /// Fit plus standard errors and delta-method functionals.
    Infer(InferArgs),
    /// Over-identification test of the Kronecker restriction.
    Overid(OverIdArgs),
    /// Rolling minimum-variance portfolio backtest.
    Backtest(BacktestArgs),
    /// Monte-Carlo PRIAL and variance-ratio study.
    Simulate(SimulateArgs),
    /// Rank factorizations by BIC.
    Select(SelectArgs),
}

/// Comma-separated factor dimensions, e.g. `2,2,2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Dims(pub Vec<usize>);

impl FromStr for Dims {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let dims = s
            .split([',', 'x'])
            .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad dimension {p:?} in {s:?}")))
            .collect::<Result<Vec<_>, _>>()?;
        if dims.is_empty() || dims.iter().any(|&d| d < 2) {
            return Err(format!("factor dimensions must be ≥ 2: {s:?}"));
        }
        Ok(Dims(dims))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// CSV file: header row, then one row of returns per period.
    #[arg(long, short)]
    pub input: PathBuf,

    #[arg(long, default_value_t = ',')]
    pub delimiter: char,

    #[arg(long, value_enum, default_value_t = NaPolicy::Fail)]
    pub na_policy: NaPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorArg {
    Md,
    Onestep,
    Qmle,
}

impl From<EstimatorArg> for Method {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Md => Method::Md,
            EstimatorArg::Onestep => Method::OneStep,
            EstimatorArg::Qmle => Method::Qmle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightArg {
    Identity,
    Optimal,
}

impl From<WeightArg> for WeightChoice {
    fn from(w: WeightArg) -> Self {
        match w {
            WeightArg::Identity => WeightChoice::Identity,
            WeightArg::Optimal => WeightChoice::Optimal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureArg {
    Correlation,
    Covariance,
}

impl From<StructureArg> for FactorStructure {
    fn from(s: StructureArg) -> Self {
        match s {
            StructureArg::Correlation => FactorStructure::Correlation,
            StructureArg::Covariance => FactorStructure::Covariance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceArg {
    Empirical,
    Gaussian,
}

impl From<VarianceArg> for VarianceMode {
    fn from(v: VarianceArg) -> Self {
        match v {
            VarianceArg::Empirical => VarianceMode::Empirical,
            VarianceArg::Gaussian => VarianceMode::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Factor dimensions; padding is added when the product exceeds the series count.
    #[arg(long, required_unless_present = "auto_factorize", conflicts_with = "auto_factorize")]
    pub dims: Option<Dims>,

    /// Choose the factorization by BIC.
    #[arg(long)]
    pub auto_factorize: bool,

    /// Candidate limit on free correlation parameters for --auto-factorize.
    #[arg(long, default_value_t = 30)]
    pub max_params: usize,

    /// Largest padding considered by --auto-factorize.
    #[arg(long, default_value_t = 0)]
    pub max_pad: usize,

    #[arg(long, value_enum, default_value_t = StructureArg::Correlation)]
    pub structure: StructureArg,

    #[arg(long, value_enum, default_value_t = EstimatorArg::Md)]
    pub estimator: EstimatorArg,

    #[arg(long, value_enum, default_value_t = WeightArg::Identity)]
    pub weight: WeightArg,

    /// Seed for pseudo-variable padding.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InferArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,

    #[arg(long, value_enum, default_value_t = VarianceArg::Empirical)]
    pub variance: VarianceArg,

    /// Confidence level of the reported intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OverIdArgs {
    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long)]
    pub dims: Dims,

    #[arg(long, value_enum, default_value_t = StructureArg::Correlation)]
    pub structure: StructureArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Kronecker specification to compare; repeat for several.
    #[arg(long, required = true)]
    pub dims: Vec<Dims>,

    /// Estimation window length.
    #[arg(long)]
    pub window: usize,

    /// Out-of-sample period; windows advance by this much.
    #[arg(long, default_value_t = 21)]
    pub horizon: usize,

    #[arg(long, value_enum, default_value_t = StructureArg::Correlation)]
    pub structure: StructureArg,

    #[arg(long, value_enum, default_value_t = EstimatorArg::Md)]
    pub estimator: EstimatorArg,

    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpArg {
    Kronecker,
    Lognormal,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub dgp: DgpArg,

    /// Dispersion of the log-normal diagonal.
    #[arg(long, required_if_eq("dgp", "lognormal"))]
    pub alpha2: Option<f64>,

    /// Dimension; must be a power of two.
    #[arg(long)]
    pub n: usize,

    #[arg(long)]
    pub t: usize,

    #[arg(long, default_value_t = 200)]
    pub reps: usize,

    #[arg(long, value_enum, default_value_t = EstimatorArg::Qmle)]
    pub estimator: EstimatorArg,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Stream replication records to this JSON-lines file and resume from it.
    #[arg(long)]
    pub records: Option<PathBuf>,

    /// Leave per-replication records out of the report.
    #[arg(long)]
    pub summary_only: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Explicit candidates; repeat for several. Defaults to enumeration.
    #[arg(long)]
    pub dims: Vec<Dims>,

    #[arg(long, default_value_t = 30)]
    pub max_params: usize,

    #[arg(long, default_value_t = 0)]
    pub max_pad: usize,

    #[arg(long, value_enum, default_value_t = StructureArg::Correlation)]
    pub structure: StructureArg,

    #[arg(long, value_enum, default_value_t = EstimatorArg::Qmle)]
    pub estimator: EstimatorArg,

    #[arg(long)]
    pub seed: Option<u64>,
}

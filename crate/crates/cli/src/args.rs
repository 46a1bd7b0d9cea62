use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ice_impact::comparison::{Metric, Score};
use ice_impact::{FeatureKind, ImputeStrategy, OutputKind};

#[derive(Debug, Parser)]
#[command(
    name = "ice-impact",
    version,
    about = "Feature impact of black-box models from ICE curves"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// FI, directional FI, IDFI per lambda, heterogeneity and non-linearity per feature.
    Compute(ComputeArgs),
    /// Impact metrics next to classical importances: normalized table,
    /// Pearson matrix and largest FI differences.
    Compare(CompareArgs),
    /// ICE or centered ICE curve data for one feature.
    PlotData(PlotArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Target column; excluded from the features.
    #[arg(long)]
    pub target: String,
    #[arg(long, default_value = "?")]
    pub missing_marker: String,
    /// How missing feature cells are handled.
    #[arg(long, default_value = "mean", value_parser = parse_impute)]
    pub impute: ImputeStrategy,
    /// Columns to ignore entirely (repeatable or comma separated).
    #[arg(long = "drop", value_delimiter = ',')]
    pub drop_columns: Vec<String>,
    /// Override an inferred feature kind: NAME=continuous|categorical-ordinal|binary.
    #[arg(long = "kind", value_parser = parse_kind)]
    pub kinds: Vec<(String, FeatureKind)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExternalOutput {
    RegressionScore,
    Probability,
}

impl From<ExternalOutput> for OutputKind {
    fn from(o: ExternalOutput) -> Self {
        match o {
            ExternalOutput::RegressionScore => OutputKind::RegressionScore,
            ExternalOutput::Probability => OutputKind::Probability,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    Ols,
    Logistic,
    Tree,
    Forest,
    External,
}

impl ModelChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelChoice::Ols => "builtin:ols",
            ModelChoice::Logistic => "builtin:logistic",
            ModelChoice::Tree => "builtin:tree",
            ModelChoice::Forest => "builtin:forest",
            ModelChoice::External => "external",
        }
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// builtin:ols, builtin:logistic, builtin:tree, builtin:forest, or
    /// external followed by `-- <command> [args...]`.
    #[arg(long, value_parser = parse_model)]
    pub model: ModelChoice,
    /// Trees in builtin:forest.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 8)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 2)]
    pub min_leaf: usize,
    /// Gradient descent epochs for builtin:logistic.
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    /// Seed for model fitting.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-batch deadline for an external model.
    #[arg(long, default_value_t = 60.0)]
    pub timeout_secs: f64,
    /// What an external model returns.
    #[arg(long, value_enum, default_value = "regression-score")]
    pub output_kind: ExternalOutput,
    /// External model command line.
    #[arg(last = true)]
    pub command: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SamplingArgs {
    /// Rows drawn per quantile bin (or per distinct value).
    #[arg(long, default_value_t = 10)]
    pub per_quantile: usize,
    #[arg(long, default_value_t = 10)]
    pub quantiles: usize,
    #[arg(long, default_value_t = 0)]
    pub sample_seed: u64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Write here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Worker threads; defaults to 1 for external models and the core count otherwise.
    #[arg(long, env = "ICE_IMPACT_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ComputeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Likelihood decay for IDFI, in (0, 1] (repeatable or comma separated).
    #[arg(long = "lambda", value_delimiter = ',', value_parser = parse_lambda, default_value = "0.75")]
    pub lambdas: Vec<f64>,
    /// Analyze only these features (comma separated names).
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    /// Analyze a quantile-stratified sample of rows per feature instead of all rows.
    #[arg(long)]
    pub sample: bool,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// fi, fi-directional, idfi:<lambda>, he, nl, perm, impurity.
    #[arg(long, value_delimiter = ',', value_parser = parse_metric, default_value = "fi,perm")]
    pub metrics: Vec<Metric>,
    #[arg(long = "lambda", value_delimiter = ',', value_parser = parse_lambda, default_value = "0.75")]
    pub lambdas: Vec<f64>,
    /// Score for permutation importance: accuracy, auc or r2.
    #[arg(long, value_parser = parse_score)]
    pub score: Option<Score>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Seed for permutation shuffles.
    #[arg(long, default_value_t = 0)]
    pub perm_seed: u64,
    /// Rows per side of each FI difference table.
    #[arg(long, default_value_t = 2)]
    pub top_k: usize,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub feature: String,
    /// Shift each curve so it starts at zero.
    #[arg(long)]
    pub centered: bool,
    /// One curve per row instead of a stratified sample.
    #[arg(long)]
    pub all_rows: bool,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

fn parse_lambda(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("lambda must lie in (0, 1], got {s}"))
    }
}

fn parse_impute(s: &str) -> Result<ImputeStrategy, String> {
    s.parse().map_err(|e: ice_impact::Error| e.to_string())
}

fn parse_kind(s: &str) -> Result<(String, FeatureKind), String> {
    let (name, kind) = s
        .rsplit_once('=')
        .ok_or_else(|| format!("expected NAME=KIND, got `{s}`"))?;
    let kind = kind.parse().map_err(|e: ice_impact::Error| e.to_string())?;
    Ok((name.to_string(), kind))
}

fn parse_model(s: &str) -> Result<ModelChoice, String> {
    match s {
        "builtin:ols" => Ok(ModelChoice::Ols),
        "builtin:logistic" => Ok(ModelChoice::Logistic),
        "builtin:tree" => Ok(ModelChoice::Tree),
        "builtin:forest" => Ok(ModelChoice::Forest),
        "external" => Ok(ModelChoice::External),
        other => Err(format!(
            "unknown model `{other}` (expected builtin:ols, builtin:logistic, builtin:tree, builtin:forest or external)"
        )),
    }
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.trim().parse().map_err(|e: ice_impact::Error| e.to_string())
}

fn parse_score(s: &str) -> Result<Score, String> {
    s.parse().map_err(|e: ice_impact::Error| e.to_string())
}

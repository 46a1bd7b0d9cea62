use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use ice_impact::comparison::{self, Metric, ReportOptions, Score};
use ice_impact::dataset::{load_csv, SamplingConfig};
use ice_impact::impact::{analyze_features, AnalysisOptions};
use ice_impact::plotdata;
use ice_impact::predictors::{
    external_predictor, fit_forest, fit_logistic, fit_ols, fit_tree, ExternalConfig,
    ForestConfig, HandleKind, LogisticConfig,
};
use ice_impact::{Dataset, LoadOptions, OutputKind, PredictorHandle};
use serde::Serialize;

use crate::args::{
    CompareArgs, ComputeArgs, DataArgs, ModelArgs, ModelChoice, OutputFormat, PlotArgs, RunArgs,
    SamplingArgs,
};
use crate::render;
use crate::UsageError;

pub const SCHEMA_VERSION: u32 = 1;
const SIGMA_SOURCE: &str =
    "sample standard deviation (n-1) of each feature over the loaded dataset";

#[derive(Debug, Serialize)]
pub struct ModelInfo {
    pub spec: &'static str,
    pub kind: HandleKind,
    pub output_kind: OutputKind,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub data: String,
    pub target: String,
    pub missing_marker: String,
    pub impute: ice_impact::ImputeStrategy,
    pub dropped_columns: Vec<String>,
    pub n_rows: usize,
    pub n_features: usize,
    pub model: ModelInfo,
    pub lambdas: Vec<f64>,
    pub sigma_source: &'static str,
    /// `None` when every row is used.
    pub sampling: Option<SamplingConfig>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub settings: BTreeMap<&'static str, String>,
}

fn load(data: &DataArgs) -> Result<Dataset> {
    let mut opts = LoadOptions::new(data.target.clone());
    opts.missing_marker = data.missing_marker.clone();
    opts.impute = data.impute;
    opts.drop_columns = data.drop_columns.clone();
    opts.kind_overrides = data.kinds.clone();
    load_csv(&data.data, &opts).with_context(|| format!("loading {}", data.data.display()))
}

fn build_model(model: &ModelArgs, dataset: &Dataset) -> Result<PredictorHandle> {
    if model.model != ModelChoice::External && !model.command.is_empty() {
        return Err(UsageError(format!(
            "a command after `--` is only valid with --model external (got {})",
            model.model.as_str()
        ))
        .into());
    }
    let handle = match model.model {
        ModelChoice::Ols => PredictorHandle::from_linear(fit_ols(dataset)?),
        ModelChoice::Logistic => fit_logistic(
            dataset,
            LogisticConfig {
                epochs: model.epochs,
                learning_rate: model.learning_rate,
                seed: model.seed,
            },
        )?,
        ModelChoice::Tree => fit_tree(dataset, model.max_depth, model.min_leaf, model.seed)?,
        ModelChoice::Forest => fit_forest(
            dataset,
            ForestConfig {
                n_trees: model.trees,
                max_depth: model.max_depth,
                min_leaf: model.min_leaf,
                seed: model.seed,
                ..ForestConfig::default()
            },
        )?,
        ModelChoice::External => {
            if model.command.is_empty() {
                return Err(UsageError(
                    "--model external needs a command after `--`".into(),
                )
                .into());
            }
            if !(model.timeout_secs > 0.0 && model.timeout_secs.is_finite()) {
                return Err(UsageError("--timeout-secs must be positive".into()).into());
            }
            let mut cfg = ExternalConfig::new(model.command.clone());
            cfg.timeout = Duration::from_secs_f64(model.timeout_secs);
            cfg.n_features = Some(dataset.n_features());
            cfg.output_kind = model.output_kind.into();
            external_predictor(&cfg)?
        }
    };
    Ok(handle)
}

fn jobs(run: &RunArgs, handle: &PredictorHandle) -> Result<usize> {
    match run.jobs {
        Some(0) => Err(UsageError("--jobs must be at least 1".into()).into()),
        Some(n) => Ok(n),
        None if handle.is_external() => Ok(1),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn sampling(s: &SamplingArgs) -> Result<SamplingConfig> {
    if s.per_quantile == 0 || s.quantiles == 0 {
        return Err(UsageError("--per-quantile and --quantiles must be at least 1".into()).into());
    }
    Ok(SamplingConfig {
        per_quantile: s.per_quantile,
        quantiles: s.quantiles,
        seed: s.sample_seed,
    })
}

fn provenance(
    command: &'static str,
    data: &DataArgs,
    model: &ModelArgs,
    dataset: &Dataset,
    handle: &PredictorHandle,
    lambdas: Vec<f64>,
    sampling: Option<SamplingConfig>,
) -> Provenance {
    Provenance {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        data: data.data.display().to_string(),
        target: data.target.clone(),
        missing_marker: data.missing_marker.clone(),
        impute: data.impute,
        dropped_columns: data.drop_columns.clone(),
        n_rows: dataset.n_rows(),
        n_features: dataset.n_features(),
        model: ModelInfo {
            spec: model.model.as_str(),
            kind: handle.kind,
            output_kind: handle.output_kind,
            metadata: handle.metadata.clone(),
        },
        lambdas,
        sigma_source: SIGMA_SOURCE,
        sampling,
        settings: BTreeMap::new(),
    }
}

/// Writes the finished document in one go.
fn emit(run: &RunArgs, body: &str) -> Result<()> {
    match &run.output {
        Some(path) => write_atomically(path, body)
            .with_context(|| format!("writing {}", path.display())),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn write_atomically(path: &Path, body: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    if let Some(d) = dir {
        std::fs::create_dir_all(d)?;
    }
    std::fs::write(&tmp, body)?;
    std::fs::rename(&tmp, path)
}

pub fn compute(args: ComputeArgs) -> Result<()> {
    let dataset = load(&args.data)?;
    let features = args
        .features
        .iter()
        .map(|name| dataset.feature_index(name))
        .collect::<ice_impact::Result<Vec<_>>>()?;
    let features = if features.is_empty() {
        (0..dataset.n_features()).collect()
    } else {
        features
    };
    let handle = build_model(&args.model, &dataset)?;
    let sample = if args.sample {
        Some(sampling(&args.sampling)?)
    } else {
        None
    };
    let options = AnalysisOptions {
        sampling: sample,
        jobs: jobs(&args.run, &handle)?,
        ..AnalysisOptions::default()
    };
    let results = analyze_features(&dataset, &handle, &features, &args.lambdas, &options)?;
    let prov = provenance(
        "compute",
        &args.data,
        &args.model,
        &dataset,
        &handle,
        args.lambdas.clone(),
        sample,
    );
    let body = match args.run.format.unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => render::json(&render::ComputeDoc {
            schema_version: SCHEMA_VERSION,
            provenance: prov,
            features: results,
        })?,
        OutputFormat::Csv => render::compute_csv(&results, &args.lambdas)?,
    };
    emit(&args.run, &body)
}

pub fn compare(args: CompareArgs) -> Result<()> {
    if args.repeats == 0 {
        return Err(UsageError("--repeats must be at least 1".into()).into());
    }
    let dataset = load(&args.data)?;
    let handle = build_model(&args.model, &dataset)?;
    if args.metrics.contains(&Metric::Impurity) && handle.as_forest().is_none() {
        return Err(UsageError(format!(
            "impurity importance needs --model builtin:forest or builtin:tree, not {}",
            args.model.model.as_str()
        ))
        .into());
    }
    let options = ReportOptions {
        score: args.score,
        repeats: args.repeats,
        seed: args.perm_seed,
        top_k: args.top_k,
        analysis: AnalysisOptions {
            jobs: jobs(&args.run, &handle)?,
            ..AnalysisOptions::default()
        },
    };
    let report = comparison::report(&dataset, &handle, &args.metrics, &args.lambdas, &options)?;

    let mut prov = provenance(
        "compare",
        &args.data,
        &args.model,
        &dataset,
        &handle,
        args.lambdas.clone(),
        None,
    );
    let labels: Vec<String> = args.metrics.iter().map(Metric::label).collect();
    prov.settings.insert("metrics", labels.join(","));
    prov.settings.insert("top_k", args.top_k.to_string());
    if args.metrics.contains(&Metric::Permutation) {
        let score = args
            .score
            .unwrap_or_else(|| Score::default_for(handle.output_kind));
        prov.settings.insert("permutation_score", score.as_str().into());
        prov.settings.insert("permutation_repeats", args.repeats.to_string());
        prov.settings.insert("permutation_seed", args.perm_seed.to_string());
    }

    let body = match args.run.format.unwrap_or(OutputFormat::Json) {
        OutputFormat::Json => render::json(&render::CompareDoc {
            schema_version: SCHEMA_VERSION,
            provenance: prov,
            report,
        })?,
        OutputFormat::Csv => render::compare_csv(&report)?,
    };
    emit(&args.run, &body)
}

pub fn plot_data(args: PlotArgs) -> Result<()> {
    let dataset = load(&args.data)?;
    let feature = dataset.feature_index(&args.feature)?;
    let handle = build_model(&args.model, &dataset)?;
    let sample = if args.all_rows {
        None
    } else {
        Some(sampling(&args.sampling)?)
    };
    let curves = if args.centered {
        plotdata::c_ice_curves(&dataset, &handle, feature, sample)?
    } else {
        plotdata::ice_curves(&dataset, &handle, feature, sample)?
    };
    let body = match args.run.format.unwrap_or(OutputFormat::Csv) {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            curves.write_csv(&mut buf)?;
            String::from_utf8(buf).context("curve CSV is not UTF-8")?
        }
        OutputFormat::Json => {
            let prov = provenance(
                "plot-data",
                &args.data,
                &args.model,
                &dataset,
                &handle,
                Vec::new(),
                sample,
            );
            render::json(&render::PlotDoc {
                schema_version: SCHEMA_VERSION,
                provenance: prov,
                curves,
            })?
        }
    };
    emit(&args.run, &body)
}

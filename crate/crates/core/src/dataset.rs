//! Tabular data ingestion and per-feature metadata.
//!
//! A [`Dataset`] is immutable once built: missing cells have already been
//! imputed (or their rows dropped) and every feature carries its sample
//! standard deviation and sorted unique values, which are exactly what the
//! phantom grid and the impact metrics consume.

use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::fmt_g17;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    Continuous,
    CategoricalOrdinal,
    Binary,
}

impl FeatureKind {
    /// Binary iff the distinct values are exactly {0, 1}; categorical-ordinal
    /// iff all values are integers and there are at most `max(10, sqrt(n))`
    /// of them; continuous otherwise.
    pub fn infer(unique_values: &[f64], n_rows: usize) -> Self {
        if unique_values == [0.0, 1.0] {
            return FeatureKind::Binary;
        }
        let cap = 10usize.max((n_rows as f64).sqrt().floor() as usize);
        let all_integer = unique_values.iter().all(|v| v.fract() == 0.0);
        if all_integer && unique_values.len() <= cap {
            FeatureKind::CategoricalOrdinal
        } else {
            FeatureKind::Continuous
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::Continuous => "continuous",
            FeatureKind::CategoricalOrdinal => "categorical-ordinal",
            FeatureKind::Binary => "binary",
        }
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(FeatureKind::Continuous),
            "categorical-ordinal" | "categorical" | "ordinal" => {
                Ok(FeatureKind::CategoricalOrdinal)
            }
            "binary" => Ok(FeatureKind::Binary),
            other => Err(Error::InvalidArgument(format!(
                "unknown feature kind `{other}` (expected continuous, categorical-ordinal or binary)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub kind: FeatureKind,
    /// Sample standard deviation, `n - 1` denominator.
    pub std_dev: f64,
    /// Distinct values, strictly increasing.
    pub unique_values: Vec<f64>,
    /// Cells that were missing in the source before imputation.
    pub missing_count: usize,
}

impl FeatureMeta {
    fn describe(name: String, column: ArrayView1<'_, f64>, missing_count: usize) -> Self {
        let values: Vec<f64> = column.iter().copied().collect();
        let unique_values = sorted_unique(&values);
        let std_dev = if unique_values.len() == 1 {
            0.0
        } else {
            stats::sample_sd(&values)
        };
        let kind = FeatureKind::infer(&unique_values, values.len());
        FeatureMeta {
            name,
            kind,
            std_dev,
            unique_values,
            missing_count,
        }
    }

    pub fn n_unique(&self) -> usize {
        self.unique_values.len()
    }
}

fn sorted_unique(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| a == b);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub name: String,
    pub values: Vec<f64>,
}

impl Target {
    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImputeStrategy {
    #[default]
    Mean,
    DropRow,
}

impl std::str::FromStr for ImputeStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(ImputeStrategy::Mean),
            "drop-row" | "drop" => Ok(ImputeStrategy::DropRow),
            other => Err(Error::InvalidArgument(format!(
                "unknown imputation `{other}` (expected mean or drop-row)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub target: String,
    pub missing_marker: String,
    pub impute: ImputeStrategy,
    /// Columns to discard entirely, e.g. alternative targets.
    pub drop_columns: Vec<String>,
    pub kind_overrides: Vec<(String, FeatureKind)>,
}

impl LoadOptions {
    pub fn new(target: impl Into<String>) -> Self {
        LoadOptions {
            target: target.into(),
            missing_marker: "?".to_string(),
            impute: ImputeStrategy::Mean,
            drop_columns: Vec::new(),
            kind_overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Array2<f64>,
    features: Vec<FeatureMeta>,
    target: Option<Target>,
    row_ids: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset from an in-memory matrix. Row ids are `0..n`.
    pub fn new(names: Vec<String>, rows: Array2<f64>, target: Option<Target>) -> Result<Self> {
        let n = rows.nrows();
        let row_ids = (0..n).collect();
        Self::assemble(names, rows, target, row_ids, None)
    }

    /// Convenience constructor from row vectors.
    pub fn from_rows<S: Into<String>>(
        names: impl IntoIterator<Item = S>,
        rows: &[Vec<f64>],
        target: Option<Target>,
    ) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let p = names.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: bad.len(),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let matrix = Array2::from_shape_vec((rows.len(), p), flat)
            .map_err(|e| Error::InvalidDataset(e.to_string()))?;
        Self::new(names, matrix, target)
    }

    fn assemble(
        names: Vec<String>,
        rows: Array2<f64>,
        target: Option<Target>,
        row_ids: Vec<usize>,
        missing_counts: Option<Vec<usize>>,
    ) -> Result<Self> {
        let (n, p) = rows.dim();
        if n == 0 {
            return Err(Error::EmptyDataset(""));
        }
        if p == 0 {
            return Err(Error::InvalidDataset("no feature columns".into()));
        }
        if names.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: names.len(),
            });
        }
        if let Some((i, j)) = rows
            .indexed_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(ij, _)| ij)
        {
            return Err(Error::InvalidDataset(format!(
                "non-finite value at row {i}, column `{}`",
                names[j]
            )));
        }
        if let Some(t) = &target {
            if t.values.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: t.values.len(),
                });
            }
        }
        let missing = missing_counts.unwrap_or_else(|| vec![0; p]);
        let features = names
            .into_iter()
            .enumerate()
            .map(|(j, name)| FeatureMeta::describe(name, rows.column(j), missing[j]))
            .collect();
        Ok(Dataset {
            rows,
            features,
            target,
            row_ids,
        })
    }

    /// Overrides the inferred kind of one feature. `Binary` is only accepted
    /// for columns whose values are a subset of {0, 1}.
    pub fn with_feature_kind(mut self, feature: usize, kind: FeatureKind) -> Result<Self> {
        self.check_feature(feature)?;
        let meta = &mut self.features[feature];
        if kind == FeatureKind::Binary && meta.unique_values.iter().any(|&v| v != 0.0 && v != 1.0)
        {
            return Err(Error::InvalidArgument(format!(
                "feature `{}` has values outside {{0, 1}} and cannot be binary",
                meta.name
            )));
        }
        meta.kind = kind;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    pub fn feature(&self, index: usize) -> Result<&FeatureMeta> {
        self.check_feature(index)?;
        Ok(&self.features[index])
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn target(&self) -> Option<&Target> {
        self.target.as_ref()
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    /// Position of a row id in the matrix. Row ids are strictly increasing.
    pub fn position_of(&self, row_id: usize) -> Option<usize> {
        self.row_ids.binary_search(&row_id).ok()
    }

    pub(crate) fn check_feature(&self, index: usize) -> Result<()> {
        if index >= self.n_features() {
            return Err(Error::FeatureIndex {
                index,
                n_features: self.n_features(),
            });
        }
        Ok(())
    }

    /// Writes the dataset back out as CSV: features in order, then the target
    /// column if present. Reals use 17 significant digits.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut w = csv::Writer::from_writer(file);
        let mut header = self.feature_names();
        if let Some(t) = &self.target {
            header.push(t.name.clone());
        }
        w.write_record(&header)?;
        for (i, row) in self.rows.outer_iter().enumerate() {
            let mut record: Vec<String> = row.iter().map(|&v| fmt_g17(v)).collect();
            if let Some(t) = &self.target {
                record.push(fmt_g17(t.values[i]));
            }
            w.write_record(&record)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }
}

/// Loads a CSV file with a header row. Cells equal to the missing marker are
/// replaced by the column mean of the observed cells, or cause the row to be
/// dropped, depending on `opts.impute`. Rows whose target is missing are
/// always dropped since labels are never imputed.
pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, opts)
}

/// Same as [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(reader: R, opts: &LoadOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();

    let target_col = header
        .iter()
        .position(|h| *h == opts.target)
        .ok_or_else(|| Error::MissingTarget(opts.target.clone()))?;
    for d in &opts.drop_columns {
        if !header.contains(d) {
            return Err(Error::UnknownColumn(d.clone()));
        }
    }
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != target_col && !opts.drop_columns.contains(&header[c]))
        .collect();
    let p = feature_cols.len();

    // None marks a missing cell.
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    let mut targets: Vec<Option<f64>> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let parse = |c: usize| -> Result<Option<f64>> {
            let raw = record.get(c).unwrap_or("");
            if raw == opts.missing_marker {
                return Ok(None);
            }
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(Error::UnparseableCell {
                    row: r + 1,
                    column: header[c].clone(),
                    value: raw.to_string(),
                }),
            }
        };
        let row = feature_cols
            .iter()
            .map(|&c| parse(c))
            .collect::<Result<Vec<_>>>()?;
        targets.push(parse(target_col)?);
        cells.push(row);
    }

    let mut missing_counts = vec![0usize; p];
    let mut keep: Vec<usize> = Vec::with_capacity(cells.len());
    for (r, row) in cells.iter().enumerate() {
        let row_missing = row.iter().any(Option::is_none);
        for (j, v) in row.iter().enumerate() {
            if v.is_none() {
                missing_counts[j] += 1;
            }
        }
        if targets[r].is_none() || (row_missing && opts.impute == ImputeStrategy::DropRow) {
            continue;
        }
        keep.push(r);
    }
    if keep.is_empty() {
        return Err(Error::EmptyDataset(" after dropping rows with missing values"));
    }

    let mut fill = vec![0.0; p];
    if opts.impute == ImputeStrategy::Mean {
        for (j, slot) in fill.iter_mut().enumerate() {
            let observed: Vec<f64> = keep.iter().filter_map(|&r| cells[r][j]).collect();
            if observed.is_empty() && keep.iter().any(|&r| cells[r][j].is_none()) {
                return Err(Error::InvalidDataset(format!(
                    "column `{}` has no observed values to impute from",
                    header[feature_cols[j]]
                )));
            }
            *slot = stats::mean(&observed);
        }
    }

    let mut flat = Vec::with_capacity(keep.len() * p);
    for &r in &keep {
        flat.extend(cells[r].iter().enumerate().map(|(j, v)| v.unwrap_or(fill[j])));
    }
    let rows = Array2::from_shape_vec((keep.len(), p), flat)
        .map_err(|e| Error::InvalidDataset(e.to_string()))?;
    let target = Target {
        name: opts.target.clone(),
        values: keep.iter().map(|&r| targets[r].expect("kept rows have targets")).collect(),
    };
    let names = feature_cols.iter().map(|&c| header[c].clone()).collect();

    let mut ds = Dataset::assemble(names, rows, Some(target), keep, Some(missing_counts))?;
    for (name, kind) in &opts.kind_overrides {
        let j = ds.feature_index(name)?;
        ds = ds.with_feature_kind(j, *kind)?;
    }
    Ok(ds)
}

/// Sample standard deviation of one feature; 0 for constant columns.
pub fn feature_std(dataset: &Dataset, feature: usize) -> Result<f64> {
    Ok(dataset.feature(feature)?.std_dev)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub per_quantile: usize,
    pub quantiles: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            per_quantile: 10,
            quantiles: 10,
            seed: 0,
        }
    }
}

/// Picks row ids so the sample spans the whole distribution of `feature`.
///
/// Continuous features are cut into `quantiles` equal-probability bins and up
/// to `per_quantile` rows are drawn from each; categorical and binary features
/// get up to `per_quantile` rows per distinct value. When the population is no
/// larger than the requested total every row id is returned. Output is sorted.
pub fn sample_rows(
    dataset: &Dataset,
    feature: usize,
    per_quantile: usize,
    quantiles: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let meta = dataset.feature(feature)?;
    if per_quantile == 0 || quantiles == 0 {
        return Err(Error::InvalidArgument(
            "per_quantile and quantiles must be at least 1".into(),
        ));
    }
    let column = dataset.rows.column(feature);
    let n = column.len();

    let bins: Vec<Vec<usize>> = match meta.kind {
        FeatureKind::Continuous => {
            if n <= per_quantile.saturating_mul(quantiles) {
                return Ok(dataset.row_ids.clone());
            }
            let mut sorted: Vec<f64> = column.to_vec();
            sorted.sort_by(f64::total_cmp);
            let cuts: Vec<f64> = (1..quantiles)
                .map(|j| quantile_sorted(&sorted, j as f64 / quantiles as f64))
                .collect();
            let mut bins = vec![Vec::new(); quantiles];
            for (pos, &v) in column.iter().enumerate() {
                let b = cuts.iter().filter(|&&c| v > c).count();
                bins[b].push(pos);
            }
            bins
        }
        FeatureKind::CategoricalOrdinal | FeatureKind::Binary => {
            if n <= per_quantile.saturating_mul(meta.n_unique()) {
                return Ok(dataset.row_ids.clone());
            }
            let mut bins = vec![Vec::new(); meta.n_unique()];
            for (pos, &v) in column.iter().enumerate() {
                let b = meta
                    .unique_values
                    .binary_search_by(|u| u.total_cmp(&v))
                    .unwrap_or_else(|i| i.min(meta.n_unique() - 1));
                bins[b].push(pos);
            }
            bins
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::new();
    for bin in bins {
        if bin.len() <= per_quantile {
            picked.extend(bin);
        } else {
            let idx = rand::seq::index::sample(&mut rng, bin.len(), per_quantile);
            picked.extend(idx.iter().map(|k| bin[k]));
        }
    }
    let mut ids: Vec<usize> = picked.into_iter().map(|pos| dataset.row_ids[pos]).collect();
    ids.sort_unstable();
    Ok(ids)
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

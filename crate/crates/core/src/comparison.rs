//! Classical importance measures and the machinery to set them against the
//! impact metrics: normalization to a common scale of 100, Pearson
//! correlation, and tables of the largest disagreements.

use indexmap::IndexMap;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::impact::{self, lambda_label, AnalysisOptions, FeatureImpactResult};
use crate::predictors::{Forest, OutputKind, Predictor, PredictorHandle};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricVector {
    pub metric_name: String,
    /// Feature name to value, in dataset column order.
    pub values: IndexMap<String, f64>,
    pub normalized: bool,
}

impl MetricVector {
    pub fn new(metric_name: impl Into<String>, values: IndexMap<String, f64>) -> Self {
        MetricVector {
            metric_name: metric_name.into(),
            values,
            normalized: false,
        }
    }

    pub fn from_pairs<S: Into<String>>(
        metric_name: &str,
        pairs: impl IntoIterator<Item = (S, f64)>,
    ) -> Self {
        MetricVector::new(
            metric_name,
            pairs.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        )
    }

    pub fn get(&self, feature: &str) -> Option<f64> {
        self.values.get(feature).copied()
    }
}

/// Absolute values rescaled to sum to 100.
pub fn normalize(vector: &MetricVector) -> Result<MetricVector> {
    let total: f64 = vector.values.values().map(|v| v.abs()).sum();
    if !(total > 0.0) {
        return Err(Error::AllZero);
    }
    let values = vector
        .values
        .iter()
        .map(|(k, v)| (k.clone(), 100.0 * v.abs() / total))
        .collect();
    Ok(MetricVector {
        metric_name: vector.metric_name.clone(),
        values,
        normalized: true,
    })
}

/// Pearson correlation over the shared feature set, in `a`'s order.
pub fn pearson(a: &MetricVector, b: &MetricVector) -> Result<f64> {
    if a.values.len() != b.values.len() || a.values.keys().any(|k| !b.values.contains_key(k)) {
        return Err(Error::FeatureSetMismatch);
    }
    if a.values.len() < 2 {
        return Err(Error::InvalidArgument(
            "correlation needs at least two features".into(),
        ));
    }
    let xs: Vec<f64> = a.values.values().copied().collect();
    let ys: Vec<f64> = a.values.keys().map(|k| b.values[k]).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0) {
        return Err(Error::ZeroVariance(a.metric_name.clone()));
    }
    if !(syy > 0.0) {
        return Err(Error::ZeroVariance(b.metric_name.clone()));
    }
    // one square root keeps pearson(x, x) at exactly 1
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Score {
    Accuracy,
    Auc,
    R2,
}

impl Score {
    /// Accuracy at 0.5 for probabilities, R^2 for scores.
    pub fn default_for(kind: OutputKind) -> Self {
        match kind {
            OutputKind::Probability => Score::Accuracy,
            OutputKind::RegressionScore => Score::R2,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Score::Accuracy => "accuracy",
            Score::Auc => "auc",
            Score::R2 => "r2",
        }
    }

    /// Rejects scores that cannot be computed for this target.
    pub fn check(&self, target: &[f64]) -> Result<()> {
        let binary = target.iter().all(|&v| v == 0.0 || v == 1.0);
        match self {
            Score::Accuracy | Score::Auc if !binary => Err(Error::IncompatibleScore {
                score: self.as_str(),
                reason: "target is not binary".into(),
            }),
            Score::Auc if target.iter().all(|&v| v == target[0]) => Err(Error::IncompatibleScore {
                score: "auc",
                reason: "target has a single class".into(),
            }),
            Score::R2 if target.iter().all(|&v| v == target[0]) => Err(Error::IncompatibleScore {
                score: "r2",
                reason: "target is constant".into(),
            }),
            _ => Ok(()),
        }
    }

    pub fn evaluate(&self, target: &[f64], predictions: &[f64]) -> f64 {
        match self {
            Score::Accuracy => {
                let hits = target
                    .iter()
                    .zip(predictions)
                    .filter(|(&y, &p)| (p >= 0.5) == (y == 1.0))
                    .count();
                hits as f64 / target.len() as f64
            }
            Score::Auc => auc(target, predictions),
            Score::R2 => {
                let mean = target.iter().sum::<f64>() / target.len() as f64;
                let ss_tot: f64 = target.iter().map(|y| (y - mean) * (y - mean)).sum();
                let ss_res: f64 = target
                    .iter()
                    .zip(predictions)
                    .map(|(y, p)| (y - p) * (y - p))
                    .sum();
                1.0 - ss_res / ss_tot
            }
        }
    }
}

impl std::str::FromStr for Score {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(Score::Accuracy),
            "auc" => Ok(Score::Auc),
            "r2" => Ok(Score::R2),
            other => Err(Error::InvalidArgument(format!(
                "unknown score `{other}` (expected accuracy, auc or r2)"
            ))),
        }
    }
}

/// Area under the ROC curve via the rank-sum statistic, ties sharing ranks.
fn auc(target: &[f64], scores: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    let n_pos = target.iter().filter(|&&y| y == 1.0).count() as f64;
    let n_neg = target.len() as f64 - n_pos;
    let rank_sum: f64 = target
        .iter()
        .zip(&ranks)
        .filter(|(&y, _)| y == 1.0)
        .map(|(_, r)| r)
        .sum();
    (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}

/// Row order used to shuffle `feature` in repeat `repeat`: row `i` of the
/// shuffled design takes the feature value of row `order[i]`.
pub fn permutation_order(seed: u64, feature: usize, repeat: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((feature as u64) << 32) | repeat as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Mean drop in `score` when one column at a time is shuffled.
pub fn permutation_importance<P: Predictor + ?Sized>(
    dataset: &Dataset,
    predictor: &P,
    score: Score,
    repeats: usize,
    seed: u64,
) -> Result<MetricVector> {
    let target = dataset.target().ok_or(Error::NoTarget)?;
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    score.check(&target.values)?;
    let x = dataset.rows();
    let n = x.nrows();
    let baseline = score.evaluate(&target.values, &predictor.predict(x.view())?);

    let mut values = IndexMap::new();
    let mut shuffled: Array2<f64> = x.clone();
    for (j, meta) in dataset.features().iter().enumerate() {
        let mut drop_total = 0.0;
        for r in 0..repeats {
            let order = permutation_order(seed, j, r, n);
            for (i, &src) in order.iter().enumerate() {
                shuffled[[i, j]] = x[[src, j]];
            }
            let preds = predictor
                .predict(shuffled.view())
                .map_err(|e| e.in_feature(j))?;
            drop_total += baseline - score.evaluate(&target.values, &preds);
        }
        shuffled.column_mut(j).assign(&x.column(j));
        values.insert(meta.name.clone(), drop_total / repeats as f64);
    }
    Ok(MetricVector::new(format!("permutation_{}", score.as_str()), values))
}

/// Impurity decrease accumulated while growing a built-in forest or tree,
/// normalized to sum to 100.
pub fn impurity_importance(handle: &PredictorHandle, feature_names: &[String]) -> Result<MetricVector> {
    let forest = handle.as_forest().ok_or(Error::NotAForest)?;
    let dec = forest.impurity_decrease();
    if dec.len() != feature_names.len() {
        return Err(Error::DimensionMismatch {
            expected: dec.len(),
            got: feature_names.len(),
        });
    }
    let raw = MetricVector::new(
        "impurity",
        feature_names.iter().cloned().zip(dec.iter().copied()).collect(),
    );
    normalize(&raw)
}

/// Columns that can appear in a comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Fi,
    FiDirectional,
    Idfi(f64),
    Heterogeneity,
    NonLinearity,
    Permutation,
    Impurity,
}

impl Metric {
    pub fn label(&self) -> String {
        match self {
            Metric::Fi => "fi".into(),
            Metric::FiDirectional => "fi_directional".into(),
            Metric::Idfi(l) => format!("idfi_{}", lambda_label(*l)),
            Metric::Heterogeneity => "he".into(),
            Metric::NonLinearity => "nl".into(),
            Metric::Permutation => "permutation".into(),
            Metric::Impurity => "impurity".into(),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(l) = s.strip_prefix("idfi:") {
            let lambda: f64 = l
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad lambda in `{s}`")))?;
            impact::likelihood(0.0, 0.0, 1.0, lambda)?;
            return Ok(Metric::Idfi(lambda));
        }
        match s {
            "fi" => Ok(Metric::Fi),
            "fi-directional" | "fi_directional" => Ok(Metric::FiDirectional),
            "he" | "heterogeneity" => Ok(Metric::Heterogeneity),
            "nl" | "non-linearity" => Ok(Metric::NonLinearity),
            "perm" | "permutation" => Ok(Metric::Permutation),
            "impurity" => Ok(Metric::Impurity),
            other => Err(Error::InvalidArgument(format!(
                "unknown metric `{other}` (expected fi, fi-directional, idfi:<lambda>, he, nl, perm, impurity)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub score: Option<Score>,
    pub repeats: usize,
    pub seed: u64,
    /// Rows per side of each difference table.
    pub top_k: usize,
    pub analysis: AnalysisOptions,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            score: None,
            repeats: 5,
            seed: 0,
            top_k: 2,
            analysis: AnalysisOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricColumn {
    pub name: String,
    pub raw: MetricVector,
    /// Absent when every raw value is zero.
    pub normalized: Option<MetricVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    /// `None` where a column has no variance.
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        self.values[i][j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifferenceRow {
    pub feature: String,
    pub fi: f64,
    pub other: f64,
    pub difference: f64,
}

/// Normalized FI minus another normalized metric: the `top_k` largest
/// differences followed by the `top_k` most negative, descending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifferenceTable {
    pub versus: String,
    pub rows: Vec<DifferenceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpactReport {
    pub features: Vec<FeatureImpactResult>,
    pub metrics: Vec<MetricColumn>,
    pub correlations: CorrelationMatrix,
    pub differences: Vec<DifferenceTable>,
    pub notes: Vec<String>,
}

impl ImpactReport {
    pub fn metric(&self, label: &str) -> Option<&MetricColumn> {
        self.metrics.iter().find(|m| m.name == label)
    }
}

/// Computes the impact metrics for every feature, the requested comparison
/// metrics, their normalized forms, pairwise correlations and FI difference
/// tables.
pub fn report(
    dataset: &Dataset,
    handle: &PredictorHandle,
    metrics: &[Metric],
    lambdas: &[f64],
    options: &ReportOptions,
) -> Result<ImpactReport> {
    report_with(dataset, handle, handle.as_forest(), metrics, lambdas, options)
}

/// As [`report`] for any predictor. Impurity importance is read from
/// `forest`, which must be the model behind `predictor`.
pub fn report_with<P: Predictor + ?Sized>(
    dataset: &Dataset,
    predictor: &P,
    forest: Option<&Forest>,
    metrics: &[Metric],
    lambdas: &[f64],
    options: &ReportOptions,
) -> Result<ImpactReport> {
    if metrics.is_empty() {
        return Err(Error::InvalidArgument("no metrics requested".into()));
    }
    if metrics.contains(&Metric::Impurity) && forest.is_none() {
        return Err(Error::NotAForest);
    }
    let mut all_lambdas: Vec<f64> = lambdas.to_vec();
    for m in metrics {
        if let Metric::Idfi(l) = m {
            if !all_lambdas.contains(l) {
                all_lambdas.push(*l);
            }
        }
    }

    let features: Vec<usize> = (0..dataset.n_features()).collect();
    let results =
        impact::analyze_features(dataset, predictor, &features, &all_lambdas, &options.analysis)?;
    let names = dataset.feature_names();
    let column = |f: &dyn Fn(&FeatureImpactResult) -> f64| -> IndexMap<String, f64> {
        results.iter().map(|r| (r.name.clone(), f(r))).collect()
    };

    let mut notes = vec![
        "tree SHAP values are not computed".to_string(),
        "sigma is the sample standard deviation (n-1) of each feature in the analyzed dataset"
            .to_string(),
    ];
    let mut columns = Vec::new();
    for m in metrics {
        let label = m.label();
        let raw = match m {
            Metric::Fi => MetricVector::new(&label, column(&|r| r.fi)),
            Metric::FiDirectional => MetricVector::new(&label, column(&|r| r.fi_directional)),
            Metric::Idfi(l) => MetricVector::new(
                &label,
                column(&|r| r.idfi(*l).expect("lambda was analyzed")),
            ),
            Metric::Heterogeneity => MetricVector::new(&label, column(&|r| r.heterogeneity)),
            Metric::NonLinearity => MetricVector::new(&label, column(&|r| r.non_linearity)),
            Metric::Permutation => {
                let score = options
                    .score
                    .unwrap_or_else(|| Score::default_for(predictor.output_kind()));
                let mut v = permutation_importance(
                    dataset,
                    predictor,
                    score,
                    options.repeats,
                    options.seed,
                )?;
                v.metric_name = label.clone();
                notes.push(format!(
                    "permutation importance: score {}, {} repeats, seed {}",
                    score.as_str(),
                    options.repeats,
                    options.seed
                ));
                v
            }
            Metric::Impurity => {
                let forest = forest.ok_or(Error::NotAForest)?;
                MetricVector::new(
                    &label,
                    names
                        .iter()
                        .cloned()
                        .zip(forest.impurity_decrease().iter().copied())
                        .collect(),
                )
            }
        };
        let normalized = match normalize(&raw) {
            Ok(v) => Some(v),
            Err(Error::AllZero) => {
                notes.push(format!("{label} is zero for every feature; not normalized"));
                None
            }
            Err(e) => return Err(e),
        };
        columns.push(MetricColumn {
            name: label,
            raw,
            normalized,
        });
    }

    let labels: Vec<String> = columns.iter().map(|c| c.name.clone()).collect();
    let values = columns
        .iter()
        .map(|a| {
            columns
                .iter()
                .map(|b| match (&a.normalized, &b.normalized) {
                    (Some(x), Some(y)) => pearson(x, y).ok(),
                    _ => None,
                })
                .collect()
        })
        .collect();

    let mut differences = Vec::new();
    if let Some(fi) = columns
        .iter()
        .find(|c| c.name == "fi")
        .and_then(|c| c.normalized.as_ref())
    {
        for other in columns.iter().filter(|c| c.name != "fi") {
            let Some(o) = &other.normalized else { continue };
            differences.push(difference_table(fi, o, options.top_k));
        }
    }

    Ok(ImpactReport {
        features: results,
        metrics: columns,
        correlations: CorrelationMatrix { labels, values },
        differences,
        notes,
    })
}

fn difference_table(fi: &MetricVector, other: &MetricVector, top_k: usize) -> DifferenceTable {
    let mut rows: Vec<DifferenceRow> = fi
        .values
        .iter()
        .map(|(name, &f)| {
            let o = other.values[name];
            DifferenceRow {
                feature: name.clone(),
                fi: f,
                other: o,
                difference: f - o,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.difference.total_cmp(&a.difference));
    if rows.len() > 2 * top_k {
        let tail = rows.split_off(rows.len() - top_k);
        rows.truncate(top_k);
        rows.extend(tail);
    }
    DifferenceTable {
        versus: other.metric_name.clone(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Target;
    use crate::predictors::{fit_forest, FittedLinearModel, FnPredictor, ForestConfig};
    use proptest::prelude::*;

    fn mv(pairs: &[(&str, f64)]) -> MetricVector {
        MetricVector::from_pairs("m", pairs.iter().map(|(k, v)| (*k, *v)))
    }

    #[test]
    fn normalize_examples() {
        let n = normalize(&mv(&[("a", 1.0), ("b", 3.0)])).unwrap();
        assert_eq!(n.get("a"), Some(25.0));
        assert_eq!(n.get("b"), Some(75.0));
        assert!(n.normalized);

        let n = normalize(&mv(&[("a", -2.0), ("b", 2.0)])).unwrap();
        assert_eq!(n.get("a"), Some(50.0));

        let n = normalize(&mv(&[("a", 0.004), ("b", 0.012), ("c", 0.024)])).unwrap();
        for (k, want) in [("a", 10.0), ("b", 30.0), ("c", 60.0)] {
            assert!((n.get(k).unwrap() - want).abs() < 1e-9);
        }

        assert!(matches!(normalize(&mv(&[("a", 0.0)])), Err(Error::AllZero)));
    }

    #[test]
    fn pearson_examples() {
        let v1 = mv(&[("a", 1.0), ("b", 2.0), ("c", 3.0), ("d", 4.0)]);
        let affine = mv(&[("a", 7.0), ("b", 9.0), ("c", 11.0), ("d", 13.0)]);
        let neg = mv(&[("a", -1.0), ("b", -2.0), ("c", -3.0), ("d", -4.0)]);
        let swapped = mv(&[("a", 1.0), ("b", 3.0), ("c", 2.0), ("d", 4.0)]);
        assert!((pearson(&v1, &affine).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&v1, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson(&v1, &swapped).unwrap() - 0.8).abs() < 1e-12);
        let flat = mv(&[("a", 1.0), ("b", 1.0), ("c", 1.0), ("d", 1.0)]);
        assert!(matches!(pearson(&v1, &flat), Err(Error::ZeroVariance(_))));
        let other = mv(&[("a", 1.0), ("b", 1.0), ("c", 1.0), ("e", 1.0)]);
        assert!(matches!(pearson(&v1, &other), Err(Error::FeatureSetMismatch)));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent_and_scale_free(
            vals in prop::collection::vec(0.001f64..1e3, 2..8),
            c in 0.01f64..100.0,
        ) {
            let names: Vec<String> = (0..vals.len()).map(|i| format!("f{i}")).collect();
            let v = MetricVector::from_pairs("m", names.iter().cloned().zip(vals.iter().copied()));
            let scaled = MetricVector::from_pairs("m", names.iter().cloned().zip(vals.iter().map(|x| c * x)));
            let n1 = normalize(&v).unwrap();
            let n2 = normalize(&n1).unwrap();
            let n3 = normalize(&scaled).unwrap();
            let sum: f64 = n1.values.values().sum();
            prop_assert!((sum - 100.0).abs() < 1e-9);
            for k in &names {
                prop_assert!((n1.values[k] - n2.values[k]).abs() < 1e-9);
                prop_assert!((n1.values[k] - n3.values[k]).abs() < 1e-9);
            }
            // argsort is unchanged
            let rank = |m: &MetricVector| {
                let mut idx: Vec<usize> = (0..names.len()).collect();
                idx.sort_by(|&a, &b| m.values[&names[a]].total_cmp(&m.values[&names[b]]).then(a.cmp(&b)));
                idx
            };
            prop_assert_eq!(rank(&v), rank(&n1));
        }

        #[test]
        fn pearson_is_affine_invariant(
            vals in prop::collection::vec(-100f64..100.0, 3..10),
            noise in prop::collection::vec(-100f64..100.0, 10),
            a in 0.1f64..10.0,
            b in -50f64..50.0,
        ) {
            let names: Vec<String> = (0..vals.len()).map(|i| format!("f{i}")).collect();
            let x = MetricVector::from_pairs("x", names.iter().cloned().zip(vals.iter().copied()));
            let y = MetricVector::from_pairs("y", names.iter().cloned().zip(noise.iter().copied()));
            let y2 = MetricVector::from_pairs("y2", names.iter().cloned().zip(noise.iter().map(|v| a * v + b)));
            if let (Ok(r1), Ok(r2)) = (pearson(&x, &y), pearson(&x, &y2)) {
                prop_assert!((r1 - r2).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn auc_matches_pair_counting() {
        let y = [0.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        let s = [0.1, 0.4, 0.35, 0.8, 0.8, 0.9];
        // pairs (pos, neg) with pos > neg, ties count half
        let mut wins = 0.0;
        let mut total = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                if y[i] == 1.0 && y[j] == 0.0 {
                    total += 1.0;
                    if s[i] > s[j] {
                        wins += 1.0;
                    } else if s[i] == s[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        assert!((auc(&y, &s) - wins / total).abs() < 1e-12);
    }

    fn binary_design(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![(i % 2) as f64, ((i * 37) % 11) as f64])
            .collect();
        let y = rows.iter().map(|r| r[0]).collect();
        Dataset::from_rows(["x0", "noise"], &rows, Some(Target { name: "y".into(), values: y }))
            .unwrap()
    }

    #[test]
    fn ignored_column_has_zero_importance() {
        let ds = binary_design(40);
        let f = FnPredictor::probability(|r: &[f64]| r[0]);
        let v = permutation_importance(&ds, &f, Score::Accuracy, 3, 5).unwrap();
        assert_eq!(v.get("noise"), Some(0.0));
    }

    #[test]
    fn perfect_model_importance_matches_direct_scores() {
        let ds = binary_design(40);
        let f = FnPredictor::probability(|r: &[f64]| r[0]);
        let v = permutation_importance(&ds, &f, Score::Accuracy, 1, 11).unwrap();
        let y = &ds.target().unwrap().values;
        let x0: Vec<f64> = ds.rows().column(0).to_vec();
        let order = permutation_order(11, 0, 0, 40);
        let hits = (0..40).filter(|&i| x0[order[i]] == y[i]).count();
        let want = 1.0 - hits as f64 / 40.0;
        assert!((v.get("x0").unwrap() - want).abs() < 1e-15);
        assert!(want > 0.0);
    }

    #[test]
    fn permutation_is_deterministic() {
        let ds = binary_design(40);
        let f = FnPredictor::probability(|r: &[f64]| 0.3 * r[0] + 0.05 * r[1]);
        let a = permutation_importance(&ds, &f, Score::Accuracy, 3, 9).unwrap();
        let b = permutation_importance(&ds, &f, Score::Accuracy, 3, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn incompatible_scores() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y = (0..10).map(|i| i as f64 * 1.5).collect();
        let ds = Dataset::from_rows(["x"], &rows, Some(Target { name: "y".into(), values: y }))
            .unwrap();
        let f = FnPredictor::new(|r: &[f64]| r[0]);
        for s in [Score::Auc, Score::Accuracy] {
            assert!(matches!(
                permutation_importance(&ds, &f, s, 1, 0),
                Err(Error::IncompatibleScore { .. })
            ));
        }
        assert!(permutation_importance(&ds, &f, Score::R2, 1, 0).is_ok());
    }

    fn forest_data(dup: bool) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        use rand::Rng;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..300 {
            let x0: f64 = rng.random();
            let noise: f64 = rng.random();
            y.push(if x0 > 0.5 { 1.0 } else { 0.0 });
            rows.push(if dup { vec![x0, x0, noise] } else { vec![x0, noise] });
        }
        let names: Vec<&str> = if dup {
            vec!["x0", "x0_copy", "noise"]
        } else {
            vec!["x0", "noise"]
        };
        Dataset::from_rows(names, &rows, Some(Target { name: "y".into(), values: y })).unwrap()
    }

    #[test]
    fn impurity_single_feature_gets_everything() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
        let y = (0..50).map(|i| (i >= 25) as u8 as f64).collect();
        let ds = Dataset::from_rows(["x"], &rows, Some(Target { name: "y".into(), values: y }))
            .unwrap();
        let h = fit_forest(&ds, ForestConfig { n_trees: 10, ..Default::default() }).unwrap();
        let v = impurity_importance(&h, &ds.feature_names()).unwrap();
        assert!((v.get("x").unwrap() - 100.0).abs() < 1e-12);
    }

    #[test]
    fn impurity_of_unused_constant_feature_is_zero() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, 2.0]).collect();
        let y = (0..50).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let ds = Dataset::from_rows(["x", "c"], &rows, Some(Target { name: "y".into(), values: y }))
            .unwrap();
        let h = fit_forest(&ds, ForestConfig { n_trees: 10, ..Default::default() }).unwrap();
        let v = impurity_importance(&h, &ds.feature_names()).unwrap();
        assert_eq!(v.get("c"), Some(0.0));
    }

    #[test]
    fn impurity_splits_between_duplicates() {
        let cfg = ForestConfig {
            n_trees: 100,
            seed: 42,
            ..Default::default()
        };
        let single = fit_forest(&forest_data(false), cfg).unwrap();
        let double = fit_forest(&forest_data(true), cfg).unwrap();
        let s = impurity_importance(&single, &forest_data(false).feature_names()).unwrap();
        let d = impurity_importance(&double, &forest_data(true).feature_names()).unwrap();
        let alone = s.get("x0").unwrap();
        let shared = d.get("x0").unwrap() + d.get("x0_copy").unwrap();
        assert!((shared - alone).abs() <= 0.10 * alone, "alone {alone}, shared {shared}");
    }

    #[test]
    fn impurity_requires_forest() {
        let h = PredictorHandle::from_linear(FittedLinearModel::new(0.0, vec![1.0]));
        assert!(matches!(impurity_importance(&h, &["x".into()]), Err(Error::NotAForest)));
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("idfi:0.75".parse::<Metric>().unwrap(), Metric::Idfi(0.75));
        assert!("idfi:1.5".parse::<Metric>().is_err());
        assert_eq!("perm".parse::<Metric>().unwrap(), Metric::Permutation);
        assert!("shap".parse::<Metric>().is_err());
        assert_eq!(Metric::Idfi(0.75).label(), "idfi_0.75");
    }

    #[test]
    fn linear_report_structure() {
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![(i % 7) as f64, ((i * 5) % 9) as f64 * 0.5, ((i * 3) % 4) as f64])
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[0] - r[1] + 0.2 * r[2]).collect();
        let ds = Dataset::from_rows(["a", "b", "c"], &rows, Some(Target { name: "y".into(), values: y }))
            .unwrap();
        let h = PredictorHandle::from_linear(crate::predictors::fit_ols(&ds).unwrap());
        let rep = report(
            &ds,
            &h,
            &[Metric::Fi, Metric::Permutation],
            &[0.75],
            &ReportOptions { top_k: 1, ..Default::default() },
        )
        .unwrap();
        assert_eq!(rep.correlations.labels, vec!["fi", "permutation"]);
        assert!((rep.correlations.get("fi", "fi").unwrap() - 1.0).abs() < 1e-12);
        assert!(rep.correlations.get("fi", "permutation").is_some());
        assert_eq!(rep.differences.len(), 1);
        let rows = &rep.differences[0].rows;
        assert_eq!(rows.len(), 2);
        assert!(rows[0].difference >= rows[1].difference);
        assert!(rep.features.iter().all(|f| f.idfi(0.75).is_some()));
        assert!(rep.notes.iter().any(|n| n.contains("SHAP")));
    }

    #[test]
    fn report_rejects_impurity_without_forest() {
        let ds = binary_design(10);
        let h = PredictorHandle::from_linear(FittedLinearModel::new(0.0, vec![1.0, 0.0]));
        assert!(matches!(
            report(&ds, &h, &[Metric::Fi, Metric::Impurity], &[], &ReportOptions::default()),
            Err(Error::NotAForest)
        ));
    }
}

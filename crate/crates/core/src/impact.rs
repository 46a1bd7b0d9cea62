//! Impact metrics computed from a [`PhantomGrid`].
//!
//! Every metric is built from the segment derivatives of the ICE curves,
//!
//! ```text
//! d[i][k] = (yhat(x_i[k]) - yhat(x_i[k-1])) / (grid[k] - grid[k-1]),  k = 2..n_grid
//! ```
//!
//! scaled by the feature's standard deviation `sigma`:
//!
//! * feature impact (FI): `sigma * mean |d|` over all observations and segments;
//! * directional FI: the same without the absolute value;
//! * in-distribution FI: a weighted mean of `|d|` where segment `k` of
//!   observation `i` has weight `lambda^(|grid[k] - x_i| / sigma)`;
//! * heterogeneity: `sigma` times the mean over segments of the spread of
//!   `d[.][k]` across observations;
//! * non-linearity: `sigma` times the mean over observations of the spread of
//!   `d[i][.]` across segments.
//!
//! Spreads are sample standard deviations (`n - 1`), 0 for a single value.
//! A feature with one distinct value scores 0 on every metric.

use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::dataset::{sample_rows, Dataset, SamplingConfig};
use crate::error::{Error, Result};
use crate::phantom::{build_grid_with, GridOptions, PhantomGrid};
use crate::predictors::Predictor;
use crate::stats;

/// Finite-difference slopes along every ICE curve of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentDerivatives {
    /// `slopes[i][k - 1]` is the slope of segment `k` of observation `i`.
    pub slopes: Vec<Vec<f64>>,
    /// Distance from each segment's right endpoint to the observation's own
    /// value, per observation and segment.
    distances: Vec<Vec<f64>>,
}

impl SegmentDerivatives {
    pub fn from_grid(grid: &PhantomGrid) -> Self {
        let g = &grid.grid_values;
        let runs: Vec<f64> = g.windows(2).map(|w| w[1] - w[0]).collect();
        let slopes = grid
            .curves
            .iter()
            .map(|c| {
                c.predictions
                    .windows(2)
                    .zip(&runs)
                    .map(|(y, run)| (y[1] - y[0]) / run)
                    .collect()
            })
            .collect();
        let distances = grid
            .curves
            .iter()
            .map(|c| g[1..].iter().map(|x| (x - c.real_value).abs()).collect())
            .collect();
        SegmentDerivatives { slopes, distances }
    }

    pub fn n_obs(&self) -> usize {
        self.slopes.len()
    }

    pub fn n_segments(&self) -> usize {
        self.slopes.first().map_or(0, Vec::len)
    }

    fn is_degenerate(&self) -> bool {
        self.n_obs() == 0 || self.n_segments() == 0
    }

    fn count(&self) -> f64 {
        (self.n_obs() * self.n_segments()) as f64
    }

    pub fn feature_impact(&self, sigma: f64) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        let total: f64 = self.slopes.iter().flatten().map(|d| d.abs()).sum();
        sigma * total / self.count()
    }

    pub fn feature_impact_directional(&self, sigma: f64) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        let total: f64 = self.slopes.iter().flatten().sum();
        sigma * total / self.count()
    }

    /// Segment weights `lambda^(distance / sigma)`, one per slope.
    pub fn weights(&self, sigma: f64, lambda: f64) -> Result<Vec<Vec<f64>>> {
        check_lambda(lambda)?;
        Ok(self
            .distances
            .iter()
            .map(|row| row.iter().map(|&d| decay(d, sigma, lambda)).collect())
            .collect())
    }

    pub fn in_distribution_impact(&self, sigma: f64, lambda: f64) -> Result<f64> {
        check_lambda(lambda)?;
        if self.is_degenerate() {
            return Ok(0.0);
        }
        let weights = self.weights(sigma, lambda)?;
        let (num, den) = weighted_sums(&self.slopes, weights.iter().flatten().copied());
        if den > 0.0 {
            return Ok(sigma * num / den);
        }
        // Every weight underflowed. The ratio is unchanged by a common factor,
        // so rescale in log space relative to the largest weight.
        let ln_lambda = lambda.ln();
        let exponents: Vec<f64> = self
            .distances
            .iter()
            .flatten()
            .map(|&d| if sigma > 0.0 { ln_lambda * d / sigma } else { 0.0 })
            .collect();
        let top = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (num, den) = weighted_sums(&self.slopes, exponents.iter().map(|e| (e - top).exp()));
        Ok(sigma * num / den)
    }

    pub fn heterogeneity(&self, sigma: f64) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        let m = self.n_segments();
        let total: f64 = (0..m)
            .map(|k| stats::sample_sd_iter(self.slopes.iter().map(|row| row[k])))
            .sum();
        sigma * total / m as f64
    }

    pub fn non_linearity(&self, sigma: f64) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        let total: f64 = self.slopes.iter().map(|row| stats::sample_sd(row)).sum();
        sigma * total / self.n_obs() as f64
    }
}

fn weighted_sums(slopes: &[Vec<f64>], weights: impl Iterator<Item = f64>) -> (f64, f64) {
    slopes
        .iter()
        .flatten()
        .zip(weights)
        .fold((0.0, 0.0), |(num, den), (d, w)| (num + w * d.abs(), den + w))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLambda(lambda))
    }
}

fn decay(distance: f64, sigma: f64, lambda: f64) -> f64 {
    if lambda == 1.0 || sigma == 0.0 || distance == 0.0 {
        return 1.0;
    }
    lambda.powf(distance / sigma)
}

/// Likelihood weight of a phantom value given the observation's real value:
/// `lambda^(|phantom - real| / sigma)`, with `sigma = 0` treated as weight 1.
pub fn likelihood(real_value: f64, phantom_value: f64, sigma: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(decay((phantom_value - real_value).abs(), sigma, lambda))
}

pub fn feature_impact(grid: &PhantomGrid, sigma: f64) -> f64 {
    SegmentDerivatives::from_grid(grid).feature_impact(sigma)
}

pub fn feature_impact_directional(grid: &PhantomGrid, sigma: f64) -> f64 {
    SegmentDerivatives::from_grid(grid).feature_impact_directional(sigma)
}

pub fn in_distribution_impact(grid: &PhantomGrid, sigma: f64, lambda: f64) -> Result<f64> {
    SegmentDerivatives::from_grid(grid).in_distribution_impact(sigma, lambda)
}

pub fn heterogeneity(grid: &PhantomGrid, sigma: f64) -> f64 {
    SegmentDerivatives::from_grid(grid).heterogeneity(sigma)
}

pub fn non_linearity(grid: &PhantomGrid, sigma: f64) -> f64 {
    SegmentDerivatives::from_grid(grid).non_linearity(sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdfiValue {
    pub lambda: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureImpactResult {
    pub feature: usize,
    pub name: String,
    pub sigma: f64,
    pub n_obs: usize,
    pub n_grid: usize,
    pub fi: f64,
    pub fi_directional: f64,
    #[serde(serialize_with = "idfi_as_map")]
    pub idfi: Vec<IdfiValue>,
    #[serde(rename = "he")]
    pub heterogeneity: f64,
    #[serde(rename = "nl")]
    pub non_linearity: f64,
}

impl FeatureImpactResult {
    pub fn idfi(&self, lambda: f64) -> Option<f64> {
        self.idfi
            .iter()
            .find(|v| v.lambda == lambda)
            .map(|v| v.value)
    }

    pub fn from_derivatives(
        feature: usize,
        name: String,
        sigma: f64,
        grid: &PhantomGrid,
        derivs: &SegmentDerivatives,
        lambdas: &[f64],
    ) -> Result<Self> {
        let idfi = lambdas
            .iter()
            .map(|&lambda| {
                Ok(IdfiValue {
                    lambda,
                    value: derivs.in_distribution_impact(sigma, lambda)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureImpactResult {
            feature,
            name,
            sigma,
            n_obs: grid.n_obs(),
            n_grid: grid.n_grid(),
            fi: derivs.feature_impact(sigma),
            fi_directional: derivs.feature_impact_directional(sigma),
            idfi,
            heterogeneity: derivs.heterogeneity(sigma),
            non_linearity: derivs.non_linearity(sigma),
        })
    }
}

fn idfi_as_map<S: Serializer>(values: &[IdfiValue], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(values.len()))?;
    for v in values {
        map.serialize_entry(&lambda_label(v.lambda), &v.value)?;
    }
    map.end()
}

/// Shortest decimal form of a lambda, used as a key and column label.
pub fn lambda_label(lambda: f64) -> String {
    format!("{lambda}")
}

#[derive(Debug, Clone, Default)]
pub struct AnalysisOptions {
    /// Restrict to these row ids; all rows when `None`.
    pub row_ids: Option<Vec<usize>>,
    /// Sample rows separately for each feature, stratified by that
    /// feature. Takes precedence over `row_ids`.
    pub sampling: Option<SamplingConfig>,
    pub grid: GridOptions,
    /// Worker threads for multi-feature analysis; 1 runs sequentially.
    pub jobs: usize,
}

/// Builds one grid for `feature` over all rows and derives every metric
/// from it.
pub fn analyze_feature<P: Predictor + ?Sized>(
    dataset: &Dataset,
    predictor: &P,
    feature: usize,
    lambdas: &[f64],
) -> Result<FeatureImpactResult> {
    analyze_feature_with(dataset, predictor, feature, lambdas, &AnalysisOptions::default())
}

pub fn analyze_feature_with<P: Predictor + ?Sized>(
    dataset: &Dataset,
    predictor: &P,
    feature: usize,
    lambdas: &[f64],
    options: &AnalysisOptions,
) -> Result<FeatureImpactResult> {
    for &l in lambdas {
        check_lambda(l)?;
    }
    let meta = dataset.feature(feature)?;
    let sampled;
    let ids = match (&options.sampling, &options.row_ids) {
        (Some(s), _) => {
            sampled = sample_rows(dataset, feature, s.per_quantile, s.quantiles, s.seed)?;
            &sampled[..]
        }
        (None, Some(ids)) => &ids[..],
        (None, None) => dataset.row_ids(),
    };
    let grid = build_grid_with(dataset, predictor, feature, ids, options.grid)?;
    let derivs = SegmentDerivatives::from_grid(&grid);
    FeatureImpactResult::from_derivatives(
        feature,
        meta.name.clone(),
        meta.std_dev,
        &grid,
        &derivs,
        lambdas,
    )
}

/// Analyzes several features, in parallel when `options.jobs > 1`. Results
/// come back in the order of `features` regardless of scheduling.
pub fn analyze_features<P: Predictor + ?Sized>(
    dataset: &Dataset,
    predictor: &P,
    features: &[usize],
    lambdas: &[f64],
    options: &AnalysisOptions,
) -> Result<Vec<FeatureImpactResult>> {
    for &l in lambdas {
        check_lambda(l)?;
    }
    let run = |&f: &usize| analyze_feature_with(dataset, predictor, f, lambdas, options);
    if options.jobs <= 1 {
        return features.iter().map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| features.par_iter().map(run).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::PhantomCurve;
    use crate::predictors::{FittedLinearModel, FnPredictor, PredictorHandle};

    fn grid_of(grid: Vec<f64>, curves: Vec<(f64, Vec<f64>)>) -> PhantomGrid {
        let curves = curves
            .into_iter()
            .enumerate()
            .map(|(i, (real_value, predictions))| PhantomCurve {
                row_id: i,
                real_value,
                predictions,
            })
            .collect();
        PhantomGrid::from_parts(0, grid, curves).unwrap()
    }

    fn square_grid(reals: &[f64]) -> PhantomGrid {
        let g = vec![0.0, 1.0, 2.0];
        grid_of(
            g.clone(),
            reals
                .iter()
                .map(|&r| (r, g.iter().map(|x| x * x).collect()))
                .collect(),
        )
    }

    #[test]
    fn fi_of_square_on_three_points() {
        // slopes (1-0)/1 = 1 and (4-1)/1 = 3, mean 2
        let g = square_grid(&[0.0, 1.0, 2.0]);
        assert!((feature_impact(&g, 1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fi_of_linear_curve_is_sigma_times_slope() {
        let g = grid_of(vec![-1.0, 0.5, 4.0], vec![(0.5, vec![3.0, -1.5, -12.0])]);
        // slope -3 everywhere
        assert!((feature_impact(&g, 0.7) - 2.1).abs() < 1e-12);
        assert!((feature_impact_directional(&g, 0.7) + 2.1).abs() < 1e-12);
    }

    #[test]
    fn constant_predictor_scores_zero() {
        let g = grid_of(vec![0.0, 1.0, 5.0], vec![(1.0, vec![2.0; 3]), (5.0, vec![2.0; 3])]);
        assert_eq!(feature_impact(&g, 3.0), 0.0);
        assert_eq!(in_distribution_impact(&g, 3.0, 0.5).unwrap(), 0.0);
        assert_eq!(heterogeneity(&g, 3.0), 0.0);
        assert_eq!(non_linearity(&g, 3.0), 0.0);
    }

    #[test]
    fn single_grid_value_scores_zero() {
        let g = grid_of(vec![4.0], vec![(4.0, vec![1.0]), (4.0, vec![7.0])]);
        assert_eq!(feature_impact(&g, 0.0), 0.0);
        assert_eq!(feature_impact_directional(&g, 0.0), 0.0);
        assert_eq!(in_distribution_impact(&g, 0.0, 0.3).unwrap(), 0.0);
        assert_eq!(heterogeneity(&g, 0.0), 0.0);
        assert_eq!(non_linearity(&g, 0.0), 0.0);
    }

    #[test]
    fn directional_cancels_on_symmetric_parabola() {
        let g = grid_of(vec![-1.0, 0.0, 1.0], vec![(0.0, vec![1.0, 0.0, 1.0])]);
        assert_eq!(feature_impact_directional(&g, 1.0), 0.0);
        assert_eq!(feature_impact(&g, 1.0), 1.0);
    }

    #[test]
    fn likelihood_values() {
        assert_eq!(likelihood(3.0, 3.0, 2.0, 0.1).unwrap(), 1.0);
        assert_eq!(likelihood(0.0, 2.0, 2.0, 0.5).unwrap(), 0.5);
        assert_eq!(likelihood(0.0, 4.0, 2.0, 0.5).unwrap(), 0.25);
        // exp(1.37 * ln 0.75), evaluated separately in log space
        let want = (1.37f64 * 0.75f64.ln()).exp();
        let got = likelihood(1.0, 1.0 + 1.37 * 0.4, 0.4, 0.75).unwrap();
        assert!((got - want).abs() < 1e-12);
        assert!((got - 0.67427).abs() < 1e-5);
        assert_eq!(likelihood(0.0, 9.0, 0.0, 0.5).unwrap(), 1.0);
        assert!(matches!(likelihood(0.0, 1.0, 1.0, 0.0), Err(Error::InvalidLambda(_))));
        assert!(matches!(likelihood(0.0, 1.0, 1.0, 1.5), Err(Error::InvalidLambda(_))));
        assert!(likelihood(0.0, 1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn idfi_single_observation_at_zero() {
        // weights 0.5^1 and 0.5^2 on slopes 1 and 3: (0.5 + 0.75) / 0.75
        let g = square_grid(&[0.0]);
        let v = in_distribution_impact(&g, 1.0, 0.5).unwrap();
        assert!((v - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn idfi_at_one_is_fi_bitwise() {
        let g = grid_of(
            vec![0.0, 0.3, 1.7, 2.2],
            vec![
                (0.3, vec![0.1, 0.7, -0.4, 2.9]),
                (2.2, vec![1.1, 1.3, 1.0, 0.2]),
                (0.0, vec![-5.0, 0.0, 0.5, 0.25]),
            ],
        );
        let d = SegmentDerivatives::from_grid(&g);
        let sigma = 0.987_654_321;
        assert_eq!(
            d.in_distribution_impact(sigma, 1.0).unwrap().to_bits(),
            d.feature_impact(sigma).to_bits()
        );
    }

    #[test]
    fn idfi_survives_underflowing_weights() {
        let g = grid_of(vec![0.0, 1000.0, 2000.0], vec![(0.0, vec![0.0, 1.0, 3.0])]);
        let v = in_distribution_impact(&g, 1.0, 1e-3).unwrap();
        assert!(v.is_finite());
        // the nearer segment dominates completely
        assert!((v - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn heterogeneity_of_two_slope_profiles() {
        // slopes 1 and 3 at every segment: SD = sqrt(2)
        let g = grid_of(
            vec![0.0, 1.0, 2.0, 3.0],
            vec![(0.0, vec![0.0, 1.0, 2.0, 3.0]), (1.0, vec![0.0, 3.0, 6.0, 9.0])],
        );
        assert!((heterogeneity(&g, 1.0) - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(non_linearity(&g, 1.0), 0.0);
    }

    #[test]
    fn heterogeneity_of_single_observation_is_zero() {
        assert_eq!(heterogeneity(&square_grid(&[1.0]), 1.0), 0.0);
    }

    #[test]
    fn non_linearity_of_square() {
        let g = square_grid(&[0.0, 2.0]);
        assert!((non_linearity(&g, 1.0) - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(heterogeneity(&g, 1.0), 0.0);
    }

    #[test]
    fn non_linearity_with_one_segment_is_zero() {
        let g = grid_of(vec![0.0, 1.0], vec![(0.0, vec![0.0, 5.0]), (1.0, vec![1.0, 2.0])]);
        assert_eq!(non_linearity(&g, 1.0), 0.0);
    }

    #[test]
    fn analyze_linear_model() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![(i % 5) as f64 * 0.7, (i * i % 7) as f64])
            .collect();
        let ds = Dataset::from_rows(["a", "b"], &rows, None).unwrap();
        let h = PredictorHandle::from_linear(FittedLinearModel::new(1.0, vec![-2.5, 0.5]));
        let r = analyze_feature(&ds, &h, 0, &[1.0, 0.75]).unwrap();
        let sigma = ds.features()[0].std_dev;
        assert!((r.fi - sigma * 2.5).abs() < 1e-12);
        assert!((r.fi_directional + sigma * 2.5).abs() < 1e-12);
        assert!(r.heterogeneity < 1e-12 && r.non_linearity < 1e-12);
        assert_eq!(r.idfi(1.0).unwrap().to_bits(), r.fi.to_bits());
        assert!(r.idfi(0.75).is_some());
        assert_eq!(r.n_obs, 12);
        assert_eq!(r.n_grid, 5);
    }

    #[test]
    fn interaction_is_heterogeneous() {
        let rows = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let ds = Dataset::from_rows(["x0", "x1"], &rows, None).unwrap();
        let f = FnPredictor::new(|r: &[f64]| r[0] * r[1]);
        for feature in 0..2 {
            let r = analyze_feature(&ds, &f, feature, &[]).unwrap();
            // slopes are {0, 0, 1, 1} across observations: SD = sqrt(1/3)
            let want = ds.features()[feature].std_dev * (1.0f64 / 3.0).sqrt();
            assert!((r.heterogeneity - want).abs() < 1e-12);
        }
    }

    #[test]
    fn analyze_rejects_bad_lambda_before_predicting() {
        let ds = Dataset::from_rows(["x"], &[vec![0.0], vec![1.0]], None).unwrap();
        let f = FnPredictor::new(|_: &[f64]| panic!("must not be called"));
        assert!(matches!(
            analyze_feature(&ds, &f, 0, &[0.0]),
            Err(Error::InvalidLambda(_))
        ));
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i % 6) as f64, (i % 4) as f64 * 1.5, ((i * 7) % 11) as f64])
            .collect();
        let ds = Dataset::from_rows(["a", "b", "c"], &rows, None).unwrap();
        let f = FnPredictor::new(|r: &[f64]| (r[0] * r[1]).sin() + r[2] * r[2]);
        let seq = analyze_features(&ds, &f, &[0, 1, 2], &[0.5], &AnalysisOptions::default()).unwrap();
        let par = analyze_features(
            &ds,
            &f,
            &[0, 1, 2],
            &[0.5],
            &AnalysisOptions {
                jobs: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(seq, par);
    }
}

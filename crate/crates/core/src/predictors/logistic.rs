//! Logistic regression fitted by full-batch gradient descent on standardized
//! features.

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numfmt::fmt_g17;
use crate::predictors::{HandleKind, Model, OutputKind, PredictorHandle};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Recorded for provenance. Full-batch descent from a zero start has no
    /// random component.
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            epochs: 500,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub bias: f64,
    /// Coefficients in standardized feature space.
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    /// Scale used for standardization; 1 for constant columns.
    pub scales: Vec<f64>,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn standardized_coefficients(&self) -> &[f64] {
        &self.weights
    }

    fn logit(&self, x: impl IntoIterator<Item = f64>) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.scales))
            .zip(x)
            .fold(self.bias, |acc, ((w, (m, s)), v)| acc + w * ((v - m) / s))
    }

    pub fn predict_one(&self, x: impl IntoIterator<Item = f64>) -> f64 {
        sigmoid(self.logit(x))
    }

    pub(crate) fn predict_rows(&self, rows: ArrayView2<'_, f64>) -> Vec<f64> {
        rows.outer_iter()
            .map(|r| self.predict_one(r.iter().copied()))
            .collect()
    }
}

pub fn fit_logistic(dataset: &Dataset, config: LogisticConfig) -> Result<PredictorHandle> {
    let target = dataset.target().ok_or(Error::NoTarget)?;
    if !target.is_binary() {
        return Err(Error::NonBinaryTarget("logistic regression"));
    }
    if config.epochs == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::InvalidArgument(
            "logistic regression needs epochs >= 1 and a positive learning rate".into(),
        ));
    }
    let x = dataset.rows();
    let (n, p) = x.dim();

    let means: Vec<f64> = (0..p).map(|j| x.column(j).sum() / n as f64).collect();
    let scales: Vec<f64> = (0..p)
        .map(|j| {
            let sd = stats::sample_sd_iter(x.column(j).iter().copied());
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let z: Vec<Vec<f64>> = x
        .outer_iter()
        .map(|r| (0..p).map(|j| (r[j] - means[j]) / scales[j]).collect())
        .collect();

    let mut bias = 0.0;
    let mut weights = vec![0.0; p];
    let mut grad = vec![0.0; p];
    for _ in 0..config.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (zi, &yi) in z.iter().zip(&target.values) {
            let logit = zi.iter().zip(&weights).fold(bias, |a, (v, w)| a + v * w);
            let err = sigmoid(logit) - yi;
            grad_b += err;
            for (g, v) in grad.iter_mut().zip(zi) {
                *g += err * v;
            }
        }
        let step = config.learning_rate / n as f64;
        bias -= step * grad_b;
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= step * g;
        }
    }

    let model = LogisticModel {
        bias,
        weights,
        means,
        scales,
    };
    let mut metadata = BTreeMap::new();
    metadata.insert("model".into(), "logistic".into());
    metadata.insert("epochs".into(), config.epochs.to_string());
    metadata.insert("learning_rate".into(), fmt_g17(config.learning_rate));
    metadata.insert("seed".into(), config.seed.to_string());
    metadata.insert("coefficient_space".into(), "standardized".into());
    Ok(PredictorHandle::new(
        HandleKind::BuiltinLogistic,
        OutputKind::Probability,
        metadata,
        Model::Logistic(model),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Target;
    use crate::predictors::Predictor;
    use ndarray::Array2;

    fn ds(xs: &[f64], ys: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        Dataset::from_rows(
            ["x"],
            &rows,
            Some(Target {
                name: "y".into(),
                values: ys.to_vec(),
            }),
        )
        .unwrap()
    }

    #[test]
    fn separable_data_gives_monotone_probabilities() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| if x >= 10.0 { 1.0 } else { 0.0 }).collect();
        let h = fit_logistic(&ds(&xs, &ys), LogisticConfig::default()).unwrap();
        let grid = Array2::from_shape_fn((50, 1), |(i, _)| i as f64 * 0.5 - 2.0);
        let p = h.predict(grid.view()).unwrap();
        assert!(p.windows(2).all(|w| w[1] > w[0]));
        assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn all_zero_target_stays_below_half() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let h = fit_logistic(&ds(&xs, &[0.0; 10]), LogisticConfig::default()).unwrap();
        let grid = Array2::from_shape_fn((30, 1), |(i, _)| i as f64 - 10.0);
        assert!(h.predict(grid.view()).unwrap().iter().all(|&p| p < 0.5));
    }

    #[test]
    fn symmetric_data_is_half_at_centre() {
        // labels mirrored around x = 0.5, with some overlap so weights stay finite
        let xs = [0.0, 0.1, 0.2, 0.3, 0.45, 0.55, 0.7, 0.8, 0.9, 1.0];
        let ys = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
        let h = fit_logistic(&ds(&xs, &ys), LogisticConfig::default()).unwrap();
        let p = h.predict(ndarray::array![[0.5]].view()).unwrap()[0];
        assert!((p - 0.5).abs() < 1e-3, "p = {p}");
    }

    #[test]
    fn rejects_non_binary_target() {
        let err = fit_logistic(&ds(&[1.0, 2.0], &[0.0, 2.0]), LogisticConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::NonBinaryTarget(_)));
    }
}

//! Batch prediction over built-in reference models and external processes.
//!
//! Everything downstream talks to a [`Predictor`]: a `k x p` matrix goes in,
//! `k` finite reals come out, and the same rows always produce the same
//! values. [`PredictorHandle`] bundles the built-in models and the external
//! bridge behind that contract together with descriptive metadata.

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod external;
pub mod forest;
pub mod linear;
pub mod logistic;

pub use external::{external_predictor, ExternalConfig, ExternalPredictor};
pub use forest::{fit_forest, fit_tree, Forest, ForestConfig};
pub use linear::{fit_ols, fit_ols_with, FittedLinearModel, OlsConfig};
pub use logistic::{fit_logistic, LogisticConfig, LogisticModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputKind {
    RegressionScore,
    Probability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HandleKind {
    BuiltinOls,
    BuiltinLogistic,
    BuiltinTree,
    BuiltinForest,
    External,
}

impl HandleKind {
    pub fn is_builtin(&self) -> bool {
        !matches!(self, HandleKind::External)
    }
}

/// A deterministic batch prediction function.
pub trait Predictor: Send + Sync {
    fn output_kind(&self) -> OutputKind;

    /// Column count the model was trained on, if it knows.
    fn expected_features(&self) -> Option<usize> {
        None
    }

    /// Predicts without the shape and finiteness checks of [`predict`](Self::predict).
    fn raw_predict(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>>;

    fn predict(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if let Some(p) = self.expected_features() {
            if rows.ncols() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: rows.ncols(),
                });
            }
        }
        if rows.nrows() == 0 {
            return Ok(Vec::new());
        }
        let out = self.raw_predict(rows)?;
        if out.len() != rows.nrows() {
            return Err(Error::DimensionMismatch {
                expected: rows.nrows(),
                got: out.len(),
            });
        }
        if let Some((row, &value)) = out.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinitePrediction { row, value });
        }
        Ok(out)
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn output_kind(&self) -> OutputKind {
        (**self).output_kind()
    }
    fn expected_features(&self) -> Option<usize> {
        (**self).expected_features()
    }
    fn raw_predict(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        (**self).raw_predict(rows)
    }
}

/// Wraps a row-wise closure as a regression-score predictor.
pub struct FnPredictor<F> {
    f: F,
    output_kind: OutputKind,
}

impl<F> FnPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnPredictor {
            f,
            output_kind: OutputKind::RegressionScore,
        }
    }

    pub fn probability(f: F) -> Self {
        FnPredictor {
            f,
            output_kind: OutputKind::Probability,
        }
    }
}

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn output_kind(&self) -> OutputKind {
        self.output_kind
    }

    fn raw_predict(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let mut buf = Vec::with_capacity(rows.ncols());
        Ok(rows
            .outer_iter()
            .map(|r| {
                buf.clear();
                buf.extend(r.iter().copied());
                (self.f)(&buf)
            })
            .collect())
    }
}

#[derive(Debug)]
pub enum Model {
    Linear(FittedLinearModel),
    Logistic(LogisticModel),
    Forest(Forest),
    External(ExternalPredictor),
}

/// A fitted built-in model or an external process, plus metadata describing
/// how it was obtained (hyperparameters, seed, command line).
#[derive(Debug)]
pub struct PredictorHandle {
    pub kind: HandleKind,
    pub output_kind: OutputKind,
    pub metadata: BTreeMap<String, String>,
    model: Model,
}

impl PredictorHandle {
    pub fn new(
        kind: HandleKind,
        output_kind: OutputKind,
        metadata: BTreeMap<String, String>,
        model: Model,
    ) -> Self {
        PredictorHandle {
            kind,
            output_kind,
            metadata,
            model,
        }
    }

    pub fn from_linear(model: FittedLinearModel) -> Self {
        let metadata = model.metadata();
        PredictorHandle::new(
            HandleKind::BuiltinOls,
            OutputKind::RegressionScore,
            metadata,
            Model::Linear(model),
        )
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn as_forest(&self) -> Option<&Forest> {
        match &self.model {
            Model::Forest(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_linear(&self) -> Option<&FittedLinearModel> {
        match &self.model {
            Model::Linear(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_logistic(&self) -> Option<&LogisticModel> {
        match &self.model {
            Model::Logistic(m) => Some(m),
            _ => None,
        }
    }

    pub fn is_external(&self) -> bool {
        matches!(self.model, Model::External(_))
    }
}

impl Predictor for PredictorHandle {
    fn output_kind(&self) -> OutputKind {
        self.output_kind
    }

    fn expected_features(&self) -> Option<usize> {
        match &self.model {
            Model::Linear(m) => Some(m.coefficients.len()),
            Model::Logistic(m) => Some(m.n_features()),
            Model::Forest(f) => Some(f.n_features()),
            Model::External(e) => e.expected_features(),
        }
    }

    fn raw_predict(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        match &self.model {
            Model::Linear(m) => Ok(m.predict_rows(rows)),
            Model::Logistic(m) => Ok(m.predict_rows(rows)),
            Model::Forest(f) => Ok(f.predict_rows(rows)),
            Model::External(e) => e.predict_batch(rows),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn linear_handle_predicts_formula() {
        let h = PredictorHandle::from_linear(FittedLinearModel::new(1.0, vec![2.0]));
        let out = h.predict(array![[0.0], [1.0], [3.0]].view()).unwrap();
        assert_eq!(out, vec![1.0, 3.0, 7.0]);
    }

    #[test]
    fn empty_batch_yields_empty_vector() {
        let h = PredictorHandle::from_linear(FittedLinearModel::new(1.0, vec![2.0, 3.0]));
        let rows = ndarray::Array2::<f64>::zeros((0, 2));
        assert!(h.predict(rows.view()).unwrap().is_empty());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let h = PredictorHandle::from_linear(FittedLinearModel::new(0.0, vec![1.0, 1.0]));
        let err = h.predict(array![[1.0, 2.0, 3.0]].view()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 3 }));
    }

    #[test]
    fn non_finite_predictions_are_rejected() {
        let f = FnPredictor::new(|r: &[f64]| 1.0 / r[0]);
        let err = f.predict(array![[1.0], [0.0]].view()).unwrap_err();
        assert!(matches!(err, Error::NonFinitePrediction { row: 1, .. }));
    }
}

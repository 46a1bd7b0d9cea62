//! Ordinary least squares through the normal equations.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numfmt::fmt_g17;

/// Ridge added to the Gram matrix when it is singular.
pub const RIDGE_FALLBACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Ridge term used during fitting, if the fallback engaged.
    pub ridge: Option<f64>,
}

impl FittedLinearModel {
    pub fn new(intercept: f64, coefficients: Vec<f64>) -> Self {
        FittedLinearModel {
            intercept,
            coefficients,
            ridge: None,
        }
    }

    /// `intercept + sum_j coefficients[j] * x[j]`, accumulated left to right.
    pub fn predict_one(&self, x: impl IntoIterator<Item = f64>) -> f64 {
        self.coefficients
            .iter()
            .zip(x)
            .fold(self.intercept, |acc, (c, v)| acc + c * v)
    }

    pub(crate) fn predict_rows(&self, rows: ArrayView2<'_, f64>) -> Vec<f64> {
        rows.outer_iter()
            .map(|r| self.predict_one(r.iter().copied()))
            .collect()
    }

    pub(crate) fn metadata(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("model".into(), "ols".into());
        if let Some(r) = self.ridge {
            m.insert("ridge_fallback".into(), fmt_g17(r));
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlsConfig {
    /// Add `RIDGE_FALLBACK * I` instead of failing on a singular Gram matrix.
    pub ridge_fallback: bool,
}

impl Default for OlsConfig {
    fn default() -> Self {
        OlsConfig {
            ridge_fallback: true,
        }
    }
}

pub fn fit_ols(dataset: &Dataset) -> Result<FittedLinearModel> {
    fit_ols_with(dataset, OlsConfig::default())
}

/// Solves the normal equations on mean-centered data, then recovers the
/// intercept from the means. Centering keeps the Gram matrix well conditioned
/// when features sit far from zero.
pub fn fit_ols_with(dataset: &Dataset, config: OlsConfig) -> Result<FittedLinearModel> {
    let target = dataset.target().ok_or(Error::NoTarget)?;
    let x = dataset.rows();
    let (n, p) = x.dim();
    let y = &target.values;

    let x_mean: Vec<f64> = (0..p)
        .map(|j| x.column(j).sum() / n as f64)
        .collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;

    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    for (i, row) in x.outer_iter().enumerate() {
        let yc = y[i] - y_mean;
        for a in 0..p {
            let xa = row[a] - x_mean[a];
            rhs[a] += xa * yc;
            for b in a..p {
                gram[(a, b)] += xa * (row[b] - x_mean[b]);
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }

    let mut ridge = None;
    let solution = match solve_spd(&gram, &rhs) {
        Some(beta) if n > p => beta,
        _ => {
            if !config.ridge_fallback {
                return Err(Error::RankDeficient(if n <= p {
                    format!("{n} rows for {p} features plus intercept")
                } else {
                    "Gram matrix is singular".to_string()
                }));
            }
            ridge = Some(RIDGE_FALLBACK);
            let regularized = &gram + DMatrix::<f64>::identity(p, p) * RIDGE_FALLBACK;
            solve_spd(&regularized, &rhs).ok_or_else(|| {
                Error::RankDeficient("singular even after ridge fallback".into())
            })?
        }
    };

    let coefficients: Vec<f64> = solution.iter().copied().collect();
    let intercept = coefficients
        .iter()
        .zip(&x_mean)
        .fold(y_mean, |acc, (b, m)| acc - b * m);
    Ok(FittedLinearModel {
        intercept,
        coefficients,
        ridge,
    })
}

/// Cholesky solve that also refuses numerically singular systems: a pivot
/// that collapses below `1e-10` of its diagonal entry means the column is
/// (nearly) a combination of the earlier ones.
fn solve_spd(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let chol = gram.clone().cholesky()?;
    let l = chol.l_dirty();
    for i in 0..gram.nrows() {
        let pivot = l[(i, i)] * l[(i, i)];
        if gram[(i, i)] <= 0.0 || pivot < 1e-10 * gram[(i, i)] {
            return None;
        }
    }
    Some(chol.solve(rhs))
}

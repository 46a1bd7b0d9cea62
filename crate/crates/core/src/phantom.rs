//! Phantom observations: copies of real rows with the at-issue feature swept
//! over every value it takes in the data.
//!
//! For `n` observations and a feature with `n_grid` distinct values the grid
//! holds `n * n_grid` predictions, one curve per observation. Exactly one
//! phantom per curve equals the untouched row, so the curve passes through
//! the model's actual prediction for that observation.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::predictors::Predictor;

/// Observations per prediction batch.
pub const DEFAULT_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomCurve {
    pub row_id: usize,
    /// The observation's own value of the at-issue feature.
    pub real_value: f64,
    /// One prediction per grid value, ascending by grid value.
    pub predictions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomGrid {
    pub feature: usize,
    /// Sorted unique values of the feature, strictly increasing.
    pub grid_values: Vec<f64>,
    pub curves: Vec<PhantomCurve>,
}

impl PhantomGrid {
    /// Assembles a grid from precomputed curves, checking the shape
    /// invariants.
    pub fn from_parts(
        feature: usize,
        grid_values: Vec<f64>,
        curves: Vec<PhantomCurve>,
    ) -> Result<Self> {
        if grid_values.is_empty() {
            return Err(Error::InvalidArgument("grid must have at least one value".into()));
        }
        if grid_values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "grid values must be strictly increasing".into(),
            ));
        }
        if let Some(c) = curves
            .iter()
            .find(|c| c.predictions.len() != grid_values.len())
        {
            return Err(Error::DimensionMismatch {
                expected: grid_values.len(),
                got: c.predictions.len(),
            });
        }
        Ok(PhantomGrid {
            feature,
            grid_values,
            curves,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.curves.len()
    }

    pub fn n_grid(&self) -> usize {
        self.grid_values.len()
    }

    /// Index of a value on the grid, if present.
    pub fn grid_index(&self, value: f64) -> Option<usize> {
        self.grid_values
            .binary_search_by(|g| g.total_cmp(&value))
            .ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridOptions {
    /// Observations whose phantoms are predicted together in one batch.
    pub chunk_size: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            chunk_size: DEFAULT_CHUNK,
        }
    }
}

/// Builds the phantom grid for `feature` over the given rows.
pub fn build_grid<P: Predictor + ?Sized>(
    dataset: &Dataset,
    predictor: &P,
    feature: usize,
    row_ids: &[usize],
) -> Result<PhantomGrid> {
    build_grid_with(dataset, predictor, feature, row_ids, GridOptions::default())
}

pub fn build_grid_with<P: Predictor + ?Sized>(
    dataset: &Dataset,
    predictor: &P,
    feature: usize,
    row_ids: &[usize],
    options: GridOptions,
) -> Result<PhantomGrid> {
    let meta = dataset.feature(feature)?;
    if row_ids.is_empty() {
        return Err(Error::InvalidArgument("no observations selected".into()));
    }
    let positions = row_ids
        .iter()
        .map(|&id| {
            dataset
                .position_of(id)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown row id {id}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let grid = &meta.unique_values;
    let n_grid = grid.len();
    let p = dataset.n_features();
    let chunk = options.chunk_size.max(1);
    let rows = dataset.rows();

    let mut curves = Vec::with_capacity(positions.len());
    for (ids, pos_chunk) in row_ids.chunks(chunk).zip(positions.chunks(chunk)) {
        let mut phantoms = Array2::<f64>::zeros((pos_chunk.len() * n_grid, p));
        for (o, &pos) in pos_chunk.iter().enumerate() {
            let source = rows.row(pos);
            for (k, &g) in grid.iter().enumerate() {
                let mut target = phantoms.row_mut(o * n_grid + k);
                target.assign(&source);
                target[feature] = g;
            }
        }
        let preds = predictor
            .predict(phantoms.view())
            .map_err(|e| e.in_feature(feature))?;
        for (o, (&id, &pos)) in ids.iter().zip(pos_chunk).enumerate() {
            curves.push(PhantomCurve {
                row_id: id,
                real_value: rows[[pos, feature]],
                predictions: preds[o * n_grid..(o + 1) * n_grid].to_vec(),
            });
        }
    }

    Ok(PhantomGrid {
        feature,
        grid_values: grid.clone(),
        curves,
    })
}

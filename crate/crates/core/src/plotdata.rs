//! ICE and centered ICE curve data for external plotting.

use std::io::Write;

use serde::Serialize;

use crate::dataset::{sample_rows, Dataset, SamplingConfig};
use crate::error::{Error, Result};
use crate::numfmt::fmt_g17;
use crate::phantom::{build_grid, PhantomGrid};
use crate::predictors::Predictor;

pub const CSV_HEADER: &str = "feature,row_id,grid_x,y_hat,in_half_sigma,centered";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    /// Within half a standard deviation of the observation's own value.
    pub in_half_sigma: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub row_id: usize,
    pub real_value: f64,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSet {
    pub feature: String,
    pub sigma: f64,
    pub centered: bool,
    pub curves: Vec<Curve>,
}

impl CurveSet {
    /// Converts a phantom grid into curves, optionally shifted so each starts
    /// at zero.
    pub fn from_grid(grid: &PhantomGrid, feature: String, sigma: f64, centered: bool) -> Self {
        let half = sigma / 2.0;
        let curves = grid
            .curves
            .iter()
            .map(|c| {
                let offset = if centered { c.predictions[0] } else { 0.0 };
                let points = grid
                    .grid_values
                    .iter()
                    .zip(&c.predictions)
                    .map(|(&x, &y)| CurvePoint {
                        x,
                        y: y - offset,
                        in_half_sigma: (x - c.real_value).abs() <= half,
                    })
                    .collect();
                Curve {
                    row_id: c.row_id,
                    real_value: c.real_value,
                    points,
                }
            })
            .collect();
        CurveSet {
            feature,
            sigma,
            centered,
            curves,
        }
    }

    /// Long-form CSV, one line per curve point.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(CSV_HEADER.split(','))?;
        for c in &self.curves {
            let row_id = c.row_id.to_string();
            for p in &c.points {
                w.write_record([
                    self.feature.as_str(),
                    &row_id,
                    &fmt_g17(p.x),
                    &fmt_g17(p.y),
                    if p.in_half_sigma { "true" } else { "false" },
                    if self.centered { "true" } else { "false" },
                ])?;
            }
        }
        w.flush().map_err(|source| Error::Io {
            path: "<output>".into(),
            source,
        })?;
        Ok(())
    }
}

fn curves<P: Predictor + ?Sized>(
    dataset: &Dataset,
    predictor: &P,
    feature: usize,
    sampling: Option<SamplingConfig>,
    centered: bool,
) -> Result<CurveSet> {
    let meta = dataset.feature(feature)?;
    let ids = match sampling {
        Some(s) => sample_rows(dataset, feature, s.per_quantile, s.quantiles, s.seed)?,
        None => dataset.row_ids().to_vec(),
    };
    let grid = build_grid(dataset, predictor, feature, &ids)?;
    Ok(CurveSet::from_grid(&grid, meta.name.clone(), meta.std_dev, centered))
}

/// One curve per (sampled) observation; all rows when `sampling` is `None`.
pub fn ice_curves<P: Predictor + ?Sized>(
    dataset: &Dataset,
    predictor: &P,
    feature: usize,
    sampling: Option<SamplingConfig>,
) -> Result<CurveSet> {
    curves(dataset, predictor, feature, sampling, false)
}

/// As [`ice_curves`] with each curve shifted so its minimum-x point is 0.
pub fn c_ice_curves<P: Predictor + ?Sized>(
    dataset: &Dataset,
    predictor: &P,
    feature: usize,
    sampling: Option<SamplingConfig>,
) -> Result<CurveSet> {
    curves(dataset, predictor, feature, sampling, true)
}

//! Feature impact metrics for black-box models, drawn from Individual
//! Conditional Expectation (ICE) curves.
//!
//! The pipeline is: load a [`Dataset`], obtain something that implements
//! [`Predictor`] (a built-in reference model, an external process, or a
//! closure), sweep each feature over its observed values to build a
//! [`PhantomGrid`], and reduce the grid to impact metrics with
//! [`impact::analyze_feature`]. The [`comparison`] module puts those metrics
//! next to classical importances and [`plotdata`] exports ICE / c-ICE curves.

pub mod comparison;
pub mod dataset;
pub mod error;
pub mod impact;
pub mod numfmt;
pub mod phantom;
pub mod plotdata;
pub mod predictors;
pub mod stats;

pub use comparison::{ImpactReport, MetricVector};
pub use dataset::{Dataset, FeatureKind, FeatureMeta, ImputeStrategy, LoadOptions};
pub use error::{Error, Result};
pub use impact::FeatureImpactResult;
pub use phantom::PhantomGrid;
pub use plotdata::CurveSet;
pub use predictors::{OutputKind, Predictor, PredictorHandle};

//! Robust sigmoid growth-curve regression.
//!
//! Curves from [`catalog`] are fitted to time series by minimizing either the
//! log-score or the Tsallis score ([`scoring`], [`estimation`]). [`inference`]
//! provides the sandwich variance with Wald and score-ratio tests,
//! [`diagnostics`] the influence functions, [`prediction`] estimative
//! densities and forecasts, and [`simulation`] a Monte Carlo harness that
//! compares the two estimators under contamination. [`data`] loads epidemic
//! CSV series.

pub mod catalog;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod mixture;
pub mod model;
pub mod numeric;
pub mod optimize;
pub mod prediction;
pub mod scoring;
pub mod simulation;

pub use catalog::{CurveFamily, CurveParams};
pub use data::{load_csv, EpidemicSeries, Layout, LoadOptions, SeriesKind};
pub use error::{Error, Result};
pub use estimation::{fit, fit_mle, FitOptions, FitResult};
pub use inference::{infer, InferenceReport, SigmaConvention};
pub use mixture::MixtureMethod;
pub use model::{RegressionModel, Theta};
pub use prediction::{estimative_density, forecast_curve};
pub use scoring::{Objective, TsallisConfig};
pub use simulation::{run_simulation, SimScenario, SimulationReport};

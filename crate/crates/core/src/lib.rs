//! Bayesian disaggregation of aggregated functional data.
//!
//! Observed curves are weighted sums of unobserved category curves plus a
//! correlated error process. This crate fits the category curves and the
//! error covariance by MCMC and predicts the category curves for new
//! aggregates.

pub mod basis;
pub mod error;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod model;
pub mod predictive;
pub mod seed;
pub mod simulate;
pub mod summary;

pub use basis::BasisSpec;
pub use error::{Error, Result, Violation};
pub use inference::{
    diagnostics, run_mcmc, ChainOutput, DiagnosticsReport, McmcConfig, PriorSpec,
};
pub use model::{
    covariance_matrix, cross_covariance, parameter_names, validate_dataset, AggregatedDataset, CovarianceKind,
    CovarianceParams, CovarianceSpec, ParameterState,
};
pub use predictive::{conditional_predictive, predictive_draws, PredictiveOutput, PredictiveRequest};
pub use simulate::{generate, scenario_presets, SimulationScenario};
pub use summary::{summarize_alpha, summarize_eta, CurveBand};

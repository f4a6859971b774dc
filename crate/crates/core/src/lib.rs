//! Sparse vector autoregression: joint group-lasso / graphical-lasso
//! estimation, least-squares and Bayesian baselines, generalized impulse
//! responses with bootstrap bands, evaluation metrics and a Monte Carlo
//! experiment harness.

pub mod app;
pub mod audit;
pub mod benchmarks;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod glasso;
pub mod grouplasso;
pub mod irf;
pub mod linalg;
pub mod method;
pub mod var_model;

pub use error::{Result, VarError};
pub use estimator::{FitConfig, FitResult, InformationCriterion, Selection};
pub use irf::GirfResult;
pub use method::{Method, MethodConfig};
pub use var_model::{ErrorModel, StackedDesign, TimeSeriesPanel, VarCoefficients};

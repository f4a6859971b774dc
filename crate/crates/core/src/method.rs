//! Uniform dispatch over the sparse estimator and the baselines.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::benchmarks::{self, MinnesotaHyper, NiwHyper};
use crate::error::{Result, VarError};
use crate::estimator::{self, FitConfig, FitResult, Selection};
use crate::var_model::TimeSeriesPanel;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
pub enum Method {
    #[serde(rename = "sparse")]
    Sparse,
    #[serde(rename = "ls")]
    Ls,
    #[serde(rename = "rls1")]
    RestrictedOneStep,
    #[serde(rename = "rlsit")]
    RestrictedIterative,
    #[serde(rename = "minnesota")]
    Minnesota,
    #[serde(rename = "niw")]
    Niw,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Sparse,
        Method::Ls,
        Method::RestrictedOneStep,
        Method::RestrictedIterative,
        Method::Minnesota,
        Method::Niw,
    ];

    /// Short identifier used on the command line and in output files.
    pub fn name(&self) -> &'static str {
        match self {
            Method::Sparse => "sparse",
            Method::Ls => "ls",
            Method::RestrictedOneStep => "rls1",
            Method::RestrictedIterative => "rlsit",
            Method::Minnesota => "minnesota",
            Method::Niw => "niw",
        }
    }

    /// Row label in the report table.
    pub fn label(&self) -> &'static str {
        match self {
            Method::Sparse => "Sparse VAR",
            Method::Ls => "LS",
            Method::RestrictedOneStep => "Restricted LS (1-step)",
            Method::RestrictedIterative => "Restricted LS (iterative)",
            Method::Minnesota => "Bayesian: Minnesota",
            Method::Niw => "Bayesian: NIW",
        }
    }

    /// Whether the estimator produces exact zeros.
    pub fn is_sparse(&self) -> bool {
        matches!(
            self,
            Method::Sparse | Method::RestrictedOneStep | Method::RestrictedIterative
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = VarError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                VarError::InvalidArgument(format!(
                    "unknown method '{s}' (expected one of sparse, ls, rls1, rlsit, minnesota, niw)"
                ))
            })
    }
}

/// Settings for every method; each method reads only its own part.
#[derive(Debug, Clone)]
pub struct MethodConfig {
    pub fit: FitConfig,
    pub minnesota: MinnesotaHyper,
    /// Tightness of the Minnesota-style NIW defaults.
    pub niw_tightness: f64,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            minnesota: MinnesotaHyper::default(),
            niw_tightness: 0.1,
        }
    }
}

impl Method {
    /// Fits at lag `p`, or selects `p` by the configured criterion over
    /// `fit.p_candidates` when `None`.
    pub fn fit(
        &self,
        panel: &TimeSeriesPanel,
        p: Option<usize>,
        config: &MethodConfig,
    ) -> Result<FitResult> {
        match (self, p) {
            (Method::Sparse, Some(p)) => estimator::select_lambdas(panel, p, &config.fit),
            (Method::Sparse, None) => estimator::select_p(panel, &config.fit),
            (_, Some(p)) => self.fit_fixed(panel, p, config),
            (_, None) => {
                config.fit.validate()?;
                let fits = config
                    .fit
                    .p_candidates
                    .par_iter()
                    .map(|&p| self.fit_fixed(panel, p, config))
                    .collect();
                estimator::pick_min_criterion(fits)
            }
        }
    }

    /// Re-estimates with previously selected tuning parameters.
    pub fn refit(
        &self,
        panel: &TimeSeriesPanel,
        selection: &Selection,
        config: &MethodConfig,
    ) -> Result<FitResult> {
        match self {
            Method::Sparse => estimator::alternate_fit(
                panel,
                selection.p,
                selection.lambda1,
                selection.lambda2,
                &config.fit,
            ),
            _ => self.fit_fixed(panel, selection.p, config),
        }
    }

    fn fit_fixed(
        &self,
        panel: &TimeSeriesPanel,
        p: usize,
        config: &MethodConfig,
    ) -> Result<FitResult> {
        match self {
            Method::Sparse => estimator::select_lambdas(panel, p, &config.fit),
            Method::Ls => benchmarks::ls_fit(panel, p),
            Method::RestrictedOneStep => benchmarks::restricted_ls_1step(panel, p),
            Method::RestrictedIterative => benchmarks::restricted_ls_iterative(panel, p),
            Method::Minnesota => benchmarks::minnesota_fit(panel, p, &config.minnesota),
            Method::Niw => {
                let hyper = NiwHyper::minnesota_style(panel, p, config.niw_tightness)?;
                benchmarks::niw_fit(panel, p, &hyper)
            }
        }
    }
}

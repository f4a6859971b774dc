//! Rolling-window one-step-ahead forecasting.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::app::transform::{self, TransformPlan};
use crate::error::{Result, VarError};
use crate::method::{Method, MethodConfig};
use crate::var_model::TimeSeriesPanel;

#[derive(Debug, Clone)]
pub struct RollingForecast {
    /// Target rows (0-based) that were forecast.
    pub targets: Vec<usize>,
    /// One row per entry of `targets`.
    pub forecasts: DMatrix<f64>,
    pub actuals: DMatrix<f64>,
    /// Targets whose fit failed, with the reason.
    pub skipped: Vec<(usize, String)>,
}

impl RollingForecast {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Mean absolute error across series for each target.
    pub fn per_target_mae(&self) -> Vec<f64> {
        (0..self.len())
            .map(|r| (self.forecasts.row(r) - self.actuals.row(r)).abs().mean())
            .collect()
    }

    /// Forecasts and actuals restricted to the given columns.
    pub fn columns(&self, cols: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        (
            self.forecasts.select_columns(cols),
            self.actuals.select_columns(cols),
        )
    }
}

/// For each target row `t = window..end`, fits `method` on rows
/// `t − window..t` and forecasts row `t`.
pub fn rolling_forecast(
    panel: &TimeSeriesPanel,
    method: Method,
    p: Option<usize>,
    config: &MethodConfig,
    window: usize,
    end: usize,
) -> Result<RollingForecast> {
    if end > panel.len() {
        return Err(VarError::InvalidArgument(format!(
            "forecast end {end} exceeds panel length {}",
            panel.len()
        )));
    }
    if window == 0 || window >= end {
        return Err(VarError::InvalidArgument(format!(
            "window {window} must be positive and below the end {end}"
        )));
    }
    let outcomes: Vec<(usize, Result<DVector<f64>>)> = (window..end)
        .into_par_iter()
        .map(|t| {
            let train = panel.rows(t - window, t);
            let f = method
                .fit(&train, p, config)
                .and_then(|fit| fit.forecast_next(train.data()));
            (t, f)
        })
        .collect();

    let q = panel.q();
    let mut targets = Vec::new();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (t, f) in outcomes {
        match f {
            Ok(v) => {
                targets.push(t);
                rows.push(v);
            }
            Err(e) => skipped.push((t, e.to_string())),
        }
    }
    let forecasts = DMatrix::from_fn(rows.len(), q, |r, c| rows[r][c]);
    let actuals = DMatrix::from_fn(targets.len(), q, |r, c| panel.data()[(targets[r], c)]);
    Ok(RollingForecast {
        targets,
        forecasts,
        actuals,
        skipped,
    })
}

/// Maps transformed-space forecasts to levels. Transformed row `t` describes
/// the change from level row `t` to level row `t + 1`.
pub fn to_levels(
    rf: &RollingForecast,
    levels: &TimeSeriesPanel,
    plan: &TransformPlan,
) -> Result<RollingForecast> {
    let q = levels.q();
    let mut f = DMatrix::zeros(rf.len(), q);
    let mut a = DMatrix::zeros(rf.len(), q);
    for (r, &t) in rf.targets.iter().enumerate() {
        if t + 1 >= levels.len() {
            return Err(VarError::Dimension(
                "levels panel is shorter than the transformed panel".into(),
            ));
        }
        let last = levels.data().row(t).transpose();
        let lv = transform::invert_transform(&rf.forecasts.row(r).transpose(), &last, plan)?;
        f.row_mut(r).copy_from(&lv.transpose());
        a.row_mut(r).copy_from(&levels.data().row(t + 1));
    }
    Ok(RollingForecast {
        targets: rf.targets.clone(),
        forecasts: f,
        actuals: a,
        skipped: rf.skipped.clone(),
    })
}

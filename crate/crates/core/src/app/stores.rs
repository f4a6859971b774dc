//! Synthetic store panels with one planted cross-category effect, and the
//! per-store fitting step shared by network extraction.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::app::ingest::{Channel, ColumnLayout, StorePanel};
use crate::app::transform::{self, TransformPlan};
use crate::error::{Result, VarError};
use crate::estimator::FitResult;
use crate::method::{Method, MethodConfig};
use crate::var_model::{self, ErrorModel, TimeSeriesPanel, VarCoefficients, DEFAULT_BURN_IN};

/// A VAR(1) in transformed space (log-diff sales and prices, diff promotions)
/// where every series follows its own lag and only `source`'s `channel`
/// drives the sales of `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedStores {
    pub categories: Vec<String>,
    pub source: String,
    pub target: String,
    pub channel: Channel,
    pub effect: f64,
    pub own: f64,
    /// Innovation variance of every transformed series.
    pub variance: f64,
    pub weeks: usize,
}

impl Default for PlantedStores {
    fn default() -> Self {
        Self {
            categories: ["bakery", "dairy", "snacks"].map(String::from).to_vec(),
            source: "bakery".into(),
            target: "dairy".into(),
            channel: Channel::Price,
            effect: 0.5,
            own: 0.3,
            variance: 0.01,
            weeks: 77,
        }
    }
}

impl PlantedStores {
    pub fn layout(&self) -> ColumnLayout {
        let cols: Vec<(String, Channel)> = Channel::ALL
            .iter()
            .flat_map(|&ch| self.categories.iter().map(move |c| (c.clone(), ch)))
            .collect();
        ColumnLayout::from_header(&cols)
    }

    pub fn coefficients(&self) -> Result<VarCoefficients> {
        let layout = self.layout();
        let q = layout.len();
        let (Some(pred), Some(eq)) = (
            layout.index(&self.source, self.channel),
            layout.index(&self.target, Channel::Sales),
        ) else {
            return Err(VarError::InvalidArgument(format!(
                "planted effect {}/{} -> {} names an unknown category",
                self.source, self.channel, self.target
            )));
        };
        if pred == eq {
            return Err(VarError::InvalidArgument(
                "planted effect must link two different series".into(),
            ));
        }
        let mut b = DMatrix::identity(q, q) * self.own;
        b[(eq, pred)] = self.effect;
        VarCoefficients::new(vec![b])
    }

    /// Level data for store `index` under `seed`, with weeks labelled `1..=weeks`.
    pub fn simulate(&self, seed: u64, index: u64) -> Result<StorePanel> {
        if self.weeks < 3 || !(self.variance > 0.0) {
            return Err(VarError::InvalidArgument(
                "planted stores need at least 3 weeks and a positive variance".into(),
            ));
        }
        let layout = self.layout();
        let coef = self.coefficients()?;
        let q = layout.len();
        let err = ErrorModel::from_sigma(DMatrix::identity(q, q) * self.variance)?;
        let changes = var_model::simulate_var_stream(
            &coef,
            &err,
            self.weeks - 1,
            seed,
            index,
            DEFAULT_BURN_IN,
        )?;
        let initial = DVector::from_iterator(
            q,
            layout.channels().into_iter().map(|ch| match ch {
                Channel::Sales => 100.0,
                Channel::Price => 3.0,
                Channel::Promo => 0.2,
            }),
        );
        let plan = TransformPlan::default_for(&layout);
        let levels = transform::reconstruct(&changes, &initial, &plan)?;
        Ok(StorePanel {
            store: format!("store{:02}", index + 1),
            weeks: (1..=self.weeks as i64).collect(),
            panel: TimeSeriesPanel::new(levels, layout.names())?,
            layout,
        })
    }
}

/// Transforms each store with the default plan and fits `method`; all
/// stores must share the first store's layout.
pub fn fit_stores(
    stores: &[StorePanel],
    method: Method,
    lags: Option<usize>,
    config: &MethodConfig,
) -> Result<(ColumnLayout, Vec<FitResult>)> {
    let first = stores
        .first()
        .ok_or_else(|| VarError::InvalidArgument("no stores".into()))?;
    let layout = first.layout.clone();
    if let Some(s) = stores.iter().find(|s| s.layout != layout) {
        return Err(VarError::Data(format!(
            "store '{}' columns differ from store '{}'",
            s.store, first.store
        )));
    }
    let plan = TransformPlan::default_for(&layout);
    let fits = stores
        .par_iter()
        .map(|s| method.fit(&transform::transform(&s.panel, &plan)?, lags, config))
        .collect::<Result<Vec<_>>>()?;
    Ok((layout, fits))
}

//! Stationarity transforms and their inverses.

use nalgebra::{DMatrix, DVector};

use crate::app::ingest::{Channel, ColumnLayout};
use crate::error::{Result, VarError};
use crate::var_model::TimeSeriesPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    LogDiff,
    Diff,
    None,
}

impl std::str::FromStr for Rule {
    type Err = VarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log-diff" => Ok(Rule::LogDiff),
            "diff" => Ok(Rule::Diff),
            "none" => Ok(Rule::None),
            _ => Err(VarError::InvalidArgument(format!(
                "unknown transform '{s}' (expected log-diff, diff or none)"
            ))),
        }
    }
}

/// One rule per panel column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformPlan {
    rules: Vec<Rule>,
}

impl TransformPlan {
    pub fn new(rules: Vec<Rule>) -> Self {
        Self { rules }
    }

    pub fn uniform(rule: Rule, q: usize) -> Self {
        Self {
            rules: vec![rule; q],
        }
    }

    /// Sales and prices log-differenced, promotions differenced.
    pub fn default_for(layout: &ColumnLayout) -> Self {
        Self {
            rules: layout
                .channels()
                .into_iter()
                .map(|ch| match ch {
                    Channel::Sales | Channel::Price => Rule::LogDiff,
                    Channel::Promo => Rule::Diff,
                })
                .collect(),
        }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    fn check(&self, q: usize) -> Result<()> {
        if self.rules.len() != q {
            return Err(VarError::Dimension(format!(
                "transform plan has {} rules for {q} series",
                self.rules.len()
            )));
        }
        Ok(())
    }
}

/// Applies the plan; the output has one row fewer than the input.
pub fn transform(panel: &TimeSeriesPanel, plan: &TransformPlan) -> Result<TimeSeriesPanel> {
    let (t, q) = (panel.len(), panel.q());
    plan.check(q)?;
    if t < 2 {
        return Err(VarError::Dimension(
            "transform needs at least two rows".into(),
        ));
    }
    let y = panel.data();
    for (c, rule) in plan.rules.iter().enumerate() {
        if *rule == Rule::LogDiff {
            if let Some(r) = (0..t).find(|&r| !(y[(r, c)] > 0.0)) {
                return Err(VarError::Data(format!(
                    "series '{}' row {} has nonpositive value {} under a log transform",
                    panel.names()[c],
                    r + 1,
                    y[(r, c)]
                )));
            }
        }
    }
    let data = DMatrix::from_fn(t - 1, q, |r, c| match plan.rules[c] {
        Rule::LogDiff => y[(r + 1, c)].ln() - y[(r, c)].ln(),
        Rule::Diff => y[(r + 1, c)] - y[(r, c)],
        Rule::None => y[(r + 1, c)],
    });
    TimeSeriesPanel::new(data, panel.names().to_vec())
}

/// Level forecast from a transformed-space forecast and the last observed level.
pub fn invert_transform(
    forecast: &DVector<f64>,
    last_level: &DVector<f64>,
    plan: &TransformPlan,
) -> Result<DVector<f64>> {
    plan.check(forecast.len())?;
    if last_level.len() != forecast.len() {
        return Err(VarError::Dimension(
            "last level and forecast lengths differ".into(),
        ));
    }
    Ok(DVector::from_fn(forecast.len(), |c, _| {
        match plan.rules[c] {
            Rule::LogDiff => last_level[c] * forecast[c].exp(),
            Rule::Diff => last_level[c] + forecast[c],
            Rule::None => forecast[c],
        }
    }))
}

/// Rebuilds levels rows `1..T` from transformed rows and the initial level row.
pub fn reconstruct(
    transformed: &TimeSeriesPanel,
    initial: &DVector<f64>,
    plan: &TransformPlan,
) -> Result<DMatrix<f64>> {
    let (t, q) = (transformed.len(), transformed.q());
    plan.check(q)?;
    let mut out = DMatrix::zeros(t + 1, q);
    out.row_mut(0).copy_from(&initial.transpose());
    for r in 0..t {
        let prev = out.row(r).transpose();
        let next = invert_transform(&transformed.data().row(r).transpose(), &prev, plan)?;
        out.row_mut(r + 1).copy_from(&next.transpose());
    }
    Ok(out)
}

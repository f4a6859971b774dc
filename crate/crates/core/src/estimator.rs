//! Sparse VAR estimator: alternates the group-lasso β-step and the glasso
//! Ω-step on the penalized Gaussian likelihood
//!
//! ```text
//! tr(SΩ) − log|Ω| + λ1 Σ_g ‖β_g‖ + λ2 Σ_{k≠k'} |Ω_kk'|,   S = (1/n) EᵀE,
//! ```
//!
//! and selects `λ1`, `λ2` and the lag order by an information criterion.
//!
//! Criterion formulas (`n = T − p`, `k` = number of free parameters):
//!
//! - `λ1` at fixed Ω: `‖ỹ − X̃β‖² + k·c(n)`, `k` = nonzero coefficients.
//!   Terms of `−2 log L` that do not depend on β are dropped.
//! - `λ2` at fixed β: `n·tr(SΩ) − n·log|Ω| + k·c(n)`, `k` = `q` + nonzero
//!   upper off-diagonals of Ω.
//! - lag order: `n·q·log 2π + n·tr(SΩ) − n·log|Ω| + k·c(n)` with both
//!   parameter counts; the `2π` term is kept because `n` changes with `p`.
//!
//! `c(n) = log n` for BIC and `2` for AIC.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::audit;
use crate::benchmarks;
use crate::error::{Result, VarError};
use crate::glasso::{self, GlassoSettings, PenalizedPrecisionProblem};
use crate::grouplasso::{self, GroupLassoSettings, GroupStructure};
use crate::linalg;
use crate::method::Method;
use crate::var_model::{self, ErrorModel, StackedDesign, TimeSeriesPanel, VarCoefficients};

/// Slack allowed when asserting that the objective trace never increases.
pub const MONOTONE_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InformationCriterion {
    Bic,
    Aic,
}

impl InformationCriterion {
    pub fn penalty(&self, n: usize) -> f64 {
        match self {
            InformationCriterion::Bic => (n as f64).ln(),
            InformationCriterion::Aic => 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub p_candidates: Vec<usize>,
    pub lambda1_grid_size: usize,
    pub lambda1_grid_ratio: f64,
    pub lambda2_grid_size: usize,
    pub lambda2_grid_ratio: f64,
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    /// Outer iterations during which both penalties are re-selected before
    /// they are frozen for the final alternation.
    pub reselect_iters: usize,
    pub criterion: InformationCriterion,
    pub group_lasso: GroupLassoSettings,
    pub glasso: GlassoSettings,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            p_candidates: vec![1, 2, 3, 4],
            lambda1_grid_size: 50,
            lambda1_grid_ratio: 1e-3,
            lambda2_grid_size: 20,
            lambda2_grid_ratio: 1e-3,
            outer_tol: 1e-3,
            outer_max_iter: 50,
            reselect_iters: 2,
            criterion: InformationCriterion::Bic,
            group_lasso: GroupLassoSettings::default(),
            glasso: GlassoSettings::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(VarError::InvalidArgument(m.to_string()));
        if self.p_candidates.is_empty() || self.p_candidates.contains(&0) {
            return bad("lag candidates must be non-empty and positive");
        }
        if self.lambda1_grid_size == 0 || self.lambda2_grid_size == 0 {
            return bad("penalty grids must have at least one point");
        }
        for r in [self.lambda1_grid_ratio, self.lambda2_grid_ratio] {
            if !(r > 0.0 && r < 1.0) {
                return bad("grid ratios must lie in (0, 1)");
            }
        }
        if !(self.outer_tol > 0.0) || self.outer_max_iter == 0 {
            return bad("outer tolerance and iteration cap must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub p: usize,
    pub lambda1: f64,
    pub lambda2: f64,
}

/// Output shared by the sparse estimator and every baseline.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub method: Method,
    pub coefficients: VarCoefficients,
    pub error: ErrorModel,
    pub selected: Selection,
    /// Penalized objective after each outer iteration (sparse fits only).
    pub objective_trace: Vec<f64>,
    /// Information criterion of the final fit (BIC unless configured otherwise).
    pub bic: f64,
    pub converged: bool,
    /// Observations per equation, `T − p`.
    pub n_obs: usize,
    /// Column means removed before fitting.
    pub means: DVector<f64>,
}

impl FitResult {
    pub fn q(&self) -> usize {
        self.coefficients.q()
    }

    pub fn p(&self) -> usize {
        self.coefficients.p()
    }

    /// One-step-ahead forecast given at least `p` rows of history (oldest first).
    pub fn forecast_next(&self, history: &DMatrix<f64>) -> Result<DVector<f64>> {
        let (p, q) = (self.p(), self.q());
        let t = history.nrows();
        if t < p || history.ncols() != q {
            return Err(VarError::Dimension(format!(
                "forecast needs at least {p} rows of {q} series, got {t}x{}",
                history.ncols()
            )));
        }
        let mut f = self.means.clone();
        for j in 1..=p {
            let lagged = history.row(t - j).transpose() - &self.means;
            f += self.coefficients.lag(j) * lagged;
        }
        Ok(f)
    }

    /// Whether every lag group is either entirely zero or entirely nonzero.
    pub fn respects_groups(&self) -> bool {
        let q = self.q();
        (0..q).all(|i| {
            (0..q).all(|k| {
                let zeros = self
                    .coefficients
                    .lags()
                    .iter()
                    .filter(|b| b[(i, k)] == 0.0)
                    .count();
                zeros == 0 || zeros == self.p()
            })
        })
    }

    /// Whether the objective trace never increases by more than [`MONOTONE_SLACK`].
    pub fn trace_is_monotone(&self) -> bool {
        self.objective_trace
            .windows(2)
            .all(|w| w[1] <= w[0] + MONOTONE_SLACK)
    }
}

/// `n·q·log 2π + n·tr(SΩ) − n·log|Ω| + k·c(n)` for a fitted model.
pub fn information_criterion(
    stacked: &StackedDesign,
    coef: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    n_params: usize,
    criterion: InformationCriterion,
) -> Result<f64> {
    let n = stacked.n();
    let s = glasso::residual_covariance(stacked, coef)?;
    let nf = n as f64;
    let q = stacked.q() as f64;
    let m2ll = nf * q * (2.0 * std::f64::consts::PI).ln() + nf * s.component_mul(omega).sum()
        - nf * linalg::spd_log_det(omega)?;
    Ok(m2ll + n_params as f64 * criterion.penalty(n))
}

fn upper_nonzeros(m: &DMatrix<f64>) -> usize {
    let q = m.nrows();
    (0..q)
        .flat_map(|i| (i + 1..q).map(move |j| (i, j)))
        .filter(|&(i, j)| m[(i, j)] != 0.0)
        .count()
}

fn coef_nonzeros(coef: &DMatrix<f64>) -> usize {
    coef.iter().filter(|v| **v != 0.0).count()
}

fn penalized_objective(
    s: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    coef: &DMatrix<f64>,
    groups: GroupStructure,
    lambda1: f64,
    lambda2: f64,
) -> Result<f64> {
    Ok(glasso::objective(s, omega, lambda2)? + lambda1 * grouplasso::group_norm_sum(coef, groups))
}

fn prepare(panel: &TimeSeriesPanel, p: usize) -> Result<(TimeSeriesPanel, StackedDesign)> {
    if p == 0 {
        return Err(VarError::InvalidArgument(
            "lag order must be at least 1".into(),
        ));
    }
    if panel.len() <= p {
        return Err(VarError::Dimension(format!(
            "panel has {} rows; lag order {p} needs more",
            panel.len()
        )));
    }
    let centered = panel.center();
    let stacked = var_model::stack(&centered, p)?;
    Ok((centered, stacked))
}

/// Alternates β- and Ω-steps at fixed penalties, starting from `Ω = I`,
/// until the largest change over β and Ω drops below `outer_tol`.
pub fn alternate_fit(
    panel: &TimeSeriesPanel,
    p: usize,
    lambda1: f64,
    lambda2: f64,
    config: &FitConfig,
) -> Result<FitResult> {
    if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
        return Err(VarError::InvalidArgument(
            "penalties must be nonnegative".into(),
        ));
    }
    let (centered, stacked) = prepare(panel, p)?;
    let q = stacked.q();
    let omega = DMatrix::<f64>::identity(q, q);
    let coef = DMatrix::<f64>::zeros(p * q, q);
    alternate_from(&centered, &stacked, lambda1, lambda2, omega, coef, config)
}

fn alternate_from(
    centered: &TimeSeriesPanel,
    stacked: &StackedDesign,
    lambda1: f64,
    lambda2: f64,
    mut omega: DMatrix<f64>,
    mut coef: DMatrix<f64>,
    config: &FitConfig,
) -> Result<FitResult> {
    let (q, p) = (stacked.q(), stacked.p());
    let groups = GroupStructure::new(q, p);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut best: Option<(f64, DMatrix<f64>, DMatrix<f64>)> = None;

    for _ in 0..config.outer_max_iter {
        let problem = grouplasso::whiten(stacked, &omega)?;
        let beta = grouplasso::solve_warm(&problem, groups, lambda1, &coef, &config.group_lasso);
        let s = glasso::residual_covariance(stacked, &beta.coefficients)?;
        let pp = PenalizedPrecisionProblem::new(s.clone(), lambda2)?;
        let om = glasso::solve_warm(&pp, &omega, &config.glasso)?;
        let new_omega = om.omega().clone();
        let obj =
            penalized_objective(&s, &new_omega, &beta.coefficients, groups, lambda1, lambda2)?;
        trace.push(obj);
        let change = linalg::max_abs_diff(&beta.coefficients, &coef)
            .max(linalg::max_abs_diff(&new_omega, &omega));
        coef = beta.coefficients;
        omega = new_omega;
        if best.as_ref().is_none_or(|(b, _, _)| obj <= *b) {
            best = Some((obj, coef.clone(), omega.clone()));
        }
        if change < config.outer_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        if let Some((_, c, o)) = best {
            coef = c;
            omega = o;
        }
    }

    let k = coef_nonzeros(&coef) + q + upper_nonzeros(&omega);
    let bic = information_criterion(stacked, &coef, &omega, k, config.criterion)?;
    let fit = FitResult {
        method: Method::Sparse,
        coefficients: VarCoefficients::from_equation_matrix(&coef, p)?,
        error: ErrorModel::from_omega(omega)?,
        selected: Selection {
            p,
            lambda1,
            lambda2,
        },
        objective_trace: trace,
        bic,
        converged,
        n_obs: stacked.n(),
        means: centered.means().clone(),
    };
    audit::record_fit(fit.trace_is_monotone(), fit.respects_groups());
    debug_assert!(
        fit.trace_is_monotone(),
        "objective trace increased: {:?}",
        fit.objective_trace
    );
    debug_assert!(fit.respects_groups(), "lag groups are not all-or-none");
    Ok(fit)
}

/// Scans the λ1 grid at fixed Ω with warm starts; returns `(λ1, coef)` of minimum criterion.
fn select_lambda1(
    stacked: &StackedDesign,
    omega: &DMatrix<f64>,
    config: &FitConfig,
) -> Result<(f64, DMatrix<f64>)> {
    let (q, p, n) = (stacked.q(), stacked.p(), stacked.n());
    let groups = GroupStructure::new(q, p);
    let problem = grouplasso::whiten(stacked, omega)?;
    let lmax = grouplasso::lambda1_max(&problem, groups);
    if lmax == 0.0 {
        return Ok((0.0, DMatrix::zeros(p * q, q)));
    }
    let grid = linalg::log_grid(
        lmax,
        lmax * config.lambda1_grid_ratio,
        config.lambda1_grid_size,
    );
    let pen = config.criterion.penalty(n);
    let mut coef = DMatrix::zeros(p * q, q);
    let mut best: Option<(f64, f64, DMatrix<f64>)> = None;
    for &lam in &grid {
        let sol = grouplasso::solve_warm(&problem, groups, lam, &coef, &config.group_lasso);
        coef = sol.coefficients;
        let crit = problem.residual_sum_of_squares(&coef) + coef_nonzeros(&coef) as f64 * pen;
        if best.as_ref().is_none_or(|(b, _, _)| crit < *b) {
            best = Some((crit, lam, coef.clone()));
        }
    }
    let (_, lam, c) = best.expect("non-empty grid");
    Ok((lam, c))
}

/// Scans the λ2 grid at fixed residual covariance; returns `(λ2, Ω)`.
fn select_lambda2(s: &DMatrix<f64>, n: usize, config: &FitConfig) -> Result<(f64, DMatrix<f64>)> {
    let q = s.nrows();
    let lmax = glasso::max_off_diagonal(s);
    let grid = if lmax > 0.0 {
        linalg::log_grid(
            lmax,
            lmax * config.lambda2_grid_ratio,
            config.lambda2_grid_size,
        )
    } else {
        vec![0.0]
    };
    let pen = config.criterion.penalty(n);
    let nf = n as f64;
    let mut omega = DMatrix::from_diagonal(&s.diagonal().map(|v| 1.0 / v));
    let mut best: Option<(f64, f64, DMatrix<f64>)> = None;
    for &lam in &grid {
        let pp = PenalizedPrecisionProblem::new(s.clone(), lam)?;
        let sol = glasso::solve_warm(&pp, &omega, &config.glasso)?;
        omega = sol.omega().clone();
        let k = q + upper_nonzeros(&omega);
        let crit =
            nf * s.component_mul(&omega).sum() - nf * linalg::spd_log_det(&omega)? + k as f64 * pen;
        if best.as_ref().is_none_or(|(b, _, _)| crit < *b) {
            best = Some((crit, lam, omega.clone()));
        }
    }
    let (_, lam, o) = best.expect("non-empty grid");
    Ok((lam, o))
}

/// Diagonal precision on the scale of the innovations: inverse residual
/// variances of least squares (degrees-of-freedom corrected) when there are
/// more observations than regressors, else of per-series AR(p) fits.
pub fn selection_start(stacked: &StackedDesign) -> Result<DMatrix<f64>> {
    let (n, q, p) = (stacked.n(), stacked.q(), stacked.p());
    let dof = n.saturating_sub(p * q);
    if dof > 0 {
        let x0 = stacked.x0();
        let gram = x0.transpose() * x0;
        let cross = x0.transpose() * stacked.response_matrix();
        if let Ok(coef) = linalg::spd_solve(&gram, &cross) {
            let e = stacked.residuals(&coef);
            let var: Vec<f64> = (0..q)
                .map(|i| e.column(i).norm_squared() / dof as f64)
                .collect();
            if var.iter().all(|v| *v > 0.0 && v.is_finite()) {
                return Ok(DMatrix::from_fn(q, q, |i, j| {
                    if i == j {
                        1.0 / var[i]
                    } else {
                        0.0
                    }
                }));
            }
        }
    }
    let var = benchmarks::ar_residual_variances(stacked)?;
    if var.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(VarError::Singular(
            "a series has zero residual variance".into(),
        ));
    }
    Ok(DMatrix::from_diagonal(&var.map(|v| 1.0 / v)))
}

/// Selects `(λ1, λ2)` for a fixed lag order and fits with the selected pair.
/// Both penalties are re-selected during the first `reselect_iters` outer
/// iterations, starting from [`selection_start`]; the alternation then runs
/// with the penalties frozen, continuing from the last selection state.
pub fn select_lambdas(panel: &TimeSeriesPanel, p: usize, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let (centered, stacked) = prepare(panel, p)?;
    let mut omega = selection_start(&stacked)?;
    let mut coef = DMatrix::zeros(p * stacked.q(), stacked.q());
    let (mut lambda1, mut lambda2) = (0.0, 0.0);
    for _ in 0..config.reselect_iters.max(1) {
        let (l1, c) = select_lambda1(&stacked, &omega, config)?;
        let s = glasso::residual_covariance(&stacked, &c)?;
        let (l2, o) = select_lambda2(&s, stacked.n(), config)?;
        lambda1 = l1;
        lambda2 = l2;
        omega = o;
        coef = c;
    }
    alternate_from(&centered, &stacked, lambda1, lambda2, omega, coef, config)
}

/// Runs [`select_lambdas`] for every candidate lag order and keeps the fit
/// with the smallest criterion; ties go to the smaller `p`.
pub fn select_p(panel: &TimeSeriesPanel, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let max_p = *config.p_candidates.iter().max().expect("validated");
    if panel.len() <= max_p {
        return Err(VarError::Dimension(format!(
            "panel has {} rows; largest candidate lag is {max_p}",
            panel.len()
        )));
    }
    let fits: Vec<Result<FitResult>> = config
        .p_candidates
        .par_iter()
        .map(|&p| select_lambdas(panel, p, config))
        .collect();
    pick_min_criterion(fits)
}

/// Order-independent reduction: minimum by `(criterion, p, λ1, λ2)`.
pub(crate) fn pick_min_criterion(fits: Vec<Result<FitResult>>) -> Result<FitResult> {
    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for f in fits {
        match f {
            Ok(f) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let key = |x: &FitResult| {
                            (x.bic, x.selected.p, x.selected.lambda1, x.selected.lambda2)
                        };
                        key(&f).partial_cmp(&key(b)) == Some(std::cmp::Ordering::Less)
                    }
                };
                if better {
                    best = Some(f);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| {
        last_err.unwrap_or_else(|| VarError::InvalidArgument("no candidate fits".into()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        let c = FitConfig {
            lambda1_grid_ratio: 1.5,
            ..FitConfig::default()
        };
        assert!(c.validate().is_err());
        let c = FitConfig {
            p_candidates: vec![],
            ..FitConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn aic_penalty_is_two() {
        assert_eq!(InformationCriterion::Aic.penalty(100), 2.0);
        assert!((InformationCriterion::Bic.penalty(100) - 100f64.ln()).abs() < 1e-15);
    }

    fn dummy(p: usize, bic: f64) -> FitResult {
        FitResult {
            method: Method::Ls,
            coefficients: VarCoefficients::zeros(2, p),
            error: ErrorModel::identity(2),
            selected: Selection {
                p,
                lambda1: 0.0,
                lambda2: 0.0,
            },
            objective_trace: Vec::new(),
            bic,
            converged: true,
            n_obs: 10,
            means: DVector::zeros(2),
        }
    }

    #[test]
    fn criterion_tie_goes_to_smaller_lag() {
        let best = pick_min_criterion(vec![
            Ok(dummy(3, 1.0)),
            Ok(dummy(1, 1.0)),
            Ok(dummy(2, 1.0)),
        ])
        .unwrap();
        assert_eq!(best.selected.p, 1);
        let best = pick_min_criterion(vec![
            Ok(dummy(1, 2.0)),
            Err(VarError::Singular("x".into())),
            Ok(dummy(2, 1.0)),
        ])
        .unwrap();
        assert_eq!(best.selected.p, 2);
        assert!(pick_min_criterion(vec![Err(VarError::Singular("x".into()))]).is_err());
    }
}

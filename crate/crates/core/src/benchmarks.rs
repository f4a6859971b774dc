//! Baseline estimators: least squares, two restricted least-squares variants
//! and two Bayesian shrinkage estimators (Minnesota and normal–inverse-Wishart).
//!
//! All baselines fit the centered panel without intercept and return the same
//! [`FitResult`] shape as the sparse estimator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, VarError};
use crate::estimator::{self, FitResult, InformationCriterion, Selection};
use crate::glasso;
use crate::linalg;
use crate::method::Method;
use crate::var_model::{self, ErrorModel, StackedDesign, TimeSeriesPanel, VarCoefficients};

/// Minnesota prior: `β ~ N(β_M, V_M)` with diagonal `V_M`. For equation `i`,
/// series `k` at lag `l` the prior variance is `(π1/l)²` when `k = i` and
/// `(π1·π2/l)²·σ̂ᵢ²/σ̂ₖ²` otherwise; `σ̂²` are univariate AR(p) residual
/// variances.
#[derive(Debug, Clone)]
pub struct MinnesotaHyper {
    /// Prior mean; zero when `None`.
    pub prior_mean: Option<VarCoefficients>,
    pub tightness: f64,
    pub cross_weight: f64,
}

impl Default for MinnesotaHyper {
    fn default() -> Self {
        Self {
            prior_mean: None,
            tightness: 0.1,
            cross_weight: 0.5,
        }
    }
}

/// Normal–inverse-Wishart prior `vec(B) | Σ ~ N(vec(B₀), Σ ⊗ Ω₀)`,
/// `Σ ~ iW(S₀, ν₀)`, with `B` the equation-major `p·q × q` matrix.
#[derive(Debug, Clone)]
pub struct NiwHyper {
    /// Prior mean `B₀`; zero when `None`.
    pub prior_mean: Option<DMatrix<f64>>,
    pub omega0: DMatrix<f64>,
    pub s0: DMatrix<f64>,
    pub nu0: f64,
}

impl NiwHyper {
    /// Defaults built from the Minnesota variance pattern: `B₀ = 0`,
    /// `Ω₀ = diag((π1/l)² / σ̂ₖ²)`, `S₀ = diag(σ̂²)`, `ν₀ = q + 2`.
    pub fn minnesota_style(panel: &TimeSeriesPanel, p: usize, tightness: f64) -> Result<Self> {
        let (_, stacked) = prepare(panel, p)?;
        let s2 = ar_residual_variances(&stacked)?;
        let q = stacked.q();
        let omega0 = DMatrix::from_diagonal(&DVector::from_fn(p * q, |r, _| {
            let (l, k) = (r / q + 1, r % q);
            (tightness / l as f64).powi(2) / s2[k]
        }));
        Ok(Self {
            prior_mean: None,
            omega0,
            s0: DMatrix::from_diagonal(&s2),
            nu0: q as f64 + 2.0,
        })
    }

    pub fn validate(&self, q: usize, pq: usize) -> Result<()> {
        if self.omega0.shape() != (pq, pq) || self.s0.shape() != (q, q) {
            return Err(VarError::Dimension(
                "NIW scale matrices have the wrong shape".into(),
            ));
        }
        if let Some(b0) = &self.prior_mean {
            if b0.shape() != (pq, q) {
                return Err(VarError::Dimension(
                    "NIW prior mean has the wrong shape".into(),
                ));
            }
        }
        if !(self.nu0 > q as f64 + 1.0) {
            return Err(VarError::InvalidArgument(format!(
                "NIW degrees of freedom {} must exceed q + 1 = {}",
                self.nu0,
                q + 1
            )));
        }
        linalg::cholesky_lower(&self.omega0)?;
        linalg::cholesky_lower(&self.s0)?;
        Ok(())
    }
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

/// OLS restricted to the columns in `subset`; returns full-length coefficients and residuals.
fn ols_subset(
    x0: &DMatrix<f64>,
    y: &DVector<f64>,
    subset: &[usize],
) -> Result<(DVector<f64>, DVector<f64>)> {
    let m = x0.ncols();
    let mut coef = DVector::zeros(m);
    if subset.is_empty() {
        return Ok((coef, y.clone()));
    }
    let xs = x0.select_columns(subset);
    let gram = xs.transpose() * &xs;
    let b = linalg::spd_solve_vec(&gram, &(xs.transpose() * y))
        .map_err(|_| VarError::Singular("Gram matrix of the lag design is singular".into()))?;
    for (a, &c) in subset.iter().enumerate() {
        coef[c] = b[a];
    }
    let resid = y - xs * b;
    Ok((coef, resid))
}

struct EquationFits {
    coef: DMatrix<f64>,
    resid: DMatrix<f64>,
}

fn per_equation<F>(stacked: &StackedDesign, mut fit: F) -> Result<EquationFits>
where
    F: FnMut(usize, &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)>,
{
    let (n, q, pq) = (stacked.n(), stacked.q(), stacked.p() * stacked.q());
    let y = stacked.response_matrix();
    let mut coef = DMatrix::zeros(pq, q);
    let mut resid = DMatrix::zeros(n, q);
    for i in 0..q {
        let (c, r) = fit(i, &y.column(i).into_owned())?;
        coef.set_column(i, &c);
        resid.set_column(i, &r);
    }
    Ok(EquationFits { coef, resid })
}

fn check_rank(stacked: &StackedDesign) -> Result<()> {
    let (n, pq) = (stacked.n(), stacked.p() * stacked.q());
    if n <= pq {
        return Err(VarError::Singular(format!(
            "least squares needs more than {pq} observations per equation, have {n}"
        )));
    }
    Ok(())
}

fn finish(
    method: Method,
    centered: &TimeSeriesPanel,
    stacked: &StackedDesign,
    coef: DMatrix<f64>,
    error: ErrorModel,
    sigma_params: usize,
) -> Result<FitResult> {
    let p = stacked.p();
    let k = coef.iter().filter(|v| **v != 0.0).count() + sigma_params;
    let bic = estimator::information_criterion(
        stacked,
        &coef,
        error.omega(),
        k,
        InformationCriterion::Bic,
    )?;
    Ok(FitResult {
        method,
        coefficients: VarCoefficients::from_equation_matrix(&coef, p)?,
        error,
        selected: Selection {
            p,
            lambda1: 0.0,
            lambda2: 0.0,
        },
        objective_trace: Vec::new(),
        bic,
        converged: true,
        n_obs: stacked.n(),
        means: centered.means().clone(),
    })
}

/// Relative ridge added to a singular residual covariance (perfect in-sample fit).
const SIGMA_FLOOR: f64 = 1e-10;

/// `Σ̂ = EᵀE/n`; when that is singular, `Σ̂ + δI` with `δ` a tiny multiple of
/// the mean response variance so that downstream likelihoods stay finite.
fn residual_error(resid: &DMatrix<f64>, stacked: &StackedDesign) -> Result<ErrorModel> {
    let n = resid.nrows() as f64;
    let sigma = linalg::symmetrize(&(resid.transpose() * resid)) / n;
    match ErrorModel::from_sigma(sigma.clone()) {
        Ok(e) => Ok(e),
        Err(_) => {
            let scale = stacked.y().norm_squared() / stacked.y().len() as f64;
            let delta = SIGMA_FLOOR * if scale > 0.0 { scale } else { 1.0 };
            let q = sigma.nrows();
            ErrorModel::from_sigma(sigma + DMatrix::identity(q, q) * delta)
        }
    }
}

fn full_sigma_params(q: usize) -> usize {
    q * (q + 1) / 2
}

/// Equation-by-equation least squares; `Σ̂` uses denominator `n`.
pub fn ls_fit(panel: &TimeSeriesPanel, p: usize) -> Result<FitResult> {
    let (centered, stacked) = prepare(panel, p)?;
    check_rank(&stacked)?;
    let all: Vec<usize> = (0..stacked.x0().ncols()).collect();
    let fits = per_equation(&stacked, |_, y| ols_subset(stacked.x0(), y, &all))?;
    let err = residual_error(&fits.resid, &stacked)?;
    finish(
        Method::Ls,
        &centered,
        &stacked,
        fits.coef,
        err,
        full_sigma_params(stacked.q()),
    )
}

/// OLS t-statistics of every regressor in one equation.
fn t_statistics(x0: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let (n, m) = x0.shape();
    let all: Vec<usize> = (0..m).collect();
    let (coef, resid) = ols_subset(x0, y, &all)?;
    let s2 = resid.norm_squared() / (n - m) as f64;
    let ginv = linalg::spd_inverse(&(x0.transpose() * x0))
        .map_err(|_| VarError::Singular("Gram matrix of the lag design is singular".into()))?;
    let t = DVector::from_fn(m, |c, _| {
        let se = (s2 * ginv[(c, c)]).sqrt();
        if se > 0.0 {
            coef[c] / se
        } else if coef[c] != 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    });
    Ok((coef, t))
}

/// OLS, drop regressors with `|t| ≤ 1`, re-estimate on the survivors.
pub fn restricted_ls_1step(panel: &TimeSeriesPanel, p: usize) -> Result<FitResult> {
    let (centered, stacked) = prepare(panel, p)?;
    check_rank(&stacked)?;
    let x0 = stacked.x0();
    let fits = per_equation(&stacked, |_, y| {
        let (_, t) = t_statistics(x0, y)?;
        let keep: Vec<usize> = (0..x0.ncols()).filter(|&c| t[c].abs() > 1.0).collect();
        ols_subset(x0, y, &keep)
    })?;
    let err = residual_error(&fits.resid, &stacked)?;
    finish(
        Method::RestrictedOneStep,
        &centered,
        &stacked,
        fits.coef,
        err,
        full_sigma_params(stacked.q()),
    )
}

fn equation_bic(rss: f64, n: usize, k: usize) -> f64 {
    let nf = n as f64;
    nf * (rss.max(f64::MIN_POSITIVE) / nf).ln() + k as f64 * nf.ln()
}

/// Backward elimination per equation: repeatedly drop the regressor whose
/// removal lowers the equation BIC the most; stop when no removal lowers it
/// strictly.
pub fn restricted_ls_iterative(panel: &TimeSeriesPanel, p: usize) -> Result<FitResult> {
    let (centered, stacked) = prepare(panel, p)?;
    check_rank(&stacked)?;
    let x0 = stacked.x0();
    let n = stacked.n();
    let fits = per_equation(&stacked, |_, y| {
        let mut keep: Vec<usize> = (0..x0.ncols()).collect();
        let (mut coef, mut resid) = ols_subset(x0, y, &keep)?;
        let mut current = equation_bic(resid.norm_squared(), n, keep.len());
        while !keep.is_empty() {
            let mut best: Option<(f64, usize, DVector<f64>, DVector<f64>)> = None;
            for drop in 0..keep.len() {
                let trial: Vec<usize> = keep
                    .iter()
                    .enumerate()
                    .filter(|&(a, _)| a != drop)
                    .map(|(_, &c)| c)
                    .collect();
                let (c, r) = ols_subset(x0, y, &trial)?;
                let b = equation_bic(r.norm_squared(), n, trial.len());
                if best.as_ref().is_none_or(|(bb, ..)| b < *bb) {
                    best = Some((b, drop, c, r));
                }
            }
            match best {
                Some((b, drop, c, r)) if b < current => {
                    keep.remove(drop);
                    current = b;
                    coef = c;
                    resid = r;
                }
                _ => break,
            }
        }
        Ok((coef, resid))
    })?;
    let err = residual_error(&fits.resid, &stacked)?;
    finish(
        Method::RestrictedIterative,
        &centered,
        &stacked,
        fits.coef,
        err,
        full_sigma_params(stacked.q()),
    )
}

/// Residual variances `σ̂ᵢ²` of univariate AR(p) fits by OLS (denominator `n − p`).
pub fn ar_residual_variances(stacked: &StackedDesign) -> Result<DVector<f64>> {
    let (n, q, p) = (stacked.n(), stacked.q(), stacked.p());
    if n <= p {
        return Err(VarError::Singular(format!(
            "univariate AR({p}) needs more than {p} observations, have {n}"
        )));
    }
    let y = stacked.response_matrix();
    let mut out = DVector::zeros(q);
    for i in 0..q {
        let cols: Vec<usize> = (0..p).map(|j| j * q + i).collect();
        let (_, resid) = ols_subset(stacked.x0(), &y.column(i).into_owned(), &cols)?;
        let s2 = resid.norm_squared() / (n - p) as f64;
        if !(s2 > 0.0) {
            return Err(VarError::Numerical(format!(
                "series {} has zero AR residual variance",
                i + 1
            )));
        }
        out[i] = s2;
    }
    Ok(out)
}

/// Posterior mean under the Minnesota prior with `Σ = diag(σ̂²)` held fixed.
pub fn minnesota_fit(
    panel: &TimeSeriesPanel,
    p: usize,
    hyper: &MinnesotaHyper,
) -> Result<FitResult> {
    if !(hyper.tightness > 0.0 && hyper.cross_weight > 0.0) {
        return Err(VarError::InvalidArgument(
            "Minnesota tightness and cross weight must be positive".into(),
        ));
    }
    let (centered, stacked) = prepare(panel, p)?;
    let (q, pq) = (stacked.q(), p * stacked.q());
    let s2 = ar_residual_variances(&stacked)?;
    let prior_mean = match &hyper.prior_mean {
        Some(b) if b.q() != q || b.p() != p => {
            return Err(VarError::Dimension(
                "Minnesota prior mean has the wrong shape".into(),
            ))
        }
        Some(b) => b.to_equation_matrix(),
        None => DMatrix::zeros(pq, q),
    };
    let x0 = stacked.x0();
    let gram = x0.transpose() * x0;
    let xty = x0.transpose() * stacked.response_matrix();
    let mut coef = DMatrix::zeros(pq, q);
    for i in 0..q {
        let prior_prec = DVector::from_fn(pq, |r, _| {
            let (l, k) = ((r / q + 1) as f64, r % q);
            let v = if k == i {
                (hyper.tightness / l).powi(2)
            } else {
                (hyper.tightness * hyper.cross_weight / l).powi(2) * s2[i] / s2[k]
            };
            1.0 / v
        });
        let post_prec = DMatrix::from_diagonal(&prior_prec) + &gram / s2[i];
        let rhs = prior_prec.component_mul(&prior_mean.column(i)) + xty.column(i) / s2[i];
        coef.set_column(i, &linalg::spd_solve_vec(&post_prec, &rhs)?);
    }
    let err = ErrorModel::from_sigma(DMatrix::from_diagonal(&s2))?;
    finish(Method::Minnesota, &centered, &stacked, coef, err, q)
}

/// Posterior means `(B̄, E[Σ])` under the conjugate NIW prior.
pub fn niw_fit(panel: &TimeSeriesPanel, p: usize, hyper: &NiwHyper) -> Result<FitResult> {
    let (centered, stacked) = prepare(panel, p)?;
    let (q, pq, n) = (stacked.q(), p * stacked.q(), stacked.n());
    hyper.validate(q, pq)?;
    let b0 = hyper
        .prior_mean
        .clone()
        .unwrap_or_else(|| DMatrix::zeros(pq, q));
    let x0 = stacked.x0();
    let y = stacked.response_matrix();
    let omega0_inv = linalg::spd_inverse(&hyper.omega0)?;
    let post_prec = &omega0_inv + x0.transpose() * x0;
    let rhs = &omega0_inv * &b0 + x0.transpose() * &y;
    let b_bar = linalg::spd_solve(&post_prec, &rhs)?;
    let s_bar = &hyper.s0 + y.transpose() * &y + b0.transpose() * &omega0_inv * &b0
        - b_bar.transpose() * &post_prec * &b_bar;
    let nu_bar = hyper.nu0 + n as f64;
    let sigma = linalg::symmetrize(&s_bar) / (nu_bar - q as f64 - 1.0);
    let err = ErrorModel::from_sigma(sigma)?;
    finish(
        Method::Niw,
        &centered,
        &stacked,
        b_bar,
        err,
        full_sigma_params(q),
    )
}

/// Residual covariance of a fitted baseline on its own centered design, for diagnostics.
pub fn fitted_residual_covariance(
    panel: &TimeSeriesPanel,
    fit: &FitResult,
) -> Result<DMatrix<f64>> {
    let (_, stacked) = prepare(panel, fit.p())?;
    glasso::residual_covariance(&stacked, &fit.coefficients.to_equation_matrix())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equation_bic_tie_is_not_an_improvement() {
        let b = equation_bic(2.0, 10, 3);
        assert!(!(b < equation_bic(2.0, 10, 3)));
    }

    #[test]
    fn niw_rejects_small_degrees_of_freedom() {
        let h = NiwHyper {
            prior_mean: None,
            omega0: DMatrix::identity(2, 2),
            s0: DMatrix::identity(2, 2),
            nu0: 3.0,
        };
        assert!(h.validate(2, 2).is_err());
    }
}

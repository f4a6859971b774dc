//! L1-penalized Gaussian precision estimation (the Ω-step).
//!
//! Minimizes `tr(SΩ) − log|Ω| + λ2 Σ_{k≠k'} |Ω_kk'|` with the diagonal left
//! unpenalized. The solver works on the primal: each column update profiles
//! out the diagonal entry and solves a lasso for the off-diagonal column
//!
//! ```text
//! minimize ½ xᵀ (s_jj Ω₋ⱼ⁻¹) x + s₋ⱼᵀ x + λ2 ‖x‖₁,   Ω_jj = xᵀΩ₋ⱼ⁻¹x + 1/s_jj
//! ```
//!
//! by cyclic coordinate descent, with `Ω₋ⱼ⁻¹` read off the maintained
//! inverse `W = Ω⁻¹` by a rank-one downdate. Every column update lowers the
//! objective and keeps `Ω` positive definite (its Schur complement is
//! `1/s_jj`), so warm starts from any positive-definite matrix are safe.

use nalgebra::{DMatrix, DVector};

use crate::audit;
use crate::error::{Result, VarError};
use crate::linalg;
use crate::var_model::{ErrorModel, StackedDesign};

/// `S = (1/n) EᵀE` for the residuals of an equation-major coefficient matrix.
pub fn residual_covariance(stacked: &StackedDesign, coef: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (pq, q) = (stacked.p() * stacked.q(), stacked.q());
    if coef.shape() != (pq, q) {
        return Err(VarError::Dimension(format!(
            "coefficients are {}x{}, expected {pq}x{q}",
            coef.nrows(),
            coef.ncols()
        )));
    }
    let e = stacked.residuals(coef);
    Ok(linalg::symmetrize(&(e.transpose() * &e)) / stacked.n() as f64)
}

#[derive(Debug, Clone)]
pub struct PenalizedPrecisionProblem {
    s: DMatrix<f64>,
    lambda2: f64,
}

impl PenalizedPrecisionProblem {
    pub fn new(s: DMatrix<f64>, lambda2: f64) -> Result<Self> {
        if s.nrows() != s.ncols() {
            return Err(VarError::Dimension(format!(
                "covariance is {}x{}",
                s.nrows(),
                s.ncols()
            )));
        }
        if !(lambda2 >= 0.0) {
            return Err(VarError::InvalidArgument(format!(
                "lambda2 must be nonnegative, got {lambda2}"
            )));
        }
        if let Some(k) = (0..s.nrows()).find(|&k| !(s[(k, k)] > 0.0)) {
            return Err(VarError::InvalidArgument(format!(
                "covariance diagonal entry {k} is {} (must be positive)",
                s[(k, k)]
            )));
        }
        let s = linalg::symmetrize(&s);
        if lambda2 == 0.0 {
            linalg::cholesky_lower(&s).map_err(|_| {
                VarError::InvalidArgument(
                    "covariance is not positive definite; use a positive lambda2".into(),
                )
            })?;
        }
        Ok(Self { s, lambda2 })
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    /// Largest absolute off-diagonal of `S`: at or above it the solution is diagonal.
    pub fn lambda2_max(&self) -> f64 {
        max_off_diagonal(&self.s)
    }
}

pub fn max_off_diagonal(s: &DMatrix<f64>) -> f64 {
    let q = s.nrows();
    let mut m = 0.0f64;
    for i in 0..q {
        for j in 0..q {
            if i != j {
                m = m.max(s[(i, j)].abs());
            }
        }
    }
    m
}

#[derive(Debug, Clone, Copy)]
pub struct GlassoSettings {
    /// Outer stop: largest entry change of Ω over a full cycle.
    pub tol: f64,
    /// Inner lasso stop.
    pub inner_tol: f64,
    pub max_cycles: usize,
    pub max_inner: usize,
}

impl Default for GlassoSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            inner_tol: 1e-7,
            max_cycles: 1_000,
            max_inner: 1_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlassoSolution {
    pub model: ErrorModel,
    pub converged: bool,
    pub cycles: usize,
    /// Objective after each cycle.
    pub objective_trace: Vec<f64>,
}

impl GlassoSolution {
    pub fn omega(&self) -> &DMatrix<f64> {
        self.model.omega()
    }

    /// Nonzero entries strictly above the diagonal.
    pub fn off_diagonal_nonzeros(&self) -> usize {
        let o = self.model.omega();
        (0..o.nrows())
            .flat_map(|i| (i + 1..o.ncols()).map(move |j| (i, j)))
            .filter(|&(i, j)| o[(i, j)] != 0.0)
            .count()
    }
}

/// `tr(SΩ) − log|Ω| + λ2 Σ_{k≠k'} |Ω_kk'|`.
pub fn objective(s: &DMatrix<f64>, omega: &DMatrix<f64>, lambda2: f64) -> Result<f64> {
    let tr = s.component_mul(omega).sum();
    let pen: f64 = (0..omega.nrows())
        .flat_map(|i| (0..omega.ncols()).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j)
        .map(|(i, j)| omega[(i, j)].abs())
        .sum();
    Ok(tr - linalg::spd_log_det(omega)? + lambda2 * pen)
}

/// Largest entrywise violation of `S − Ω⁻¹ + λ2·Γ = 0`, with `Γ` a
/// subgradient of the off-diagonal absolute values (zero on the diagonal).
pub fn kkt_violation(s: &DMatrix<f64>, omega: &DMatrix<f64>, lambda2: f64) -> Result<f64> {
    let w = linalg::spd_inverse(omega)?;
    let q = s.nrows();
    let mut worst = 0.0f64;
    for i in 0..q {
        for j in 0..q {
            let g = s[(i, j)] - w[(i, j)];
            let v = if i == j {
                g.abs()
            } else if omega[(i, j)] != 0.0 {
                (g + lambda2 * omega[(i, j)].signum()).abs()
            } else {
                (g.abs() - lambda2).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

pub fn solve(problem: &PenalizedPrecisionProblem) -> Result<GlassoSolution> {
    let init = DMatrix::from_diagonal(&problem.s.diagonal().map(|v| 1.0 / v));
    solve_warm(problem, &init, &GlassoSettings::default())
}

/// Cyclic column updates starting from the positive-definite `init`.
pub fn solve_warm(
    problem: &PenalizedPrecisionProblem,
    init: &DMatrix<f64>,
    settings: &GlassoSettings,
) -> Result<GlassoSolution> {
    let sol = column_descent(problem, init, settings);
    match &sol {
        Ok(s) => audit::record_glasso(kkt_violation(&problem.s, s.omega(), problem.lambda2).ok()),
        Err(VarError::Numerical(_)) => audit::record_glasso(None),
        Err(_) => {}
    }
    sol
}

fn column_descent(
    problem: &PenalizedPrecisionProblem,
    init: &DMatrix<f64>,
    settings: &GlassoSettings,
) -> Result<GlassoSolution> {
    let s = &problem.s;
    let lam = problem.lambda2;
    let q = s.nrows();
    if init.shape() != (q, q) {
        return Err(VarError::Dimension("warm start has the wrong shape".into()));
    }
    let mut omega = linalg::symmetrize(init);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut cycles = 0;

    if q == 1 {
        omega[(0, 0)] = 1.0 / s[(0, 0)];
        trace.push(objective(s, &omega, lam)?);
        return Ok(GlassoSolution {
            model: ErrorModel::from_omega(omega)?,
            converged: true,
            cycles: 1,
            objective_trace: trace,
        });
    }

    while cycles < settings.max_cycles {
        cycles += 1;
        // refresh W each cycle to keep rank-one drift out of the downdates
        let mut w = linalg::spd_inverse(&omega)?;
        let before = omega.clone();
        for j in 0..q {
            let idx: Vec<usize> = (0..q).filter(|&m| m != j).collect();
            let m = q - 1;
            let s22 = s[(j, j)];
            let w22 = w[(j, j)];
            // Ω₋ⱼ⁻¹ = W₁₁ − w₁₂w₁₂ᵀ / w₂₂
            let inv11 = DMatrix::from_fn(m, m, |a, b| {
                w[(idx[a], idx[b])] - w[(idx[a], j)] * w[(idx[b], j)] / w22
            });
            let a_mat = &inv11 * s22;
            let s12 = DVector::from_fn(m, |a, _| s[(idx[a], j)]);
            let mut x = DVector::from_fn(m, |a, _| omega[(idx[a], j)]);
            let mut ax = &a_mat * &x;
            for _ in 0..settings.max_inner {
                let mut max_dx = 0.0f64;
                for c in 0..m {
                    let acc = a_mat[(c, c)];
                    let r = s12[c] + ax[c] - acc * x[c];
                    let new = -soft_threshold(r, lam) / acc;
                    let dx = new - x[c];
                    if dx != 0.0 {
                        ax.axpy(dx, &a_mat.column(c), 1.0);
                        x[c] = new;
                        max_dx = max_dx.max(dx.abs());
                    }
                }
                if max_dx < settings.inner_tol {
                    break;
                }
            }
            let omega22 = x.dot(&ax) / s22 + 1.0 / s22;
            for (a, &ia) in idx.iter().enumerate() {
                omega[(ia, j)] = x[a];
                omega[(j, ia)] = x[a];
            }
            omega[(j, j)] = omega22;
            // W update: W₁₁ = Ω₋ⱼ⁻¹ + (Ax)(Ax)ᵀ / s_jj, w₁₂ = −Ax, w_jj = s_jj
            for a in 0..m {
                for b in 0..m {
                    w[(idx[a], idx[b])] = inv11[(a, b)] + ax[a] * ax[b] / s22;
                }
                w[(idx[a], j)] = -ax[a];
                w[(j, idx[a])] = -ax[a];
            }
            w[(j, j)] = s22;
        }
        trace.push(objective(s, &omega, lam)?);
        if linalg::max_abs_diff(&omega, &before) < settings.tol {
            converged = true;
            break;
        }
    }
    let model = ErrorModel::from_omega(omega).map_err(|e| {
        VarError::Numerical(format!(
            "precision estimate lost positive definiteness: {e}"
        ))
    })?;
    Ok(GlassoSolution {
        model,
        converged,
        cycles,
        objective_trace: trace,
    })
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

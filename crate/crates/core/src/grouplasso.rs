//! Group-penalized least squares on whitened VAR data (the β-step).
//!
//! The problem solved is
//!
//! ```text
//! minimize (1/n)·‖ỹ − X̃β‖² + λ1 · Σ_g ‖β_g‖
//! ```
//!
//! with `ỹ = P y`, `X̃ = P (I_q ⊗ x0)` and `P = U ⊗ I_n`, where `U` is the
//! upper Cholesky factor of the precision matrix (`Ω = UᵀU`), so that
//! `PᵀP = Ω ⊗ I_n`. Because `X̃ᵀX̃ = Ω ⊗ x0ᵀx0` and `X̃ᵀỹ = (Ω ⊗ x0ᵀ) y`,
//! the solver works entirely with `q × q` and `p·q × p·q` blocks and never
//! forms an `n·q`-sized matrix.
//!
//! Groups are indexed by `(equation i, predictor k)` and hold the `p`
//! coefficients of predictor `k` at lags `1..p` in equation `i`. Each block
//! update minimizes the objective exactly over its group: the block problem
//! `½βᵀHβ − bᵀβ + λ‖β‖` is reduced to a scalar root search over the
//! shrinkage parameter in the eigenbasis of `H`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::audit;
use crate::error::{Result, VarError};
use crate::linalg;
use crate::var_model::StackedDesign;

/// Partition of the `p·q²` coefficients into `q²` lag groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupStructure {
    q: usize,
    p: usize,
}

impl GroupStructure {
    pub fn new(q: usize, p: usize) -> Self {
        Self { q, p }
    }

    pub fn n_groups(&self) -> usize {
        self.q * self.q
    }

    pub fn group_size(&self) -> usize {
        self.p
    }

    /// Positions in the stacked `β` of group `(equation, predictor)`.
    pub fn indices(&self, equation: usize, predictor: usize) -> Vec<usize> {
        let pq = self.p * self.q;
        (0..self.p)
            .map(|j| equation * pq + j * self.q + predictor)
            .collect()
    }

    /// Rows of the equation-major coefficient matrix that belong to `predictor`.
    pub fn rows(&self, predictor: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.p).map(move |j| j * self.q + predictor)
    }

    /// Groups in sweep order (equation-major).
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> {
        let q = self.q;
        (0..q).flat_map(move |i| (0..q).map(move |k| (i, k)))
    }
}

/// The β-step problem for a fixed precision matrix.
#[derive(Debug, Clone)]
pub struct WhitenedProblem {
    n: usize,
    q: usize,
    p: usize,
    x0: DMatrix<f64>,
    responses: DMatrix<f64>,
    omega: DMatrix<f64>,
    factor: DMatrix<f64>,
    /// `x0ᵀx0`
    gram: DMatrix<f64>,
    /// `x0ᵀY`
    cross: DMatrix<f64>,
}

impl WhitenedProblem {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    /// Upper-triangular `U` with `Ω = UᵀU`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn groups(&self) -> GroupStructure {
        GroupStructure::new(self.q, self.p)
    }

    /// `ỹ = (U ⊗ I_n) y`.
    pub fn y_tilde(&self) -> DVector<f64> {
        let m = &self.responses * self.factor.transpose();
        DVector::from_column_slice(m.as_slice())
    }

    /// Dense `X̃ = U ⊗ x0`. Only intended for small checks.
    pub fn x_tilde_dense(&self) -> DMatrix<f64> {
        let (n, m) = self.x0.shape();
        let mut x = DMatrix::zeros(n * self.q, m * self.q);
        for a in 0..self.q {
            for b in 0..self.q {
                let u = self.factor[(a, b)];
                if u != 0.0 {
                    x.view_mut((a * n, b * m), (n, m))
                        .copy_from(&(&self.x0 * u));
                }
            }
        }
        x
    }

    /// `X̃ᵀ(ỹ − X̃β)` as an equation-major `p·q × q` matrix.
    pub fn correlation(&self, coef: &DMatrix<f64>) -> DMatrix<f64> {
        (&self.cross - &self.gram * coef) * &self.omega
    }

    /// `‖ỹ − X̃β‖² = tr(Ω EᵀE)` with `E = Y − x0·coef`.
    pub fn residual_sum_of_squares(&self, coef: &DMatrix<f64>) -> f64 {
        let e = &self.responses - &self.x0 * coef;
        let ete = e.transpose() * e;
        (ete.component_mul(&self.omega)).sum()
    }

    /// `(1/n)‖ỹ − X̃β‖² + λ1 Σ_g ‖β_g‖`.
    pub fn objective(&self, coef: &DMatrix<f64>, lambda1: f64) -> f64 {
        self.residual_sum_of_squares(coef) / self.n as f64
            + lambda1 * group_norm_sum(coef, self.groups())
    }
}

/// `Σ_g ‖β_g‖` over all groups.
pub fn group_norm_sum(coef: &DMatrix<f64>, groups: GroupStructure) -> f64 {
    groups
        .iter()
        .map(|(i, k)| {
            groups
                .rows(k)
                .map(|r| coef[(r, i)].powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

/// Whitens the stacked design with the precision matrix `omega`.
pub fn whiten(stacked: &StackedDesign, omega: &DMatrix<f64>) -> Result<WhitenedProblem> {
    let q = stacked.q();
    if omega.shape() != (q, q) {
        return Err(VarError::Dimension(format!(
            "precision matrix is {}x{}, design has {q} equations",
            omega.nrows(),
            omega.ncols()
        )));
    }
    let factor = linalg::cholesky_upper(omega)?;
    let x0 = stacked.x0().clone();
    let responses = stacked.response_matrix();
    let gram = x0.transpose() * &x0;
    let cross = x0.transpose() * &responses;
    Ok(WhitenedProblem {
        n: stacked.n(),
        q,
        p: stacked.p(),
        x0,
        responses,
        omega: omega.clone(),
        factor,
        gram,
        cross,
    })
}

/// Smallest `λ1` at which `β = 0` satisfies the group optimality conditions:
/// `max_g (2/n)·‖X̃_gᵀ ỹ‖`. The factor `2/n` comes from differentiating the
/// `(1/n)`-scaled quadratic term.
pub fn lambda1_max(problem: &WhitenedProblem, groups: GroupStructure) -> f64 {
    let corr = &problem.cross * &problem.omega;
    let scale = 2.0 / problem.n as f64;
    groups
        .iter()
        .map(|(i, k)| {
            scale
                * groups
                    .rows(k)
                    .map(|r| corr[(r, i)].powi(2))
                    .sum::<f64>()
                    .sqrt()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy)]
pub struct GroupLassoSettings {
    /// Stop once the largest coefficient change over a sweep falls below this.
    pub tol: f64,
    /// ... and the group optimality violation falls below this.
    pub kkt_tol: f64,
    pub max_sweeps: usize,
}

impl Default for GroupLassoSettings {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            kkt_tol: 1e-6,
            max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroupLassoSolution {
    /// Equation-major `p·q × q` coefficients.
    pub coefficients: DMatrix<f64>,
    pub converged: bool,
    pub sweeps: usize,
    /// Largest group optimality violation at return.
    pub kkt_violation: f64,
    /// Objective after each sweep.
    pub objective_trace: Vec<f64>,
}

impl GroupLassoSolution {
    pub fn beta(&self) -> DVector<f64> {
        DVector::from_column_slice(self.coefficients.as_slice())
    }

    pub fn active_groups(&self, groups: GroupStructure) -> usize {
        groups
            .iter()
            .filter(|&(i, k)| groups.rows(k).any(|r| self.coefficients[(r, i)] != 0.0))
            .count()
    }
}

pub fn solve(
    problem: &WhitenedProblem,
    groups: GroupStructure,
    lambda1: f64,
) -> GroupLassoSolution {
    let init = DMatrix::zeros(problem.p * problem.q, problem.q);
    solve_warm(
        problem,
        groups,
        lambda1,
        &init,
        &GroupLassoSettings::default(),
    )
}

/// Block coordinate descent from `init`, sweeping groups in equation-major order.
pub fn solve_warm(
    problem: &WhitenedProblem,
    groups: GroupStructure,
    lambda1: f64,
    init: &DMatrix<f64>,
    settings: &GroupLassoSettings,
) -> GroupLassoSolution {
    let sol = block_descent(problem, groups, lambda1, init, settings);
    audit::record_group_lasso(sol.kkt_violation);
    sol
}

fn block_descent(
    problem: &WhitenedProblem,
    groups: GroupStructure,
    lambda1: f64,
    init: &DMatrix<f64>,
    settings: &GroupLassoSettings,
) -> GroupLassoSolution {
    assert!(lambda1 >= 0.0, "lambda1 must be nonnegative");
    let (q, p, n) = (problem.q, problem.p, problem.n as f64);
    let scale = 2.0 / n;
    if lambda1 > 0.0 && lambda1 >= lambda1_max(problem, groups) {
        let coef = DMatrix::zeros(p * q, q);
        return GroupLassoSolution {
            kkt_violation: kkt_violation(problem, groups, &coef, lambda1),
            objective_trace: vec![problem.objective(&coef, lambda1)],
            coefficients: coef,
            converged: true,
            sweeps: 0,
        };
    }
    let mut coef = init.clone();
    let mut corr = problem.correlation(&coef);

    // per-predictor eigen decomposition of the p×p Gram block
    let blocks: Vec<(DVector<f64>, DMatrix<f64>)> = (0..q)
        .map(|k| {
            let rows: Vec<usize> = groups.rows(k).collect();
            let g = DMatrix::from_fn(p, p, |a, b| problem.gram[(rows[a], rows[b])]);
            let eig = SymmetricEigen::new(g);
            (eig.eigenvalues.map(|v| v.max(0.0)), eig.eigenvectors)
        })
        .collect();

    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    let mut kkt = f64::INFINITY;
    while sweeps < settings.max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0f64;
        for (i, k) in groups.iter() {
            let rows: Vec<usize> = groups.rows(k).collect();
            let w = scale * problem.omega[(i, i)];
            let (evals, evecs) = &blocks[k];
            let old = DVector::from_fn(p, |a, _| coef[(rows[a], i)]);
            // b = (2/n) X̃_gᵀ r_{-g} = (2/n) corr_g + H β_g
            let h_old = evecs * (evals.component_mul(&(evecs.transpose() * &old))) * w;
            let b = DVector::from_fn(p, |a, _| scale * corr[(rows[a], i)]) + h_old;
            let new = block_minimizer(&b, &(evals * w), evecs, lambda1);
            let delta = &new - &old;
            let change = delta.amax();
            if change == 0.0 {
                continue;
            }
            max_change = max_change.max(change);
            for (a, &r) in rows.iter().enumerate() {
                coef[(r, i)] = new[a];
            }
            // corr -= gram[:, rows] δ Ω[i, :]
            let u = DVector::from_fn(p * q, |r, _| {
                rows.iter()
                    .enumerate()
                    .map(|(a, &c)| problem.gram[(r, c)] * delta[a])
                    .sum::<f64>()
            });
            for m in 0..q {
                let om = problem.omega[(i, m)];
                if om != 0.0 {
                    corr.column_mut(m).axpy(-om, &u, 1.0);
                }
            }
        }
        trace.push(problem.objective(&coef, lambda1));
        if max_change < settings.tol {
            corr = problem.correlation(&coef);
            kkt = kkt_from_correlation(&corr, &coef, groups, lambda1, scale);
            if kkt < settings.kkt_tol {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        kkt = kkt_violation(problem, groups, &coef, lambda1);
    }
    GroupLassoSolution {
        coefficients: coef,
        converged,
        sweeps,
        kkt_violation: kkt,
        objective_trace: trace,
    }
}

/// Exact minimizer of `½βᵀHβ − bᵀβ + λ‖β‖` with `H = V diag(d) Vᵀ`.
fn block_minimizer(
    b: &DVector<f64>,
    d: &DVector<f64>,
    v: &DMatrix<f64>,
    lambda: f64,
) -> DVector<f64> {
    let p = b.len();
    let bnorm = b.norm();
    if bnorm <= lambda {
        return DVector::zeros(p);
    }
    let c = v.transpose() * b;
    let dmax = d.max();
    let solve_with = |s: f64| {
        let z = DVector::from_fn(p, |a, _| {
            let den = d[a] + s;
            if den > 0.0 {
                c[a] / den
            } else {
                0.0
            }
        });
        v * z
    };
    if lambda == 0.0 {
        return solve_with(0.0);
    }
    // g(s) = s·‖(H + sI)⁻¹ b‖ increases from 0 to ‖b‖; find g(s) = λ.
    let g = |s: f64| -> (f64, f64) {
        let mut sq = 0.0;
        let mut num = 0.0;
        for a in 0..p {
            let den = d[a] + s;
            sq += c[a] * c[a] / (den * den);
            num += c[a] * c[a] * d[a] / (den * den * den);
        }
        let norm = sq.sqrt();
        (s * norm - lambda, if norm > 0.0 { num / norm } else { 0.0 })
    };
    let mut lo = 0.0;
    let mut hi = lambda * dmax / (bnorm - lambda) * (1.0 + 1e-12) + f64::MIN_POSITIVE;
    if g(hi).0 < 0.0 {
        // rounding: widen until bracketed
        while g(hi).0 < 0.0 {
            hi *= 2.0;
        }
    }
    let mut s = if dmax == 0.0 { hi } else { 0.5 * (lo + hi) };
    for _ in 0..200 {
        let (f, df) = g(s);
        if f == 0.0 {
            break;
        }
        if f < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let newton = if df > 0.0 { s - f / df } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - s).abs() <= 1e-15 * s.max(f64::MIN_POSITIVE) || hi - lo <= 1e-15 * hi {
            s = next;
            break;
        }
        s = next;
    }
    solve_with(s)
}

fn kkt_from_correlation(
    corr: &DMatrix<f64>,
    coef: &DMatrix<f64>,
    groups: GroupStructure,
    lambda1: f64,
    scale: f64,
) -> f64 {
    groups
        .iter()
        .map(|(i, k)| {
            let rows: Vec<usize> = groups.rows(k).collect();
            let grad = DVector::from_fn(rows.len(), |a, _| scale * corr[(rows[a], i)]);
            let beta = DVector::from_fn(rows.len(), |a, _| coef[(rows[a], i)]);
            let bn = beta.norm();
            if bn == 0.0 {
                (grad.norm() - lambda1).max(0.0)
            } else {
                (grad - beta * (lambda1 / bn)).norm()
            }
        })
        .fold(0.0, f64::max)
}

/// Largest violation of the group optimality conditions at `coef`:
/// `(2/n)X̃_gᵀr = λ1·β_g/‖β_g‖` for active groups and
/// `(2/n)‖X̃_gᵀr‖ ≤ λ1` for zero groups.
pub fn kkt_violation(
    problem: &WhitenedProblem,
    groups: GroupStructure,
    coef: &DMatrix<f64>,
    lambda1: f64,
) -> f64 {
    let corr = problem.correlation(coef);
    kkt_from_correlation(&corr, coef, groups, lambda1, 2.0 / problem.n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_indices_partition() {
        let g = GroupStructure::new(3, 2);
        let mut seen = [0usize; 18];
        for (i, k) in g.iter() {
            let idx = g.indices(i, k);
            assert_eq!(idx.len(), 2);
            for ix in idx {
                seen[ix] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(g.n_groups(), 9);
    }

    #[test]
    fn block_minimizer_isotropic_matches_soft_threshold() {
        let d = DVector::from_vec(vec![2.0, 2.0]);
        let v = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![3.0, 4.0]);
        let got = block_minimizer(&b, &d, &v, 1.0);
        // (1 - λ/‖b‖) b / d
        let want = &b * ((1.0 - 1.0 / 5.0) / 2.0);
        assert!((got - want).amax() < 1e-13);
    }

    #[test]
    fn block_minimizer_anisotropic_is_stationary() {
        let d = DVector::from_vec(vec![0.5, 3.0]);
        let v = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, -2.0]);
        let lam = 0.7;
        let beta = block_minimizer(&b, &d, &v, lam);
        let grad = DVector::from_fn(2, |a, _| d[a] * beta[a]) - &b + &beta * (lam / beta.norm());
        assert!(grad.amax() < 1e-12);
    }
}

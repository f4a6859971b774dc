//! VAR(p) data types, simulation, stacking into regression form, centering
//! and companion-form stability.
//!
//! Conventions used throughout the crate:
//!
//! - `B_j[(k, l)]` is the effect of series `l` at lag `j` on series `k`.
//! - The lag design `x0` has `p·q` columns ordered lag-major, series-minor:
//!   column `(j - 1)·q + l` holds series `l` at lag `j`.
//! - Coefficients are stored equation-major in a `p·q × q` matrix whose
//!   column `k` is the coefficient vector of equation `k`, so that
//!   `vec(coef)` lines up with `y = (I_q ⊗ x0) β + e`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, VarError};
use crate::linalg;

/// Default number of discarded start-up rows in [`simulate_var`].
pub const DEFAULT_BURN_IN: usize = 200;

const SYMMETRY_TOL: f64 = 1e-12;

/// Autoregressive coefficient matrices `B_1..B_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarCoefficients {
    q: usize,
    lags: Vec<DMatrix<f64>>,
}

impl VarCoefficients {
    pub fn new(lags: Vec<DMatrix<f64>>) -> Result<Self> {
        let q = lags
            .first()
            .map(|b| b.nrows())
            .ok_or_else(|| VarError::InvalidArgument("at least one lag matrix required".into()))?;
        if q == 0 {
            return Err(VarError::InvalidArgument("zero-dimensional VAR".into()));
        }
        for (j, b) in lags.iter().enumerate() {
            if b.nrows() != q || b.ncols() != q {
                return Err(VarError::Dimension(format!(
                    "lag {} matrix is {}x{}, expected {q}x{q}",
                    j + 1,
                    b.nrows(),
                    b.ncols()
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(VarError::InvalidArgument(format!(
                    "lag {} matrix has non-finite entries",
                    j + 1
                )));
            }
        }
        Ok(Self { q, lags })
    }

    pub fn zeros(q: usize, p: usize) -> Self {
        Self {
            q,
            lags: vec![DMatrix::zeros(q, q); p],
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn p(&self) -> usize {
        self.lags.len()
    }

    /// `B_j` for `j` in `1..=p`.
    pub fn lag(&self, j: usize) -> &DMatrix<f64> {
        &self.lags[j - 1]
    }

    pub fn lags(&self) -> &[DMatrix<f64>] {
        &self.lags
    }

    /// Equation-major `p·q × q` coefficient matrix (see module docs).
    pub fn to_equation_matrix(&self) -> DMatrix<f64> {
        let (q, p) = (self.q, self.p());
        DMatrix::from_fn(p * q, q, |r, eq| self.lags[r / q][(eq, r % q)])
    }

    pub fn from_equation_matrix(coef: &DMatrix<f64>, p: usize) -> Result<Self> {
        let q = coef.ncols();
        if coef.nrows() != p * q {
            return Err(VarError::Dimension(format!(
                "coefficient matrix is {}x{}, expected {}x{q}",
                coef.nrows(),
                q,
                p * q
            )));
        }
        let lags = (0..p)
            .map(|j| DMatrix::from_fn(q, q, |eq, l| coef[(j * q + l, eq)]))
            .collect();
        Self::new(lags)
    }

    /// Stacked coefficient vector `β` of length `p·q²`.
    pub fn to_beta(&self) -> DVector<f64> {
        let m = self.to_equation_matrix();
        DVector::from_column_slice(m.as_slice())
    }

    pub fn nonzero_count(&self) -> usize {
        self.lags
            .iter()
            .map(|b| b.iter().filter(|v| **v != 0.0).count())
            .sum()
    }

    /// `p·q × p·q` companion matrix `[B_1 … B_p; I 0]`.
    pub fn companion(&self) -> DMatrix<f64> {
        let (q, p) = (self.q, self.p());
        let mut c = DMatrix::zeros(p * q, p * q);
        for (j, b) in self.lags.iter().enumerate() {
            c.view_mut((0, j * q), (q, q)).copy_from(b);
        }
        for i in q..p * q {
            c[(i, i - q)] = 1.0;
        }
        c
    }

    /// Returns a copy with series reordered: new series `i` is old series `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let lags = self
            .lags
            .iter()
            .map(|b| DMatrix::from_fn(self.q, self.q, |i, k| b[(perm[i], perm[k])]))
            .collect();
        Self { q: self.q, lags }
    }
}

/// Gaussian error distribution, stored as both covariance and precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModel {
    sigma: DMatrix<f64>,
    omega: DMatrix<f64>,
}

impl ErrorModel {
    pub fn from_sigma(sigma: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&sigma, "covariance")?;
        let sigma = linalg::symmetrize(&sigma);
        let omega = linalg::spd_inverse(&sigma)?;
        Ok(Self { sigma, omega })
    }

    pub fn from_omega(omega: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&omega, "precision")?;
        let omega = linalg::symmetrize(&omega);
        let sigma = linalg::spd_inverse(&omega)?;
        Ok(Self { sigma, omega })
    }

    pub fn identity(q: usize) -> Self {
        Self {
            sigma: DMatrix::identity(q, q),
            omega: DMatrix::identity(q, q),
        }
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn q(&self) -> usize {
        self.sigma.nrows()
    }
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(VarError::Dimension(format!(
            "{what} matrix is {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(VarError::InvalidArgument(format!(
                    "{what} matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// A `T × q` panel of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    data: DMatrix<f64>,
    names: Vec<String>,
    means: DVector<f64>,
}

impl TimeSeriesPanel {
    pub fn new(data: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != data.ncols() {
            return Err(VarError::Dimension(format!(
                "{} names for {} columns",
                names.len(),
                data.ncols()
            )));
        }
        if let Some((i, n)) = names
            .iter()
            .enumerate()
            .find(|(i, n)| names[..*i].contains(n))
        {
            return Err(VarError::Data(format!(
                "duplicate series name '{n}' at column {}",
                i + 1
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let t = data.nrows().max(1);
            return Err(VarError::Data(format!(
                "non-finite value at row {}, column {}",
                pos % t,
                names[pos / t]
            )));
        }
        let q = data.ncols();
        Ok(Self {
            data,
            names,
            means: DVector::zeros(q),
        })
    }

    /// Panel with default names `y1..yq`.
    pub fn from_data(data: DMatrix<f64>) -> Result<Self> {
        let names = (1..=data.ncols()).map(|i| format!("y{i}")).collect();
        Self::new(data, names)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Column means removed by [`center`](Self::center); zero if uncentered.
    pub fn means(&self) -> &DVector<f64> {
        &self.means
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn q(&self) -> usize {
        self.data.ncols()
    }

    /// Removes column means; the removed means accumulate in `means`.
    pub fn center(&self) -> Self {
        let t = self.len().max(1) as f64;
        let mut data = self.data.clone();
        let mut means = self.means.clone();
        for c in 0..self.q() {
            let m = data.column(c).sum() / t;
            data.column_mut(c).add_scalar_mut(-m);
            means[c] += m;
        }
        Self {
            data,
            names: self.names.clone(),
            means,
        }
    }

    /// Restores previously removed column means.
    pub fn uncenter(&self) -> Self {
        let mut data = self.data.clone();
        for c in 0..self.q() {
            data.column_mut(c).add_scalar_mut(self.means[c]);
        }
        Self {
            data,
            names: self.names.clone(),
            means: DVector::zeros(self.q()),
        }
    }

    /// Rows `start..end` as a new panel (means carried over).
    pub fn rows(&self, start: usize, end: usize) -> Self {
        Self {
            data: self.data.rows(start, end - start).into_owned(),
            names: self.names.clone(),
            means: self.means.clone(),
        }
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let data = DMatrix::from_fn(self.len(), self.q(), |t, i| self.data[(t, perm[i])]);
        Self {
            data,
            names: perm.iter().map(|&i| self.names[i].clone()).collect(),
            means: DVector::from_fn(self.q(), |i, _| self.means[perm[i]]),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            data: &self.data * c,
            names: self.names.clone(),
            means: &self.means * c,
        }
    }
}

/// Regression form `y = (I_q ⊗ x0) β + e` of a VAR(p).
#[derive(Debug, Clone)]
pub struct StackedDesign {
    y: DVector<f64>,
    x0: DMatrix<f64>,
    q: usize,
    p: usize,
}

impl StackedDesign {
    /// Builds a design from an `n × q` response matrix and an `n × p·q` lag matrix.
    pub fn from_parts(responses: &DMatrix<f64>, x0: DMatrix<f64>, p: usize) -> Result<Self> {
        let (n, q) = responses.shape();
        if x0.shape() != (n, p * q) || p == 0 {
            return Err(VarError::Dimension(format!(
                "lag matrix is {}x{}, expected {n}x{}",
                x0.nrows(),
                x0.ncols(),
                p * q
            )));
        }
        Ok(Self {
            y: DVector::from_column_slice(responses.as_slice()),
            x0,
            q,
            p,
        })
    }

    /// Stacked responses, equation 1 first; length `n·q`.
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// `n × p·q` lag matrix.
    pub fn x0(&self) -> &DMatrix<f64> {
        &self.x0
    }

    pub fn n(&self) -> usize {
        self.x0.nrows()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Responses as an `n × q` matrix (column `k` = equation `k`).
    pub fn response_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n(), self.q, self.y.as_slice())
    }

    /// Dense `n·q × p·q²` design `I_q ⊗ x0`. Only for small checks.
    pub fn dense_design(&self) -> DMatrix<f64> {
        let (n, m) = self.x0.shape();
        let mut x = DMatrix::zeros(n * self.q, m * self.q);
        for k in 0..self.q {
            x.view_mut((k * n, k * m), (n, m)).copy_from(&self.x0);
        }
        x
    }

    /// `n × q` residual matrix `Y − x0·coef` for an equation-major coefficient matrix.
    pub fn residuals(&self, coef: &DMatrix<f64>) -> DMatrix<f64> {
        self.response_matrix() - &self.x0 * coef
    }
}

/// Builds the regression form of a VAR(p) from a panel.
pub fn stack(panel: &TimeSeriesPanel, p: usize) -> Result<StackedDesign> {
    let (t, q) = (panel.len(), panel.q());
    if p == 0 {
        return Err(VarError::InvalidArgument(
            "lag order must be at least 1".into(),
        ));
    }
    if t <= p {
        return Err(VarError::Dimension(format!(
            "panel has {t} rows; lag order {p} needs more than {p}"
        )));
    }
    let n = t - p;
    let data = panel.data();
    let x0 = DMatrix::from_fn(n, p * q, |r, c| {
        let (j, l) = (c / q, c % q);
        data[(r + p - 1 - j, l)]
    });
    let y = DVector::from_fn(n * q, |idx, _| data[(idx % n + p, idx / n)]);
    Ok(StackedDesign { y, x0, q, p })
}

/// Companion-form spectral radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub spectral_radius: f64,
    pub stable: bool,
}

pub fn stability_check(spec: &VarCoefficients) -> Stability {
    let radius = spec
        .companion()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    Stability {
        spectral_radius: radius,
        stable: radius < 1.0,
    }
}

/// Runs the recursion `y_t = Σ B_j y_{t−j} + e_t` from zero initial values.
pub fn propagate(spec: &VarCoefficients, innovations: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q = spec.q();
    if innovations.ncols() != q {
        return Err(VarError::Dimension(format!(
            "innovations have {} columns, VAR has {q} series",
            innovations.ncols()
        )));
    }
    let t_total = innovations.nrows();
    let mut y = DMatrix::zeros(t_total, q);
    for t in 0..t_total {
        let mut row = innovations.row(t).transpose();
        for (j, b) in spec.lags().iter().enumerate() {
            if t > j {
                row += b * y.row(t - j - 1).transpose();
            }
        }
        y.row_mut(t).copy_from(&row.transpose());
    }
    Ok(y)
}

/// Generator used for all simulation: ChaCha8 seeded from a `u64`, with an
/// independent stream per replicate. Gaussian draws use the ziggurat
/// sampler of `rand_distr::StandardNormal`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `rows × q` matrix of `N_q(0, Σ)` draws.
pub fn gaussian_innovations<R: rand::Rng>(
    err: &ErrorModel,
    rows: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let q = err.q();
    let l =
        linalg::cholesky_lower(err.sigma()).expect("ErrorModel covariance is positive definite");
    let z = DMatrix::from_fn(q, rows, |_, _| StandardNormal.sample(rng));
    (l * z).transpose()
}

/// Simulates `t` rows of a stable VAR after `burn_in` discarded rows.
pub fn simulate_var(
    spec: &VarCoefficients,
    err: &ErrorModel,
    t: usize,
    seed: u64,
    burn_in: usize,
) -> Result<TimeSeriesPanel> {
    simulate_var_stream(spec, err, t, seed, 0, burn_in)
}

/// [`simulate_var`] on a numbered RNG stream of `seed`.
pub fn simulate_var_stream(
    spec: &VarCoefficients,
    err: &ErrorModel,
    t: usize,
    seed: u64,
    stream: u64,
    burn_in: usize,
) -> Result<TimeSeriesPanel> {
    let mut rng = rng_for(seed, stream);
    simulate_var_with_rng(spec, err, t, burn_in, &mut rng)
}

pub fn simulate_var_with_rng<R: rand::Rng>(
    spec: &VarCoefficients,
    err: &ErrorModel,
    t: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<TimeSeriesPanel> {
    if err.q() != spec.q() {
        return Err(VarError::Dimension(format!(
            "error model has dimension {}, VAR has {}",
            err.q(),
            spec.q()
        )));
    }
    let st = stability_check(spec);
    if !st.stable {
        return Err(VarError::Unstable {
            radius: st.spectral_radius,
        });
    }
    let e = gaussian_innovations(err, t + burn_in, rng);
    let y = propagate(spec, &e)?;
    TimeSeriesPanel::from_data(y.rows(burn_in, t).into_owned())
}

/// Ten-dimensional VAR(2) with two leader/follower blocks: series 1 drives
/// series 2–5 and series 6 drives series 7–10, with noise `Σ = 0.1·I`.
pub fn leader_follower_design() -> (VarCoefficients, ErrorModel) {
    let block = |own: f64| {
        let mut b = DMatrix::zeros(5, 5);
        for i in 0..5 {
            b[(i, i)] = own;
            b[(i, 0)] = own;
        }
        b
    };
    let lags = [0.4, 0.2]
        .iter()
        .map(|&v| {
            let mut m = DMatrix::zeros(10, 10);
            m.view_mut((0, 0), (5, 5)).copy_from(&block(v));
            m.view_mut((5, 5), (5, 5)).copy_from(&block(v));
            m
        })
        .collect();
    let spec = VarCoefficients::new(lags).expect("valid design");
    let err = ErrorModel::from_sigma(DMatrix::identity(10, 10) * 0.1).expect("valid covariance");
    (spec, err)
}

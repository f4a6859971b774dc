#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use sparsevar::var_model::{self, rng_for, StackedDesign, TimeSeriesPanel};

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_for(seed, 99);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random design with `n` usable rows: regressors are i.i.d. normal so the
/// problem does not depend on VAR dynamics.
pub fn random_stacked(q: usize, p: usize, n: usize, seed: u64) -> StackedDesign {
    let x0 = gaussian_matrix(n, p * q, seed);
    let noise = gaussian_matrix(n, q, seed.wrapping_add(1_000));
    let coef = gaussian_matrix(p * q, q, seed.wrapping_add(2_000)) * 0.5;
    let y = &x0 * coef + noise;
    StackedDesign::from_parts(&y, x0, p).unwrap()
}

/// Random symmetric positive definite matrix with eigenvalues in `[0.5, 3]`.
pub fn random_spd(q: usize, seed: u64) -> DMatrix<f64> {
    let a = gaussian_matrix(q, q, seed);
    let qr = a.qr();
    let v = qr.q();
    let mut rng = rng_for(seed, 7);
    let d = DMatrix::from_fn(q, q, |i, j| {
        if i == j {
            rng.random_range(0.5..3.0)
        } else {
            0.0
        }
    });
    let m = &v * d * v.transpose();
    (&m + m.transpose()) * 0.5
}

/// Sample covariance of `n` draws from `N(0, Σ)` with `Σ` random SPD.
pub fn sample_covariance(q: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let l = random_spd(q, seed).cholesky().unwrap().l();
    let z = gaussian_matrix(n, q, seed.wrapping_add(5)) * l.transpose();
    let s = z.transpose() * &z / n as f64;
    (&s + s.transpose()) * 0.5
}

pub fn diagonal_var1(
    q: usize,
    b: f64,
    variance: f64,
) -> (var_model::VarCoefficients, var_model::ErrorModel) {
    (
        var_model::VarCoefficients::new(vec![DMatrix::identity(q, q) * b]).unwrap(),
        var_model::ErrorModel::from_sigma(DMatrix::identity(q, q) * variance).unwrap(),
    )
}

pub fn leader_follower_panel(t: usize, seed: u64) -> TimeSeriesPanel {
    let (spec, err) = var_model::leader_follower_design();
    var_model::simulate_var(&spec, &err, t, seed, var_model::DEFAULT_BURN_IN).unwrap()
}

pub fn assert_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) {
    assert_eq!(a.shape(), b.shape());
    let d = (a - b).amax();
    assert!(d <= tol, "max abs difference {d:e} exceeds {tol:e}");
}

//! Generalized impulse responses, effect sizes and residual parametric
//! bootstrap bands.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Result, VarError};
use crate::estimator::FitResult;
use crate::linalg;
use crate::method::MethodConfig;
use crate::var_model::{self, ErrorModel, TimeSeriesPanel, VarCoefficients, DEFAULT_BURN_IN};

pub const DEFAULT_HORIZON: usize = 10;

/// Horizons summed by [`effect_size`].
pub const EFFECT_LAGS: usize = 10;

/// Share of dropped bootstrap replicates above which a warning is attached.
pub const DROP_WARNING_SHARE: f64 = 0.05;

/// Response array indexed by `(impulse j, response i, horizon k)`, `k = 0..=H`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseArray {
    q: usize,
    horizon: usize,
    values: Vec<f64>,
}

impl ResponseArray {
    pub fn zeros(q: usize, horizon: usize) -> Self {
        Self {
            q,
            horizon,
            values: vec![0.0; q * q * (horizon + 1)],
        }
    }

    fn offset(&self, impulse: usize, response: usize, k: usize) -> usize {
        assert!(
            impulse < self.q && response < self.q && k <= self.horizon,
            "response index out of range"
        );
        (impulse * self.q + response) * (self.horizon + 1) + k
    }

    pub fn get(&self, impulse: usize, response: usize, k: usize) -> f64 {
        self.values[self.offset(impulse, response, k)]
    }

    pub fn set(&mut self, impulse: usize, response: usize, k: usize, v: f64) {
        let o = self.offset(impulse, response, k);
        self.values[o] = v;
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Reorders series: entry `(j, i)` of the result is entry `(perm[j], perm[i])` here.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.q, self.horizon);
        for j in 0..self.q {
            for i in 0..self.q {
                for k in 0..=self.horizon {
                    out.set(j, i, k, self.get(perm[j], perm[i], k));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bands {
    pub level: f64,
    pub lower: ResponseArray,
    pub upper: ResponseArray,
}

#[derive(Debug, Clone)]
pub struct GirfResult {
    pub responses: ResponseArray,
    pub bands: Option<Bands>,
    /// Replicates that entered the bands.
    pub n_boot: usize,
    pub dropped: usize,
    pub warning: Option<String>,
    /// Covariance of the bootstrap coefficient vectors `vec(B)` (equation-major, length `p·q²`).
    pub coef_covariance: Option<DMatrix<f64>>,
}

impl GirfResult {
    pub fn horizon(&self) -> usize {
        self.responses.horizon()
    }

    pub fn q(&self) -> usize {
        self.responses.q()
    }

    pub fn response(&self, impulse: usize, response: usize, k: usize) -> f64 {
        self.responses.get(impulse, response, k)
    }

    /// Writes `impulse,response,horizon,value,lower,upper` rows; band columns
    /// are empty without bands.
    pub fn write_csv<W: Write>(&self, names: &[String], out: W) -> Result<()> {
        if names.len() != self.q() {
            return Err(VarError::Dimension(format!(
                "{} series names for {} series",
                names.len(),
                self.q()
            )));
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["impulse", "response", "horizon", "value", "lower", "upper"])?;
        for j in 0..self.q() {
            for i in 0..self.q() {
                for k in 0..=self.horizon() {
                    let (lo, hi) = match &self.bands {
                        Some(b) => (
                            b.lower.get(j, i, k).to_string(),
                            b.upper.get(j, i, k).to_string(),
                        ),
                        None => (String::new(), String::new()),
                    };
                    w.write_record([
                        names[j].clone(),
                        names[i].clone(),
                        k.to_string(),
                        self.response(j, i, k).to_string(),
                        lo,
                        hi,
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `Φ_0 = I`, `Φ_k = Σ_{i=1..min(k,p)} B_i Φ_{k−i}` for `k = 0..=h`.
pub fn ma_coefficients(coef: &VarCoefficients, h: usize) -> Vec<DMatrix<f64>> {
    let (q, p) = (coef.q(), coef.p());
    let mut phi: Vec<DMatrix<f64>> = Vec::with_capacity(h + 1);
    phi.push(DMatrix::identity(q, q));
    for k in 1..=h {
        let mut m = DMatrix::zeros(q, q);
        for i in 1..=k.min(p) {
            m += coef.lag(i) * &phi[k - i];
        }
        phi.push(m);
    }
    phi
}

/// Generalized responses `scale · Φ_k Σ e_j / √Σ_jj` for every impulse `j`.
pub fn girf_scaled(
    coef: &VarCoefficients,
    sigma: &DMatrix<f64>,
    h: usize,
    scale: f64,
) -> Result<ResponseArray> {
    let q = coef.q();
    if sigma.shape() != (q, q) {
        return Err(VarError::Dimension(format!(
            "covariance is {}x{}, VAR has {q} series",
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    linalg::cholesky_lower(sigma).map_err(|_| {
        VarError::Numerical(
            "error covariance is not positive definite; use the sparse estimator, whose precision estimate is always positive definite".into(),
        )
    })?;
    let phi = ma_coefficients(coef, h);
    let mut out = ResponseArray::zeros(q, h);
    for j in 0..q {
        let shock: DVector<f64> = sigma.column(j) * (scale / sigma[(j, j)].sqrt());
        for (k, ph) in phi.iter().enumerate() {
            let r = ph * &shock;
            for i in 0..q {
                out.set(j, i, k, r[i]);
            }
        }
    }
    Ok(out)
}

/// One-standard-deviation generalized responses of a fitted model.
pub fn girf(fit: &FitResult, h: usize) -> Result<GirfResult> {
    Ok(GirfResult {
        responses: girf_scaled(&fit.coefficients, fit.error.sigma(), h, 1.0)?,
        bands: None,
        n_boot: 0,
        dropped: 0,
        warning: None,
        coef_covariance: None,
    })
}

/// Responses to impulse `j` as a `q × (H+1)` matrix.
pub fn girf_impulse(fit: &FitResult, impulse: usize, h: usize) -> Result<DMatrix<f64>> {
    let q = fit.q();
    if impulse >= q {
        return Err(VarError::InvalidArgument(format!(
            "impulse {impulse} out of range for {q} series"
        )));
    }
    let r = girf_scaled(&fit.coefficients, fit.error.sigma(), h, 1.0)?;
    Ok(DMatrix::from_fn(q, h + 1, |i, k| r.get(impulse, i, k)))
}

/// Sum of absolute responses of `response` to `impulse` over horizons
/// `1..=10`, or `0..=10` with `include_impact`.
pub fn effect_size(
    girf: &GirfResult,
    impulse: usize,
    response: usize,
    include_impact: bool,
) -> Result<f64> {
    if girf.horizon() < EFFECT_LAGS {
        return Err(VarError::InvalidArgument(format!(
            "effect sizes need horizon at least {EFFECT_LAGS}, got {}",
            girf.horizon()
        )));
    }
    if impulse >= girf.q() || response >= girf.q() {
        return Err(VarError::InvalidArgument(
            "series index out of range".into(),
        ));
    }
    let start = if include_impact { 0 } else { 1 };
    Ok((start..=EFFECT_LAGS)
        .map(|k| girf.response(impulse, response, k).abs())
        .sum())
}

#[derive(Debug, Clone, Copy)]
pub struct BootstrapSettings {
    pub n_boot: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Central coverage of the bands, e.g. 0.9 for 5%/95%.
    pub level: f64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        Self {
            n_boot: 1000,
            horizon: DEFAULT_HORIZON,
            seed: 0,
            level: 0.9,
        }
    }
}

/// Residual parametric bootstrap: each replicate simulates `T` rows from the
/// fitted model with `N(0, Σ̂)` errors on RNG stream `(seed, replicate)`,
/// re-estimates with the same method and tuning parameters and computes
/// GIRFs. Bands are pointwise percentiles across replicates.
pub fn bootstrap_bands(
    fit: &FitResult,
    panel: &TimeSeriesPanel,
    config: &MethodConfig,
    settings: &BootstrapSettings,
) -> Result<GirfResult> {
    if settings.n_boot == 0 {
        return Err(VarError::InvalidArgument(
            "bootstrap needs at least one replicate".into(),
        ));
    }
    if !(settings.level > 0.0 && settings.level < 1.0) {
        return Err(VarError::InvalidArgument(
            "band level must lie in (0, 1)".into(),
        ));
    }
    let h = settings.horizon;
    let point = girf_scaled(&fit.coefficients, fit.error.sigma(), h, 1.0)?;
    let st = var_model::stability_check(&fit.coefficients);
    if !st.stable {
        return Err(VarError::Unstable {
            radius: st.spectral_radius,
        });
    }
    let t = panel.len();
    let means = fit.means.clone();

    let replicates: Vec<Option<(ResponseArray, DVector<f64>)>> = (0..settings.n_boot)
        .into_par_iter()
        .map(|r| {
            let mut rng = var_model::rng_for(settings.seed, r as u64);
            let sim = var_model::simulate_var_with_rng(
                &fit.coefficients,
                &fit.error,
                t,
                DEFAULT_BURN_IN,
                &mut rng,
            )
            .ok()?;
            let data = DMatrix::from_fn(t, fit.q(), |row, c| sim.data()[(row, c)] + means[c]);
            let boot_panel = TimeSeriesPanel::new(data, panel.names().to_vec()).ok()?;
            let refit = fit.method.refit(&boot_panel, &fit.selected, config).ok()?;
            let resp = girf_scaled(&refit.coefficients, refit.error.sigma(), h, 1.0).ok()?;
            Some((resp, refit.coefficients.to_beta()))
        })
        .collect();

    let kept: Vec<&(ResponseArray, DVector<f64>)> = replicates.iter().flatten().collect();
    let dropped = settings.n_boot - kept.len();
    if kept.is_empty() {
        return Err(VarError::Numerical(
            "every bootstrap replicate failed to re-estimate".into(),
        ));
    }
    let warning = (dropped as f64 > DROP_WARNING_SHARE * settings.n_boot as f64).then(|| {
        format!(
            "{dropped} of {} bootstrap replicates failed and were dropped",
            settings.n_boot
        )
    });

    let q = fit.q();
    let lo_p = (1.0 - settings.level) / 2.0;
    let hi_p = 1.0 - lo_p;
    let mut lower = ResponseArray::zeros(q, h);
    let mut upper = ResponseArray::zeros(q, h);
    let mut buf = Vec::with_capacity(kept.len());
    for j in 0..q {
        for i in 0..q {
            for k in 0..=h {
                buf.clear();
                buf.extend(kept.iter().map(|(r, _)| r.get(j, i, k)));
                buf.sort_by(|a, b| a.total_cmp(b));
                lower.set(j, i, k, linalg::quantile_sorted(&buf, lo_p));
                upper.set(j, i, k, linalg::quantile_sorted(&buf, hi_p));
            }
        }
    }

    let m = kept.len();
    let dim = kept[0].1.len();
    let mean = kept.iter().fold(DVector::zeros(dim), |acc, (_, b)| acc + b) / m as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for (_, b) in kept.iter().copied() {
        let d = b - &mean;
        cov += &d * d.transpose();
    }
    if m > 1 {
        cov /= (m - 1) as f64;
    }

    Ok(GirfResult {
        responses: point,
        bands: Some(Bands {
            level: settings.level,
            lower,
            upper,
        }),
        n_boot: m,
        dropped,
        warning,
        coef_covariance: Some(cov),
    })
}

/// Generalized responses of a known model, for coverage checks.
pub fn true_girf(coef: &VarCoefficients, err: &ErrorModel, h: usize) -> Result<ResponseArray> {
    girf_scaled(coef, err.sigma(), h, 1.0)
}

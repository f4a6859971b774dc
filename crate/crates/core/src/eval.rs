//! Accuracy metrics and statistical comparisons of competing estimators.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DMatrix;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::error::{Result, VarError};
use crate::method::Method;
use crate::var_model::VarCoefficients;

fn check_shape(a: &VarCoefficients, b: &VarCoefficients) -> Result<()> {
    if a.q() != b.q() || a.p() != b.p() {
        return Err(VarError::Dimension(format!(
            "coefficient shapes differ: q={}, p={} vs q={}, p={}",
            a.q(),
            a.p(),
            b.q(),
            b.p()
        )));
    }
    Ok(())
}

fn cells(c: &VarCoefficients) -> impl Iterator<Item = f64> + '_ {
    c.lags().iter().flat_map(|b| b.iter().copied())
}

/// Mean absolute estimation error over runs and over the `p·q²` coefficients.
pub fn maee(estimates: &[VarCoefficients], truth: &VarCoefficients) -> Result<f64> {
    if estimates.is_empty() {
        return Err(VarError::InvalidArgument("no estimates".into()));
    }
    let mut total = 0.0;
    for e in estimates {
        check_shape(e, truth)?;
        let s: f64 = cells(e).zip(cells(truth)).map(|(a, b)| (a - b).abs()).sum();
        total += s / (truth.p() * truth.q() * truth.q()) as f64;
    }
    Ok(total / estimates.len() as f64)
}

/// Share of true nonzero cells estimated nonzero (exact `≠ 0` test).
pub fn tpr(estimate: &VarCoefficients, truth: &VarCoefficients) -> Result<f64> {
    check_shape(estimate, truth)?;
    let (mut hit, mut pos) = (0usize, 0usize);
    for (e, t) in cells(estimate).zip(cells(truth)) {
        if t != 0.0 {
            pos += 1;
            if e != 0.0 {
                hit += 1;
            }
        }
    }
    if pos == 0 {
        return Err(VarError::InvalidArgument(
            "true positive rate undefined: truth has no nonzero cell".into(),
        ));
    }
    Ok(hit as f64 / pos as f64)
}

/// Share of true zero cells estimated exactly zero.
pub fn tnr(estimate: &VarCoefficients, truth: &VarCoefficients) -> Result<f64> {
    check_shape(estimate, truth)?;
    let (mut hit, mut neg) = (0usize, 0usize);
    for (e, t) in cells(estimate).zip(cells(truth)) {
        if t == 0.0 {
            neg += 1;
            if e == 0.0 {
                hit += 1;
            }
        }
    }
    if neg == 0 {
        return Err(VarError::InvalidArgument(
            "true negative rate undefined: truth has no zero cell".into(),
        ));
    }
    Ok(hit as f64 / neg as f64)
}

/// Mean absolute forecast error over aligned `(origins × q)` panels.
pub fn mafe(forecasts: &DMatrix<f64>, actuals: &DMatrix<f64>) -> Result<f64> {
    if forecasts.shape() != actuals.shape() {
        return Err(VarError::Dimension(format!(
            "forecasts are {}x{}, actuals {}x{}",
            forecasts.nrows(),
            forecasts.ncols(),
            actuals.nrows(),
            actuals.ncols()
        )));
    }
    if forecasts.is_empty() {
        return Err(VarError::InvalidArgument("no forecasts".into()));
    }
    Ok((forecasts - actuals).abs().mean())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sided paired t-test on `a − b`.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(VarError::InvalidArgument(format!(
            "paired t-test needs equal lengths of at least 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TestResult {
                statistic: 0.0,
                p_value: 1.0,
            }
        } else {
            TestResult {
                statistic: mean.signum() * f64::INFINITY,
                p_value: 0.0,
            }
        });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).map_err(|e| VarError::Numerical(e.to_string()))?;
    Ok(TestResult {
        statistic: t,
        p_value: (2.0 * dist.cdf(-t.abs())).min(1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DieboldMariano {
    pub statistic: f64,
    pub p_value: f64,
    /// Long-run variance of the loss differential is not positive.
    pub degenerate: bool,
}

/// Minimum series length accepted by [`diebold_mariano`].
pub const DM_MIN_LEN: usize = 10;

/// Diebold–Mariano test on `d_t = |a_t| − |b_t|` with a rectangular
/// long-run variance over lags `0..h−1` and a normal reference.
pub fn diebold_mariano(a: &[f64], b: &[f64], horizon: usize) -> Result<DieboldMariano> {
    if a.len() != b.len() || a.len() < DM_MIN_LEN {
        return Err(VarError::InvalidArgument(format!(
            "Diebold-Mariano needs aligned series of length at least {DM_MIN_LEN}, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if horizon == 0 {
        return Err(VarError::InvalidArgument(
            "forecast horizon must be at least 1".into(),
        ));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.abs() - y.abs()).collect();
    let n = d.len();
    let mean = d.iter().sum::<f64>() / n as f64;
    let gamma = |lag: usize| -> f64 {
        (lag..n)
            .map(|t| (d[t] - mean) * (d[t - lag] - mean))
            .sum::<f64>()
            / n as f64
    };
    let mut lrv = gamma(0);
    for lag in 1..horizon.min(n) {
        lrv += 2.0 * gamma(lag);
    }
    if !(lrv > 0.0) {
        return Ok(if mean == 0.0 {
            DieboldMariano {
                statistic: 0.0,
                p_value: 1.0,
                degenerate: true,
            }
        } else {
            DieboldMariano {
                statistic: mean.signum() * f64::INFINITY,
                p_value: 0.0,
                degenerate: true,
            }
        });
    }
    let stat = mean / (lrv / n as f64).sqrt();
    let normal = Normal::standard();
    Ok(DieboldMariano {
        statistic: stat,
        p_value: (2.0 * normal.cdf(-stat.abs())).min(1.0),
        degenerate: false,
    })
}

/// Ascending ranks starting at 1; tied values share their average rank.
pub fn rank_with_ties(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut s = 0;
    while s < idx.len() {
        let mut e = s;
        while e + 1 < idx.len() && values[idx[e + 1]] == values[idx[s]] {
            e += 1;
        }
        let avg = (s + e) as f64 / 2.0 + 1.0;
        for &i in &idx[s..=e] {
            ranks[i] = avg;
        }
        s = e + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KendallW {
    pub w: f64,
    pub chi_square: f64,
    pub p_value: f64,
}

/// Kendall's coefficient of concordance for `m` judges (rows) scoring `n`
/// items (columns). Scores are converted to ranks with ties averaged and the
/// tie-corrected denominator is used.
pub fn kendall_w(scores: &DMatrix<f64>) -> Result<KendallW> {
    let (m, n) = scores.shape();
    if m < 2 || n < 3 {
        return Err(VarError::InvalidArgument(format!(
            "Kendall's W needs at least 2 judges and 3 items, got {m} and {n}"
        )));
    }
    let mut rank_sums = vec![0.0; n];
    let mut tie_sum = 0.0;
    for r in 0..m {
        let row: Vec<f64> = scores.row(r).iter().copied().collect();
        let ranks = rank_with_ties(&row);
        for (c, v) in ranks.iter().enumerate() {
            rank_sums[c] += v;
        }
        let mut sorted = row.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mut s = 0;
        while s < n {
            let mut e = s;
            while e + 1 < n && sorted[e + 1] == sorted[s] {
                e += 1;
            }
            let t = (e - s + 1) as f64;
            tie_sum += t.powi(3) - t;
            s = e + 1;
        }
    }
    let (mf, nf) = (m as f64, n as f64);
    let mean = rank_sums.iter().sum::<f64>() / nf;
    let s: f64 = rank_sums.iter().map(|r| (r - mean).powi(2)).sum();
    let denom = mf * mf * (nf.powi(3) - nf) - mf * tie_sum;
    if !(denom > 0.0) {
        return Err(VarError::InvalidArgument(
            "Kendall's W is undefined: every judge ties all items".into(),
        ));
    }
    let w = 12.0 * s / denom;
    let chi = mf * (nf - 1.0) * w;
    let dist = ChiSquared::new(nf - 1.0).map_err(|e| VarError::Numerical(e.to_string()))?;
    Ok(KendallW {
        w,
        chi_square: chi,
        p_value: 1.0 - dist.cdf(chi),
    })
}

/// Mean and Monte Carlo standard error of per-run values.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Summary {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, se, n })
    }
}

/// Per-run metric values of one method.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub maee: Vec<f64>,
    pub tpr: Vec<f64>,
    pub tnr: Vec<f64>,
    pub mafe: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MethodRow {
    pub method: Method,
    pub maee: Option<Summary>,
    pub tpr: Option<Summary>,
    pub tnr: Option<Summary>,
    pub mafe: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Comparison {
    pub metric: String,
    pub test: String,
    pub a: Method,
    pub b: Method,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MetricReport {
    pub rows: Vec<MethodRow>,
    pub comparisons: Vec<Comparison>,
}

impl MetricReport {
    /// Summaries per method plus paired t-tests of `reference` against every
    /// other method on MAEE and MAFE.
    pub fn build(runs: &BTreeMap<Method, RunMetrics>, reference: Method) -> Result<Self> {
        let rows = runs
            .iter()
            .map(|(&method, r)| MethodRow {
                method,
                maee: Summary::of(&r.maee),
                tpr: Summary::of(&r.tpr),
                tnr: Summary::of(&r.tnr),
                mafe: Summary::of(&r.mafe),
            })
            .collect();
        let mut comparisons = Vec::new();
        if let Some(base) = runs.get(&reference) {
            for (&other, r) in runs {
                if other == reference {
                    continue;
                }
                for (metric, a, b) in [("maee", &base.maee, &r.maee), ("mafe", &base.mafe, &r.mafe)]
                {
                    if a.len() >= 2 && a.len() == b.len() {
                        let t = paired_t(a, b)?;
                        comparisons.push(Comparison {
                            metric: metric.into(),
                            test: "paired_t".into(),
                            a: reference,
                            b: other,
                            statistic: t.statistic,
                            p_value: t.p_value,
                        });
                    }
                }
            }
        }
        Ok(Self { rows, comparisons })
    }

    pub fn row(&self, method: Method) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "method", "maee", "maee_se", "tpr", "tpr_se", "tnr", "tnr_se", "mafe", "mafe_se",
            "runs",
        ])?;
        let cell = |s: &Option<Summary>| match s {
            Some(s) => [s.mean.to_string(), s.se.to_string()],
            None => [String::new(), String::new()],
        };
        for r in &self.rows {
            let n = [&r.maee, &r.tpr, &r.tnr, &r.mafe]
                .iter()
                .filter_map(|s| s.map(|s| s.n))
                .max()
                .unwrap_or(0);
            let mut rec = vec![r.method.name().to_string()];
            for s in [&r.maee, &r.tpr, &r.tnr, &r.mafe] {
                rec.extend(cell(s));
            }
            rec.push(n.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_comparisons_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "test", "a", "b", "statistic", "p_value"])?;
        for c in &self.comparisons {
            w.write_record([
                c.metric.clone(),
                c.test.clone(),
                c.a.name().to_string(),
                c.b.name().to_string(),
                c.statistic.to_string(),
                c.p_value.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fixed-width table: one row per method, columns MAEE, TPR, TNR, MAFE,
    /// standard errors in parentheses.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let fmt = |v: &Option<Summary>| match v {
            Some(v) => format!("{:.3} ({:.3})", v.mean, v.se),
            None => "-".to_string(),
        };
        let _ = writeln!(
            s,
            "{:<28}{:>16}{:>16}{:>16}{:>16}",
            "Method", "MAEE", "TPR", "TNR", "MAFE"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<28}{:>16}{:>16}{:>16}{:>16}",
                r.method.label(),
                fmt(&r.maee),
                fmt(&r.tpr),
                fmt(&r.tnr),
                fmt(&r.mafe)
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_ranks() {
        assert_eq!(
            rank_with_ties(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn summary_se() {
        let s = Summary::of(&[1.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.se - 1.0).abs() < 1e-15);
        assert!(Summary::of(&[]).is_none());
    }
}

//! Monte Carlo experiment runner: simulate, fit every method, score and report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::app::forecast;
use crate::benchmarks::MinnesotaHyper;
use crate::error::{Result, VarError};
use crate::estimator::{FitConfig, InformationCriterion, Selection};
use crate::eval::{self, Comparison, MetricReport, RunMetrics};
use crate::irf;
use crate::method::{Method, MethodConfig};
use crate::var_model::{self, ErrorModel, VarCoefficients, DEFAULT_BURN_IN};

#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Design {
    #[default]
    /// Ten series, two lags, two leader/follower blocks, `Σ = 0.1·I`.
    LeaderFollower,
    /// `q` independent AR(1) series with a common coefficient and variance.
    Diagonal {
        q: usize,
        coefficient: f64,
        variance: f64,
    },
}

impl Design {
    pub fn build(&self) -> Result<(VarCoefficients, ErrorModel)> {
        match self {
            Design::LeaderFollower => Ok(var_model::leader_follower_design()),
            Design::Diagonal {
                q,
                coefficient,
                variance,
            } => {
                if *q == 0 || !(*variance > 0.0) {
                    return Err(VarError::InvalidArgument(
                        "diagonal design needs q ≥ 1 and a positive variance".into(),
                    ));
                }
                let b = DMatrix::identity(*q, *q) * *coefficient;
                let sigma = DMatrix::identity(*q, *q) * *variance;
                Ok((
                    VarCoefficients::new(vec![b])?,
                    ErrorModel::from_sigma(sigma)?,
                ))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastSpec {
    /// Simulated series length `T`.
    pub length: usize,
    /// Rolling window `S`; targets are rows `S..T`.
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GirfSpec {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

fn default_horizon() -> usize {
    irf::DEFAULT_HORIZON
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorOptions {
    pub p_candidates: Vec<usize>,
    pub lambda1_grid_size: usize,
    pub lambda1_grid_ratio: f64,
    pub lambda2_grid_size: usize,
    pub lambda2_grid_ratio: f64,
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    pub reselect_iters: usize,
    pub criterion: InformationCriterion,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        let f = FitConfig::default();
        Self {
            p_candidates: f.p_candidates,
            lambda1_grid_size: f.lambda1_grid_size,
            lambda1_grid_ratio: f.lambda1_grid_ratio,
            lambda2_grid_size: f.lambda2_grid_size,
            lambda2_grid_ratio: f.lambda2_grid_ratio,
            outer_tol: f.outer_tol,
            outer_max_iter: f.outer_max_iter,
            reselect_iters: f.reselect_iters,
            criterion: f.criterion,
        }
    }
}

impl EstimatorOptions {
    pub fn to_fit_config(&self) -> FitConfig {
        FitConfig {
            p_candidates: self.p_candidates.clone(),
            lambda1_grid_size: self.lambda1_grid_size,
            lambda1_grid_ratio: self.lambda1_grid_ratio,
            lambda2_grid_size: self.lambda2_grid_size,
            lambda2_grid_ratio: self.lambda2_grid_ratio,
            outer_tol: self.outer_tol,
            outer_max_iter: self.outer_max_iter,
            reselect_iters: self.reselect_iters,
            criterion: self.criterion,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorOptions {
    pub minnesota_tightness: f64,
    pub minnesota_cross_weight: f64,
    pub niw_tightness: f64,
}

impl Default for PriorOptions {
    fn default() -> Self {
        let m = MinnesotaHyper::default();
        Self {
            minnesota_tightness: m.tightness,
            minnesota_cross_weight: m.cross_weight,
            niw_tightness: MethodConfig::default().niw_tightness,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub replicates: usize,
    #[serde(default)]
    pub design: Design,
    /// Length of each estimation series.
    pub length: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    pub methods: Vec<Method>,
    /// Fixed lag order; selected by the information criterion when absent.
    #[serde(default)]
    pub lags: Option<usize>,
    #[serde(default)]
    pub forecast: Option<ForecastSpec>,
    #[serde(default)]
    pub girf: Option<GirfSpec>,
    #[serde(default)]
    pub estimator: EstimatorOptions,
    #[serde(default)]
    pub priors: PriorOptions,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

impl ExperimentConfig {
    /// Parses JSON; schema errors name the offending path.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            VarError::Data(format!("config error at '{path}': {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| VarError::Data(format!("{}: cannot read config: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            VarError::Data(m) => VarError::Data(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(VarError::Data(format!("config error: {m}")));
        if self.replicates == 0 {
            return bad("'replicates' must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("'methods' must list at least one method".into());
        }
        if self.lags == Some(0) {
            return bad("'lags' must be positive".into());
        }
        if let Some(f) = &self.forecast {
            if f.window == 0 || f.window >= f.length {
                return bad(format!(
                    "'forecast.window' {} must lie in 1..{}",
                    f.window, f.length
                ));
            }
        }
        self.method_config()
            .fit
            .validate()
            .map_err(|e| VarError::Data(format!("config error in 'estimator': {e}")))?;
        self.design.build()?;
        Ok(())
    }

    pub fn method_config(&self) -> MethodConfig {
        MethodConfig {
            fit: self.estimator.to_fit_config(),
            minnesota: MinnesotaHyper {
                prior_mean: None,
                tightness: self.priors.minnesota_tightness,
                cross_weight: self.priors.minnesota_cross_weight,
            },
            niw_tightness: self.priors.niw_tightness,
        }
    }
}

/// Outcome of one method on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub selection: Option<Selection>,
    pub maee: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub mafe: Option<f64>,
    /// Mean absolute error across series per forecast target.
    pub target_errors: Vec<f64>,
    pub skipped_origins: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: MetricReport,
    /// `runs[r][m]` for replicate `r` and the `m`-th configured method.
    pub runs: Vec<Vec<MethodRun>>,
    pub methods: Vec<Method>,
}

impl ExperimentOutput {
    pub fn method_runs(&self, method: Method) -> Vec<&MethodRun> {
        match self.methods.iter().position(|m| *m == method) {
            Some(i) => self.runs.iter().map(|r| &r[i]).collect(),
            None => Vec::new(),
        }
    }
}

/// Zero-pads coefficients to `p` lags.
pub fn pad_lags(c: &VarCoefficients, p: usize) -> VarCoefficients {
    if c.p() >= p {
        return c.clone();
    }
    let mut lags = c.lags().to_vec();
    lags.resize(p, DMatrix::zeros(c.q(), c.q()));
    VarCoefficients::new(lags).expect("padded lags share the shape")
}

fn run_method(
    cfg: &ExperimentConfig,
    mcfg: &MethodConfig,
    method: Method,
    truth: &VarCoefficients,
    est: &crate::var_model::TimeSeriesPanel,
    fc: Option<&crate::var_model::TimeSeriesPanel>,
) -> MethodRun {
    let mut run = MethodRun {
        selection: None,
        maee: None,
        tpr: None,
        tnr: None,
        mafe: None,
        target_errors: Vec::new(),
        skipped_origins: 0,
        error: None,
    };
    match method.fit(est, cfg.lags, mcfg) {
        Ok(fit) => {
            let p = fit.p().max(truth.p());
            let (e, t) = (pad_lags(&fit.coefficients, p), pad_lags(truth, p));
            run.selection = Some(fit.selected);
            run.maee = eval::maee(std::slice::from_ref(&e), &t).ok();
            run.tpr = eval::tpr(&e, &t).ok();
            run.tnr = eval::tnr(&e, &t).ok();
        }
        Err(e) => run.error = Some(format!("fit: {e}")),
    }
    if let (Some(spec), Some(fc)) = (&cfg.forecast, fc) {
        match forecast::rolling_forecast(fc, method, cfg.lags, mcfg, spec.window, spec.length) {
            Ok(rf) => {
                run.skipped_origins = rf.skipped.len();
                if !rf.is_empty() {
                    run.mafe = eval::mafe(&rf.forecasts, &rf.actuals).ok();
                    run.target_errors = rf.per_target_mae();
                }
            }
            Err(e) => {
                let msg = format!("forecast: {e}");
                run.error = Some(match run.error.take() {
                    Some(prev) => format!("{prev}; {msg}"),
                    None => msg,
                });
            }
        }
    }
    run
}

/// Runs the experiment; writes artifacts when `out_dir` is given.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let (truth, err) = cfg.design.build()?;
    let mcfg = cfg.method_config();

    let runs: Vec<Vec<MethodRun>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<MethodRun>> {
            let est = var_model::simulate_var_stream(
                &truth,
                &err,
                cfg.length,
                cfg.seed,
                2 * r as u64,
                cfg.burn_in,
            )?;
            let fc = match &cfg.forecast {
                Some(f) => Some(var_model::simulate_var_stream(
                    &truth,
                    &err,
                    f.length,
                    cfg.seed,
                    2 * r as u64 + 1,
                    cfg.burn_in,
                )?),
                None => None,
            };
            Ok(cfg
                .methods
                .iter()
                .map(|&m| run_method(cfg, &mcfg, m, &truth, &est, fc.as_ref()))
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut per_method: BTreeMap<Method, RunMetrics> = BTreeMap::new();
    for (i, &m) in cfg.methods.iter().enumerate() {
        let mut rm = RunMetrics::default();
        for rep in &runs {
            let run = &rep[i];
            rm.maee.extend(run.maee);
            rm.tpr.extend(run.tpr);
            rm.tnr.extend(run.tnr);
            rm.mafe.extend(run.mafe);
        }
        per_method.insert(m, rm);
    }
    let reference = if cfg.methods.contains(&Method::Sparse) {
        Method::Sparse
    } else {
        cfg.methods[0]
    };
    let mut report = MetricReport::build(&per_method, reference)?;
    report
        .comparisons
        .extend(diebold_mariano_comparisons(cfg, &runs, reference)?);

    let output = ExperimentOutput {
        report,
        runs,
        methods: cfg.methods.clone(),
    };
    if let Some(dir) = out_dir.or(cfg.output_dir.as_deref()) {
        write_artifacts(cfg, &mcfg, &output, dir)?;
    }
    Ok(output)
}

/// DM tests of the reference against every other method on per-target
/// errors pooled across replicates (replicate-major order).
fn diebold_mariano_comparisons(
    cfg: &ExperimentConfig,
    runs: &[Vec<MethodRun>],
    reference: Method,
) -> Result<Vec<Comparison>> {
    let mut out = Vec::new();
    let Some(ri) = cfg.methods.iter().position(|m| *m == reference) else {
        return Ok(out);
    };
    for (i, &m) in cfg.methods.iter().enumerate() {
        if i == ri {
            continue;
        }
        let (mut a, mut b) = (Vec::new(), Vec::new());
        let mut aligned = true;
        for rep in runs {
            if rep[ri].target_errors.len() != rep[i].target_errors.len() {
                aligned = false;
                break;
            }
            a.extend(&rep[ri].target_errors);
            b.extend(&rep[i].target_errors);
        }
        if aligned && a.len() >= eval::DM_MIN_LEN {
            let dm = eval::diebold_mariano(&a, &b, 1)?;
            out.push(Comparison {
                metric: "mafe".into(),
                test: "diebold_mariano".into(),
                a: reference,
                b: m,
                statistic: dm.statistic,
                p_value: dm.p_value,
            });
        }
    }
    Ok(out)
}

#[derive(serde::Serialize)]
struct MethodSummary {
    method: Method,
    replicates: usize,
    failures: usize,
    skipped_origins: usize,
    mean_p: Option<f64>,
    mean_lambda1: Option<f64>,
    mean_lambda2: Option<f64>,
    errors: Vec<String>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_artifacts(
    cfg: &ExperimentConfig,
    mcfg: &MethodConfig,
    out: &ExperimentOutput,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    out.report
        .write_csv(fs::File::create(dir.join("metrics.csv"))?)?;
    out.report
        .write_comparisons_csv(fs::File::create(dir.join("comparisons.csv"))?)?;
    fs::write(dir.join("table.txt"), out.report.to_table())?;

    let mut w = csv::Writer::from_path(dir.join("runs.csv"))?;
    w.write_record([
        "replicate",
        "method",
        "p",
        "lambda1",
        "lambda2",
        "maee",
        "tpr",
        "tnr",
        "mafe",
        "skipped_origins",
        "error",
    ])?;
    for (r, rep) in out.runs.iter().enumerate() {
        for (run, m) in rep.iter().zip(&out.methods) {
            let sel = run.selection;
            w.write_record([
                r.to_string(),
                m.name().to_string(),
                sel.map(|s| s.p.to_string()).unwrap_or_default(),
                opt(sel.map(|s| s.lambda1)),
                opt(sel.map(|s| s.lambda2)),
                opt(run.maee),
                opt(run.tpr),
                opt(run.tnr),
                opt(run.mafe),
                run.skipped_origins.to_string(),
                run.error.clone().unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;

    for (i, &m) in out.methods.iter().enumerate() {
        let runs: Vec<&MethodRun> = out.runs.iter().map(|r| &r[i]).collect();
        let sels: Vec<Selection> = runs.iter().filter_map(|r| r.selection).collect();
        let summary = MethodSummary {
            method: m,
            replicates: runs.len(),
            failures: runs.iter().filter(|r| r.error.is_some()).count(),
            skipped_origins: runs.iter().map(|r| r.skipped_origins).sum(),
            mean_p: mean(&sels.iter().map(|s| s.p as f64).collect::<Vec<_>>()),
            mean_lambda1: mean(&sels.iter().map(|s| s.lambda1).collect::<Vec<_>>()),
            mean_lambda2: mean(&sels.iter().map(|s| s.lambda2).collect::<Vec<_>>()),
            errors: runs.iter().filter_map(|r| r.error.clone()).collect(),
        };
        fs::write(
            dir.join(format!("summary_{}.json", m.name())),
            serde_json::to_string_pretty(&summary)? + "\n",
        )?;
    }

    if let Some(g) = &cfg.girf {
        let (truth, err) = cfg.design.build()?;
        let panel =
            var_model::simulate_var_stream(&truth, &err, cfg.length, cfg.seed, 0, cfg.burn_in)?;
        for &m in &out.methods {
            let path = dir.join(format!("girf_{}.csv", m.name()));
            match m
                .fit(&panel, cfg.lags, mcfg)
                .and_then(|fit| irf::girf(&fit, g.horizon))
            {
                Ok(res) => res.write_csv(panel.names(), fs::File::create(path)?)?,
                Err(e) => fs::write(path.with_extension("err"), format!("{e}\n"))?,
            }
        }
    }
    Ok(())
}

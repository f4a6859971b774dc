use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;

use sparsevar::app::experiment::{self, Design, ExperimentConfig};
use sparsevar::app::forecast;
use sparsevar::app::ingest::{self, Channel, PanelSource};
use sparsevar::app::transform::{self, Rule, TransformPlan};
use sparsevar::app::{network, stores};
use sparsevar::eval;
use sparsevar::irf::{self, BootstrapSettings};
use sparsevar::var_model;
use sparsevar::{FitResult, Method, MethodConfig, Result, VarError};

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "SPARSEVAR_THREADS";

#[derive(Parser)]
#[command(
    name = "sparsevar",
    version,
    about = "Sparse VAR estimation, impulse responses and forecast evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel from a known VAR design.
    Simulate {
        /// Experiment config whose design, length and burn-in are used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit one method to a panel CSV.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "sparse")]
        method: Method,
        /// Lag order; selected by BIC when absent.
        #[arg(long)]
        lags: Option<usize>,
        /// Output directory for coefficients, precision and summary.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generalized impulse responses with optional bootstrap bands.
    Irf {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "sparse")]
        method: Method,
        #[arg(long)]
        lags: Option<usize>,
        #[arg(long, default_value_t = irf::DEFAULT_HORIZON)]
        horizon: usize,
        /// Bootstrap replicates (0 disables bands).
        #[arg(long, default_value_t = 0)]
        boot: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write effect sizes to this CSV.
        #[arg(long)]
        effects: Option<PathBuf>,
        /// Include the impact response in effect sizes.
        #[arg(long)]
        include_impact: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rolling-window one-step-ahead forecasts.
    Forecast {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "sparse")]
        method: Method,
        #[arg(long)]
        lags: Option<usize>,
        /// Rolling window length S.
        #[arg(long)]
        window: usize,
        /// Forecast targets run up to this row count T (panel length when absent).
        #[arg(long)]
        end: Option<usize>,
        /// Treat the file as a store CSV and report level-space errors on sales.
        #[arg(long)]
        store: bool,
        /// Transform applied to every column of a plain panel.
        #[arg(long, default_value = "none")]
        transform: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Majority-vote cross-category networks from store CSVs.
    Network {
        #[arg(long, num_args = 1.., required = true)]
        data: Vec<PathBuf>,
        #[arg(long, default_value = "sparse")]
        method: Method,
        #[arg(long)]
        lags: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo experiment from a JSON config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn is_broken_pipe(e: &VarError) -> bool {
    let kind = match e {
        VarError::Io(io) => Some(io.kind()),
        VarError::Csv(c) => match c.kind() {
            csv::ErrorKind::Io(io) => Some(io.kind()),
            _ => None,
        },
        _ => None,
    };
    kind == Some(io::ErrorKind::BrokenPipe)
}

fn emit(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        VarError::InvalidArgument(format!(
            "{THREADS_ENV} must be a positive integer, got '{v}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| VarError::Numerical(format!("thread pool: {e}")))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Box::new(fs::File::create(p)?)
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cmd: Command) -> Result<()> {
    let mcfg = MethodConfig::default();
    match cmd {
        Command::Simulate {
            config,
            length,
            seed,
            out,
        } => {
            let (design, length, burn_in) = match config {
                Some(p) => {
                    let c = ExperimentConfig::from_path(&p)?;
                    (c.design, c.length, c.burn_in)
                }
                None => (Design::LeaderFollower, length, var_model::DEFAULT_BURN_IN),
            };
            let (spec, err) = design.build()?;
            let panel = var_model::simulate_var(&spec, &err, length, seed, burn_in)?;
            ingest::write_panel(&panel, output(out.as_deref())?)
        }
        Command::Fit {
            data,
            method,
            lags,
            out,
        } => {
            let panel = ingest::read_panel_csv(&data)?;
            let fit = method.fit(&panel, lags, &mcfg)?;
            match out {
                Some(dir) => write_fit(&fit, panel.names(), &dir),
                None => emit(&(fit_summary(&fit)? + "\n")),
            }
        }
        Command::Irf {
            data,
            method,
            lags,
            horizon,
            boot,
            seed,
            effects,
            include_impact,
            out,
        } => {
            let panel = ingest::read_panel_csv(&data)?;
            let fit = method.fit(&panel, lags, &mcfg)?;
            let res = if boot > 0 {
                let settings = BootstrapSettings {
                    n_boot: boot,
                    horizon,
                    seed,
                    level: 0.9,
                };
                irf::bootstrap_bands(&fit, &panel, &mcfg, &settings)?
            } else {
                irf::girf(&fit, horizon)?
            };
            if let Some(w) = &res.warning {
                eprintln!("warning: {w}");
            }
            if let Some(path) = effects {
                let mut w = csv::Writer::from_writer(output(Some(&path))?);
                w.write_record(["impulse", "response", "effect"])?;
                let names = panel.names();
                for j in 0..res.q() {
                    for i in 0..res.q() {
                        let e = irf::effect_size(&res, j, i, include_impact)?;
                        w.write_record([names[j].as_str(), names[i].as_str(), &e.to_string()])?;
                    }
                }
                w.flush()?;
            }
            res.write_csv(panel.names(), output(out.as_deref())?)
        }
        Command::Forecast {
            data,
            method,
            lags,
            window,
            end,
            store,
            transform: rule,
            out,
        } => {
            let (levels, plan, sales_cols) = if store {
                let sp = ingest::read_store_csv(&data, "store")?;
                let plan = TransformPlan::default_for(&sp.layout);
                let cols: Vec<usize> = (0..sp.layout.len())
                    .filter(|&c| sp.layout.columns()[c].1 == Channel::Sales)
                    .collect();
                (sp.panel, plan, cols)
            } else {
                let panel = ingest::read_panel_csv(&data)?;
                let rule: Rule = rule.parse()?;
                let q = panel.q();
                (panel, TransformPlan::uniform(rule, q), (0..q).collect())
            };
            let identity = plan.rules().iter().all(|r| *r == Rule::None);
            let work = if identity {
                levels.clone()
            } else {
                transform::transform(&levels, &plan)?
            };
            let end = end.unwrap_or(work.len());
            let rf = forecast::rolling_forecast(&work, method, lags, &mcfg, window, end)?;
            let rf = if identity {
                rf
            } else {
                forecast::to_levels(&rf, &levels, &plan)?
            };
            for (t, e) in &rf.skipped {
                eprintln!("warning: target row {t} skipped: {e}");
            }
            let (f, a) = rf.columns(&sales_cols);
            let mafe = if rf.is_empty() {
                None
            } else {
                Some(eval::mafe(&f, &a)?)
            };
            let summary = serde_json::json!({
                "method": method.name(),
                "window": window,
                "end": end,
                "targets": rf.len(),
                "skipped": rf.skipped.len(),
                "mafe": mafe,
            });
            emit(&(serde_json::to_string_pretty(&summary)? + "\n"))?;
            if let Some(path) = out {
                let names = levels.names();
                let mut w = csv::Writer::from_writer(output(Some(&path))?);
                w.write_record(["target", "series", "forecast", "actual"])?;
                for (r, t) in rf.targets.iter().enumerate() {
                    for &c in &sales_cols {
                        w.write_record([
                            t.to_string(),
                            names[c].clone(),
                            rf.forecasts[(r, c)].to_string(),
                            rf.actuals[(r, c)].to_string(),
                        ])?;
                    }
                }
                w.flush()?;
            }
            Ok(())
        }
        Command::Network {
            data,
            method,
            lags,
            out,
        } => run_network(&data, method, lags, &mcfg, &out),
        Command::Bench { config, seed, out } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out.or_else(|| cfg.output_dir.clone());
            let res = experiment::run_experiment(&cfg, dir.as_deref())?;
            emit(&res.report.to_table())
        }
    }
}

fn fit_summary(fit: &FitResult) -> Result<String> {
    let v = serde_json::json!({
        "method": fit.method.name(),
        "p": fit.selected.p,
        "lambda1": fit.selected.lambda1,
        "lambda2": fit.selected.lambda2,
        "bic": fit.bic,
        "converged": fit.converged,
        "n_obs": fit.n_obs,
        "nonzero_coefficients": fit.coefficients.nonzero_count(),
    });
    Ok(serde_json::to_string_pretty(&v)?)
}

fn write_matrix(path: &Path, names: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![String::new()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (r, name) in names.iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(m.row(r).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_fit(fit: &FitResult, names: &[String], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("coefficients.csv"))?;
    w.write_record(["lag", "equation", "predictor", "value"])?;
    for (j, b) in fit.coefficients.lags().iter().enumerate() {
        for i in 0..fit.q() {
            for k in 0..fit.q() {
                w.write_record([
                    (j + 1).to_string(),
                    names[i].clone(),
                    names[k].clone(),
                    b[(i, k)].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    write_matrix(&dir.join("precision.csv"), names, fit.error.omega())?;
    write_matrix(&dir.join("covariance.csv"), names, fit.error.sigma())?;
    fs::write(dir.join("summary.json"), fit_summary(fit)? + "\n")?;
    Ok(())
}

fn run_network(
    data: &[PathBuf],
    method: Method,
    lags: Option<usize>,
    mcfg: &MethodConfig,
    out: &Path,
) -> Result<()> {
    let stores = ingest::ingest(&PanelSource::from_paths(data))?;
    let (layout, fits) = stores::fit_stores(&stores, method, lags, mcfg)?;
    fs::create_dir_all(out)?;
    let mut conc = csv::Writer::from_path(out.join("concordance.csv"))?;
    conc.write_record(["channel", "measure", "w", "chi_square", "p_value"])?;
    for ch in Channel::ALL {
        let net = network::extract_network(&fits, &layout, ch)?;
        net.write_csv(fs::File::create(out.join(format!("edges_{ch}.csv")))?)?;
        fs::write(out.join(format!("network_{ch}.dot")), net.to_dot())?;
        fs::write(out.join(format!("network_{ch}.graphml")), net.to_graphml())?;
        let mut w = csv::Writer::from_path(out.join(format!("degrees_{ch}.csv")))?;
        w.write_record(["category", "influence", "responsiveness"])?;
        for (c, d) in net.degrees() {
            w.write_record([c, d.influence.to_string(), d.responsiveness.to_string()])?;
        }
        w.flush()?;
        for (measure, outgoing) in [("influence", true), ("responsiveness", false)] {
            match network::degree_concordance(&fits, &layout, ch, outgoing) {
                Ok(k) => conc.write_record([
                    ch.name().to_string(),
                    measure.to_string(),
                    k.w.to_string(),
                    k.chi_square.to_string(),
                    k.p_value.to_string(),
                ])?,
                Err(_) => conc.write_record([ch.name(), measure, "", "", ""])?,
            }
        }
    }
    conc.flush()?;
    let mut w = csv::Writer::from_path(out.join("prevalence.csv"))?;
    w.write_record(["channel", "within", "cross"])?;
    for p in network::prevalence(&fits, &layout)? {
        w.write_record([
            p.channel.name().to_string(),
            p.within.to_string(),
            p.cross.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

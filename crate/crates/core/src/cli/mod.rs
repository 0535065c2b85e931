//! `diagtomo` command-line front end.

pub mod validate;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimator::{
    exact_observations, fit_thermal, fit_with_heating, minimize, rmse_sweep, systematic_bias,
    zero_noise_extrapolate, EstimationReport, FitProblem, Observation, ReportMetadata, SweepOptions,
};
use crate::fsio::{fixed_sig, write_atomic};
use crate::sampler::{chi_values, generate_dataset, read_dataset, write_dataset, Basis, ChiSource};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "diagtomo", version, about = "Diagram-coefficient tomography of squeezed oscillator states")]
pub struct Cli {
    /// Run configuration (TOML); defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `rng.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `output.directory`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Caps the worker thread count.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate χ over the configured grid.
    Charfunc,
    /// Generate a shot dataset.
    Simulate,
    /// Fit the configured model to a dataset.
    Estimate { dataset: PathBuf },
    /// rMSE surface over (ξ_max, r_max).
    Sweep,
    /// Zero-noise extrapolation of report sidecars (`*.toml`) fitted at different n_B.
    Extrapolate {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Run the invariant checks, optionally validating a dataset as well.
    Validate {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::Csv { source, .. } if source.is_io_error() => EXIT_IO,
        Error::NotConverged { .. }
        | Error::RankDeficient { .. }
        | Error::TraceDrift { .. }
        | Error::InvalidStep { .. } => EXIT_VALIDATION,
        _ => EXIT_INPUT,
    }
}

pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.rng.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output.directory = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses nothing; runs an already parsed command and returns the exit code.
pub fn run(cli: Cli) -> i32 {
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return EXIT_INPUT;
        }
        // a second build in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::NotConverged { best, .. } = &e {
                eprintln!("best iterate: {:?}", best.params);
            }
            exit_code(&e)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let cfg = load_config(cli)?;
    let dir = cfg.output.directory.clone();
    cfg.write_resolved(&dir.join("config.resolved.toml"))?;
    match &cli.command {
        Command::Charfunc => charfunc(&cfg, &dir),
        Command::Simulate => simulate(&cfg, &dir),
        Command::Estimate { dataset } => estimate(&cfg, dataset, &dir),
        Command::Sweep => sweep(&cfg, &dir),
        Command::Extrapolate { reports } => extrapolate(&cfg, reports, &dir),
        Command::Validate { dataset } => validate_cmd(&cfg, dataset.as_deref(), &dir),
    }
}

fn charfunc(cfg: &RunConfig, dir: &Path) -> Result<i32> {
    let grid = cfg.points()?;
    let chi = chi_values(
        &grid,
        &ChiSource::Analytic {
            order: cfg.model.n,
            cutoff: cfg.protocol.cutoff,
        },
    )?;
    let mut out = String::from("re_xi,im_xi,r,re_chi,im_chi\n");
    for (p, c) in grid.iter().zip(&chi) {
        let f = |x: f64| fixed_sig(x, 12);
        out.push_str(&format!("{},{},{},{},{}\n", f(p.xi.re), f(p.xi.im), f(p.r), f(c.re), f(c.im)));
    }
    let path = dir.join("charfunc.csv");
    write_atomic(&path, out.as_bytes())?;
    println!("wrote {} ({} points)", path.display(), grid.len());
    Ok(EXIT_OK)
}

fn simulate(cfg: &RunConfig, dir: &Path) -> Result<i32> {
    let grid = cfg.points()?;
    let records = generate_dataset(&grid, &cfg.shot_policy(), &cfg.chi_source(), cfg.rng.seed)?;
    let path = dir.join("dataset.csv");
    write_dataset(&path, &records)?;
    let meta = toml::toml! {
        points = (grid.len() as i64)
        records = (records.len() as i64)
        total_shots = (records.iter().map(|r| r.shots).sum::<u64>() as i64)
        seed = (cfg.rng.seed.to_string())
    };
    let meta = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(&dir.join("dataset.toml"), meta.as_bytes())?;
    println!("wrote {} ({} records)", path.display(), records.len());
    Ok(EXIT_OK)
}

/// Linearized systematic bias of `spec` on the dataset's design, against the
/// exact characteristic function; `None` when it cannot be formed.
fn design_bias(cfg: &RunConfig, report: &EstimationReport, obs: &[Observation]) -> Option<Vec<f64>> {
    if report.model.heating {
        return None;
    }
    let mut grid = Vec::new();
    let mut shots = Vec::new();
    for o in obs {
        if o.basis == Basis::X {
            grid.push(o.point);
        }
        shots.push(o.shots.round() as u64);
    }
    let chi = chi_values(
        &grid,
        &ChiSource::Analytic {
            order: report.model.order,
            cutoff: cfg.protocol.cutoff,
        },
    )
    .ok()?;
    let exact = exact_observations(&grid, &chi, report.model.order, &shots).ok()?;
    let truth = report.model.truth_params().ok()?;
    systematic_bias(&report.model, &truth, &exact).ok()
}

fn estimate(cfg: &RunConfig, dataset: &Path, dir: &Path) -> Result<i32> {
    let records = read_dataset(dataset)?;
    let obs = Observation::from_records(&records);
    let spec = cfg.model_spec()?;
    let report = if spec.heating {
        fit_with_heating(obs.clone(), spec.n_b, cfg.model.cost)
    } else if spec.n_b > 0.0 {
        fit_thermal(obs.clone(), spec.n_b, cfg.model.cost)
    } else {
        minimize(&FitProblem::new(spec, obs.clone(), cfg.model.cost))
    };
    let (report, code) = match report {
        Ok(r) => (r, EXIT_OK),
        Err(Error::NotConverged { best, iterations, gradient_norm }) => {
            eprintln!("warning: not converged after {iterations} iterations (gradient {gradient_norm:.3e}); writing best iterate");
            (*best, EXIT_VALIDATION)
        }
        Err(e) => return Err(e),
    };
    let report = match design_bias(cfg, &report, &obs) {
        Some(b) => report.with_bias(b)?,
        None => report,
    };
    write_report(&report, cfg.rng.seed, dir, "report")?;
    for row in report.rows() {
        println!("{:>4} {:+.6} {:+.6}i  std {:.2e}", row.name, row.re, row.im, row.std);
    }
    Ok(code)
}

fn write_report(report: &EstimationReport, seed: u64, dir: &Path, stem: &str) -> Result<()> {
    report.write_csv(&dir.join(format!("{stem}.csv")))?;
    report.metadata(Some(seed)).write(&dir.join(format!("{stem}.toml")))
}

fn sweep(cfg: &RunConfig, dir: &Path) -> Result<i32> {
    let [_, _, d_xi, d_r] = cfg.grid.lattice();
    let result = rmse_sweep(&SweepOptions {
        model: cfg.model_spec()?,
        xi_max: cfg.sweep.xi_max.clone(),
        r_max: cfg.sweep.r_max.clone(),
        d_xi,
        d_r,
        total_shots: cfg.shots.total,
        cost: cfg.model.cost,
        systematic: cfg.sweep.systematic,
    })?;
    let path = dir.join("sweep.csv");
    write_atomic(&path, &result.to_csv()?)?;
    if let Some(best) = result.best() {
        println!("minimum rMSE {:.4} at ξ_max = {}, r_max = {}", best.rmse, best.xi_max, best.r_max);
    }
    Ok(EXIT_OK)
}

fn extrapolate(cfg: &RunConfig, reports: &[PathBuf], dir: &Path) -> Result<i32> {
    let mut loaded = Vec::with_capacity(reports.len());
    for p in reports {
        let meta_path = if p.extension().is_some_and(|e| e == "csv") {
            p.with_extension("toml")
        } else {
            p.clone()
        };
        let meta = ReportMetadata::load(&meta_path)?;
        let rep = EstimationReport::from_metadata(&meta)?;
        let n_b = rep.data_n_b.ok_or_else(|| {
            Error::InvalidInput(format!("{}: data n_B is not uniform", meta_path.display()))
        })?;
        loaded.push((n_b, rep));
    }
    let pairs: Vec<(f64, &EstimationReport)> = loaded.iter().map(|(n, r)| (*n, r)).collect();
    let out = zero_noise_extrapolate(&pairs, cfg.extrapolate.degree)?;
    write_report(&out, cfg.rng.seed, dir, "extrapolated")?;
    println!("wrote {}", dir.join("extrapolated.csv").display());
    Ok(EXIT_OK)
}

fn validate_cmd(cfg: &RunConfig, dataset: Option<&Path>, dir: &Path) -> Result<i32> {
    if let Some(p) = dataset {
        let recs = read_dataset(p)?;
        println!("dataset {}: {} records ok", p.display(), recs.len());
    }
    let outcomes = validate::run_checks(cfg);
    let mut csv = String::from("check,passed,seconds,detail\n");
    for o in &outcomes {
        println!("{} {:<22} {:>7.2}s  {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.seconds, o.detail);
        csv.push_str(&format!("{},{},{:.3},\"{}\"\n", o.name, o.passed, o.seconds, o.detail.replace('"', "'")));
    }
    write_atomic(&dir.join("validate.csv"), csv.as_bytes())?;
    Ok(if outcomes.iter().all(|o| o.passed) { EXIT_OK } else { EXIT_VALIDATION })
}

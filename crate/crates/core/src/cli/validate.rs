//! Named invariant checks behind `diagtomo validate`.

use std::f64::consts::TAU;
use std::time::Instant;

use num_complex::Complex64;

use crate::charfunc::{chi_squeezed_exact, ChiEvaluator, SqueezeSpec};
use crate::config::RunConfig;
use crate::diagrams::series_residual;
use crate::error::{Error, Result};
use crate::estimator::{build_grid, covariance, fisher_information, minimize, CostKind, FitProblem, ModelSpec, Observation};
use crate::fockspace::{displacement, generalized_squeeze, thermal_state, StateVector, TAIL_TOLERANCE};
use crate::sampler::{chi_values, sample_dataset, simulate_protocol_grid, ChiSource, MeasurementPoint, ShotPolicy};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Check = fn(&RunConfig) -> Result<(bool, String)>;

const CHECKS: [(&str, Check); 10] = [
    ("truncation", truncation),
    ("unitarity", unitarity),
    ("state_validity", state_validity),
    ("chi_hermiticity", chi_hermiticity),
    ("selection_rule", selection_rule),
    ("n3_parity", n3_parity),
    ("series_n2", series_n2),
    ("series_n3", series_n3),
    ("protocol_vs_analytic", protocol_vs_analytic),
    ("fisher_vs_monte_carlo", fisher_vs_monte_carlo),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.0).collect()
}

/// Runs every check; an error inside a check counts as its failure.
pub fn run_checks(cfg: &RunConfig) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|(name, f)| {
            let t = Instant::now();
            let (passed, detail) = f(cfg).unwrap_or_else(|e| (false, e.to_string()));
            CheckOutcome {
                name,
                passed,
                detail,
                seconds: t.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn extent(cfg: &RunConfig) -> Result<(f64, f64)> {
    let pts = cfg.points()?;
    let xi = pts.iter().map(|p| p.xi.norm()).fold(0.0, f64::max);
    let r = pts.iter().map(|p| p.r).fold(0.0, f64::max);
    Ok((xi, r))
}

fn verdict(value: f64, bound: f64, what: &str) -> (bool, String) {
    (value <= bound, format!("{what} = {value:.3e} (bound {bound:.1e})"))
}

/// The configured cutoff holds the squeezed state and the largest displacement.
fn truncation(cfg: &RunConfig) -> Result<(bool, String)> {
    let (xi_max, r_max) = extent(cfg)?;
    let d = cfg.protocol.cutoff;
    let rho = thermal_state(cfg.model.n_b, d)?;
    let spec = SqueezeSpec::new(cfg.model.n, r_max, cfg.grid.theta)?;
    let ev = ChiEvaluator::new(&rho, &spec)?;
    let tail = ev.state().tail_population();
    let disp = displacement(Complex64::new(xi_max, 0.0), d)?;
    let mut notes = vec![format!("squeezed-state tail {tail:.3e} at cutoff {d}")];
    if let Some(w) = disp.warning {
        notes.push(format!("|ξ_max|² = {:.3} exceeds cutoff/10 (cutoff {})", xi_max * xi_max, w.cutoff));
    }
    Ok((tail <= TAIL_TOLERANCE && disp.warning.is_none(), notes.join("; ")))
}

fn unitarity(cfg: &RunConfig) -> Result<(bool, String)> {
    let (xi_max, r_max) = extent(cfg)?;
    let d = cfg.protocol.cutoff;
    let e_d = displacement(Complex64::from_polar(xi_max, 0.7), d)?.value.unitarity_error();
    let zeta = Complex64::from_polar(r_max.min(1.0), cfg.grid.theta);
    let e_s = generalized_squeeze(cfg.model.n, zeta, d)?.value.unitarity_error();
    Ok(verdict(e_d.max(e_s), 1e-10, "max ‖U†U − 1‖"))
}

fn state_validity(cfg: &RunConfig) -> Result<(bool, String)> {
    let (_, r_max) = extent(cfg)?;
    let rho = thermal_state(cfg.model.n_b, cfg.protocol.cutoff)?;
    let ev = ChiEvaluator::new(&rho, &SqueezeSpec::new(cfg.model.n, r_max, cfg.grid.theta)?)?;
    ev.state().validate()?;
    let tr = (ev.state().trace() - 1.0).norm();
    Ok(verdict(tr, 1e-10, "|Tr ρ − 1|"))
}

fn sample_xis() -> Vec<Complex64> {
    (0..24)
        .map(|k| Complex64::from_polar(0.1 + 0.08 * k as f64, 0.37 * k as f64))
        .collect()
}

/// `χ(−ξ) = χ(ξ)*` and `|χ| ≤ 1` for the configured order.
fn chi_hermiticity(cfg: &RunConfig) -> Result<(bool, String)> {
    let (_, r_max) = extent(cfg)?;
    let rho = thermal_state(cfg.model.n_b, cfg.protocol.cutoff)?;
    let ev = ChiEvaluator::new(&rho, &SqueezeSpec::new(cfg.model.n, r_max, cfg.grid.theta)?)?;
    let (mut herm, mut over) = (0.0f64, 0.0f64);
    for xi in sample_xis() {
        let a = ev.evaluate(xi)?.value;
        let b = ev.evaluate(-xi)?.value;
        herm = herm.max((b - a.conj()).norm());
        over = over.max(a.norm() - 1.0);
    }
    Ok((
        herm <= 1e-10 && over <= 1e-10,
        format!("max |χ(−ξ) − χ(ξ)*| = {herm:.3e}, max |χ| − 1 = {over:.3e}"),
    ))
}

/// `S_n|0⟩` only populates Fock levels that are multiples of n.
fn selection_rule(cfg: &RunConfig) -> Result<(bool, String)> {
    let d = cfg.protocol.cutoff;
    let mut worst = 0.0f64;
    for n in [2, 3] {
        let s = generalized_squeeze(n, Complex64::from_polar(0.5, 0.3), d)?.value;
        let psi = s.apply(&StateVector::vacuum(d)?)?;
        let stray: f64 = psi
            .populations()
            .iter()
            .enumerate()
            .filter(|(k, _)| k % n != 0)
            .map(|(_, p)| p)
            .sum();
        worst = worst.max(stray);
    }
    Ok(verdict(worst, 1e-12, "population off the n-bundles"))
}

/// For n = 3 at θ = 0: `χ(ωξ) = χ(ξ)` with `ω = e^{2πi/3}` and Im χ odd.
fn n3_parity(cfg: &RunConfig) -> Result<(bool, String)> {
    let rho = thermal_state(0.0, cfg.protocol.cutoff)?;
    let ev = ChiEvaluator::new(&rho, &SqueezeSpec::new(3, 0.25, 0.0)?)?;
    let w = Complex64::from_polar(1.0, TAU / 3.0);
    let (mut rot, mut odd) = (0.0f64, 0.0f64);
    for xi in sample_xis() {
        let a = ev.evaluate(xi)?.value;
        rot = rot.max((ev.evaluate(w * xi)?.value - a).norm());
        odd = odd.max((ev.evaluate(-xi)?.value.im + a.im).abs());
    }
    Ok((
        rot <= 1e-10 && odd <= 1e-10,
        format!("threefold symmetry error {rot:.3e}, Im χ oddness error {odd:.3e}"),
    ))
}

fn series_disk() -> Vec<Complex64> {
    let mut out = Vec::new();
    for i in -6..=6 {
        for j in -6..=6 {
            let xi = Complex64::new(0.05 * i as f64, 0.05 * j as f64);
            if xi.norm() <= 0.3 + 1e-12 {
                out.push(xi);
            }
        }
    }
    out
}

fn series(order: usize, bound: f64) -> Result<(bool, String)> {
    let disk = series_disk();
    let mut worst = 0.0f64;
    for k in 1..=5 {
        worst = worst.max(series_residual(order, 0.01 * k as f64, &disk)?);
    }
    Ok(verdict(worst, bound, "max series residual for r ≤ 0.05, |ξ| ≤ 0.3"))
}

fn series_n2(_: &RunConfig) -> Result<(bool, String)> {
    series(2, 1e-3)
}

fn series_n3(_: &RunConfig) -> Result<(bool, String)> {
    series(3, 2e-3)
}

/// Heating-off master equation against the closed form on a few rays.
fn protocol_vs_analytic(cfg: &RunConfig) -> Result<(bool, String)> {
    let (xi_max, r_max) = extent(cfg)?;
    let mut p = cfg.resolved_protocol();
    p.heating_rate = 0.0;
    let mut grid = Vec::new();
    for r in [0.5 * r_max, r_max] {
        for k in 1..=4 {
            let xi = Complex64::new(xi_max * k as f64 / 4.0, 0.0);
            grid.push(MeasurementPoint::new(xi, r, 0.0, 0.0)?);
        }
    }
    let sim = simulate_protocol_grid(&grid, 2, &p)?;
    let mut worst = 0.0f64;
    for (pt, c) in grid.iter().zip(&sim) {
        let exact = chi_squeezed_exact(pt.xi, &SqueezeSpec::new(2, pt.r, 0.0)?)?;
        worst = worst.max((c.value - exact).norm());
    }
    Ok(verdict(worst, 1e-3, "max |χ̂ − χ|"))
}

/// Monte-Carlo spread of ĉ against `sqrt(diag I⁻¹)` on a small design.
fn fisher_vs_monte_carlo(_: &RunConfig) -> Result<(bool, String)> {
    let spec = ModelSpec::zero_temperature(2);
    let grid = build_grid(1.5, 0.4, 0.1, 0.1, 0.0)?;
    let chi = chi_values(&grid, &ChiSource::analytic(2))?;
    let policy = ShotPolicy::equal(200_000);
    let reps = 100;
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(reps);
    let mut design = None;
    for seed in 0..reps as u64 {
        let recs = sample_dataset(&grid, &chi, 2, &policy, 1000 + seed)?;
        let obs = Observation::from_records(&recs);
        let rep = minimize(&FitProblem::new(spec, obs.clone(), CostKind::Ml))?;
        samples.push(rep.params);
        design.get_or_insert(obs);
    }
    let design = design.ok_or_else(|| Error::InvalidInput("no repeats".into()))?;
    let mean: Vec<f64> = (0..3).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / reps as f64).collect();
    let cov = covariance(&fisher_information(&spec, &mean, &design)?)?;
    let mut worst = 0.0f64;
    for j in 0..3 {
        let var = samples.iter().map(|s| (s[j] - mean[j]).powi(2)).sum::<f64>() / (reps - 1) as f64;
        worst = worst.max((var.sqrt() / cov[(j, j)].sqrt() - 1.0).abs());
    }
    Ok(verdict(worst, 0.3, "max |std_MC / std_Fisher − 1|"))
}

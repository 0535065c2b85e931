//! Master-equation simulation of the trapped-ion Ramsey protocol.
//!
//! 1. Prepare the oscillator with `H_eff = Ω_n(t) i(e^{−iθ}aⁿ − e^{iθ}a†ⁿ)`
//!    under a trapezoidal envelope of area `r/n!` (qubit idle in `|0⟩`).
//! 2. Hadamard the qubit: the coherence block is `X = ρ/2`.
//! 3. Drive the spin-dependent force `H = ½(J0 a† + J0* a)σ_z` with
//!    `J0 = −iΩη e^{iΔφ}`; the block evolves with `H_L = −H_R`.
//! 4. Read `χ̂ = ⟨σ_x⟩ + i⟨σ_y⟩ = 2 Tr X*` at `t = |ξ|/Ωη`.
//!
//! Motional heating enters as jumps `a` and `a†` at rate ṅ̄ throughout.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MeasurementPoint;
use crate::error::{Error, Result};
use crate::fockspace::{
    annihilation, evolve_coherence, max_stable_step, thermal_state, Checked, Envelope,
    HamiltonianTerm, JumpOperator, TruncatedOperator, TruncationWarning, DEFAULT_CUTOFF,
    TRACE_TOLERANCE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// Spin-dependent force strength Ωη in rad/s.
    pub omega_eta: f64,
    /// Motional frequency in rad/s; the simulation runs in its rotating frame.
    pub omega_b: f64,
    /// Lamb-Dicke parameter (metadata; the dynamics depend on Ωη only).
    pub eta: f64,
    /// Heating rate ṅ̄ in quanta/s.
    pub heating_rate: f64,
    pub cutoff: usize,
    /// Bichromatic detuning of the preparation drive in rad/s.
    pub delta_prep: f64,
    /// Ramp time in s; `5/Δ_prep` when absent.
    pub ramp_time: Option<f64>,
    /// Effective coupling Ω_n in rad/s; `Δ_prep (Ωη/Δ_prep)ⁿ` when absent.
    pub omega_n: Option<f64>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            omega_eta: TAU * 4.7e3,
            omega_b: TAU * 1.2e6,
            eta: 0.05,
            heating_rate: 300.0,
            cutoff: DEFAULT_CUTOFF,
            delta_prep: TAU * 20e3,
            ramp_time: None,
            omega_n: None,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega_eta", self.omega_eta),
            ("omega_b", self.omega_b),
            ("eta", self.eta),
            ("delta_prep", self.delta_prep),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("protocol.{name} must be positive, got {v}")));
            }
        }
        if !(self.heating_rate >= 0.0) || !self.heating_rate.is_finite() {
            return Err(Error::Config(format!(
                "protocol.heating_rate must be non-negative, got {}",
                self.heating_rate
            )));
        }
        if self.cutoff < 2 {
            return Err(Error::Config(format!("protocol.cutoff must be ≥ 2, got {}", self.cutoff)));
        }
        for (name, v) in [("ramp_time", self.ramp_time), ("omega_n", self.omega_n)] {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::Config(format!("protocol.{name} must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn resolved_ramp_time(&self) -> f64 {
        self.ramp_time.unwrap_or(5.0 / self.delta_prep)
    }

    pub fn resolved_omega_n(&self, order: usize) -> f64 {
        self.omega_n
            .unwrap_or(self.delta_prep * (self.omega_eta / self.delta_prep).powi(order as i32))
    }

    /// Trapezoid `(height, plateau)` with area `r/n!`; the height is lowered
    /// when the area is too small to fill both ramps.
    pub fn prep_envelope(&self, order: usize, r: f64) -> (f64, f64) {
        let area = r / (1..=order).map(|k| k as f64).product::<f64>();
        let ramp = self.resolved_ramp_time();
        let height = self.resolved_omega_n(order);
        let plateau = area / height - ramp;
        if plateau >= 0.0 {
            (height, plateau)
        } else {
            (area / ramp, 0.0)
        }
    }
}

fn heating_jumps(cutoff: usize, rate: f64) -> Result<Vec<JumpOperator>> {
    if rate == 0.0 {
        return Ok(Vec::new());
    }
    let a = annihilation(cutoff)?;
    Ok(vec![
        JumpOperator {
            operator: a.adjoint(),
            rate,
        },
        JumpOperator { operator: a, rate },
    ])
}

/// Oscillator state after the squeezing pulse, with any truncation warning.
fn prepare(order: usize, r: f64, theta: f64, n_b: f64, cfg: &ProtocolConfig) -> Result<Checked<nalgebra::DMatrix<Complex64>>> {
    let d = cfg.cutoff;
    let rho = thermal_state(n_b, d)?;
    let mut x = rho.into_matrix();
    if r > 0.0 {
        let a = annihilation(d)?;
        let an = a.pow(order as u32);
        let rot = Complex64::from_polar(1.0, -theta);
        // i(e^{−iθ}aⁿ − e^{iθ}a†ⁿ)
        let k = an.matrix() * (Complex64::i() * rot) - an.matrix().adjoint() * (Complex64::i() * rot.conj());
        let (height, plateau) = cfg.prep_envelope(order, r);
        let ramp = cfg.resolved_ramp_time();
        let term = HamiltonianTerm {
            operator: TruncatedOperator::from_matrix(d, k)?,
            envelope: Envelope::trapezoid(0.0, ramp, plateau, height)?,
        };
        let t_end = 2.0 * ramp + plateau;
        let terms = [term];
        let dt = max_stable_step(&terms, 0.0, t_end);
        let jumps = heating_jumps(d, cfg.heating_rate)?;
        let tr0 = x.trace();
        x = evolve_coherence(&x, &terms, &terms, &jumps, 0.0, &[t_end], dt)?
            .pop()
            .expect("one snapshot");
        let drift = (x.trace() - tr0).norm();
        if drift > TRACE_TOLERANCE {
            return Err(Error::TraceDrift {
                drift,
                tolerance: TRACE_TOLERANCE,
            });
        }
    }
    let tail: f64 = (d - crate::fockspace::guard_levels(d)..d).map(|n| x[(n, n)].re).sum();
    let warning = (tail > crate::fockspace::TAIL_TOLERANCE).then_some(TruncationWarning {
        tail_population: tail,
        cutoff: d,
    });
    Ok(Checked { value: x, warning })
}

/// Ramsey readout along one ray `ξ = s e^{iφ}` for every `s` in `radii`.
fn ramsey_ray(
    rho: &nalgebra::DMatrix<Complex64>,
    phi: f64,
    radii: &[f64],
    cfg: &ProtocolConfig,
) -> Result<Vec<Complex64>> {
    let d = cfg.cutoff;
    let a = annihilation(d)?;
    let j0 = Complex64::new(0.0, -cfg.omega_eta) * Complex64::from_polar(1.0, phi);
    let h = a.adjoint().scale(j0 * 0.5).add(&a.scale(j0.conj() * 0.5))?;
    let left = [HamiltonianTerm::constant(h.clone())];
    let right = [HamiltonianTerm::constant(h.scale(Complex64::new(-1.0, 0.0)))];
    let jumps = heating_jumps(d, cfg.heating_rate)?;

    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&i, &j| radii[i].total_cmp(&radii[j]));
    let times: Vec<f64> = order.iter().map(|&i| radii[i] / cfg.omega_eta).collect();
    let t_max = times.last().copied().unwrap_or(0.0);
    let dt = max_stable_step(&left, 0.0, t_max.max(f64::MIN_POSITIVE));
    let x0 = rho * Complex64::new(0.5, 0.0);
    let snaps = evolve_coherence(&x0, &left, &right, &jumps, 0.0, &times, dt)?;
    let mut out = vec![Complex64::new(0.0, 0.0); radii.len()];
    for (k, x) in order.into_iter().zip(snaps) {
        out[k] = x.trace().conj() * 2.0;
    }
    Ok(out)
}

/// `χ̂` at one point.
pub fn simulate_protocol(
    point: &MeasurementPoint,
    order: usize,
    config: &ProtocolConfig,
) -> Result<Checked<Complex64>> {
    Ok(simulate_protocol_grid(std::slice::from_ref(point), order, config)?
        .pop()
        .expect("one point in, one value out"))
}

/// `χ̂` over a grid. Points sharing `(r, θ, n_B)` share one preparation, and
/// points sharing also `arg ξ` share one Ramsey trajectory read out at each
/// `|ξ|/Ωη`.
pub fn simulate_protocol_grid(
    grid: &[MeasurementPoint],
    order: usize,
    config: &ProtocolConfig,
) -> Result<Vec<Checked<Complex64>>> {
    if !(2..=4).contains(&order) {
        return Err(Error::UnsupportedOrder(order, crate::fockspace::SQUEEZE_ORDERS));
    }
    config.validate()?;
    type Key = (u64, u64, u64);
    let mut preps: BTreeMap<Key, BTreeMap<u64, Vec<usize>>> = BTreeMap::new();
    for (i, p) in grid.iter().enumerate() {
        let key = (p.r.to_bits(), p.theta.to_bits(), p.n_b.to_bits());
        let phi = if p.xi.norm() == 0.0 { 0.0 } else { p.xi.arg() };
        preps.entry(key).or_default().entry(phi.to_bits()).or_default().push(i);
    }
    let jobs: Vec<(Key, BTreeMap<u64, Vec<usize>>)> = preps.into_iter().collect();
    let parts = jobs
        .par_iter()
        .map(|(key, rays)| -> Result<Vec<(usize, Checked<Complex64>)>> {
            let p0 = grid[rays.values().next().expect("non-empty")[0]];
            let prep = prepare(order, p0.r, p0.theta, p0.n_b, config)?;
            let _ = key;
            let mut out = Vec::new();
            for (phi, idx) in rays {
                let radii: Vec<f64> = idx.iter().map(|&i| grid[i].xi.norm()).collect();
                let chi = ramsey_ray(&prep.value, f64::from_bits(*phi), &radii, config)?;
                let guard = config.cutoff as f64 / 10.0;
                for (&i, c) in idx.iter().zip(chi) {
                    let s2 = grid[i].xi.norm_sqr();
                    let warning = prep.warning.or_else(|| {
                        (s2 > guard).then_some(TruncationWarning {
                            tail_population: s2 / config.cutoff as f64,
                            cutoff: config.cutoff,
                        })
                    });
                    out.push((i, Checked { value: c, warning }));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<Option<Checked<Complex64>>> = vec![None; grid.len()];
    for (i, c) in parts.into_iter().flatten() {
        out[i] = Some(c);
    }
    Ok(out.into_iter().map(|c| c.expect("every point simulated")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charfunc::{chi_squeezed_exact, chi_vacuum, SqueezeSpec};

    fn quiet(cutoff: usize) -> ProtocolConfig {
        ProtocolConfig {
            heating_rate: 0.0,
            cutoff,
            ..ProtocolConfig::default()
        }
    }

    #[test]
    fn vacuum_readout_is_gaussian() {
        let p = MeasurementPoint::new(Complex64::new(1.0, 0.0), 0.0, 0.0, 0.0).unwrap();
        let chi = simulate_protocol(&p, 2, &quiet(40)).unwrap().value;
        assert!((chi - chi_vacuum(p.xi)).norm() < 1e-3, "{chi}");
    }

    #[test]
    fn readout_sign_convention_on_complex_ray() {
        // tri-squeezed χ has an odd imaginary part, so a sign slip would show
        let cfg = quiet(60);
        let xi = Complex64::from_polar(0.9, 0.5);
        let p = MeasurementPoint::new(xi, 0.3, 0.0, 0.0).unwrap();
        let chi = simulate_protocol(&p, 3, &cfg).unwrap().value;
        let spec = SqueezeSpec::new(3, 0.3, 0.0).unwrap();
        let rho = crate::fockspace::DensityOperator::vacuum(60).unwrap();
        let want = crate::charfunc::chi_numeric(&rho, &spec, xi).unwrap().value;
        assert!(want.im.abs() > 1e-2);
        assert!((chi - want).norm() < 1e-3, "{chi} vs {want}");
    }

    #[test]
    fn squeezed_rays_match_closed_form() {
        let cfg = quiet(60);
        let grid: Vec<MeasurementPoint> = [0.25, 0.8, 1.5, 2.0]
            .iter()
            .map(|&s| MeasurementPoint::new(Complex64::new(s, 0.0), 0.25, 0.0, 0.0).unwrap())
            .collect();
        let chi = simulate_protocol_grid(&grid, 2, &cfg).unwrap();
        let spec = SqueezeSpec::new(2, 0.25, 0.0).unwrap();
        for (p, c) in grid.iter().zip(chi) {
            let want = chi_squeezed_exact(p.xi, &spec).unwrap();
            assert!((c.value - want).norm() < 1e-3, "{}: {} vs {want}", p.xi, c.value);
        }
    }

    #[test]
    fn small_area_lowers_height() {
        let cfg = ProtocolConfig::default();
        let (h, plateau) = cfg.prep_envelope(2, 1e-4);
        assert_eq!(plateau, 0.0);
        assert!((h * cfg.resolved_ramp_time() - 0.5e-4).abs() < 1e-15);
        let (h, plateau) = cfg.prep_envelope(2, 1.0);
        assert_eq!(h, cfg.resolved_omega_n(2));
        assert!((h * (plateau + cfg.resolved_ramp_time()) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(ProtocolConfig::default().validate().is_ok());
        let bad = ProtocolConfig {
            heating_rate: -1.0,
            ..ProtocolConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}

//! Characteristic (Weyl) functions `χ(ξ) = Tr{ρ D(ξ)}`: closed forms for
//! Gaussian squeezed states, a Fock-space evaluator for any order, and the
//! map from a resonant spin-dependent force to the phase-space point ξ.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fockspace::{
    generalized_squeeze, Checked, DensityOperator, DisplacementFactory, TruncationWarning,
};

/// Squeezing order, amplitude and phase of `ζ = r e^{iθ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezeSpec {
    order: usize,
    r: f64,
    theta: f64,
}

impl SqueezeSpec {
    pub fn new(order: usize, r: f64, theta: f64) -> Result<Self> {
        if !(2..=4).contains(&order) {
            return Err(Error::UnsupportedOrder(order, crate::fockspace::SQUEEZE_ORDERS));
        }
        if !r.is_finite() || r < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "squeezing amplitude must be finite and non-negative, got {r}"
            )));
        }
        if !theta.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite phase {theta}")));
        }
        Ok(Self {
            order,
            r,
            theta: theta.rem_euclid(TAU),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Phase normalized to `[0, 2π)`.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn zeta(&self) -> Complex64 {
        Complex64::from_polar(self.r, self.theta)
    }
}

/// Source of the spin-dependent force, `J(t) = J0 e^{iΔt}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    pub j0: Complex64,
    /// Detuning in rad/s.
    pub delta: f64,
    pub t0: f64,
    pub tf: f64,
}

impl SourceSpec {
    pub fn new(j0: Complex64, delta: f64, t0: f64, tf: f64) -> Result<Self> {
        if !(tf >= t0) {
            return Err(Error::InvalidTime { t: tf, t0 });
        }
        if !j0.re.is_finite() || !j0.im.is_finite() || !delta.is_finite() {
            return Err(Error::InvalidParameter("non-finite source parameter".into()));
        }
        Ok(Self { j0, delta, t0, tf })
    }

    /// `J0 = −iΩη e^{iΔφ}`.
    pub fn from_coupling(omega_eta: f64, delta_phi: f64, delta: f64, t0: f64, tf: f64) -> Result<Self> {
        let j0 = Complex64::new(0.0, -omega_eta) * Complex64::from_polar(1.0, delta_phi);
        Self::new(j0, delta, t0, tf)
    }
}

/// A dimensionless phase-space displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub xi: Complex64,
}

impl PhasePoint {
    pub fn new(xi: Complex64) -> Result<Self> {
        if !xi.re.is_finite() || !xi.im.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite ξ = {xi}")));
        }
        Ok(Self { xi })
    }
}

impl From<PhasePoint> for Complex64 {
    fn from(p: PhasePoint) -> Self {
        p.xi
    }
}

/// `C_Δ(t) = (e^{iΔt} − 1)/Δ`, with the series limit `i t` below `|Δt| = 1e−8`.
pub fn circle_function(delta: f64, t: f64) -> Complex64 {
    let x = delta * t;
    if x.abs() < 1e-8 {
        Complex64::new(-0.5 * delta * t * t, t)
    } else {
        // e^{ix} − 1 = 2i sin(x/2) e^{ix/2}, free of cancellation for small x
        Complex64::from_polar(2.0 * (0.5 * x).sin() / delta, 0.5 * x) * Complex64::i()
    }
}

/// Phase-space point reached by the force at time `t`: `ξ = J0 · C_Δ(t − t0)`,
/// which is `Ωη e^{iΔφ} (t − t0)` on resonance.
pub fn xi_of_time(source: &SourceSpec, t: f64) -> Result<PhasePoint> {
    if !(t >= source.t0) {
        return Err(Error::InvalidTime { t, t0: source.t0 });
    }
    let tau = t - source.t0;
    let c = if (source.delta * tau).abs() <= 1e-6 {
        Complex64::new(0.0, tau)
    } else {
        circle_function(source.delta, tau)
    };
    PhasePoint::new(source.j0 * c)
}

pub fn chi_vacuum(xi: Complex64) -> Complex64 {
    Complex64::new((-0.5 * xi.norm_sqr()).exp(), 0.0)
}

fn bogoliubov(xi: Complex64, spec: &SqueezeSpec) -> Complex64 {
    let (ch, sh) = (spec.r.cosh(), spec.r.sinh());
    xi * ch + xi.conj() * sh * Complex64::from_polar(1.0, spec.theta)
}

/// Closed form for the squeezed vacuum, `exp(−|ξ ch r + ξ* sh r e^{iθ}|²/2)`.
pub fn chi_squeezed_exact(xi: Complex64, spec: &SqueezeSpec) -> Result<Complex64> {
    if spec.order != 2 {
        return Err(Error::UnsupportedOrder(spec.order, "2"));
    }
    Ok(chi_vacuum(bogoliubov(xi, spec)))
}

/// Squeezed thermal state: the squeezed-vacuum value raised to `1 + 2 n_B`.
pub fn chi_thermal_squeezed_exact(xi: Complex64, spec: &SqueezeSpec, n_b: f64) -> Result<Complex64> {
    if spec.order != 2 {
        return Err(Error::UnsupportedOrder(spec.order, "2"));
    }
    if !n_b.is_finite() || n_b < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "mean occupation must be finite and non-negative, got {n_b}"
        )));
    }
    let beta = bogoliubov(xi, spec);
    Ok(Complex64::new((-0.5 * (1.0 + 2.0 * n_b) * beta.norm_sqr()).exp(), 0.0))
}

/// Fock-space evaluator of `Tr{S ρ S† D(ξ)}` that keeps the squeezed state and
/// the displacement spectrum cached across many ξ.
#[derive(Debug, Clone)]
pub struct ChiEvaluator {
    state: DensityOperator,
    displacements: DisplacementFactory,
    warning: Option<TruncationWarning>,
}

impl ChiEvaluator {
    pub fn new(rho: &DensityOperator, spec: &SqueezeSpec) -> Result<Self> {
        Self::with_factory(rho, spec, DisplacementFactory::new(rho.cutoff())?)
    }

    /// Reuses an existing displacement spectrum (it depends only on the cutoff).
    pub fn with_factory(
        rho: &DensityOperator,
        spec: &SqueezeSpec,
        displacements: DisplacementFactory,
    ) -> Result<Self> {
        if rho.is_joint() {
            return Err(Error::InvalidDimension(
                "characteristic function needs an oscillator-only state".into(),
            ));
        }
        if displacements.cutoff() != rho.cutoff() {
            return Err(Error::InvalidDimension(format!(
                "displacement cutoff {} does not match state cutoff {}",
                displacements.cutoff(),
                rho.cutoff()
            )));
        }
        let s = generalized_squeeze(spec.order, spec.zeta(), rho.cutoff())?;
        let state = rho.conjugate(&s.value)?;
        let warning = state.truncation_warning().or(s.warning);
        Ok(Self {
            state,
            displacements,
            warning,
        })
    }

    pub fn state(&self) -> &DensityOperator {
        &self.state
    }

    pub fn warning(&self) -> Option<TruncationWarning> {
        self.warning
    }

    pub fn evaluate(&self, xi: Complex64) -> Result<Checked<Complex64>> {
        let (s, phi) = xi.to_polar();
        let mut v = self.evaluate_ray(phi, &[s])?;
        Ok(v.pop().expect("one radius in, one value out"))
    }

    /// Values along the ray `ξ = s e^{iφ}` for every `s` in `radii`; one O(d³)
    /// projection, then O(d) per radius.
    pub fn evaluate_ray(&self, phi: f64, radii: &[f64]) -> Result<Vec<Checked<Complex64>>> {
        if !phi.is_finite() || radii.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidParameter(
                "ray needs a finite phase and non-negative radii".into(),
            ));
        }
        let d = self.state.cutoff();
        let g = self.displacements.generator();
        let v = g.vectors();
        // M = R(φ)† ρ R(φ), then diag(V† M V)
        let rho = self.state.matrix();
        let m = DMatrix::from_fn(d, d, |i, j| {
            rho[(i, j)] * Complex64::from_polar(1.0, -phi * (i as f64 - j as f64))
        });
        let w = m * v;
        let diag: Vec<Complex64> = (0..d)
            .map(|k| v.column(k).iter().zip(w.column(k).iter()).map(|(a, b)| a.conj() * b).sum())
            .collect();
        let guard = d as f64 / 10.0;
        Ok(radii
            .iter()
            .map(|&s| {
                let value: Complex64 = diag
                    .iter()
                    .zip(g.values().iter())
                    .map(|(c, lam)| c * Complex64::from_polar(1.0, -s * lam))
                    .sum();
                let warning = self.warning.or_else(|| {
                    (s * s > guard).then_some(TruncationWarning {
                        tail_population: s * s / d as f64,
                        cutoff: d,
                    })
                });
                Checked { value, warning }
            })
            .collect())
    }
}

/// `Tr{S_n(ζ) ρ S_n(ζ)† D(ξ)}` in the truncated Fock space.
pub fn chi_numeric(rho: &DensityOperator, spec: &SqueezeSpec, xi: Complex64) -> Result<Checked<Complex64>> {
    ChiEvaluator::new(rho, spec)?.evaluate(xi)
}

/// Raised when `|c_h ξ| > 0.5`, outside the small-heating regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatingGuard {
    pub c_h_xi: f64,
}

/// `ξ → ξ + c_h ξ²`, the leading-order effect of motional heating.
pub fn xi_heated(xi: Complex64, c_h: f64) -> Checked<PhasePoint, HeatingGuard> {
    let g = (c_h * xi).norm();
    Checked {
        value: PhasePoint {
            xi: xi + c_h * xi * xi,
        },
        warning: (g > 0.5).then_some(HeatingGuard { c_h_xi: g }),
    }
}

/// Heating coefficient for amplitude decay rate `κ`: `c_h = κ / (4Ωη)`.
pub fn heating_parameter(kappa: f64, omega_eta: f64) -> f64 {
    kappa / (4.0 * omega_eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::thermal_state;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn squeeze_spec_normalizes_phase() {
        let s = SqueezeSpec::new(2, 0.1, -PI / 2.0).unwrap();
        assert!((s.theta() - 1.5 * PI).abs() < 1e-15);
        assert!(SqueezeSpec::new(2, -0.1, 0.0).is_err());
        assert!(SqueezeSpec::new(5, 0.1, 0.0).is_err());
    }

    #[test]
    fn circle_function_examples() {
        let lim = circle_function(1e-12, 1.0);
        assert!((lim - c(0.0, 1.0)).norm() < 1e-12);
        assert!(circle_function(TAU, 1.0).norm() < 1e-15);
        assert!((circle_function(1.0, PI) - c(-2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn circle_function_is_continuous_across_branch() {
        for &t in &[0.5, 1.0, 3.0] {
            let (d1, d2) = (0.99e-8 / t, 1.01e-8 / t);
            let gap = (circle_function(d1, t) - circle_function(d2, t)).norm();
            assert!(gap <= (d2 - d1) * t * t / 2.0 + 1e-15 * t, "{gap}");
            for &d in &[d1, d2, 1e-4, 1e-2] {
                let dev = (circle_function(d, t) - c(0.0, t)).norm();
                assert!(dev <= d * t * t / 2.0 * (1.0 + 1e-6) + 1e-15);
            }
        }
    }

    #[test]
    fn xi_of_time_examples() {
        let oe = 2.0 * PI * 4.7e3;
        let src = SourceSpec::from_coupling(oe, 0.0, 0.0, 1.0, 2.0).unwrap();
        assert_eq!(xi_of_time(&src, 1.0).unwrap().xi, c(0.0, 0.0));
        let xi = xi_of_time(&src, 1.0 + 33.86e-6).unwrap().xi;
        assert!((xi.norm() - 1.000).abs() < 5e-4, "{xi}");
        assert!(xi.im.abs() < 1e-15);
        assert!(matches!(xi_of_time(&src, 0.5), Err(Error::InvalidTime { .. })));

        let delta = 2.0 * PI * 1e3;
        let src = SourceSpec::from_coupling(oe, 0.3, delta, 0.0, 1.0).unwrap();
        let closed = xi_of_time(&src, TAU / delta).unwrap().xi;
        assert!(closed.norm() < 1e-12);
    }

    #[test]
    fn off_resonant_xi_matches_quadrature() {
        // ξ(t) = i J0 ∫_0^t e^{iΔs} ds by composite Simpson
        let oe = 2.0 * PI * 4.7e3;
        let delta = 2.0 * PI * 3.3e3;
        let src = SourceSpec::from_coupling(oe, 0.7, delta, 0.0, 1.0).unwrap();
        let t = 1.3e-4;
        let n = 2000;
        let h = t / n as f64;
        let f = |s: f64| Complex64::from_polar(1.0, delta * s);
        let mut acc = f(0.0) + f(t);
        for k in 1..n {
            acc += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let quad = Complex64::i() * src.j0 * acc * h / 3.0;
        let xi = xi_of_time(&src, t).unwrap().xi;
        assert!((xi - quad).norm() < 1e-10, "{xi} vs {quad}");
    }

    #[test]
    fn chi_vacuum_examples() {
        assert_eq!(chi_vacuum(c(0.0, 0.0)), c(1.0, 0.0));
        assert!((chi_vacuum(c(1.0, 0.0)).re - (-0.5f64).exp()).abs() < 1e-15);
        assert!((chi_vacuum(c(1.0, 1.0)).re - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn chi_squeezed_exact_examples() {
        let r0 = SqueezeSpec::new(2, 0.0, 0.0).unwrap();
        let xi = c(0.4, -0.7);
        assert!((chi_squeezed_exact(xi, &r0).unwrap() - chi_vacuum(xi)).norm() < 1e-15);

        let s = SqueezeSpec::new(2, 0.25, 0.0).unwrap();
        let v = chi_squeezed_exact(c(1.0, 0.0), &s).unwrap();
        assert!((v.re - (-(0.5f64).exp() / 2.0).exp()).abs() < 1e-15);
        let v = chi_squeezed_exact(c(0.0, 0.8), &s).unwrap();
        assert!((v.re - (-0.64 * (-0.5f64).exp() / 2.0).exp()).abs() < 1e-15);

        let s3 = SqueezeSpec::new(3, 0.25, 0.0).unwrap();
        assert!(matches!(
            chi_squeezed_exact(xi, &s3),
            Err(Error::UnsupportedOrder(3, _))
        ));
    }

    #[test]
    fn chi_thermal_examples() {
        let s = SqueezeSpec::new(2, 0.25, 0.0).unwrap();
        let xi = c(0.5, 0.0);
        assert_eq!(
            chi_thermal_squeezed_exact(xi, &s, 0.0).unwrap(),
            chi_squeezed_exact(xi, &s).unwrap()
        );
        let r0 = SqueezeSpec::new(2, 0.0, 0.0).unwrap();
        let v = chi_thermal_squeezed_exact(c(0.3, 0.4), &r0, 0.2).unwrap();
        assert!((v.re - (-1.4 * 0.25 / 2.0f64).exp()).abs() < 1e-15);
        let v = chi_thermal_squeezed_exact(xi, &s, 0.1).unwrap();
        let want = chi_squeezed_exact(xi, &s).unwrap().re.powf(1.2);
        assert!((v.re - want).abs() < 1e-15);
    }

    #[test]
    fn numeric_matches_closed_forms() {
        let s = SqueezeSpec::new(2, 0.25, 0.0).unwrap();
        let vac = DensityOperator::vacuum(100).unwrap();
        let ev = ChiEvaluator::new(&vac, &s).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let xi = c(-2.0 + 4.0 * i as f64 / 9.0, -2.0 + 4.0 * j as f64 / 9.0);
                if xi.norm() > 2.0 {
                    continue;
                }
                let num = ev.evaluate(xi).unwrap().value;
                let exact = chi_squeezed_exact(xi, &s).unwrap();
                assert!((num - exact).norm() < 1e-8, "{xi}: {num} vs {exact}");
            }
        }

        let th = thermal_state(0.1, 100).unwrap();
        let num = chi_numeric(&th, &s, c(0.5, 0.0)).unwrap().value;
        let exact = chi_thermal_squeezed_exact(c(0.5, 0.0), &s, 0.1).unwrap();
        assert!((num - exact).norm() < 1e-8);

        let r0 = SqueezeSpec::new(2, 0.0, 0.0).unwrap();
        let num = chi_numeric(&vac, &r0, c(0.3, 0.9)).unwrap().value;
        assert!((num - chi_vacuum(c(0.3, 0.9))).norm() < 1e-12);
    }

    #[test]
    fn trisqueezed_parity() {
        let s = SqueezeSpec::new(3, 0.25, 0.0).unwrap();
        let ev = ChiEvaluator::new(&DensityOperator::vacuum(100).unwrap(), &s).unwrap();
        for &xi in &[c(0.5, 0.2), c(-1.0, 0.7), c(1.3, -0.4)] {
            let p = ev.evaluate(xi).unwrap().value;
            let m = ev.evaluate(-xi).unwrap().value;
            assert!((p.re - m.re).abs() < 1e-10);
            assert!((p.im + m.im).abs() < 1e-10);
            assert!(p.norm() <= 1.0 + 1e-8);
        }
        let v = ev.evaluate(c(0.0, 1.0)).unwrap().value;
        assert!(v.im.abs() > 1e-3);
    }

    #[test]
    fn xi_heated_examples() {
        assert_eq!(xi_heated(c(0.7, 0.2), 0.0).value.xi, c(0.7, 0.2));
        let h = xi_heated(c(1.0, 0.0), 0.1);
        assert!((h.value.xi - c(1.1, 0.0)).norm() < 1e-15);
        assert!(h.warning.is_none());
        assert!(xi_heated(c(2.0, 0.0), 0.3).warning.is_some());
    }

    #[test]
    fn heating_parameter_from_rate() {
        let oe = 2.0 * PI * 4.7e3;
        let ch = heating_parameter(4.0 * oe * 0.088, oe);
        assert!((ch - 0.088).abs() < 1e-15);
    }
}

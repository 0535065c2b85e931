use nalgebra::DMatrix;
use num_complex::Complex64;

use super::banded::Banded;
use super::{DensityOperator, MaxAbs, TruncatedOperator};
use crate::error::{Error, Result};

/// Largest admissible `dt · ‖H‖` for the fixed-step integrator.
pub const STEP_GUARD: f64 = 0.05;

/// Largest admissible trace drift over one `evolve_lindblad` run.
pub const TRACE_TOLERANCE: f64 = 1e-8;

/// Scalar time dependence of a Hamiltonian term.
#[derive(Debug, Clone, PartialEq)]
pub enum Envelope {
    Constant(f64),
    /// Linear interpolation between knots; held constant outside them.
    PiecewiseLinear { times: Vec<f64>, values: Vec<f64> },
}

impl Envelope {
    pub fn piecewise_linear(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidParameter(
                "envelope needs matching, non-empty knot and value lists".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::InvalidParameter(
                "envelope knots must be non-decreasing".into(),
            ));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite envelope knot".into()));
        }
        Ok(Envelope::PiecewiseLinear { times, values })
    }

    /// Trapezoid rising from 0 at `start` to `height` over `ramp`, flat for
    /// `plateau`, then falling back to 0 over `ramp`.
    pub fn trapezoid(start: f64, ramp: f64, plateau: f64, height: f64) -> Result<Self> {
        let t1 = start + ramp;
        let t2 = t1 + plateau;
        let t3 = t2 + ramp;
        Self::piecewise_linear(vec![start, t1, t2, t3], vec![0.0, height, height, 0.0])
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Envelope::Constant(v) => *v,
            Envelope::PiecewiseLinear { times, values } => {
                let n = times.len();
                if t <= times[0] {
                    return values[0];
                }
                if t >= times[n - 1] {
                    return values[n - 1];
                }
                let k = times.partition_point(|&x| x <= t);
                let (ta, tb) = (times[k - 1], times[k]);
                let (va, vb) = (values[k - 1], values[k]);
                if tb == ta {
                    vb
                } else {
                    va + (vb - va) * (t - ta) / (tb - ta)
                }
            }
        }
    }

    /// Maximum of `|value|` over `[t0, t1]`.
    pub fn max_abs(&self, t0: f64, t1: f64) -> f64 {
        match self {
            Envelope::Constant(v) => v.abs(),
            Envelope::PiecewiseLinear { times, values } => {
                let inner = times
                    .iter()
                    .zip(values)
                    .filter(|(t, _)| **t > t0 && **t < t1)
                    .map(|(_, v)| v.abs());
                inner
                    .chain([self.value(t0).abs(), self.value(t1).abs()])
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Knots strictly inside `(t0, t1)`.
    pub fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        match self {
            Envelope::Constant(_) => Vec::new(),
            Envelope::PiecewiseLinear { times, .. } => {
                times.iter().copied().filter(|t| *t > t0 && *t < t1).collect()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct HamiltonianTerm {
    pub operator: TruncatedOperator,
    pub envelope: Envelope,
}

impl HamiltonianTerm {
    pub fn constant(operator: TruncatedOperator) -> Self {
        Self {
            operator,
            envelope: Envelope::Constant(1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct JumpOperator {
    pub operator: TruncatedOperator,
    /// Rate in 1/s (quanta/s for heating channels).
    pub rate: f64,
}

/// `H(t) = Σ_j e_j(t) H_j` plus Lindblad jump channels.
#[derive(Debug, Clone)]
pub struct LindbladSpec {
    hamiltonian: Vec<HamiltonianTerm>,
    jumps: Vec<JumpOperator>,
}

impl LindbladSpec {
    pub fn new(hamiltonian: Vec<HamiltonianTerm>, jumps: Vec<JumpOperator>) -> Result<Self> {
        let dims: Vec<usize> = hamiltonian
            .iter()
            .map(|h| h.operator.dim())
            .chain(jumps.iter().map(|j| j.operator.dim()))
            .collect();
        if dims.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::InvalidDimension(
                "Hamiltonian and jump operators act on different spaces".into(),
            ));
        }
        for h in &hamiltonian {
            let herm = (h.operator.matrix() - h.operator.matrix().adjoint()).cmax();
            if herm > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "Hamiltonian term not Hermitian (deviation {herm:.3e})"
                )));
            }
        }
        for j in &jumps {
            if !(j.rate >= 0.0) || !j.rate.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "jump rate must be finite and non-negative, got {}",
                    j.rate
                )));
            }
        }
        Ok(Self { hamiltonian, jumps })
    }

    pub fn hamiltonian(&self) -> &[HamiltonianTerm] {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[JumpOperator] {
        &self.jumps
    }

    fn dim(&self) -> Option<usize> {
        self.hamiltonian
            .first()
            .map(|h| h.operator.dim())
            .or_else(|| self.jumps.first().map(|j| j.operator.dim()))
    }
}

struct Term {
    op: Banded,
    norm: f64,
    envelope: Envelope,
}

/// Generator of `dX/dt = −i(H_L X − X H_R) + Σ L X L† − ½{Σ L†L, X}` with the
/// rates folded into the jump operators.
struct Compiled {
    dim: usize,
    left: Vec<Term>,
    right: Vec<Term>,
    jumps: Vec<(Banded, Banded)>,
    damping: Banded,
}

impl Compiled {
    fn new(
        dim: usize,
        left: &[HamiltonianTerm],
        right: &[HamiltonianTerm],
        jumps: &[JumpOperator],
    ) -> Result<Self> {
        let compile = |terms: &[HamiltonianTerm]| -> Result<Vec<Term>> {
            terms
                .iter()
                .map(|h| {
                    if h.operator.dim() != dim {
                        return Err(Error::InvalidDimension(format!(
                            "Hamiltonian dimension {} does not match state dimension {dim}",
                            h.operator.dim()
                        )));
                    }
                    let op = Banded::from_dense(h.operator.matrix());
                    Ok(Term {
                        norm: op.inf_norm(),
                        op,
                        envelope: h.envelope.clone(),
                    })
                })
                .collect()
        };
        let left = compile(left)?;
        let right = compile(right)?;
        let mut damping = Banded::zeros(dim);
        let mut compiled_jumps = Vec::new();
        for j in jumps {
            if j.operator.dim() != dim {
                return Err(Error::InvalidDimension(format!(
                    "jump dimension {} does not match state dimension {dim}",
                    j.operator.dim()
                )));
            }
            if !(j.rate >= 0.0) || !j.rate.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "jump rate must be finite and non-negative, got {}",
                    j.rate
                )));
            }
            if j.rate == 0.0 {
                continue;
            }
            let mut l = Banded::from_dense(j.operator.matrix());
            let s = Complex64::new(j.rate.sqrt(), 0.0);
            l.diagonals
                .iter_mut()
                .for_each(|d| d.values.iter_mut().for_each(|v| *v *= s));
            let ld = l.adjoint();
            damping.add_scaled(&ld.mul(&l), Complex64::new(0.5, 0.0));
            compiled_jumps.push((l, ld));
        }
        Ok(Self {
            dim,
            left,
            right,
            jumps: compiled_jumps,
            damping,
        })
    }

    fn hamiltonian_norm(&self, t0: f64, t1: f64) -> f64 {
        let side = |terms: &[Term]| -> f64 {
            terms
                .iter()
                .map(|t| t.norm * t.envelope.max_abs(t0, t1))
                .sum()
        };
        side(&self.left).max(side(&self.right))
    }

    fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .left
            .iter()
            .chain(&self.right)
            .flat_map(|t| t.envelope.breakpoints(t0, t1))
            .collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    fn effective(&self, terms: &[Term], t: f64, sign: Complex64) -> Banded {
        let mut a = Banded::zeros(self.dim);
        a.add_scaled(&self.damping, Complex64::new(-1.0, 0.0));
        for term in terms {
            let e = term.envelope.value(t);
            if e != 0.0 {
                a.add_scaled(&term.op, sign * e);
            }
        }
        a
    }

    fn rhs(&self, t: f64, x: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>, tmp: &mut DMatrix<Complex64>) {
        out.fill(Complex64::new(0.0, 0.0));
        let al = self.effective(&self.left, t, Complex64::new(0.0, -1.0));
        let ar = self.effective(&self.right, t, Complex64::new(0.0, 1.0));
        al.mul_dense_acc(x, out);
        ar.dense_mul_acc(x, out);
        for (l, ld) in &self.jumps {
            tmp.fill(Complex64::new(0.0, 0.0));
            l.mul_dense_acc(x, tmp);
            ld.dense_mul_acc(tmp, out);
        }
    }
}

/// `y += a x`.
fn axpy(y: &mut DMatrix<Complex64>, a: Complex64, x: &DMatrix<Complex64>) {
    for (y, x) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *y += a * x;
    }
}

struct Rk4 {
    k1: DMatrix<Complex64>,
    k2: DMatrix<Complex64>,
    k3: DMatrix<Complex64>,
    k4: DMatrix<Complex64>,
    y: DMatrix<Complex64>,
    tmp: DMatrix<Complex64>,
}

impl Rk4 {
    fn new(d: usize) -> Self {
        let z = || DMatrix::zeros(d, d);
        Self {
            k1: z(),
            k2: z(),
            k3: z(),
            k4: z(),
            y: z(),
            tmp: z(),
        }
    }

    fn step(&mut self, g: &Compiled, t: f64, h: f64, x: &mut DMatrix<Complex64>) {
        let half = Complex64::new(0.5 * h, 0.0);
        let full = Complex64::new(h, 0.0);
        g.rhs(t, x, &mut self.k1, &mut self.tmp);
        self.y.copy_from(x);
        axpy(&mut self.y, half, &self.k1);
        g.rhs(t + 0.5 * h, &self.y, &mut self.k2, &mut self.tmp);
        self.y.copy_from(x);
        axpy(&mut self.y, half, &self.k2);
        g.rhs(t + 0.5 * h, &self.y, &mut self.k3, &mut self.tmp);
        self.y.copy_from(x);
        axpy(&mut self.y, full, &self.k3);
        g.rhs(t + h, &self.y, &mut self.k4, &mut self.tmp);
        let sixth = Complex64::new(h / 6.0, 0.0);
        let third = Complex64::new(h / 3.0, 0.0);
        axpy(x, sixth, &self.k1);
        axpy(x, third, &self.k2);
        axpy(x, third, &self.k3);
        axpy(x, sixth, &self.k4);
    }

    /// Integrates `[t0, t1]` with equal steps no longer than `dt`, splitting at
    /// envelope knots so no RK4 stage straddles a kink.
    fn run(&mut self, g: &Compiled, x: &mut DMatrix<Complex64>, t0: f64, t1: f64, dt: f64) -> Result<usize> {
        if t1 <= t0 {
            return Ok(0);
        }
        let mut cuts = vec![t0];
        cuts.extend(g.breakpoints(t0, t1));
        cuts.push(t1);
        let mut steps = 0;
        for w in cuts.windows(2) {
            let span = w[1] - w[0];
            let n = ((span / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            let h = span / n as f64;
            let ratio = h * g.hamiltonian_norm(w[0], w[1]);
            if ratio > STEP_GUARD * (1.0 + 1e-12) {
                return Err(Error::InvalidStep {
                    ratio,
                    limit: STEP_GUARD,
                });
            }
            for k in 0..n {
                self.step(g, w[0] + k as f64 * h, h, x);
            }
            steps += n;
        }
        Ok(steps)
    }
}

/// Largest step satisfying `dt · ‖H(t)‖ ≤ STEP_GUARD` on `[t0, t1]`, with the
/// induced ∞-norm bounding the spectral norm. Infinite when `H ≡ 0`.
pub fn max_stable_step(terms: &[HamiltonianTerm], t0: f64, t1: f64) -> f64 {
    let norm: f64 = terms
        .iter()
        .map(|h| Banded::from_dense(h.operator.matrix()).inf_norm() * h.envelope.max_abs(t0, t1))
        .sum();
    if norm == 0.0 {
        f64::INFINITY
    } else {
        STEP_GUARD / norm
    }
}

/// Fixed-step RK4 solution of the master equation over `t_span`.
///
/// The step actually used is `dt` shortened so that knots of piecewise-linear
/// envelopes and the end of the span fall on the grid; the step guard is
/// checked against that step.
pub fn evolve_lindblad(
    rho0: &DensityOperator,
    spec: &LindbladSpec,
    t_span: (f64, f64),
    dt: f64,
) -> Result<DensityOperator> {
    let (t0, t1) = t_span;
    if !(t1 >= t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::InvalidTime { t: t1, t0 });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "time step must be positive, got {dt}"
        )));
    }
    if let Some(d) = spec.dim() {
        if d != rho0.dim() {
            return Err(Error::InvalidDimension(format!(
                "spec acts on dimension {d}, state has {}",
                rho0.dim()
            )));
        }
    }
    let g = Compiled::new(rho0.dim(), &spec.hamiltonian, &spec.hamiltonian, &spec.jumps)?;
    let mut x = rho0.matrix().clone();
    let tr0 = x.trace();
    Rk4::new(rho0.dim()).run(&g, &mut x, t0, t1, dt)?;
    let drift = (x.trace() - tr0).norm();
    if drift > TRACE_TOLERANCE {
        return Err(Error::TraceDrift {
            drift,
            tolerance: TRACE_TOLERANCE,
        });
    }
    DensityOperator::from_matrix_unchecked(rho0.cutoff(), x)
}

/// Evolves an off-diagonal block `X` of a block-diagonal Hamiltonian, where
/// `H_L` and `H_R` act from the left and right and the jump channels act on
/// both sides. Returns snapshots at each of `times` (sorted, `≥ t0`).
///
/// With `H_L = H_R` this is the ordinary master equation on `X`.
pub fn evolve_coherence(
    x0: &DMatrix<Complex64>,
    left: &[HamiltonianTerm],
    right: &[HamiltonianTerm],
    jumps: &[JumpOperator],
    t0: f64,
    times: &[f64],
    dt: f64,
) -> Result<Vec<DMatrix<Complex64>>> {
    if !x0.is_square() {
        return Err(Error::InvalidDimension("block must be square".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let g = Compiled::new(x0.nrows(), left, right, jumps)?;
    let mut rk = Rk4::new(x0.nrows());
    let mut x = x0.clone();
    let mut t = t0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        if !(target >= t) {
            return Err(Error::InvalidTime { t: target, t0: t });
        }
        rk.run(&g, &mut x, t, target, dt)?;
        t = target;
        out.push(x.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{annihilation, number, pauli, StateVector};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn trivial_dynamics_leaves_state_unchanged() {
        let rho0 = DensityOperator::pure(&StateVector::fock(2, 6).unwrap());
        let spec = LindbladSpec::new(vec![], vec![]).unwrap();
        let rho = evolve_lindblad(&rho0, &spec, (0.0, 1.0), 0.1).unwrap();
        assert_eq!(rho, rho0);
    }

    #[test]
    fn amplitude_damping_closed_form() {
        let d = 5;
        let kappa = 2.0;
        let rho0 = DensityOperator::pure(&StateVector::fock(1, d).unwrap());
        let spec = LindbladSpec::new(
            vec![],
            vec![JumpOperator {
                operator: annihilation(d).unwrap(),
                rate: kappa,
            }],
        )
        .unwrap();
        let t = 0.5 / kappa;
        let rho = evolve_lindblad(&rho0, &spec, (0.0, t), 1e-3).unwrap();
        let n = rho.expectation(&number(d).unwrap()).unwrap().re;
        assert!((n - (-0.5f64).exp()).abs() < 1e-6, "{n}");
    }

    #[test]
    fn heating_channels_raise_occupation_at_rate() {
        let d = 30;
        let a = annihilation(d).unwrap();
        let rate = 300.0;
        let spec = LindbladSpec::new(
            vec![],
            vec![
                JumpOperator {
                    operator: a.clone(),
                    rate,
                },
                JumpOperator {
                    operator: a.adjoint(),
                    rate,
                },
            ],
        )
        .unwrap();
        let rho0 = DensityOperator::vacuum(d).unwrap();
        let t = 1e-3;
        let rho = evolve_lindblad(&rho0, &spec, (0.0, t), 1e-5).unwrap();
        let n = rho.expectation(&number(d).unwrap()).unwrap().re;
        assert!((n - rate * t).abs() < 1e-9, "{n}");
    }

    #[test]
    fn spin_dependent_force_reads_vacuum_characteristic_function() {
        let d = 40;
        let oe = 2.0 * std::f64::consts::PI * 4.7e3;
        let j0 = c(0.0, -oe);
        let a = annihilation(d).unwrap();
        let force = a.adjoint().scale(j0 * 0.5).add(&a.scale(j0.conj() * 0.5)).unwrap();
        let h = force.with_qubit(pauli::Z).unwrap();
        let spec = LindbladSpec::new(vec![HamiltonianTerm::constant(h.clone())], vec![]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let rho0 = DensityOperator::vacuum(d)
            .unwrap()
            .with_qubit([c(s, 0.0), c(s, 0.0)])
            .unwrap();
        let t = 1.0 / oe;
        let dt = max_stable_step(spec.hamiltonian(), 0.0, t);
        let rho = evolve_lindblad(&rho0, &spec, (0.0, t), dt).unwrap();
        let b = rho.bloch().unwrap();
        assert!((b[0] - (-0.5f64).exp()).abs() < 1e-4, "{b:?}");
        assert!(b[1].abs() < 1e-4);
    }

    #[test]
    fn coarse_step_is_rejected() {
        let d = 10;
        let a = annihilation(d).unwrap();
        let h = a.add(&a.adjoint()).unwrap();
        let spec = LindbladSpec::new(vec![HamiltonianTerm::constant(h)], vec![]).unwrap();
        let rho0 = DensityOperator::vacuum(d).unwrap();
        let err = evolve_lindblad(&rho0, &spec, (0.0, 1.0), 0.5).unwrap_err();
        assert!(matches!(err, Error::InvalidStep { .. }));
    }

    #[test]
    fn negative_rate_is_rejected() {
        let a = annihilation(4).unwrap();
        assert!(LindbladSpec::new(
            vec![],
            vec![JumpOperator {
                operator: a,
                rate: -1.0
            }]
        )
        .is_err());
    }

    #[test]
    fn envelope_interpolates_trapezoid() {
        let e = Envelope::trapezoid(0.0, 1.0, 2.0, 4.0).unwrap();
        assert_eq!(e.value(-1.0), 0.0);
        assert_eq!(e.value(0.5), 2.0);
        assert_eq!(e.value(2.0), 4.0);
        assert_eq!(e.value(3.5), 2.0);
        assert_eq!(e.value(9.0), 0.0);
        assert_eq!(e.max_abs(0.0, 0.5), 2.0);
        assert_eq!(e.breakpoints(0.0, 4.0), vec![1.0, 3.0]);
    }

    #[test]
    fn coherence_with_equal_sides_matches_full_evolution() {
        let d = 8;
        let a = annihilation(d).unwrap();
        let h = a.add(&a.adjoint()).unwrap();
        let terms = vec![HamiltonianTerm::constant(h)];
        let jumps = vec![JumpOperator {
            operator: a,
            rate: 0.3,
        }];
        let rho0 = DensityOperator::pure(&StateVector::fock(1, d).unwrap());
        let spec = LindbladSpec::new(terms.clone(), jumps.clone()).unwrap();
        let full = evolve_lindblad(&rho0, &spec, (0.0, 0.4), 1e-3).unwrap();
        let snaps = evolve_coherence(rho0.matrix(), &terms, &terms, &jumps, 0.0, &[0.2, 0.4], 1e-3).unwrap();
        assert_eq!(snaps.len(), 2);
        assert!((&snaps[1] - full.matrix()).cmax() < 1e-12);
    }
}

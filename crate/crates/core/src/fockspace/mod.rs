//! Truncated Fock-space linear algebra for a single oscillator mode, optionally
//! paired with a qubit (`index = qubit * d + n`).

mod banded;
mod expm;
mod lindblad;

use std::ops::Mul;

use nalgebra::{storage::RawStorage, DMatrix, DVector, Dim, Matrix};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub use expm::SpectralGenerator;
pub use lindblad::{
    evolve_coherence, evolve_lindblad, max_stable_step, Envelope, HamiltonianTerm, JumpOperator,
    LindbladSpec, STEP_GUARD, TRACE_TOLERANCE,
};

pub const DEFAULT_CUTOFF: usize = 100;

/// Largest entry modulus of a complex matrix.
pub trait MaxAbs {
    fn cmax(&self) -> f64;
}

impl<R: Dim, C: Dim, S: RawStorage<Complex64, R, C>> MaxAbs for Matrix<Complex64, R, C, S> {
    fn cmax(&self) -> f64 {
        self.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Population allowed in the top 10% of Fock levels before a state is flagged.
pub const TAIL_TOLERANCE: f64 = 1e-8;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

/// Machine-readable truncation flag attached to results that may be cutoff-limited.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationWarning {
    /// Population (or proxy) found in the guarded top levels.
    pub tail_population: f64,
    pub cutoff: usize,
}

/// A value plus an optional machine-readable warning.
#[derive(Debug, Clone)]
pub struct Checked<T, W = TruncationWarning> {
    pub value: T,
    pub warning: Option<W>,
}

impl<T, W> Checked<T, W> {
    pub fn ok(value: T) -> Self {
        Self {
            value,
            warning: None,
        }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Checked<U, W> {
        Checked {
            value: f(self.value),
            warning: self.warning,
        }
    }
}

/// Number of top levels covered by the truncation guard (10%, at least one).
pub fn guard_levels(cutoff: usize) -> usize {
    cutoff.div_ceil(10).max(1)
}

fn tail_of(pops: impl Iterator<Item = f64>, cutoff: usize) -> f64 {
    let start = cutoff - guard_levels(cutoff);
    pops.enumerate()
        .filter(|(n, _)| n % cutoff >= start)
        .map(|(_, p)| p)
        .sum()
}

fn tail_warning(tail: f64, cutoff: usize) -> Option<TruncationWarning> {
    (tail > TAIL_TOLERANCE).then_some(TruncationWarning {
        tail_population: tail,
        cutoff,
    })
}

fn check_cutoff(cutoff: usize) -> Result<()> {
    if cutoff < 2 {
        return Err(Error::InvalidDimension(format!(
            "cutoff must be at least 2, got {cutoff}"
        )));
    }
    Ok(())
}

fn check_dim(cutoff: usize, dim: usize) -> Result<()> {
    if dim != cutoff && dim != 2 * cutoff {
        return Err(Error::InvalidDimension(format!(
            "matrix dimension {dim} is neither d = {cutoff} nor 2d"
        )));
    }
    Ok(())
}

/// Dense operator on the oscillator (d×d) or qubit⊗oscillator (2d×2d) space.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedOperator {
    cutoff: usize,
    matrix: DMatrix<Complex64>,
}

impl TruncatedOperator {
    pub fn from_matrix(cutoff: usize, matrix: DMatrix<Complex64>) -> Result<Self> {
        check_cutoff(cutoff)?;
        if !matrix.is_square() {
            return Err(Error::InvalidDimension("operator must be square".into()));
        }
        check_dim(cutoff, matrix.nrows())?;
        Ok(Self { cutoff, matrix })
    }

    pub fn identity(cutoff: usize) -> Result<Self> {
        check_cutoff(cutoff)?;
        Ok(Self {
            cutoff,
            matrix: DMatrix::identity(cutoff, cutoff),
        })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_joint(&self) -> bool {
        self.dim() == 2 * self.cutoff
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self {
            cutoff: self.cutoff,
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            cutoff: self.cutoff,
            matrix: &self.matrix * s,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::InvalidDimension(format!(
                "cannot add {}x{} and {}x{} operators",
                self.dim(),
                self.dim(),
                other.dim(),
                other.dim()
            )));
        }
        Ok(Self {
            cutoff: self.cutoff,
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut out = DMatrix::identity(self.dim(), self.dim());
        for _ in 0..n {
            out = &out * &self.matrix;
        }
        Self {
            cutoff: self.cutoff,
            matrix: out,
        }
    }

    /// `q ⊗ self` on the qubit⊗oscillator space; `self` must act on the oscillator.
    pub fn with_qubit(&self, q: [[Complex64; 2]; 2]) -> Result<Self> {
        if self.is_joint() {
            return Err(Error::InvalidDimension(
                "operator already acts on the joint space".into(),
            ));
        }
        let d = self.cutoff;
        let mut m = DMatrix::zeros(2 * d, 2 * d);
        for (a, row) in q.iter().enumerate() {
            for (b, qab) in row.iter().enumerate() {
                if *qab != C0 {
                    m.view_mut((a * d, b * d), (d, d))
                        .copy_from(&(&self.matrix * *qab));
                }
            }
        }
        Ok(Self {
            cutoff: d,
            matrix: m,
        })
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.amplitudes.len() != self.dim() {
            return Err(Error::InvalidDimension(format!(
                "operator dimension {} does not match state dimension {}",
                self.dim(),
                psi.amplitudes.len()
            )));
        }
        Ok(StateVector {
            cutoff: self.cutoff,
            amplitudes: &self.matrix * &psi.amplitudes,
        })
    }

    /// Max-entry deviation of `U†U` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let d = self.dim();
        (self.matrix.adjoint() * &self.matrix - DMatrix::<Complex64>::identity(d, d)).cmax()
    }
}

impl Mul for &TruncatedOperator {
    type Output = TruncatedOperator;

    fn mul(self, rhs: &TruncatedOperator) -> TruncatedOperator {
        assert_eq!(self.dim(), rhs.dim(), "operator dimension mismatch");
        TruncatedOperator {
            cutoff: self.cutoff,
            matrix: &self.matrix * &rhs.matrix,
        }
    }
}

/// Pauli matrices in the `|0⟩, |1⟩` qubit basis with `σ_z |0⟩ = |0⟩`.
pub mod pauli {
    use super::{C0, C1};
    use num_complex::Complex64;

    const I: Complex64 = Complex64::new(0.0, 1.0);
    pub const ID: [[Complex64; 2]; 2] = [[C1, C0], [C0, C1]];
    pub const X: [[Complex64; 2]; 2] = [[C0, C1], [C1, C0]];
    pub const Y: [[Complex64; 2]; 2] = [[C0, Complex64::new(0.0, -1.0)], [I, C0]];
    pub const Z: [[Complex64; 2]; 2] = [[C1, C0], [C0, Complex64::new(-1.0, 0.0)]];
}

/// Pure state, oscillator-only (length d) or joint (length 2d).
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    cutoff: usize,
    amplitudes: DVector<Complex64>,
}

impl StateVector {
    pub fn from_amplitudes(cutoff: usize, amplitudes: DVector<Complex64>) -> Result<Self> {
        check_cutoff(cutoff)?;
        check_dim(cutoff, amplitudes.len())?;
        Ok(Self { cutoff, amplitudes })
    }

    pub fn fock(n: usize, cutoff: usize) -> Result<Self> {
        check_cutoff(cutoff)?;
        if n >= cutoff {
            return Err(Error::InvalidDimension(format!(
                "Fock level {n} outside cutoff {cutoff}"
            )));
        }
        let mut amplitudes = DVector::zeros(cutoff);
        amplitudes[n] = C1;
        Ok(Self { cutoff, amplitudes })
    }

    pub fn vacuum(cutoff: usize) -> Result<Self> {
        Self::fock(0, cutoff)
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Population in the top 10% of Fock levels (summed over qubit branches).
    pub fn tail_population(&self) -> f64 {
        tail_of(self.populations().into_iter(), self.cutoff)
    }

    pub fn truncation_warning(&self) -> Option<TruncationWarning> {
        tail_warning(self.tail_population(), self.cutoff)
    }
}

/// Density operator, oscillator-only (d×d) or qubit⊗oscillator (2d×2d).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    cutoff: usize,
    matrix: DMatrix<Complex64>,
}

impl DensityOperator {
    pub const HERMITIAN_TOL: f64 = 1e-12;
    pub const TRACE_TOL: f64 = 1e-10;
    pub const EIGEN_TOL: f64 = 1e-10;

    /// Validated construction: Hermitian, unit trace, positive semidefinite.
    pub fn from_matrix(cutoff: usize, matrix: DMatrix<Complex64>) -> Result<Self> {
        let rho = Self::from_matrix_unchecked(cutoff, matrix)?;
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(cutoff: usize, matrix: DMatrix<Complex64>) -> Result<Self> {
        check_cutoff(cutoff)?;
        if !matrix.is_square() {
            return Err(Error::InvalidDimension(
                "density operator must be square".into(),
            ));
        }
        check_dim(cutoff, matrix.nrows())?;
        Ok(Self { cutoff, matrix })
    }

    pub fn pure(psi: &StateVector) -> Self {
        Self {
            cutoff: psi.cutoff,
            matrix: &psi.amplitudes * psi.amplitudes.adjoint(),
        }
    }

    pub fn vacuum(cutoff: usize) -> Result<Self> {
        Ok(Self::pure(&StateVector::vacuum(cutoff)?))
    }

    /// `|q⟩⟨q| ⊗ ρ_osc` for a normalized qubit state `q`.
    pub fn with_qubit(&self, q: [Complex64; 2]) -> Result<Self> {
        let qm = [
            [q[0] * q[0].conj(), q[0] * q[1].conj()],
            [q[1] * q[0].conj(), q[1] * q[1].conj()],
        ];
        let joint = TruncatedOperator {
            cutoff: self.cutoff,
            matrix: self.matrix.clone(),
        }
        .with_qubit(qm)?;
        Ok(Self {
            cutoff: self.cutoff,
            matrix: joint.matrix,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_joint(&self) -> bool {
        self.dim() == 2 * self.cutoff
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ |ρ_ij|² for Hermitian ρ
        self.matrix.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn expectation(&self, op: &TruncatedOperator) -> Result<Complex64> {
        if op.dim() != self.dim() {
            return Err(Error::InvalidDimension(format!(
                "operator dimension {} does not match state dimension {}",
                op.dim(),
                self.dim()
            )));
        }
        // Tr(ρ A) without forming the product
        Ok(self
            .matrix
            .iter()
            .zip(op.matrix.transpose().iter())
            .map(|(r, a)| r * a)
            .sum())
    }

    /// `U ρ U†`.
    pub fn conjugate(&self, u: &TruncatedOperator) -> Result<Self> {
        if u.dim() != self.dim() {
            return Err(Error::InvalidDimension(format!(
                "unitary dimension {} does not match state dimension {}",
                u.dim(),
                self.dim()
            )));
        }
        Ok(Self {
            cutoff: self.cutoff,
            matrix: &u.matrix * &self.matrix * u.matrix.adjoint(),
        })
    }

    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|v| v.re).collect()
    }

    pub fn tail_population(&self) -> f64 {
        tail_of(self.populations().into_iter(), self.cutoff)
    }

    pub fn truncation_warning(&self) -> Option<TruncationWarning> {
        tail_warning(self.tail_population(), self.cutoff)
    }

    /// Qubit reduced state (joint states only).
    pub fn qubit_reduced(&self) -> Result<[[Complex64; 2]; 2]> {
        if !self.is_joint() {
            return Err(Error::InvalidDimension("state has no qubit factor".into()));
        }
        let d = self.cutoff;
        let mut q = [[C0; 2]; 2];
        for (a, row) in q.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                *v = self.matrix.view((a * d, b * d), (d, d)).trace();
            }
        }
        Ok(q)
    }

    /// `(⟨σ_x⟩, ⟨σ_y⟩, ⟨σ_z⟩)` of the qubit.
    pub fn bloch(&self) -> Result<[f64; 3]> {
        let q = self.qubit_reduced()?;
        Ok([
            2.0 * q[0][1].re,
            -2.0 * q[0][1].im,
            (q[0][0] - q[1][1]).re,
        ])
    }

    pub fn validate(&self) -> Result<()> {
        let herm = (&self.matrix - self.matrix.adjoint()).cmax();
        if herm > Self::HERMITIAN_TOL {
            return Err(Error::InvalidParameter(format!(
                "density operator not Hermitian (deviation {herm:.3e})"
            )));
        }
        let tr = self.trace();
        if (tr - C1).norm() > Self::TRACE_TOL {
            return Err(Error::InvalidParameter(format!(
                "density operator trace {tr} differs from 1"
            )));
        }
        let h = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        let min = h
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min < -Self::EIGEN_TOL {
            return Err(Error::InvalidParameter(format!(
                "density operator has negative eigenvalue {min:.3e}"
            )));
        }
        Ok(())
    }
}

/// Ladder operator with `A|n⟩ = √n |n−1⟩`.
pub fn annihilation(cutoff: usize) -> Result<TruncatedOperator> {
    check_cutoff(cutoff)?;
    let mut m = DMatrix::zeros(cutoff, cutoff);
    for n in 1..cutoff {
        m[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    Ok(TruncatedOperator { cutoff, matrix: m })
}

pub fn creation(cutoff: usize) -> Result<TruncatedOperator> {
    Ok(annihilation(cutoff)?.adjoint())
}

pub fn number(cutoff: usize) -> Result<TruncatedOperator> {
    check_cutoff(cutoff)?;
    let diag = DVector::from_fn(cutoff, |n, _| Complex64::new(n as f64, 0.0));
    Ok(TruncatedOperator {
        cutoff,
        matrix: DMatrix::from_diagonal(&diag),
    })
}

/// Cached spectral form of `a† − a`; yields `D(ξ)` for any ξ at O(d³) without
/// a fresh eigendecomposition, via `D(ξ) = R(φ) D(|ξ|) R(−φ)`, `R(φ) = e^{iφ n}`.
#[derive(Debug, Clone)]
pub struct DisplacementFactory {
    cutoff: usize,
    generator: SpectralGenerator,
}

impl DisplacementFactory {
    pub fn new(cutoff: usize) -> Result<Self> {
        let a = annihilation(cutoff)?;
        let g = a.adjoint().matrix - a.matrix;
        Ok(Self {
            cutoff,
            generator: SpectralGenerator::new(&g),
        })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn generator(&self) -> &SpectralGenerator {
        &self.generator
    }

    pub fn operator(&self, xi: Complex64) -> Result<Checked<TruncatedOperator>> {
        if !xi.re.is_finite() || !xi.im.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite ξ = {xi}")));
        }
        let (s, phi) = xi.to_polar();
        let mut m = self.generator.exp(s);
        if phi != 0.0 {
            for j in 0..self.cutoff {
                for i in 0..self.cutoff {
                    m[(i, j)] *= Complex64::from_polar(1.0, phi * (i as f64 - j as f64));
                }
            }
        }
        let guard = self.cutoff as f64 / 10.0;
        let warning = (xi.norm_sqr() > guard).then_some(TruncationWarning {
            tail_population: xi.norm_sqr() / self.cutoff as f64,
            cutoff: self.cutoff,
        });
        Ok(Checked {
            value: TruncatedOperator {
                cutoff: self.cutoff,
                matrix: m,
            },
            warning,
        })
    }
}

/// `D(ξ) = exp(ξA† − ξ*A)`; warns when `|ξ|² > cutoff/10`.
pub fn displacement(xi: Complex64, cutoff: usize) -> Result<Checked<TruncatedOperator>> {
    DisplacementFactory::new(cutoff)?.operator(xi)
}

pub const SQUEEZE_ORDERS: &str = "2..=4";

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Anti-Hermitian generator `(ζ* Aⁿ − ζ A†ⁿ)/n!`.
pub fn squeeze_generator(n: usize, zeta: Complex64, cutoff: usize) -> Result<TruncatedOperator> {
    if !(2..=4).contains(&n) {
        return Err(Error::UnsupportedOrder(n, SQUEEZE_ORDERS));
    }
    let an = annihilation(cutoff)?.pow(n as u32);
    let g = (&an.matrix * zeta.conj() - an.matrix.adjoint() * zeta) * Complex64::new(1.0 / factorial(n), 0.0);
    Ok(TruncatedOperator { cutoff, matrix: g })
}

/// `S_n(ζ) = exp((ζ*Aⁿ − ζA†ⁿ)/n!)`; warns when `S_n|0⟩` populates the top levels.
pub fn generalized_squeeze(
    n: usize,
    zeta: Complex64,
    cutoff: usize,
) -> Result<Checked<TruncatedOperator>> {
    if !(2..=4).contains(&n) {
        return Err(Error::UnsupportedOrder(n, SQUEEZE_ORDERS));
    }
    if !zeta.norm().is_finite() || zeta.norm() > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "squeezing amplitude |ζ| = {} outside [0, 1]",
            zeta.norm()
        )));
    }
    let g = squeeze_generator(n, zeta, cutoff)?;
    let m = SpectralGenerator::new(&g.matrix).exp(1.0);
    let tail = tail_of(m.column(0).iter().map(|v| v.norm_sqr()), cutoff);
    Ok(Checked {
        value: TruncatedOperator { cutoff, matrix: m },
        warning: tail_warning(tail, cutoff),
    })
}

/// Geometric Bose-Einstein state with mean occupation `n_b`.
pub fn thermal_state(n_b: f64, cutoff: usize) -> Result<DensityOperator> {
    check_cutoff(cutoff)?;
    if !n_b.is_finite() || n_b < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "mean occupation must be finite and non-negative, got {n_b}"
        )));
    }
    let q = n_b / (1.0 + n_b);
    // population beyond the cutoff of the untruncated distribution
    let tail = q.powi(cutoff as i32);
    if tail > 1e-10 {
        return Err(Error::InvalidParameter(format!(
            "n_B = {n_b} leaves {tail:.3e} population above cutoff {cutoff}"
        )));
    }
    let mut pops: Vec<f64> = (0..cutoff).map(|n| q.powi(n as i32)).collect();
    let z: f64 = pops.iter().sum();
    pops.iter_mut().for_each(|p| *p /= z);
    let diag = DVector::from_iterator(cutoff, pops.into_iter().map(|p| Complex64::new(p, 0.0)));
    Ok(DensityOperator {
        cutoff,
        matrix: DMatrix::from_diagonal(&diag),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn annihilation_lowers_fock_states() {
        let a = annihilation(3).unwrap();
        let out = a.apply(&StateVector::fock(1, 3).unwrap()).unwrap();
        assert_eq!(out, StateVector::fock(0, 3).unwrap());
        let out = a.apply(&StateVector::vacuum(3).unwrap()).unwrap();
        assert!(out.norm_sqr() == 0.0);
        assert!(matches!(annihilation(1), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn number_operator_diagonal() {
        let a = annihilation(4).unwrap();
        let n = &a.adjoint() * &a;
        for k in 0..3 {
            assert!((n.matrix()[(k, k)] - c(k as f64, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn commutator_is_identity_below_top_level() {
        let d = 12;
        let a = annihilation(d).unwrap();
        let ad = a.adjoint();
        let comm = (&a * &ad).matrix().clone() - (&ad * &a).matrix();
        let id = DMatrix::<Complex64>::identity(d - 1, d - 1);
        assert!((comm.view((0, 0), (d - 1, d - 1)) - id).cmax() < 1e-14);
        assert!((comm[(d - 1, d - 1)] - c(1.0 - d as f64, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn displacement_examples() {
        let d0 = displacement(c(0.0, 0.0), 20).unwrap().value;
        assert!((d0.matrix() - DMatrix::<Complex64>::identity(20, 20)).cmax() < 1e-13);

        let d1 = displacement(c(1.0, 0.0), 100).unwrap();
        assert!(d1.warning.is_none());
        assert!((d1.value.matrix()[(0, 0)] - c((-0.5f64).exp(), 0.0)).norm() < 1e-12);

        let xi = c(0.7, 0.3);
        let f = DisplacementFactory::new(100).unwrap();
        let p = &f.operator(xi).unwrap().value * &f.operator(-xi).unwrap().value;
        assert!((p.matrix() - DMatrix::<Complex64>::identity(100, 100)).cmax() < 1e-10);
        assert!(f.operator(xi).unwrap().value.unitarity_error() < 1e-10);
    }

    #[test]
    fn displacement_phase_rotation_matches_direct_exponential() {
        let d = 30;
        let xi = c(-0.4, 0.9);
        let a = annihilation(d).unwrap();
        let g = a.adjoint().matrix() * xi - a.matrix() * xi.conj();
        let direct = SpectralGenerator::new(&g).exp(1.0);
        let cached = displacement(xi, d).unwrap().value;
        assert!((direct - cached.matrix()).cmax() < 1e-12);
    }

    #[test]
    fn displacement_warns_beyond_guard() {
        let w = displacement(c(2.0, 0.0), 20).unwrap().warning;
        assert!(w.is_some());
    }

    #[test]
    fn squeeze_identity_at_zero() {
        for n in 2..=4 {
            let s = generalized_squeeze(n, c(0.0, 0.0), 10).unwrap().value;
            assert!((s.matrix() - DMatrix::<Complex64>::identity(10, 10)).cmax() < 1e-13);
        }
        assert!(matches!(
            generalized_squeeze(5, c(0.1, 0.0), 10),
            Err(Error::UnsupportedOrder(5, _))
        ));
        assert!(matches!(
            generalized_squeeze(1, c(0.1, 0.0), 10),
            Err(Error::UnsupportedOrder(1, _))
        ));
    }

    #[test]
    fn squeeze_bogoliubov_relation() {
        let d = 100;
        let r: f64 = 0.25;
        let s = generalized_squeeze(2, c(r, 0.0), d).unwrap().value;
        let a = annihilation(d).unwrap();
        let lhs = &(&s.adjoint() * &a) * &s;
        let rhs = a.scale(c(r.cosh(), 0.0)).matrix() - a.adjoint().matrix() * c(r.sinh(), 0.0);
        // the relation is exact only where S|n⟩ stays clear of the cutoff
        let low = 2 * d / 5;
        let diff = (lhs.matrix() - rhs).view((0, 0), (low, low)).cmax();
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn trisqueezed_vacuum_populates_multiples_of_three() {
        let s = generalized_squeeze(3, c(0.25, 0.0), 100).unwrap();
        assert!(s.warning.is_none());
        let psi = s.value.apply(&StateVector::vacuum(100).unwrap()).unwrap();
        let pops = psi.populations();
        for (k, p) in pops.iter().enumerate() {
            if k % 3 != 0 {
                assert!(*p <= 1e-12, "level {k}: {p}");
            }
        }
        assert!(pops[3] > 1e-4);
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn squeeze_guard_flags_small_cutoff() {
        let s = generalized_squeeze(2, c(0.25, 0.0), 5).unwrap();
        assert!(s.warning.is_some());
    }

    #[test]
    fn thermal_examples() {
        let vac = thermal_state(0.0, 10).unwrap();
        assert_eq!(vac, DensityOperator::vacuum(10).unwrap());

        let rho = thermal_state(0.1, 100).unwrap();
        let n = rho.expectation(&number(100).unwrap()).unwrap();
        assert!((n.re - 0.1).abs() < 1e-8);

        let rho = thermal_state(0.3, 100).unwrap();
        assert!((rho.purity() - 1.0 / 1.6).abs() < 1e-6);
        rho.validate().unwrap();

        assert!(matches!(
            thermal_state(50.0, 100),
            Err(Error::InvalidParameter(_))
        ));
        assert!(thermal_state(-0.1, 100).is_err());
    }

    #[test]
    fn density_validation_rejects_bad_matrices() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![c(0.5, 0.0), c(0.6, 0.0)]));
        assert!(DensityOperator::from_matrix(2, m).is_err());
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.2, 0.0), c(-0.2, 0.0)]));
        assert!(DensityOperator::from_matrix(2, m).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.0), c(0.2, 0.0), c(0.5, 0.0)]);
        assert!(DensityOperator::from_matrix(2, m).is_err());
    }

    #[test]
    fn joint_state_bloch_vector() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let rho = DensityOperator::vacuum(4)
            .unwrap()
            .with_qubit([c(h, 0.0), c(0.0, h)])
            .unwrap();
        let b = rho.bloch().unwrap();
        assert!(b[0].abs() < 1e-15);
        assert!((b[1] - 1.0).abs() < 1e-15);
        assert!(b[2].abs() < 1e-15);
        let sy = TruncatedOperator::identity(4).unwrap().with_qubit(pauli::Y).unwrap();
        assert!((rho.expectation(&sy).unwrap().re - 1.0).abs() < 1e-15);
    }
}

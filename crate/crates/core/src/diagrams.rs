//! Truncated diagram expansions of the characteristic function of a squeezed
//! state, `χ̄ = χ₀^{1+2n_B}(ξ′) · (1 + Σ_j c_j f_j(ξ′, r, θ))` with
//! `ξ′ = ξ + c_h ξ²`, clipped to the physical range.

use num_complex::Complex64;

use crate::charfunc::{chi_squeezed_exact, chi_thermal_squeezed_exact, ChiEvaluator, SqueezeSpec};
use crate::error::{Error, Result};
use crate::fockspace::{DensityOperator, DEFAULT_CUTOFF};

pub const SUPPORTED_ORDERS: &str = "2 or 3";

fn check_order(order: usize) -> Result<()> {
    if order == 2 || order == 3 {
        Ok(())
    } else {
        Err(Error::UnsupportedOrder(order, SUPPORTED_ORDERS))
    }
}

/// Diagram coefficients: three for `n = 2`, four for `n = 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    order: usize,
    values: Vec<Complex64>,
    n_b: Option<f64>,
}

impl CoefficientVector {
    pub fn new(order: usize, values: Vec<Complex64>, n_b: Option<f64>) -> Result<Self> {
        check_order(order)?;
        let want = DiagramBasis::new(order)?.len();
        if values.len() != want {
            return Err(Error::InvalidParameter(format!(
                "order {order} needs {want} coefficients, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        if let Some(nb) = n_b {
            if !nb.is_finite() || nb < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "mean occupation must be finite and non-negative, got {nb}"
                )));
            }
        }
        Ok(Self { order, values, n_b })
    }

    pub fn real(order: usize, values: &[f64], n_b: Option<f64>) -> Result<Self> {
        Self::new(
            order,
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            n_b,
        )
    }

    pub fn zeros(order: usize) -> Result<Self> {
        let len = DiagramBasis::new(order)?.len();
        Self::new(order, vec![Complex64::new(0.0, 0.0); len], None)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn n_b(&self) -> Option<f64> {
        self.n_b
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        (1..=self.len()).map(|j| format!("c{j}")).collect()
    }
}

/// Diagram term functions `f_j(ξ, r, θ)`; all real-valued and vanishing at ξ = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiagramBasis {
    order: usize,
}

/// `Re{ξ² e^{−iθ}}` for n = 2, `Im{ξ³ e^{−iθ}}` for n = 3.
fn anisotropy(order: usize, xi: Complex64, phase: f64) -> f64 {
    let rot = Complex64::from_polar(1.0, -phase);
    match order {
        2 => (xi * xi * rot).re,
        _ => (xi * xi * xi * rot).im,
    }
}

/// Wirtinger derivative `∂/∂ξ` of [`anisotropy`].
fn anisotropy_grad(order: usize, xi: Complex64, phase: f64) -> Complex64 {
    let rot = Complex64::from_polar(1.0, -phase);
    match order {
        2 => xi * rot,
        _ => xi * xi * rot * Complex64::new(0.0, -1.5),
    }
}

impl DiagramBasis {
    pub fn new(order: usize) -> Result<Self> {
        check_order(order)?;
        Ok(Self { order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        if self.order == 2 {
            3
        } else {
            4
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Term `j` (zero-based).
    pub fn term(&self, j: usize, xi: Complex64, r: f64, phase: f64) -> f64 {
        let u = anisotropy(self.order, xi, phase);
        let m2 = xi.norm_sqr();
        match (self.order, j) {
            (_, 0) => r * u,
            (_, 1) => r * r * m2,
            (2, 2) => r * r * u * u,
            (3, 2) => r * r * m2 * m2,
            (3, 3) => r * r * u * u,
            _ => panic!("term index {j} out of range for order {}", self.order),
        }
    }

    pub fn eval(&self, xi: Complex64, r: f64, phase: f64) -> Vec<f64> {
        (0..self.len()).map(|j| self.term(j, xi, r, phase)).collect()
    }

    /// Wirtinger derivatives `∂f_j/∂ξ`; for real `f`, `df = 2 Re(∂f/∂ξ dξ)`.
    pub fn wirtinger(&self, xi: Complex64, r: f64, phase: f64) -> Vec<Complex64> {
        let u = anisotropy(self.order, xi, phase);
        let du = anisotropy_grad(self.order, xi, phase);
        let m2 = xi.norm_sqr();
        let r2 = r * r;
        let mut g = vec![du * r, xi.conj() * r2];
        if self.order == 2 {
            g.push(du * (2.0 * r2 * u));
        } else {
            g.push(xi.conj() * (2.0 * r2 * m2));
            g.push(du * (2.0 * r2 * u));
        }
        g
    }
}

pub fn basis_n2() -> DiagramBasis {
    DiagramBasis { order: 2 }
}

pub fn basis_n3() -> DiagramBasis {
    DiagramBasis { order: 3 }
}

/// Exact coefficients; thermal values exist for `n = 2` only.
pub fn truth_coefficients(order: usize, n_b: f64) -> Result<CoefficientVector> {
    check_order(order)?;
    if !n_b.is_finite() || n_b < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "mean occupation must be finite and non-negative, got {n_b}"
        )));
    }
    match order {
        2 => {
            let s = 1.0 + 2.0 * n_b;
            CoefficientVector::real(2, &[-s, -s, s * s / 2.0], Some(n_b))
        }
        _ if n_b > 0.0 => Err(Error::InvalidParameter(
            "thermal coefficients are only available for n = 2".into(),
        )),
        _ => CoefficientVector::new(
            3,
            vec![
                Complex64::new(0.0, -1.0 / 3.0),
                Complex64::new(-0.5, 0.0),
                Complex64::new(1.0 / 6.0, 0.0),
                Complex64::new(-1.0 / 18.0, 0.0),
            ],
            Some(0.0),
        ),
    }
}

/// Physical range of the model output: `[0, 1]` for the real part at n = 2
/// (the Gaussian χ is positive), `[−1, 1]` otherwise.
pub fn clip(order: usize, raw: Complex64) -> Complex64 {
    let lo = if order == 2 { 0.0 } else { -1.0 };
    Complex64::new(raw.re.clamp(lo, 1.0), raw.im.clamp(-1.0, 1.0))
}

pub fn is_clipped(order: usize, raw: Complex64) -> (bool, bool) {
    let c = clip(order, raw);
    (c.re != raw.re, c.im != raw.im)
}

/// Where the model is evaluated: `ξ`, squeezing `(r, θ)`, thermal occupation
/// and heating coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelInput {
    pub xi: Complex64,
    pub r: f64,
    pub phase: f64,
    pub n_b: f64,
    pub c_h: f64,
}

/// Pieces of the model at one point, shared by evaluation and Jacobians.
#[derive(Debug, Clone)]
pub struct ModelTerms {
    /// `χ₀^{1+2n_B}(ξ′)`.
    pub chi0: f64,
    /// `f_j(ξ′)`.
    pub f: Vec<f64>,
    /// `dχ₀/dc_h`.
    pub dchi0_dch: f64,
    /// `df_j/dc_h`.
    pub df_dch: Vec<f64>,
}

impl ModelTerms {
    pub fn new(basis: &DiagramBasis, p: &ModelInput) -> Self {
        let xi2 = p.xi * p.xi;
        let xp = p.xi + p.c_h * xi2;
        let s = 1.0 + 2.0 * p.n_b;
        let chi0 = (-0.5 * s * xp.norm_sqr()).exp();
        // dξ′/dc_h = ξ², so d g/dc_h = 2 Re(∂g/∂ξ′ · ξ²)
        let dchi0_dch = 2.0 * (xp.conj() * (-0.5 * s * chi0) * xi2).re;
        let df_dch = basis
            .wirtinger(xp, p.r, p.phase)
            .into_iter()
            .map(|g| 2.0 * (g * xi2).re)
            .collect();
        Self {
            chi0,
            f: basis.eval(xp, p.r, p.phase),
            dchi0_dch,
            df_dch,
        }
    }

    /// Unclipped `χ₀ (1 + Σ c_j f_j)`.
    pub fn raw(&self, theta: &[Complex64]) -> Complex64 {
        let s: Complex64 = theta.iter().zip(&self.f).map(|(c, f)| c * f).sum();
        (s + 1.0) * self.chi0
    }

    /// `d raw / d c_h` for the given coefficients.
    pub fn raw_dch(&self, theta: &[Complex64]) -> Complex64 {
        let s: Complex64 = theta.iter().zip(&self.f).map(|(c, f)| c * f).sum();
        let ds: Complex64 = theta.iter().zip(&self.df_dch).map(|(c, f)| c * f).sum();
        (s + 1.0) * self.dchi0_dch + ds * self.chi0
    }
}

/// Clipped truncated model `χ̄_θ`.
pub fn eval_model(
    theta: &CoefficientVector,
    xi: Complex64,
    r: f64,
    phase: f64,
    n_b: f64,
    c_h: f64,
) -> Complex64 {
    let basis = DiagramBasis { order: theta.order };
    let p = ModelInput {
        xi,
        r,
        phase,
        n_b,
        c_h,
    };
    clip(theta.order, ModelTerms::new(&basis, &p).raw(&theta.values))
}

/// Max over `xi_grid` of `|χ_exact − χ̄_{θ★}|` at zero temperature and θ = 0.
/// The oracle is the closed form for n = 2 and the Fock-space evaluator at the
/// default cutoff for n = 3.
pub fn series_residual(order: usize, r: f64, xi_grid: &[Complex64]) -> Result<f64> {
    check_order(order)?;
    let truth = truth_coefficients(order, 0.0)?;
    let spec = SqueezeSpec::new(order, r, 0.0)?;
    let model = |xi| eval_model(&truth, xi, r, 0.0, 0.0, 0.0);
    if order == 2 {
        return xi_grid.iter().try_fold(0.0f64, |acc, &xi| {
            Ok(acc.max((chi_squeezed_exact(xi, &spec)? - model(xi)).norm()))
        });
    }
    let ev = ChiEvaluator::new(&DensityOperator::vacuum(DEFAULT_CUTOFF)?, &spec)?;
    xi_grid.iter().try_fold(0.0f64, |acc, &xi| {
        Ok(acc.max((ev.evaluate(xi)?.value - model(xi)).norm()))
    })
}

/// Max over `xi_grid` of `|χ_thermal − χ̄_{θ★(n_B)}|` for n = 2.
pub fn thermal_series_residual(r: f64, n_b: f64, xi_grid: &[Complex64]) -> Result<f64> {
    let truth = truth_coefficients(2, n_b)?;
    let spec = SqueezeSpec::new(2, r, 0.0)?;
    xi_grid.iter().try_fold(0.0f64, |acc, &xi| {
        let exact = chi_thermal_squeezed_exact(xi, &spec, n_b)?;
        Ok(acc.max((exact - eval_model(&truth, xi, r, 0.0, n_b, 0.0)).norm()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn basis_n2_examples() {
        let b = basis_n2();
        assert_eq!(b.term(0, c(1.0, 0.0), 1.0, 0.0), 1.0);
        assert!((b.term(1, c(0.0, 1.0), 0.5, 0.0) - 0.25).abs() < 1e-15);
        let xi = Complex64::from_polar(1.0, FRAC_PI_4);
        assert!(b.term(2, xi, 1.0, 0.0).abs() < 1e-15);
    }

    #[test]
    fn basis_n3_examples() {
        let b = basis_n3();
        assert!(b.term(0, c(0.7, 0.0), 1.0, 0.0).abs() < 1e-15);
        assert!((b.term(2, c(1.0, 1.0), 1.0, 0.0) - 4.0).abs() < 1e-14);
        assert!((b.term(3, c(0.0, 1.0), 1.0, 0.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn truth_examples() {
        let t = truth_coefficients(2, 0.0).unwrap();
        assert_eq!(t.values(), &[c(-1.0, 0.0), c(-1.0, 0.0), c(0.5, 0.0)]);
        let t = truth_coefficients(3, 0.0).unwrap();
        assert_eq!(
            t.values(),
            &[c(0.0, -1.0 / 3.0), c(-0.5, 0.0), c(1.0 / 6.0, 0.0), c(-1.0 / 18.0, 0.0)]
        );
        let t = truth_coefficients(2, 0.1).unwrap();
        let want = [-1.2, -1.2, 0.72];
        for (v, w) in t.values().iter().zip(want) {
            assert!((v.re - w).abs() < 1e-14 && v.im == 0.0);
        }
        assert!(truth_coefficients(3, 0.1).is_err());
        assert!(truth_coefficients(4, 0.0).is_err());
    }

    #[test]
    fn model_examples() {
        let t = truth_coefficients(2, 0.0).unwrap();
        assert_eq!(eval_model(&t, c(0.0, 0.0), 0.3, 0.2, 0.1, 0.0), c(1.0, 0.0));
        let z = CoefficientVector::zeros(2).unwrap();
        let v = eval_model(&z, c(0.4, 0.3), 0.3, 0.0, 0.2, 0.0);
        assert!((v.re - (-1.4 * 0.25 / 2.0f64).exp()).abs() < 1e-15);

        let v = eval_model(&t, c(0.1, 0.0), 0.1, 0.0, 0.0, 0.0);
        let want = (1.0 - 0.1 * 0.01 - 0.01 * 0.01 + 0.5 * 0.01 * 0.0001) * (-0.005f64).exp();
        assert!((v.re - want).abs() < 1e-15);
    }

    #[test]
    fn heated_model_substitutes_xi() {
        let t = truth_coefficients(2, 0.1).unwrap();
        let xi = c(0.8, 0.0);
        let ch = 0.05;
        let direct = eval_model(&t, xi + ch * xi * xi, 0.2, 0.0, 0.1, 0.0);
        assert_eq!(eval_model(&t, xi, 0.2, 0.0, 0.1, ch), direct);
    }

    #[test]
    fn heating_derivatives_match_finite_differences() {
        for order in [2, 3] {
            let basis = DiagramBasis::new(order).unwrap();
            let theta: Vec<Complex64> = (0..basis.len())
                .map(|j| c(0.3 - 0.2 * j as f64, 0.1 * j as f64))
                .collect();
            let p = ModelInput {
                xi: c(0.9, -0.4),
                r: 0.3,
                phase: 0.4,
                n_b: 0.1,
                c_h: 0.03,
            };
            let h = 1e-6;
            let at = |ch: f64| ModelTerms::new(&basis, &ModelInput { c_h: ch, ..p }).raw(&theta);
            let fd = (at(p.c_h + h) - at(p.c_h - h)) / (2.0 * h);
            let an = ModelTerms::new(&basis, &p).raw_dch(&theta);
            assert!((fd - an).norm() < 1e-8, "order {order}: {fd} vs {an}");
        }
    }

    #[test]
    fn clipping_bounds() {
        assert_eq!(clip(2, c(1.3, -2.0)), c(1.0, -1.0));
        assert_eq!(clip(2, c(-0.2, 0.5)), c(0.0, 0.5));
        assert_eq!(clip(3, c(-1.5, 1.5)), c(-1.0, 1.0));
        assert_eq!(is_clipped(3, c(0.5, 1.5)), (false, true));
    }

    #[test]
    fn series_residual_examples() {
        let grid: Vec<Complex64> = (0..=6)
            .flat_map(|i| (0..=6).map(move |j| c(-0.3 + 0.1 * i as f64, -0.3 + 0.1 * j as f64)))
            .filter(|xi| xi.norm() <= 0.3 + 1e-12)
            .collect();
        assert!(series_residual(2, 0.0, &grid).unwrap() < 1e-12);
        assert!(series_residual(2, 0.05, &grid).unwrap() <= 1e-3);
        assert!(series_residual(3, 0.05, &grid).unwrap() <= 2e-3);
        assert!(thermal_series_residual(0.05, 0.3, &grid).unwrap() <= 5e-3);
    }
}

//! Recovery of diagram coefficients from Ramsey shot data.
//!
//! Each basis is an independent real-parameter block: for n = 2 only σ_x is
//! measured and the parameters are the (real) coefficients, plus `c_h` for the
//! heated model; for n = 3 the σ_x block carries `Re c_j` and the σ_y block
//! carries `Im c_j`. Costs, gradients and Fisher matrices are sums over
//! blocks, so the n = 3 fit separates exactly.

mod analysis;
mod report;
mod solve;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagrams::{truth_coefficients, CoefficientVector, DiagramBasis, ModelInput, ModelTerms};
use crate::error::{Error, Result};
use crate::fsio::fixed_sig;
use crate::sampler::{Basis, MeasurementPoint, ShotRecord};

pub use analysis::{
    extrapolation_weights, rmse_sweep, zero_noise_extrapolate, SweepCell, SweepOptions, SweepResult, SystematicMethod,
};
pub use report::{CoefficientRow, Diagnostics, EstimationReport, ReportMetadata, REPORT_HEADER};
pub use solve::{fit_joint, fit_thermal, fit_with_heating, minimize, FitProblem, SolverOptions};

/// Floor on model probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    #[default]
    Ml,
    Ls,
}

/// Which truncated model is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub order: usize,
    /// Occupation in the `χ₀^{1+2n_B}` factor, held fixed during the fit.
    pub n_b: f64,
    /// Adds `c_h` through `ξ → ξ + c_h ξ²` (n = 2 only).
    pub heating: bool,
}

impl ModelSpec {
    pub fn new(order: usize, n_b: f64, heating: bool) -> Result<Self> {
        DiagramBasis::new(order)?;
        if !(n_b >= 0.0) || !n_b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "model n_B must be non-negative, got {n_b}"
            )));
        }
        if heating && order != 2 {
            return Err(Error::InvalidParameter(
                "the heated model is defined for n = 2 only".into(),
            ));
        }
        if n_b > 0.0 && order != 2 {
            return Err(Error::InvalidParameter(
                "thermal models are defined for n = 2 only".into(),
            ));
        }
        Ok(Self { order, n_b, heating })
    }

    pub fn zero_temperature(order: usize) -> Self {
        Self {
            order,
            n_b: 0.0,
            heating: false,
        }
    }

    pub fn basis(&self) -> DiagramBasis {
        DiagramBasis::new(self.order).expect("validated order")
    }

    pub fn n_coefficients(&self) -> usize {
        self.basis().len()
    }

    pub fn bases(&self) -> &'static [Basis] {
        Basis::for_order(self.order)
    }

    /// Parameters of one basis block.
    pub fn block_len(&self, basis: Basis) -> usize {
        self.n_coefficients() + usize::from(self.heating && basis == Basis::X)
    }

    pub fn n_params(&self) -> usize {
        self.bases().iter().map(|b| self.block_len(*b)).sum()
    }

    pub fn param_names(&self) -> Vec<String> {
        let k = self.n_coefficients();
        let mut names = Vec::new();
        if self.order == 2 {
            names.extend((1..=k).map(|j| format!("c{j}")));
        } else {
            names.extend((1..=k).map(|j| format!("re_c{j}")));
            names.extend((1..=k).map(|j| format!("im_c{j}")));
        }
        if self.heating {
            names.push("c_h".into());
        }
        names
    }

    /// Flat real parameter vector for `theta` (and `c_h` when heated).
    pub fn params_from(&self, theta: &CoefficientVector, c_h: f64) -> Result<Vec<f64>> {
        if theta.order() != self.order {
            return Err(Error::InvalidParameter(format!(
                "coefficients of order {} for a model of order {}",
                theta.order(),
                self.order
            )));
        }
        let mut p: Vec<f64> = theta.values().iter().map(|c| c.re).collect();
        if self.order == 3 {
            p.extend(theta.values().iter().map(|c| c.im));
        }
        if self.heating {
            p.push(c_h);
        }
        Ok(p)
    }

    /// Coefficients and `c_h` from a flat parameter vector.
    pub fn coefficients(&self, params: &[f64]) -> (CoefficientVector, f64) {
        let k = self.n_coefficients();
        let values = (0..k)
            .map(|j| {
                let im = if self.order == 3 { params[k + j] } else { 0.0 };
                Complex64::new(params[j], im)
            })
            .collect();
        let c_h = if self.heating { params[self.n_params() - 1] } else { 0.0 };
        let theta = CoefficientVector::new(self.order, values, Some(self.n_b))
            .expect("finite parameters of the right length");
        (theta, c_h)
    }

    /// Indices of the flat vector owned by the block of `basis`.
    pub fn block_indices(&self, basis: Basis) -> Vec<usize> {
        let k = self.n_coefficients();
        match (self.order, basis) {
            (2, _) => (0..self.n_params()).collect(),
            (_, Basis::X) => (0..k).collect(),
            (_, Basis::Y) => (k..2 * k).collect(),
        }
    }

    /// Exact coefficients for this model (`c_h = 0`).
    pub fn truth_params(&self) -> Result<Vec<f64>> {
        self.params_from(&truth_coefficients(self.order, self.n_b)?, 0.0)
    }
}

/// Measured (or exact) `+1` frequency at one point and basis, with its weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub point: MeasurementPoint,
    pub basis: Basis,
    pub shots: f64,
    pub freq: f64,
}

impl Observation {
    pub fn from_record(rec: &ShotRecord) -> Self {
        Self {
            point: rec.point,
            basis: rec.basis,
            shots: rec.shots as f64,
            freq: rec.frequency(),
        }
    }

    pub fn from_records(records: &[ShotRecord]) -> Vec<Self> {
        records.iter().map(Self::from_record).collect()
    }
}

/// Infinite-shot observations: frequencies equal the exact probabilities from
/// `chi`, weighted by the shot allocation.
pub fn exact_observations(
    grid: &[MeasurementPoint],
    chi: &[Complex64],
    order: usize,
    shots: &[u64],
) -> Result<Vec<Observation>> {
    let bases = Basis::for_order(order);
    if chi.len() != grid.len() || shots.len() != grid.len() * bases.len() {
        return Err(Error::InvalidInput(
            "grid, χ values and shot allocation lengths disagree".into(),
        ));
    }
    let mut out = Vec::with_capacity(shots.len());
    let mut k = 0;
    for (p, c) in grid.iter().zip(chi) {
        let (px, py) = crate::sampler::born_probabilities(*c)?;
        for &b in bases {
            out.push(Observation {
                point: *p,
                basis: b,
                shots: shots[k] as f64,
                freq: if b == Basis::X { px } else { py },
            });
            k += 1;
        }
    }
    Ok(out)
}

/// Model `+1` probability and its gradient with respect to one block's
/// parameters. Saturated (clipped) points get a zero gradient.
pub(crate) struct BlockModel<'a> {
    spec: ModelSpec,
    basis: Basis,
    basis_fns: DiagramBasis,
    obs: &'a [Observation],
    cached: Option<Vec<ModelTerms>>,
}

impl<'a> BlockModel<'a> {
    pub fn new(spec: ModelSpec, basis: Basis, obs: &'a [Observation]) -> Self {
        let basis_fns = spec.basis();
        let cached = (!spec.heating).then(|| {
            obs.iter()
                .map(|o| ModelTerms::new(&basis_fns, &Self::input(&spec, o, 0.0)))
                .collect()
        });
        Self {
            spec,
            basis,
            basis_fns,
            obs,
            cached,
        }
    }

    fn input(spec: &ModelSpec, o: &Observation, c_h: f64) -> ModelInput {
        ModelInput {
            xi: o.point.xi,
            r: o.point.r,
            phase: o.point.theta,
            n_b: spec.n_b,
            c_h,
        }
    }

    pub fn len(&self) -> usize {
        self.spec.block_len(self.basis)
    }

    pub fn observations(&self) -> &[Observation] {
        self.obs
    }

    /// `p̄_k` and `∂p̄_k/∂a` for observation `k` at block parameters `a`.
    pub fn prob(&self, a: &[f64], k: usize, grad: &mut [f64]) -> f64 {
        let nc = self.basis_fns.len();
        let c_h = if self.spec.heating { a[nc] } else { 0.0 };
        let owned;
        let terms = match &self.cached {
            Some(t) => &t[k],
            None => {
                owned = ModelTerms::new(&self.basis_fns, &Self::input(&self.spec, &self.obs[k], c_h));
                &owned
            }
        };
        let offset = if self.basis == Basis::X { 1.0 } else { 0.0 };
        let s: f64 = a[..nc].iter().zip(&terms.f).map(|(c, f)| c * f).sum();
        let raw = terms.chi0 * (offset + s);
        let lo = if self.spec.order == 2 && self.basis == Basis::X { 0.0 } else { -1.0 };
        let clipped = raw.clamp(lo, 1.0);
        if clipped != raw {
            grad.iter_mut().for_each(|g| *g = 0.0);
        } else {
            for (g, f) in grad.iter_mut().zip(&terms.f) {
                *g = 0.5 * terms.chi0 * f;
            }
            if self.spec.heating {
                let ds: f64 = a[..nc].iter().zip(&terms.df_dch).map(|(c, f)| c * f).sum();
                grad[nc] = 0.5 * (terms.dchi0_dch * (offset + s) + terms.chi0 * ds);
            }
        }
        0.5 * (1.0 + clipped)
    }
}

/// Cost, gradient and Gauss-Newton / Fisher-scoring matrix of one block.
pub(crate) struct Evaluation {
    pub cost: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

pub(crate) fn ls_sigma2(freq: f64, shots: f64) -> f64 {
    (freq * (1.0 - freq) / shots).max(1.0 / (4.0 * shots * shots))
}

pub(crate) fn evaluate_block(block: &BlockModel, a: &[f64], kind: CostKind, derivs: bool) -> Evaluation {
    let m = block.len();
    let mut cost = 0.0;
    let mut grad = DVector::zeros(m);
    let mut hess = DMatrix::zeros(m, m);
    let mut g = vec![0.0; m];
    for (k, o) in block.observations().iter().enumerate() {
        let p = block.prob(a, k, &mut g);
        match kind {
            CostKind::Ml => {
                let pc = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                cost -= o.shots * (o.freq * pc.ln() + (1.0 - o.freq) * (1.0 - pc).ln());
                if derivs && pc == p {
                    let w = -o.shots * (o.freq / pc - (1.0 - o.freq) / (1.0 - pc));
                    let h = o.shots / (pc * (1.0 - pc));
                    accumulate(&mut grad, &mut hess, &g, w, h);
                }
            }
            CostKind::Ls => {
                let s2 = ls_sigma2(o.freq, o.shots);
                let res = p - o.freq;
                cost += res * res / s2;
                if derivs {
                    accumulate(&mut grad, &mut hess, &g, 2.0 * res / s2, 2.0 / s2);
                }
            }
        }
    }
    Evaluation { cost, grad, hess }
}

fn accumulate(grad: &mut DVector<f64>, hess: &mut DMatrix<f64>, g: &[f64], w: f64, h: f64) {
    if g.iter().all(|v| *v == 0.0) {
        return;
    }
    let m = g.len();
    for i in 0..m {
        grad[i] += w * g[i];
        for j in 0..m {
            hess[(i, j)] += h * g[i] * g[j];
        }
    }
}

/// Splits observations by basis and checks coverage for the model.
pub(crate) fn split_by_basis(spec: &ModelSpec, obs: &[Observation]) -> Result<Vec<(Basis, Vec<Observation>)>> {
    if obs.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let mut out = Vec::new();
    for &b in spec.bases() {
        let part: Vec<Observation> = obs.iter().filter(|o| o.basis == b).copied().collect();
        if part.is_empty() {
            return Err(Error::InvalidInput(format!(
                "order {} needs {}-basis data",
                spec.order,
                b.as_str()
            )));
        }
        out.push((b, part));
    }
    let used: usize = out.iter().map(|(_, p)| p.len()).sum();
    if used != obs.len() {
        return Err(Error::InvalidInput(format!(
            "order {} uses only {:?} data",
            spec.order,
            spec.bases()
        )));
    }
    for o in obs {
        if !(o.shots > 0.0) || !(0.0..=1.0).contains(&o.freq) {
            return Err(Error::InvalidInput(format!(
                "observation at ξ = {} has shots {} and frequency {}",
                o.point.xi, o.shots, o.freq
            )));
        }
    }
    Ok(out)
}

/// `I = Σ_k N_k ∂p̄_k ∂p̄_kᵀ / (p̄_k(1 − p̄_k))` at `params` (flat vector).
/// Only the shots and points of `obs` are used.
pub fn fisher_information(spec: &ModelSpec, params: &[f64], obs: &[Observation]) -> Result<DMatrix<f64>> {
    let info = fisher_unchecked(spec, params, obs)?;
    check_rank(&info)?;
    Ok(info)
}

pub(crate) fn fisher_unchecked(spec: &ModelSpec, params: &[f64], obs: &[Observation]) -> Result<DMatrix<f64>> {
    if params.len() != spec.n_params() {
        return Err(Error::InvalidParameter(format!(
            "{} parameters for a model with {}",
            params.len(),
            spec.n_params()
        )));
    }
    let n = spec.n_params();
    let mut info = DMatrix::zeros(n, n);
    for (basis, part) in split_by_basis(spec, obs)? {
        let idx = spec.block_indices(basis);
        let a: Vec<f64> = idx.iter().map(|&i| params[i]).collect();
        let block = BlockModel::new(*spec, basis, &part);
        let mut g = vec![0.0; idx.len()];
        for (k, o) in part.iter().enumerate() {
            let p = block.prob(&a, k, &mut g);
            let pc = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            if pc != p {
                continue;
            }
            let h = o.shots / (pc * (1.0 - pc));
            for (i, &gi) in g.iter().enumerate() {
                for (j, &gj) in g.iter().enumerate() {
                    info[(idx[i], idx[j])] += h * gi * gj;
                }
            }
        }
    }
    Ok(info)
}

/// Fails with the unidentifiable direction when `I` is numerically singular.
pub(crate) fn check_rank(info: &DMatrix<f64>) -> Result<()> {
    let eig = info.clone().symmetric_eigen();
    let (imin, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty matrix");
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if !(lmin > 1e-12 * lmax) || lmax == 0.0 {
        return Err(Error::RankDeficient {
            eigenvalue: lmin,
            direction: eig.eigenvectors.column(imin).iter().copied().collect(),
        });
    }
    Ok(())
}

pub fn covariance(info: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_rank(info)?;
    let inv = info
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| info.clone().try_inverse())
        .ok_or_else(|| Error::RankDeficient {
            eigenvalue: 0.0,
            direction: vec![],
        })?;
    Ok((&inv + inv.transpose()) * 0.5)
}

/// `Δθ_sys = I⁻¹ F Δp` with `F_ik = N_k ∂_i p̄_k / (p̄_k(1 − p̄_k))` and
/// `Δp_k = p_exact,k − p̄_k(θ★)`; `exact` carries `p_exact` in `freq`.
pub fn systematic_bias(spec: &ModelSpec, theta_star: &[f64], exact: &[Observation]) -> Result<Vec<f64>> {
    let info = fisher_information(spec, theta_star, exact)?;
    let n = spec.n_params();
    let mut fdp = DVector::zeros(n);
    for (basis, part) in split_by_basis(spec, exact)? {
        let idx = spec.block_indices(basis);
        let a: Vec<f64> = idx.iter().map(|&i| theta_star[i]).collect();
        let block = BlockModel::new(*spec, basis, &part);
        let mut g = vec![0.0; idx.len()];
        for (k, o) in part.iter().enumerate() {
            let p = block.prob(&a, k, &mut g);
            let pc = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
            if pc != p {
                continue;
            }
            let w = o.shots * (o.freq - p) / (pc * (1.0 - pc));
            for (i, &gi) in g.iter().enumerate() {
                fdp[idx[i]] += w * gi;
            }
        }
    }
    let cov = covariance(&info)?;
    Ok((cov * fdp).iter().copied().collect())
}

/// Uniform lattice with an explicit start, step and point count on each axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl AxisRange {
    /// Inclusive linspace.
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.steps == 0 || !self.min.is_finite() || !self.max.is_finite() || self.max < self.min {
            return Err(Error::InvalidGrid(format!(
                "degenerate range [{}, {}] with {} steps",
                self.min, self.max, self.steps
            )));
        }
        if self.steps == 1 {
            if self.max != self.min {
                return Err(Error::InvalidGrid(
                    "a single-step range needs min = max".into(),
                ));
            }
            return Ok(vec![self.min]);
        }
        let h = (self.max - self.min) / (self.steps - 1) as f64;
        Ok((0..self.steps).map(|k| snap(self.min + h * k as f64)).collect())
    }
}

fn lattice_axis(max: f64, step: f64, name: &str) -> Result<Vec<f64>> {
    if !(step > 0.0) || !step.is_finite() || !max.is_finite() {
        return Err(Error::InvalidGrid(format!("{name} spacing must be positive, got {step}")));
    }
    if max < step * (1.0 - 1e-9) {
        return Err(Error::InvalidGrid(format!(
            "{name} maximum {max} is below its spacing {step}"
        )));
    }
    let n = (max / step + 1e-9).floor() as usize;
    Ok((1..=n).map(|k| snap(k as f64 * step)).collect())
}

// grid nodes are stored with 12 significant digits; snapping keeps written
// datasets bit-identical to the grid they came from
fn snap(x: f64) -> f64 {
    fixed_sig(x, 12).parse().unwrap_or(x)
}

/// Real-ξ lattice `(d_xi … xi_max) × (d_r … r_max)` at θ = 0, ξ-major.
pub fn build_grid(xi_max: f64, r_max: f64, d_xi: f64, d_r: f64, n_b: f64) -> Result<Vec<MeasurementPoint>> {
    let xs = lattice_axis(xi_max, d_xi, "ξ")?;
    let rs = lattice_axis(r_max, d_r, "r")?;
    let mut out = Vec::with_capacity(xs.len() * rs.len());
    for &x in &xs {
        for &r in &rs {
            out.push(MeasurementPoint::new(Complex64::new(x, 0.0), r, 0.0, n_b)?);
        }
    }
    Ok(out)
}

/// 3-D lattice over `(Re ξ, Im ξ, r)` at θ = 0.
pub fn build_grid_3d(re_xi: AxisRange, im_xi: AxisRange, r: AxisRange, n_b: f64) -> Result<Vec<MeasurementPoint>> {
    let (xs, ys, rs) = (re_xi.values()?, im_xi.values()?, r.values()?);
    let mut out = Vec::with_capacity(xs.len() * ys.len() * rs.len());
    for &x in &xs {
        for &y in &ys {
            for &rr in &rs {
                out.push(MeasurementPoint::new(Complex64::new(x, y), rr, 0.0, n_b)?);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::ShotPolicy;

    fn pt(x: f64, r: f64) -> MeasurementPoint {
        MeasurementPoint::new(Complex64::new(x, 0.0), r, 0.0, 0.0).unwrap()
    }

    #[test]
    fn grid_examples() {
        assert_eq!(build_grid(2.0, 0.78, 0.02, 0.02, 0.0).unwrap().len(), 3900);
        let one = build_grid(0.02, 0.02, 0.02, 0.02, 0.0).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(build_grid(1.46, 0.3, 0.02, 0.02, 0.1).unwrap().len(), 73 * 15);
        let g = build_grid_3d(
            AxisRange { min: 0.0, max: 1.7, steps: 10 },
            AxisRange { min: 0.0, max: 1.7, steps: 10 },
            AxisRange { min: 0.0, max: 0.5, steps: 3 },
            0.0,
        )
        .unwrap();
        assert_eq!(g.len(), 300);
        assert!(build_grid(0.01, 0.1, 0.02, 0.02, 0.0).is_err());
        assert!(build_grid(1.0, 0.1, 0.0, 0.02, 0.0).is_err());
        assert!(AxisRange { min: 1.0, max: 0.0, steps: 3 }.values().is_err());
    }

    #[test]
    fn ml_cost_examples() {
        let spec = ModelSpec::zero_temperature(2);
        // p̄ = 1/2 needs χ̄ = 0: large ξ with the free model
        let p = MeasurementPoint::new(Complex64::new(40.0, 0.0), 0.0, 0.0, 0.0).unwrap();
        let obs = [Observation { point: p, basis: Basis::X, shots: 100.0, freq: 0.6 }];
        let block = BlockModel::new(spec, Basis::X, &obs);
        let e = evaluate_block(&block, &[0.0; 3], CostKind::Ml, false);
        assert!((e.cost - 100.0 * 2f64.ln()).abs() < 1e-9);

        let obs = [Observation { point: pt(0.0, 0.1), basis: Basis::X, shots: 50.0, freq: 1.0 }];
        let block = BlockModel::new(spec, Basis::X, &obs);
        let e = evaluate_block(&block, &[-1.0, -1.0, 0.5], CostKind::Ml, false);
        assert!(e.cost.abs() < 1e-6);
    }

    #[test]
    fn ls_cost_examples() {
        let spec = ModelSpec::zero_temperature(2);
        let p = pt(0.9, 0.2);
        let theta = [-1.0, -1.0, 0.5];
        let obs0 = [Observation { point: p, basis: Basis::X, shots: 400.0, freq: 0.5 }];
        let b0 = BlockModel::new(spec, Basis::X, &obs0);
        let mut g = [0.0; 3];
        let pbar = b0.prob(&theta, 0, &mut g);
        let exact = [Observation { freq: pbar, ..obs0[0] }];
        let e = evaluate_block(&BlockModel::new(spec, Basis::X, &exact), &theta, CostKind::Ls, false);
        assert!(e.cost.abs() < 1e-20);

        // residual of exactly one σ̃
        let f = 0.8;
        let s = ls_sigma2(f, 400.0).sqrt();
        let obs = [Observation { point: p, basis: Basis::X, shots: 400.0, freq: f }];
        let block = BlockModel::new(spec, Basis::X, &obs);
        // choose c1 so that p̄ = f + σ̃
        let target = f + s;
        let mut g = [0.0; 3];
        let p0 = block.prob(&[0.0, 0.0, 0.0], 0, &mut g);
        let c1 = (target - p0) / g[0];
        let e = evaluate_block(&block, &[c1, 0.0, 0.0], CostKind::Ls, false);
        assert!((e.cost - 1.0).abs() < 1e-9, "{}", e.cost);
    }

    #[test]
    fn bernoulli_fisher_information() {
        // one point, scalar parameter: p = (1 + θ f)/2 ⇒ I = N (f/2)² / (p(1−p))
        let spec = ModelSpec::zero_temperature(2);
        let pnt = pt(0.5, 0.3);
        let obs = [Observation { point: pnt, basis: Basis::X, shots: 1000.0, freq: 0.5 }];
        let theta = [-1.0, -1.0, 0.5];
        let info = fisher_unchecked(&spec, &theta, &obs).unwrap();
        let block = BlockModel::new(spec, Basis::X, &obs);
        let mut g = [0.0; 3];
        let p = block.prob(&theta, 0, &mut g);
        let want = 1000.0 * g[0] * g[0] / (p * (1.0 - p));
        assert!((info[(0, 0)] - want).abs() < 1e-9 * want);
        // one point cannot identify three parameters
        assert!(matches!(
            fisher_information(&spec, &theta, &obs),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn fisher_scales_with_shots() {
        let spec = ModelSpec::zero_temperature(2);
        let grid = build_grid(1.0, 0.3, 0.1, 0.1, 0.0).unwrap();
        let chi = crate::sampler::chi_values(&grid, &crate::sampler::ChiSource::analytic(2)).unwrap();
        let n1 = crate::sampler::allocate_shots(&ShotPolicy::equal(30_000), &vec![0.5; grid.len()]).unwrap();
        let n2: Vec<u64> = n1.iter().map(|n| 2 * n).collect();
        let theta = spec.truth_params().unwrap();
        let i1 = fisher_information(&spec, &theta, &exact_observations(&grid, &chi, 2, &n1).unwrap()).unwrap();
        let i2 = fisher_information(&spec, &theta, &exact_observations(&grid, &chi, 2, &n2).unwrap()).unwrap();
        assert!((i2 - i1 * 2.0).iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn bias_vanishes_at_zero_squeezing() {
        // r = 0 rows carry no information on c_j; pair them with a tiny-r row set
        // where the model is exact to O(r³) and check the r = 0 contribution is nil
        let spec = ModelSpec::zero_temperature(2);
        let grid: Vec<MeasurementPoint> = (1..=20).map(|k| pt(0.1 * k as f64, 0.0)).collect();
        let chi = crate::sampler::chi_values(&grid, &crate::sampler::ChiSource::analytic(2)).unwrap();
        let obs = exact_observations(&grid, &chi, 2, &vec![1000; grid.len()]).unwrap();
        let theta = spec.truth_params().unwrap();
        let block = BlockModel::new(spec, Basis::X, &obs);
        let mut g = [0.0; 3];
        for (k, o) in obs.iter().enumerate() {
            let p = block.prob(&theta, k, &mut g);
            assert!((p - o.freq).abs() < 1e-15);
        }
    }

    #[test]
    fn param_layout_round_trip() {
        let spec = ModelSpec::new(3, 0.0, false).unwrap();
        let truth = truth_coefficients(3, 0.0).unwrap();
        let p = spec.params_from(&truth, 0.0).unwrap();
        assert_eq!(p.len(), 8);
        assert_eq!(spec.coefficients(&p).0.values(), truth.values());
        assert_eq!(spec.block_indices(Basis::Y), vec![4, 5, 6, 7]);
        let h = ModelSpec::new(2, 0.1, true).unwrap();
        assert_eq!(h.param_names(), vec!["c1", "c2", "c3", "c_h"]);
        assert!(ModelSpec::new(3, 0.0, true).is_err());
        assert!(ModelSpec::new(3, 0.1, false).is_err());
    }
}

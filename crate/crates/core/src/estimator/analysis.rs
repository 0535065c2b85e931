use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{coefficient_rows, rmse_of, Diagnostics, EstimationReport};
use super::solve::{minimize, FitProblem};
use super::{build_grid, covariance, exact_observations, fisher_information, systematic_bias, CostKind, ModelSpec};
use crate::error::{Error, Result};
use crate::sampler::{allocate_shots, chi_values, Basis, ChiSource, ShotPolicy};

/// How the systematic part of the rMSE is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystematicMethod {
    /// Fit the model to exact probabilities and take `θ_∞ − θ★`.
    #[default]
    InfiniteShot,
    /// First-order `I⁻¹ F Δp` at θ★.
    Linearized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub model: ModelSpec,
    pub xi_max: Vec<f64>,
    pub r_max: Vec<f64>,
    pub d_xi: f64,
    pub d_r: f64,
    pub total_shots: u64,
    pub cost: CostKind,
    pub systematic: SystematicMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub xi_max: f64,
    pub r_max: f64,
    pub n_points: usize,
    /// NaN when the cell could not be evaluated; see `note`.
    pub rmse: f64,
    pub bias: Vec<f64>,
    pub std: Vec<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn best(&self) -> Option<&SweepCell> {
        self.cells
            .iter()
            .filter(|c| c.rmse.is_finite())
            .min_by(|a, b| a.rmse.total_cmp(&b.rmse))
    }

    pub fn cell(&self, xi_max: f64, r_max: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| (c.xi_max - xi_max).abs() < 1e-9 && (c.r_max - r_max).abs() < 1e-9)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut out = String::from("xi_max,r_max,n_points,rmse,note\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                crate::fsio::fixed_sig(c.xi_max, 12),
                crate::fsio::fixed_sig(c.r_max, 12),
                c.n_points,
                crate::fsio::fixed_sig(c.rmse, 12),
                c.note.as_deref().unwrap_or("").replace(',', ";")
            ));
        }
        Ok(out.into_bytes())
    }
}

/// Asymptotic rMSE over a grid of `(ξ_max, r_max)` with `total_shots` split
/// equally; the statistical part is `tr I⁻¹` at the infinite-shot optimum
/// (or at θ★ for the linearized method). Data are exact for the model's n_B.
pub fn rmse_sweep(opts: &SweepOptions) -> Result<SweepResult> {
    if opts.xi_max.is_empty() || opts.r_max.is_empty() {
        return Err(Error::InvalidGrid("empty sweep axis".into()));
    }
    if opts.model.heating {
        return Err(Error::InvalidParameter("sweeps use the unheated model".into()));
    }
    let cells: Vec<(f64, f64)> = opts
        .xi_max
        .iter()
        .flat_map(|&x| opts.r_max.iter().map(move |&r| (x, r)))
        .collect();
    let cells = cells
        .into_par_iter()
        .map(|(x, r)| sweep_cell(opts, x, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { cells })
}

fn sweep_cell(opts: &SweepOptions, xi_max: f64, r_max: f64) -> Result<SweepCell> {
    let spec = opts.model;
    let grid = build_grid(xi_max, r_max, opts.d_xi, opts.d_r, spec.n_b)?;
    let chi = chi_values(&grid, &ChiSource::analytic(spec.order))?;
    let units = grid.len() * Basis::for_order(spec.order).len();
    let failed = |note: String| SweepCell {
        xi_max,
        r_max,
        n_points: grid.len(),
        rmse: f64::NAN,
        bias: vec![],
        std: vec![],
        note: Some(note),
    };
    let shots = match allocate_shots(&ShotPolicy::equal(opts.total_shots), &vec![0.5; units]) {
        Ok(s) => s,
        Err(e) => return Ok(failed(e.to_string())),
    };
    let obs = exact_observations(&grid, &chi, spec.order, &shots)?;
    let truth = spec.truth_params()?;
    let outcome = match opts.systematic {
        SystematicMethod::InfiniteShot => {
            let problem = FitProblem::new(spec, obs.clone(), opts.cost).with_initial(truth.clone());
            minimize(&problem).map(|rep| {
                let bias: Vec<f64> = rep.params.iter().zip(&truth).map(|(a, b)| a - b).collect();
                (bias, rep.covariance)
            })
        }
        SystematicMethod::Linearized => systematic_bias(&spec, &truth, &obs).and_then(|bias| {
            let cov = covariance(&fisher_information(&spec, &truth, &obs)?)?;
            Ok((bias, cov))
        }),
    };
    let (bias, cov) = match outcome {
        Ok(v) => v,
        Err(e) => return Ok(failed(e.to_string())),
    };
    let rows = coefficient_rows(&spec, &bias.iter().map(|_| 0.0).collect::<Vec<_>>(), &cov, Some(&bias));
    Ok(SweepCell {
        xi_max,
        r_max,
        n_points: grid.len(),
        rmse: rmse_of(&spec, &rows),
        std: cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect(),
        bias,
        note: None,
    })
}

/// Weights `w` with `Σ w_i y_i` the degree-`degree` polynomial fit of
/// `(n_B,i, y_i)` evaluated at `n_B = 0`.
pub fn extrapolation_weights(n_bs: &[f64], degree: usize) -> Result<Vec<f64>> {
    let m = n_bs.len();
    if m < degree + 1 {
        return Err(Error::InvalidInput(format!(
            "degree {degree} extrapolation needs at least {} points, got {m}",
            degree + 1
        )));
    }
    let mut sorted = n_bs.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[1] - w[0] < 1e-12) {
        return Err(Error::InvalidInput("extrapolation points must have distinct n_B".into()));
    }
    let v = DMatrix::from_fn(m, degree + 1, |i, j| n_bs[i].powi(j as i32));
    let vtv = v.transpose() * &v;
    let inv = vtv
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("singular extrapolation design".into()))?;
    let e0 = DVector::from_fn(degree + 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
    Ok((v * (inv * e0)).iter().copied().collect())
}

/// Polynomial zero-noise extrapolation of each parameter. Estimates at
/// different n_B are independent, so `Cov = Σ w_i² Cov_i`.
pub fn zero_noise_extrapolate(points: &[(f64, &EstimationReport)], degree: usize) -> Result<EstimationReport> {
    let first = points
        .first()
        .ok_or_else(|| Error::InvalidInput("no estimates to extrapolate".into()))?
        .1;
    if points
        .iter()
        .any(|(_, r)| r.model.order != first.model.order || r.model.heating != first.model.heating)
    {
        return Err(Error::InvalidInput("estimates come from different models".into()));
    }
    let n_bs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let w = extrapolation_weights(&n_bs, degree)?;
    let n = first.params.len();
    let mut params = vec![0.0; n];
    let mut cov = DMatrix::zeros(n, n);
    for (wi, (_, rep)) in w.iter().zip(points) {
        for (p, q) in params.iter_mut().zip(&rep.params) {
            *p += wi * q;
        }
        cov += &rep.covariance * (wi * wi);
    }
    let mut model = first.model;
    model.n_b = 0.0;
    Ok(EstimationReport {
        model,
        cost: first.cost,
        params,
        covariance: cov,
        bias_sys: None,
        diagnostics: Diagnostics {
            iterations: points.iter().map(|p| p.1.diagnostics.iterations).sum(),
            final_cost: f64::NAN,
            gradient_norm: f64::NAN,
            converged: points.iter().all(|p| p.1.diagnostics.converged),
            starts: points.len(),
        },
        n_points: points.iter().map(|p| p.1.n_points).sum(),
        total_shots: points.iter().map(|p| p.1.total_shots).sum(),
        xi_max: first.xi_max,
        r_max: first.r_max,
        data_n_b: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn richardson_weights() {
        let w = extrapolation_weights(&[0.1, 0.2, 0.3], 2).unwrap();
        for (a, b) in w.iter().zip([3.0, -3.0, 1.0]) {
            assert!((a - b).abs() < 1e-9, "{w:?}");
        }
        let lin = extrapolation_weights(&[0.1, 0.2], 1).unwrap();
        assert!((lin[0] - 2.0).abs() < 1e-9 && (lin[1] + 1.0).abs() < 1e-9);
        assert!(extrapolation_weights(&[0.1, 0.1, 0.2], 2).is_err());
        assert!(extrapolation_weights(&[0.1, 0.2], 2).is_err());
    }

    #[test]
    fn extrapolation_of_affine_data() {
        let w = extrapolation_weights(&[0.1, 0.2, 0.3], 2).unwrap();
        let y: f64 = w.iter().zip([0.1, 0.2, 0.3]).map(|(w, x)| w * (1.0 + 2.0 * x)).sum();
        assert!((y - 1.0).abs() < 1e-12);
    }
}

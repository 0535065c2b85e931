use nalgebra::{DMatrix, DVector};

use super::report::{Diagnostics, EstimationReport};
use super::{
    covariance, evaluate_block, fisher_unchecked, split_by_basis, BlockModel, CostKind, ModelSpec,
    Observation,
};
use crate::error::{Error, Result};
use crate::sampler::Basis;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Converged when `‖∇C‖ ≤ grad_tol · (1 + |C|)`.
    pub grad_tol: f64,
    /// Or when an accepted step changes `C` by less than this, relatively.
    pub rel_cost_tol: f64,
    /// Extra starts around θ★ when the first start does not converge.
    pub restarts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            grad_tol: 1e-8,
            rel_cost_tol: 1e-12,
            restarts: 4,
        }
    }
}

/// A fit request: model, data, cost and an optional start (θ₀ = 0 otherwise).
#[derive(Debug, Clone)]
pub struct FitProblem {
    pub model: ModelSpec,
    pub observations: Vec<Observation>,
    pub cost: CostKind,
    pub initial: Option<Vec<f64>>,
    pub options: SolverOptions,
}

impl FitProblem {
    pub fn new(model: ModelSpec, observations: Vec<Observation>, cost: CostKind) -> Self {
        Self {
            model,
            observations,
            cost,
            initial: None,
            options: SolverOptions::default(),
        }
    }

    pub fn with_initial(mut self, params: Vec<f64>) -> Self {
        self.initial = Some(params);
        self
    }
}

struct Run {
    a: Vec<f64>,
    cost: f64,
    grad_norm: f64,
    iterations: usize,
    converged: bool,
}

/// Levenberg-Marquardt on Fisher-scoring / Gauss-Newton curvature.
fn levenberg_marquardt(blocks: &[BlockModel], a0: &[f64], kind: CostKind, opts: &SolverOptions) -> Run {
    let eval = |a: &[f64], derivs: bool| {
        let m = a.len();
        let (mut cost, mut grad, mut hess) = (0.0, DVector::zeros(m), DMatrix::zeros(m, m));
        let mut off = 0;
        for b in blocks {
            let e = evaluate_block(b, &a[off..off + b.len()], kind, derivs);
            cost += e.cost;
            if derivs {
                grad.rows_mut(off, b.len()).copy_from(&e.grad);
                hess.view_mut((off, off), (b.len(), b.len())).copy_from(&e.hess);
            }
            off += b.len();
        }
        (cost, grad, hess)
    };
    let mut a = a0.to_vec();
    let (mut cost, mut grad, mut hess) = eval(&a, true);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        if grad.norm() <= opts.grad_tol * (1.0 + cost.abs()) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = false;
        while lambda < 1e16 {
            let mut h = hess.clone();
            for i in 0..h.nrows() {
                h[(i, i)] += lambda * hess[(i, i)].max(1e-12 * (1.0 + hess.diagonal().amax()));
            }
            let Some(chol) = h.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-&grad));
            let trial: Vec<f64> = a.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
            let (c_new, _, _) = eval(&trial, false);
            if c_new <= cost {
                let rel = (cost - c_new) / cost.abs().max(f64::MIN_POSITIVE);
                // a stalled cost only means convergence once steps are near Gauss-Newton
                let undamped = lambda <= 1e-6;
                a = trial;
                (cost, grad, hess) = eval(&a, true);
                lambda = (lambda * 0.1).max(1e-12);
                accepted = true;
                if rel < opts.rel_cost_tol && undamped {
                    converged = true;
                }
                break;
            }
            // a step too small to move θ means we are sitting on the minimum
            if step.norm() <= 1e-14 * (1.0 + a.iter().map(|x| x * x).sum::<f64>().sqrt()) {
                converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if converged || !accepted {
            break;
        }
    }
    if !converged && grad.norm() <= opts.grad_tol * (1.0 + cost.abs()) {
        converged = true;
    }
    // the gradient test scales with |C|, so polish with plain Gauss-Newton steps
    if converged {
        for _ in 0..5 {
            let Some(chol) = hess.clone().cholesky() else { break };
            let step = chol.solve(&(-&grad));
            let trial: Vec<f64> = a.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
            let (c_new, _, _) = eval(&trial, false);
            if !(c_new < cost) {
                break;
            }
            a = trial;
            (cost, grad, hess) = eval(&a, true);
        }
    }
    Run {
        grad_norm: grad.norm(),
        a,
        cost,
        iterations,
        converged,
    }
}

/// Runs LM from `start`, then from points near θ★ if that fails; keeps the
/// lowest cost among converged runs (or overall when none converge).
fn fit_blocks(
    spec: &ModelSpec,
    blocks: &[BlockModel],
    idx: &[usize],
    start: &[f64],
    kind: CostKind,
    opts: &SolverOptions,
) -> Result<(Run, usize)> {
    let a0: Vec<f64> = idx.iter().map(|&i| start[i]).collect();
    let first = levenberg_marquardt(blocks, &a0, kind, opts);
    if first.converged {
        return Ok((first, 1));
    }
    let truth = spec.truth_params()?;
    let mut runs = vec![first];
    for k in 0..opts.restarts {
        let scale = [1.0, 0.9, 1.1, 0.5, 1.5][k % 5];
        let a: Vec<f64> = idx.iter().map(|&i| truth[i] * scale).collect();
        runs.push(levenberg_marquardt(blocks, &a, kind, opts));
    }
    let starts = runs.len();
    let best = runs
        .into_iter()
        .min_by(|x, y| (!x.converged, x.cost).partial_cmp(&(!y.converged, y.cost)).unwrap())
        .expect("at least one run");
    Ok((best, starts))
}

fn solve(problem: &FitProblem, separable: bool) -> Result<EstimationReport> {
    let spec = &problem.model;
    let parts = split_by_basis(spec, &problem.observations)?;
    let n = spec.n_params();
    let start = match &problem.initial {
        Some(p) if p.len() != n => {
            return Err(Error::InvalidParameter(format!(
                "initial point has {} parameters, model has {n}",
                p.len()
            )))
        }
        Some(p) => p.clone(),
        None => vec![0.0; n],
    };
    let groups: Vec<Vec<(Basis, &[Observation])>> = if separable {
        parts.iter().map(|(b, o)| vec![(*b, o.as_slice())]).collect()
    } else {
        vec![parts.iter().map(|(b, o)| (*b, o.as_slice())).collect()]
    };
    let mut params = vec![0.0; n];
    let mut diag = Diagnostics {
        iterations: 0,
        final_cost: 0.0,
        gradient_norm: 0.0,
        converged: true,
        starts: 0,
    };
    let mut grad_sq = 0.0;
    for group in groups {
        let blocks: Vec<BlockModel> = group.iter().map(|(b, o)| BlockModel::new(*spec, *b, o)).collect();
        let idx: Vec<usize> = group.iter().flat_map(|(b, _)| spec.block_indices(*b)).collect();
        let (run, starts) = fit_blocks(spec, &blocks, &idx, &start, problem.cost, &problem.options)?;
        for (k, &i) in idx.iter().enumerate() {
            params[i] = run.a[k];
        }
        diag.iterations += run.iterations;
        diag.final_cost += run.cost;
        diag.converged &= run.converged;
        diag.starts = diag.starts.max(starts);
        grad_sq += run.grad_norm * run.grad_norm;
    }
    diag.gradient_norm = grad_sq.sqrt();
    let info = fisher_unchecked(spec, &params, &problem.observations)?;
    let report_cov = covariance(&info);
    let cov = match (&report_cov, diag.converged) {
        (Ok(c), _) => c.clone(),
        (Err(_), false) => DMatrix::from_element(n, n, f64::NAN),
        (Err(_), true) => return Err(report_cov.unwrap_err()),
    };
    let report = EstimationReport::new(*spec, problem.cost, params, cov, diag, &problem.observations);
    if !report.diagnostics.converged {
        return Err(Error::NotConverged {
            iterations: report.diagnostics.iterations,
            gradient_norm: report.diagnostics.gradient_norm,
            best: Box::new(report),
        });
    }
    Ok(report)
}

/// Fits the model, solving each basis block on its own (σ_x ↔ Re, σ_y ↔ Im).
/// Covariance is the inverse Fisher information at θ̂.
pub fn minimize(problem: &FitProblem) -> Result<EstimationReport> {
    solve(problem, true)
}

/// Same fit with all blocks optimized together.
pub fn fit_joint(problem: &FitProblem) -> Result<EstimationReport> {
    solve(problem, false)
}

/// Thermal n = 2 model with known occupation `n_b`.
pub fn fit_thermal(observations: Vec<Observation>, n_b: f64, cost: CostKind) -> Result<EstimationReport> {
    minimize(&FitProblem::new(ModelSpec::new(2, n_b, false)?, observations, cost))
}

/// Thermal n = 2 model with the heating parameter `c_h` fitted alongside,
/// started from `c_h = 0`.
pub fn fit_with_heating(observations: Vec<Observation>, n_b: f64, cost: CostKind) -> Result<EstimationReport> {
    minimize(&FitProblem::new(ModelSpec::new(2, n_b, true)?, observations, cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagrams::truth_coefficients;
    use crate::estimator::{build_grid, build_grid_3d, exact_observations, AxisRange};
    use crate::sampler::{allocate_shots, chi_values, generate_dataset, ChiSource, ShotPolicy};

    fn model_data(spec: ModelSpec, params: &[f64], grid: &[crate::sampler::MeasurementPoint]) -> Vec<Observation> {
        let (theta, c_h) = spec.coefficients(params);
        let chi = chi_values(grid, &ChiSource::Model { theta, c_h }).unwrap();
        let units = grid.len() * spec.bases().len();
        let shots = allocate_shots(&ShotPolicy::equal(1_000 * units as u64), &vec![0.5; units]).unwrap();
        exact_observations(grid, &chi, spec.order, &shots).unwrap()
    }

    #[test]
    fn self_consistent_data_recovers_truth() {
        let spec = ModelSpec::zero_temperature(2);
        let grid = build_grid(1.2, 0.3, 0.1, 0.05, 0.0).unwrap();
        let truth = spec.truth_params().unwrap();
        let obs = model_data(spec, &truth, &grid);
        for kind in [CostKind::Ml, CostKind::Ls] {
            let rep = minimize(&FitProblem::new(spec, obs.clone(), kind)).unwrap();
            for (a, b) in rep.params.iter().zip(&truth) {
                assert!((a - b).abs() < 1e-6, "{kind:?}: {:?}", rep.params);
            }
            assert!(rep.diagnostics.converged);
        }
    }

    #[test]
    fn separable_fit_matches_joint() {
        let spec = ModelSpec::zero_temperature(3);
        let ax = AxisRange { min: 0.0, max: 1.2, steps: 5 };
        let grid = build_grid_3d(ax, ax, AxisRange { min: 0.1, max: 0.3, steps: 3 }, 0.0).unwrap();
        let recs = generate_dataset(
            &grid,
            &ShotPolicy::equal(200_000),
            &ChiSource::Model { theta: truth_coefficients(3, 0.0).unwrap(), c_h: 0.0 },
            7,
        )
        .unwrap();
        let obs = Observation::from_records(&recs);
        let problem = FitProblem::new(spec, obs, CostKind::Ml);
        let sep = minimize(&problem).unwrap();
        let joint = fit_joint(&problem).unwrap();
        for (a, b) in sep.params.iter().zip(&joint.params) {
            assert!((a - b).abs() < 1e-6, "{:?} vs {:?}", sep.params, joint.params);
        }
        // Re/Im blocks do not talk to each other
        assert!(sep.covariance.view((0, 4), (4, 4)).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn heated_fit_recovers_heating_parameter() {
        let spec = ModelSpec::new(2, 0.1, true).unwrap();
        let grid = build_grid(1.4, 0.3, 0.1, 0.05, 0.1).unwrap();
        let mut truth = spec.truth_params().unwrap();
        *truth.last_mut().unwrap() = 0.02;
        let obs = model_data(spec, &truth, &grid);
        let rep = fit_with_heating(obs, 0.1, CostKind::Ml).unwrap();
        assert!((rep.c_h().unwrap() - 0.02).abs() < 1e-6, "{:?}", rep.params);
    }

    #[test]
    fn report_csv_layout() {
        let spec = ModelSpec::zero_temperature(2);
        let grid = build_grid(1.0, 0.3, 0.1, 0.1, 0.0).unwrap();
        let truth = spec.truth_params().unwrap();
        let rep = minimize(&FitProblem::new(spec, model_data(spec, &truth, &grid), CostKind::Ml))
            .unwrap()
            .with_bias_against(&truth)
            .unwrap();
        let text = String::from_utf8(rep.to_csv().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "name,re,im,std,bias_sys,mse");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("c1,-"));
        let meta = toml::to_string(&rep.metadata(Some(3))).unwrap();
        assert!(meta.contains("seed = 3"));
    }

    #[test]
    fn covariance_is_symmetric_psd() {
        let spec = ModelSpec::zero_temperature(2);
        let grid = build_grid(1.5, 0.4, 0.1, 0.1, 0.0).unwrap();
        let chi = chi_values(&grid, &ChiSource::analytic(2)).unwrap();
        let recs = crate::sampler::sample_dataset(&grid, &chi, 2, &ShotPolicy::equal(100_000), 1).unwrap();
        let rep = minimize(&FitProblem::new(spec, Observation::from_records(&recs), CostKind::Ls)).unwrap();
        let c = &rep.covariance;
        assert!((c - c.transpose()).amax() < 1e-15);
        assert!(c.clone().symmetric_eigen().eigenvalues.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn wrong_basis_coverage_rejected() {
        let spec = ModelSpec::zero_temperature(3);
        let grid = build_grid(1.0, 0.3, 0.1, 0.1, 0.0).unwrap();
        let obs = model_data(ModelSpec::zero_temperature(2), &[0.0; 3], &grid);
        assert!(matches!(
            minimize(&FitProblem::new(spec, obs, CostKind::Ml)),
            Err(Error::InvalidInput(_))
        ));
    }
}

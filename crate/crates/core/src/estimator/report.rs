use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{CostKind, ModelSpec, Observation};
use crate::diagrams::CoefficientVector;
use crate::error::{Error, Result};
use crate::fsio::{fixed_sig, write_atomic};

pub const REPORT_HEADER: [&str; 6] = ["name", "re", "im", "std", "bias_sys", "mse"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub final_cost: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    pub starts: usize,
}

/// Point estimate with its Fisher covariance and, when known, systematic bias.
#[derive(Debug, Clone)]
pub struct EstimationReport {
    pub model: ModelSpec,
    pub cost: CostKind,
    /// Flat parameters, laid out as in [`ModelSpec::param_names`].
    pub params: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub bias_sys: Option<Vec<f64>>,
    pub diagnostics: Diagnostics,
    pub n_points: usize,
    pub total_shots: f64,
    pub xi_max: f64,
    pub r_max: f64,
    /// Occupation of the data when every point shares one.
    pub data_n_b: Option<f64>,
}

/// One output row; complex coefficients fold variance and bias into a modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow {
    pub name: String,
    pub re: f64,
    pub im: f64,
    pub std: f64,
    pub bias_sys: Option<f64>,
    pub mse: f64,
}

impl EstimationReport {
    pub(crate) fn new(
        model: ModelSpec,
        cost: CostKind,
        params: Vec<f64>,
        covariance: DMatrix<f64>,
        diagnostics: Diagnostics,
        obs: &[Observation],
    ) -> Self {
        let mut points: Vec<_> = obs.iter().map(|o| o.point).collect();
        points.dedup();
        let n_b0 = obs.first().map(|o| o.point.n_b);
        let data_n_b = n_b0.filter(|v| obs.iter().all(|o| o.point.n_b == *v));
        Self {
            model,
            cost,
            params,
            covariance,
            bias_sys: None,
            diagnostics,
            n_points: points.len(),
            total_shots: obs.iter().map(|o| o.shots).sum(),
            xi_max: obs.iter().map(|o| o.point.xi.norm()).fold(0.0, f64::max),
            r_max: obs.iter().map(|o| o.point.r).fold(0.0, f64::max),
            data_n_b,
        }
    }

    pub fn theta(&self) -> CoefficientVector {
        self.model.coefficients(&self.params).0
    }

    pub fn c_h(&self) -> Option<f64> {
        self.model.heating.then(|| self.model.coefficients(&self.params).1)
    }

    pub fn param_names(&self) -> Vec<String> {
        self.model.param_names()
    }

    pub fn std(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect()
    }

    /// Attaches a systematic bias over the flat parameters.
    pub fn with_bias(mut self, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != self.params.len() {
            return Err(Error::InvalidParameter(format!(
                "bias has {} entries for {} parameters",
                bias.len(),
                self.params.len()
            )));
        }
        self.bias_sys = Some(bias);
        Ok(self)
    }

    /// Sets the bias to `θ̂ − reference` (reference over the flat parameters).
    pub fn with_bias_against(self, reference: &[f64]) -> Result<Self> {
        let bias = self.params.iter().zip(reference).map(|(a, b)| a - b).collect();
        self.with_bias(bias)
    }

    pub fn rows(&self) -> Vec<CoefficientRow> {
        coefficient_rows(&self.model, &self.params, &self.covariance, self.bias_sys.as_deref())
    }

    /// `√(mean_n MSE_n)` over the diagram coefficients (`c_h` excluded).
    pub fn rmse(&self) -> f64 {
        rmse_of(&self.model, &self.rows())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let label = Path::new("<report>");
        w.write_record(REPORT_HEADER).map_err(|e| Error::csv(label, e))?;
        for row in self.rows() {
            let f = |x: f64| fixed_sig(x, 12);
            w.write_record([
                row.name.clone(),
                f(row.re),
                f(row.im),
                f(row.std),
                row.bias_sys.map(f).unwrap_or_default(),
                f(row.mse),
            ])
            .map_err(|e| Error::csv(label, e))?;
        }
        w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_csv()?)
    }

    pub fn metadata(&self, seed: Option<u64>) -> ReportMetadata {
        ReportMetadata {
            order: self.model.order,
            n_b: self.model.n_b,
            heating: self.model.heating,
            cost: self.cost,
            seed,
            n_points: self.n_points,
            total_shots: self.total_shots,
            xi_max: self.xi_max,
            r_max: self.r_max,
            data_n_b: self.data_n_b,
            rmse: self.rmse(),
            param_names: self.param_names(),
            params: self.params.clone(),
            covariance: self.covariance.row_iter().map(|r| r.iter().copied().collect()).collect(),
            bias_sys: self.bias_sys.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    /// Rebuilds a report from its sidecar.
    pub fn from_metadata(meta: &ReportMetadata) -> Result<Self> {
        let model = ModelSpec::new(meta.order, meta.n_b, meta.heating)?;
        let n = model.n_params();
        let bad = |what: &str| Error::InvalidInput(format!("report metadata: {what} does not match the model"));
        if meta.params.len() != n {
            return Err(bad("params"));
        }
        if meta.covariance.len() != n || meta.covariance.iter().any(|r| r.len() != n) {
            return Err(bad("covariance"));
        }
        if meta.bias_sys.as_ref().is_some_and(|b| b.len() != n) {
            return Err(bad("bias_sys"));
        }
        Ok(Self {
            model,
            cost: meta.cost,
            params: meta.params.clone(),
            covariance: DMatrix::from_fn(n, n, |i, j| meta.covariance[i][j]),
            bias_sys: meta.bias_sys.clone(),
            diagnostics: meta.diagnostics.clone(),
            n_points: meta.n_points,
            total_shots: meta.total_shots,
            xi_max: meta.xi_max,
            r_max: meta.r_max,
            data_n_b: meta.data_n_b,
        })
    }
}

pub(crate) fn coefficient_rows(
    model: &ModelSpec,
    params: &[f64],
    cov: &DMatrix<f64>,
    bias: Option<&[f64]>,
) -> Vec<CoefficientRow> {
    let k = model.n_coefficients();
    let var = |i: usize| cov[(i, i)].max(0.0);
    let b = |i: usize| bias.map(|b| b[i]);
    let mut rows = Vec::with_capacity(k + 1);
    for j in 0..k {
        let (re, im, v, bias_sys) = if model.order == 2 {
            (params[j], 0.0, var(j), b(j))
        } else {
            let bs = bias.map(|bb| bb[j].hypot(bb[k + j]));
            (params[j], params[k + j], var(j) + var(k + j), bs)
        };
        rows.push(CoefficientRow {
            name: format!("c{}", j + 1),
            re,
            im,
            std: v.sqrt(),
            bias_sys,
            mse: bias_sys.map_or(0.0, |x| x * x) + v,
        });
    }
    if model.heating {
        let i = params.len() - 1;
        rows.push(CoefficientRow {
            name: "c_h".into(),
            re: params[i],
            im: 0.0,
            std: var(i).sqrt(),
            bias_sys: b(i),
            mse: b(i).map_or(0.0, |x| x * x) + var(i),
        });
    }
    rows
}

pub(crate) fn rmse_of(model: &ModelSpec, rows: &[CoefficientRow]) -> f64 {
    let k = model.n_coefficients();
    (rows[..k].iter().map(|r| r.mse).sum::<f64>() / k as f64).sqrt()
}

/// Sidecar describing how a report was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub order: usize,
    pub n_b: f64,
    pub heating: bool,
    pub cost: CostKind,
    pub seed: Option<u64>,
    pub n_points: usize,
    pub total_shots: f64,
    pub xi_max: f64,
    pub r_max: f64,
    pub data_n_b: Option<f64>,
    pub rmse: f64,
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub bias_sys: Option<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

impl ReportMetadata {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {}", path.display(), e.message())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        write_atomic(path, text.as_bytes())
    }
}

//! Declarative run configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{build_grid, build_grid_3d, AxisRange, CostKind, ModelSpec, SystematicMethod};
use crate::fsio::write_atomic;
use crate::sampler::{Allocation, ChiSource, MeasurementPoint, ProtocolConfig, ShotPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Exact characteristic function.
    #[default]
    Analytic,
    /// Master-equation simulation of the preparation and Ramsey sequence.
    Protocol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub n: usize,
    #[serde(rename = "n_B")]
    pub n_b: f64,
    /// Heated 4-parameter fit; protocol data include heating only when set.
    pub heating: bool,
    pub source: DataSource,
    pub cost: CostKind,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            n: 2,
            n_b: 0.0,
            heating: false,
            source: DataSource::Analytic,
            cost: CostKind::Ml,
        }
    }
}

const DEFAULT_LATTICE: [f64; 4] = [2.0, 0.78, 0.02, 0.02];

/// Either the real-ξ lattice (`xi_max`, `r_max`, `d_xi`, `d_r`; missing keys
/// take the 2.0 / 0.78 / 0.02 / 0.02 defaults) or explicit `re_xi`, `im_xi`,
/// `r` ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default)]
    pub xi_max: Option<f64>,
    #[serde(default)]
    pub r_max: Option<f64>,
    #[serde(default)]
    pub d_xi: Option<f64>,
    #[serde(default)]
    pub d_r: Option<f64>,
    #[serde(default)]
    pub re_xi: Option<AxisRange>,
    #[serde(default)]
    pub im_xi: Option<AxisRange>,
    #[serde(default)]
    pub r: Option<AxisRange>,
    /// Squeezing phase θ of every point.
    #[serde(default)]
    pub theta: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            xi_max: Some(DEFAULT_LATTICE[0]),
            r_max: Some(DEFAULT_LATTICE[1]),
            d_xi: Some(DEFAULT_LATTICE[2]),
            d_r: Some(DEFAULT_LATTICE[3]),
            re_xi: None,
            im_xi: None,
            r: None,
            theta: 0.0,
        }
    }
}

impl GridSection {
    fn is_explicit(&self) -> bool {
        self.re_xi.is_some() || self.im_xi.is_some() || self.r.is_some()
    }

    /// `(xi_max, r_max, d_xi, d_r)` with defaults filled in.
    pub fn lattice(&self) -> [f64; 4] {
        let v = [self.xi_max, self.r_max, self.d_xi, self.d_r];
        std::array::from_fn(|i| v[i].unwrap_or(DEFAULT_LATTICE[i]))
    }

    fn validate(&self) -> Result<()> {
        let lattice = [self.xi_max, self.r_max, self.d_xi, self.d_r];
        if self.is_explicit() {
            if self.re_xi.is_none() || self.im_xi.is_none() || self.r.is_none() {
                return Err(Error::Config("explicit grids need re_xi, im_xi and r".into()));
            }
            if lattice.iter().any(Option::is_some) {
                return Err(Error::Config(
                    "grid takes either lattice keys or explicit ranges, not both".into(),
                ));
            }
        }
        if !self.theta.is_finite() {
            return Err(Error::Config("grid.theta must be finite".into()));
        }
        Ok(())
    }

    pub fn points(&self, n_b: f64) -> Result<Vec<MeasurementPoint>> {
        self.validate()?;
        let mut grid = if self.is_explicit() {
            build_grid_3d(self.re_xi.unwrap(), self.im_xi.unwrap(), self.r.unwrap(), n_b)?
        } else {
            let [x, r, dx, dr] = self.lattice();
            build_grid(x, r, dx, dr, n_b)?
        };
        for p in &mut grid {
            *p = MeasurementPoint::new(p.xi, p.r, self.theta, n_b)?;
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShotsSection {
    pub total: u64,
    pub allocation: Allocation,
}

impl Default for ShotsSection {
    fn default() -> Self {
        Self {
            total: 1_600_000,
            allocation: Allocation::Equal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RngSection {
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub xi_max: Vec<f64>,
    pub r_max: Vec<f64>,
    pub systematic: SystematicMethod,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            xi_max: (1..=10).map(|k| 0.2 * k as f64).collect(),
            r_max: (1..=13).map(|k| 0.06 * k as f64).collect(),
            systematic: SystematicMethod::InfiniteShot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtrapolateSection {
    pub degree: usize,
}

impl Default for ExtrapolateSection {
    fn default() -> Self {
        Self { degree: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub shots: ShotsSection,
    pub protocol: ProtocolConfig,
    pub rng: RngSection,
    pub output: OutputSection,
    pub sweep: SweepSection,
    pub extrapolate: ExtrapolateSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.model_spec()?;
        self.grid.validate()?;
        self.protocol.validate()?;
        if self.shots.total == 0 {
            return Err(Error::Config("shots.total must be positive".into()));
        }
        if self.extrapolate.degree == 0 {
            return Err(Error::Config("extrapolate.degree must be at least 1".into()));
        }
        Ok(())
    }

    /// Model fitted by `estimate`; the thermal factor follows `model.n_B`.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        ModelSpec::new(self.model.n, self.model.n_b, self.model.heating)
            .map_err(|e| Error::Config(format!("model: {e}")))
    }

    pub fn points(&self) -> Result<Vec<MeasurementPoint>> {
        self.grid.points(self.model.n_b)
    }

    pub fn shot_policy(&self) -> ShotPolicy {
        ShotPolicy {
            total: self.shots.total,
            allocation: self.shots.allocation,
        }
    }

    /// Protocol settings with defaults expanded; heating is off unless the
    /// heated model is requested.
    pub fn resolved_protocol(&self) -> ProtocolConfig {
        let mut p = self.protocol.clone();
        p.ramp_time = Some(p.resolved_ramp_time());
        p.omega_n = Some(p.resolved_omega_n(self.model.n));
        if !self.model.heating {
            p.heating_rate = 0.0;
        }
        p
    }

    pub fn chi_source(&self) -> ChiSource {
        match self.model.source {
            DataSource::Analytic => ChiSource::Analytic {
                order: self.model.n,
                cutoff: self.protocol.cutoff,
            },
            DataSource::Protocol => ChiSource::Protocol {
                order: self.model.n,
                config: self.resolved_protocol(),
            },
        }
    }

    /// The configuration with every default written out.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if !c.grid.is_explicit() {
            let [x, r, dx, dr] = c.grid.lattice();
            (c.grid.xi_max, c.grid.r_max, c.grid.d_xi, c.grid.d_r) = (Some(x), Some(r), Some(dx), Some(dr));
        }
        c.protocol = self.resolved_protocol();
        c.protocol.heating_rate = self.protocol.heating_rate;
        c
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn write_resolved(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.resolved().to_toml()?.as_bytes())
    }
}

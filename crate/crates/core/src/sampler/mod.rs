//! Ramsey readout: Born-rule probabilities from χ, binomial shot sampling,
//! shot allocation and reproducible datasets.

mod protocol;

use std::collections::HashMap;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charfunc::{chi_thermal_squeezed_exact, ChiEvaluator, SqueezeSpec};
use crate::diagrams::{eval_model, CoefficientVector};
use crate::error::{Error, Result};
use crate::fockspace::{thermal_state, DisplacementFactory, DEFAULT_CUTOFF};
use crate::fsio::{fixed_sig, write_atomic};

pub use protocol::{simulate_protocol, simulate_protocol_grid, ProtocolConfig};

/// One experimental configuration: displacement ξ, squeezing `(r, θ)` and the
/// initial thermal occupation. The force phase Δφ is `arg ξ`; the physical
/// duration is `|ξ|/Ωη` for the Ωη of the protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementPoint {
    pub xi: Complex64,
    pub r: f64,
    pub theta: f64,
    pub n_b: f64,
}

impl MeasurementPoint {
    pub fn new(xi: Complex64, r: f64, theta: f64, n_b: f64) -> Result<Self> {
        if !xi.re.is_finite() || !xi.im.is_finite() || !theta.is_finite() {
            return Err(Error::InvalidParameter("non-finite measurement point".into()));
        }
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::InvalidParameter(format!("r must be non-negative, got {r}")));
        }
        if !(n_b >= 0.0) || !n_b.is_finite() {
            return Err(Error::InvalidParameter(format!("n_B must be non-negative, got {n_b}")));
        }
        Ok(Self { xi, r, theta, n_b })
    }

    /// Force duration `|ξ|/Ωη` and phase `arg ξ`.
    pub fn duration(&self, omega_eta: f64) -> f64 {
        self.xi.norm() / omega_eta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    X,
    Y,
}

impl Basis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Basis::X => "x",
            Basis::Y => "y",
        }
    }

    /// Bases needed for the diagram model of the given order.
    pub fn for_order(order: usize) -> &'static [Basis] {
        if order == 2 {
            &[Basis::X]
        } else {
            &[Basis::X, Basis::Y]
        }
    }

    fn index(&self) -> u64 {
        match self {
            Basis::X => 0,
            Basis::Y => 1,
        }
    }
}

/// Shots taken at one point in one Pauli basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotRecord {
    pub point: MeasurementPoint,
    pub basis: Basis,
    pub shots: u64,
    pub plus_count: u64,
    pub seed: u64,
}

impl ShotRecord {
    pub fn frequency(&self) -> f64 {
        self.plus_count as f64 / self.shots as f64
    }
}

/// `p_x(+1) = (1 + Re χ)/2`, `p_y(+1) = (1 + Im χ)/2`. Values with
/// `1 < |χ| ≤ 1 + 1e−6` are pulled back onto the unit circle.
pub fn born_probabilities(chi: Complex64) -> Result<(f64, f64)> {
    let m = chi.norm();
    if !m.is_finite() || m > 1.0 + 1e-6 {
        return Err(Error::InvalidChi(m));
    }
    let c = if m > 1.0 { chi / m } else { chi };
    Ok((
        ((1.0 + c.re) / 2.0).clamp(0.0, 1.0),
        ((1.0 + c.im) / 2.0).clamp(0.0, 1.0),
    ))
}

/// Exact binomial draw of the `+1` count.
pub fn sample_shots(p_plus: f64, shots: u64, seed: u64) -> Result<u64> {
    if !(0.0..=1.0).contains(&p_plus) {
        return Err(Error::InvalidParameter(format!(
            "probability must lie in [0, 1], got {p_plus}"
        )));
    }
    if shots == 0 {
        return Err(Error::InvalidParameter("shot count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Binomial::new(shots, p_plus)
        .map_err(|e| Error::InvalidParameter(format!("binomial: {e}")))?;
    Ok(dist.sample(&mut rng))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream seed for `(master, point index, basis)`.
pub fn record_seed(master: u64, index: usize, basis: Basis) -> u64 {
    splitmix(splitmix(splitmix(master) ^ index as u64) ^ basis.index())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Allocation {
    /// `⌊N/K⌋` per (point, basis), remainder to the first units.
    #[default]
    Equal,
    /// `N_k ∝ p_k(1 − p_k)` at the source probabilities, at least one shot each.
    ProportionalToVariance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotPolicy {
    pub total: u64,
    pub allocation: Allocation,
}

impl ShotPolicy {
    pub fn equal(total: u64) -> Self {
        Self {
            total,
            allocation: Allocation::Equal,
        }
    }
}

/// Splits `total` over units; `probs` are only read for variance weighting.
/// The sum is preserved exactly and every unit receives at least one shot.
pub fn allocate_shots(policy: &ShotPolicy, probs: &[f64]) -> Result<Vec<u64>> {
    let k = probs.len() as u64;
    if k == 0 {
        return Err(Error::InvalidGrid("no measurement units to allocate".into()));
    }
    if policy.total < k {
        return Err(Error::InvalidParameter(format!(
            "{} shots cannot cover {k} measurement units",
            policy.total
        )));
    }
    match policy.allocation {
        Allocation::Equal => {
            let base = policy.total / k;
            let rem = (policy.total % k) as usize;
            Ok((0..probs.len()).map(|i| base + u64::from(i < rem)).collect())
        }
        Allocation::ProportionalToVariance => {
            let w: Vec<f64> = probs.iter().map(|p| p * (1.0 - p)).collect();
            let wsum: f64 = w.iter().sum();
            let spare = policy.total - k;
            if wsum <= 0.0 {
                return allocate_shots(&ShotPolicy::equal(policy.total), probs);
            }
            // largest-remainder rounding on top of one guaranteed shot each
            let ideal: Vec<f64> = w.iter().map(|x| x / wsum * spare as f64).collect();
            let mut n: Vec<u64> = ideal.iter().map(|x| x.floor() as u64).collect();
            let mut left = spare - n.iter().sum::<u64>();
            let mut order: Vec<usize> = (0..n.len()).collect();
            order.sort_by(|&a, &b| {
                let fa = ideal[a] - ideal[a].floor();
                let fb = ideal[b] - ideal[b].floor();
                fb.total_cmp(&fa).then(a.cmp(&b))
            });
            for &i in &order {
                if left == 0 {
                    break;
                }
                n[i] += 1;
                left -= 1;
            }
            Ok(n.into_iter().map(|x| x + 1).collect())
        }
    }
}

/// Where χ comes from when generating data.
#[derive(Debug, Clone)]
pub enum ChiSource {
    /// Closed form for n = 2 (thermal allowed); Fock-space evaluation at
    /// `cutoff` for n = 3.
    Analytic { order: usize, cutoff: usize },
    /// Master-equation simulation of the trapped-ion protocol.
    Protocol {
        order: usize,
        config: ProtocolConfig,
    },
    /// The clipped truncated model itself (self-consistent data).
    Model {
        theta: CoefficientVector,
        c_h: f64,
    },
    /// Caller-supplied values, one per grid point.
    Values { order: usize, chi: Vec<Complex64> },
}

impl ChiSource {
    pub fn analytic(order: usize) -> Self {
        ChiSource::Analytic {
            order,
            cutoff: DEFAULT_CUTOFF,
        }
    }

    pub fn order(&self) -> usize {
        match self {
            ChiSource::Analytic { order, .. }
            | ChiSource::Protocol { order, .. }
            | ChiSource::Values { order, .. } => *order,
            ChiSource::Model { theta, .. } => theta.order(),
        }
    }
}

fn group_key(p: &MeasurementPoint) -> (u64, u64, u64) {
    (p.r.to_bits(), p.theta.to_bits(), p.n_b.to_bits())
}

/// χ at every grid point from the given source.
pub fn chi_values(grid: &[MeasurementPoint], source: &ChiSource) -> Result<Vec<Complex64>> {
    match source {
        ChiSource::Analytic { order: 2, .. } => grid
            .iter()
            .map(|p| chi_thermal_squeezed_exact(p.xi, &SqueezeSpec::new(2, p.r, p.theta)?, p.n_b))
            .collect(),
        ChiSource::Analytic { order, cutoff } => {
            let factory = DisplacementFactory::new(*cutoff)?;
            let mut groups: HashMap<(u64, u64, u64), Vec<usize>> = HashMap::new();
            for (i, p) in grid.iter().enumerate() {
                groups.entry(group_key(p)).or_default().push(i);
            }
            let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
            groups.sort();
            let parts: Vec<Vec<(usize, Complex64)>> = groups
                .par_iter()
                .map(|idx| {
                    let p0 = grid[idx[0]];
                    let rho = thermal_state(p0.n_b, *cutoff)?;
                    let spec = SqueezeSpec::new(*order, p0.r, p0.theta)?;
                    let ev = ChiEvaluator::with_factory(&rho, &spec, factory.clone())?;
                    idx.iter()
                        .map(|&i| Ok((i, ev.evaluate(grid[i].xi)?.value)))
                        .collect()
                })
                .collect::<Result<_>>()?;
            let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
            for (i, v) in parts.into_iter().flatten() {
                out[i] = v;
            }
            Ok(out)
        }
        ChiSource::Protocol { order, config } => Ok(simulate_protocol_grid(grid, *order, config)?
            .into_iter()
            .map(|c| c.value)
            .collect()),
        ChiSource::Model { theta, c_h } => Ok(grid
            .iter()
            .map(|p| eval_model(theta, p.xi, p.r, p.theta, p.n_b, *c_h))
            .collect()),
        ChiSource::Values { chi, .. } => {
            if chi.len() != grid.len() {
                return Err(Error::InvalidInput(format!(
                    "{} χ values for {} grid points",
                    chi.len(),
                    grid.len()
                )));
            }
            Ok(chi.clone())
        }
    }
}

/// Samples shot records given χ at each grid point.
pub fn sample_dataset(
    grid: &[MeasurementPoint],
    chi: &[Complex64],
    order: usize,
    policy: &ShotPolicy,
    seed: u64,
) -> Result<Vec<ShotRecord>> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty measurement grid".into()));
    }
    if chi.len() != grid.len() {
        return Err(Error::InvalidInput(format!(
            "{} χ values for {} grid points",
            chi.len(),
            grid.len()
        )));
    }
    let bases = Basis::for_order(order);
    let mut units = Vec::with_capacity(grid.len() * bases.len());
    for (i, c) in chi.iter().enumerate() {
        let (px, py) = born_probabilities(*c)?;
        for &b in bases {
            units.push((i, b, if b == Basis::X { px } else { py }));
        }
    }
    let probs: Vec<f64> = units.iter().map(|u| u.2).collect();
    let shots = allocate_shots(policy, &probs)?;
    units
        .par_iter()
        .zip(shots.par_iter())
        .map(|(&(i, basis, p), &n)| {
            let seed = record_seed(seed, i, basis);
            Ok(ShotRecord {
                point: grid[i],
                basis,
                shots: n,
                plus_count: sample_shots(p, n, seed)?,
                seed,
            })
        })
        .collect()
}

/// Reproducible dataset over `grid`: σ_x only for n = 2, σ_x and σ_y for n = 3.
pub fn generate_dataset(
    grid: &[MeasurementPoint],
    policy: &ShotPolicy,
    source: &ChiSource,
    seed: u64,
) -> Result<Vec<ShotRecord>> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty measurement grid".into()));
    }
    let chi = chi_values(grid, source)?;
    sample_dataset(grid, &chi, source.order(), policy, seed)
}

pub const DATASET_HEADER: [&str; 9] = [
    "re_xi",
    "im_xi",
    "r",
    "theta",
    "n_B",
    "basis",
    "shots",
    "plus_count",
    "seed",
];

const SIG: usize = 12;

pub fn dataset_to_csv(records: &[ShotRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::csv("<memory>", e);
    w.write_record(DATASET_HEADER).map_err(to_err)?;
    for rec in records {
        let p = &rec.point;
        w.write_record([
            fixed_sig(p.xi.re, SIG),
            fixed_sig(p.xi.im, SIG),
            fixed_sig(p.r, SIG),
            fixed_sig(p.theta, SIG),
            fixed_sig(p.n_b, SIG),
            rec.basis.as_str().to_string(),
            rec.shots.to_string(),
            rec.plus_count.to_string(),
            rec.seed.to_string(),
        ])
        .map_err(to_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))
}

pub fn write_dataset(path: &Path, records: &[ShotRecord]) -> Result<()> {
    write_atomic(path, &dataset_to_csv(records)?)
}

#[derive(Debug, Deserialize)]
struct Row {
    re_xi: f64,
    im_xi: f64,
    r: f64,
    theta: f64,
    #[serde(rename = "n_B")]
    n_b: f64,
    basis: Basis,
    shots: u64,
    plus_count: u64,
    seed: u64,
}

/// Parses and validates a dataset CSV.
pub fn dataset_from_reader(reader: impl std::io::Read, label: &Path) -> Result<Vec<ShotRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(label, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != DATASET_HEADER {
        return Err(Error::InvalidInput(format!(
            "{}: expected header {:?}",
            label.display(),
            DATASET_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::csv(label, e))?;
        let at = || format!("{} row {}", label.display(), line + 1);
        if row.shots == 0 {
            return Err(Error::InvalidInput(format!("{}: zero shots", at())));
        }
        if row.plus_count > row.shots {
            return Err(Error::InvalidInput(format!(
                "{}: plus_count {} exceeds shots {}",
                at(),
                row.plus_count,
                row.shots
            )));
        }
        let point = MeasurementPoint::new(Complex64::new(row.re_xi, row.im_xi), row.r, row.theta, row.n_b)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", at())))?;
        out.push(ShotRecord {
            point,
            basis: row.basis,
            shots: row.shots,
            plus_count: row.plus_count,
            seed: row.seed,
        });
    }
    if out.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no records", label.display())));
    }
    Ok(out)
}

pub fn read_dataset(path: &Path) -> Result<Vec<ShotRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    dataset_from_reader(std::io::BufReader::new(f), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn born_examples() {
        assert_eq!(born_probabilities(c(1.0, 0.0)).unwrap(), (1.0, 0.5));
        assert_eq!(born_probabilities(c(0.0, 0.0)).unwrap(), (0.5, 0.5));
        assert_eq!(born_probabilities(c(0.0, -1.0)).unwrap(), (0.5, 0.0));
        assert!(born_probabilities(c(1.0 + 5e-7, 0.0)).is_ok());
        assert!(matches!(born_probabilities(c(1.1, 0.0)), Err(Error::InvalidChi(_))));
    }

    #[test]
    fn sampling_extremes_and_determinism() {
        assert_eq!(sample_shots(1.0, 77, 1).unwrap(), 77);
        assert_eq!(sample_shots(0.0, 77, 1).unwrap(), 0);
        assert_eq!(sample_shots(0.3, 1000, 9).unwrap(), sample_shots(0.3, 1000, 9).unwrap());
        assert!(sample_shots(0.5, 0, 1).is_err());
        assert!(sample_shots(1.5, 10, 1).is_err());
    }

    #[test]
    fn binomial_spread_at_half() {
        let n = 1_000_000u64;
        let f: Vec<f64> = (0..1000)
            .map(|s| sample_shots(0.5, n, record_seed(42, s, Basis::X)).unwrap() as f64 / n as f64)
            .collect();
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        let var = f.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (f.len() - 1) as f64;
        assert!((var.sqrt() / 5e-4 - 1.0).abs() < 0.1, "{}", var.sqrt());
    }

    #[test]
    fn equal_allocation_preserves_total() {
        let n = allocate_shots(&ShotPolicy::equal(1_600_000), &vec![0.5; 3900]).unwrap();
        assert_eq!(n.iter().sum::<u64>(), 1_600_000);
        assert_eq!(n[0], 411);
        assert_eq!(n[999], 411);
        assert_eq!(n[1000], 410);
        assert!(allocate_shots(&ShotPolicy::equal(3), &[0.5; 4]).is_err());
    }

    #[test]
    fn variance_allocation_prefers_uncertain_points() {
        let policy = ShotPolicy {
            total: 1000,
            allocation: Allocation::ProportionalToVariance,
        };
        let n = allocate_shots(&policy, &[0.5, 0.9, 1.0]).unwrap();
        assert_eq!(n.iter().sum::<u64>(), 1000);
        assert!(n[0] > n[1] && n[1] > n[2]);
        assert_eq!(n[2], 1);
    }

    #[test]
    fn single_point_dataset() {
        let grid = [MeasurementPoint::new(c(0.0, 0.0), 0.1, 0.0, 0.0).unwrap()];
        let d = generate_dataset(&grid, &ShotPolicy::equal(100), &ChiSource::analytic(2), 5).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].plus_count, 100);
        assert!(generate_dataset(&[], &ShotPolicy::equal(100), &ChiSource::analytic(2), 5).is_err());
    }

    #[test]
    fn order_three_uses_both_bases() {
        let grid = [MeasurementPoint::new(c(0.5, 0.3), 0.2, 0.0, 0.0).unwrap()];
        let d = generate_dataset(&grid, &ShotPolicy::equal(1000), &ChiSource::analytic(3), 5).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!((d[0].basis, d[1].basis), (Basis::X, Basis::Y));
        assert_ne!(d[0].seed, d[1].seed);
    }

    #[test]
    fn csv_round_trip() {
        let grid = [
            MeasurementPoint::new(c(0.02, 0.0), 0.04, 0.0, 0.1).unwrap(),
            MeasurementPoint::new(c(1.3, -0.2), 0.5, 0.25, 0.0).unwrap(),
        ];
        let d = generate_dataset(&grid, &ShotPolicy::equal(1001), &ChiSource::analytic(3), 5).unwrap();
        let bytes = dataset_to_csv(&d).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("re_xi,im_xi,r,theta,n_B,basis,shots,plus_count,seed\n"));
        assert!(text.contains("0.0200000000000,"));
        let back = dataset_from_reader(&bytes[..], Path::new("mem")).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn zero_shot_rows_are_rejected() {
        let text = "re_xi,im_xi,r,theta,n_B,basis,shots,plus_count,seed\n0.1,0,0.1,0,0,x,0,0,1\n";
        let err = dataset_from_reader(text.as_bytes(), Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
        let text = "re_xi,im_xi,r,theta,n_B,basis,shots,plus_count,seed\n0.1,0,0.1,0,0,x,5,6,1\n";
        assert!(dataset_from_reader(text.as_bytes(), Path::new("mem")).is_err());
    }
}

//! On-disk formats: built-in system specs, cycle/Floquet/jet/coefficient
//! artifacts and ensemble summaries.
//!
//! Every JSON document carries `"schema_version": 1`. Floats are written in
//! shortest round-trip form, so reading a file back reproduces the exact bits.
//! Artifacts are always `f64`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::cycle::LimitCycle;
use crate::dynamics::{DerivativeMode, FitzHughNagumo, OscillatorSystem, StuartLandau, StuartLandauNoise};
use crate::error::{Error, Result};
use crate::floquet::FloquetData;
use crate::montecarlo::{EnsembleStats, Moments, PhaseSeries, Scheme, Winding};
use crate::phase_reduction::{IsochronJet, JetProfile, JetResiduals, PhaseCoefficients};

pub const SCHEMA_VERSION: u32 = 1;

fn check_version(found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::Format(format!("unsupported schema_version {found}")));
    }
    Ok(())
}

// ---------------------------------------------------------------- systems

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FhnParams {
    pub a: f64,
}

impl Default for FhnParams {
    fn default() -> Self {
        Self { a: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    Zero,
    DiagX,
    /// Constant `2 × 2` matrix, row major.
    Constant([f64; 4]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StuartLandauParams {
    pub omega: f64,
    pub kappa: f64,
    pub noise: NoiseSpec,
}

impl Default for StuartLandauParams {
    fn default() -> Self {
        Self { omega: 1.0, kappa: 0.0, noise: NoiseSpec::DiagX }
    }
}

/// A built-in system plus parameter overrides:
/// `{"name": "fhn" | "stuart_landau", "params": {...}}`.
/// Unknown names or parameter keys are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSystemSpec", into = "RawSystemSpec")]
pub enum SystemSpec {
    Fhn(FhnParams),
    StuartLandau(StuartLandauParams),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystemSpec {
    name: String,
    #[serde(default)]
    params: Map<String, Value>,
}

impl TryFrom<RawSystemSpec> for SystemSpec {
    type Error = String;

    fn try_from(raw: RawSystemSpec) -> std::result::Result<Self, String> {
        let params = Value::Object(raw.params);
        match raw.name.as_str() {
            "fhn" => serde_json::from_value(params).map(SystemSpec::Fhn).map_err(|e| format!("fhn params: {e}")),
            "stuart_landau" => serde_json::from_value(params)
                .map(SystemSpec::StuartLandau)
                .map_err(|e| format!("stuart_landau params: {e}")),
            other => Err(format!("unknown system `{other}` (expected `fhn` or `stuart_landau`)")),
        }
    }
}

impl From<SystemSpec> for RawSystemSpec {
    fn from(spec: SystemSpec) -> Self {
        let (name, params) = match spec {
            SystemSpec::Fhn(p) => ("fhn", serde_json::to_value(p)),
            SystemSpec::StuartLandau(p) => ("stuart_landau", serde_json::to_value(p)),
        };
        let params = match params {
            Ok(Value::Object(m)) => m,
            _ => Map::new(),
        };
        RawSystemSpec { name: name.into(), params }
    }
}

impl Default for SystemSpec {
    fn default() -> Self {
        SystemSpec::Fhn(FhnParams::default())
    }
}

impl SystemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SystemSpec::Fhn(_) => "fhn",
            SystemSpec::StuartLandau(_) => "stuart_landau",
        }
    }

    /// Default spec for a system name.
    pub fn named(name: &str) -> Result<Self> {
        serde_json::from_value(serde_json::json!({ "name": name })).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let finite = match self {
            SystemSpec::Fhn(p) => p.a.is_finite(),
            SystemSpec::StuartLandau(p) => {
                let noise_ok = match p.noise {
                    NoiseSpec::Constant(m) => m.iter().all(|v| v.is_finite()),
                    _ => true,
                };
                p.omega.is_finite() && p.kappa.is_finite() && noise_ok
            }
        };
        if !finite {
            return Err(Error::InvalidArgument("system parameters must be finite".into()));
        }
        if let SystemSpec::StuartLandau(p) = self {
            if p.omega <= 0.0 {
                return Err(Error::InvalidArgument("omega must be positive".into()));
            }
        }
        Ok(())
    }

    /// Canonical serialization, the input for cache hashes.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }

    pub fn build(&self) -> Result<BuiltinSystem> {
        self.validate()?;
        Ok(match *self {
            SystemSpec::Fhn(p) => BuiltinSystem::Fhn(FitzHughNagumo { a: p.a }),
            SystemSpec::StuartLandau(p) => {
                let noise = match p.noise {
                    NoiseSpec::Zero => StuartLandauNoise::Zero,
                    NoiseSpec::DiagX => StuartLandauNoise::DiagX,
                    NoiseSpec::Constant(m) => StuartLandauNoise::Constant(m),
                };
                BuiltinSystem::StuartLandau(StuartLandau::new(p.omega, p.kappa).with_noise(noise))
            }
        })
    }

    /// A point near the cycle to start the search from.
    pub fn initial_guess(&self) -> Vec<f64> {
        match self {
            SystemSpec::Fhn(_) => vec![1.0, 0.5],
            SystemSpec::StuartLandau(_) => vec![1.2, 0.0],
        }
    }
}

/// A built-in system behind static dispatch.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinSystem {
    Fhn(FitzHughNagumo<f64>),
    StuartLandau(StuartLandau<f64>),
}

macro_rules! dispatch {
    ($self:ident, $s:ident => $e:expr) => {
        match $self {
            BuiltinSystem::Fhn($s) => $e,
            BuiltinSystem::StuartLandau($s) => $e,
        }
    };
}

impl OscillatorSystem<f64> for BuiltinSystem {
    fn dim(&self) -> usize {
        dispatch!(self, s => s.dim())
    }
    fn noise_dim(&self) -> usize {
        dispatch!(self, s => s.noise_dim())
    }
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        dispatch!(self, s => s.drift(x, out))
    }
    fn noise_into(&self, x: &[f64], out: &mut DMatrix<f64>) {
        dispatch!(self, s => s.noise_into(x, out))
    }
    fn derivative_mode(&self) -> DerivativeMode {
        dispatch!(self, s => s.derivative_mode())
    }
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        dispatch!(self, s => s.jacobian(x))
    }
    fn hessians(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        dispatch!(self, s => s.hessians(x))
    }
    fn noise_jacobian(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        dispatch!(self, s => s.noise_jacobian(x))
    }
    fn extra_drift(&self, x: &[f64]) -> Option<DVector<f64>> {
        dispatch!(self, s => s.extra_drift(x))
    }
    fn has_extra_drift(&self) -> bool {
        dispatch!(self, s => s.has_extra_drift())
    }
}

// ---------------------------------------------------------------- files

/// Writes `bytes` to `path` through `path.partial`: the data is synced before
/// the rename, so a file under the final name is always complete.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let partial = partial_path(path);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    {
        let mut f = fs::File::create(&partial)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&partial, path)?;
    Ok(())
}

pub fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".partial");
    PathBuf::from(name)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

// ---------------------------------------------------------------- cycle

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleFile {
    pub schema_version: u32,
    #[serde(rename = "T")]
    pub period: f64,
    pub n: usize,
    pub samples: Vec<Vec<f64>>,
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tube_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_hash: Option<String>,
}

impl CycleFile {
    pub fn new(cycle: &LimitCycle<f64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            period: cycle.period(),
            n: cycle.n_samples(),
            samples: cycle.samples().iter().map(|q| q.as_slice().to_vec()).collect(),
            residual: cycle.residual(),
            tube_radius: Some(cycle.tube_radius()),
            system_hash: None,
        }
    }

    /// Rebuilds the cycle; tangents and curvature are recomputed from `system`.
    pub fn into_cycle<S: OscillatorSystem<f64> + ?Sized>(self, system: &S) -> Result<LimitCycle<f64>> {
        check_version(self.schema_version)?;
        if self.n != self.samples.len() {
            return Err(Error::Format(format!("n = {} but {} samples", self.n, self.samples.len())));
        }
        let samples = self.samples.into_iter().map(DVector::from_vec).collect();
        let cycle = LimitCycle::from_samples(system, self.period, samples, self.residual)?;
        Ok(match self.tube_radius {
            Some(r) if r > 0.0 => cycle.with_tube_radius(r),
            _ => cycle,
        })
    }
}

/// Plot data: `theta, x0.., f0..` per sample.
pub fn write_cycle_csv<W: Write>(out: W, cycle: &LimitCycle<f64>) -> Result<()> {
    let d = cycle.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["theta".to_string()];
    header.extend((0..d).map(|i| format!("x{i}")));
    header.extend((0..d).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for i in 0..cycle.n_samples() {
        let mut row = vec![cycle.sample_phase(i).to_string()];
        row.extend(cycle.sample(i).iter().map(|v| v.to_string()));
        row.extend(cycle.tangent(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- floquet

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FloquetFile {
    pub schema_version: u32,
    pub phase: f64,
    pub period: f64,
    /// Row major.
    pub monodromy: Vec<Vec<f64>>,
    pub multipliers: Vec<[f64; 2]>,
    pub exponents: Vec<[f64; 2]>,
    pub unit_index: usize,
    pub unit_eigenvector: Vec<f64>,
    pub unit_alignment: f64,
    pub spectral_gap: f64,
    pub hyperbolic: bool,
    pub stable: bool,
    pub ill_conditioned: bool,
    pub unit_tol: f64,
}

fn pairs(zs: &[Complex<f64>]) -> Vec<[f64; 2]> {
    zs.iter().map(|z| [z.re, z.im]).collect()
}

fn complexes(ps: &[[f64; 2]]) -> Vec<Complex<f64>> {
    ps.iter().map(|p| Complex::new(p[0], p[1])).collect()
}

impl FloquetFile {
    pub fn new(data: &FloquetData<f64>) -> Self {
        let m = &data.monodromy;
        Self {
            schema_version: SCHEMA_VERSION,
            phase: data.phase,
            period: data.period,
            monodromy: (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect(),
            multipliers: pairs(&data.multipliers),
            exponents: pairs(&data.exponents),
            unit_index: data.unit_index,
            unit_eigenvector: data.unit_eigenvector.as_slice().to_vec(),
            unit_alignment: data.unit_alignment,
            spectral_gap: data.spectral_gap,
            hyperbolic: data.hyperbolic,
            stable: data.stable,
            ill_conditioned: data.ill_conditioned,
            unit_tol: data.unit_tol,
        }
    }

    pub fn into_data(self) -> Result<FloquetData<f64>> {
        check_version(self.schema_version)?;
        let d = self.monodromy.len();
        if self.monodromy.iter().any(|r| r.len() != d) {
            return Err(Error::Format("monodromy is not square".into()));
        }
        let flat: Vec<f64> = self.monodromy.into_iter().flatten().collect();
        Ok(FloquetData {
            phase: self.phase,
            period: self.period,
            monodromy: DMatrix::from_row_slice(d, d, &flat),
            multipliers: complexes(&self.multipliers),
            exponents: complexes(&self.exponents),
            unit_index: self.unit_index,
            unit_eigenvector: DVector::from_vec(self.unit_eigenvector),
            unit_alignment: self.unit_alignment,
            spectral_gap: self.spectral_gap,
            hyperbolic: self.hyperbolic,
            stable: self.stable,
            ill_conditioned: self.ill_conditioned,
            unit_tol: self.unit_tol,
        })
    }
}

// ---------------------------------------------------------------- jets

/// Lower triangle of a symmetric matrix, row by row: `h00, h10, h11, h20, ...`.
pub fn vech(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in 0..=i {
            v.push(m[(i, j)]);
        }
    }
    v
}

pub fn unvech(v: &[f64], d: usize) -> Result<DMatrix<f64>> {
    if v.len() != d * (d + 1) / 2 {
        return Err(Error::Format(format!("vech of length {} does not fit dimension {d}", v.len())));
    }
    let mut m = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in 0..=i {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JetRecord {
    pub phase: f64,
    pub gradient: Vec<f64>,
    pub hessian_vech: Vec<f64>,
    pub residuals: JetResiduals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JetsFile {
    pub schema_version: u32,
    pub period: f64,
    pub n: usize,
    pub dim: usize,
    pub periodicity_residual: f64,
    pub max_residuals: JetResiduals,
    pub jets: Vec<JetRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_hash: Option<String>,
}

impl JetsFile {
    pub fn new(profile: &JetProfile<f64>) -> Self {
        let dim = profile.jets.first().map_or(0, |j| j.gradient.len());
        Self {
            schema_version: SCHEMA_VERSION,
            period: profile.period,
            n: profile.len(),
            dim,
            periodicity_residual: profile.periodicity_residual,
            max_residuals: profile.max_residuals(),
            jets: profile
                .jets
                .iter()
                .map(|j| JetRecord {
                    phase: j.phase,
                    gradient: j.gradient.as_slice().to_vec(),
                    hessian_vech: vech(&j.hessian),
                    residuals: j.residuals,
                })
                .collect(),
            system_hash: None,
        }
    }

    pub fn into_profile<S: OscillatorSystem<f64> + ?Sized>(
        self,
        system: &S,
        cycle: &LimitCycle<f64>,
    ) -> Result<JetProfile<f64>> {
        check_version(self.schema_version)?;
        if self.n != self.jets.len() {
            return Err(Error::Format(format!("n = {} but {} jets", self.n, self.jets.len())));
        }
        if self.period.to_bits() != cycle.period().to_bits() {
            return Err(Error::Format("jets were computed for a different cycle".into()));
        }
        let jets = self
            .jets
            .into_iter()
            .map(|r| {
                Ok(IsochronJet {
                    phase: r.phase,
                    hessian: unvech(&r.hessian_vech, self.dim)?,
                    gradient: DVector::from_vec(r.gradient),
                    residuals: r.residuals,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        JetProfile::from_jets(system, cycle, jets, self.periodicity_residual)
    }
}

const RESIDUAL_COLUMNS: [&str; 6] = ["normalization", "transport", "left_eigen", "tangential", "fixed_point", "symmetry"];

/// One row per phase: `theta, g0.., h00, h10, h11, .., residuals`.
pub fn write_jets_csv<W: Write>(out: W, profile: &JetProfile<f64>) -> Result<()> {
    let d = profile.jets.first().map_or(0, |j| j.gradient.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["theta".to_string()];
    header.extend((0..d).map(|i| format!("g{i}")));
    for i in 0..d {
        for j in 0..=i {
            header.push(format!("h{i}{j}"));
        }
    }
    header.extend(RESIDUAL_COLUMNS.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for jet in &profile.jets {
        let r = &jet.residuals;
        let mut row = vec![jet.phase.to_string()];
        row.extend(jet.gradient.iter().map(|v| v.to_string()));
        row.extend(vech(&jet.hessian).iter().map(|v| v.to_string()));
        row.extend(
            [r.normalization, r.transport, r.left_eigen, r.tangential, r.fixed_point, r.symmetry]
                .iter()
                .map(|v| v.to_string()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- coefficients

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsFile {
    pub schema_version: u32,
    pub system: SystemSpec,
    pub period: f64,
    pub sigma2: f64,
    pub sigma: f64,
    /// The Itô frequency shift, the quantity compared against ensembles.
    pub b: f64,
    pub b_strat: Option<f64>,
    pub b_k: Option<f64>,
    pub n_points: usize,
    pub rule: String,
    pub periodicity_residual: f64,
    pub max_residuals: JetResiduals,
}

impl CoefficientsFile {
    pub fn new(system: SystemSpec, coeffs: &PhaseCoefficients<f64>, profile: &JetProfile<f64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            system,
            period: profile.period,
            sigma2: coeffs.sigma2,
            sigma: coeffs.sigma,
            b: coeffs.b_ito,
            b_strat: coeffs.b_strat,
            b_k: coeffs.b_k,
            n_points: coeffs.n_points,
            rule: coeffs.rule.clone(),
            periodicity_residual: profile.periodicity_residual,
            max_residuals: profile.max_residuals(),
        }
    }
}

pub fn write_coefficients_csv<W: Write>(out: W, file: &CoefficientsFile) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["quantity", "value"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for (k, v) in [
        ("period", file.period.to_string()),
        ("sigma2", file.sigma2.to_string()),
        ("sigma", file.sigma.to_string()),
        ("b", file.b.to_string()),
        ("b_strat", opt(file.b_strat)),
        ("b_k", opt(file.b_k)),
    ] {
        w.write_record([k, v.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- ensembles

/// Ensemble summary without the per-trajectory records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleFile {
    pub schema_version: u32,
    pub system: SystemSpec,
    pub period: f64,
    pub eps: f64,
    pub t_obs: f64,
    pub t_obs_periods: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub master_seed: u64,
    pub n_total: usize,
    pub n_valid: usize,
    pub n_exited: usize,
    pub exit_fraction: f64,
    pub b_n: f64,
    pub sigma_n: f64,
    pub stderr_b: f64,
    pub u_moments: Moments,
    pub occupancy: Option<f64>,
}

impl EnsembleFile {
    pub fn new(system: SystemSpec, period: f64, stats: &EnsembleStats) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            system,
            period,
            eps: stats.eps,
            t_obs: stats.t_obs,
            t_obs_periods: stats.t_obs / period,
            dt: stats.dt,
            scheme: stats.scheme,
            master_seed: stats.master_seed,
            n_total: stats.n_total,
            n_valid: stats.n_valid,
            n_exited: stats.n_exited,
            exit_fraction: stats.exit_fraction(),
            b_n: stats.b_n,
            sigma_n: stats.sigma_n,
            stderr_b: stats.stderr_b,
            u_moments: stats.u_moments,
            occupancy: stats.occupancy,
        }
    }
}

/// `index, u, max_dist, exited, winding`; `u` is empty and `winding` is
/// `inf` for exited trajectories.
pub fn write_trajectories_csv<W: Write>(out: W, stats: &EnsembleStats) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "u", "max_dist", "exited", "winding"])?;
    for r in &stats.records {
        let winding = match r.winding {
            Winding::Finite(k) => k.to_string(),
            Winding::Infinite => "inf".into(),
        };
        w.write_record([
            r.index.to_string(),
            r.u.map_or(String::new(), |u| u.to_string()),
            r.max_distance.to_string(),
            r.exited.to_string(),
            winding,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plot data: histogram of `u` over `bins` equal bins spanning the samples.
pub fn write_histogram_csv<W: Write>(out: W, samples: &[f64], bins: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lo", "hi", "count", "density"])?;
    if !samples.is_empty() && bins > 0 {
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for &s in samples {
            let k = (((s - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        let total = samples.len() as f64;
        for (k, c) in counts.iter().enumerate() {
            let a = lo + k as f64 * width;
            let density = *c as f64 / (total * width);
            w.write_record([a.to_string(), (a + width).to_string(), c.to_string(), density.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Plot data: `t, theta, theta_minus_t` along one tracked trajectory.
pub fn write_phase_series_csv<W: Write>(out: W, series: &PhaseSeries<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "theta", "theta_minus_t"])?;
    for (t, th) in series.times.iter().zip(&series.phases) {
        w.write_record([t.to_string(), th.to_string(), (th - t).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

//! Run configuration: one strict JSON document, with command-line flags
//! applied on top before validation.

use std::fmt;
use std::path::PathBuf;

use isochron::io::SystemSpec;
use isochron::montecarlo::Scheme;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    FindCycle,
    Floquet,
    Jets,
    Coeffs,
    Simulate,
    Table1,
    Oracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::FindCycle => "find-cycle",
            Command::Floquet => "floquet",
            Command::Jets => "jets",
            Command::Coeffs => "coeffs",
            Command::Simulate => "simulate",
            Command::Table1 => "table1",
            Command::Oracle => "oracle",
        }
    }
}

/// A duration, either absolute or in multiples of the period:
/// `12.5`, `"40T"`, `"0.001T"` or `"T/1000"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeSpec {
    Absolute(f64),
    Periods(f64),
}

impl TimeSpec {
    pub fn resolve(self, period: f64) -> f64 {
        match self {
            TimeSpec::Absolute(t) => t,
            TimeSpec::Periods(k) => k * period,
        }
    }

    fn value(self) -> f64 {
        match self {
            TimeSpec::Absolute(v) | TimeSpec::Periods(v) => v,
        }
    }
}

impl std::str::FromStr for TimeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let bad = || format!("cannot read `{s}` as a time (try 12.5, 40T or T/1000)");
        let spec = if let Some(div) = s.strip_prefix("T/") {
            TimeSpec::Periods(1.0 / div.trim().parse::<f64>().map_err(|_| bad())?)
        } else if let Some(k) = s.strip_suffix('T') {
            let k = k.trim();
            TimeSpec::Periods(if k.is_empty() { 1.0 } else { k.parse().map_err(|_| bad())? })
        } else {
            TimeSpec::Absolute(s.parse().map_err(|_| bad())?)
        };
        if !(spec.value().is_finite() && spec.value() > 0.0) {
            return Err(format!("time `{s}` must be positive and finite"));
        }
        Ok(spec)
    }
}

impl fmt::Display for TimeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeSpec::Absolute(t) => write!(f, "{t}"),
            TimeSpec::Periods(k) => write!(f, "{k}T"),
        }
    }
}

impl Serialize for TimeSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            TimeSpec::Absolute(t) => s.serialize_f64(*t),
            TimeSpec::Periods(_) => s.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for TimeSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::Number(n) => {
                let t = n.as_f64().ok_or_else(|| D::Error::custom("bad number"))?;
                if !(t > 0.0) {
                    return Err(D::Error::custom("times must be positive"));
                }
                Ok(TimeSpec::Absolute(t))
            }
            serde_json::Value::String(s) => s.parse().map_err(D::Error::custom),
            other => Err(D::Error::custom(format!("expected a number or a string like \"40T\", got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleSettings {
    pub n_samples: usize,
    pub cycle_tol: f64,
    pub integrator_tol: f64,
}

impl Default for CycleSettings {
    fn default() -> Self {
        Self { n_samples: 512, cycle_tol: 1e-10, integrator_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JetSettings {
    pub n: usize,
    pub tol: f64,
}

impl Default for JetSettings {
    fn default() -> Self {
        Self { n: 256, tol: 1e-11 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub eps: f64,
    pub t_obs: TimeSpec,
    pub n: usize,
    pub dt: TimeSpec,
    pub scheme: Scheme,
    /// Spacing of phase observations; rounded to a whole number of steps.
    pub observe_every: TimeSpec,
    pub beta1: Option<f64>,
    pub relax: bool,
    pub x0_phase: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            eps: 0.1,
            t_obs: TimeSpec::Periods(40.0),
            n: 1000,
            dt: TimeSpec::Periods(1.0 / 2000.0),
            scheme: Scheme::Rk4Maruyama,
            observe_every: TimeSpec::Periods(1.0 / 16.0),
            beta1: None,
            relax: true,
            x0_phase: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self { dir: PathBuf::from("isochron-out"), format: Format::Json }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSettings {
    pub enabled: bool,
    /// Defaults to `<output dir>/cache`.
    pub dir: Option<PathBuf>,
}

impl Default for CacheSettings {
    fn default() -> Self {
        Self { enabled: true, dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Table1Settings {
    /// All five noise levels instead of 0.1 and 0.05.
    pub full: bool,
    pub check: bool,
    pub n: usize,
    /// Integration step for the table runs.
    pub dt: TimeSpec,
}

impl Default for Table1Settings {
    fn default() -> Self {
        Self { full: false, check: false, n: 50_000, dt: TimeSpec::Periods(1.0 / 1000.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSettings {
    pub omega: f64,
    pub kappa: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self { omega: 1.0, kappa: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub command: Option<Command>,
    pub system: SystemSpec,
    pub master_seed: u64,
    pub cycle: CycleSettings,
    pub jets: JetSettings,
    pub sim: SimSettings,
    pub table1: Table1Settings,
    pub oracle: OracleSettings,
    pub output: OutputSettings,
    pub cache: CacheSettings,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: 1,
            command: None,
            system: SystemSpec::default(),
            master_seed: 1,
            cycle: CycleSettings::default(),
            jets: JetSettings::default(),
            sim: SimSettings::default(),
            table1: Table1Settings::default(),
            oracle: OracleSettings::default(),
            output: OutputSettings::default(),
            cache: CacheSettings::default(),
            threads: None,
        }
    }
}

fn in_range(name: &str, v: f64, lo: f64, hi: f64) -> Result<(), CliError> {
    if v.is_finite() && v >= lo && v <= hi {
        Ok(())
    } else {
        Err(CliError::config(format!("{name} = {v} is outside [{lo}, {hi}]")))
    }
}

fn count(name: &str, v: usize, lo: usize, hi: usize) -> Result<(), CliError> {
    if (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(CliError::config(format!("{name} = {v} is outside [{lo}, {hi}]")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self, CliError> {
        serde_json::from_value(value).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != 1 {
            return Err(CliError::config(format!("unsupported schema_version {}", self.schema_version)));
        }
        self.system.validate().map_err(|e| CliError::config(e.to_string()))?;
        count("cycle.n_samples", self.cycle.n_samples, 16, 1 << 20)?;
        in_range("cycle.cycle_tol", self.cycle.cycle_tol, 1e-15, 1e-3)?;
        in_range("cycle.integrator_tol", self.cycle.integrator_tol, 1e-15, 1e-3)?;
        count("jets.n", self.jets.n, 4, 1 << 16)?;
        in_range("jets.tol", self.jets.tol, 1e-15, 1e-3)?;
        in_range("sim.eps", self.sim.eps, 0.0, 10.0)?;
        count("sim.n", self.sim.n, 1, 100_000_000)?;
        count("table1.n", self.table1.n, 2, 100_000_000)?;
        in_range("sim.x0_phase", self.sim.x0_phase, f64::MIN, f64::MAX)?;
        if let Some(b) = self.sim.beta1 {
            if !(b > 0.0 && b < 1.0) {
                return Err(CliError::config(format!("sim.beta1 = {b} must lie in (0, 1)")));
            }
        }
        in_range("oracle.omega", self.oracle.omega, 1e-3, 1e3)?;
        in_range("oracle.kappa", self.oracle.kappa, -100.0, 100.0)?;
        if let Some(t) = self.threads {
            count("threads", t, 1, 4096)?;
        }
        Ok(())
    }

    pub fn command(&self) -> Result<Command, CliError> {
        self.command.ok_or_else(|| CliError::config("no command given"))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache.dir.clone().unwrap_or_else(|| self.output.dir.join("cache"))
    }
}

//! The pipeline behind each subcommand: cycle → Floquet → jets →
//! coefficients → ensembles. Results go to the output directory; a summary
//! document goes to stdout and progress to stderr.

use std::fs;
use std::path::{Path, PathBuf};

use isochron::cycle::{find_limit_cycle, CycleOptions};
use isochron::floquet::{floquet_at, FloquetOptions};
use isochron::io::{self, BuiltinSystem, CoefficientsFile, CycleFile, EnsembleFile, FloquetFile, JetsFile, SCHEMA_VERSION};
use isochron::montecarlo::{
    estimate_dephasing_with_progress, simulate_sde, EnsembleStats, InitialCondition, PhaseEstimator, PhaseTracker,
    SimConfig,
};
use isochron::phase_reduction::{isochron_jets, phase_coefficients, JetOptions, JetProfile};
use isochron::LimitCycle64;
use serde::Serialize;
use serde_json::json;

use crate::cache::{Cache, Lookup};
use crate::config::{Command, Format, RunConfig, TimeSpec};
use crate::error::{CliError, EXIT_CHECK};
use crate::oracle::run_oracle;

pub struct Outcome {
    pub stdout: String,
    pub code: i32,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self { stdout, code: 0 }
    }
}

fn json_line<T: Serialize>(value: &T) -> Result<String, CliError> {
    Ok(io::to_json(value)?)
}

struct Pipeline<'a> {
    config: &'a RunConfig,
    system: BuiltinSystem,
    cache: Cache,
    out: PathBuf,
}

impl<'a> Pipeline<'a> {
    fn new(config: &'a RunConfig) -> Result<Self, CliError> {
        let system = config.system.build().map_err(|e| CliError::config(e.to_string()))?;
        Ok(Self { config, system, cache: Cache::new(config), out: config.output.dir.clone() })
    }

    fn csv(&self) -> bool {
        self.config.output.format == Format::Csv
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.artifact(name);
        io::write_json(&path, value)?;
        Ok(path)
    }

    fn write_csv(
        &self,
        name: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> isochron::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let path = self.artifact(name);
        let mut buf = Vec::new();
        fill(&mut buf)?;
        io::write_atomic(&path, &buf)?;
        Ok(path)
    }

    fn cycle(&self) -> Result<LimitCycle64, CliError> {
        let (cached, status) = self.cache.load_cycle(&self.system);
        if let Some(cycle) = cached {
            eprintln!("cycle: cache hit");
            return Ok(cycle);
        }
        if status == Lookup::Miss {
            eprintln!("cycle: cache miss, computing");
        }
        let c = &self.config.cycle;
        let opts = CycleOptions {
            n_samples: c.n_samples,
            cycle_tol: c.cycle_tol,
            integrator_tol: c.integrator_tol,
            ..CycleOptions::default()
        };
        let cycle = find_limit_cycle(&self.system, &self.config.system.initial_guess(), &opts)?;
        self.cache.store_cycle(&cycle)?;
        Ok(cycle)
    }

    fn jets(&self, cycle: &LimitCycle64) -> Result<JetProfile<f64>, CliError> {
        let (cached, status) = self.cache.load_jets(&self.system, cycle);
        if let Some(jets) = cached {
            eprintln!("jets: cache hit");
            return Ok(jets);
        }
        if status == Lookup::Miss {
            eprintln!("jets: cache miss, computing");
        }
        let opts = JetOptions { tol: self.config.jets.tol, ..JetOptions::default() };
        let jets = isochron_jets(&self.system, cycle, self.config.jets.n, &opts)?;
        self.cache.store_jets(&jets)?;
        Ok(jets)
    }

    fn sim_config(&self, period: f64, eps: f64, t_obs: f64, n: usize, dt: TimeSpec) -> Result<SimConfig<f64>, CliError> {
        let s = &self.config.sim;
        let mut sim = SimConfig::for_cycle(period, eps, t_obs, n, self.config.master_seed);
        sim.dt = dt.resolve(period);
        sim.scheme = s.scheme;
        sim.beta1 = s.beta1;
        sim.relax = s.relax;
        sim.x0 = InitialCondition::OnCycle(s.x0_phase);
        let every = s.observe_every.resolve(period);
        sim.stride = ((every / sim.effective_dt()).round() as usize).max(1);
        sim.validate(period).map_err(|e| CliError::config(e.to_string()))?;
        Ok(sim)
    }

    fn ensemble(&self, cycle: &LimitCycle64, jets: &JetProfile<f64>, sim: &SimConfig<f64>) -> Result<EnsembleStats, CliError> {
        let label = format!("eps={}", sim.eps);
        let progress = |done: usize, total: usize| {
            eprintln!("simulate {label}: {}% ({done}/{total})", done * 100 / total.max(1));
        };
        Ok(estimate_dephasing_with_progress(&self.system, cycle, jets, sim, &progress)?)
    }
}

fn paths(ps: &[PathBuf]) -> Vec<String> {
    ps.iter().map(|p| p.display().to_string()).collect()
}

pub fn run(config: &RunConfig) -> Result<Outcome, CliError> {
    config.validate()?;
    let command = config.command()?;
    if command == Command::Oracle {
        return oracle(config);
    }
    let p = Pipeline::new(config)?;
    match command {
        Command::FindCycle => find_cycle(&p),
        Command::Floquet => floquet(&p),
        Command::Jets => jets(&p),
        Command::Coeffs => coeffs(&p),
        Command::Simulate => simulate(&p),
        Command::Table1 => table1(&p),
        Command::Oracle => unreachable!(),
    }
}

fn find_cycle(p: &Pipeline) -> Result<Outcome, CliError> {
    let cycle = p.cycle()?;
    let mut file = CycleFile::new(&cycle);
    file.system_hash = Some(p.cache.cycle_key().to_string());
    let mut written = vec![p.write_json("cycle.json", &file)?];
    if p.csv() {
        written.push(p.write_csv("cycle.csv", |b| io::write_cycle_csv(b, &cycle))?);
    }
    json_line(&json!({
        "schema_version": SCHEMA_VERSION,
        "command": "find-cycle",
        "system": p.config.system,
        "T": cycle.period(),
        "n": cycle.n_samples(),
        "residual": cycle.residual(),
        "tube_radius": cycle.tube_radius(),
        "artifacts": paths(&written),
    }))
    .map(Outcome::ok)
}

fn floquet(p: &Pipeline) -> Result<Outcome, CliError> {
    let cycle = p.cycle()?;
    let data = floquet_at(&p.system, &cycle, 0.0, p.config.cycle.integrator_tol, &FloquetOptions::default())?;
    let file = FloquetFile::new(&data);
    p.write_json("floquet.json", &file)?;
    json_line(&file).map(Outcome::ok)
}

fn jets(p: &Pipeline) -> Result<Outcome, CliError> {
    let cycle = p.cycle()?;
    let jets = p.jets(&cycle)?;
    let file = JetsFile::new(&jets);
    let mut written = vec![p.write_json("jets.json", &file)?];
    if p.csv() {
        written.push(p.write_csv("jets.csv", |b| io::write_jets_csv(b, &jets))?);
    }
    json_line(&json!({
        "schema_version": SCHEMA_VERSION,
        "command": "jets",
        "system": p.config.system,
        "period": jets.period,
        "n": jets.len(),
        "periodicity_residual": jets.periodicity_residual,
        "max_residuals": jets.max_residuals(),
        "within_thresholds": jets.max_residuals().within_thresholds(),
        "artifacts": paths(&written),
    }))
    .map(Outcome::ok)
}

fn coefficients(p: &Pipeline) -> Result<(LimitCycle64, JetProfile<f64>, CoefficientsFile), CliError> {
    let cycle = p.cycle()?;
    let jets = p.jets(&cycle)?;
    let coeffs = phase_coefficients(&cycle, &jets, &p.system);
    let file = CoefficientsFile::new(p.config.system, &coeffs, &jets);
    Ok((cycle, jets, file))
}

fn coeffs(p: &Pipeline) -> Result<Outcome, CliError> {
    let (_, _, file) = coefficients(p)?;
    p.write_json("coeffs.json", &file)?;
    if p.csv() {
        p.write_csv("coeffs.csv", |b| io::write_coefficients_csv(b, &file))?;
    }
    json_line(&file).map(Outcome::ok)
}

fn simulate(p: &Pipeline) -> Result<Outcome, CliError> {
    let cycle = p.cycle()?;
    let jets = p.jets(&cycle)?;
    let s = &p.config.sim;
    let period = cycle.period();
    let sim = p.sim_config(period, s.eps, s.t_obs.resolve(period), s.n, s.dt)?;
    let stats = p.ensemble(&cycle, &jets, &sim)?;
    let file = EnsembleFile::new(p.config.system, period, &stats);
    p.write_json("ensemble.json", &file)?;
    if p.csv() {
        p.write_csv("trajectories.csv", |b| io::write_trajectories_csv(b, &stats))?;
        let samples: Vec<f64> = stats.samples().collect();
        let bins = ((samples.len() as f64).sqrt().ceil() as usize).clamp(1, 200);
        p.write_csv("histogram.csv", |b| io::write_histogram_csv(b, &samples, bins))?;
        write_sample_path(p, &cycle, &jets, &sim)?;
    }
    json_line(&file).map(Outcome::ok)
}

/// Phase against time along trajectory 0, observed at every step.
fn write_sample_path(
    p: &Pipeline,
    cycle: &LimitCycle64,
    jets: &JetProfile<f64>,
    sim: &SimConfig<f64>,
) -> Result<(), CliError> {
    let mut one = sim.clone();
    one.stride = 1;
    let traj = simulate_sde(&p.system, cycle, &one, 0)?;
    let mut estimator = PhaseEstimator::new(cycle, jets);
    if sim.relax {
        estimator = estimator.with_relaxation(&p.system);
    }
    let mut tracker = PhaseTracker::new(estimator, true);
    for (t, x) in traj.times.iter().zip(&traj.states) {
        if !tracker.observe(*t, x.as_slice())? {
            break;
        }
    }
    let series = tracker.finish();
    p.write_csv("phase.csv", |b| io::write_phase_series_csv(b, &series))?;
    Ok(())
}

/// Published reference rows: `(ε, t_obs / T, σ_N, b_N)`.
pub const REFERENCE_ROWS: [(f64, f64, f64, f64); 5] =
    [(0.5, 2.0, 1.34, 0.133), (0.2, 10.0, 1.23, 0.719), (0.1, 40.0, 1.13, 0.699), (0.05, 160.0, 1.10, 0.690), (0.02, 1000.0, 1.10, 0.689)];
/// Reference limit values `(σ, b)` and the accepted windows around them.
pub const REFERENCE_LIMIT: (f64, f64) = (1.07, 0.688);
pub const LIMIT_SIGMA_WINDOW: (f64, f64) = (1.05, 1.09);
pub const LIMIT_B_WINDOW: (f64, f64) = (0.678, 0.698);
pub const SIGMA_N_TOL: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
struct TableRow {
    eps: f64,
    t_obs_periods: f64,
    n_total: usize,
    n_valid: usize,
    n_exited: usize,
    sigma_n: f64,
    b_n: f64,
    stderr_b: f64,
    reference_sigma: f64,
    reference_b: f64,
    b_ok: bool,
    sigma_ok: bool,
}

fn table1(p: &Pipeline) -> Result<Outcome, CliError> {
    let settings = &p.config.table1;
    let (cycle, jets, limit) = coefficients(p)?;
    let period = cycle.period();
    let rows: Vec<_> = REFERENCE_ROWS
        .iter()
        .filter(|r| settings.full || r.0 == 0.1 || r.0 == 0.05)
        .copied()
        .collect();
    let mut table = Vec::new();
    for (eps, periods, ref_sigma, ref_b) in rows {
        let sim = p.sim_config(period, eps, periods * period, settings.n, settings.dt)?;
        let stats = p.ensemble(&cycle, &jets, &sim)?;
        table.push(TableRow {
            eps,
            t_obs_periods: periods,
            n_total: stats.n_total,
            n_valid: stats.n_valid,
            n_exited: stats.n_exited,
            sigma_n: stats.sigma_n,
            b_n: stats.b_n,
            stderr_b: stats.stderr_b,
            reference_sigma: ref_sigma,
            reference_b: ref_b,
            b_ok: (stats.b_n - ref_b).abs() <= 3.0 * stats.stderr_b,
            sigma_ok: (stats.sigma_n - ref_sigma).abs() <= SIGMA_N_TOL,
        });
    }
    let limit_sigma_ok = (LIMIT_SIGMA_WINDOW.0..=LIMIT_SIGMA_WINDOW.1).contains(&limit.sigma);
    let limit_b_ok = (LIMIT_B_WINDOW.0..=LIMIT_B_WINDOW.1).contains(&limit.b);
    let passed = limit_sigma_ok && limit_b_ok && table.iter().all(|r| r.b_ok && r.sigma_ok);

    let report = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "table1",
        "system": p.config.system,
        "period": period,
        "n": settings.n,
        "dt": settings.dt,
        "master_seed": p.config.master_seed,
        "rows": table,
        "limit": {
            "sigma": limit.sigma,
            "b": limit.b,
            "reference_sigma": REFERENCE_LIMIT.0,
            "reference_b": REFERENCE_LIMIT.1,
            "sigma_ok": limit_sigma_ok,
            "b_ok": limit_b_ok,
        },
        "check_passed": passed,
    });
    p.write_json("table1.json", &report)?;

    let mut text = String::new();
    text.push_str("  eps   | sigma_N | b_N                | t_obs\n");
    text.push_str("--------+---------+--------------------+--------\n");
    for r in &table {
        text.push_str(&format!(
            "  {:<5.2} | {:<7.4} | {:.4} ± {:<8.4} | {} T\n",
            r.eps, r.sigma_n, r.b_n, r.stderr_b, r.t_obs_periods
        ));
    }
    text.push_str("--------+---------+--------------------+--------\n");
    text.push_str(&format!("  0+    | {:<7.4} | {:<18.4} | NA\n", limit.sigma, limit.b));
    if settings.check {
        for r in &table {
            text.push_str(&format!(
                "check eps={}: b_N {:.4} vs {} ± {:.4} {}; sigma_N {:.4} vs {} ± {} {}\n",
                r.eps,
                r.b_n,
                r.reference_b,
                3.0 * r.stderr_b,
                verdict(r.b_ok),
                r.sigma_n,
                r.reference_sigma,
                SIGMA_N_TOL,
                verdict(r.sigma_ok)
            ));
        }
        text.push_str(&format!(
            "check limit: sigma {:.5} in [{}, {}] {}; b {:.5} in [{}, {}] {}\n",
            limit.sigma,
            LIMIT_SIGMA_WINDOW.0,
            LIMIT_SIGMA_WINDOW.1,
            verdict(limit_sigma_ok),
            limit.b,
            LIMIT_B_WINDOW.0,
            LIMIT_B_WINDOW.1,
            verdict(limit_b_ok)
        ));
    }
    let code = if settings.check && !passed { EXIT_CHECK } else { 0 };
    Ok(Outcome { stdout: text, code })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn oracle(config: &RunConfig) -> Result<Outcome, CliError> {
    let report = run_oracle(config)?;
    let path: &Path = &config.output.dir;
    fs::create_dir_all(path).map_err(|e| CliError::io(e.to_string()))?;
    io::write_json(&path.join("oracle.json"), &report)?;
    let code = if report.pass { 0 } else { EXIT_CHECK };
    Ok(Outcome { stdout: json_line(&report)?, code })
}

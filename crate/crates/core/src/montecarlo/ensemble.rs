use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cycle::LimitCycle;
use crate::dynamics::OscillatorSystem;
use crate::error::{Error, Result};
use crate::phase_reduction::JetProfile;
use crate::scalar::Real;

use super::sde::{observation_steps, Scheme, SimConfig, Stepper};
use super::tracking::{PhaseEstimator, PhaseTracker, Winding};

/// Outcome of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub index: u64,
    /// `θ̃(t_obs) − t_obs − θ̃(0)`, absent for exited trajectories.
    pub u: Option<f64>,
    pub theta0: f64,
    pub max_distance: f64,
    pub max_slip: f64,
    pub exited: bool,
    pub exit_time: Option<f64>,
    /// `⌊θ̃(t_obs)/T⌋`.
    pub winding: Winding,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (divisor `n − 1`).
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Two-pass moments; skewness and kurtosis use population central moments.
pub fn moments(xs: &[f64]) -> Moments {
    let n = xs.len();
    if n == 0 {
        return Moments::default();
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let std = if n > 1 { (m2 / (nf - 1.0)).sqrt() } else { 0.0 };
    let (m2, m3, m4) = (m2 / nf, m3 / nf, m4 / nf);
    let (skewness, excess_kurtosis) = if m2 > 0.0 { (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0) } else { (0.0, 0.0) };
    Moments { n, mean, std, skewness, excess_kurtosis }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub eps: f64,
    pub t_obs: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub master_seed: u64,
    pub n_total: usize,
    pub n_valid: usize,
    pub n_exited: usize,
    pub b_n: f64,
    pub sigma_n: f64,
    pub stderr_b: f64,
    pub u_moments: Moments,
    /// Fraction of trajectories whose observed distance stayed within
    /// `ε^β₁`, when `β₁` is configured.
    pub occupancy: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub records: Vec<TrajectoryRecord>,
}

impl EnsembleStats {
    pub fn exit_fraction(&self) -> f64 {
        self.n_exited as f64 / self.n_total as f64
    }

    pub fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().filter_map(|r| r.u)
    }
}

fn run_one<T: Real, S: OscillatorSystem<T>>(
    system: &S,
    estimator: PhaseEstimator<'_, T>,
    config: &SimConfig<T>,
    x0: &[T],
    index: u64,
) -> Result<TrajectoryRecord> {
    let mut stepper = Stepper::new(system, config, index);
    let dt = config.effective_dt();
    let n_steps = config.n_steps();
    let mut tracker = PhaseTracker::new(estimator, false);
    let mut x = x0.to_vec();
    let mut done = 0usize;
    for k in observation_steps(n_steps, config.stride) {
        let finite = stepper.advance(&mut x, k - done);
        done = k;
        if !finite {
            tracker.mark_exit(T::from_usize_lossy(done) * dt);
            break;
        }
        if !tracker.observe(T::from_usize_lossy(k) * dt, &x)? {
            break;
        }
        if k == n_steps && config.relax {
            let target = estimator.cycle.tube_radius() * T::lit(1e-3);
            match estimator.relaxed_phase(&x, target) {
                Ok(exact) => tracker.correct_last(exact),
                Err(Error::OutsideTube { .. }) => tracker.mark_exit(T::from_usize_lossy(k) * dt),
                Err(e) => return Err(e),
            }
        }
    }
    let series = tracker.finish();
    let period = series.period;
    let theta0 = series.initial_phase();
    let (u, winding) = if series.exited {
        (None, Winding::Infinite)
    } else {
        let end = series.final_phase();
        let w = (end / period).floor().to_i64().unwrap_or(i64::MAX);
        (Some((end - config.t_obs - theta0).as_f64()), Winding::Finite(w))
    };
    Ok(TrajectoryRecord {
        index,
        u,
        theta0: theta0.as_f64(),
        max_distance: series.max_distance.as_f64(),
        max_slip: series.max_slip.as_f64(),
        exited: series.exited,
        exit_time: series.exit_time.map(|t| t.as_f64()),
        winding,
    })
}

/// Runs every trajectory of the ensemble in parallel; records come back in
/// index order regardless of scheduling. `progress(done, total)` fires once per
/// percent.
pub fn run_ensemble<T: Real, S: OscillatorSystem<T>>(
    system: &S,
    cycle: &LimitCycle<T>,
    jets: &JetProfile<T>,
    config: &SimConfig<T>,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<Vec<TrajectoryRecord>> {
    config.validate(cycle.period())?;
    let x0 = config.initial_point(cycle)?;
    let mut estimator = PhaseEstimator::new(cycle, jets);
    if config.relax {
        estimator = estimator.with_relaxation(system);
    }
    let total = config.n_trajectories;
    let counter = AtomicUsize::new(0);
    (0..total as u64)
        .into_par_iter()
        .map(|i| {
            let r = run_one(system, estimator, config, x0.as_slice(), i);
            let done = counter.fetch_add(1, Ordering::Relaxed) + 1;
            if done * 100 / total != (done - 1) * 100 / total {
                progress(done, total);
            }
            r
        })
        .collect()
}

pub fn estimate_dephasing<T: Real, S: OscillatorSystem<T>>(
    system: &S,
    cycle: &LimitCycle<T>,
    jets: &JetProfile<T>,
    config: &SimConfig<T>,
) -> Result<EnsembleStats> {
    estimate_dephasing_with_progress(system, cycle, jets, config, &|_, _| {})
}

pub fn estimate_dephasing_with_progress<T: Real, S: OscillatorSystem<T>>(
    system: &S,
    cycle: &LimitCycle<T>,
    jets: &JetProfile<T>,
    config: &SimConfig<T>,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<EnsembleStats> {
    let records = run_ensemble(system, cycle, jets, config, progress)?;
    let n_total = records.len();
    let u: Vec<f64> = records.iter().filter_map(|r| r.u).collect();
    let n_valid = u.len();
    if n_valid < 2 || 2 * n_valid < n_total {
        return Err(Error::TooFewValid { valid: n_valid, total: n_total });
    }
    let eps = config.eps.as_f64();
    let t_obs = config.t_obs.as_f64();
    let m = moments(&u);
    let occupancy = config.beta1.map(|b| occupancy_fraction(&records, eps, b.as_f64(), config.effective_dt().as_f64()));
    Ok(EnsembleStats {
        eps,
        t_obs,
        dt: config.effective_dt().as_f64(),
        scheme: config.scheme,
        master_seed: config.master_seed,
        n_total,
        n_valid,
        n_exited: n_total - n_valid,
        b_n: m.mean / (eps * eps * t_obs),
        sigma_n: m.std / (eps * t_obs.sqrt()),
        stderr_b: m.std / ((n_valid as f64).sqrt() * eps * eps * t_obs),
        u_moments: m,
        occupancy,
        records,
    })
}

/// Radius `ε^β₁`, floored at the time step: with `ε = 0` the only departure
/// from the cycle is discretization error.
fn occupancy_fraction(records: &[TrajectoryRecord], eps: f64, beta1: f64, dt: f64) -> f64 {
    let radius = eps.powf(beta1).max(dt);
    let inside = records.iter().filter(|r| !r.exited && r.max_distance <= radius).count();
    inside as f64 / records.len() as f64
}

/// Fraction of trajectories whose observed distance to the cycle never
/// exceeds `ε^β₁` up to `t_obs`.
pub fn tube_statistics<T: Real, S: OscillatorSystem<T>>(
    system: &S,
    cycle: &LimitCycle<T>,
    jets: &JetProfile<T>,
    config: &SimConfig<T>,
    beta1: T,
) -> Result<f64> {
    if !(beta1 > T::zero() && beta1 < T::one()) {
        return Err(Error::InvalidArgument("beta1 must lie in (0, 1)".into()));
    }
    let x0 = config.initial_point(cycle)?;
    let radius = config.eps.powf(beta1);
    let start = cycle.distance_to_cycle(x0.as_slice());
    if config.eps > T::zero() && start >= radius {
        return Err(Error::InvalidArgument(format!(
            "initial distance {} is not inside the tube of radius {}",
            start.as_f64(),
            radius.as_f64()
        )));
    }
    let records = run_ensemble(system, cycle, jets, config, &|_, _| {})?;
    Ok(occupancy_fraction(&records, config.eps.as_f64(), beta1.as_f64(), config.effective_dt().as_f64()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTimeDrift {
    pub estimate: f64,
    pub stderr: f64,
    pub n_valid: usize,
    pub n_total: usize,
}

/// `mean (W(t) − t/T) / (ε² t/T)` over trajectories that stayed near the cycle.
pub fn long_time_drift<T: Real, S: OscillatorSystem<T>>(
    system: &S,
    cycle: &LimitCycle<T>,
    jets: &JetProfile<T>,
    config: &SimConfig<T>,
) -> Result<LongTimeDrift> {
    let eps = config.eps.as_f64();
    let t_obs = config.t_obs.as_f64();
    if eps * eps * t_obs < 10.0 {
        return Err(Error::InvalidArgument(format!("eps²·t_obs = {} is below 10", eps * eps * t_obs)));
    }
    let records = run_ensemble(system, cycle, jets, config, &|_, _| {})?;
    let turns = t_obs / cycle.period().as_f64();
    let scale = eps * eps * turns;
    let values: Vec<f64> = records
        .iter()
        .filter_map(|r| match r.winding {
            Winding::Finite(w) => Some((w as f64 - turns) / scale),
            Winding::Infinite => None,
        })
        .collect();
    let n_total = records.len();
    if values.len() < 2 || 2 * values.len() < n_total {
        return Err(Error::TooFewValid { valid: values.len(), total: n_total });
    }
    let m = moments(&values);
    Ok(LongTimeDrift { estimate: m.mean, stderr: m.std / (values.len() as f64).sqrt(), n_valid: values.len(), n_total })
}

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cycle::{LimitCycle, ProjectionResult};
use crate::dynamics::{flow, OscillatorSystem};
use crate::error::{Error, Result};
use crate::phase_reduction::JetProfile;
use crate::scalar::Real;

use super::sde::Trajectory;

/// Deterministic fallback for points outside the tube: `θ(x) = θ(Φ_s x) − s`
/// once `Φ_s x` is back near the cycle.
#[derive(Clone, Copy)]
pub struct Relaxation<'a, T: Real> {
    pub system: &'a dyn OscillatorSystem<T>,
    /// Flow time after which the phase is declared lost.
    pub max_time: T,
    pub tol: T,
}

impl<T: Real> std::fmt::Debug for Relaxation<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Relaxation").field("max_time", &self.max_time).field("tol", &self.tol).finish()
    }
}

/// Second-order isochron phase near the cycle:
/// `θ* + g(θ*)·δ + ½ δᵗ H(θ*) δ` with `δ = x − q_{θ*}`.
#[derive(Debug, Clone, Copy)]
pub struct PhaseEstimator<'a, T: Real> {
    pub cycle: &'a LimitCycle<T>,
    pub jets: &'a JetProfile<T>,
    /// Half width of the phase window searched around a hint.
    pub half_window: T,
    pub relaxation: Option<Relaxation<'a, T>>,
}

impl<'a, T: Real> PhaseEstimator<'a, T> {
    pub fn new(cycle: &'a LimitCycle<T>, jets: &'a JetProfile<T>) -> Self {
        Self { cycle, jets, half_window: cycle.period() / T::lit(8.0), relaxation: None }
    }

    /// Phases points outside the tube through the flow instead of failing.
    pub fn with_relaxation(mut self, system: &'a dyn OscillatorSystem<T>) -> Self {
        let period = self.cycle.period();
        self.relaxation = Some(Relaxation { system, max_time: T::lit(20.0) * period, tol: T::lit(1e-9) });
        self
    }

    fn jet_phase(&self, x: &[T], p: &ProjectionResult<T>) -> T {
        let delta = DVector::from_column_slice(x) - &p.foot;
        let g = self.jets.gradient_at(p.phase);
        let h = self.jets.hessian_at(p.phase);
        let quad = (delta.transpose() * h * &delta)[(0, 0)];
        p.phase + g.dot(&delta) + T::lit(0.5) * quad
    }

    /// Returns the phase estimate (not wrapped) and the distance to the cycle.
    pub fn estimate(&self, x: &[T], hint: Option<T>) -> Result<(T, T)> {
        let p = self.cycle.nearest_point(x, hint.map(|h| (h, self.half_window)))?;
        let radius = self.cycle.tube_radius();
        if p.distance <= radius {
            return Ok((self.jet_phase(x, &p), p.distance));
        }
        if self.relaxation.is_none() {
            return Err(Error::OutsideTube { distance: p.distance.as_f64(), radius: radius.as_f64() });
        }
        Ok((self.relaxed_phase(x, radius)?, p.distance))
    }

    /// Flows `x` until it is within `target` of the cycle and reads the phase
    /// off there. Needs a relaxation; fails with `OutsideTube` when the flow
    /// does not come back within `max_time`.
    pub fn relaxed_phase(&self, x: &[T], target: T) -> Result<T> {
        let r = self
            .relaxation
            .ok_or_else(|| Error::InvalidArgument("phase estimator has no relaxation".into()))?;
        let chunk = self.cycle.period() / T::lit(4.0);
        let mut y = x.to_vec();
        let mut elapsed = T::zero();
        loop {
            let p = self.cycle.nearest_point(&y, None)?;
            if p.distance <= target {
                return Ok(self.jet_phase(&y, &p) - elapsed);
            }
            if elapsed >= r.max_time {
                return Err(Error::OutsideTube {
                    distance: p.distance.as_f64(),
                    radius: self.cycle.tube_radius().as_f64(),
                });
            }
            y = flow(r.system, &y, chunk, r.tol)?.state.as_slice().to_vec();
            elapsed += chunk;
        }
    }
}

/// Lifted phase at the observation times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSeries<T> {
    pub period: T,
    pub times: Vec<T>,
    pub phases: Vec<T>,
    pub max_distance: T,
    /// Largest `|increment − elapsed time|` between consecutive observations.
    pub max_slip: T,
    pub exited: bool,
    pub exit_time: Option<T>,
}

impl<T: Real> PhaseSeries<T> {
    /// `θ̃(t)` by linear interpolation between observations.
    pub fn phase_at(&self, t: T) -> Option<T> {
        let last = *self.times.last()?;
        if t < self.times[0] || t > last {
            return None;
        }
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return Some(self.phases[0]);
        }
        let i = k - 1;
        if i + 1 == self.times.len() || self.times[i] == t {
            return Some(self.phases[i]);
        }
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        Some(self.phases[i] + w * (self.phases[i + 1] - self.phases[i]))
    }

    pub fn initial_phase(&self) -> T {
        self.phases[0]
    }

    pub fn final_phase(&self) -> T {
        *self.phases.last().expect("series has at least one observation")
    }
}

/// Streaming unwrapper used by both the single-trajectory and the ensemble
/// paths.
#[derive(Debug, Clone)]
pub struct PhaseTracker<'a, T: Real> {
    estimator: PhaseEstimator<'a, T>,
    series: PhaseSeries<T>,
    record: bool,
    last: Option<(T, T)>,
}

impl<'a, T: Real> PhaseTracker<'a, T> {
    /// With `record = false` only the first and latest observations are kept.
    pub fn new(estimator: PhaseEstimator<'a, T>, record: bool) -> Self {
        let series = PhaseSeries {
            period: estimator.cycle.period(),
            times: Vec::new(),
            phases: Vec::new(),
            max_distance: T::zero(),
            max_slip: T::zero(),
            exited: false,
            exit_time: None,
        };
        Self { estimator, series, record, last: None }
    }

    pub fn exited(&self) -> bool {
        self.series.exited
    }

    pub fn mark_exit(&mut self, t: T) {
        self.series.exited = true;
        self.series.exit_time = Some(t);
    }

    /// Feeds the state at time `t`. Leaving the tube ends the series and
    /// returns `Ok(false)`.
    pub fn observe(&mut self, t: T, x: &[T]) -> Result<bool> {
        if self.series.exited {
            return Ok(false);
        }
        let period = self.series.period;
        let hint = self.last.map(|(s, phase)| phase + (t - s));
        let (estimate, distance) = match self.estimator.estimate(x, hint) {
            Ok(v) => v,
            Err(Error::OutsideTube { distance, .. }) => {
                self.series.max_distance = self.series.max_distance.max(T::lit(distance));
                self.mark_exit(t);
                return Ok(false);
            }
            Err(e) => return Err(e),
        };
        self.series.max_distance = self.series.max_distance.max(distance);
        let lifted = match self.last {
            None => estimate - (estimate / period).floor() * period,
            Some((s, prev)) => {
                let wrapped_prev = prev - (prev / period).floor() * period;
                let mut inc = estimate - wrapped_prev;
                inc -= (inc / period + T::lit(0.5)).floor() * period;
                let half = T::lit(0.5) * period;
                if half - inc.abs() < T::lit(1e-3) * period {
                    return Err(Error::UnwrapAmbiguity { t: t.as_f64(), increment: inc.as_f64() });
                }
                self.series.max_slip = self.series.max_slip.max((inc - (t - s)).abs());
                prev + inc
            }
        };
        if self.record || self.series.times.is_empty() {
            self.series.times.push(t);
            self.series.phases.push(lifted);
        } else {
            if self.series.times.len() == 2 {
                self.series.times.pop();
                self.series.phases.pop();
            }
            self.series.times.push(t);
            self.series.phases.push(lifted);
        }
        self.last = Some((t, lifted));
        Ok(true)
    }

    /// Replaces the latest phase by `exact`, shifted by the multiple of `T`
    /// closest to the tracked value.
    pub fn correct_last(&mut self, exact: T) {
        if let (Some(last), Some((t, _))) = (self.series.phases.last_mut(), self.last) {
            let period = self.series.period;
            let mut d = exact - *last;
            d -= (d / period + T::lit(0.5)).floor() * period;
            *last += d;
            self.last = Some((t, *last));
        }
    }

    pub fn estimator(&self) -> &PhaseEstimator<'a, T> {
        &self.estimator
    }

    pub fn latest(&self) -> Option<(T, T)> {
        self.last
    }

    pub fn finish(self) -> PhaseSeries<T> {
        self.series
    }
}

/// Lifts a recorded trajectory.
pub fn track_phase<T: Real>(trajectory: &Trajectory<T>, cycle: &LimitCycle<T>, jets: &JetProfile<T>) -> Result<PhaseSeries<T>> {
    let mut tracker = PhaseTracker::new(PhaseEstimator::new(cycle, jets), true);
    for (t, x) in trajectory.times.iter().zip(&trajectory.states) {
        if !tracker.observe(*t, x.as_slice())? {
            break;
        }
    }
    if let Some(t) = trajectory.blew_up_at {
        if !tracker.exited() {
            tracker.mark_exit(t);
        }
    }
    Ok(tracker.finish())
}

/// Completed revolutions, or `Infinite` once the trajectory has left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winding {
    Finite(i64),
    Infinite,
}

pub fn winding_number<T: Real>(series: &PhaseSeries<T>, t: T) -> Winding {
    if let Some(exit) = series.exit_time {
        if t >= exit {
            return Winding::Infinite;
        }
    }
    match series.phase_at(t) {
        Some(phase) => Winding::Finite((phase / series.period).floor().to_i64().unwrap_or(i64::MAX)),
        None => Winding::Infinite,
    }
}

//! Limit cycle location, phase-indexed representation and projection.
//!
//! The cycle is found by relaxing onto it, timing the first return to a
//! transversal hyperplane and polishing with a monodromy-based Newton
//! shooting iteration. It is stored as `n` equally spaced phase samples of
//! `q_θ`, `F(q_θ)` and `DF(q_θ) F(q_θ)`; cubic Hermite interpolation through
//! these gives `q_θ` and `F(q_θ)` at arbitrary phases. The phase origin
//! `θ = 0` is the converged section point.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{drift_vec, flow, flow_with_first_variation, OscillatorSystem};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct CycleOptions<T> {
    /// Time spent relaxing from the guess before looking for returns.
    pub relax_time: T,
    /// Normal of the return section; `F` at the relaxed point when `None`.
    pub section_normal: Option<Vec<T>>,
    pub cycle_tol: T,
    pub max_newton: usize,
    pub n_samples: usize,
    pub integrator_tol: T,
    /// Step used while scanning for the first return.
    pub probe_dt: T,
    pub max_return_time: T,
    /// Overrides the estimated tube radius.
    pub tube_radius: Option<T>,
}

impl<T: Real> Default for CycleOptions<T> {
    fn default() -> Self {
        Self {
            relax_time: T::lit(100.0),
            section_normal: None,
            cycle_tol: T::lit(1e-10),
            max_newton: 30,
            n_samples: 512,
            integrator_tol: T::lit(1e-12),
            probe_dt: T::lit(0.01),
            max_return_time: T::lit(1000.0),
            tube_radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitCycle<T: Real> {
    period: T,
    samples: Vec<DVector<T>>,
    tangents: Vec<DVector<T>>,
    accels: Vec<DVector<T>>,
    residual: T,
    newton_iterations: usize,
    tube_radius: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult<T: Real> {
    /// Foot-point phase in `[0, T)`.
    pub phase: T,
    pub foot: DVector<T>,
    pub distance: T,
}

struct Hermite<T> {
    i: usize,
    j: usize,
    s: T,
}

impl<T: Real> LimitCycle<T> {
    /// Builds a cycle from equally spaced samples `q(iT/n)` of a known orbit.
    pub fn from_samples<S: OscillatorSystem<T> + ?Sized>(
        system: &S,
        period: T,
        samples: Vec<DVector<T>>,
        residual: T,
    ) -> Result<Self> {
        if samples.len() < 4 {
            return Err(Error::InvalidArgument("a cycle needs at least 4 samples".into()));
        }
        if !(period > T::zero()) {
            return Err(Error::NotACycle(format!("period {} is not positive", period.as_f64())));
        }
        let d = system.dim();
        if samples.iter().any(|q| q.len() != d) {
            return Err(Error::InvalidArgument("sample dimension does not match the system".into()));
        }
        let tangents: Vec<DVector<T>> = samples.iter().map(|q| drift_vec(system, q.as_slice())).collect();
        if tangents.iter().any(|f| !(f.norm() > T::lit(1e-12))) {
            return Err(Error::NotACycle("drift vanishes at a sample point".into()));
        }
        let accels = samples
            .iter()
            .zip(&tangents)
            .map(|(q, f)| system.jacobian(q.as_slice()) * f)
            .collect();
        let mut cycle = Self {
            period,
            samples,
            tangents,
            accels,
            residual,
            newton_iterations: 0,
            tube_radius: T::zero(),
        };
        cycle.tube_radius = cycle.estimate_tube_radius();
        Ok(cycle)
    }

    pub fn period(&self) -> T {
        self.period
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn sample_spacing(&self) -> T {
        self.period / T::from_usize_lossy(self.samples.len())
    }

    pub fn sample_phase(&self, i: usize) -> T {
        T::from_usize_lossy(i) * self.sample_spacing()
    }

    pub fn sample(&self, i: usize) -> &DVector<T> {
        &self.samples[i]
    }

    pub fn samples(&self) -> &[DVector<T>] {
        &self.samples
    }

    /// `F(q_{θ_i})`.
    pub fn tangent(&self, i: usize) -> &DVector<T> {
        &self.tangents[i]
    }

    pub fn anchor(&self) -> &DVector<T> {
        &self.samples[0]
    }

    /// `‖Φ(q₀, T) − q₀‖` of the converged orbit.
    pub fn residual(&self) -> T {
        self.residual
    }

    pub fn newton_iterations(&self) -> usize {
        self.newton_iterations
    }

    pub fn tube_radius(&self) -> T {
        self.tube_radius
    }

    pub fn with_tube_radius(mut self, radius: T) -> Self {
        self.tube_radius = radius;
        self
    }

    /// Reduces a phase into `[0, T)`.
    pub fn wrap_phase(&self, theta: T) -> T {
        let t = self.period;
        let mut r = theta - (theta / t).floor() * t;
        if r >= t {
            r -= t;
        }
        if r < T::zero() {
            r += t;
        }
        r
    }

    fn locate(&self, theta: T) -> Hermite<T> {
        let n = self.samples.len();
        let u = self.wrap_phase(theta) / self.sample_spacing();
        let nearest = u.round();
        // snap onto nodes so that sample phases reproduce samples exactly
        let u = if (u - nearest).abs() <= T::lit(64.0) * T::machine_eps() * (T::one() + u) { nearest } else { u };
        let i_f = u.floor();
        let mut i = i_f.to_usize().unwrap_or(0);
        let mut s = u - i_f;
        if i >= n {
            i -= n;
            s = T::zero();
        }
        Hermite { i, j: (i + 1) % n, s }
    }

    fn weights(&self, loc: &Hermite<T>) -> [T; 4] {
        let s = loc.s;
        let h = self.sample_spacing();
        let (two, three) = (T::lit(2.0), T::lit(3.0));
        let s2 = s * s;
        let s3 = s2 * s;
        [two * s3 - three * s2 + T::one(), (s3 - two * s2 + s) * h, three * s2 - two * s3, (s3 - s2) * h]
    }

    fn derivative_weights(&self, loc: &Hermite<T>) -> [T; 4] {
        let s = loc.s;
        let h = self.sample_spacing();
        let (two, three, four, six) = (T::lit(2.0), T::lit(3.0), T::lit(4.0), T::lit(6.0));
        let s2 = s * s;
        [(six * s2 - six * s) / h, three * s2 - four * s + T::one(), (six * s - six * s2) / h, three * s2 - two * s]
    }

    fn combine(values: &[DVector<T>], slopes: &[DVector<T>], loc: &Hermite<T>, w: [T; 4], k: usize) -> T {
        values[loc.i][k] * w[0] + slopes[loc.i][k] * w[1] + values[loc.j][k] * w[2] + slopes[loc.j][k] * w[3]
    }

    fn hermite(&self, values: &[DVector<T>], slopes: &[DVector<T>], loc: &Hermite<T>) -> DVector<T> {
        if loc.s == T::zero() {
            return values[loc.i].clone();
        }
        let w = self.weights(loc);
        DVector::from_fn(self.dim(), |k, _| Self::combine(values, slopes, loc, w, k))
    }

    /// `((x − q_θ)·F_θ, d/dθ of it)` without allocating.
    fn projection_residual(&self, x: &[T], theta: T) -> (T, T) {
        let loc = self.locate(theta);
        let w = self.weights(&loc);
        let dw = self.derivative_weights(&loc);
        let (mut g, mut gp) = (T::zero(), T::zero());
        for (k, &xk) in x.iter().enumerate() {
            let q = Self::combine(&self.samples, &self.tangents, &loc, w, k);
            let f = Self::combine(&self.tangents, &self.accels, &loc, w, k);
            let fp = Self::combine(&self.tangents, &self.accels, &loc, dw, k);
            let diff = xk - q;
            g += diff * f;
            gp += diff * fp - f * f;
        }
        (g, gp)
    }

    /// `q_θ` by cubic Hermite interpolation; exact at the sample phases.
    pub fn point_at_phase(&self, theta: T) -> DVector<T> {
        let loc = self.locate(theta);
        self.hermite(&self.samples, &self.tangents, &loc)
    }

    /// `F(q_θ)` interpolated from the sampled drift and its time derivative.
    pub fn tangent_at_phase(&self, theta: T) -> DVector<T> {
        let loc = self.locate(theta);
        self.hermite(&self.tangents, &self.accels, &loc)
    }

    fn nearest_sample(&self, x: &[T], indices: impl Iterator<Item = usize>) -> (usize, T) {
        let mut best = (0usize, T::max_value().unwrap_or(T::lit(f64::MAX)));
        for i in indices {
            let q = &self.samples[i];
            let d2 = q.iter().zip(x).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        best
    }

    /// Safeguarded Newton on `g(θ) = (x − q_θ)·F(q_θ)` around sample `i`.
    fn refine(&self, x: &[T], i: usize) -> ProjectionResult<T> {
        let h = self.sample_spacing();
        let center = self.sample_phase(i);
        let g_at = |theta: T| self.projection_residual(x, theta);
        let mut lo = center - h;
        let mut hi = center + h;
        // g > 0 means the distance still decreases with θ
        let mut widen = 0;
        while !(g_at(lo).0 >= T::zero() && g_at(hi).0 <= T::zero()) && widen < 8 {
            lo -= h;
            hi += h;
            widen += 1;
        }
        let mut theta = center;
        let tol = T::lit(8.0) * T::machine_eps() * self.period;
        for _ in 0..100 {
            let (g, gp) = g_at(theta);
            if g == T::zero() {
                break;
            }
            if g > T::zero() {
                lo = theta;
            } else {
                hi = theta;
            }
            let newton = if gp < T::zero() { theta - g / gp } else { T::lit(f64::NAN) };
            if newton.is_finite() && (newton - theta).abs() <= tol {
                theta = newton;
                break;
            }
            let next = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                (lo + hi) * T::lit(0.5)
            };
            let step = (next - theta).abs();
            theta = next;
            if step <= tol || hi - lo <= tol {
                break;
            }
        }
        let foot = self.point_at_phase(theta);
        let distance = foot.iter().zip(x).fold(T::zero(), |acc, (&q, &xk)| acc + (xk - q) * (xk - q)).sqrt();
        ProjectionResult { phase: self.wrap_phase(theta), foot, distance }
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::InvalidArgument(format!("point has length {}, cycle dimension is {}", x.len(), self.dim())));
        }
        Ok(())
    }

    /// Nearest point on the cycle, searched within `half_window` of `hint`
    /// when one is given, without the tube restriction.
    pub fn nearest_point(&self, x: &[T], hint: Option<(T, T)>) -> Result<ProjectionResult<T>> {
        self.check_dim(x)?;
        let n = self.n_samples();
        let global = |c: &Self| {
            let (i, _) = c.nearest_sample(x, 0..n);
            c.refine(x, i)
        };
        let Some((hint, half_window)) = hint else {
            return Ok(global(self));
        };
        let h = self.sample_spacing();
        let half = (half_window / h).ceil().to_usize().unwrap_or(n).max(2);
        if 2 * half + 1 >= n {
            return Ok(global(self));
        }
        let center = (self.wrap_phase(hint) / h).round().to_usize().unwrap_or(0) % n;
        let idx = (0..=2 * half).map(|k| (center + n + k - half) % n);
        let (i, _) = self.nearest_sample(x, idx);
        let offset = (i + n + half - center) % n;
        if offset == 0 || offset == 2 * half {
            return Ok(global(self));
        }
        Ok(self.refine(x, i))
    }

    /// Orthogonal projection onto the cycle; fails outside the tube.
    pub fn project_to_cycle(&self, x: &[T]) -> Result<ProjectionResult<T>> {
        self.within_tube(self.nearest_point(x, None)?)
    }

    /// Projection restricted to phases within `half_window` of `hint`; falls
    /// back to a global scan when the best sample sits on the window edge.
    pub fn project_near(&self, x: &[T], hint: T, half_window: T) -> Result<ProjectionResult<T>> {
        self.within_tube(self.nearest_point(x, Some((hint, half_window)))?)
    }

    fn within_tube(&self, p: ProjectionResult<T>) -> Result<ProjectionResult<T>> {
        if p.distance > self.tube_radius {
            Err(Error::OutsideTube { distance: p.distance.as_f64(), radius: self.tube_radius.as_f64() })
        } else {
            Ok(p)
        }
    }

    /// Euclidean distance from `x` to the cycle (no tube restriction).
    pub fn distance_to_cycle(&self, x: &[T]) -> T {
        let (i, d2) = self.nearest_sample(x, 0..self.n_samples());
        let p = self.refine(x, i);
        p.distance.min(d2.sqrt())
    }

    /// Half the smallest radius of a ball touching the sampled curve at one
    /// point and containing no other sample: the distance to the medial axis.
    fn estimate_tube_radius(&self) -> T {
        let n = self.n_samples();
        let mut best = T::max_value().unwrap_or(T::lit(f64::MAX));
        for i in 0..n {
            let qi = &self.samples[i];
            let t_hat = self.tangents[i].normalize();
            for j in 0..n {
                if j == i {
                    continue;
                }
                let w = &self.samples[j] - qi;
                let w2 = w.norm_squared();
                let along = w.dot(&t_hat);
                let perp2 = w2 - along * along;
                if perp2 <= T::lit(1e-28) * w2.max(T::lit(1e-300)) {
                    continue;
                }
                let r = w2 / (T::lit(2.0) * perp2.sqrt());
                if r < best {
                    best = r;
                }
            }
        }
        best * T::lit(0.5)
    }

    /// Re-samples the orbit with `n` points and the anchor moved to phase
    /// `anchor_shift` of this cycle.
    pub fn resample<S: OscillatorSystem<T> + ?Sized>(
        &self,
        system: &S,
        n: usize,
        anchor_shift: T,
        tol: T,
    ) -> Result<Self> {
        let shift = self.wrap_phase(anchor_shift);
        let start = flow(system, self.anchor().as_slice(), shift, tol)?.state;
        let samples = sample_orbit(system, &start, self.period, n, tol)?;
        let residual = (flow(system, start.as_slice(), self.period, tol)?.state - &start).norm();
        let mut c = Self::from_samples(system, self.period, samples, residual)?;
        c.newton_iterations = self.newton_iterations;
        Ok(c)
    }
}

fn sample_orbit<T: Real, S: OscillatorSystem<T> + ?Sized>(
    system: &S,
    q0: &DVector<T>,
    period: T,
    n: usize,
    tol: T,
) -> Result<Vec<DVector<T>>> {
    let mut out = Vec::with_capacity(n);
    out.push(q0.clone());
    let mut t_prev = T::zero();
    let mut x = q0.clone();
    for i in 1..n {
        // segment end times are i·T/n to avoid accumulating rounding in the step length
        let t_i = period * T::from_usize_lossy(i) / T::from_usize_lossy(n);
        x = flow(system, x.as_slice(), t_i - t_prev, tol)?.state;
        t_prev = t_i;
        out.push(x.clone());
    }
    Ok(out)
}

struct Crossing<T: Real> {
    time: T,
    point: DVector<T>,
}

/// First return of the orbit through `x_ref` to the hyperplane
/// `{x : n·(x − x_ref) = 0}` in the same direction as the flow at `x_ref`.
fn first_return<T: Real, S: OscillatorSystem<T> + ?Sized>(
    system: &S,
    x_ref: &DVector<T>,
    normal: &DVector<T>,
    opts: &CycleOptions<T>,
) -> Result<Crossing<T>> {
    let f_ref = drift_vec(system, x_ref.as_slice());
    let direction = if normal.dot(&f_ref) >= T::zero() { T::one() } else { -T::one() };
    let signed = |x: &DVector<T>| direction * normal.dot(&(x - x_ref));
    let tol = opts.integrator_tol.max(T::lit(1e-12));
    let mut t = T::zero();
    let mut x = x_ref.clone();
    let mut s_prev = T::zero();
    let mut max_excursion = T::zero();
    while t < opts.max_return_time {
        let x_next = flow(system, x.as_slice(), opts.probe_dt, tol)?.state;
        let s_next = signed(&x_next);
        let dist = (&x_next - x_ref).norm();
        max_excursion = max_excursion.max(dist);
        if s_prev < T::zero() && s_next >= T::zero() && dist < T::lit(0.5) * max_excursion {
            // bisection in time on the bracketing probe step
            let (mut a, mut b) = (T::zero(), opts.probe_dt);
            for _ in 0..200 {
                let mid = (a + b) * T::lit(0.5);
                if mid <= a || mid >= b {
                    break;
                }
                let xm = flow(system, x.as_slice(), mid, tol)?.state;
                if signed(&xm) < T::zero() {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let point = flow(system, x.as_slice(), b, tol)?.state;
            return Ok(Crossing { time: t + b, point });
        }
        x = x_next;
        s_prev = s_next;
        t += opts.probe_dt;
    }
    Err(Error::NoReturn(opts.max_return_time.as_f64()))
}

/// Locates the stable limit cycle attracting `guess`.
pub fn find_limit_cycle<T: Real, S: OscillatorSystem<T> + ?Sized>(
    system: &S,
    guess: &[T],
    opts: &CycleOptions<T>,
) -> Result<LimitCycle<T>> {
    let d = system.dim();
    if guess.len() != d {
        return Err(Error::InvalidArgument("guess dimension does not match the system".into()));
    }
    if opts.n_samples < 4 {
        return Err(Error::InvalidArgument("n_samples must be at least 4".into()));
    }
    let tol = opts.integrator_tol;
    let x_ref = flow(system, guess, opts.relax_time, tol)?.state;
    let f_ref = drift_vec(system, x_ref.as_slice());
    if !(f_ref.norm() > T::lit(1e-8)) {
        return Err(Error::NotACycle("relaxed onto an equilibrium".into()));
    }
    let normal = match &opts.section_normal {
        Some(n) if n.len() == d => DVector::from_column_slice(n).normalize(),
        Some(_) => return Err(Error::InvalidArgument("section normal has wrong dimension".into())),
        None => f_ref.normalize(),
    };
    let crossing = first_return(system, &x_ref, &normal, opts)?;

    let mut x = crossing.point;
    let mut period = crossing.time;
    let mut iterations = 0;
    let mut initial_residual = None;
    loop {
        let fv = flow_with_first_variation(system, x.as_slice(), period, tol)?;
        let end = fv.state;
        let r = &end - &x;
        let residual = r.norm();
        if !residual.is_finite() {
            return Err(Error::NewtonDiverged { residual: f64::INFINITY, iterations });
        }
        let r0 = *initial_residual.get_or_insert(residual);
        if residual <= opts.cycle_tol {
            break;
        }
        if iterations >= opts.max_newton || residual > T::lit(1e6) * r0.max(opts.cycle_tol) {
            return Err(Error::NewtonDiverged { residual: residual.as_f64(), iterations });
        }
        let m = fv.first_variation.expect("first variation requested");
        let f_end = drift_vec(system, end.as_slice());
        let mut a = DMatrix::zeros(d + 1, d + 1);
        let mut rhs = DVector::zeros(d + 1);
        for i in 0..d {
            for j in 0..d {
                a[(i, j)] = m[(i, j)] - if i == j { T::one() } else { T::zero() };
            }
            a[(i, d)] = f_end[i];
            a[(d, i)] = normal[i];
            rhs[i] = -r[i];
        }
        rhs[d] = -normal.dot(&(&x - &x_ref));
        let step = a
            .svd(true, true)
            .solve(&rhs, T::machine_eps() * T::lit(1e3))
            .map_err(|_| Error::NewtonDiverged { residual: residual.as_f64(), iterations })?;
        for i in 0..d {
            x[i] += step[i];
        }
        period += step[d];
        iterations += 1;
        if !(period > T::zero()) {
            return Err(Error::NotACycle(format!("period estimate {} is not positive", period.as_f64())));
        }
    }
    if !(period > T::zero()) {
        return Err(Error::NotACycle(format!("period {} is not positive", period.as_f64())));
    }
    if !(drift_vec(system, x.as_slice()).norm() > T::lit(1e-8)) {
        return Err(Error::NotACycle("orbit collapsed onto an equilibrium".into()));
    }
    let samples = sample_orbit(system, &x, period, opts.n_samples, tol)?;
    let residual = (flow(system, x.as_slice(), period, tol)?.state - &x).norm();
    let mut cycle = LimitCycle::from_samples(system, period, samples, residual)?;
    cycle.newton_iterations = iterations;
    if let Some(r) = opts.tube_radius {
        cycle.tube_radius = r;
    }
    Ok(cycle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{FitzHughNagumo, LinearSystem, StuartLandau};
    use std::f64::consts::{PI, TAU};

    fn sl_cycle(kappa: f64) -> LimitCycle<f64> {
        find_limit_cycle(&StuartLandau::new(1.0, kappa), &[0.3, 0.1], &CycleOptions::default()).unwrap()
    }

    #[test]
    fn stuart_landau_cycle_is_unit_circle() {
        let c = sl_cycle(0.5);
        assert!((c.period() - TAU).abs() < 1e-8, "T = {}", c.period());
        for q in c.samples() {
            assert!((q.norm() - 1.0).abs() < 1e-8);
        }
        assert!(c.residual() <= 1e-10);
        assert!((c.tube_radius() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn fhn_period() {
        let c = find_limit_cycle(&FitzHughNagumo::<f64>::default(), &[0.0, 0.0], &CycleOptions::default()).unwrap();
        assert!((c.period() - 7.067).abs() < 1e-3, "T = {}", c.period());
    }

    #[test]
    fn restart_on_cycle_needs_no_newton_step() {
        let sys = StuartLandau::new(1.0, 0.5);
        let c = sl_cycle(0.5);
        let opts = CycleOptions { relax_time: 0.0, ..CycleOptions::default() };
        let again = find_limit_cycle(&sys, c.anchor().as_slice(), &opts).unwrap();
        assert_eq!(again.newton_iterations(), 0);
        assert!((again.period() - c.period()).abs() < 1e-9);
    }

    #[test]
    fn interpolation_nodes_and_periodicity() {
        let c = sl_cycle(0.5);
        for i in [0usize, 1, 17, 255, 511] {
            assert_eq!(c.point_at_phase(c.sample_phase(i)), *c.sample(i));
        }
        assert_eq!(c.point_at_phase(c.period()), *c.anchor());
    }

    #[test]
    fn quarter_turn_on_the_circle() {
        let c = sl_cycle(0.0);
        let phi0: f64 = c.anchor()[1].atan2(c.anchor()[0]);
        let q = c.point_at_phase(PI / 2.0);
        let expected = [(phi0 + PI / 2.0).cos(), (phi0 + PI / 2.0).sin()];
        assert!((q[0] - expected[0]).abs() < 1e-6 && (q[1] - expected[1]).abs() < 1e-6);
    }

    #[test]
    fn projection_on_circle() {
        let c = sl_cycle(0.5);
        let phi0: f64 = c.anchor()[1].atan2(c.anchor()[0]);
        let p = c.project_to_cycle(&[1.1, 0.0]).unwrap();
        let expected = c.wrap_phase(-phi0);
        let dphase = (p.phase - expected).abs().min(c.period() - (p.phase - expected).abs());
        assert!(dphase < 1e-6);
        assert!((p.foot[0] - 1.0).abs() < 1e-6 && p.foot[1].abs() < 1e-6);
        assert!((p.distance - 0.1).abs() < 1e-6);

        let theta: f64 = 2.345;
        let q = c.point_at_phase(theta);
        let p = c.project_to_cycle(q.as_slice()).unwrap();
        assert!((p.phase - theta).abs() < 1e-8 && p.distance < 1e-8);
    }

    #[test]
    fn outside_tube_is_reported() {
        let c = sl_cycle(0.5);
        assert!(matches!(c.project_to_cycle(&[2.0, 0.0]), Err(Error::OutsideTube { .. })));
    }

    #[test]
    fn distances_on_circle() {
        let c = sl_cycle(0.5);
        assert!((c.distance_to_cycle(&[2.0, 0.0]) - 1.0).abs() < 1e-6);
        assert!((c.distance_to_cycle(&[0.0, 0.0]) - 1.0).abs() < 1e-6);
        assert!(c.distance_to_cycle(c.point_at_phase(1.0).as_slice()) < 1e-8);
    }

    #[test]
    fn fhn_normal_offset_distance() {
        let c = find_limit_cycle(&FitzHughNagumo::<f64>::default(), &[0.0, 0.0], &CycleOptions::default()).unwrap();
        let theta: f64 = c.period() / 2.0;
        let q = c.point_at_phase(theta);
        let f = c.tangent_at_phase(theta);
        let normal = DVector::from_vec(vec![-f[1], f[0]]).normalize();
        let x = q + normal * 1e-3;
        let p = c.project_to_cycle(x.as_slice()).unwrap();
        assert!((p.distance - 1e-3).abs() < 5e-5);
        let ortho = (x - &p.foot).dot(&c.tangent_at_phase(p.phase));
        assert!(ortho.abs() <= 1e-8 * p.distance * c.tangent_at_phase(p.phase).norm());
    }

    #[test]
    fn rotation_field_has_no_isolated_cycle_but_closes() {
        let rot = LinearSystem::rotation(1.0);
        let opts = CycleOptions { relax_time: 0.0, ..CycleOptions::default() };
        let c = find_limit_cycle(&rot, &[1.0, 0.0], &opts).unwrap();
        assert!((c.period() - TAU).abs() < 1e-8);
    }

    #[test]
    fn equilibrium_is_not_a_cycle() {
        let decay = LinearSystem::new(DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]));
        let err = find_limit_cycle(&decay, &[1.0, 1.0], &CycleOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NotACycle(_)), "{err:?}");
    }

    #[test]
    fn no_return_is_reported() {
        let drift = LinearSystem::new(DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.1]));
        let opts = CycleOptions { relax_time: 0.0, max_return_time: 5.0, ..CycleOptions::default() };
        let err = find_limit_cycle(&drift, &[1.0, 1.0], &opts).unwrap_err();
        assert!(matches!(err, Error::NoReturn(_)), "{err:?}");
    }
}

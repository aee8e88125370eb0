use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cycle::LimitCycle;
use crate::dynamics::OscillatorSystem;
use crate::error::{Error, Result};
use crate::scalar::{all_finite, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `X + F dt + ε G(X) ΔW`.
    EulerMaruyama,
    /// Classical RK4 for the drift, `ε G(X) ΔW` for the noise. Itô, weak
    /// order one, with a deterministic error four orders smaller.
    Rk4Maruyama,
    /// Stochastic Heun predictor-corrector; converges to the Stratonovich
    /// solution.
    HeunStratonovich,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition<T> {
    OnCycle(T),
    Point(Vec<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig<T> {
    pub eps: T,
    pub scheme: Scheme,
    /// Requested step; the step actually used divides `t_obs` evenly.
    pub dt: T,
    pub t_obs: T,
    pub n_trajectories: usize,
    pub master_seed: u64,
    pub x0: InitialCondition<T>,
    /// Steps between phase observations.
    pub stride: usize,
    pub beta1: Option<T>,
    /// Phase points outside the tube through the deterministic flow instead
    /// of counting the trajectory as exited; also refines the final phase.
    pub relax: bool,
}

impl<T: Real> SimConfig<T> {
    /// `dt = T/2000`, observations every `T/16`, RK4 drift, relaxation on.
    pub fn for_cycle(period: T, eps: T, t_obs: T, n_trajectories: usize, master_seed: u64) -> Self {
        Self {
            eps,
            scheme: Scheme::Rk4Maruyama,
            dt: period / T::lit(2000.0),
            t_obs,
            n_trajectories,
            master_seed,
            x0: InitialCondition::OnCycle(T::zero()),
            stride: 125,
            beta1: None,
            relax: true,
        }
    }

    pub fn n_steps(&self) -> usize {
        let n = (self.t_obs / self.dt - T::lit(1e-9)).ceil();
        n.to_usize().unwrap_or(usize::MAX).max(1)
    }

    pub fn effective_dt(&self) -> T {
        self.t_obs / T::from_usize_lossy(self.n_steps())
    }

    pub fn validate(&self, period: T) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.eps >= T::zero()) || !self.eps.is_finite() {
            return bad("eps must be finite and non-negative");
        }
        if !(self.dt > T::zero()) || self.dt > period / T::lit(100.0) {
            return bad("dt must lie in (0, T/100]");
        }
        if !(self.t_obs > T::zero()) || !self.t_obs.is_finite() {
            return bad("t_obs must be positive");
        }
        if self.n_trajectories == 0 {
            return bad("need at least one trajectory");
        }
        if self.stride == 0 || T::from_usize_lossy(self.stride) * self.dt > period / T::lit(4.0) {
            return bad("observation stride must be positive and at most T/4 in time");
        }
        if let Some(b) = self.beta1 {
            if !(b > T::zero() && b < T::one()) {
                return bad("beta1 must lie in (0, 1)");
            }
        }
        Ok(())
    }

    pub fn initial_point(&self, cycle: &LimitCycle<T>) -> Result<DVector<T>> {
        match &self.x0 {
            InitialCondition::OnCycle(theta) => Ok(cycle.point_at_phase(*theta)),
            InitialCondition::Point(p) if p.len() == cycle.dim() => Ok(DVector::from_column_slice(p)),
            InitialCondition::Point(p) => {
                Err(Error::InvalidArgument(format!("x0 has length {}, system dimension is {}", p.len(), cycle.dim())))
            }
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trajectory `index` under `master_seed`.
pub fn stream_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

struct Params<'a, T, S: ?Sized> {
    system: &'a S,
    scheme: Scheme,
    eps: T,
    eps2: T,
    dt: T,
    sqrt_dt: T,
    with_k: bool,
    noisy: bool,
}

struct Buffers<T: Real> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
    dw: Vec<T>,
    g: DMatrix<T>,
    g2: DMatrix<T>,
}

/// Integrates one trajectory in place; owns its RNG stream and scratch
/// buffers.
pub(crate) struct Stepper<'a, T: Real, S: ?Sized> {
    p: Params<'a, T, S>,
    b: Buffers<T>,
    rng: ChaCha8Rng,
}

impl<T: Real, S: OscillatorSystem<T> + ?Sized> Params<'_, T, S> {
    #[inline]
    fn drift(&self, x: &[T], out: &mut [T]) {
        self.system.drift(x, out);
        if self.with_k {
            if let Some(k) = self.system.extra_drift(x) {
                out.iter_mut().zip(k.iter()).for_each(|(o, &kv)| *o += self.eps2 * kv);
            }
        }
    }
}

#[inline]
fn add_noise<T: Real>(x: &mut [T], g: &DMatrix<T>, dw: &[T], scale: T) {
    for (j, xj) in x.iter_mut().enumerate() {
        let acc = dw.iter().enumerate().fold(T::zero(), |acc, (l, &w)| acc + g[(j, l)] * w);
        *xj += scale * acc;
    }
}

#[inline]
fn axpy_into<T: Real>(out: &mut [T], x: &[T], k: &[T], h: T) {
    out.iter_mut().zip(x).zip(k).for_each(|((o, &xi), &ki)| *o = xi + h * ki);
}

impl<'a, T: Real, S: OscillatorSystem<T> + ?Sized> Stepper<'a, T, S> {
    pub(crate) fn new(system: &'a S, config: &SimConfig<T>, index: u64) -> Self {
        let (d, m) = (system.dim(), system.noise_dim());
        let dt = config.effective_dt();
        let zeros = || vec![T::zero(); d];
        Self {
            p: Params {
                system,
                scheme: config.scheme,
                eps: config.eps,
                eps2: config.eps * config.eps,
                dt,
                sqrt_dt: dt.sqrt(),
                with_k: system.has_extra_drift(),
                noisy: config.eps != T::zero(),
            },
            b: Buffers {
                k1: zeros(),
                k2: zeros(),
                k3: zeros(),
                k4: zeros(),
                tmp: zeros(),
                dw: vec![T::zero(); m],
                g: DMatrix::zeros(d, m),
                g2: DMatrix::zeros(d, m),
            },
            rng: ChaCha8Rng::seed_from_u64(stream_seed(config.master_seed, index)),
        }
    }

    pub(crate) fn dt(&self) -> T {
        self.p.dt
    }

    /// `n` steps; false once the state is no longer finite.
    pub(crate) fn advance(&mut self, x: &mut [T], n: usize) -> bool {
        match (x.len(), self.b.dw.len()) {
            (2, 1) => self.advance_fixed::<2, 1>(x, n),
            (2, 2) => self.advance_fixed::<2, 2>(x, n),
            (3, 1) => self.advance_fixed::<3, 1>(x, n),
            (3, 3) => self.advance_fixed::<3, 3>(x, n),
            _ => {
                for _ in 0..n {
                    self.step(x);
                }
            }
        }
        all_finite(x)
    }

    /// Same arithmetic as `step`, with the dimensions known at compile time.
    fn advance_fixed<const D: usize, const M: usize>(&mut self, x: &mut [T], n: usize) {
        let p = &self.p;
        let g = &mut self.b.g;
        let g2 = &mut self.b.g2;
        let x: &mut [T; D] = x.try_into().expect("state length matches dimension");
        let zero = [T::zero(); D];
        let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (zero, zero, zero, zero, zero);
        let mut dw = [T::zero(); M];
        let dt = p.dt;
        let half_dt = T::lit(0.5) * dt;
        let sixth = dt / T::lit(6.0);
        let two = T::lit(2.0);
        let noise = |x: &mut [T; D], g: &DMatrix<T>, dw: &[T; M], scale: T| {
            let gs = g.as_slice();
            for j in 0..D {
                let mut acc = T::zero();
                for l in 0..M {
                    acc += gs[l * D + j] * dw[l];
                }
                x[j] += scale * acc;
            }
        };
        for _ in 0..n {
            for w in dw.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                *w = T::lit(z) * p.sqrt_dt;
            }
            match p.scheme {
                Scheme::EulerMaruyama => {
                    p.drift(x, &mut k1);
                    if p.noisy {
                        p.system.noise_into(x, g);
                    }
                    for j in 0..D {
                        x[j] += k1[j] * dt;
                    }
                    if p.noisy {
                        noise(x, g, &dw, p.eps);
                    }
                }
                Scheme::Rk4Maruyama => {
                    if p.noisy {
                        p.system.noise_into(x, g);
                    }
                    p.drift(x, &mut k1);
                    for j in 0..D {
                        tmp[j] = x[j] + half_dt * k1[j];
                    }
                    p.drift(&tmp, &mut k2);
                    for j in 0..D {
                        tmp[j] = x[j] + half_dt * k2[j];
                    }
                    p.drift(&tmp, &mut k3);
                    for j in 0..D {
                        tmp[j] = x[j] + dt * k3[j];
                    }
                    p.drift(&tmp, &mut k4);
                    for j in 0..D {
                        x[j] += sixth * (k1[j] + two * (k2[j] + k3[j]) + k4[j]);
                    }
                    if p.noisy {
                        noise(x, g, &dw, p.eps);
                    }
                }
                Scheme::HeunStratonovich => {
                    p.drift(x, &mut k1);
                    for j in 0..D {
                        tmp[j] = x[j] + dt * k1[j];
                    }
                    if p.noisy {
                        p.system.noise_into(x, g);
                        noise(&mut tmp, g, &dw, p.eps);
                    }
                    p.drift(&tmp, &mut k2);
                    for j in 0..D {
                        x[j] += half_dt * (k1[j] + k2[j]);
                    }
                    if p.noisy {
                        p.system.noise_into(&tmp, g2);
                        *g2 += &*g;
                        noise(x, g2, &dw, T::lit(0.5) * p.eps);
                    }
                }
            }
        }
    }

    pub(crate) fn step(&mut self, x: &mut [T]) {
        let p = &self.p;
        let b = &mut self.b;
        for w in b.dw.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *w = T::lit(z) * p.sqrt_dt;
        }
        let dt = p.dt;
        match p.scheme {
            Scheme::EulerMaruyama => {
                p.drift(x, &mut b.k1);
                if p.noisy {
                    p.system.noise_into(x, &mut b.g);
                }
                x.iter_mut().zip(&b.k1).for_each(|(xi, &fi)| *xi += fi * dt);
                if p.noisy {
                    add_noise(x, &b.g, &b.dw, p.eps);
                }
            }
            Scheme::Rk4Maruyama => {
                if p.noisy {
                    p.system.noise_into(x, &mut b.g);
                }
                let half = T::lit(0.5) * dt;
                p.drift(x, &mut b.k1);
                axpy_into(&mut b.tmp, x, &b.k1, half);
                p.drift(&b.tmp, &mut b.k2);
                axpy_into(&mut b.tmp, x, &b.k2, half);
                p.drift(&b.tmp, &mut b.k3);
                axpy_into(&mut b.tmp, x, &b.k3, dt);
                p.drift(&b.tmp, &mut b.k4);
                let sixth = dt / T::lit(6.0);
                let two = T::lit(2.0);
                x.iter_mut()
                    .zip(b.k1.iter().zip(&b.k2))
                    .zip(b.k3.iter().zip(&b.k4))
                    .for_each(|((xi, (&k1, &k2)), (&k3, &k4))| *xi += sixth * (k1 + two * (k2 + k3) + k4));
                if p.noisy {
                    add_noise(x, &b.g, &b.dw, p.eps);
                }
            }
            Scheme::HeunStratonovich => {
                p.drift(x, &mut b.k1);
                axpy_into(&mut b.tmp, x, &b.k1, dt);
                if p.noisy {
                    p.system.noise_into(x, &mut b.g);
                    add_noise(&mut b.tmp, &b.g, &b.dw, p.eps);
                }
                p.drift(&b.tmp, &mut b.k2);
                let half = T::lit(0.5);
                x.iter_mut()
                    .zip(b.k1.iter().zip(&b.k2))
                    .for_each(|(xi, (&k1, &k2))| *xi += half * dt * (k1 + k2));
                if p.noisy {
                    p.system.noise_into(&b.tmp, &mut b.g2);
                    b.g2 += &b.g;
                    add_noise(x, &b.g2, &b.dw, half * p.eps);
                }
            }
        }
    }
}

/// States at the observation times `0, stride·dt, …, t_obs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Real> {
    pub index: u64,
    pub times: Vec<T>,
    pub states: Vec<DVector<T>>,
    /// Observation time at which the state was first found non-finite.
    pub blew_up_at: Option<T>,
}

/// Observation schedule: step counts at which the state is reported.
pub(crate) fn observation_steps(n_steps: usize, stride: usize) -> impl Iterator<Item = usize> {
    let mut next = 0usize;
    let mut done = false;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let k = next.min(n_steps);
        done = k == n_steps;
        next += stride;
        Some(k)
    })
}

/// Runs trajectory `index` of the configured ensemble.
pub fn simulate_sde<T: Real, S: OscillatorSystem<T> + ?Sized>(
    system: &S,
    cycle: &LimitCycle<T>,
    config: &SimConfig<T>,
    index: u64,
) -> Result<Trajectory<T>> {
    config.validate(cycle.period())?;
    let mut x = config.initial_point(cycle)?;
    let mut stepper = Stepper::new(system, config, index);
    let dt = stepper.dt();
    let n_steps = config.n_steps();
    let mut out = Trajectory { index, times: Vec::new(), states: Vec::new(), blew_up_at: None };
    let mut done = 0usize;
    for k in observation_steps(n_steps, config.stride) {
        let finite = stepper.advance(x.as_mut_slice(), k - done);
        done = k;
        if !finite {
            out.blew_up_at = Some(T::from_usize_lossy(done) * dt);
            return Ok(out);
        }
        out.times.push(T::from_usize_lossy(k) * dt);
        out.states.push(x.clone());
    }
    Ok(out)
}

//! Oscillator systems and deterministic flows.
//!
//! An [`OscillatorSystem`] bundles the drift `F`, its first and second
//! derivatives, the noise matrix `G` and the optional noise Jacobian and
//! extra drift `K` of the stochastic model `dX = F dt + ε² K dt + ε G dB`.
//! The flow routines integrate the state jointly with its first and second
//! variations.

mod integrator;
mod systems;
mod variational;

pub use integrator::{integrate, IntegratorOptions, IntegratorStats};
pub use systems::{
    FitzHughNagumo, ItoCorrected, LinearSystem, StuartLandau, StuartLandauNoise, WithExtraDrift,
};
pub use variational::{
    flow, flow_with_first_variation, flow_with_second_variation, FlowResult, DEFAULT_FLOW_TOL,
    DEFAULT_VARIATIONAL_TOL,
};

use nalgebra::{DMatrix, DVector};

use crate::scalar::{norm, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference,
}

/// A drift/noise pair defining `dX = F(X) dt + ε² K(X) dt + ε G(X) dB`.
///
/// Only [`drift`](Self::drift) and [`noise_into`](Self::noise_into) are
/// mandatory; derivatives default to central finite differences.
pub trait OscillatorSystem<T: Real>: Send + Sync {
    /// State dimension `d`.
    fn dim(&self) -> usize;

    /// Number of independent Brownian motions `m`.
    fn noise_dim(&self) -> usize;

    fn drift(&self, x: &[T], out: &mut [T]);

    /// Writes the `d × m` noise matrix `G(x)` into `out`.
    fn noise_into(&self, x: &[T], out: &mut DMatrix<T>);

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::FiniteDifference
    }

    /// `DF(x)`, a `d × d` matrix with entry `(k, l) = ∂F_k/∂x_l`.
    fn jacobian(&self, x: &[T]) -> DMatrix<T> {
        fd_jacobian(self, x)
    }

    /// One symmetric `d × d` matrix per drift component: `D²F_k(x)`.
    fn hessians(&self, x: &[T]) -> Vec<DMatrix<T>> {
        match self.derivative_mode() {
            DerivativeMode::Analytic => fd_hessians_from_jacobian(self, x),
            DerivativeMode::FiniteDifference => fd_hessians_from_drift(self, x),
        }
    }

    fn noise(&self, x: &[T]) -> DMatrix<T> {
        let mut g = DMatrix::zeros(self.dim(), self.noise_dim());
        self.noise_into(x, &mut g);
        g
    }

    /// `∂G/∂x_i` for `i = 0..d`, each `d × m`; `None` when not provided.
    fn noise_jacobian(&self, _x: &[T]) -> Option<Vec<DMatrix<T>>> {
        None
    }

    /// The extra drift `K(x)`; `None` when absent.
    fn extra_drift(&self, _x: &[T]) -> Option<DVector<T>> {
        None
    }

    fn has_extra_drift(&self) -> bool {
        false
    }
}

impl<T: Real, S: OscillatorSystem<T> + ?Sized> OscillatorSystem<T> for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn noise_dim(&self) -> usize {
        (**self).noise_dim()
    }
    fn drift(&self, x: &[T], out: &mut [T]) {
        (**self).drift(x, out)
    }
    fn noise_into(&self, x: &[T], out: &mut DMatrix<T>) {
        (**self).noise_into(x, out)
    }
    fn derivative_mode(&self) -> DerivativeMode {
        (**self).derivative_mode()
    }
    fn jacobian(&self, x: &[T]) -> DMatrix<T> {
        (**self).jacobian(x)
    }
    fn hessians(&self, x: &[T]) -> Vec<DMatrix<T>> {
        (**self).hessians(x)
    }
    fn noise_jacobian(&self, x: &[T]) -> Option<Vec<DMatrix<T>>> {
        (**self).noise_jacobian(x)
    }
    fn extra_drift(&self, x: &[T]) -> Option<DVector<T>> {
        (**self).extra_drift(x)
    }
    fn has_extra_drift(&self) -> bool {
        (**self).has_extra_drift()
    }
}

impl<T: Real> OscillatorSystem<T> for Box<dyn OscillatorSystem<T>> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn noise_dim(&self) -> usize {
        (**self).noise_dim()
    }
    fn drift(&self, x: &[T], out: &mut [T]) {
        (**self).drift(x, out)
    }
    fn noise_into(&self, x: &[T], out: &mut DMatrix<T>) {
        (**self).noise_into(x, out)
    }
    fn derivative_mode(&self) -> DerivativeMode {
        (**self).derivative_mode()
    }
    fn jacobian(&self, x: &[T]) -> DMatrix<T> {
        (**self).jacobian(x)
    }
    fn hessians(&self, x: &[T]) -> Vec<DMatrix<T>> {
        (**self).hessians(x)
    }
    fn noise_jacobian(&self, x: &[T]) -> Option<Vec<DMatrix<T>>> {
        (**self).noise_jacobian(x)
    }
    fn extra_drift(&self, x: &[T]) -> Option<DVector<T>> {
        (**self).extra_drift(x)
    }
    fn has_extra_drift(&self) -> bool {
        (**self).has_extra_drift()
    }
}

/// Forces finite-difference derivatives on top of any system: only the
/// drift, noise, noise Jacobian and `K` of the inner system are used.
#[derive(Debug, Clone)]
pub struct FiniteDifference<S>(pub S);

impl<T: Real, S: OscillatorSystem<T>> OscillatorSystem<T> for FiniteDifference<S> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn noise_dim(&self) -> usize {
        self.0.noise_dim()
    }
    fn drift(&self, x: &[T], out: &mut [T]) {
        self.0.drift(x, out)
    }
    fn noise_into(&self, x: &[T], out: &mut DMatrix<T>) {
        self.0.noise_into(x, out)
    }
    fn noise_jacobian(&self, x: &[T]) -> Option<Vec<DMatrix<T>>> {
        self.0.noise_jacobian(x)
    }
    fn extra_drift(&self, x: &[T]) -> Option<DVector<T>> {
        self.0.extra_drift(x)
    }
    fn has_extra_drift(&self) -> bool {
        self.0.has_extra_drift()
    }
}

/// Default finite-difference step: `eps^(1/3) · (1 + ‖x‖)`.
pub fn fd_step<T: Real>(x: &[T]) -> T {
    T::machine_eps().powf(T::lit(1.0 / 3.0)) * (T::one() + norm(x))
}

pub fn drift_vec<T: Real, S: OscillatorSystem<T> + ?Sized>(system: &S, x: &[T]) -> DVector<T> {
    let mut out = DVector::zeros(system.dim());
    system.drift(x, out.as_mut_slice());
    out
}

pub fn fd_jacobian<T: Real, S: OscillatorSystem<T> + ?Sized>(system: &S, x: &[T]) -> DMatrix<T> {
    let d = system.dim();
    let h = fd_step(x);
    let two_h = h + h;
    let mut jac = DMatrix::zeros(d, d);
    let mut xp = x.to_vec();
    let mut fp = vec![T::zero(); d];
    let mut fm = vec![T::zero(); d];
    for l in 0..d {
        xp[l] = x[l] + h;
        system.drift(&xp, &mut fp);
        xp[l] = x[l] - h;
        system.drift(&xp, &mut fm);
        xp[l] = x[l];
        for k in 0..d {
            jac[(k, l)] = (fp[k] - fm[k]) / two_h;
        }
    }
    jac
}

fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let half = T::lit(0.5);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
}

fn fd_hessians_from_jacobian<T: Real, S: OscillatorSystem<T> + ?Sized>(
    system: &S,
    x: &[T],
) -> Vec<DMatrix<T>> {
    let d = system.dim();
    let h = fd_step(x);
    let two_h = h + h;
    let mut out = vec![DMatrix::zeros(d, d); d];
    let mut xp = x.to_vec();
    for j in 0..d {
        xp[j] = x[j] + h;
        let jp = system.jacobian(&xp);
        xp[j] = x[j] - h;
        let jm = system.jacobian(&xp);
        xp[j] = x[j];
        for (k, hk) in out.iter_mut().enumerate() {
            for l in 0..d {
                hk[(l, j)] = (jp[(k, l)] - jm[(k, l)]) / two_h;
            }
        }
    }
    out.iter_mut().for_each(symmetrize);
    out
}

fn fd_hessians_from_drift<T: Real, S: OscillatorSystem<T> + ?Sized>(
    system: &S,
    x: &[T],
) -> Vec<DMatrix<T>> {
    let d = system.dim();
    let h = T::machine_eps().powf(T::lit(0.25)) * (T::one() + norm(x));
    let four_h2 = T::lit(4.0) * h * h;
    let mut out = vec![DMatrix::zeros(d, d); d];
    let mut xp = x.to_vec();
    let mut f = [vec![T::zero(); d], vec![T::zero(); d], vec![T::zero(); d], vec![T::zero(); d]];
    let signs = [(1, 1), (1, -1), (-1, 1), (-1, -1)];
    for i in 0..d {
        for j in i..d {
            for (buf, &(si, sj)) in f.iter_mut().zip(&signs) {
                xp.copy_from_slice(x);
                xp[i] += if si > 0 { h } else { -h };
                xp[j] += if sj > 0 { h } else { -h };
                system.drift(&xp, buf);
            }
            for (k, hk) in out.iter_mut().enumerate() {
                let v = (f[0][k] - f[1][k] - f[2][k] + f[3][k]) / four_h2;
                hk[(i, j)] = v;
                hk[(j, i)] = v;
            }
        }
    }
    out
}

/// Central differences of the noise matrix, `∂G/∂x_i` for each `i`.
pub fn fd_noise_jacobian<T: Real, S: OscillatorSystem<T> + ?Sized>(
    system: &S,
    x: &[T],
) -> Vec<DMatrix<T>> {
    let d = system.dim();
    let h = fd_step(x);
    let two_h = h + h;
    let mut xp = x.to_vec();
    (0..d)
        .map(|i| {
            xp[i] = x[i] + h;
            let gp = system.noise(&xp);
            xp[i] = x[i] - h;
            let gm = system.noise(&xp);
            xp[i] = x[i];
            (gp - gm) / two_h
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn builtin_jacobians_match_finite_differences() {
        let h_fd = f64::EPSILON.powf(1.0 / 3.0);
        let fhn = FitzHughNagumo::<f64>::default();
        let sl = StuartLandau::new(1.3, 0.7);
        let probes: [[f64; 2]; 4] = [[0.3, -0.4], [1.2, 0.5], [-1.7, 0.9], [0.05, 2.0]];
        for p in probes {
            let scale = 1.0 + (p[0] * p[0] + p[1] * p[1]).sqrt();
            let tol = 10.0 * (h_fd * scale).powi(2);
            let a = fhn.jacobian(&p);
            assert!(rel_err(&fd_jacobian(&fhn, &p), &a) <= tol);
            let a = sl.jacobian(&p);
            assert!(rel_err(&fd_jacobian(&sl, &p), &a) <= tol);
        }
    }

    #[test]
    fn builtin_hessians_match_finite_differences_and_are_symmetric() {
        let sl = StuartLandau::new(0.8, -0.4);
        let fhn = FitzHughNagumo::<f64>::default();
        for p in [[0.3, -0.4], [1.2, 0.5], [-0.7, 0.9]] {
            for (exact, approx) in sl.hessians(&p).iter().zip(fd_hessians_from_drift(&sl, &p)) {
                assert!((exact - exact.transpose()).norm() <= 1e-12);
                assert!((exact - &approx).norm() <= 1e-5 * (1.0 + exact.norm()));
            }
            for (exact, approx) in fhn.hessians(&p).iter().zip(fd_hessians_from_jacobian(&fhn, &p)) {
                assert!((exact - &approx).norm() <= 1e-8 * (1.0 + exact.norm()));
            }
        }
    }

    #[test]
    fn finite_difference_wrapper_reproduces_analytic_derivatives() {
        let sl = StuartLandau::new(1.0, 0.5);
        let fd = FiniteDifference(sl.clone());
        assert_eq!(fd.derivative_mode(), DerivativeMode::FiniteDifference);
        let p = [0.9, 0.2];
        assert!(rel_err(&fd.jacobian(&p), &sl.jacobian(&p)) < 1e-9);
        for (a, b) in fd.hessians(&p).iter().zip(sl.hessians(&p)) {
            assert!((a - &b).norm() < 1e-5);
        }
    }

    #[test]
    fn noise_jacobians_match_finite_differences() {
        let fhn = FitzHughNagumo::<f64>::default();
        let sl = StuartLandau::new(1.0, 0.5);
        for p in [[0.3, -0.4], [1.2, 0.5], [-1.7, 0.9]] {
            for (a, b) in fhn.noise_jacobian(&p).unwrap().iter().zip(fd_noise_jacobian(&fhn, &p)) {
                assert!((a - &b).norm() < 1e-8, "{a} vs {b}");
            }
            for (a, b) in sl.noise_jacobian(&p).unwrap().iter().zip(fd_noise_jacobian(&sl, &p)) {
                assert!((a - &b).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn noise_is_finite_near_the_fhn_cycle() {
        let fhn = FitzHughNagumo::<f64>::default();
        for k in 0..64 {
            let a = k as f64 / 64.0 * std::f64::consts::TAU;
            let g = fhn.noise(&[2.0 * a.cos(), a.sin()]);
            assert!(g.iter().all(|v| v.is_finite()));
        }
    }
}

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{DerivativeMode, OscillatorSystem};
use crate::scalar::Real;

/// FitzHugh–Nagumo type oscillator
/// `ẋ = x − x³/3 − y`, `ẏ = x + a`, driven by the rotated rank-one noise
/// `G(x, y) = R(x, y)/‖(x, y)‖ · [[−1, −1], [1, 1]]` with `R = [[x, −y], [y, x]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitzHughNagumo<T> {
    pub a: T,
}

impl<T: Real> Default for FitzHughNagumo<T> {
    fn default() -> Self {
        Self { a: T::lit(0.5) }
    }
}

impl<T: Real> OscillatorSystem<T> for FitzHughNagumo<T> {
    fn dim(&self) -> usize {
        2
    }

    fn noise_dim(&self) -> usize {
        2
    }

    #[inline]
    fn drift(&self, x: &[T], out: &mut [T]) {
        let (u, v) = (x[0], x[1]);
        out[0] = u - u * u * u * T::lit(1.0 / 3.0) - v;
        out[1] = u + self.a;
    }

    #[inline]
    fn noise_into(&self, x: &[T], out: &mut DMatrix<T>) {
        let (u, v) = (x[0], x[1]);
        let inv = T::one() / (u * u + v * v).sqrt();
        let top = -(u + v) * inv;
        let bottom = (u - v) * inv;
        out[(0, 0)] = top;
        out[(0, 1)] = top;
        out[(1, 0)] = bottom;
        out[(1, 1)] = bottom;
    }

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::Analytic
    }

    fn jacobian(&self, x: &[T]) -> DMatrix<T> {
        let u = x[0];
        DMatrix::from_row_slice(2, 2, &[T::one() - u * u, -T::one(), T::one(), T::zero()])
    }

    fn hessians(&self, x: &[T]) -> Vec<DMatrix<T>> {
        let mut h1 = DMatrix::zeros(2, 2);
        h1[(0, 0)] = -(x[0] + x[0]);
        vec![h1, DMatrix::zeros(2, 2)]
    }

    fn noise_jacobian(&self, x: &[T]) -> Option<Vec<DMatrix<T>>> {
        let (u, v) = (x[0], x[1]);
        let r2 = u * u + v * v;
        let r3 = r2 * r2.sqrt();
        // top = −(u+v)/r, bottom = (u−v)/r
        let dtop_du = v * (u - v) / r3;
        let dtop_dv = u * (v - u) / r3;
        let dbot_du = v * (u + v) / r3;
        let dbot_dv = -u * (u + v) / r3;
        let du = DMatrix::from_row_slice(2, 2, &[dtop_du, dtop_du, dbot_du, dbot_du]);
        let dv = DMatrix::from_row_slice(2, 2, &[dtop_dv, dtop_dv, dbot_dv, dbot_dv]);
        Some(vec![du, dv])
    }
}

/// Noise options for [`StuartLandau`].
#[derive(Debug, Clone, PartialEq)]
pub enum StuartLandauNoise<T> {
    Zero,
    /// `G(x, y) = diag(x, 0)`.
    DiagX,
    /// Constant `2 × 2` matrix, row major.
    Constant([T; 4]),
}

/// Stuart–Landau normal form with unit attraction rate:
/// `ṙ = r(1 − r²)`, `φ̇ = ω + κ(1 − r²)`. The unit circle is a cycle of period
/// `2π/ω` and the asymptotic phase is `(φ − κ ln r)/ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct StuartLandau<T> {
    pub omega: T,
    pub kappa: T,
    pub noise: StuartLandauNoise<T>,
}

impl<T: Real> StuartLandau<T> {
    pub fn new(omega: T, kappa: T) -> Self {
        Self { omega, kappa, noise: StuartLandauNoise::DiagX }
    }

    pub fn with_noise(mut self, noise: StuartLandauNoise<T>) -> Self {
        self.noise = noise;
        self
    }

    pub fn period(&self) -> T {
        T::two_pi() / self.omega
    }
}

impl<T: Real> OscillatorSystem<T> for StuartLandau<T> {
    fn dim(&self) -> usize {
        2
    }

    fn noise_dim(&self) -> usize {
        2
    }

    #[inline]
    fn drift(&self, x: &[T], out: &mut [T]) {
        let (u, v) = (x[0], x[1]);
        let s = T::one() - u * u - v * v;
        let w = self.omega + self.kappa * s;
        out[0] = u * s - v * w;
        out[1] = v * s + u * w;
    }

    #[inline]
    fn noise_into(&self, x: &[T], out: &mut DMatrix<T>) {
        match &self.noise {
            StuartLandauNoise::Zero => out.fill(T::zero()),
            StuartLandauNoise::DiagX => {
                out.fill(T::zero());
                out[(0, 0)] = x[0];
            }
            StuartLandauNoise::Constant(c) => {
                out[(0, 0)] = c[0];
                out[(0, 1)] = c[1];
                out[(1, 0)] = c[2];
                out[(1, 1)] = c[3];
            }
        }
    }

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::Analytic
    }

    fn jacobian(&self, x: &[T]) -> DMatrix<T> {
        let (u, v) = (x[0], x[1]);
        let two = T::lit(2.0);
        let k = self.kappa;
        let s = T::one() - u * u - v * v;
        let w = self.omega + k * s;
        DMatrix::from_row_slice(
            2,
            2,
            &[
                s - two * u * u + two * k * u * v,
                -two * u * v - w + two * k * v * v,
                -two * u * v + w - two * k * u * u,
                s - two * v * v - two * k * u * v,
            ],
        )
    }

    fn hessians(&self, x: &[T]) -> Vec<DMatrix<T>> {
        let (u, v) = (x[0], x[1]);
        let two = T::lit(2.0);
        let six = T::lit(6.0);
        let k = self.kappa;
        let h1 = DMatrix::from_row_slice(
            2,
            2,
            &[-six * u + two * k * v, -two * v + two * k * u, -two * v + two * k * u, -two * u + six * k * v],
        );
        let h2 = DMatrix::from_row_slice(
            2,
            2,
            &[-two * v - six * k * u, -two * u - two * k * v, -two * u - two * k * v, -six * v - two * k * u],
        );
        vec![h1, h2]
    }

    fn noise_jacobian(&self, _x: &[T]) -> Option<Vec<DMatrix<T>>> {
        let mut dx = DMatrix::zeros(2, 2);
        if self.noise == StuartLandauNoise::DiagX {
            dx[(0, 0)] = T::one();
        }
        Some(vec![dx, DMatrix::zeros(2, 2)])
    }
}

/// Linear field `F(x) = A x` without noise.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem<T: Real> {
    pub a: DMatrix<T>,
}

impl<T: Real> LinearSystem<T> {
    pub fn new(a: DMatrix<T>) -> Self {
        assert!(a.is_square(), "linear system matrix must be square");
        Self { a }
    }

    /// Pure rotation with angular speed `omega`; every orbit is periodic.
    pub fn rotation(omega: T) -> Self {
        Self::new(DMatrix::from_row_slice(2, 2, &[T::zero(), -omega, omega, T::zero()]))
    }
}

impl<T: Real> OscillatorSystem<T> for LinearSystem<T> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn drift(&self, x: &[T], out: &mut [T]) {
        let d = self.dim();
        for (k, o) in out.iter_mut().enumerate().take(d) {
            *o = (0..d).fold(T::zero(), |acc, l| acc + self.a[(k, l)] * x[l]);
        }
    }

    fn noise_into(&self, _x: &[T], out: &mut DMatrix<T>) {
        out.fill(T::zero());
    }

    fn derivative_mode(&self) -> DerivativeMode {
        DerivativeMode::Analytic
    }

    fn jacobian(&self, _x: &[T]) -> DMatrix<T> {
        self.a.clone()
    }

    fn hessians(&self, _x: &[T]) -> Vec<DMatrix<T>> {
        let d = self.dim();
        vec![DMatrix::zeros(d, d); d]
    }

    fn noise_jacobian(&self, _x: &[T]) -> Option<Vec<DMatrix<T>>> {
        let d = self.dim();
        Some(vec![DMatrix::zeros(d, 1); d])
    }
}

type DriftFn<T> = Arc<dyn Fn(&[T]) -> DVector<T> + Send + Sync>;

/// Adds an extra drift `K` to an existing system.
#[derive(Clone)]
pub struct WithExtraDrift<T, S> {
    pub inner: S,
    k: DriftFn<T>,
}

impl<T: Real, S> WithExtraDrift<T, S> {
    pub fn new(inner: S, k: impl Fn(&[T]) -> DVector<T> + Send + Sync + 'static) -> Self {
        Self { inner, k: Arc::new(k) }
    }
}

impl<T: Real, S: OscillatorSystem<T>> OscillatorSystem<T> for WithExtraDrift<T, S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }
    fn drift(&self, x: &[T], out: &mut [T]) {
        self.inner.drift(x, out)
    }
    fn noise_into(&self, x: &[T], out: &mut DMatrix<T>) {
        self.inner.noise_into(x, out)
    }
    fn derivative_mode(&self) -> DerivativeMode {
        self.inner.derivative_mode()
    }
    fn jacobian(&self, x: &[T]) -> DMatrix<T> {
        self.inner.jacobian(x)
    }
    fn hessians(&self, x: &[T]) -> Vec<DMatrix<T>> {
        self.inner.hessians(x)
    }
    fn noise_jacobian(&self, x: &[T]) -> Option<Vec<DMatrix<T>>> {
        self.inner.noise_jacobian(x)
    }
    fn extra_drift(&self, x: &[T]) -> Option<DVector<T>> {
        Some((self.k)(x))
    }
    fn has_extra_drift(&self) -> bool {
        true
    }
}

/// Itô form of the Stratonovich equation `dX = F dt + ε G ∘ dB`: the
/// conversion term `½ Σ_{i,l} G_{il} ∂_i G_{jl}` becomes the extra drift `K`.
/// Requires the inner system's noise Jacobian.
#[derive(Debug, Clone)]
pub struct ItoCorrected<S>(pub S);

impl<S> ItoCorrected<S> {
    pub fn correction<T: Real>(&self, x: &[T]) -> Option<DVector<T>>
    where
        S: OscillatorSystem<T>,
    {
        let dg = self.0.noise_jacobian(x)?;
        let g = self.0.noise(x);
        let (d, m) = (self.0.dim(), self.0.noise_dim());
        let half = T::lit(0.5);
        let mut k = DVector::zeros(d);
        for j in 0..d {
            let mut acc = T::zero();
            for (i, dgi) in dg.iter().enumerate() {
                for l in 0..m {
                    acc += g[(i, l)] * dgi[(j, l)];
                }
            }
            k[j] = half * acc;
        }
        Some(k)
    }
}

impl<T: Real, S: OscillatorSystem<T>> OscillatorSystem<T> for ItoCorrected<S> {
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
    fn derivative_mode(&self) -> DerivativeMode {
        self.0.derivative_mode()
    }
    fn jacobian(&self, x: &[T]) -> DMatrix<T> {
        self.0.jacobian(x)
    }
    fn hessians(&self, x: &[T]) -> Vec<DMatrix<T>> {
        self.0.hessians(x)
    }
    fn noise_jacobian(&self, x: &[T]) -> Option<Vec<DMatrix<T>>> {
        self.0.noise_jacobian(x)
    }
    fn extra_drift(&self, x: &[T]) -> Option<DVector<T>> {
        let corr = self.correction(x)?;
        Some(match self.0.extra_drift(x) {
            Some(k) => k + corr,
            None => corr,
        })
    }
    fn has_extra_drift(&self) -> bool {
        true
    }
}

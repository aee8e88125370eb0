use nalgebra::{DMatrix, DVector};

use super::integrator::{integrate, IntegratorOptions, IntegratorStats};
use super::OscillatorSystem;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default tolerance for plain trajectory integration.
pub const DEFAULT_FLOW_TOL: f64 = 1e-8;
/// Default tolerance for cycle and variational work.
pub const DEFAULT_VARIATIONAL_TOL: f64 = 1e-10;

/// State of the flow `Φ(x₀, t)` with optional first and second variations.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult<T: Real> {
    pub state: DVector<T>,
    /// `J = DΦ(x₀, t)`.
    pub first_variation: Option<DMatrix<T>>,
    /// `S[k]` is the `d × d` matrix `∂²Φ_k/∂x_i∂x_j`.
    pub second_variation: Option<Vec<DMatrix<T>>>,
    pub stats: IntegratorStats,
}

fn check_input<T: Real, S: OscillatorSystem<T> + ?Sized>(system: &S, x0: &[T], t: T) -> Result<()> {
    if x0.len() != system.dim() {
        return Err(Error::InvalidArgument(format!(
            "initial state has length {}, system dimension is {}",
            x0.len(),
            system.dim()
        )));
    }
    if t < T::zero() {
        return Err(Error::InvalidArgument("flow time must be non-negative".into()));
    }
    Ok(())
}

pub fn flow<T: Real, S: OscillatorSystem<T> + ?Sized>(
    system: &S,
    x0: &[T],
    t: T,
    tol: T,
) -> Result<FlowResult<T>> {
    check_input(system, x0, t)?;
    let mut y = x0.to_vec();
    let stats = integrate(|x, dx| system.drift(x, dx), &mut y, t, &IntegratorOptions::with_tol(tol))?;
    Ok(FlowResult { state: DVector::from_vec(y), first_variation: None, second_variation: None, stats })
}

/// Integrates `x' = F(x)` jointly with `J' = DF(x) J`, `J(0) = I`.
pub fn flow_with_first_variation<T: Real, S: OscillatorSystem<T> + ?Sized>(
    system: &S,
    x0: &[T],
    t: T,
    tol: T,
) -> Result<FlowResult<T>> {
    check_input(system, x0, t)?;
    let d = system.dim();
    let mut y = vec![T::zero(); d + d * d];
    y[..d].copy_from_slice(x0);
    for i in 0..d {
        y[d + i * d + i] = T::one();
    }
    let rhs = |y: &[T], dy: &mut [T]| {
        let (x, jac_cols) = y.split_at(d);
        let (dx, djac) = dy.split_at_mut(d);
        system.drift(x, dx);
        let a = system.jacobian(x);
        // column-major J: J[(l, i)] = jac_cols[i * d + l]
        for i in 0..d {
            let col = &jac_cols[i * d..(i + 1) * d];
            for k in 0..d {
                djac[i * d + k] = (0..d).fold(T::zero(), |acc, l| acc + a[(k, l)] * col[l]);
            }
        }
    };
    let stats = integrate(rhs, &mut y, t, &IntegratorOptions::with_tol(tol))?;
    let state = DVector::from_column_slice(&y[..d]);
    let jac = DMatrix::from_column_slice(d, d, &y[d..]);
    Ok(FlowResult { state, first_variation: Some(jac), second_variation: None, stats })
}

/// Integrates state, first and second variations jointly:
/// `S'_{k,ij} = Σ_l DF_{kl} S_{l,ij} + Σ_{l,m} D²F_{k,lm} J_{li} J_{mj}`.
pub fn flow_with_second_variation<T: Real, S: OscillatorSystem<T> + ?Sized>(
    system: &S,
    x0: &[T],
    t: T,
    tol: T,
) -> Result<FlowResult<T>> {
    check_input(system, x0, t)?;
    let d = system.dim();
    let base_s = d + d * d;
    let mut y = vec![T::zero(); base_s + d * d * d];
    y[..d].copy_from_slice(x0);
    for i in 0..d {
        y[d + i * d + i] = T::one();
    }
    // S_{k,ij} lives at base_s + k + d*i + d*d*j
    let s_idx = move |k: usize, i: usize, j: usize| base_s + k + d * i + d * d * j;
    let rhs = |y: &[T], dy: &mut [T]| {
        let x = &y[..d];
        system.drift(x, &mut dy[..d]);
        let a = system.jacobian(x);
        let hess = system.hessians(x);
        let jac = |l: usize, i: usize| y[d + i * d + l];
        for i in 0..d {
            for k in 0..d {
                dy[d + i * d + k] = (0..d).fold(T::zero(), |acc, l| acc + a[(k, l)] * jac(l, i));
            }
        }
        for i in 0..d {
            for j in i..d {
                for k in 0..d {
                    let mut acc = T::zero();
                    for l in 0..d {
                        acc += a[(k, l)] * y[s_idx(l, i, j)];
                    }
                    let hk = &hess[k];
                    for l in 0..d {
                        let jli = jac(l, i);
                        for m in 0..d {
                            acc += hk[(l, m)] * jli * jac(m, j);
                        }
                    }
                    dy[s_idx(k, i, j)] = acc;
                    dy[s_idx(k, j, i)] = acc;
                }
            }
        }
    };
    let stats = integrate(rhs, &mut y, t, &IntegratorOptions::with_tol(tol))?;
    let state = DVector::from_column_slice(&y[..d]);
    let jac = DMatrix::from_column_slice(d, d, &y[d..base_s]);
    let second = (0..d)
        .map(|k| DMatrix::from_fn(d, d, |i, j| y[s_idx(k, i, j)]))
        .collect();
    Ok(FlowResult { state, first_variation: Some(jac), second_variation: Some(second), stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{FitzHughNagumo, LinearSystem, StuartLandau};
    use std::f64::consts::PI;

    /// `ẋ₁ = x₁²`, `ẋ₂ = −x₂`; closed-form flow `a/(1 − a t)`.
    struct Quadratic;

    impl OscillatorSystem<f64> for Quadratic {
        fn dim(&self) -> usize {
            2
        }
        fn noise_dim(&self) -> usize {
            1
        }
        fn drift(&self, x: &[f64], out: &mut [f64]) {
            out[0] = x[0] * x[0];
            out[1] = -x[1];
        }
        fn noise_into(&self, _x: &[f64], out: &mut DMatrix<f64>) {
            out.fill(0.0);
        }
        fn derivative_mode(&self) -> crate::dynamics::DerivativeMode {
            crate::dynamics::DerivativeMode::Analytic
        }
        fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
            DMatrix::from_row_slice(2, 2, &[2.0 * x[0], 0.0, 0.0, -1.0])
        }
        fn hessians(&self, _x: &[f64]) -> Vec<DMatrix<f64>> {
            vec![DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]), DMatrix::zeros(2, 2)]
        }
    }

    /// Matrix exponential by scaling and squaring of a long Taylor series.
    fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let squarings = 10;
        let scaled = a / 2f64.powi(squarings);
        let mut term = DMatrix::identity(n, n);
        let mut sum = DMatrix::identity(n, n);
        for k in 1..30 {
            term = &term * &scaled / k as f64;
            sum += &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn stuart_landau_returns_after_one_period() {
        let sl = StuartLandau::new(1.0, 0.0);
        let r = flow(&sl, &[1.0, 0.0], 2.0 * PI, 1e-12).unwrap();
        assert!((r.state[0] - 1.0).abs() < 1e-8 && r.state[1].abs() < 1e-8);
    }

    #[test]
    fn zero_time_is_exact_identity() {
        let fhn = FitzHughNagumo::<f64>::default();
        let x0 = [0.123456789, -1.5];
        let r = flow(&fhn, &x0, 0.0, 1e-8).unwrap();
        assert_eq!(r.state.as_slice(), &x0);
        let r = flow_with_second_variation(&fhn, &x0, 0.0, 1e-8).unwrap();
        assert_eq!(r.first_variation.unwrap(), DMatrix::identity(2, 2));
        assert!(r.second_variation.unwrap().iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn linear_first_variation_is_matrix_exponential() {
        let a = DMatrix::from_row_slice(2, 2, &[-0.3, 1.1, -0.7, 0.2]);
        let sys = LinearSystem::new(a.clone());
        for t in [0.5, 1.7, 4.0] {
            let r = flow_with_first_variation(&sys, &[0.4, -0.9], t, 1e-12).unwrap();
            let j = r.first_variation.unwrap();
            assert!((j - expm(&(&a * t))).amax() < 1e-8);
        }
    }

    #[test]
    fn linear_second_variation_vanishes() {
        let a = DMatrix::from_row_slice(2, 2, &[-0.3, 1.1, -0.7, 0.2]);
        let sys = LinearSystem::new(a);
        let r = flow_with_second_variation(&sys, &[0.4, -0.9], 3.0, 1e-10).unwrap();
        assert!(r.second_variation.unwrap().iter().all(|s| s.amax() == 0.0));
    }

    #[test]
    fn stuart_landau_monodromy_eigenvalues() {
        let sl = StuartLandau::new(1.0, 0.5);
        let r = flow_with_first_variation(&sl, &[1.0, 0.0], 2.0 * PI, 1e-12).unwrap();
        let ev = r.first_variation.unwrap().complex_eigenvalues();
        let mut mods: Vec<f64> = ev.iter().map(|z| z.re).collect();
        mods.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((mods[0] - (-4.0 * PI).exp()).abs() < 1e-6);
        assert!((mods[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quadratic_second_variation_closed_form() {
        for (a, t) in [(0.5, 0.3), (1.0, 0.2), (-0.8, 0.5)] {
            let r = flow_with_second_variation(&Quadratic, &[a, 1.0], t, 1e-12).unwrap();
            let s = r.second_variation.unwrap();
            let exact = 2.0 * t / (1.0 - a * t).powi(3);
            assert!((s[0][(0, 0)] - exact).abs() <= 1e-7 * exact.abs().max(1.0));
            assert!((r.state[0] - a / (1.0 - a * t)).abs() < 1e-10);
        }
    }

    #[test]
    fn second_variation_is_symmetric() {
        let sl = StuartLandau::new(1.2, 0.9);
        let r = flow_with_second_variation(&sl, &[0.6, 0.8], 3.0, 1e-10).unwrap();
        for s in r.second_variation.unwrap() {
            let s: DMatrix<f64> = s;
            assert!((&s - s.transpose()).amax() <= 1e-10 * s.amax().max(1.0));
        }
    }
}

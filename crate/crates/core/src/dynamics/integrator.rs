//! Adaptive Dormand–Prince 5(4) integrator for autonomous systems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{all_finite, Real};

#[derive(Debug, Clone, Copy)]
pub struct IntegratorOptions<T> {
    pub rtol: T,
    pub atol: T,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<T>,
    pub max_step: Option<T>,
    pub max_steps: usize,
}

impl<T: Real> IntegratorOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        Self { rtol: tol, atol: tol, h0: None, max_step: None, max_steps: 5_000_000 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    /// Largest accepted scaled local error estimate (≤ 1 by construction).
    pub max_error_estimate: f64,
}

impl IntegratorStats {
    pub fn merge(&mut self, other: &IntegratorStats) {
        self.steps += other.steps;
        self.rejected += other.rejected;
        self.rhs_evals += other.rhs_evals;
        self.max_error_estimate = self.max_error_estimate.max(other.max_error_estimate);
    }
}

// Autonomous right-hand sides only, so the nodes c_i are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// 5th minus embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Tableau<T> {
    a: [T; 15],
    b: [T; 5],
    e: [T; 6],
}

impl<T: Real> Tableau<T> {
    fn new() -> Self {
        let l = T::lit;
        Self {
            a: [
                l(A21),
                l(A31),
                l(A32),
                l(A41),
                l(A42),
                l(A43),
                l(A51),
                l(A52),
                l(A53),
                l(A54),
                l(A61),
                l(A62),
                l(A63),
                l(A64),
                l(A65),
            ],
            b: [l(B1), l(B3), l(B4), l(B5), l(B6)],
            e: [l(E1), l(E3), l(E4), l(E5), l(E6), l(E7)],
        }
    }
}

/// Integrates the autonomous system `y' = rhs(y)` from time 0 to `t_end`
/// (`t_end ≥ 0`), overwriting `y` with the final state. A zero interval
/// leaves `y` untouched.
pub fn integrate<T, F>(
    mut rhs: F,
    y: &mut [T],
    t_end: T,
    opts: &IntegratorOptions<T>,
) -> Result<IntegratorStats>
where
    T: Real,
    F: FnMut(&[T], &mut [T]),
{
    let mut stats = IntegratorStats::default();
    if t_end < T::zero() || !t_end.is_finite() {
        return Err(Error::InvalidArgument(format!("integration interval {} must be ≥ 0", t_end.as_f64())));
    }
    if t_end == T::zero() {
        return Ok(stats);
    }
    if !all_finite(y) {
        return Err(Error::NonFinite { t: 0.0 });
    }

    let n = y.len();
    let tab = Tableau::<T>::new();
    let mut k: Vec<Vec<T>> = vec![vec![T::zero(); n]; 7];
    let mut tmp = vec![T::zero(); n];
    let mut y_new = vec![T::zero(); n];

    rhs(y, &mut k[0]);
    stats.rhs_evals += 1;

    let err_norm = |y0: &[T], y1: &[T], err: &[T]| -> T {
        let mut acc = T::zero();
        for i in 0..n {
            let sc = opts.atol + opts.rtol * y0[i].abs().max(y1[i].abs());
            let r = err[i] / sc;
            acc += r * r;
        }
        (acc / T::from_usize_lossy(n)).sqrt()
    };

    let mut h = match opts.h0 {
        Some(h0) => h0,
        None => {
            // Hairer–Nørsett–Wanner starting step.
            let zeros = vec![T::zero(); n];
            let d0 = err_norm(y, &zeros, y);
            let d1 = err_norm(y, &zeros, &k[0]);
            let h0 = if d0 < T::lit(1e-5) || d1 < T::lit(1e-5) { T::lit(1e-6) } else { T::lit(0.01) * d0 / d1 };
            for i in 0..n {
                tmp[i] = y[i] + h0 * k[0][i];
            }
            rhs(&tmp, &mut k[1]);
            stats.rhs_evals += 1;
            for i in 0..n {
                y_new[i] = k[1][i] - k[0][i];
            }
            let d2 = err_norm(y, &zeros, &y_new) / h0;
            let h1 = if d1.max(d2) <= T::lit(1e-15) {
                (h0 * T::lit(1e-3)).max(T::lit(1e-6))
            } else {
                (T::lit(0.01) / d1.max(d2)).powf(T::lit(0.2))
            };
            (T::lit(100.0) * h0).min(h1)
        }
    };
    if let Some(hm) = opts.max_step {
        h = h.min(hm);
    }
    h = h.min(t_end);

    let safety = T::lit(0.9);
    let fac_min = T::lit(0.2);
    let fac_max = T::lit(5.0);
    let mut t = T::zero();
    let mut last_rejected = false;

    while t < t_end {
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(Error::TooManySteps(opts.max_steps));
        }
        let remaining = t_end - t;
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h <= T::lit(4.0) * T::machine_eps() * t.abs().max(T::one()) || !h.is_finite() {
            return Err(Error::StepUnderflow { t: t.as_f64(), h: h.as_f64() });
        }

        let a = &tab.a;
        for i in 0..n {
            tmp[i] = y[i] + h * a[0] * k[0][i];
        }
        rhs(&tmp, &mut k[1]);
        for i in 0..n {
            tmp[i] = y[i] + h * (a[1] * k[0][i] + a[2] * k[1][i]);
        }
        rhs(&tmp, &mut k[2]);
        for i in 0..n {
            tmp[i] = y[i] + h * (a[3] * k[0][i] + a[4] * k[1][i] + a[5] * k[2][i]);
        }
        rhs(&tmp, &mut k[3]);
        for i in 0..n {
            tmp[i] = y[i] + h * (a[6] * k[0][i] + a[7] * k[1][i] + a[8] * k[2][i] + a[9] * k[3][i]);
        }
        rhs(&tmp, &mut k[4]);
        for i in 0..n {
            tmp[i] = y[i]
                + h * (a[10] * k[0][i] + a[11] * k[1][i] + a[12] * k[2][i] + a[13] * k[3][i] + a[14] * k[4][i]);
        }
        rhs(&tmp, &mut k[5]);
        let b = &tab.b;
        for i in 0..n {
            y_new[i] = y[i]
                + h * (b[0] * k[0][i] + b[1] * k[2][i] + b[2] * k[3][i] + b[3] * k[4][i] + b[4] * k[5][i]);
        }
        rhs(&y_new, &mut k[6]);
        stats.rhs_evals += 6;

        let e = &tab.e;
        for i in 0..n {
            tmp[i] = h
                * (e[0] * k[0][i] + e[1] * k[2][i] + e[2] * k[3][i] + e[3] * k[4][i] + e[4] * k[5][i]
                    + e[5] * k[6][i]);
        }
        let err = err_norm(y, &y_new, &tmp);

        if !err.is_finite() || !all_finite(&y_new) {
            if h < T::lit(1e-12) * t_end.max(T::one()) {
                return Err(Error::NonFinite { t: t.as_f64() });
            }
            h *= T::lit(0.25);
            stats.rejected += 1;
            last_rejected = true;
            continue;
        }

        if err <= T::one() {
            t = if last { t_end } else { t + h };
            y.copy_from_slice(&y_new);
            k.swap(0, 6);
            stats.steps += 1;
            stats.max_error_estimate = stats.max_error_estimate.max(err.as_f64());
            let mut fac = if err == T::zero() { fac_max } else { safety * err.powf(T::lit(-0.2)) };
            fac = fac.min(fac_max).max(fac_min);
            if last_rejected {
                fac = fac.min(T::one());
            }
            h *= fac;
            if let Some(hm) = opts.max_step {
                h = h.min(hm);
            }
            last_rejected = false;
        } else {
            let fac = (safety * err.powf(T::lit(-0.2))).max(fac_min);
            h *= fac;
            stats.rejected += 1;
            last_rejected = true;
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_accurate() {
        let mut y = [1.0_f64];
        integrate(|y, dy| dy[0] = -y[0], &mut y, 3.0, &IntegratorOptions::with_tol(1e-12)).unwrap();
        assert!((y[0] - (-3.0_f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn zero_interval_is_identity() {
        let mut y = [0.3_f64, -2.0];
        let stats = integrate(|_, dy| dy.fill(1.0), &mut y, 0.0, &IntegratorOptions::with_tol(1e-8)).unwrap();
        assert_eq!(y, [0.3, -2.0]);
        assert_eq!(stats.steps, 0);
    }

    #[test]
    fn blow_up_is_reported() {
        let mut y = [1.0_f64];
        let err = integrate(|y, dy| dy[0] = y[0] * y[0], &mut y, 2.0, &IntegratorOptions::with_tol(1e-8)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. } | Error::StepUnderflow { .. } | Error::TooManySteps(_)), "{err:?}");
    }

    #[test]
    fn negative_interval_rejected() {
        let mut y = [1.0_f64];
        assert!(integrate(|_, dy| dy[0] = 0.0, &mut y, -1.0, &IntegratorOptions::with_tol(1e-8)).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let mut y = [1.0_f32, 0.0];
        integrate(|y, dy| { dy[0] = -y[1]; dy[1] = y[0]; }, &mut y, std::f32::consts::PI, &IntegratorOptions::with_tol(1e-6)).unwrap();
        assert!((y[0] + 1.0).abs() < 1e-4 && y[1].abs() < 1e-4);
    }
}

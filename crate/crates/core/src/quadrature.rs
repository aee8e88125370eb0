//! Periodic trapezoid rule on equally spaced samples.
//!
//! For smooth periodic integrands the error decays faster than any power of
//! the sample count, so the cycle samples double as quadrature nodes.

use crate::scalar::Real;

/// `∫₀ᴾ f` from samples `f(i P/n)`, `i = 0..n` (the endpoint is not repeated).
pub fn periodic_trapezoid<T: Real>(samples: &[T], period: T) -> T {
    if samples.is_empty() {
        return T::zero();
    }
    let sum = samples.iter().fold(T::zero(), |acc, &v| acc + v);
    sum * period / T::from_usize_lossy(samples.len())
}

/// Period average `(1/P) ∫₀ᴾ f`.
pub fn periodic_mean<T: Real>(samples: &[T]) -> T {
    if samples.is_empty() {
        return T::zero();
    }
    samples.iter().fold(T::zero(), |acc, &v| acc + v) / T::from_usize_lossy(samples.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    /// Modified Bessel function Iₙ from its power series.
    fn bessel_i(n: usize, x: f64) -> f64 {
        let mut term = (1..=n).fold(1.0, |t, k| t * (x / 2.0) / k as f64);
        let mut sum = term;
        for k in 1..60 {
            term *= (x / 2.0).powi(2) / (k * (k + n)) as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn spectral_accuracy_on_exp_cos() {
        // exp(cos θ) = I₀(1) + 2 Σ Iₖ(1) cos kθ; n nodes alias every multiple of n
        let exact = TAU * bessel_i(0, 1.0);
        for n in [4usize, 8, 16] {
            let s: Vec<f64> = (0..n).map(|i| (TAU * i as f64 / n as f64).cos().exp()).collect();
            let err = periodic_trapezoid(&s, TAU) - exact;
            let predicted = 2.0 * TAU * (1..4).map(|m| bessel_i(m * n, 1.0)).sum::<f64>();
            assert!((err - predicted).abs() <= 1e-14 + 1e-9 * predicted, "n {n}: {err} vs {predicted}");
        }
    }

    #[test]
    fn trigonometric_moments() {
        let n = 64;
        let th: Vec<f64> = (0..n).map(|i| TAU * i as f64 / n as f64).collect();
        let c2s2: Vec<f64> = th.iter().map(|t| (t.cos() * t.sin()).powi(2)).collect();
        let c4: Vec<f64> = th.iter().map(|t| t.cos().powi(4)).collect();
        assert!((periodic_mean(&c2s2) - 0.125).abs() < 1e-15);
        assert!((periodic_mean(&c4) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn empty_is_zero() {
        assert_eq!(periodic_trapezoid::<f64>(&[], 1.0), 0.0);
    }
}

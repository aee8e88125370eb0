//! Principal matrix solutions, monodromy matrices and Floquet spectra.
//!
//! Exponents are reported as `λ_j = log(μ_j)/T`, so a stable cycle has
//! `Re λ_j < 0` for every non-unit multiplier and the spectral gap is
//! `γ_F = min Re(−λ_j) > 0`. The logarithm of the monodromy matrix itself is
//! never formed.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::cycle::LimitCycle;
use crate::dynamics::{flow_with_first_variation, OscillatorSystem};
use crate::error::{Error, Result};
use crate::quadrature::periodic_trapezoid;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct FloquetOptions<T> {
    pub unit_tol: T,
    pub stability_margin: T,
    /// Pairs of multipliers closer than this mark the spectrum ill-conditioned.
    pub defect_gap: T,
}

impl<T: Real> Default for FloquetOptions<T> {
    fn default() -> Self {
        Self { unit_tol: T::lit(1e-6), stability_margin: T::lit(1e-8), defect_gap: T::lit(1e-8) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloquetData<T: Real> {
    pub phase: T,
    pub period: T,
    pub monodromy: DMatrix<T>,
    pub multipliers: Vec<Complex<T>>,
    pub exponents: Vec<Complex<T>>,
    pub unit_index: usize,
    /// Right eigenvector of the unit multiplier, unit length, oriented along `F(q_θ)`.
    pub unit_eigenvector: DVector<T>,
    /// Angle in radians between `unit_eigenvector` and `F(q_θ)`.
    pub unit_alignment: T,
    pub spectral_gap: T,
    pub hyperbolic: bool,
    pub stable: bool,
    pub ill_conditioned: bool,
    pub unit_tol: T,
}

/// `Π(t, s)`: the first variation along the cycle from phase `s` to `t`.
/// For `t < s` this is the inverse of `Π(s, t)`.
pub fn principal_matrix<T: Real, S: OscillatorSystem<T> + ?Sized>(
    system: &S,
    cycle: &LimitCycle<T>,
    t: T,
    s: T,
    tol: T,
) -> Result<DMatrix<T>> {
    let d = cycle.dim();
    if t == s {
        return Ok(DMatrix::identity(d, d));
    }
    if t < s {
        let forward = principal_matrix(system, cycle, s, t, tol)?;
        return forward
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("principal matrix is singular".into()));
    }
    let q = cycle.point_at_phase(s);
    let fv = flow_with_first_variation(system, q.as_slice(), t - s, tol)?;
    Ok(fv.first_variation.expect("first variation requested"))
}

/// `M_θ = Π(θ + T, θ)`, with the periodicity `Π(t+T, s+T) = Π(t, s)` checked
/// on a probe pair.
pub fn monodromy<T: Real, S: OscillatorSystem<T> + ?Sized>(
    system: &S,
    cycle: &LimitCycle<T>,
    theta: T,
    tol: T,
) -> Result<DMatrix<T>> {
    let period = cycle.period();
    let m = principal_matrix(system, cycle, theta + period, theta, tol)?;
    let probe = period / T::lit(7.0);
    let a = principal_matrix(system, cycle, theta + probe, theta, tol)?;
    let b = principal_matrix(system, cycle, theta + period + probe, theta + period, tol)?;
    let residual = (&a - &b).amax() / a.amax().max(T::one());
    if residual > T::lit(1e-7) {
        return Err(Error::PeriodicityFailure(residual.as_f64()));
    }
    Ok(m)
}

/// Right null vector of `a` (singular vector of the smallest singular value).
pub(crate) fn null_vector<T: Real>(a: &DMatrix<T>) -> (DVector<T>, T) {
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (idx, smin) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, T::max_value().unwrap_or(T::lit(f64::MAX))), |best, (i, &s)| if s < best.1 { (i, s) } else { best });
    (v_t.row(idx).transpose(), smin)
}

pub(crate) fn modulus<T: Real>(z: Complex<T>) -> T {
    z.re.hypot(z.im)
}

fn log<T: Real>(z: Complex<T>) -> Complex<T> {
    Complex::new(modulus(z).ln(), z.im.atan2(z.re))
}

pub fn floquet_spectrum<T: Real>(
    monodromy: &DMatrix<T>,
    cycle: &LimitCycle<T>,
    theta: T,
    opts: &FloquetOptions<T>,
) -> Result<FloquetData<T>> {
    let d = monodromy.nrows();
    let period = cycle.period();
    let multipliers: Vec<Complex<T>> = monodromy.clone().complex_eigenvalues().iter().copied().collect();
    let one = Complex::new(T::one(), T::zero());
    let dist_to_one: Vec<T> = multipliers.iter().map(|&mu| modulus(mu - one)).collect();
    let unit_index = (0..d)
        .min_by(|&a, &b| dist_to_one[a].partial_cmp(&dist_to_one[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    let unit_count = dist_to_one.iter().filter(|&&x| x <= opts.unit_tol).count();

    let mut ill_conditioned = false;
    for i in 0..d {
        for j in (i + 1)..d {
            if modulus(multipliers[i] - multipliers[j]) < opts.defect_gap {
                ill_conditioned = true;
            }
        }
    }
    let hyperbolic = unit_count == 1;
    if !hyperbolic {
        return Err(Error::NotHyperbolic { unit_count, unit_tol: opts.unit_tol.as_f64() });
    }

    let exponents: Vec<Complex<T>> = multipliers.iter().map(|&mu| { let l = log(mu); Complex::new(l.re / period, l.im / period) }).collect();
    let spectral_gap = (0..d)
        .filter(|&j| j != unit_index)
        .map(|j| -exponents[j].re)
        .fold(T::max_value().unwrap_or(T::lit(f64::MAX)), |a, b| a.min(b));
    let stable = (0..d)
        .filter(|&j| j != unit_index)
        .all(|j| modulus(multipliers[j]) < T::one() - opts.stability_margin);

    let mu_unit = multipliers[unit_index].re;
    let shifted = monodromy - DMatrix::identity(d, d) * mu_unit;
    let (mut v, _) = null_vector(&shifted);
    let f = cycle.tangent_at_phase(theta);
    if v.dot(&f) < T::zero() {
        v = -v;
    }
    let f_hat = f.normalize();
    let along = v.dot(&f_hat);
    let across = (&v - &f_hat * along).norm();
    let unit_alignment = across.atan2(along.abs());

    Ok(FloquetData {
        phase: theta,
        period,
        monodromy: monodromy.clone(),
        multipliers,
        exponents,
        unit_index,
        unit_eigenvector: v,
        unit_alignment,
        spectral_gap,
        hyperbolic,
        stable,
        ill_conditioned,
        unit_tol: if ill_conditioned { opts.unit_tol.max(opts.defect_gap.sqrt()) } else { opts.unit_tol },
    })
}

/// Monodromy at `θ` followed by its spectrum.
pub fn floquet_at<T: Real, S: OscillatorSystem<T> + ?Sized>(
    system: &S,
    cycle: &LimitCycle<T>,
    theta: T,
    tol: T,
    opts: &FloquetOptions<T>,
) -> Result<FloquetData<T>> {
    let m = monodromy(system, cycle, theta, tol)?;
    floquet_spectrum(&m, cycle, theta, opts)
}

/// `exp(∫₀ᵀ tr DF(q_s) ds)`, which equals `det M_θ` by Liouville's formula.
pub fn liouville_determinant<T: Real, S: OscillatorSystem<T> + ?Sized>(system: &S, cycle: &LimitCycle<T>) -> T {
    let traces: Vec<T> = cycle.samples().iter().map(|q| system.jacobian(q.as_slice()).trace()).collect();
    periodic_trapezoid(&traces, cycle.period()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycle::{find_limit_cycle, CycleOptions};
    use crate::dynamics::{FitzHughNagumo, LinearSystem, StuartLandau};
    use std::f64::consts::PI;

    const TOL: f64 = 1e-11;

    fn sl() -> (StuartLandau<f64>, LimitCycle<f64>) {
        let sys = StuartLandau::new(1.0, 0.5);
        let c = find_limit_cycle(&sys, &[0.3, 0.1], &CycleOptions::default()).unwrap();
        (sys, c)
    }

    fn fhn() -> (FitzHughNagumo<f64>, LimitCycle<f64>) {
        let sys = FitzHughNagumo::default();
        let c = find_limit_cycle(&sys, &[0.0, 0.0], &CycleOptions::default()).unwrap();
        (sys, c)
    }

    fn sorted_moduli(fd: &FloquetData<f64>) -> Vec<f64> {
        let mut m: Vec<f64> = fd.multipliers.iter().map(|&z| modulus(z)).collect();
        m.sort_by(|a, b| a.partial_cmp(b).unwrap());
        m
    }

    #[test]
    fn identity_on_the_diagonal() {
        let (sys, c) = sl();
        assert_eq!(principal_matrix(&sys, &c, 1.3, 1.3, TOL).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn transports_the_drift() {
        let (sys, c) = fhn();
        for (s, t) in [(0.0, 1.0), (0.7, 5.3), (2.0, 9.5)] {
            let p = principal_matrix(&sys, &c, t, s, TOL).unwrap();
            let moved = &p * c.tangent_at_phase(s);
            assert!((moved - c.tangent_at_phase(t)).amax() < 1e-7);
        }
    }

    #[test]
    fn composition_and_inverse() {
        let (sys, c) = fhn();
        let (t0, s, t) = (0.4, 2.9, 6.1);
        let lhs = principal_matrix(&sys, &c, t, t0, TOL).unwrap();
        let rhs = principal_matrix(&sys, &c, t, s, TOL).unwrap() * principal_matrix(&sys, &c, s, t0, TOL).unwrap();
        assert!((&lhs - &rhs).amax() / lhs.amax() < 1e-7);
        let back = principal_matrix(&sys, &c, t0, t, TOL).unwrap();
        assert!((back * lhs - DMatrix::identity(2, 2)).amax() < 1e-8);
    }

    #[test]
    fn stuart_landau_multipliers() {
        let (sys, c) = sl();
        for theta in [0.0, 1.0, 4.0] {
            let fd = floquet_at(&sys, &c, theta, TOL, &FloquetOptions::default()).unwrap();
            let m = sorted_moduli(&fd);
            assert!((m[0] - (-4.0 * PI).exp()).abs() < 1e-6);
            assert!((m[1] - 1.0).abs() < 1e-6);
            assert!((fd.spectral_gap - 2.0).abs() < 1e-6, "gap {}", fd.spectral_gap);
            assert!(fd.hyperbolic && fd.stable);
        }
    }

    #[test]
    fn monodromies_are_similar() {
        let (sys, c) = fhn();
        let (a, b) = (0.5, 4.2);
        let ma = monodromy(&sys, &c, a, TOL).unwrap();
        let mb = monodromy(&sys, &c, b, TOL).unwrap();
        let conj = principal_matrix(&sys, &c, a, b, TOL).unwrap() * mb * principal_matrix(&sys, &c, b, a, TOL).unwrap();
        assert!((&ma - conj).amax() < 1e-6);
    }

    #[test]
    fn fhn_is_stable_hyperbolic() {
        let (sys, c) = fhn();
        let opts = FloquetOptions::default();
        let fd0 = floquet_at(&sys, &c, 0.0, TOL, &opts).unwrap();
        assert!(fd0.hyperbolic && fd0.stable && fd0.spectral_gap > 0.0);
        assert!(fd0.unit_alignment < 1e-6, "angle {}", fd0.unit_alignment);
        let fd1 = floquet_at(&sys, &c, c.period() / 3.0, TOL, &opts).unwrap();
        let (m0, m1) = (sorted_moduli(&fd0), sorted_moduli(&fd1));
        for (x, y) in m0.iter().zip(&m1) {
            assert!((x - y).abs() < 1e-6);
        }
        // d = 2: the non-unit multiplier is the determinant
        let mu2 = fd0.monodromy.determinant();
        assert!((fd0.spectral_gap + mu2.abs().ln() / c.period()).abs() < 1e-6);
    }

    #[test]
    fn liouville_formula() {
        for (sys, c) in [fhn()] {
            let m = monodromy(&sys, &c, 0.0, TOL).unwrap();
            let expected = liouville_determinant(&sys, &c);
            assert!((m.determinant() - expected).abs() <= 1e-5 * expected.abs());
        }
        let (sys, c) = sl();
        let m = monodromy(&sys, &c, 0.0, TOL).unwrap();
        let expected = liouville_determinant(&sys, &c);
        assert!((m.determinant() - expected).abs() <= 1e-5 * expected.abs());
    }

    #[test]
    fn rotation_is_not_hyperbolic() {
        let rot = LinearSystem::rotation(1.0);
        let opts = CycleOptions { relax_time: 0.0, ..CycleOptions::default() };
        let c = find_limit_cycle(&rot, &[1.0, 0.0], &opts).unwrap();
        let m = monodromy(&rot, &c, 0.0, TOL).unwrap();
        let err = floquet_spectrum(&m, &c, 0.0, &FloquetOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NotHyperbolic { unit_count: 2, .. }));
    }
}

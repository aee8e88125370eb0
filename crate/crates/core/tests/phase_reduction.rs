use isochron::cycle::{find_limit_cycle, CycleOptions, LimitCycle};
use isochron::dynamics::{flow, FitzHughNagumo, ItoCorrected, StuartLandau, StuartLandauNoise};
use isochron::floquet::{floquet_at, FloquetOptions};
use isochron::phase_reduction::*;
use isochron::{Error, OscillatorSystem};
use nalgebra::{DMatrix, DVector, Matrix2};
use proptest::prelude::*;

fn sl_cycle(sys: &StuartLandau<f64>) -> LimitCycle<f64> {
    find_limit_cycle(sys, &[1.3, 0.2], &CycleOptions { n_samples: 256, ..Default::default() }).unwrap()
}

fn fhn() -> (FitzHughNagumo<f64>, LimitCycle<f64>) {
    let sys = FitzHughNagumo::<f64>::default();
    let cycle = find_limit_cycle(&sys, &[1.0, 0.5], &CycleOptions::default()).unwrap();
    (sys, cycle)
}

/// Closed-form gradient and Hessian of `(atan2(y, x) − κ ln r) / ω`.
fn sl_jet(omega: f64, kappa: f64, x: f64, y: f64) -> (DVector<f64>, DMatrix<f64>) {
    let rho = x * x + y * y;
    let r2 = rho * rho;
    let g = DVector::from_vec(vec![(-y - kappa * x) / rho, (x - kappa * y) / rho]) / omega;
    let hxx = 2.0 * x * y / r2 - kappa * (y * y - x * x) / r2;
    let hxy = (y * y - x * x) / r2 + kappa * 2.0 * x * y / r2;
    let hyy = -2.0 * x * y / r2 - kappa * (x * x - y * y) / r2;
    (g, DMatrix::from_row_slice(2, 2, &[hxx, hxy, hxy, hyy]) / omega)
}

#[test]
fn stuart_landau_jets_match_closed_form() {
    for &(omega, kappa) in &[(1.0, 0.0), (1.0, 0.5), (1.0, 1.0), (2.0, -0.7)] {
        let sys = StuartLandau::new(omega, kappa);
        let cycle = sl_cycle(&sys);
        let profile = isochron_jets(&sys, &cycle, 32, &JetOptions::default()).unwrap();
        for jet in &profile.jets {
            let q = cycle.point_at_phase(jet.phase);
            let (g, h) = sl_jet(omega, kappa, q[0], q[1]);
            assert!((&jet.gradient - g).amax() < 1e-7, "ω={omega} κ={kappa}");
            assert!((&jet.hessian - h).amax() < 1e-7, "ω={omega} κ={kappa}");
            assert!(jet.residuals.within_thresholds(), "{:?}", jet.residuals);
        }
    }
}

#[test]
fn stuart_landau_coefficients_match_closed_form() {
    for &(omega, kappa) in &[(1.0, 0.0), (1.0, 0.5), (1.0, 1.0), (1.5, 0.3)] {
        let sys = StuartLandau::new(omega, kappa);
        let cycle = sl_cycle(&sys);
        let profile = isochron_jets(&sys, &cycle, 64, &JetOptions::default()).unwrap();
        let c = phase_coefficients(&cycle, &profile, &sys);
        let sigma2 = (1.0 + 3.0 * kappa * kappa) / (8.0 * omega * omega);
        let b = kappa / (8.0 * omega);
        assert!((c.sigma2 - sigma2).abs() < 1e-6, "σ² {} vs {}", c.sigma2, sigma2);
        assert!((c.b_ito - b).abs() < 1e-6, "b {} vs {}", c.b_ito, b);
        let strat = c.b_strat.unwrap();
        assert!((strat - (b - kappa / (4.0 * omega))).abs() < 1e-6);
        assert!(c.b_k.is_none());
    }
}

#[test]
fn stuart_landau_zero_noise_gives_zero_coefficients() {
    let sys = StuartLandau::new(1.0, 0.5).with_noise(StuartLandauNoise::Zero);
    let cycle = sl_cycle(&sys);
    let profile = isochron_jets(&sys, &cycle, 16, &JetOptions::default()).unwrap();
    let c = phase_coefficients(&cycle, &profile, &sys);
    assert_eq!(c.sigma2, 0.0);
    assert_eq!(c.b_ito, 0.0);
}

#[test]
fn fitzhugh_nagumo_jets_and_coefficients() {
    let (sys, cycle) = fhn();
    let profile = isochron_jets(&sys, &cycle, 256, &JetOptions::default()).unwrap();
    let worst = profile.max_residuals();
    assert!(worst.within_thresholds(), "{worst:?}");
    assert!(profile.periodicity_residual < 1e-6);
    let c = phase_coefficients(&cycle, &profile, &sys);
    assert!((0.678..=0.698).contains(&c.b_ito), "b = {}", c.b_ito);

    // σ² against gradients of the isochron map obtained by brute force:
    // relax for ten periods, read off the phase, central differences
    let period = cycle.period();
    let theta = |x: &[f64]| cycle.project_to_cycle(flow(&sys, x, 10.0 * period, 1e-13).unwrap().state.as_slice()).unwrap().phase;
    let n = 32;
    let h = 1e-5;
    let mut acc = 0.0;
    for i in 0..n {
        let q = cycle.point_at_phase(period * i as f64 / n as f64);
        let mut g = DVector::zeros(2);
        for k in 0..2 {
            let (mut a, mut b) = ([q[0], q[1]], [q[0], q[1]]);
            a[k] += h;
            b[k] -= h;
            let mut diff = theta(&a) - theta(&b);
            if diff > period / 2.0 {
                diff -= period;
            } else if diff < -period / 2.0 {
                diff += period;
            }
            g[k] = diff / (2.0 * h);
        }
        assert!((&g - profile.gradient_at(period * i as f64 / n as f64)).amax() < 1e-6);
        acc += (sys.noise(q.as_slice()).transpose() * g).norm_squared();
    }
    let coarse = isochron_jets(&sys, &cycle, n, &JetOptions::default()).unwrap();
    let sigma2 = sigma_squared(&cycle, &coarse, &sys);
    assert!((acc / n as f64 - sigma2).abs() < 1e-6 * sigma2);
}

#[test]
fn fitzhugh_nagumo_gradient_is_biorthogonal() {
    let (sys, cycle) = fhn();
    let fd = floquet_at(&sys, &cycle, 0.0, 1e-11, &FloquetOptions::default()).unwrap();
    let g = isochron_gradient_at(&cycle, &fd, 0.0).unwrap();
    let other = 1 - fd.unit_index;
    let mu = fd.multipliers[other].re;
    let shifted = &fd.monodromy - DMatrix::identity(2, 2) * mu;
    let v = shifted.svd(true, true).v_t.unwrap().row(1).transpose();
    assert!(g.dot(&v).abs() < 1e-8 * g.norm());
    assert!((g.dot(&cycle.tangent_at_phase(0.0)) - 1.0).abs() < 1e-12);
}

#[test]
fn coefficients_are_gauge_invariant() {
    let (sys, cycle) = fhn();
    let shifted = cycle.resample(&sys, cycle.n_samples(), cycle.period() / 3.0, 1e-12).unwrap();
    let opts = JetOptions::default();
    let a = phase_coefficients(&cycle, &isochron_jets(&sys, &cycle, 128, &opts).unwrap(), &sys);
    let b = phase_coefficients(&shifted, &isochron_jets(&sys, &shifted, 128, &opts).unwrap(), &sys);
    assert!((a.sigma2 - b.sigma2).abs() < 1e-8 * a.sigma2);
    assert!((a.b_ito - b.b_ito).abs() < 1e-8 * a.b_ito.abs());
}

#[test]
fn coefficients_converge_in_quadrature_points() {
    let (sys, cycle) = fhn();
    let opts = JetOptions::default();
    let a = phase_coefficients(&cycle, &isochron_jets(&sys, &cycle, 256, &opts).unwrap(), &sys);
    let b = phase_coefficients(&cycle, &isochron_jets(&sys, &cycle, 512, &opts).unwrap(), &sys);
    assert!((a.sigma2 - b.sigma2).abs() < 1e-8 * a.sigma2, "{} {}", a.sigma2, b.sigma2);
    assert!((a.b_ito - b.b_ito).abs() < 1e-8 * a.b_ito.abs(), "{} {}", a.b_ito, b.b_ito);
}

#[test]
fn single_phase_profile_matches_dense_profile() {
    let (sys, cycle) = fhn();
    let opts = JetOptions::default();
    let one = isochron_jets(&sys, &cycle, 1, &opts).unwrap();
    let many = isochron_jets(&sys, &cycle, 64, &opts).unwrap();
    assert!((&one.jets[0].gradient - &many.jets[0].gradient).amax() < 1e-8);
    assert!((&one.jets[0].hessian - &many.jets[0].hessian).amax() < 1e-8);
}

#[test]
fn ito_and_stratonovich_are_consistent() {
    let (sys, cycle) = fhn();
    let corrected = ItoCorrected(sys);
    assert!(corrected.has_extra_drift());
    let opts = JetOptions::default();
    let profile = isochron_jets(&corrected, &cycle, 256, &opts).unwrap();
    let c = phase_coefficients(&cycle, &profile, &corrected);
    let strat = c.b_strat.unwrap();
    let via_k = c.b_ito + c.b_k.unwrap();
    assert!((strat - via_k).abs() < 1e-8, "{strat} vs {via_k}");
}

#[test]
fn drift_k_needs_extra_drift() {
    let (sys, cycle) = fhn();
    let profile = isochron_jets(&sys, &cycle, 8, &JetOptions::default()).unwrap();
    assert_eq!(drift_k(&cycle, &profile, &sys), Err(Error::MissingK));
}

#[test]
fn drift_k_of_the_vector_field_is_one() {
    let sys = StuartLandau::new(1.0, 0.4);
    let cycle = sl_cycle(&sys);
    let with_k = isochron::dynamics::WithExtraDrift::new(sys, move |x: &[f64]| {
        isochron::dynamics::drift_vec(&StuartLandau::new(1.0, 0.4), x)
    });
    let profile = isochron_jets(&with_k, &cycle, 32, &JetOptions::default()).unwrap();
    assert!((drift_k(&cycle, &profile, &with_k).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn interpolated_jets_track_the_oracle() {
    let (omega, kappa) = (1.0, 0.8);
    let sys = StuartLandau::new(omega, kappa);
    let cycle = sl_cycle(&sys);
    let profile = isochron_jets(&sys, &cycle, 128, &JetOptions::default()).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let theta = 0.123 + k as f64 * 0.37;
        let q = cycle.point_at_phase(theta);
        let (g, h) = sl_jet(omega, kappa, q[0], q[1]);
        let eg = (profile.gradient_at(theta) - g).amax();
        let eh = (profile.hessian_at(theta) - h).amax();
        worst = worst.max(eg).max(eh);
    }
    println!("worst {worst:e}");
    assert!(worst < 1e-6);
}

#[test]
fn hessian_system_without_second_variation() {
    // M = diag(1, e⁻¹), F along e₁, no source: H = c e₁e₁ᵗ
    let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, (-1.0f64).exp()]));
    let f = DVector::from_vec(vec![2.0, 0.0]);
    let h = solve_hessian_system(&m, &DMatrix::zeros(2, 2), &f, 3.0, 1e-10).unwrap();
    let expected = DMatrix::from_row_slice(2, 2, &[0.75, 0.0, 0.0, 0.0]);
    assert!((h - expected).amax() < 1e-14);
}

#[test]
fn hessian_system_detects_resonance() {
    let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
    let f = DVector::from_vec(vec![1.0, 0.0]);
    let err = solve_hessian_system(&m, &DMatrix::zeros(2, 2), &f, 0.0, 1e-10).unwrap_err();
    assert!(matches!(err, Error::RankDeficient { rank: 2, needed: 3 }));
}

#[test]
fn hessian_system_in_three_dimensions() {
    let p = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.1, 1.0, 0.4, 0.0, -0.5, 1.0]);
    let pinv = p.clone().try_inverse().unwrap();
    let m = &p * DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.3, -0.6])) * &pinv;
    let f = p.column(0).into_owned();
    let h_true = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, -1.0, 2.0, 0.5, 0.3, -1.0, 0.3, -2.0]);
    let source = &h_true - m.transpose() * &h_true * &m;
    let c = (f.transpose() * &h_true * &f)[(0, 0)];
    let h = solve_hessian_system(&m, &source, &f, c, 1e-10).unwrap();
    assert!((h - h_true).amax() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn hessian_system_recovers_planted_solution(
        mu in -0.95f64..0.95,
        p01 in -1.0f64..1.0,
        p10 in -1.0f64..1.0,
        hxx in -5.0f64..5.0,
        hxy in -5.0f64..5.0,
        hyy in -5.0f64..5.0,
    ) {
        let p = Matrix2::new(1.0, p01, p10, 1.0);
        prop_assume!(p.determinant().abs() > 0.2);
        let p = DMatrix::from_row_slice(2, 2, p.as_slice()).transpose();
        let m = &p * DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, mu])) * p.clone().try_inverse().unwrap();
        let f = p.column(0).into_owned();
        let h_true = DMatrix::from_row_slice(2, 2, &[hxx, hxy, hxy, hyy]);
        let source = &h_true - m.transpose() * &h_true * &m;
        let c = (f.transpose() * &h_true * &f)[(0, 0)];
        let h = solve_hessian_system(&m, &source, &f, c, 1e-10).unwrap();
        prop_assert!((&h - &h_true).amax() < 1e-8 * (1.0 + h_true.amax()));
        prop_assert_eq!(h[(0, 1)], h[(1, 0)]);
    }
}

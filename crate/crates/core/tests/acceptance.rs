//! End-to-end acceptance checks. Each test prints one verdict line, written
//! straight to stdout so it shows up even when the harness captures output.
//!
//! The Monte Carlo checks are the expensive part (several minutes on one
//! core); they use the RK4-drift scheme so that the time-step bias in `b`
//! stays well below the statistical error.

use std::io::Write;
use std::sync::OnceLock;

use isochron::cycle::{find_limit_cycle, CycleOptions, LimitCycle};
use isochron::dynamics::{FitzHughNagumo, ItoCorrected, StuartLandau, StuartLandauNoise};
use isochron::floquet::{floquet_at, FloquetOptions};
use isochron::montecarlo::*;
use isochron::phase_reduction::{isochron_jets, phase_coefficients, thresholds, JetOptions, JetProfile};
use nalgebra::{DMatrix, DVector};

const REF_LIMIT_SIGMA: (f64, f64) = (1.05, 1.09);
const REF_LIMIT_B: (f64, f64) = (0.678, 0.698);
/// `(ε, t_obs / T, N, b_N, σ_N)`.
const REF_ROWS: [(f64, f64, usize, f64, f64); 2] = [(0.1, 40.0, 50_000, 0.699, 1.13), (0.05, 160.0, 10_000, 0.690, 1.10)];
const SIGMA_N_TOL: f64 = 0.05;
const LLN_B: f64 = 0.688;
/// Occupancy observed on the first verified run, kept as a regression value.
const FROZEN_OCCUPANCY: f64 = 0.638;
/// A few trajectories either way, to absorb libm differences across platforms.
const OCCUPANCY_SLACK: f64 = 0.005;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "acceptance [{id}] {name}: {verdict} | {detail}");
    let _ = out.flush();
}

struct Fhn {
    system: FitzHughNagumo<f64>,
    cycle: LimitCycle<f64>,
    jets: JetProfile<f64>,
}

fn fhn() -> &'static Fhn {
    static CELL: OnceLock<Fhn> = OnceLock::new();
    CELL.get_or_init(|| {
        let system = FitzHughNagumo::default();
        let cycle = find_limit_cycle(&system, &[1.0, 0.5], &CycleOptions::default()).unwrap();
        let jets = isochron_jets(&system, &cycle, 256, &JetOptions::default()).unwrap();
        Fhn { system, cycle, jets }
    })
}

fn sim(period: f64, eps: f64, periods: f64, n: usize, seed: u64, per_period: f64, observe: f64) -> SimConfig<f64> {
    let mut c = SimConfig::for_cycle(period, eps, periods * period, n, seed);
    c.dt = period / per_period;
    c.stride = ((per_period / observe).round() as usize).max(1);
    c
}

#[test]
fn fhn_coefficients() {
    let f = fhn();
    let c = phase_coefficients(&f.cycle, &f.jets, &f.system);
    let sigma_ok = (REF_LIMIT_SIGMA.0..=REF_LIMIT_SIGMA.1).contains(&c.sigma);
    let b_ok = (REF_LIMIT_B.0..=REF_LIMIT_B.1).contains(&c.b_ito);
    report(
        1,
        "fhn coefficients",
        sigma_ok && b_ok,
        &format!(
            "sigma = {:.5} in [{}, {}]: {}; b = {:.5} in [{}, {}]: {}",
            c.sigma,
            REF_LIMIT_SIGMA.0,
            REF_LIMIT_SIGMA.1,
            sigma_ok,
            c.b_ito,
            REF_LIMIT_B.0,
            REF_LIMIT_B.1,
            b_ok
        ),
    );
    assert!(b_ok, "b = {}", c.b_ito);
    assert!(sigma_ok, "sigma = {}", c.sigma);
}

#[test]
fn monte_carlo_reference_rows() {
    let f = fhn();
    let t = f.cycle.period();
    let mut all = true;
    let mut details = Vec::new();
    for (k, &(eps, periods, n, ref_b, ref_sigma)) in REF_ROWS.iter().enumerate() {
        let config = sim(t, eps, periods, n, 2000 + k as u64, 1000.0, 16.0);
        let stats = estimate_dephasing(&f.system, &f.cycle, &f.jets, &config).unwrap();
        let b_ok = (stats.b_n - ref_b).abs() <= 3.0 * stats.stderr_b;
        let sigma_ok = (stats.sigma_n - ref_sigma).abs() <= SIGMA_N_TOL;
        all &= b_ok && sigma_ok;
        details.push(format!(
            "eps {eps}: N {} (exited {}), b_N {:.4} ± {:.4} vs {ref_b} [{}], sigma_N {:.4} vs {ref_sigma} [{}]",
            stats.n_total,
            stats.n_exited,
            stats.b_n,
            stats.stderr_b,
            if b_ok { "ok" } else { "off" },
            stats.sigma_n,
            if sigma_ok { "ok" } else { "off" },
        ));
    }
    report(2, "monte carlo rows", all, &details.join("; "));
    assert!(all, "{details:?}");
}

fn sl_gradient(omega: f64, kappa: f64, x: f64, y: f64) -> DVector<f64> {
    let r2 = x * x + y * y;
    DVector::from_vec(vec![(-y - kappa * x) / r2, (x - kappa * y) / r2]) / omega
}

/// Central differences of the closed-form gradient, an independent route to
/// the Hessian.
fn sl_hessian(omega: f64, kappa: f64, x: f64, y: f64) -> DMatrix<f64> {
    let h = 1e-5;
    let dx = (sl_gradient(omega, kappa, x + h, y) - sl_gradient(omega, kappa, x - h, y)) / (2.0 * h);
    let dy = (sl_gradient(omega, kappa, x, y + h) - sl_gradient(omega, kappa, x, y - h)) / (2.0 * h);
    DMatrix::from_columns(&[dx, dy])
}

#[test]
fn stuart_landau_closed_forms() {
    let omega = 1.0;
    let mut all = true;
    let mut details = Vec::new();
    for kappa in [0.0, 0.5, 1.0] {
        let sys = StuartLandau::new(omega, kappa).with_noise(StuartLandauNoise::DiagX);
        let cycle = find_limit_cycle(&sys, &[1.2, 0.1], &CycleOptions::default()).unwrap();
        let jets = isochron_jets(&sys, &cycle, 256, &JetOptions::default()).unwrap();
        let (mut g_err, mut h_err) = (0.0f64, 0.0f64);
        for jet in &jets.jets {
            let q = cycle.point_at_phase(jet.phase);
            g_err = g_err.max((&jet.gradient - sl_gradient(omega, kappa, q[0], q[1])).amax());
            h_err = h_err.max((&jet.hessian - sl_hessian(omega, kappa, q[0], q[1])).amax());
        }
        let fl = floquet_at(&sys, &cycle, 0.0, 1e-12, &FloquetOptions::default()).unwrap();
        let mut moduli: Vec<f64> = fl.multipliers.iter().map(|z| z.norm()).collect();
        moduli.sort_by(|a, b| b.total_cmp(a));
        let m_err = (moduli[0] - 1.0).abs().max((moduli[1] - (-4.0 * std::f64::consts::PI).exp()).abs());
        let c = phase_coefficients(&cycle, &jets, &sys);
        let s_err = (c.sigma2 - (1.0 + 3.0 * kappa * kappa) / 8.0).abs();
        let b_err = (c.b_ito - kappa / 8.0).abs();
        let ok = g_err <= 1e-6 && h_err <= 1e-4 && m_err <= 1e-6 && s_err <= 1e-4 && b_err <= 1e-4;
        all &= ok;
        details.push(format!(
            "kappa {kappa}: grad {g_err:.1e}, hess {h_err:.1e}, mult {m_err:.1e}, sigma2 {s_err:.1e}, b {b_err:.1e}"
        ));
    }
    report(3, "stuart-landau closed forms", all, &details.join("; "));
    assert!(all, "{details:?}");
}

#[test]
fn defining_relation_residuals() {
    let f = fhn();
    let sl = StuartLandau::new(1.0, 0.7);
    let sl_cycle = find_limit_cycle(&sl, &[1.2, 0.1], &CycleOptions::default()).unwrap();
    let sl_jets = isochron_jets(&sl, &sl_cycle, 256, &JetOptions::default()).unwrap();
    let mut all = true;
    let mut details = Vec::new();
    for (name, jets) in [("fhn", &f.jets), ("stuart-landau", &sl_jets)] {
        let every = jets.jets.iter().all(|j| j.residuals.within_thresholds());
        let closure = jets.periodicity_residual <= thresholds::PERIODICITY;
        all &= every && closure;
        let m = jets.max_residuals();
        details.push(format!(
            "{name}: g.F {:.1e}, g=gM {:.1e}, tangential {:.1e}, fixed point {:.1e}, symmetry {:.1e}, closure {:.1e}",
            m.normalization, m.left_eigen, m.tangential, m.fixed_point, m.symmetry, jets.periodicity_residual
        ));
    }
    report(4, "defining-relation residuals", all, &details.join("; "));
    assert!(all, "{details:?}");
}

#[test]
fn ito_stratonovich_consistency() {
    let f = fhn();
    let sl = StuartLandau::new(1.0, 0.5).with_noise(StuartLandauNoise::DiagX);
    let sl_cycle = find_limit_cycle(&sl, &[1.2, 0.1], &CycleOptions::default()).unwrap();
    let mut all = true;
    let mut details = Vec::new();
    let mut check = |name: &str, direct: f64, via: f64| {
        let diff = (direct - via).abs();
        all &= diff <= 1e-6;
        details.push(format!("{name}: direct {direct:.8}, converted {via:.8}, diff {diff:.1e}"));
    };
    {
        let direct = phase_coefficients(&f.cycle, &f.jets, &f.system).b_strat.unwrap();
        let conv = ItoCorrected(f.system.clone());
        let jets = isochron_jets(&conv, &f.cycle, 256, &JetOptions::default()).unwrap();
        let c = phase_coefficients(&f.cycle, &jets, &conv);
        check("fhn", direct, c.b_ito + c.b_k.unwrap());
    }
    {
        let jets = isochron_jets(&sl, &sl_cycle, 256, &JetOptions::default()).unwrap();
        let direct = phase_coefficients(&sl_cycle, &jets, &sl).b_strat.unwrap();
        let conv = ItoCorrected(sl.clone());
        let jets = isochron_jets(&conv, &sl_cycle, 256, &JetOptions::default()).unwrap();
        let c = phase_coefficients(&sl_cycle, &jets, &conv);
        check("stuart-landau", direct, c.b_ito + c.b_k.unwrap());
    }
    report(5, "ito/stratonovich consistency", all, &details.join("; "));
    assert!(all, "{details:?}");
}

#[test]
fn limit_theorem_properties() {
    let f = fhn();
    let t = f.cycle.period();

    // (a) noiseless phase identity
    let mut worst = 0.0f64;
    for theta0 in [0.0, 0.4 * t] {
        let mut c = sim(t, 0.0, 10.0, 1, 1, 1000.0, 16.0);
        c.x0 = InitialCondition::OnCycle(theta0);
        let traj = simulate_sde(&f.system, &f.cycle, &c, 0).unwrap();
        let series = track_phase(&traj, &f.cycle, &f.jets).unwrap();
        for (time, phase) in series.times.iter().zip(&series.phases) {
            if *time > 0.0 {
                worst = worst.max((phase - series.initial_phase() - time).abs() / (time / t));
            }
        }
    }
    let a_ok = worst <= 1e-5;

    // (b) and (c): one ensemble split across two master seeds. The coarser
    // step only shifts the mean, which neither check looks at in absolute terms.
    let halves: Vec<EnsembleStats> = [601u64, 602]
        .iter()
        .map(|&seed| {
            let c = sim(t, 0.05, 160.0, 25_000, seed, 256.0, 4.0);
            estimate_dephasing(&f.system, &f.cycle, &f.jets, &c).unwrap()
        })
        .collect();
    let pooled: Vec<f64> = halves.iter().flat_map(|s| s.samples()).collect();
    let m = moments(&pooled);
    let b_ok = m.skewness.abs() <= 0.1 && m.excess_kurtosis.abs() <= 0.2;
    let combined = halves[0].stderr_b.hypot(halves[1].stderr_b);
    let split = (halves[0].b_n - halves[1].b_n).abs();
    let c_ok = split <= 3.0 * combined;

    let all = a_ok && b_ok && c_ok;
    report(
        6,
        "limit-theorem properties",
        all,
        &format!(
            "(a) drift {worst:.1e}/period; (b) N {} skew {:.4} ex-kurtosis {:.4}; (c) b_N {:.4} vs {:.4}, |diff| {split:.4} <= {:.4}",
            m.n,
            m.skewness,
            m.excess_kurtosis,
            halves[0].b_n,
            halves[1].b_n,
            3.0 * combined
        ),
    );
    assert!(a_ok, "noiseless drift {worst}");
    assert!(b_ok, "{m:?}");
    assert!(c_ok, "split {split} vs {combined}");
}

#[test]
fn long_time_winding_number() {
    let f = fhn();
    let t = f.cycle.period();
    let mut c = sim(t, 0.1, 1000.0, 500, 7, 1000.0, 16.0);
    // starting half a turn in centres the floor in the winding count
    c.x0 = InitialCondition::OnCycle(t / 2.0);
    let est = long_time_drift(&f.system, &f.cycle, &f.jets, &c).unwrap();
    let ok = (est.estimate - LLN_B).abs() <= 3.0 * est.stderr;
    report(
        7,
        "long-time winding number",
        ok,
        &format!("N {} valid {}: {:.4} ± {:.4} vs {LLN_B}", est.n_total, est.n_valid, est.estimate, est.stderr),
    );
    assert!(ok, "{est:?}");
}

#[test]
fn tube_occupancy() {
    let f = fhn();
    let t = f.cycle.period();
    let c = sim(t, 0.02, 100.0, 1000, 8, 1000.0, 16.0);
    let occ = tube_statistics(&f.system, &f.cycle, &f.jets, &c, 0.5).unwrap();
    // same check at half the noise, to show the trend towards 1
    let half = sim(t, 0.01, 100.0, 1000, 8, 1000.0, 16.0);
    let occ_half = tube_statistics(&f.system, &f.cycle, &f.jets, &half, 0.5).unwrap();
    let threshold_ok = occ >= 0.99;
    let regression_ok = (occ - FROZEN_OCCUPANCY).abs() <= OCCUPANCY_SLACK;
    report(
        8,
        "tube occupancy",
        threshold_ok && regression_ok,
        &format!(
            "fraction {occ} (>= 0.99: {threshold_ok}; frozen {FROZEN_OCCUPANCY}: {regression_ok}); at eps 0.01: {occ_half}"
        ),
    );
    assert!(regression_ok, "occupancy {occ} moved away from the frozen {FROZEN_OCCUPANCY}");
    assert!(threshold_ok, "occupancy {occ} below 0.99");
}

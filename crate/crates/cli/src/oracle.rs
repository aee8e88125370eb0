//! Stuart–Landau comparison suite. The asymptotic phase
//! `θ = (atan2(y, x) − κ ln r)/ω` gives the isochron jets in closed form;
//! with `G = diag(x, 0)` the coefficients are `σ² = (1 + 3κ²)/(8ω²)` and
//! `b = κ/(8ω)`, and the Stratonovich shift is `−κ/(8ω)`.

use isochron::cycle::{find_limit_cycle, CycleOptions};
use isochron::dynamics::{StuartLandau, StuartLandauNoise};
use isochron::floquet::{floquet_at, FloquetOptions};
use isochron::io::SCHEMA_VERSION;
use isochron::phase_reduction::{isochron_jets, phase_coefficients, JetOptions};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub const GRADIENT_TOL: f64 = 1e-6;
pub const HESSIAN_TOL: f64 = 1e-4;
pub const MULTIPLIER_TOL: f64 = 1e-6;
pub const COEFFICIENT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub schema_version: u32,
    pub omega: f64,
    pub kappa: f64,
    pub n_jets: usize,
    pub max_gradient_error: f64,
    pub max_hessian_error: f64,
    pub multiplier_error: f64,
    pub sigma2: f64,
    pub sigma2_error: f64,
    pub b: f64,
    pub b_error: f64,
    pub b_strat_error: f64,
    pub pass: bool,
}

pub fn exact_gradient(omega: f64, kappa: f64, x: f64, y: f64) -> DVector<f64> {
    let r2 = x * x + y * y;
    DVector::from_vec(vec![(-y - kappa * x) / (omega * r2), (x - kappa * y) / (omega * r2)])
}

pub fn exact_hessian(omega: f64, kappa: f64, x: f64, y: f64) -> DMatrix<f64> {
    let r2 = x * x + y * y;
    let r4 = r2 * r2;
    let a = -y - kappa * x;
    let b = x - kappa * y;
    let hxx = (-kappa * r2 - 2.0 * x * a) / r4;
    let hxy = (-r2 - 2.0 * y * a) / r4;
    let hyy = (-kappa * r2 - 2.0 * y * b) / r4;
    DMatrix::from_row_slice(2, 2, &[hxx, hxy, hxy, hyy]) / omega
}

pub fn run_oracle(config: &RunConfig) -> Result<OracleReport, CliError> {
    let (omega, kappa) = (config.oracle.omega, config.oracle.kappa);
    let sys = StuartLandau::new(omega, kappa).with_noise(StuartLandauNoise::DiagX);
    let opts = CycleOptions {
        n_samples: config.cycle.n_samples,
        cycle_tol: config.cycle.cycle_tol,
        integrator_tol: config.cycle.integrator_tol,
        ..CycleOptions::default()
    };
    let cycle = find_limit_cycle(&sys, &[1.2, 0.0], &opts)?;
    let jet_opts = JetOptions { tol: config.jets.tol, ..JetOptions::default() };
    let floquet = floquet_at(&sys, &cycle, 0.0, config.cycle.integrator_tol, &FloquetOptions::default())?;
    let jets = isochron_jets(&sys, &cycle, config.jets.n, &jet_opts)?;

    let mut grad_err: f64 = 0.0;
    let mut hess_err: f64 = 0.0;
    for jet in &jets.jets {
        let q = cycle.point_at_phase(jet.phase);
        grad_err = grad_err.max((&jet.gradient - exact_gradient(omega, kappa, q[0], q[1])).amax());
        hess_err = hess_err.max((&jet.hessian - exact_hessian(omega, kappa, q[0], q[1])).amax());
    }

    let mut moduli: Vec<f64> = floquet.multipliers.iter().map(|z| z.norm()).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    let expected = [1.0, (-4.0 * std::f64::consts::PI / omega).exp()];
    let multiplier_error = moduli.iter().zip(expected).map(|(m, e)| (m - e).abs()).fold(0.0, f64::max);

    let coeffs = phase_coefficients(&cycle, &jets, &sys);
    let sigma2_error = (coeffs.sigma2 - (1.0 + 3.0 * kappa * kappa) / (8.0 * omega * omega)).abs();
    let b_error = (coeffs.b_ito - kappa / (8.0 * omega)).abs();
    let b_strat_error = coeffs.b_strat.map_or(f64::INFINITY, |b| (b + kappa / (8.0 * omega)).abs());

    let pass = grad_err <= GRADIENT_TOL
        && hess_err <= HESSIAN_TOL
        && multiplier_error <= MULTIPLIER_TOL
        && sigma2_error <= COEFFICIENT_TOL
        && b_error <= COEFFICIENT_TOL;
    Ok(OracleReport {
        schema_version: SCHEMA_VERSION,
        omega,
        kappa,
        n_jets: jets.len(),
        max_gradient_error: grad_err,
        max_hessian_error: hess_err,
        multiplier_error,
        sigma2: coeffs.sigma2,
        sigma2_error,
        b: coeffs.b_ito,
        b_error,
        b_strat_error,
        pass,
    })
}

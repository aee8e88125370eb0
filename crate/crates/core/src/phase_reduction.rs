//! Isochron jets along the cycle and the phase-diffusion coefficients.
//!
//! On the cycle the isochron map `θ` satisfies
//!
//! * `Dθ F = 1`,
//! * `Fᵗ D²θ F = −Dθ DF F`,
//! * `Dθ = Dθ M` with `M = DΦ(q_θ, T)`,
//! * `D²θ = Dθ·D²Φ(q_θ, T) + Mᵗ D²θ M`.
//!
//! The gradient is the left unit eigenvector of the monodromy matrix,
//! transported around the cycle with the adjoint equation. The Hessian solves
//! the last relation in the space of symmetric matrices, where its kernel is
//! one dimensional, with the tangential relation appended as an extra row.
//!
//! The coefficients of the limiting phase process are period averages:
//! `σ² = ⟨Dθ G Gᵗ Dθᵗ⟩`, `b = ½⟨tr(G Gᵗ D²θ)⟩`, plus `½⟨Σ Dθ_j ∂_iG_{jl} G_{il}⟩`
//! in the Stratonovich case and `⟨Dθ K⟩` for an extra drift `ε²K`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cycle::LimitCycle;
use crate::dynamics::{drift_vec, flow_with_second_variation, integrate, IntegratorOptions, OscillatorSystem};
use crate::error::{Error, Result};
use crate::floquet::{floquet_at, null_vector, FloquetData, FloquetOptions};
use crate::quadrature::periodic_mean;
use crate::scalar::Real;

/// Thresholds for the defining relations of an isochron jet.
pub mod thresholds {
    pub const NORMALIZATION: f64 = 1e-8;
    pub const LEFT_EIGEN: f64 = 1e-7;
    pub const TANGENTIAL: f64 = 1e-6;
    pub const FIXED_POINT: f64 = 1e-6;
    pub const SYMMETRY: f64 = 1e-10;
    pub const PERIODICITY: f64 = 1e-6;
}

#[derive(Debug, Clone, Copy)]
pub struct JetOptions<T> {
    /// Integrator tolerance for the variational and adjoint flows.
    pub tol: T,
    pub floquet: FloquetOptions<T>,
    /// Relative singular-value cutoff for the Hessian system.
    pub rank_tol: T,
}

impl<T: Real> Default for JetOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-11), floquet: FloquetOptions::default(), rank_tol: T::lit(1e-10) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct JetResiduals {
    /// `|g·F − 1|`.
    pub normalization: f64,
    /// `|g·F − 1|` before renormalization after adjoint transport.
    pub transport: f64,
    /// `‖g − g M‖∞`.
    pub left_eigen: f64,
    /// `|Fᵗ H F + g DF F|`.
    pub tangential: f64,
    /// `‖H − g·S − Mᵗ H M‖∞`.
    pub fixed_point: f64,
    /// `‖H − Hᵗ‖∞`.
    pub symmetry: f64,
}

impl JetResiduals {
    pub fn within_thresholds(&self) -> bool {
        self.normalization <= thresholds::NORMALIZATION
            && self.left_eigen <= thresholds::LEFT_EIGEN
            && self.tangential <= thresholds::TANGENTIAL
            && self.fixed_point <= thresholds::FIXED_POINT
            && self.symmetry <= thresholds::SYMMETRY
    }
}

/// Gradient and Hessian of the isochron map at `q_θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsochronJet<T: Real> {
    pub phase: T,
    /// `Dθ(q_θ)`, a row vector stored as a column.
    pub gradient: DVector<T>,
    pub hessian: DMatrix<T>,
    pub residuals: JetResiduals,
}

/// Jets on `n` equally spaced phases, with periodic interpolation in between.
#[derive(Debug, Clone, PartialEq)]
pub struct JetProfile<T: Real> {
    pub period: T,
    pub jets: Vec<IsochronJet<T>>,
    /// `‖g(0) transported once around − g(0)‖`.
    pub periodicity_residual: f64,
    /// Phase derivatives of gradient and Hessian at each jet.
    rates: Vec<(DVector<T>, DMatrix<T>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCoefficients<T> {
    pub sigma2: T,
    pub sigma: T,
    pub b_ito: T,
    pub b_strat: Option<T>,
    pub b_k: Option<T>,
    pub n_points: usize,
    pub rule: String,
}

/// Left eigenvector of `M_θ` for the unit multiplier, scaled so `g·F(q_θ) = 1`.
pub fn isochron_gradient_at<T: Real>(cycle: &LimitCycle<T>, floquet: &FloquetData<T>, theta: T) -> Result<DVector<T>> {
    if !floquet.hyperbolic {
        return Err(Error::NotHyperbolic { unit_count: 0, unit_tol: floquet.unit_tol.as_f64() });
    }
    let d = floquet.monodromy.nrows();
    let mu = floquet.multipliers[floquet.unit_index].re;
    let shifted = floquet.monodromy.transpose() - DMatrix::identity(d, d) * mu;
    let (raw, _) = null_vector(&shifted);
    let f = cycle.tangent_at_phase(theta);
    let scale = raw.dot(&f);
    if scale.abs() < T::lit(1e-12) * f.norm() {
        return Err(Error::DegenerateNormalization(scale.as_f64()));
    }
    Ok(raw / scale)
}

/// Transports `g` backwards in phase over `duration` along the cycle starting
/// at phase `from`: `dg/dτ = DF(q)ᵗ g` while `dq/dτ = −F(q)`.
fn transport_back<T: Real, S: OscillatorSystem<T> + ?Sized>(
    system: &S,
    cycle: &LimitCycle<T>,
    from: T,
    g: &DVector<T>,
    duration: T,
    tol: T,
) -> Result<DVector<T>> {
    let d = cycle.dim();
    let mut y = vec![T::zero(); 2 * d];
    y[..d].copy_from_slice(cycle.point_at_phase(from).as_slice());
    y[d..].copy_from_slice(g.as_slice());
    let rhs = |y: &[T], dy: &mut [T]| {
        let (x, gv) = y.split_at(d);
        let (dx, dg) = dy.split_at_mut(d);
        system.drift(x, dx);
        dx.iter_mut().for_each(|v| *v = -*v);
        let a = system.jacobian(x);
        for l in 0..d {
            dg[l] = (0..d).fold(T::zero(), |acc, k| acc + a[(k, l)] * gv[k]);
        }
    };
    integrate(rhs, &mut y, duration, &IntegratorOptions::with_tol(tol))?;
    Ok(DVector::from_column_slice(&y[d..]))
}

/// `Dθ` at phases `iT/n`: eigen-solve at `θ = 0`, then adjoint transport
/// with renormalization at each phase. Returns `(θ_i, g_i, pre-renormalization
/// |g·F − 1|)` and the closure residual after one full turn.
pub fn isochron_gradient_profile<T: Real, S: OscillatorSystem<T> + ?Sized>(
    system: &S,
    cycle: &LimitCycle<T>,
    n: usize,
    opts: &JetOptions<T>,
) -> Result<(Vec<(T, DVector<T>, T)>, T)> {
    if n == 0 {
        return Err(Error::InvalidArgument("profile needs at least one phase".into()));
    }
    let period = cycle.period();
    let fd = floquet_at(system, cycle, T::zero(), opts.tol, &opts.floquet)?;
    let g0 = isochron_gradient_at(cycle, &fd, T::zero())?;
    let phase = |i: usize| period * T::from_usize_lossy(i) / T::from_usize_lossy(n);

    // walk backwards from θ = T down to θ = 0
    let mut out: Vec<(T, DVector<T>, T)> = Vec::with_capacity(n);
    let mut g = g0.clone();
    let mut current = period;
    for i in (0..n).rev() {
        let target = phase(i);
        let moved = transport_back(system, cycle, current, &g, current - target, opts.tol)?;
        let f = cycle.tangent_at_phase(target);
        let gf = moved.dot(&f);
        g = moved / gf;
        current = target;
        out.push((target, g.clone(), (gf - T::one()).abs()));
    }
    out.reverse();
    let closure = (&out[0].1 - &g0).amax();
    if closure > T::lit(thresholds::PERIODICITY) * g0.amax().max(T::one()) {
        return Err(Error::PeriodicityFailure(closure.as_f64()));
    }
    // the anchor keeps its eigen-solve value
    out[0].1 = g0;
    out[0].2 = T::zero();
    Ok((out, closure))
}

/// Solves `H − Mᵗ H M = C` over symmetric `H` together with `Fᵗ H F = c`.
/// `C` must be symmetric.
pub fn solve_hessian_system<T: Real>(
    m: &DMatrix<T>,
    source: &DMatrix<T>,
    f: &DVector<T>,
    tangential_rhs: T,
    rank_tol: T,
) -> Result<DMatrix<T>> {
    let d = m.nrows();
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let p = pairs.len();
    let mut a = DMatrix::zeros(p + 1, p);
    let mut rhs = DVector::zeros(p + 1);
    for (col, &(i, j)) in pairs.iter().enumerate() {
        let mut e = DMatrix::zeros(d, d);
        e[(i, j)] = T::one();
        e[(j, i)] = T::one();
        let image = &e - m.transpose() * &e * m;
        for (row, &(r, c)) in pairs.iter().enumerate() {
            a[(row, col)] = image[(r, c)];
        }
        a[(p, col)] = if i == j { f[i] * f[i] } else { T::lit(2.0) * f[i] * f[j] };
    }
    for (row, &(r, c)) in pairs.iter().enumerate() {
        rhs[row] = source[(r, c)];
    }
    rhs[p] = tangential_rhs;

    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().fold(T::zero(), |acc, &s| acc.max(s));
    let cutoff = rank_tol * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    if rank < p {
        return Err(Error::RankDeficient { rank, needed: p });
    }
    let vech = svd
        .solve(&rhs, cutoff)
        .map_err(|e| Error::InvalidArgument(format!("hessian solve failed: {e}")))?;
    let mut h = DMatrix::zeros(d, d);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        h[(i, j)] = vech[k];
        h[(j, i)] = vech[k];
    }
    Ok(h)
}

/// `D²θ(q_θ)` given `g = Dθ(q_θ)`, with the defining-relation residuals.
pub fn isochron_hessian_at<T: Real, S: OscillatorSystem<T> + ?Sized>(
    system: &S,
    cycle: &LimitCycle<T>,
    theta: T,
    g: &DVector<T>,
    opts: &JetOptions<T>,
) -> Result<(DMatrix<T>, JetResiduals)> {
    let d = cycle.dim();
    let q = cycle.point_at_phase(theta);
    let fv = flow_with_second_variation(system, q.as_slice(), cycle.period(), opts.tol)?;
    let m = fv.first_variation.expect("first variation requested");
    let s = fv.second_variation.expect("second variation requested");
    let f = drift_vec(system, q.as_slice());
    let df = system.jacobian(q.as_slice());

    let mut source = DMatrix::zeros(d, d);
    for (k, sk) in s.iter().enumerate() {
        source += sk * g[k];
    }
    let tangential_rhs = -(g.transpose() * &df * &f)[(0, 0)];
    let h = solve_hessian_system(&m, &source, &f, tangential_rhs, opts.rank_tol)?;

    let fixed_point = (&h - &source - m.transpose() * &h * &m).amax();
    let bound = T::lit(1e-6) * source.amax().max(tangential_rhs.abs());
    if fixed_point > bound {
        return Err(Error::ResidualTooLarge { residual: fixed_point.as_f64(), bound: bound.as_f64() });
    }
    let residuals = JetResiduals {
        normalization: (g.dot(&f) - T::one()).abs().as_f64(),
        transport: 0.0,
        left_eigen: (g - m.transpose() * g).amax().as_f64(),
        tangential: ((f.transpose() * &h * &f)[(0, 0)] - tangential_rhs).abs().as_f64(),
        fixed_point: fixed_point.as_f64(),
        symmetry: (&h - h.transpose()).amax().as_f64(),
    };
    Ok((h, residuals))
}

/// Gradient profile plus Hessian at each of `n` equally spaced phases.
pub fn isochron_jets<T: Real, S: OscillatorSystem<T> + ?Sized>(
    system: &S,
    cycle: &LimitCycle<T>,
    n: usize,
    opts: &JetOptions<T>,
) -> Result<JetProfile<T>> {
    let (grads, closure) = isochron_gradient_profile(system, cycle, n, opts)?;
    let jets = grads
        .into_par_iter()
        .map(|(theta, g, transport)| {
            let (hessian, mut residuals) = isochron_hessian_at(system, cycle, theta, &g, opts)?;
            residuals.transport = transport.as_f64();
            Ok(IsochronJet { phase: theta, gradient: g, hessian, residuals })
        })
        .collect::<Result<Vec<_>>>()?;
    let rates = jets.iter().map(|j| jet_rates(system, &cycle.point_at_phase(j.phase), j)).collect();
    Ok(JetProfile { period: cycle.period(), jets, periodicity_residual: closure.as_f64(), rates })
}

impl<T: Real> JetProfile<T> {
    /// Rebuilds a profile from stored jets, e.g. ones read back from disk.
    /// The jets must sit at equally spaced phases `iT/n` starting at 0.
    pub fn from_jets<S: OscillatorSystem<T> + ?Sized>(
        system: &S,
        cycle: &LimitCycle<T>,
        jets: Vec<IsochronJet<T>>,
        periodicity_residual: f64,
    ) -> Result<Self> {
        let n = jets.len();
        if n == 0 {
            return Err(Error::InvalidArgument("no jets".into()));
        }
        let d = cycle.dim();
        let h = cycle.period() / T::from_usize_lossy(n);
        for (i, j) in jets.iter().enumerate() {
            if j.gradient.len() != d || j.hessian.shape() != (d, d) {
                return Err(Error::InvalidArgument(format!("jet {i} has the wrong dimension")));
            }
            if (j.phase - h * T::from_usize_lossy(i)).abs() > T::lit(1e-9) * cycle.period() {
                return Err(Error::InvalidArgument(format!("jet {i} is not on the uniform phase grid")));
            }
        }
        let rates = jets.iter().map(|j| jet_rates(system, &cycle.point_at_phase(j.phase), j)).collect();
        Ok(JetProfile { period: cycle.period(), jets, periodicity_residual, rates })
    }

    pub fn len(&self) -> usize {
        self.jets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jets.is_empty()
    }

    pub fn max_residuals(&self) -> JetResiduals {
        self.jets.iter().fold(JetResiduals::default(), |acc, j| {
            let r = &j.residuals;
            JetResiduals {
                normalization: acc.normalization.max(r.normalization),
                transport: acc.transport.max(r.transport),
                left_eigen: acc.left_eigen.max(r.left_eigen),
                tangential: acc.tangential.max(r.tangential),
                fixed_point: acc.fixed_point.max(r.fixed_point),
                symmetry: acc.symmetry.max(r.symmetry),
            }
        })
    }

    /// Cubic Hermite interpolation between neighbouring jets, using the
    /// exact phase derivatives `g' = −DFᵗ g` and
    /// `H' = −(DFᵗ H + H DF + Σ_k g_k D²F_k)`.
    fn hermite(&self, theta: T) -> (usize, usize, [T; 4]) {
        let n = self.jets.len();
        let h = self.period / T::from_usize_lossy(n);
        let mut wrapped = theta - (theta / self.period).floor() * self.period;
        if wrapped >= self.period {
            wrapped -= self.period;
        }
        let u = wrapped / h;
        let i = u.floor().to_usize().unwrap_or(0).min(n - 1);
        let s = u - T::from_usize_lossy(i);
        let (s2, s3) = (s * s, s * s * s);
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = (s3 - two * s2 + s) * h;
        let h01 = -two * s3 + three * s2;
        let h11 = (s3 - s2) * h;
        (i, (i + 1) % n, [h00, h10, h01, h11])
    }

    pub fn gradient_at(&self, theta: T) -> DVector<T> {
        let (i, j, w) = self.hermite(theta);
        let (a, b) = (&self.jets[i], &self.jets[j]);
        &a.gradient * w[0] + &self.rates[i].0 * w[1] + &b.gradient * w[2] + &self.rates[j].0 * w[3]
    }

    pub fn hessian_at(&self, theta: T) -> DMatrix<T> {
        let (i, j, w) = self.hermite(theta);
        let (a, b) = (&self.jets[i], &self.jets[j]);
        &a.hessian * w[0] + &self.rates[i].1 * w[1] + &b.hessian * w[2] + &self.rates[j].1 * w[3]
    }
}

fn jet_rates<T: Real, S: OscillatorSystem<T> + ?Sized>(
    system: &S,
    q: &DVector<T>,
    jet: &IsochronJet<T>,
) -> (DVector<T>, DMatrix<T>) {
    let df = system.jacobian(q.as_slice());
    let dg = -(df.transpose() * &jet.gradient);
    let mut dh = df.transpose() * &jet.hessian + &jet.hessian * &df;
    for (k, hk) in system.hessians(q.as_slice()).iter().enumerate() {
        dh += hk * jet.gradient[k];
    }
    (dg, -dh)
}

fn points<T: Real>(cycle: &LimitCycle<T>, jets: &JetProfile<T>) -> Vec<DVector<T>> {
    jets.jets.iter().map(|j| cycle.point_at_phase(j.phase)).collect()
}

/// `σ² = (1/T) ∫ g G Gᵗ gᵗ ds`.
pub fn sigma_squared<T: Real, S: OscillatorSystem<T> + ?Sized>(
    cycle: &LimitCycle<T>,
    jets: &JetProfile<T>,
    system: &S,
) -> T {
    let values: Vec<T> = jets
        .jets
        .iter()
        .zip(points(cycle, jets))
        .map(|(j, q)| {
            let gt_g = system.noise(q.as_slice()).transpose() * &j.gradient;
            gt_g.norm_squared()
        })
        .collect();
    periodic_mean(&values)
}

/// Itô drift `b = (1/2T) ∫ tr(G Gᵗ H) ds`.
pub fn drift_ito<T: Real, S: OscillatorSystem<T> + ?Sized>(cycle: &LimitCycle<T>, jets: &JetProfile<T>, system: &S) -> T {
    let values: Vec<T> = jets
        .jets
        .iter()
        .zip(points(cycle, jets))
        .map(|(j, q)| {
            let g = system.noise(q.as_slice());
            (&g * g.transpose() * &j.hessian).trace()
        })
        .collect();
    periodic_mean(&values) * T::lit(0.5)
}

/// Stratonovich drift: the Itô integral plus
/// `(1/2T) ∫ Σ_{i,j,l} g_j ∂_iG_{jl} G_{il} ds`.
pub fn drift_stratonovich<T: Real, S: OscillatorSystem<T> + ?Sized>(
    cycle: &LimitCycle<T>,
    jets: &JetProfile<T>,
    system: &S,
) -> Result<T> {
    let mut values = Vec::with_capacity(jets.len());
    for (j, q) in jets.jets.iter().zip(points(cycle, jets)) {
        let dg = system.noise_jacobian(q.as_slice()).ok_or(Error::MissingDerivative)?;
        let g = system.noise(q.as_slice());
        let mut acc = T::zero();
        for (i, dgi) in dg.iter().enumerate() {
            for jj in 0..g.nrows() {
                for l in 0..g.ncols() {
                    acc += j.gradient[jj] * dgi[(jj, l)] * g[(i, l)];
                }
            }
        }
        values.push(acc);
    }
    Ok(drift_ito(cycle, jets, system) + periodic_mean(&values) * T::lit(0.5))
}

/// Frequency shift from an extra drift `ε² K`: `(1/T) ∫ g·K ds`.
pub fn drift_k<T: Real, S: OscillatorSystem<T> + ?Sized>(cycle: &LimitCycle<T>, jets: &JetProfile<T>, system: &S) -> Result<T> {
    let mut values = Vec::with_capacity(jets.len());
    for (j, q) in jets.jets.iter().zip(points(cycle, jets)) {
        let k = system.extra_drift(q.as_slice()).ok_or(Error::MissingK)?;
        values.push(j.gradient.dot(&k));
    }
    Ok(periodic_mean(&values))
}

pub fn phase_coefficients<T: Real, S: OscillatorSystem<T> + ?Sized>(
    cycle: &LimitCycle<T>,
    jets: &JetProfile<T>,
    system: &S,
) -> PhaseCoefficients<T> {
    let sigma2 = sigma_squared(cycle, jets, system);
    PhaseCoefficients {
        sigma2,
        sigma: sigma2.max(T::zero()).sqrt(),
        b_ito: drift_ito(cycle, jets, system),
        b_strat: drift_stratonovich(cycle, jets, system).ok(),
        b_k: if system.has_extra_drift() { drift_k(cycle, jets, system).ok() } else { None },
        n_points: jets.len(),
        rule: "periodic_trapezoid".to_string(),
    }
}

//! Phase reduction of stochastic limit-cycle oscillators.
//!
//! The pipeline runs `dynamics` → [`cycle`] → [`floquet`] →
//! [`phase_reduction`] → [`montecarlo`]: locate a stable hyperbolic limit
//! cycle, certify it through its Floquet multipliers, compute the gradient and
//! Hessian of the isochron map along it, evaluate the phase-diffusion
//! coefficient `σ²` and the noise-induced frequency shift `b`, and check both
//! against seeded ensembles of the stochastic equation.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the scalar to `f64`, which is what the tight default
//! tolerances are designed for.

pub mod cycle;
pub mod dynamics;
mod error;
pub mod floquet;
pub mod io;
pub mod montecarlo;
pub mod phase_reduction;
pub mod quadrature;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub use dynamics::{DerivativeMode, FiniteDifference, OscillatorSystem};

pub type FlowResult64 = dynamics::FlowResult<f64>;
pub type FitzHughNagumo64 = dynamics::FitzHughNagumo<f64>;
pub type StuartLandau64 = dynamics::StuartLandau<f64>;
pub type LimitCycle64 = cycle::LimitCycle<f64>;
pub type ProjectionResult64 = cycle::ProjectionResult<f64>;
pub type FloquetData64 = floquet::FloquetData<f64>;
pub type IsochronJet64 = phase_reduction::IsochronJet<f64>;
pub type PhaseCoefficients64 = phase_reduction::PhaseCoefficients<f64>;

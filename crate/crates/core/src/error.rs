use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("state left the finite range at t = {t}")]
    NonFinite { t: f64 },
    #[error("adaptive step {h:e} fell below machine scale at t = {t}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no return to the section within {0} time units")]
    NoReturn(f64),
    #[error("shooting Newton diverged (residual {residual:e} after {iterations} iterations)")]
    NewtonDiverged { residual: f64, iterations: usize },
    #[error("converged orbit is not a cycle: {0}")]
    NotACycle(String),
    #[error("point at distance {distance} is outside the tube of radius {radius}")]
    OutsideTube { distance: f64, radius: f64 },

    #[error("cycle is not hyperbolic: {unit_count} multipliers within {unit_tol:e} of 1")]
    NotHyperbolic { unit_count: usize, unit_tol: f64 },
    #[error("periodicity check failed (residual {0:e})")]
    PeriodicityFailure(f64),
    #[error("isochron gradient normalization degenerate (|g·F| = {0:e})")]
    DegenerateNormalization(f64),
    #[error("hessian system rank deficient (effective rank {rank} < {needed})")]
    RankDeficient { rank: usize, needed: usize },
    #[error("hessian residual {residual:e} exceeds bound {bound:e}")]
    ResidualTooLarge { residual: f64, bound: f64 },
    #[error("system does not provide the noise Jacobian")]
    MissingDerivative,
    #[error("system does not provide an extra drift K")]
    MissingK,

    #[error("phase unwrap ambiguous at t = {t}: increment {increment} too close to half a period")]
    UnwrapAmbiguity { t: f64, increment: f64 },
    #[error("only {valid} of {total} trajectories stayed valid")]
    TooFewValid { valid: usize, total: usize },

    #[error("i/o: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

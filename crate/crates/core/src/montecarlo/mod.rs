//! Seeded ensembles of the stochastic equation `dX = (F + ε²K) dt + ε G dB`,
//! phase tracking along trajectories and the empirical dephasing statistics.

mod ensemble;
mod sde;
mod tracking;

pub use ensemble::{
    estimate_dephasing, estimate_dephasing_with_progress, long_time_drift, moments, run_ensemble, tube_statistics,
    EnsembleStats, LongTimeDrift, Moments, TrajectoryRecord,
};
pub use sde::{simulate_sde, stream_seed, InitialCondition, Scheme, SimConfig, Trajectory};
pub use tracking::{track_phase, winding_number, PhaseEstimator, PhaseSeries, PhaseTracker, Relaxation, Winding};

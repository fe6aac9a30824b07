//! Closed-loop scenario execution, metrics, sweeps, and steady-state
//! characterization for the all-wheel-steering tracking controller.

pub mod characterize;
pub mod metrics;
pub mod runner;
pub mod scenario;
pub mod sweep;
pub mod validate;

pub use characterize::{characterize, settle, CharacterizeGrid, CharacterizeReport, SteerTrend};
pub use metrics::{compute_metrics, parse_trace, sliding_std, RunMetrics, TraceRow};
pub use runner::{recompute_metrics_from_csv, replay_open_loop, run_scenario, RunOutcome};
pub use scenario::{DisturbanceSpec, OutputSpec, PlantModel, PlantSpec, Scenario, SpeedProfile};
pub use sweep::{sweep, SweepAxis, SweepEntry, SweepSummary};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("sliding window {0} invalid for trace of length {1}")]
    WindowTooLarge(usize, usize),
    #[error("trace is empty")]
    EmptyTrace,
    #[error("trace parse error: {0}")]
    TraceParse(String),
    #[error("no steady state at pose ({0}, {1}), speed {2}")]
    NoSteadyState(f64, f64, f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] awoisv_core::CoreError),
    #[error(transparent)]
    Path(#[from] awoisv_path::PathError),
    #[error(transparent)]
    Mpc(#[from] awoisv_mpc::MpcError),
}

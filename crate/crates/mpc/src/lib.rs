//! Filtered tube-based linear time-varying MPC for simultaneous tracking of
//! lateral position and heading angle with two-angle all-wheel steering.
//!
//! Three controller variants share one implementation: a plain receding
//! horizon (`Ltvmpc`), a tube controller fed the raw nominal-model error
//! (`TubeLtvmpc`), and the tube controller fed a Kalman-filtered,
//! hysteresis-held error (`FilteredTubeLtvmpc`). The tube variants steer a
//! nominal model that evolves independently of the plant, bound the
//! filtered plant-vs-nominal error inside a componentwise box, tighten the
//! state and input constraints by that box, and add the error feedback on
//! top of the optimized nominal input.

mod config;
mod constraints;
mod controller;
mod cost;
mod error;
mod filter;

pub use config::{GainMat, HeadingMode, MpcConfig, Variant};
pub use constraints::{
    assemble_constraints, exact_wheel_angles, steering_region_rows, tighten_sets,
    wheel_angle_jacobian, ConstraintSet, InputHalfSpace, TightenedSets,
};
pub use controller::{ControlOutput, SolveInfo, TubeController};
pub use cost::{
    assemble_cost, condense, dlqr_tracking, fixed_terminal_weight, heading_row, input_weight,
    lyapunov_terminal_weight, spectral_radius, stage_state_weight, CondensedModel, RefProfile,
};
pub use error::MpcError;
pub use filter::{kalman_hysteresis_update, ErrorFilterState};

//! Vehicle geometry, steering kinematics, tire model, and nonlinear body
//! dynamics for all-wheel omnidirectional independent-steering vehicles
//! (AWOISV): vehicles where every wheel steers within ±90°.
//!
//! The steering state of the whole vehicle is described by two finite angles,
//! [`SteerPose`]: a steering-radius angle `theta_r` encoding the distance to
//! the instantaneous center of rotation (ICR) and a commanded sideslip angle
//! `beta_r` fixing its bearing. All per-wheel steering angles follow from the
//! ICR position ([`wheel_angles`]). Body dynamics are available both in
//! longitudinal/lateral velocity coordinates ([`derivative_vxvyr`]) and in
//! forward-speed/sideslip coordinates ([`derivative_vbr`]); the two are
//! algebraically equivalent and serve as cross-checks of one another.

mod dynamics;
mod error;
mod integrate;
mod params;
mod steering;
mod tire;

pub use dynamics::{
    derivative_vbr, derivative_vxvyr, tire_slip_angles, BodyStateVbr, BodyStateXy, SlipAngles,
};
pub use error::CoreError;
pub use integrate::{integrate_plant, GlobalPose, PlantState, ProcessDisturbance};
pub use params::{VehicleParams, WheelIndex, WheelSide};
pub use steering::{
    classify_mode, icr_from_steer_pose, steer_pose_from_icr, wheel_angle_from_pose, wheel_angles,
    ApproachSide, IcrPosition, MotionMode, SteerPose, WheelAngle, WheelSteering,
};
pub use tire::{fiala_lateral_force, TireState};

/// Forward speed below which the sideslip dynamics are singular; the
/// integrator holds `beta` constant underneath it.
pub const V_MIN: f64 = 0.1;

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % core::f64::consts::TAU;
    if w <= -core::f64::consts::PI {
        w += core::f64::consts::TAU;
    } else if w > core::f64::consts::PI {
        w -= core::f64::consts::TAU;
    }
    w
}

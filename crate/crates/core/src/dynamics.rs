//! Nonlinear planar body dynamics in two equivalent coordinate sets.
//!
//! [`derivative_vxvyr`] works in body-frame longitudinal/lateral velocities
//! and sums per-wheel forces componentwise. [`derivative_vbr`] works in
//! forward speed, sideslip angle, and yaw rate, with the force sums merged
//! directly into the speed/sideslip channels. The two share the wheel-angle
//! and tire primitives but carry out independent algebra, so their agreement
//! under the coordinate transform is a meaningful cross-check.

use crate::steering::icr_from_steer_pose_unchecked;
use crate::{
    fiala_lateral_force, wheel_angles, ApproachSide, CoreError, SteerPose, VehicleParams,
    WheelSteering, V_MIN,
};

/// Velocity magnitude below which a wheel's longitudinal speed is treated as
/// degenerate and its slip angle zeroed.
const WHEEL_SPEED_EPS: f64 = 1e-6;

/// Body-frame velocity state: longitudinal, lateral, yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyStateXy {
    /// Longitudinal velocity (m/s).
    pub vx: f64,
    /// Lateral velocity (m/s), left positive.
    pub vy: f64,
    /// Yaw rate (rad/s).
    pub r: f64,
}

/// Forward-speed / sideslip state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyStateVbr {
    /// Forward speed (m/s), non-negative.
    pub v: f64,
    /// Sideslip angle between body x-axis and velocity (rad).
    pub beta: f64,
    /// Yaw rate (rad/s).
    pub r: f64,
}

impl BodyStateVbr {
    /// Equivalent body-frame velocity components.
    pub fn to_xy(&self) -> BodyStateXy {
        BodyStateXy {
            vx: self.v * self.beta.cos(),
            vy: self.v * self.beta.sin(),
            r: self.r,
        }
    }
}

impl BodyStateXy {
    /// Equivalent forward-speed / sideslip state.
    pub fn to_vbr(&self) -> BodyStateVbr {
        BodyStateVbr {
            v: self.vx.hypot(self.vy),
            beta: self.vy.atan2(self.vx),
            r: self.r,
        }
    }
}

/// Per-wheel slip angles in wheel order, with degenerate wheels flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct SlipAngles {
    /// Ratio-form slip angle per wheel (rad).
    pub alpha: Vec<f64>,
    /// Wheels whose longitudinal tire velocity fell below the threshold; the
    /// slip angle was set to zero there.
    pub degenerate: Vec<bool>,
}

/// Ratio-form tire slip angles from the body velocity state and the wheel
/// steering angles.
///
/// Each wheel's velocity in the tire frame is the body-frame velocity at the
/// wheel position rotated by its steering angle; the slip angle is the ratio
/// of lateral to longitudinal tire velocity.
pub fn tire_slip_angles(
    state: &BodyStateXy,
    wheels: &WheelSteering,
    params: &VehicleParams,
) -> SlipAngles {
    let n = params.wheel_count();
    let mut alpha = Vec::with_capacity(n);
    let mut degenerate = Vec::with_capacity(n);
    for (w, angle) in params.wheels().zip(&wheels.angles) {
        let (x, y) = params.wheel_position(w);
        let wx = state.vx - y * state.r;
        let wy = state.vy + x * state.r;
        let lon = wx * angle.cos_delta + wy * angle.sin_delta;
        let lat = -wx * angle.sin_delta + wy * angle.cos_delta;
        if lon.abs() < WHEEL_SPEED_EPS {
            alpha.push(0.0);
            degenerate.push(true);
        } else {
            alpha.push(lat / lon);
            degenerate.push(false);
        }
    }
    SlipAngles { alpha, degenerate }
}

/// Time derivative of the body-frame velocity state under the commanded
/// steering pose and per-wheel longitudinal forces.
pub fn derivative_vxvyr(
    state: &BodyStateXy,
    pose: &SteerPose,
    fx: &[f64],
    params: &VehicleParams,
) -> Result<BodyStateXy, CoreError> {
    assert_eq!(fx.len(), params.wheel_count(), "one Fx per wheel");
    let icr = icr_from_steer_pose_unchecked(pose);
    let wheels = wheel_angles(&icr, params, ApproachSide::FromBelow);
    let slips = tire_slip_angles(state, &wheels, params);
    let fz = params.static_wheel_load();

    let mut sum_fx = 0.0; // body-frame x
    let mut sum_fy = 0.0; // body-frame y
    let mut sum_mz = 0.0;
    for (i, w) in params.wheels().enumerate() {
        let (x, y) = params.wheel_position(w);
        let angle = &wheels.angles[i];
        let tire = fiala_lateral_force(slips.alpha[i], fz, fx[i], params)?;
        let fx_body = tire.fx * angle.cos_delta - tire.fy * angle.sin_delta;
        let fy_body = tire.fx * angle.sin_delta + tire.fy * angle.cos_delta;
        sum_fx += fx_body;
        sum_fy += fy_body;
        sum_mz += x * fy_body - y * fx_body;
    }

    Ok(BodyStateXy {
        vx: sum_fx / params.mass + state.r * state.vy,
        vy: sum_fy / params.mass - state.r * state.vx,
        r: sum_mz / params.yaw_inertia,
    })
}

/// Time derivative of the forward-speed / sideslip state.
///
/// Valid above [`V_MIN`]; the sideslip channel carries a `1/(m v)` factor.
pub fn derivative_vbr(
    state: &BodyStateVbr,
    pose: &SteerPose,
    fx: &[f64],
    params: &VehicleParams,
) -> Result<BodyStateVbr, CoreError> {
    assert_eq!(fx.len(), params.wheel_count(), "one Fx per wheel");
    if state.v <= V_MIN {
        return Err(CoreError::LowSpeedSingularity(state.v, V_MIN));
    }
    let icr = icr_from_steer_pose_unchecked(pose);
    let wheels = wheel_angles(&icr, params, ApproachSide::FromBelow);
    let (sin_b, cos_b) = state.beta.sin_cos();
    let fz = params.static_wheel_load();

    let mut dv = 0.0;
    let mut dbeta = 0.0;
    let mut dr = 0.0;
    for (i, w) in params.wheels().enumerate() {
        let (x, y) = params.wheel_position(w);
        let angle = &wheels.angles[i];
        // Tire-frame velocity from the merged speed/sideslip form.
        let wx = state.v * cos_b - state.r * y;
        let wy = state.v * sin_b + state.r * x;
        let lon = wx * angle.cos_delta + wy * angle.sin_delta;
        let lat = -wx * angle.sin_delta + wy * angle.cos_delta;
        let alpha = if lon.abs() < WHEEL_SPEED_EPS {
            0.0
        } else {
            lat / lon
        };
        let tire = fiala_lateral_force(alpha, fz, fx[i], params)?;
        let (th, xi) = (angle.sin_delta, angle.cos_delta);
        // Force projections onto the velocity direction, its left normal, and
        // the yaw moment arm.
        dv += (xi * cos_b + th * sin_b) * tire.fx + (-th * cos_b + xi * sin_b) * tire.fy;
        dbeta += (th * cos_b - xi * sin_b) * tire.fx + (xi * cos_b + th * sin_b) * tire.fy;
        dr += (th * x - xi * y) * tire.fx + (xi * x + th * y) * tire.fy;
    }

    Ok(BodyStateVbr {
        v: dv / params.mass,
        beta: dbeta / (params.mass * state.v) - state.r,
        r: dr / params.yaw_inertia,
    })
}

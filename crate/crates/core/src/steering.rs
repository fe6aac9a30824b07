//! Two-angle steering parameterization and per-wheel steering geometry.
//!
//! The instantaneous center of rotation (ICR) at body-frame position
//! `(b0, c0)` is encoded by two finite angles: `theta_r`, whose cotangent is
//! the signed distance `R0` to the ICR (`sgn(theta_r) * R0 = cot(theta_r)`,
//! positive for left turns), and `beta_r`, the commanded angle between body
//! axis and velocity direction. `theta_r = 0` places the ICR at infinity
//! (straight driving, possibly diagonal).

use serde::{Deserialize, Serialize};

use crate::{CoreError, VehicleParams};

/// Tolerance for the excluded-boundary test `|cot(theta_r) cos(beta_r)| = track/2`.
const BOUNDARY_TOL: f64 = 1e-9;

/// Two-angle steering command: `(theta_r, beta_r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteerPose {
    /// Steering radius angle (rad), in `(-pi/2, pi/2)`. Zero means the ICR is
    /// at infinity; the sign is positive for left turns.
    pub theta_r: f64,
    /// Commanded sideslip angle (rad), in `(-pi/2, pi/2]`.
    pub beta_r: f64,
}

impl SteerPose {
    pub fn new(theta_r: f64, beta_r: f64) -> Result<Self, CoreError> {
        let half_pi = core::f64::consts::FRAC_PI_2;
        if !theta_r.is_finite() || theta_r.abs() >= half_pi {
            return Err(CoreError::InvalidPose(format!("theta_r = {theta_r}")));
        }
        if !beta_r.is_finite() || beta_r <= -half_pi || beta_r > half_pi {
            return Err(CoreError::InvalidPose(format!("beta_r = {beta_r}")));
        }
        Ok(Self { theta_r, beta_r })
    }

    /// `cot(theta_r) cos(beta_r)`: lateral ICR coordinate `c0`. Infinite for
    /// `theta_r = 0`.
    pub fn c0(&self) -> f64 {
        cot(self.theta_r) * self.beta_r.cos()
    }

    /// Whether the pose sits on the excluded track boundary where the
    /// steering-mode classification is undefined.
    pub fn on_excluded_boundary(&self, params: &VehicleParams) -> bool {
        self.theta_r != 0.0 && (self.c0().abs() - params.half_track()).abs() < BOUNDARY_TOL
    }
}

fn cot(a: f64) -> f64 {
    a.cos() / a.sin()
}

/// ICR position in the body frame. Straight driving keeps a distinct
/// at-infinity representation instead of a large coordinate so that the
/// diagonal-driving mode is exact and `cot(theta_r)` never overflows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IcrPosition {
    /// ICR at `(b0, c0)`: `b0` along the body x-axis, `c0` along y (left
    /// positive).
    Finite { b0: f64, c0: f64 },
    /// ICR at infinity; the vehicle translates along `direction` (rad,
    /// relative to the body x-axis, in `(-pi/2, pi/2]`).
    AtInfinity { direction: f64 },
}

/// Classified motion mode of a steering pose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MotionMode {
    /// Straight driving along the body axis.
    LongitudinalStraight,
    /// Straight driving at a fixed diagonal angle.
    DiagonalStraight,
    /// Straight driving perpendicular to the body axis.
    LateralStraight,
    /// Turning about an ICR outside the track band: left and right wheel
    /// angles share the same sign.
    LongitudinalSteering,
    /// Turning about an ICR inside the track band but outside the wheelbase
    /// span: wheel angles of opposite sign.
    LateralSteering,
    /// Turning about an ICR inside both the track band and the wheelbase
    /// span: the vehicle pivots near in place.
    PivotSteering,
}

/// Which one-sided limit resolves a wheel angle when the ICR lies exactly on
/// a wheel's lateral line (`c0 = y_i`), where the angle is otherwise
/// undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ApproachSide {
    /// `c0` reached `y_i` from below.
    #[default]
    FromBelow,
    /// `c0` reached `y_i` from above.
    FromAbove,
}

/// One wheel's steering angle with its cached sine/cosine pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelAngle {
    /// Steering angle (rad), in `[-pi/2, pi/2]`.
    pub delta: f64,
    pub sin_delta: f64,
    pub cos_delta: f64,
}

impl WheelAngle {
    fn from_delta(delta: f64) -> Self {
        let (sin_delta, cos_delta) = delta.sin_cos();
        Self {
            delta,
            sin_delta,
            cos_delta,
        }
    }
}

/// Per-wheel steering angles in the fixed wheel order of
/// [`VehicleParams::wheels`].
#[derive(Debug, Clone, PartialEq)]
pub struct WheelSteering {
    pub angles: Vec<WheelAngle>,
}

impl WheelSteering {
    pub fn deltas(&self) -> impl Iterator<Item = f64> + '_ {
        self.angles.iter().map(|w| w.delta)
    }
}

/// Map a steering pose to its ICR position.
///
/// Fails with [`CoreError::ExcludedIcr`] when the pose sits on the track
/// boundary `|cot(theta_r) cos(beta_r)| = track/2`, where a wheel angle would
/// be discontinuous.
pub fn icr_from_steer_pose(
    pose: &SteerPose,
    params: &VehicleParams,
) -> Result<IcrPosition, CoreError> {
    if pose.theta_r == 0.0 {
        return Ok(IcrPosition::AtInfinity {
            direction: pose.beta_r,
        });
    }
    if pose.on_excluded_boundary(params) {
        return Err(CoreError::ExcludedIcr(params.half_track()));
    }
    Ok(icr_from_steer_pose_unchecked(pose))
}

/// Same mapping without the excluded-boundary test; used internally where the
/// caller has already constrained the pose.
pub(crate) fn icr_from_steer_pose_unchecked(pose: &SteerPose) -> IcrPosition {
    if pose.theta_r == 0.0 {
        IcrPosition::AtInfinity {
            direction: pose.beta_r,
        }
    } else {
        let c = cot(pose.theta_r);
        IcrPosition::Finite {
            b0: -c * pose.beta_r.sin(),
            c0: c * pose.beta_r.cos(),
        }
    }
}

/// Inverse of [`icr_from_steer_pose`].
///
/// For a finite ICR the radius is `R0 = hypot(b0, c0)` and the sign
/// convention `sgn(theta_r) * R0 = cot(theta_r)` keeps left turns at
/// `theta_r > 0`. The ICR exactly at the CG (`R0 = 0`) is not representable
/// because `theta_r = ±pi/2` falls outside the open domain.
pub fn steer_pose_from_icr(icr: &IcrPosition) -> Result<SteerPose, CoreError> {
    match *icr {
        IcrPosition::AtInfinity { direction } => SteerPose::new(0.0, direction),
        IcrPosition::Finite { b0, c0 } => {
            let r0 = b0.hypot(c0);
            if r0 == 0.0 {
                return Err(CoreError::DegenerateIcr(
                    "ICR at the CG has no finite steering-radius angle".into(),
                ));
            }
            if c0 == 0.0 {
                // ICR on the body x-axis: pure lateral pose, beta_r = +pi/2.
                let theta_r = (-1.0 / b0).atan();
                return SteerPose::new(theta_r, core::f64::consts::FRAC_PI_2);
            }
            let sign = c0.signum();
            // cot(theta_r) = sign * r0, theta_r in (-pi/2, pi/2) \ {0}.
            let theta_r = (sign / r0).atan();
            let beta_r = (-b0 * sign).atan2(c0 * sign);
            SteerPose::new(theta_r, beta_r)
        }
    }
}

/// Per-wheel steering angles for an ICR position.
///
/// For a finite ICR each wheel points perpendicular to its radius:
/// `delta_i = arctan((x_i - b0) / (c0 - y_i))`, normalized into
/// `[-pi/2, pi/2]`. On the degenerate line `c0 = y_i` the angle is resolved
/// to `±pi/2` by the one-sided convention selected with `approach` (and to 0
/// when the ICR coincides with the wheel center). An ICR at infinity steers
/// every wheel to the common travel direction.
pub fn wheel_angles(
    icr: &IcrPosition,
    params: &VehicleParams,
    approach: ApproachSide,
) -> WheelSteering {
    let angles = params
        .wheels()
        .map(|w| {
            let (x, y) = params.wheel_position(w);
            match *icr {
                IcrPosition::AtInfinity { direction } => WheelAngle::from_delta(direction),
                IcrPosition::Finite { b0, c0 } => {
                    let num = x - b0;
                    let den = c0 - y;
                    if den == 0.0 {
                        let delta = match approach {
                            // One-sided conventions for the undefined point.
                            ApproachSide::FromBelow => {
                                if b0 > x {
                                    -core::f64::consts::FRAC_PI_2
                                } else if b0 == x {
                                    0.0
                                } else {
                                    core::f64::consts::FRAC_PI_2
                                }
                            }
                            ApproachSide::FromAbove => {
                                if b0 > x {
                                    core::f64::consts::FRAC_PI_2
                                } else if b0 == x {
                                    0.0
                                } else {
                                    -core::f64::consts::FRAC_PI_2
                                }
                            }
                        };
                        WheelAngle::from_delta(delta)
                    } else {
                        WheelAngle::from_delta((num / den).atan())
                    }
                }
            }
        })
        .collect();
    WheelSteering { angles }
}

/// Steering angle of a single wheel directly from the pose, in a form with no
/// singularity at `theta_r = 0`: with `t = tan(theta_r)`,
/// `delta = atan2(x t + sin(beta_r), cos(beta_r) - y t)` normalized into
/// `[-pi/2, pi/2]`.
pub fn wheel_angle_from_pose(pose: &SteerPose, wheel_x: f64, wheel_y: f64) -> f64 {
    let t = pose.theta_r.tan();
    let mut num = wheel_x * t + pose.beta_r.sin();
    let mut den = pose.beta_r.cos() - wheel_y * t;
    if den < 0.0 {
        num = -num;
        den = -den;
    }
    num.atan2(den)
}

/// Classify the motion mode of a pose.
///
/// Straight poses (`theta_r = 0`) split by travel direction; steering poses
/// split on whether the ICR's lateral offset `|c0|` clears the half track,
/// and, inside the track band, on whether its longitudinal offset `b0` falls
/// within the wheelbase span (pivot) or outside it (lateral steering).
pub fn classify_mode(pose: &SteerPose, params: &VehicleParams) -> Result<MotionMode, CoreError> {
    let half_pi = core::f64::consts::FRAC_PI_2;
    if pose.theta_r == 0.0 {
        return Ok(if pose.beta_r == 0.0 {
            MotionMode::LongitudinalStraight
        } else if pose.beta_r.abs() == half_pi {
            MotionMode::LateralStraight
        } else {
            MotionMode::DiagonalStraight
        });
    }
    let c = cot(pose.theta_r);
    let c0 = c * pose.beta_r.cos();
    let half_track = params.half_track();
    if (c0.abs() - half_track).abs() < BOUNDARY_TOL {
        return Err(CoreError::ExcludedIcr(half_track));
    }
    if c0.abs() > half_track {
        return Ok(MotionMode::LongitudinalSteering);
    }
    let b0 = -c * pose.beta_r.sin();
    if b0 > params.rear_axle_x() && b0 < params.front_axle_x() {
        Ok(MotionMode::PivotSteering)
    } else {
        Ok(MotionMode::LateralSteering)
    }
}

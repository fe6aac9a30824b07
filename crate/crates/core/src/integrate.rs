//! Fixed-step plant integration: speed/sideslip body dynamics plus the
//! global kinematic pose.

use crate::{derivative_vbr, wrap_angle, BodyStateVbr, CoreError, SteerPose, VehicleParams, V_MIN};

/// Global planar pose of the body.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GlobalPose {
    /// World x position (m).
    pub x: f64,
    /// World y position (m).
    pub y: f64,
    /// Body yaw angle (rad), wrapped to `(-pi, pi]`.
    pub psi: f64,
}

impl GlobalPose {
    /// Direction the velocity vector points in the world frame, `psi + beta`.
    pub fn velocity_heading(&self, beta: f64) -> f64 {
        wrap_angle(self.psi + beta)
    }
}

/// Full simulated plant state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    pub body: BodyStateVbr,
    pub pose: GlobalPose,
}

/// Additive disturbance on the sideslip and yaw-rate derivative channels,
/// held constant across one integration step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProcessDisturbance {
    /// Added to d(beta)/dt (rad/s).
    pub beta_dot: f64,
    /// Added to dr/dt (rad/s^2).
    pub r_dot: f64,
}

/// One fixed-step RK4 integration step of the plant.
///
/// The body derivative comes from [`derivative_vbr`]; the pose advances
/// kinematically with `dX = v cos(psi + beta)`, `dY = v sin(psi + beta)`,
/// `dpsi = r`. Below [`V_MIN`] the sideslip is held constant and only the
/// speed, yaw, and pose channels integrate, avoiding the `1/(m v)`
/// singularity.
pub fn integrate_plant(
    state: &PlantState,
    pose_cmd: &SteerPose,
    fx: &[f64],
    params: &VehicleParams,
    dt: f64,
    disturbance: ProcessDisturbance,
) -> Result<PlantState, CoreError> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(CoreError::InvalidTimeStep(dt));
    }

    let deriv = |s: &PlantState| -> Result<[f64; 6], CoreError> {
        let (dv, dbeta, dr) = if s.body.v > V_MIN {
            let d = derivative_vbr(&s.body, pose_cmd, fx, params)?;
            (d.v, d.beta + disturbance.beta_dot, d.r + disturbance.r_dot)
        } else {
            // Hold beta below the singularity; keep thrust on the speed
            // channel so the vehicle can start from rest.
            let thrust: f64 = fx
                .iter()
                .zip(
                    crate::wheel_angles(
                        &crate::steering::icr_from_steer_pose_unchecked(pose_cmd),
                        params,
                        crate::ApproachSide::FromBelow,
                    )
                    .angles
                    .iter(),
                )
                .map(|(f, a)| f * a.cos_delta)
                .sum();
            (thrust / params.mass, 0.0, disturbance.r_dot)
        };
        let heading = s.pose.psi + s.body.beta;
        Ok([
            dv,
            dbeta,
            dr,
            s.body.v * heading.cos(),
            s.body.v * heading.sin(),
            s.body.r,
        ])
    };

    let pack = |s: &PlantState| -> [f64; 6] {
        [
            s.body.v,
            s.body.beta,
            s.body.r,
            s.pose.x,
            s.pose.y,
            s.pose.psi,
        ]
    };
    let unpack = |z: [f64; 6]| -> PlantState {
        PlantState {
            body: BodyStateVbr {
                v: z[0],
                beta: z[1],
                r: z[2],
            },
            pose: GlobalPose {
                x: z[3],
                y: z[4],
                psi: z[5],
            },
        }
    };

    let z0 = pack(state);
    let k1 = deriv(state)?;
    let k2 = deriv(&unpack(add_scaled(z0, k1, 0.5 * dt)))?;
    let k3 = deriv(&unpack(add_scaled(z0, k2, 0.5 * dt)))?;
    let k4 = deriv(&unpack(add_scaled(z0, k3, dt)))?;

    let mut z = z0;
    for i in 0..6 {
        z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let mut next = unpack(z);
    next.body.v = next.body.v.max(0.0);
    next.pose.psi = wrap_angle(next.pose.psi);
    next.body.beta = wrap_angle(next.body.beta);
    Ok(next)
}

fn add_scaled(mut a: [f64; 6], b: [f64; 6], s: f64) -> [f64; 6] {
    for i in 0..6 {
        a[i] += s * b[i];
    }
    a
}

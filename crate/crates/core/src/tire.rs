//! Brush-type lateral tire model with friction-circle saturation.

use crate::{CoreError, VehicleParams};

/// Lateral tire force state for one wheel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TireState {
    /// Slip angle used for the evaluation (rad).
    pub alpha: f64,
    /// Vertical load (N).
    pub fz: f64,
    /// Longitudinal force, clamped into the friction circle (N).
    pub fx: f64,
    /// Lateral force (N). Negative for positive slip.
    pub fy: f64,
    /// Saturation limit `sqrt((mu Fz)^2 - Fx^2)` (N).
    pub fy_max: f64,
    /// Sliding threshold `arctan(3 fy_max / C_alpha)` (rad).
    pub alpha_sl: f64,
    /// Effective (secant) cornering stiffness `fy / alpha` (N/rad), with the
    /// limit `-C_alpha` at zero slip.
    pub effective_stiffness: f64,
    /// Set when `|fx|` exceeded the friction circle and was clamped.
    pub fx_clamped: bool,
}

/// Lateral force of the brush tire model.
///
/// Below the sliding threshold the force follows the cubic brush polynomial
/// in `tan(alpha)`; beyond it the tire slides at `-fy_max * sgn(alpha)`. The
/// available lateral force shrinks with longitudinal usage through the
/// friction circle.
pub fn fiala_lateral_force(
    alpha: f64,
    fz: f64,
    fx: f64,
    params: &VehicleParams,
) -> Result<TireState, CoreError> {
    if fz.is_nan() || fz <= 0.0 {
        return Err(CoreError::InvalidLoad(fz));
    }
    let mu_fz = params.friction * fz;
    let fx_clamped = fx.abs() > mu_fz;
    let fx = if fx_clamped { mu_fz.copysign(fx) } else { fx };
    let fy_max = (mu_fz * mu_fz - fx * fx).max(0.0).sqrt();
    let c_alpha = params.cornering_stiffness;
    let alpha_sl = (3.0 * fy_max / c_alpha).atan();

    let fy = if alpha.abs() < alpha_sl {
        let ta = alpha.tan();
        -c_alpha * ta + c_alpha * c_alpha / (3.0 * fy_max) * ta.abs() * ta
            - c_alpha.powi(3) / (27.0 * fy_max * fy_max) * ta.powi(3)
    } else {
        -fy_max * sgn(alpha)
    };

    let effective_stiffness = if alpha == 0.0 { -c_alpha } else { fy / alpha };

    Ok(TireState {
        alpha,
        fz,
        fx,
        fy,
        fy_max,
        alpha_sl,
        effective_stiffness,
        fx_clamped,
    })
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

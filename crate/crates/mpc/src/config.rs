//! Controller configuration with the reference tuning as defaults.

use nalgebra::SMatrix;
use serde::{Deserialize, Serialize};

use crate::MpcError;

/// Controller family: nominal LTV MPC, tube MPC fed with the raw model
/// error, or tube MPC fed with the Kalman-filtered and hysteresis-held
/// error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Ltvmpc,
    TubeLtvmpc,
    #[default]
    FilteredTubeLtvmpc,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Ltvmpc => write!(f, "LTVMPC"),
            Variant::TubeLtvmpc => write!(f, "T-LTVMPC"),
            Variant::FilteredTubeLtvmpc => write!(f, "FT-LTVMPC"),
        }
    }
}

/// Which heading error the cost and terminal set track to the reference
/// relative-heading profile.
///
/// `Velocity` penalizes the angle between the velocity direction and the
/// path tangent (the raw model state). `Body` penalizes the body-axis
/// offset `heading_err - beta`, which is the quantity that can be held
/// nonzero while staying on the path: tracking a nonzero relative heading
/// with zero lateral error requires the velocity to stay tangent while the
/// body crabs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HeadingMode {
    #[default]
    Velocity,
    Body,
}

/// Error feedback gain: 2 x 5.
pub type GainMat = SMatrix<f64, 2, 5>;

/// Full controller configuration. Defaults reproduce the reference tuning
/// for the 4-axle platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Control period (s): feedback and wheel commands refresh at this rate.
    pub t_control: f64,
    /// MPC sample time (s): the optimization grid and re-linearization rate.
    pub t_mpc: f64,
    /// Prediction horizon length (steps).
    pub horizon: usize,
    /// Stage weight on the lateral offset.
    pub q_d: f64,
    /// Stage weight on the heading error (per `heading_mode`).
    pub q_heading: f64,
    /// Input weight on the steering radius angle.
    pub r_theta: f64,
    /// Input weight on the commanded sideslip.
    pub r_beta: f64,
    /// Terminal weight on the lateral offset.
    pub p_d: f64,
    /// Terminal weight on the heading error.
    pub p_heading: f64,
    /// Half-width of the sideslip band around the commanded sideslip (rad).
    pub beta_max: f64,
    /// Yaw-rate bound (rad/s).
    pub r_max: f64,
    /// Per-wheel steering rate limit (rad/s).
    pub wheel_rate_max: f64,
    /// Componentwise bound assumed on the raw model error
    /// `[s, d, heading_err, beta, r]`.
    pub error_bound: [f64; 5],
    /// Error feedback gain applied as `u = u_nominal + K * e_filtered`. The
    /// default carries the sign that makes the error dynamics contract.
    pub feedback_gain: [[f64; 5]; 2],
    /// Hysteresis thresholds per error component; a filtered component must
    /// move at least this far to propagate to the output.
    pub hysteresis: [f64; 5],
    /// Process noise variance per component for the error filter.
    pub kalman_q: [f64; 5],
    /// Measurement noise variance per component for the error filter.
    pub kalman_r: [f64; 5],
    pub variant: Variant,
    pub heading_mode: HeadingMode,
    /// Quadratic penalty on the state-constraint slack variables.
    pub slack_weight: f64,
    /// Terminal box half-width on the lateral offset (m).
    pub terminal_d: f64,
    /// Terminal box half-width on the heading error (rad).
    pub terminal_heading: f64,
    /// Recompute the terminal weight from a closed-loop Lyapunov equation at
    /// each solve instead of using the fixed diagonal above.
    pub recompute_terminal: bool,
    /// Replace the fixed feedback gain with a discrete LQR synthesis at each
    /// linearization point. On by default: the fixed reference gain does not
    /// contract the error dynamics of this model at either loop rate.
    pub resynthesize_gain: bool,
}

impl Default for MpcConfig {
    fn default() -> Self {
        let error_bound = [0.0, 0.075, 0.022, 0.022, 0.009];
        Self {
            t_control: 0.02,
            t_mpc: 0.25,
            horizon: 20,
            q_d: 10.0,
            q_heading: 11.7,
            r_theta: 19.1,
            r_beta: 19.1,
            p_d: 3.3,
            p_heading: 3.9,
            beta_max: 10f64.to_radians(),
            r_max: 0.3,
            wheel_rate_max: 90f64.to_radians(),
            error_bound,
            // Reference gain magnitudes; negative sign so that
            // u = u_nominal + K e pulls the plant toward the nominal.
            feedback_gain: [
                [0.0, -0.35, -4.66, -0.05, -1.27],
                [0.0, -3.09, -2.12, -1.66, -0.02],
            ],
            hysteresis: scaled(error_bound, 0.1),
            kalman_q: squared_floored(error_bound, 1.0),
            kalman_r: squared_floored(error_bound, 0.1),
            variant: Variant::default(),
            heading_mode: HeadingMode::default(),
            slack_weight: 1e4,
            terminal_d: 0.5,
            terminal_heading: 15f64.to_radians(),
            recompute_terminal: false,
            resynthesize_gain: true,
        }
    }
}

fn scaled(v: [f64; 5], k: f64) -> [f64; 5] {
    let mut out = v;
    for x in &mut out {
        *x *= k;
    }
    out
}

fn squared_floored(v: [f64; 5], k: f64) -> [f64; 5] {
    // Zero variances make the filter update singular; floor them.
    let mut out = [0.0; 5];
    for i in 0..5 {
        out[i] = (k * v[i]) * (k * v[i]);
        if out[i] < 1e-12 {
            out[i] = 1e-12;
        }
    }
    out
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), MpcError> {
        if self.t_control.is_nan() || self.t_control <= 0.0 || self.t_mpc < self.t_control {
            return Err(MpcError::InvalidConfig(format!(
                "periods: t_control = {}, t_mpc = {}",
                self.t_control, self.t_mpc
            )));
        }
        if self.horizon < 2 {
            return Err(MpcError::InvalidConfig(format!(
                "horizon = {}",
                self.horizon
            )));
        }
        for (name, w) in [
            ("q_d", self.q_d),
            ("q_heading", self.q_heading),
            ("r_theta", self.r_theta),
            ("r_beta", self.r_beta),
            ("p_d", self.p_d),
            ("p_heading", self.p_heading),
            ("slack_weight", self.slack_weight),
        ] {
            if w < 0.0 {
                return Err(MpcError::InvalidConfig(format!("{name} = {w} < 0")));
            }
        }
        if [self.beta_max, self.r_max, self.wheel_rate_max]
            .iter()
            .any(|b| b.is_nan() || *b <= 0.0)
        {
            return Err(MpcError::InvalidConfig("bounds must be positive".into()));
        }
        Ok(())
    }

    pub fn gain_matrix(&self) -> GainMat {
        GainMat::from_fn(|i, j| self.feedback_gain[i][j])
    }

    /// Number of control ticks per MPC sample, rounded up.
    pub fn ticks_per_solve(&self) -> usize {
        (self.t_mpc / self.t_control).round().max(1.0) as usize
    }
}

#[cfg(test)]
#[allow(clippy::field_reassign_with_default)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_reference_tuning() {
        let c = MpcConfig::default();
        c.validate().unwrap();
        assert_eq!(c.horizon, 20);
        assert_eq!(c.t_mpc, 0.25);
        assert_eq!(c.t_control, 0.02);
        assert_eq!(c.q_d, 10.0);
        assert_eq!(c.q_heading, 11.7);
        assert_eq!(c.r_theta, 19.1);
        assert_eq!(c.r_beta, 19.1);
        assert_eq!(c.p_d, 3.3);
        assert_eq!(c.p_heading, 3.9);
        assert_eq!(c.r_max, 0.3);
        assert!((c.wheel_rate_max - core::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((c.beta_max - 0.17453292519943295).abs() < 1e-15);
        assert_eq!(c.error_bound[1], 0.075);
        assert_eq!(c.feedback_gain[1][1], -3.09);
    }

    #[test]
    fn validation_rejects_bad_periods() {
        let mut c = MpcConfig::default();
        c.t_mpc = 0.01; // below t_control
        assert!(c.validate().is_err());
        let mut c = MpcConfig::default();
        c.horizon = 1;
        assert!(c.validate().is_err());
    }
}

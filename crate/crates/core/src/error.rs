use thiserror::Error;

/// Errors raised by the geometry, tire, and dynamics layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    /// A vehicle parameter violated its validity range.
    #[error("invalid vehicle parameter: {0}")]
    InvalidParams(String),
    /// Steering pose outside the representable domain.
    #[error("invalid steer pose: {0}")]
    InvalidPose(String),
    /// The commanded ICR sits on the excluded wheel-track boundary where the
    /// longitudinal/lateral steering classification is undefined.
    #[error("ICR on excluded track boundary: |cot(theta_r) cos(beta_r)| = half track = {0}")]
    ExcludedIcr(f64),
    /// ICR degenerate for the inverse mapping (e.g. exactly at the CG).
    #[error("degenerate ICR: {0}")]
    DegenerateIcr(String),
    /// Tire vertical load must be positive.
    #[error("invalid tire load Fz = {0}")]
    InvalidLoad(f64),
    /// Forward speed at or below the sideslip-dynamics singularity.
    #[error("forward speed {0} at or below v_min = {1}")]
    LowSpeedSingularity(f64, f64),
    /// Integration step must be positive.
    #[error("non-positive time step {0}")]
    InvalidTimeStep(f64),
}

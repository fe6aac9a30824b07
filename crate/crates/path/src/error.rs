use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    /// Path construction input was unusable.
    #[error("degenerate path: {0}")]
    DegeneratePath(String),
    /// Arc-length query outside `[0, length]`.
    #[error("arc length {s} outside [0, {length}]")]
    OutOfRange { s: f64, length: f64 },
    /// A pose could not be projected onto the path.
    #[error("projection lost: {0}")]
    ProjectionLost(String),
}

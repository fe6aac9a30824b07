//! Reference paths parameterized by arc length, with heading, curvature, and
//! a reference relative-heading profile, plus projection of global poses into
//! Frenet coordinates `(s, d, heading error)`.

mod build;
mod error;
mod path;

pub use build::{build_path, build_path_default, CompositeSegment, PathSpec, SegmentKind};
pub use error::PathError;
pub use path::{FrenetState, PathSample, ReferencePath};

/// Default resampling interval (m). Keeps the chord-length error of the
/// uniform sampling under 0.1% for curvature radii of 5 m and above.
pub const DEFAULT_DS: f64 = 0.1;

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let mut w = a % core::f64::consts::TAU;
    if w <= -core::f64::consts::PI {
        w += core::f64::consts::TAU;
    } else if w > core::f64::consts::PI {
        w -= core::f64::consts::TAU;
    }
    w
}

//! Path generators and the waypoint resampler.

use serde::{Deserialize, Serialize};

use crate::{PathError, ReferencePath, DEFAULT_DS};

/// Declarative path description, loadable from scenario configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PathSpec {
    /// Straight segment.
    Line {
        length: f64,
        /// Initial heading (rad).
        #[serde(default)]
        heading: f64,
    },
    /// Constant-radius arc.
    Arc {
        /// Radius (m), positive.
        radius: f64,
        /// Total signed heading change (rad); positive turns left.
        turn: f64,
    },
    /// Straight lead-in followed by a section whose curvature and reference
    /// relative heading both vary sinusoidally in arc length. The curvature
    /// amplitude is `1 / min_radius`, so the curvature radius reaches
    /// `±min_radius` at the extremes.
    ///
    /// The relative-heading profile leads the curvature profile by
    /// `rel_heading_phase_deg`. In quadrature (the default) the commanded
    /// body heading barely rotates while the velocity sweeps through the
    /// S-curves, which keeps the yaw-rate demand inside its bound at high
    /// speed; in phase, the demanded average yaw rate exceeds the bound at
    /// the reference speeds. The lead-in ramps the relative heading from
    /// zero to its junction value.
    SinusoidalCurvature {
        #[serde(default = "default_lead_in")]
        lead_in: f64,
        /// Wavelength of both profiles (m).
        #[serde(default = "default_wave_length")]
        wave_length: f64,
        /// Number of full waves.
        #[serde(default = "default_cycles")]
        cycles: f64,
        /// Tightest curvature radius (m).
        #[serde(default = "default_min_radius")]
        min_radius: f64,
        /// Peak reference relative heading (deg).
        #[serde(default = "default_rel_heading_amplitude")]
        rel_heading_amplitude_deg: f64,
        /// Phase lead of the relative-heading profile (deg).
        #[serde(default = "default_rel_heading_phase")]
        rel_heading_phase_deg: f64,
    },
    /// Sequence of line and arc segments, each with its own reference
    /// relative-heading target, blended linearly over `blend` meters at each
    /// segment start.
    Composite { segments: Vec<CompositeSegment> },
    /// Polyline through waypoints, resampled by arc length with
    /// finite-difference heading and curvature.
    Waypoints { points: Vec<[f64; 2]> },
}

fn default_lead_in() -> f64 {
    20.0
}
fn default_wave_length() -> f64 {
    80.0
}
fn default_cycles() -> f64 {
    6.0
}
fn default_min_radius() -> f64 {
    22.0
}
fn default_rel_heading_amplitude() -> f64 {
    30.0
}
fn default_rel_heading_phase() -> f64 {
    90.0
}
fn default_blend() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeSegment {
    #[serde(flatten)]
    pub kind: SegmentKind,
    /// Reference relative heading held over this segment (deg).
    #[serde(default)]
    pub rel_heading_deg: f64,
    /// Ramp length for the relative-heading transition (m).
    #[serde(default = "default_blend")]
    pub blend: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentKind {
    Line { length: f64 },
    Arc { radius: f64, turn: f64 },
}

impl SegmentKind {
    fn length(&self) -> f64 {
        match *self {
            SegmentKind::Line { length } => length,
            SegmentKind::Arc { radius, turn } => radius * turn.abs(),
        }
    }

    fn curvature(&self) -> f64 {
        match *self {
            SegmentKind::Line { .. } => 0.0,
            SegmentKind::Arc { radius, turn } => turn.signum() / radius,
        }
    }
}

/// Build a uniformly resampled path from a spec.
pub fn build_path(spec: &PathSpec, ds: f64) -> Result<ReferencePath, PathError> {
    if ds.is_nan() || ds <= 0.0 {
        return Err(PathError::DegeneratePath(format!("ds = {ds}")));
    }
    match spec {
        PathSpec::Waypoints { points } => build_from_waypoints(points, ds),
        _ => {
            let (length, heading0) = match spec {
                PathSpec::Line { length, heading } => (*length, *heading),
                PathSpec::Arc { radius, turn } => {
                    if radius.is_nan() || *radius <= 0.0 {
                        return Err(PathError::DegeneratePath(format!("radius = {radius}")));
                    }
                    (radius * turn.abs(), 0.0)
                }
                PathSpec::SinusoidalCurvature {
                    lead_in,
                    wave_length,
                    cycles,
                    min_radius,
                    ..
                } => {
                    if min_radius.is_nan()
                        || *min_radius <= 0.0
                        || wave_length.is_nan()
                        || *wave_length <= 0.0
                    {
                        return Err(PathError::DegeneratePath("sinusoid parameters".into()));
                    }
                    (lead_in + wave_length * cycles, 0.0)
                }
                PathSpec::Composite { segments } => {
                    if segments.is_empty() {
                        return Err(PathError::DegeneratePath("no segments".into()));
                    }
                    (segments.iter().map(|s| s.kind.length()).sum(), 0.0)
                }
                PathSpec::Waypoints { .. } => unreachable!(),
            };
            if length.is_nan() || length <= ds {
                return Err(PathError::DegeneratePath(format!(
                    "length {length} too short for ds {ds}"
                )));
            }
            build_from_profile(spec, length, heading0, ds)
        }
    }
}

/// Curvature and relative-heading profile of a generator at arc length `s`.
fn profile_at(spec: &PathSpec, s: f64) -> (f64, f64) {
    match spec {
        PathSpec::Line { .. } => (0.0, 0.0),
        PathSpec::Arc { radius, turn } => (turn.signum() / radius, 0.0),
        PathSpec::SinusoidalCurvature {
            lead_in,
            wave_length,
            min_radius,
            rel_heading_amplitude_deg,
            rel_heading_phase_deg,
            ..
        } => {
            let amp = rel_heading_amplitude_deg.to_radians();
            let lead = rel_heading_phase_deg.to_radians();
            if s <= *lead_in {
                // Ramp to the junction value so the profile is continuous.
                let junction = amp * lead.sin();
                let frac = if *lead_in > 0.0 { s / lead_in } else { 1.0 };
                (0.0, junction * frac)
            } else {
                let phase = core::f64::consts::TAU * (s - lead_in) / wave_length;
                (phase.sin() / min_radius, amp * (phase + lead).sin())
            }
        }
        PathSpec::Composite { segments } => {
            let mut start = 0.0;
            let mut prev_rel = 0.0;
            for seg in segments {
                let len = seg.kind.length();
                if s <= start + len || std::ptr::eq(seg, segments.last().unwrap()) {
                    let target = seg.rel_heading_deg.to_radians();
                    let rel = if seg.blend > 0.0 && s - start < seg.blend {
                        prev_rel + (target - prev_rel) * ((s - start) / seg.blend)
                    } else {
                        target
                    };
                    return (seg.kind.curvature(), rel);
                }
                start += len;
                prev_rel = seg.rel_heading_deg.to_radians();
            }
            (0.0, 0.0)
        }
        PathSpec::Waypoints { .. } => (0.0, 0.0),
    }
}

fn build_from_profile(
    spec: &PathSpec,
    length: f64,
    heading0: f64,
    ds: f64,
) -> Result<ReferencePath, PathError> {
    let n = (length / ds).round() as usize + 1;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut heading = Vec::with_capacity(n);
    let mut curvature = Vec::with_capacity(n);
    let mut rel = Vec::with_capacity(n);

    // March position and heading with midpoint sub-steps; curvature and the
    // relative-heading profile are analytic.
    let substeps = 10;
    let h = ds / substeps as f64;
    let mut px = 0.0;
    let mut py = 0.0;
    let mut phead = heading0;
    for i in 0..n {
        let s = i as f64 * ds;
        let (k, r) = profile_at(spec, s);
        x.push(px);
        y.push(py);
        heading.push(phead);
        curvature.push(k);
        rel.push(r);
        if i + 1 < n {
            for j in 0..substeps {
                let sj = s + j as f64 * h;
                let (k0, _) = profile_at(spec, sj);
                let (km, _) = profile_at(spec, sj + 0.5 * h);
                let (k1, _) = profile_at(spec, sj + h);
                let head_mid = phead + 0.5 * h * km;
                px += h * head_mid.cos();
                py += h * head_mid.sin();
                phead += h / 6.0 * (k0 + 4.0 * km + k1);
            }
        }
    }

    Ok(ReferencePath {
        ds,
        x,
        y,
        heading,
        curvature,
        rel_heading_ref: rel,
    })
}

fn build_from_waypoints(points: &[[f64; 2]], ds: f64) -> Result<ReferencePath, PathError> {
    if points.len() < 2 {
        return Err(PathError::DegeneratePath(
            "need at least 2 waypoints".into(),
        ));
    }
    // Cumulative chord lengths.
    let mut cum = vec![0.0];
    for w in points.windows(2) {
        let seg = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        if seg < 1e-9 {
            return Err(PathError::DegeneratePath(
                "duplicate consecutive waypoints".into(),
            ));
        }
        cum.push(cum.last().unwrap() + seg);
    }
    let total = *cum.last().unwrap();
    if total <= ds {
        return Err(PathError::DegeneratePath(format!(
            "polyline length {total} too short"
        )));
    }

    let n = (total / ds).floor() as usize + 1;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        let s = (i as f64 * ds).min(total);
        while j + 2 < cum.len() && cum[j + 1] < s {
            j += 1;
        }
        let t = (s - cum[j]) / (cum[j + 1] - cum[j]);
        x.push(points[j][0] + t * (points[j + 1][0] - points[j][0]));
        y.push(points[j][1] + t * (points[j + 1][1] - points[j][1]));
    }

    // Heading by central differences, unwrapped; curvature from the heading.
    let mut heading = Vec::with_capacity(n);
    for i in 0..n {
        let (i0, i1) = if i == 0 {
            (0, 1)
        } else if i == n - 1 {
            (n - 2, n - 1)
        } else {
            (i - 1, i + 1)
        };
        heading.push((y[i1] - y[i0]).atan2(x[i1] - x[i0]));
    }
    for i in 1..n {
        // Unwrap against the previous sample.
        let raw: f64 = heading[i];
        let prev: f64 = heading[i - 1];
        heading[i] = prev + crate::wrap_angle(raw - prev);
    }
    let mut curvature = Vec::with_capacity(n);
    for i in 0..n {
        let k = if i == 0 {
            (heading[1] - heading[0]) / ds
        } else if i == n - 1 {
            (heading[n - 1] - heading[n - 2]) / ds
        } else {
            (heading[i + 1] - heading[i - 1]) / (2.0 * ds)
        };
        curvature.push(k);
    }

    Ok(ReferencePath {
        ds,
        rel_heading_ref: vec![0.0; n],
        x,
        y,
        heading,
        curvature,
    })
}

/// Convenience wrapper using the default resampling interval.
pub fn build_path_default(spec: &PathSpec) -> Result<ReferencePath, PathError> {
    build_path(spec, DEFAULT_DS)
}

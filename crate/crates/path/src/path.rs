//! The sampled path representation, interpolation, and Frenet projection.

use std::io::Write;

use crate::{wrap_angle, PathError};

/// A reference path sampled uniformly in arc length.
///
/// `heading` is stored unwrapped (cumulative), which keeps interpolation
/// across the ±pi seam trivial; query results wrap on output. Immutable once
/// built; concurrent read-only use is safe.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    /// Uniform sample spacing (m).
    pub ds: f64,
    /// World x per sample (m).
    pub x: Vec<f64>,
    /// World y per sample (m).
    pub y: Vec<f64>,
    /// Tangent heading per sample (rad, unwrapped).
    pub heading: Vec<f64>,
    /// Signed curvature per sample (1/m), left turns positive.
    pub curvature: Vec<f64>,
    /// Reference relative heading per sample (rad): the commanded angle
    /// between the tracked heading and the path tangent.
    pub rel_heading_ref: Vec<f64>,
}

/// Interpolated path quantities at one arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub x: f64,
    pub y: f64,
    /// Tangent heading (rad, wrapped to `(-pi, pi]`).
    pub heading: f64,
    /// Tangent heading (rad, unwrapped).
    pub heading_unwrapped: f64,
    pub curvature: f64,
    pub rel_heading_ref: f64,
}

/// Frenet coordinates of a projected pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetState {
    /// Arc length of the projection point (m).
    pub s: f64,
    /// Signed lateral offset (m), left of the path positive.
    pub d: f64,
    /// Error between the queried heading and the path tangent (rad), wrapped.
    pub heading_error: f64,
}

impl ReferencePath {
    /// Total arc length (m).
    pub fn length(&self) -> f64 {
        (self.x.len() - 1) as f64 * self.ds
    }

    /// Largest absolute curvature over the path.
    pub fn max_abs_curvature(&self) -> f64 {
        self.curvature.iter().fold(0.0, |m, k| m.max(k.abs()))
    }

    /// Interpolate the path at arc length `s`: cubic for position, linear for
    /// curvature and the relative-heading profile, linear on the unwrapped
    /// heading.
    pub fn sample(&self, s: f64) -> Result<PathSample, PathError> {
        if !(0.0..=self.length() + 1e-9).contains(&s) {
            return Err(PathError::OutOfRange {
                s,
                length: self.length(),
            });
        }
        let s = s.min(self.length());
        let (i, t) = self.locate(s);
        let heading_unwrapped = lerp(self.heading[i], self.heading[i + 1], t);
        Ok(PathSample {
            x: self.catmull_rom(&self.x, i, t),
            y: self.catmull_rom(&self.y, i, t),
            heading: wrap_angle(heading_unwrapped),
            heading_unwrapped,
            curvature: lerp(self.curvature[i], self.curvature[i + 1], t),
            rel_heading_ref: lerp(self.rel_heading_ref[i], self.rel_heading_ref[i + 1], t),
        })
    }

    /// Project a world position and a heading of interest into Frenet
    /// coordinates.
    ///
    /// The projection arc length minimizes the squared distance to the path,
    /// refined by Newton iteration seeded at `hint` (falling back to a local
    /// grid search, or a global one without a hint). The lateral offset
    /// carries the left-positive sign of the cross product with the tangent.
    pub fn project(
        &self,
        x: f64,
        y: f64,
        heading: f64,
        hint: Option<f64>,
    ) -> Result<FrenetState, PathError> {
        let s0 = match hint {
            Some(h) => h.clamp(0.0, self.length()),
            None => self.grid_search(x, y, 0.0, self.length(), self.ds),
        };

        let mut s = s0;
        let mut converged = false;
        for _ in 0..10 {
            let (g, gp) = self.distance_gradient(s, x, y);
            if gp.abs() < 1e-12 {
                break;
            }
            let step = g / gp;
            s = (s - step).clamp(0.0, self.length());
            if step.abs() < 1e-9 {
                converged = true;
                break;
            }
        }
        if !converged {
            // Local grid search around the seed, then one Newton polish.
            let lo = (s0 - 5.0).max(0.0);
            let hi = (s0 + 5.0).min(self.length());
            s = self.grid_search(x, y, lo, hi, self.ds / 10.0);
            for _ in 0..10 {
                let (g, gp) = self.distance_gradient(s, x, y);
                if gp.abs() < 1e-12 {
                    break;
                }
                let step = g / gp;
                s = (s - step).clamp(0.0, self.length());
                if step.abs() < 1e-9 {
                    break;
                }
            }
        }

        let p = self.sample(s)?;
        let dx = x - p.x;
        let dy = y - p.y;
        let dist = dx.hypot(dy);
        let bound = self.projection_bound();
        if dist > bound {
            return Err(PathError::ProjectionLost(format!(
                "distance {dist:.3} m exceeds bound {bound:.3} m at s = {s:.3}"
            )));
        }
        let sign = dy * p.heading.cos() - dx * p.heading.sin();
        let d = if sign >= 0.0 { dist } else { -dist };
        Ok(FrenetState {
            s,
            d,
            heading_error: wrap_angle(heading - p.heading),
        })
    }

    /// Lateral validity bound of the projection: half the tightest curvature
    /// radius (unbounded for straight paths).
    pub fn projection_bound(&self) -> f64 {
        let k = self.max_abs_curvature();
        if k > 0.0 {
            0.5 / k
        } else {
            f64::INFINITY
        }
    }

    /// World position a signed lateral offset `d` to the left of the path at
    /// arc length `s`. Uses the tangent of the position interpolant so that
    /// [`ReferencePath::project`] is its exact inverse.
    pub fn offset_point(&self, s: f64, d: f64) -> Result<(f64, f64), PathError> {
        let p = self.sample(s)?;
        let (i, t) = self.locate(s.min(self.length()));
        let tx = self.catmull_rom_d1(&self.x, i, t);
        let ty = self.catmull_rom_d1(&self.y, i, t);
        let norm = tx.hypot(ty);
        Ok((p.x - d * ty / norm, p.y + d * tx / norm))
    }

    /// Write the sample table as CSV: `s,x,y,heading,curvature,rel_heading_ref`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "s,x,y,heading,curvature,rel_heading_ref")?;
        for i in 0..self.x.len() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                i as f64 * self.ds,
                self.x[i],
                self.y[i],
                wrap_angle(self.heading[i]),
                self.curvature[i],
                self.rel_heading_ref[i]
            )?;
        }
        Ok(())
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let max_i = self.x.len() - 2;
        let raw = s / self.ds;
        let i = (raw.floor() as usize).min(max_i);
        (i, raw - i as f64)
    }

    /// Catmull-Rom interpolation on the uniform grid with clamped ends.
    fn catmull_rom(&self, v: &[f64], i: usize, t: f64) -> f64 {
        let n = v.len();
        let p0 = v[i.saturating_sub(1)];
        let p1 = v[i];
        let p2 = v[i + 1];
        let p3 = v[(i + 2).min(n - 1)];
        let t2 = t * t;
        let t3 = t2 * t;
        0.5 * ((2.0 * p1)
            + (-p0 + p2) * t
            + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2
            + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3)
    }

    fn catmull_rom_d1(&self, v: &[f64], i: usize, t: f64) -> f64 {
        let n = v.len();
        let p0 = v[i.saturating_sub(1)];
        let p1 = v[i];
        let p2 = v[i + 1];
        let p3 = v[(i + 2).min(n - 1)];
        let t2 = t * t;
        0.5 * ((-p0 + p2)
            + 2.0 * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t
            + 3.0 * (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t2)
            / self.ds
    }

    fn catmull_rom_d2(&self, v: &[f64], i: usize, t: f64) -> f64 {
        let n = v.len();
        let p0 = v[i.saturating_sub(1)];
        let p1 = v[i];
        let p2 = v[i + 1];
        let p3 = v[(i + 2).min(n - 1)];
        0.5 * (2.0 * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3)
            + 6.0 * (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t)
            / (self.ds * self.ds)
    }

    /// Gradient and second derivative of half the squared distance to the
    /// path at `s`.
    fn distance_gradient(&self, s: f64, px: f64, py: f64) -> (f64, f64) {
        let (i, t) = self.locate(s.clamp(0.0, self.length()));
        let cx = self.catmull_rom(&self.x, i, t);
        let cy = self.catmull_rom(&self.y, i, t);
        let dx1 = self.catmull_rom_d1(&self.x, i, t);
        let dy1 = self.catmull_rom_d1(&self.y, i, t);
        let dx2 = self.catmull_rom_d2(&self.x, i, t);
        let dy2 = self.catmull_rom_d2(&self.y, i, t);
        let g = (cx - px) * dx1 + (cy - py) * dy1;
        let gp = dx1 * dx1 + dy1 * dy1 + (cx - px) * dx2 + (cy - py) * dy2;
        (g, gp)
    }

    fn grid_search(&self, x: f64, y: f64, lo: f64, hi: f64, step: f64) -> f64 {
        let mut best_s = lo;
        let mut best_d2 = f64::INFINITY;
        let mut s = lo;
        while s <= hi + 1e-12 {
            let (i, t) = self.locate(s.min(self.length()));
            let cx = self.catmull_rom(&self.x, i, t);
            let cy = self.catmull_rom(&self.y, i, t);
            let d2 = (cx - x) * (cx - x) + (cy - y) * (cy - y);
            if d2 < best_d2 {
                best_d2 = d2;
                best_s = s.min(self.length());
            }
            s += step;
        }
        best_s
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

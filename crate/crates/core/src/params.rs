use serde::{Deserialize, Serialize};

use crate::CoreError;

/// Which side of the vehicle a wheel sits on. Left is +y in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WheelSide {
    Left,
    Right,
}

/// Identifies one wheel: axle number (1 = front-most) and side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WheelIndex {
    /// Axle number, 1-based, front to rear.
    pub axle: usize,
    pub side: WheelSide,
}

impl WheelIndex {
    /// Short label like `1L`, `4R`; used in CSV headers and reports.
    pub fn label(&self) -> String {
        match self.side {
            WheelSide::Left => format!("{}L", self.axle),
            WheelSide::Right => format!("{}R", self.axle),
        }
    }
}

/// Chassis, layout, and tire parameters of a multi-axle all-wheel-steering
/// vehicle. Defaults describe the reference 4-axle heavy platform used
/// throughout the tests and scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// Total mass (kg).
    pub mass: f64,
    /// Yaw moment of inertia (kg m^2).
    pub yaw_inertia: f64,
    /// Axle x-coordinates in the body frame, strictly decreasing front to
    /// rear (m). Wheels sit at (x_i, ±track/2).
    pub axle_x: Vec<f64>,
    /// Track width between left and right wheel rows (m).
    pub track: f64,
    /// Tire cornering stiffness (N/rad), identical for all wheels.
    pub cornering_stiffness: f64,
    /// Tire/road friction coefficient.
    pub friction: f64,
    /// Effective rolling radius (m).
    pub rolling_radius: f64,
    /// Height of the center of gravity (m). Carried for completeness; load
    /// transfer is not modeled.
    pub cg_height: f64,
    /// Gravitational acceleration (m/s^2).
    pub gravity: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 10_000.0,
            yaw_inertia: 34_823.0,
            axle_x: vec![3.55, 1.75, -1.75, -3.55],
            track: 2.72,
            cornering_stiffness: 40_000.0,
            friction: 0.85,
            rolling_radius: 0.35,
            cg_height: 1.21,
            gravity: 9.81,
        }
    }
}

impl VehicleParams {
    /// Check the physical validity ranges.
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.mass.is_nan() || self.mass <= 0.0 {
            return Err(CoreError::InvalidParams(format!("mass = {}", self.mass)));
        }
        if self.yaw_inertia.is_nan() || self.yaw_inertia <= 0.0 {
            return Err(CoreError::InvalidParams(format!(
                "yaw_inertia = {}",
                self.yaw_inertia
            )));
        }
        if self.track.is_nan() || self.track <= 0.0 {
            return Err(CoreError::InvalidParams(format!("track = {}", self.track)));
        }
        if self.axle_x.is_empty() {
            return Err(CoreError::InvalidParams("no axles".into()));
        }
        if !self.axle_x.windows(2).all(|w| w[0] > w[1]) {
            return Err(CoreError::InvalidParams(format!(
                "axle_x not strictly decreasing: {:?}",
                self.axle_x
            )));
        }
        if self.cornering_stiffness.is_nan() || self.cornering_stiffness <= 0.0 {
            return Err(CoreError::InvalidParams(format!(
                "cornering_stiffness = {}",
                self.cornering_stiffness
            )));
        }
        if !(self.friction > 0.0 && self.friction <= 1.5) {
            return Err(CoreError::InvalidParams(format!(
                "friction = {}",
                self.friction
            )));
        }
        Ok(())
    }

    /// Number of axles.
    pub fn axle_count(&self) -> usize {
        self.axle_x.len()
    }

    /// Total wheel count (two per axle).
    pub fn wheel_count(&self) -> usize {
        2 * self.axle_x.len()
    }

    /// Half track width: left wheels at +half_track, right at -half_track.
    pub fn half_track(&self) -> f64 {
        0.5 * self.track
    }

    /// x-coordinate of the front-most axle.
    pub fn front_axle_x(&self) -> f64 {
        self.axle_x[0]
    }

    /// x-coordinate of the rear-most axle.
    pub fn rear_axle_x(&self) -> f64 {
        *self.axle_x.last().unwrap()
    }

    /// Body-frame position (x, y) of a wheel.
    pub fn wheel_position(&self, wheel: WheelIndex) -> (f64, f64) {
        let x = self.axle_x[wheel.axle - 1];
        let y = match wheel.side {
            WheelSide::Left => self.half_track(),
            WheelSide::Right => -self.half_track(),
        };
        (x, y)
    }

    /// All wheels in fixed order: 1L, 1R, 2L, 2R, ... This order is used for
    /// every per-wheel slice in the crate.
    pub fn wheels(&self) -> impl Iterator<Item = WheelIndex> + '_ {
        (1..=self.axle_count()).flat_map(|axle| {
            [
                WheelIndex {
                    axle,
                    side: WheelSide::Left,
                },
                WheelIndex {
                    axle,
                    side: WheelSide::Right,
                },
            ]
        })
    }

    /// Static per-wheel vertical load, mass spread evenly over all wheels (N).
    pub fn static_wheel_load(&self) -> f64 {
        self.mass * self.gravity / self.wheel_count() as f64
    }
}

#[cfg(test)]
#[allow(clippy::field_reassign_with_default)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let p = VehicleParams::default();
        p.validate().unwrap();
        assert_eq!(p.wheel_count(), 8);
        assert!((p.static_wheel_load() - 10_000.0 * 9.81 / 8.0).abs() < 1e-9);
    }

    #[test]
    fn wheel_order_and_positions() {
        let p = VehicleParams::default();
        let wheels: Vec<_> = p.wheels().collect();
        assert_eq!(wheels.len(), 8);
        assert_eq!(wheels[0].label(), "1L");
        assert_eq!(wheels[7].label(), "4R");
        let (x, y) = p.wheel_position(wheels[0]);
        assert_eq!((x, y), (3.55, 1.36));
        let (x, y) = p.wheel_position(wheels[7]);
        assert_eq!((x, y), (-3.55, -1.36));
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut p = VehicleParams::default();
        p.axle_x = vec![1.0, 2.0];
        assert!(matches!(p.validate(), Err(CoreError::InvalidParams(_))));
        let mut p = VehicleParams::default();
        p.friction = 1.6;
        assert!(p.validate().is_err());
    }
}

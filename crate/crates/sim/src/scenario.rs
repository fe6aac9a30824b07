//! Scenario configuration: one structured JSON file with sections for the
//! vehicle, path, speed profile, controller, disturbance, plant, and output.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use awoisv_core::VehicleParams;
use awoisv_mpc::MpcConfig;
use awoisv_path::PathSpec;

use crate::SimError;

/// Complete description of one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    /// Human-readable scenario name; used in output file names.
    pub name: String,
    /// Vehicle parameters as the controller knows them.
    pub vehicle: VehicleParams,
    pub path: PathSpec,
    pub speed: SpeedProfile,
    pub controller: MpcConfig,
    pub disturbance: DisturbanceSpec,
    pub plant: PlantSpec,
    /// Simulated duration (s).
    pub duration: f64,
    pub output: OutputSpec,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            vehicle: VehicleParams::default(),
            path: PathSpec::SinusoidalCurvature {
                lead_in: 20.0,
                wave_length: 80.0,
                cycles: 6.0,
                min_radius: 22.0,
                rel_heading_amplitude_deg: 30.0,
                rel_heading_phase_deg: 90.0,
            },
            speed: SpeedProfile::default(),
            controller: MpcConfig::default(),
            disturbance: DisturbanceSpec::default(),
            plant: PlantSpec::default(),
            duration: 60.0,
            output: OutputSpec::default(),
        }
    }
}

/// Piecewise-linear reference speed over time: (t, v) knots. A single knot
/// means constant speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedProfile {
    pub points: Vec<[f64; 2]>,
}

impl Default for SpeedProfile {
    fn default() -> Self {
        Self {
            points: vec![[0.0, 5.0]],
        }
    }
}

impl SpeedProfile {
    pub fn constant(v: f64) -> Self {
        Self {
            points: vec![[0.0, v]],
        }
    }

    /// Reference speed at time `t` by linear interpolation with clamped
    /// ends.
    pub fn at(&self, t: f64) -> f64 {
        let pts = &self.points;
        if t <= pts[0][0] {
            return pts[0][1];
        }
        for w in pts.windows(2) {
            if t <= w[1][0] {
                let f = (t - w[0][0]) / (w[1][0] - w[0][0]);
                return w[0][1] + f * (w[1][1] - w[0][1]);
            }
        }
        pts.last().unwrap()[1]
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.points.is_empty() {
            return Err(SimError::InvalidScenario("empty speed profile".into()));
        }
        if !self.points.windows(2).all(|w| w[1][0] > w[0][0]) {
            return Err(SimError::InvalidScenario(
                "speed profile times must increase".into(),
            ));
        }
        if self.points.iter().any(|p| !(0.0..=15.0).contains(&p[1])) {
            return Err(SimError::InvalidScenario(
                "speed profile outside [0, 15] m/s".into(),
            ));
        }
        Ok(())
    }
}

/// Seeded, bounded Gaussian perturbations: a process disturbance on the
/// sideslip and yaw-rate derivative channels, and measurement noise on the
/// state fed back to the controller. Both redraw once per control period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub seed: u64,
    /// Standard deviation on d(beta)/dt (rad/s).
    pub beta_dot_std: f64,
    /// Standard deviation on dr/dt (rad/s^2).
    pub r_dot_std: f64,
    /// Hard truncation bound on d(beta)/dt.
    pub beta_dot_bound: f64,
    /// Hard truncation bound on dr/dt.
    pub r_dot_bound: f64,
    /// Measurement noise standard deviation per state component
    /// `[s, d, heading_err, beta, r]`; the plant itself is unaffected.
    pub measurement_noise_std: [f64; 5],
    /// Truncation bound per component.
    pub measurement_noise_bound: [f64; 5],
}

impl Default for DisturbanceSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            beta_dot_std: 0.0,
            r_dot_std: 0.0,
            beta_dot_bound: 0.0,
            r_dot_bound: 0.0,
            measurement_noise_std: [0.0; 5],
            measurement_noise_bound: [0.0; 5],
        }
    }
}

impl DisturbanceSpec {
    pub fn is_active(&self) -> bool {
        self.beta_dot_std > 0.0 || self.r_dot_std > 0.0
    }

    pub fn has_measurement_noise(&self) -> bool {
        self.measurement_noise_std.iter().any(|&s| s > 0.0)
    }
}

/// Which plant the loop closes around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PlantModel {
    /// The nonlinear forward-speed/sideslip body dynamics integrated with
    /// fixed-step RK4 plus the kinematic pose.
    #[default]
    Nonlinear,
    /// The controller's own discretized prediction model, stepped once per
    /// control period. This is the zero-model-error reference plant used by
    /// the variant-collapse checks; it requires the control period to equal
    /// the optimization period.
    NominalDiscrete,
}

/// Plant-side configuration, including the controller/plant parameter
/// mismatch used to exercise the tube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSpec {
    pub model: PlantModel,
    /// Integration step of the nonlinear plant (s).
    pub dt: f64,
    /// Cornering stiffness scale applied to the plant only.
    pub stiffness_scale: f64,
    /// Mass scale applied to the plant only.
    pub mass_scale: f64,
    /// Proportional speed-regulator gain (1/s): total longitudinal force is
    /// `gain * mass * (v_ref - v)`, split evenly across wheels and clamped
    /// to half the friction budget per wheel.
    pub speed_gain: f64,
}

impl Default for PlantSpec {
    fn default() -> Self {
        Self {
            model: PlantModel::Nonlinear,
            dt: 1e-3,
            stiffness_scale: 1.0,
            mass_scale: 1.0,
            speed_gain: 0.5,
        }
    }
}

/// Output locations and trace options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Output directory. Overridable by `--out` and the `AWOISV_SIM_OUT`
    /// environment variable.
    pub dir: Option<PathBuf>,
    /// Also export the resampled path table next to the trace.
    pub write_path_csv: bool,
    /// Write zeros into the trace's solve-time column so that repeated runs
    /// are byte-identical; measured statistics still reach the summary.
    pub redact_timing: bool,
    /// Window length of the sliding standard deviation (samples).
    pub sliding_window: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            write_path_csv: false,
            redact_timing: false,
            sliding_window: 25,
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let sc: Scenario =
            serde_json::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.vehicle
            .validate()
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        self.controller
            .validate()
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        self.speed.validate()?;
        if self.duration.is_nan() || self.duration <= 0.0 {
            return Err(SimError::InvalidScenario(format!(
                "duration = {}",
                self.duration
            )));
        }
        if self.plant.dt.is_nan() || self.plant.dt <= 0.0 {
            return Err(SimError::InvalidScenario(format!(
                "plant dt = {}",
                self.plant.dt
            )));
        }
        let steps = self.controller.t_control / self.plant.dt;
        if (steps - steps.round()).abs() > 1e-9 || steps < 1.0 {
            return Err(SimError::InvalidScenario(format!(
                "control period {} not an integer multiple of plant dt {}",
                self.controller.t_control, self.plant.dt
            )));
        }
        if self.plant.model == PlantModel::NominalDiscrete
            && (self.controller.t_mpc - self.controller.t_control).abs() > 1e-12
        {
            return Err(SimError::InvalidScenario(
                "nominal-discrete plant requires t_control == t_mpc".into(),
            ));
        }
        if self.output.sliding_window < 2 {
            return Err(SimError::InvalidScenario(
                "sliding window must be >= 2".into(),
            ));
        }
        Ok(())
    }

    /// Plant-side vehicle parameters with the configured mismatch applied.
    pub fn plant_params(&self) -> VehicleParams {
        let mut p = self.vehicle.clone();
        p.cornering_stiffness *= self.plant.stiffness_scale;
        p.mass *= self.plant.mass_scale;
        p
    }
}

#[cfg(test)]
#[allow(clippy::field_reassign_with_default)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_json() {
        let sc = Scenario::default();
        let text = serde_json::to_string_pretty(&sc).unwrap();
        let back = Scenario::from_json(&text).unwrap();
        assert_eq!(sc, back);
    }

    #[test]
    fn speed_profile_interpolates() {
        let sp = SpeedProfile {
            points: vec![[0.0, 0.0], [10.0, 8.0]],
        };
        assert_eq!(sp.at(-1.0), 0.0);
        assert_eq!(sp.at(5.0), 4.0);
        assert_eq!(sp.at(20.0), 8.0);
    }

    #[test]
    fn validation_catches_errors() {
        let mut sc = Scenario::default();
        sc.duration = 0.0;
        assert!(sc.validate().is_err());

        let mut sc = Scenario::default();
        sc.speed = SpeedProfile {
            points: vec![[0.0, 20.0]],
        };
        assert!(sc.validate().is_err());

        let mut sc = Scenario::default();
        sc.plant.model = PlantModel::NominalDiscrete;
        assert!(sc.validate().is_err()); // t_control != t_mpc

        let mut sc = Scenario::default();
        sc.plant.dt = 0.003; // does not divide 0.02
        assert!(sc.validate().is_err());
    }

    #[test]
    fn plant_mismatch_scales() {
        let mut sc = Scenario::default();
        sc.plant.stiffness_scale = 0.8;
        sc.plant.mass_scale = 1.1;
        let p = sc.plant_params();
        assert!((p.cornering_stiffness - 32_000.0).abs() < 1e-9);
        assert!((p.mass - 11_000.0).abs() < 1e-9);
    }
}

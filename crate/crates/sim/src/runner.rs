//! The closed-loop scenario runner: plant integration, controller stepping,
//! disturbance injection, and trace emission.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use awoisv_core::{
    integrate_plant, wrap_angle, BodyStateVbr, GlobalPose, PlantState, ProcessDisturbance,
    SteerPose, VehicleParams,
};
use awoisv_mpc::{HeadingMode, TubeController};
use awoisv_path::{build_path, ReferencePath, DEFAULT_DS};
use awoisv_predict::{idx, StateVec};

use crate::metrics::{compute_metrics, trace_header, write_row, RunMetrics, TraceRow};
use crate::scenario::{PlantModel, Scenario};
use crate::SimError;

/// Result of one run. A controller halt is reported here (with the partial
/// trace already flushed), not as an error.
#[derive(Debug)]
pub struct RunOutcome {
    pub metrics: RunMetrics,
    pub rows: Vec<TraceRow>,
    pub trace_path: Option<PathBuf>,
    /// Populated when the controller halted before the configured duration.
    pub halted: Option<String>,
    pub path: ReferencePath,
}

/// Execute a scenario, writing the trace CSV under `out_dir` (unless `None`).
///
/// Deterministic for a fixed scenario and seed: the disturbance is redrawn
/// once per control period from a counter-based generator, and the plant
/// substep count per control period is fixed by validation.
pub fn run_scenario(scenario: &Scenario, out_dir: Option<&Path>) -> Result<RunOutcome, SimError> {
    scenario.validate()?;
    let path = build_path(&scenario.path, DEFAULT_DS)?;
    let controller_params = scenario.vehicle.clone();
    let plant_params = scenario.plant_params();
    let mut controller = TubeController::new(scenario.controller.clone(), controller_params)?;

    let mut writer = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let trace_path = dir.join(format!("{}_trace.csv", scenario.name));
            let file = fs::File::create(&trace_path)?;
            if scenario.output.write_path_csv {
                let path_file = fs::File::create(dir.join(format!("{}_path.csv", scenario.name)))?;
                path.write_csv(BufWriter::new(path_file))?;
            }
            Some((BufWriter::new(file), trace_path))
        }
        None => None,
    };
    let wheel_labels: Vec<String> = scenario.vehicle.wheels().map(|w| w.label()).collect();
    if let Some((w, _)) = writer.as_mut() {
        writeln!(w, "{}", trace_header(&wheel_labels))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.disturbance.seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let draw_disturbance = |rng: &mut ChaCha8Rng| -> ProcessDisturbance {
        if !scenario.disturbance.is_active() {
            return ProcessDisturbance::default();
        }
        let d = &scenario.disturbance;
        let raw_beta: f64 = normal.sample(rng) * d.beta_dot_std;
        let raw_r: f64 = normal.sample(rng) * d.r_dot_std;
        ProcessDisturbance {
            beta_dot: raw_beta.clamp(-d.beta_dot_bound, d.beta_dot_bound),
            r_dot: raw_r.clamp(-d.r_dot_bound, d.r_dot_bound),
        }
    };
    let draw_noise = |rng: &mut ChaCha8Rng| -> StateVec {
        if !scenario.disturbance.has_measurement_noise() {
            return StateVec::zeros();
        }
        let d = &scenario.disturbance;
        StateVec::from_fn(|i, _| {
            let raw: f64 = normal.sample(rng) * d.measurement_noise_std[i];
            raw.clamp(-d.measurement_noise_bound[i], d.measurement_noise_bound[i])
        })
    };

    let v0 = scenario.speed.at(0.0);
    let start = path.sample(0.0)?;
    let mut plant = PlantState {
        body: BodyStateVbr {
            v: v0,
            beta: 0.0,
            r: 0.0,
        },
        pose: GlobalPose {
            x: start.x,
            y: start.y,
            psi: start.heading,
        },
    };
    // Frenet-coordinate plant for the nominal-discrete model.
    let mut frenet_plant = StateVec::from([0.0, 0.0, 0.0, 0.0, 0.0]);

    let substeps = (scenario.controller.t_control / scenario.plant.dt).round() as usize;
    let ticks = (scenario.duration / scenario.controller.t_control).round() as usize;
    let body_heading = scenario.controller.heading_mode == HeadingMode::Body;

    let mut rows: Vec<TraceRow> = Vec::with_capacity(ticks);
    let mut halted = None;
    let mut clamp_events = 0usize;

    for tick in 0..ticks {
        let t = tick as f64 * scenario.controller.t_control;
        let v_ref = scenario.speed.at(t);

        // True projected state, then the (possibly noisy) fed-back state.
        let x_true = match scenario.plant.model {
            PlantModel::Nonlinear => match controller.measure(&plant.pose, &plant.body, &path) {
                Ok(x) => x,
                Err(e) => {
                    halted = Some(format!("t = {t:.3}: {e}"));
                    break;
                }
            },
            PlantModel::NominalDiscrete => frenet_plant,
        };
        let x_fed = x_true + draw_noise(&mut rng);

        let v_t = match scenario.plant.model {
            PlantModel::Nonlinear => plant.body.v.clamp(awoisv_core::V_MIN * 1.5, 15.0),
            PlantModel::NominalDiscrete => v_ref.max(awoisv_core::V_MIN * 1.5),
        };
        let out = match controller.control_step_from_state(x_fed, &path, v_t) {
            Ok(out) => out,
            Err(e) => {
                halted = Some(format!("t = {t:.3}: {e}"));
                break;
            }
        };
        if out.clamped {
            clamp_events += 1;
        }

        // Record the row at the true plant state.
        let s_here = x_true[idx::S].clamp(0.0, path.length());
        let rel_ref = path.sample(s_here)?.rel_heading_ref;
        let (solve_time, qp_iters, qp_status) = match &out.solve {
            Some(info) => (
                if scenario.output.redact_timing {
                    0.0
                } else {
                    info.solve_time
                },
                info.iterations,
                info.status.to_string(),
            ),
            None => (0.0, 0, "-".to_string()),
        };
        let (row_pose, row_body) = match scenario.plant.model {
            PlantModel::Nonlinear => (plant.pose, plant.body),
            PlantModel::NominalDiscrete => {
                // Reconstruct a pose for the trace from the Frenet state.
                let sample = path.sample(s_here)?;
                let (px, py) = path.offset_point(s_here, frenet_plant[idx::D])?;
                let psi = wrap_angle(
                    sample.heading + frenet_plant[idx::HEAD_ERR] - frenet_plant[idx::BETA],
                );
                (
                    GlobalPose { x: px, y: py, psi },
                    BodyStateVbr {
                        v: v_ref,
                        beta: frenet_plant[idx::BETA],
                        r: frenet_plant[idx::R],
                    },
                )
            }
        };
        let row = TraceRow {
            t,
            x: row_pose.x,
            y: row_pose.y,
            psi: row_pose.psi,
            v: row_body.v,
            beta: row_body.beta,
            r: row_body.r,
            s: x_true[idx::S],
            d: x_true[idx::D],
            heading_err: x_true[idx::HEAD_ERR],
            theta_r: out.u[0],
            beta_r: out.u[1],
            wheel_deltas: out.wheel_deltas.clone(),
            e_hat: [
                out.e_hat[0],
                out.e_hat[1],
                out.e_hat[2],
                out.e_hat[3],
                out.e_hat[4],
            ],
            solve_time,
            qp_iters,
            qp_status,
            rel_heading_ref: rel_ref,
        };
        if let Some((w, _)) = writer.as_mut() {
            writeln!(w, "{}", write_row(&row))?;
        }
        rows.push(row);

        // Advance the plant by one control period.
        let disturbance = draw_disturbance(&mut rng);
        match scenario.plant.model {
            PlantModel::Nonlinear => {
                let pose_cmd = SteerPose {
                    theta_r: out.u[0],
                    beta_r: out.u[1],
                };
                let fx = speed_regulator_forces(&plant_params, plant.body.v, v_ref, scenario);
                for _ in 0..substeps {
                    plant = integrate_plant(
                        &plant,
                        &pose_cmd,
                        &fx,
                        &plant_params,
                        scenario.plant.dt,
                        disturbance,
                    )?;
                }
                if plant.body.v > 20.0 || !plant.body.v.is_finite() {
                    halted = Some(format!("t = {t:.3}: plant diverged, v = {}", plant.body.v));
                    break;
                }
            }
            PlantModel::NominalDiscrete => {
                if let Some(step) = controller.current_linearization() {
                    let mut next = step.a * frenet_plant + step.b * out.u + step.c;
                    // Disturbance enters the state directly at this level.
                    next[idx::BETA] += disturbance.beta_dot * scenario.controller.t_control;
                    next[idx::R] += disturbance.r_dot * scenario.controller.t_control;
                    frenet_plant = next;
                }
            }
        }
    }

    if let Some((w, _)) = writer.as_mut() {
        w.flush()?;
    }

    if rows.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    let mut metrics = compute_metrics(
        &rows,
        body_heading,
        scenario.output.sliding_window.min(rows.len()),
        scenario.controller.beta_max,
        scenario.controller.r_max,
    )?;
    metrics.input_clamp_events = clamp_events;

    Ok(RunOutcome {
        metrics,
        rows,
        trace_path: writer.map(|(_, p)| p),
        halted,
        path,
    })
}

/// Per-wheel longitudinal forces of the proportional speed regulator,
/// clamped to half the friction budget per wheel.
pub fn speed_regulator_forces(
    params: &VehicleParams,
    v: f64,
    v_ref: f64,
    scenario: &Scenario,
) -> Vec<f64> {
    let total = scenario.plant.speed_gain * params.mass * (v_ref - v);
    let per_wheel = total / params.wheel_count() as f64;
    let limit = 0.5 * params.friction * params.static_wheel_load();
    vec![per_wheel.clamp(-limit, limit); params.wheel_count()]
}

/// Re-integrate the plant open loop with the commands recorded in a trace,
/// returning the maximum state deviation from the recorded rows. With the
/// disturbance off this must reproduce the run to integration precision.
pub fn replay_open_loop(scenario: &Scenario, rows: &[TraceRow]) -> Result<f64, SimError> {
    if scenario.plant.model != PlantModel::Nonlinear {
        return Err(SimError::InvalidScenario(
            "replay applies to the nonlinear plant".into(),
        ));
    }
    let path = build_path(&scenario.path, DEFAULT_DS)?;
    let plant_params = scenario.plant_params();
    let start = path.sample(0.0)?;
    let mut plant = PlantState {
        body: BodyStateVbr {
            v: scenario.speed.at(0.0),
            beta: 0.0,
            r: 0.0,
        },
        pose: GlobalPose {
            x: start.x,
            y: start.y,
            psi: start.heading,
        },
    };
    let substeps = (scenario.controller.t_control / scenario.plant.dt).round() as usize;
    let mut max_dev: f64 = 0.0;
    for row in rows {
        max_dev = max_dev
            .max((plant.pose.x - row.x).abs())
            .max((plant.pose.y - row.y).abs())
            .max((plant.body.v - row.v).abs())
            .max((plant.body.beta - row.beta).abs())
            .max((plant.body.r - row.r).abs());
        let pose_cmd = SteerPose {
            theta_r: row.theta_r,
            beta_r: row.beta_r,
        };
        let v_ref = scenario.speed.at(row.t);
        let fx = speed_regulator_forces(&plant_params, plant.body.v, v_ref, scenario);
        for _ in 0..substeps {
            plant = integrate_plant(
                &plant,
                &pose_cmd,
                &fx,
                &plant_params,
                scenario.plant.dt,
                ProcessDisturbance::default(),
            )?;
        }
    }
    Ok(max_dev)
}

/// Convenience: run a scenario and recompute its metrics from the CSV text
/// it produced, for the exactness cross-check.
pub fn recompute_metrics_from_csv(
    csv_text: &str,
    path: &ReferencePath,
    scenario: &Scenario,
) -> Result<RunMetrics, SimError> {
    let mut rows = crate::metrics::parse_trace(csv_text, scenario.vehicle.wheel_count())?;
    for row in &mut rows {
        let s = row.s.clamp(0.0, path.length());
        row.rel_heading_ref = path.sample(s)?.rel_heading_ref;
    }
    compute_metrics(
        &rows,
        scenario.controller.heading_mode == HeadingMode::Body,
        scenario.output.sliding_window.min(rows.len()),
        scenario.controller.beta_max,
        scenario.controller.r_max,
    )
}

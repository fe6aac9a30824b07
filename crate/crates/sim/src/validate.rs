#![allow(clippy::field_reassign_with_default)]
//! Self-contained randomized invariant suites runnable from the CLI. Each
//! suite prints one pass/fail line; the runner returns whether all passed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use awoisv_core::{
    classify_mode, derivative_vbr, derivative_vxvyr, fiala_lateral_force, icr_from_steer_pose,
    steer_pose_from_icr, wheel_angles, ApproachSide, BodyStateVbr, IcrPosition, MotionMode,
    SteerPose, VehicleParams,
};
use awoisv_mpc::{kalman_hysteresis_update, ErrorFilterState, MpcConfig};
use awoisv_path::{build_path, PathSpec};
use awoisv_predict::{StateMat, StateVec};
use awoisv_qp::{QpProblem, QpSolver, QpStatus};
use nalgebra::{DMatrix, DVector};

use crate::scenario::Scenario;
use crate::SpeedProfile;

const HALF_PI: f64 = core::f64::consts::FRAC_PI_2;

struct Suite {
    name: &'static str,
    run: fn() -> Result<(), String>,
}

/// Run every suite, printing one line per suite. Returns true when all pass.
pub fn run_all() -> bool {
    let suites = [
        Suite {
            name: "steer-pose round trip",
            run: round_trip,
        },
        Suite {
            name: "wheel-ICR perpendicularity",
            run: perpendicularity,
        },
        Suite {
            name: "motion-mode consistency",
            run: mode_consistency,
        },
        Suite {
            name: "tire-model properties",
            run: tire_properties,
        },
        Suite {
            name: "dynamic-model equivalence",
            run: model_equivalence,
        },
        Suite {
            name: "prediction Jacobians",
            run: jacobian_fd,
        },
        Suite {
            name: "QP optimality residuals",
            run: qp_kkt,
        },
        Suite {
            name: "error-filter covariance",
            run: kalman_psd,
        },
        Suite {
            name: "hysteresis exactness",
            run: hysteresis,
        },
        Suite {
            name: "projection identity",
            run: projection_identity,
        },
        Suite {
            name: "deterministic replay",
            run: deterministic_replay,
        },
    ];
    let mut all_ok = true;
    for suite in &suites {
        match (suite.run)() {
            Ok(()) => println!("PASS {}", suite.name),
            Err(e) => {
                all_ok = false;
                println!("FAIL {}: {e}", suite.name);
            }
        }
    }
    all_ok
}

fn random_pose(rng: &mut ChaCha8Rng) -> SteerPose {
    loop {
        let theta_r = rng.random_range(-0.99 * HALF_PI..0.99 * HALF_PI);
        let beta_r = rng.random_range(-0.99 * HALF_PI..0.99 * HALF_PI);
        let pose = SteerPose { theta_r, beta_r };
        if theta_r == 0.0 {
            continue;
        }
        if (pose.c0().abs() - VehicleParams::default().half_track()).abs() > 1e-6 {
            return pose;
        }
    }
}

fn round_trip() -> Result<(), String> {
    let params = VehicleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..1000 {
        let pose = random_pose(&mut rng);
        let icr = icr_from_steer_pose(&pose, &params).map_err(|e| format!("case {case}: {e}"))?;
        let back = steer_pose_from_icr(&icr).map_err(|e| format!("case {case}: {e}"))?;
        if (back.theta_r - pose.theta_r).abs() > 1e-12 || (back.beta_r - pose.beta_r).abs() > 1e-12
        {
            return Err(format!("case {case}: round trip drifted"));
        }
    }
    Ok(())
}

fn perpendicularity() -> Result<(), String> {
    let params = VehicleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..1000 {
        let pose = random_pose(&mut rng);
        let icr = icr_from_steer_pose(&pose, &params).map_err(|e| format!("case {case}: {e}"))?;
        if let IcrPosition::Finite { b0, c0 } = icr {
            let ws = wheel_angles(&icr, &params, ApproachSide::FromBelow);
            for (w, angle) in params.wheels().zip(&ws.angles) {
                let (x, y) = params.wheel_position(w);
                if (c0 - y).abs() < 1e-9 {
                    continue;
                }
                let residual = angle.cos_delta * (b0 - x) + angle.sin_delta * (c0 - y);
                let scale = (b0 - x).hypot(c0 - y).max(1.0);
                if (residual / scale).abs() > 1e-10 {
                    return Err(format!("case {case}: residual {residual}"));
                }
            }
        }
    }
    Ok(())
}

fn mode_consistency() -> Result<(), String> {
    let params = VehicleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..1000 {
        let pose = random_pose(&mut rng);
        let mode = match classify_mode(&pose, &params) {
            Ok(m) => m,
            Err(_) => continue,
        };
        let expected = match icr_from_steer_pose(&pose, &params) {
            Ok(IcrPosition::Finite { b0, c0 }) => {
                if c0.abs() > params.half_track() {
                    MotionMode::LongitudinalSteering
                } else if b0 > params.rear_axle_x() && b0 < params.front_axle_x() {
                    MotionMode::PivotSteering
                } else {
                    MotionMode::LateralSteering
                }
            }
            _ => continue,
        };
        if mode != expected {
            return Err(format!("case {case}: {mode:?} vs {expected:?}"));
        }
    }
    Ok(())
}

fn tire_properties() -> Result<(), String> {
    let params = VehicleParams::default();
    let fz = params.static_wheel_load();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..1000 {
        let alpha = rng.random_range(-1.5..1.5);
        let fx = rng.random_range(-0.9..0.9) * params.friction * fz;
        let t = fiala_lateral_force(alpha, fz, fx, &params).map_err(|e| e.to_string())?;
        let t_neg = fiala_lateral_force(-alpha, fz, fx, &params).map_err(|e| e.to_string())?;
        if (t.fy + t_neg.fy).abs() > 1e-9 * t.fy_max.max(1.0) {
            return Err(format!("case {case}: odd symmetry broken"));
        }
        if t.fy.abs() > t.fy_max + 1e-9 {
            return Err(format!("case {case}: saturation bound broken"));
        }
    }
    Ok(())
}

fn model_equivalence() -> Result<(), String> {
    let params = VehicleParams::default();
    let pose = SteerPose::new(0.066, 0.2).map_err(|e| e.to_string())?;
    let fx = vec![150.0; params.wheel_count()];
    let dt = 1e-3;
    let mut vbr = BodyStateVbr {
        v: 5.0,
        beta: 0.1,
        r: 0.05,
    };
    let mut xy = vbr.to_xy();
    // RK4 on both formulations; Euler's coordinate-dependent truncation
    // error would mask the algebraic agreement being checked.
    let rk4_vbr = |s: &BodyStateVbr| -> Result<BodyStateVbr, String> {
        let f = |z: &BodyStateVbr| derivative_vbr(z, &pose, &fx, &params);
        let lift = |a: &BodyStateVbr, k: &BodyStateVbr, h: f64| BodyStateVbr {
            v: a.v + h * k.v,
            beta: a.beta + h * k.beta,
            r: a.r + h * k.r,
        };
        let k1 = f(s).map_err(|e| e.to_string())?;
        let k2 = f(&lift(s, &k1, 0.5 * dt)).map_err(|e| e.to_string())?;
        let k3 = f(&lift(s, &k2, 0.5 * dt)).map_err(|e| e.to_string())?;
        let k4 = f(&lift(s, &k3, dt)).map_err(|e| e.to_string())?;
        Ok(BodyStateVbr {
            v: s.v + dt / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
            beta: s.beta + dt / 6.0 * (k1.beta + 2.0 * k2.beta + 2.0 * k3.beta + k4.beta),
            r: s.r + dt / 6.0 * (k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r),
        })
    };
    let rk4_xy = |s: &awoisv_core::BodyStateXy| -> Result<awoisv_core::BodyStateXy, String> {
        let f = |z: &awoisv_core::BodyStateXy| derivative_vxvyr(z, &pose, &fx, &params);
        let lift = |a: &awoisv_core::BodyStateXy, k: &awoisv_core::BodyStateXy, h: f64| {
            awoisv_core::BodyStateXy {
                vx: a.vx + h * k.vx,
                vy: a.vy + h * k.vy,
                r: a.r + h * k.r,
            }
        };
        let k1 = f(s).map_err(|e| e.to_string())?;
        let k2 = f(&lift(s, &k1, 0.5 * dt)).map_err(|e| e.to_string())?;
        let k3 = f(&lift(s, &k2, 0.5 * dt)).map_err(|e| e.to_string())?;
        let k4 = f(&lift(s, &k3, dt)).map_err(|e| e.to_string())?;
        Ok(awoisv_core::BodyStateXy {
            vx: s.vx + dt / 6.0 * (k1.vx + 2.0 * k2.vx + 2.0 * k3.vx + k4.vx),
            vy: s.vy + dt / 6.0 * (k1.vy + 2.0 * k2.vy + 2.0 * k3.vy + k4.vy),
            r: s.r + dt / 6.0 * (k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r),
        })
    };
    for _ in 0..2000 {
        vbr = rk4_vbr(&vbr)?;
        xy = rk4_xy(&xy)?;
    }
    let as_vbr = xy.to_vbr();
    let err = (as_vbr.v - vbr.v)
        .abs()
        .max((as_vbr.beta - vbr.beta).abs())
        .max((as_vbr.r - vbr.r).abs());
    if err > 1e-6 {
        return Err(format!("trajectories diverged by {err}"));
    }
    Ok(())
}

fn jacobian_fd() -> Result<(), String> {
    // Central-difference Jacobians agree with an independent one-sided
    // difference to 1e-4 relative on randomized states.
    let params = VehicleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..1000 {
        let x = awoisv_predict::StateVec::from([
            rng.random_range(0.0..100.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-0.4..0.4),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.3..0.3),
        ]);
        let u = awoisv_predict::InputVec::from([
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.6..0.6),
        ]);
        let v = rng.random_range(1.0..10.0);
        let kappa = rng.random_range(-1.0 / 22.0..1.0 / 22.0);
        // Stay clear of the tire saturation kink, where the force law is
        // only piecewise smooth and divided differences straddle the corner.
        let pose = SteerPose {
            theta_r: u[0],
            beta_r: u[1],
        };
        let icr = match icr_from_steer_pose(&pose, &params) {
            Ok(icr) => icr,
            Err(_) => continue,
        };
        let ws = wheel_angles(&icr, &params, ApproachSide::FromBelow);
        let body = awoisv_core::BodyStateXy {
            vx: v * x[3].cos(),
            vy: v * x[3].sin(),
            r: x[4],
        };
        let slips = awoisv_core::tire_slip_angles(&body, &ws, &params);
        let alpha_sl = (3.0 * params.friction * params.static_wheel_load()
            / params.cornering_stiffness)
            .atan();
        if slips.alpha.iter().any(|a| a.abs() > 0.8 * alpha_sl) {
            continue;
        }
        let (a, b) = match awoisv_predict::jacobians(&x, &u, v, kappa, &params) {
            Ok(j) => j,
            Err(_) => continue,
        };
        let f0 = awoisv_predict::predict_derivative(&x, &u, v, kappa, &params)
            .map_err(|e| e.to_string())?;
        for j in 0..5 {
            let h = 1e-8 * x[j].abs().max(1.0);
            let mut xp = x;
            xp[j] += h;
            let fp = match awoisv_predict::predict_derivative(&xp, &u, v, kappa, &params) {
                Ok(f) => f,
                Err(_) => continue,
            };
            for i in 0..5 {
                let one_sided = (fp[i] - f0[i]) / h;
                let scale = a[(i, j)].abs().max(1e-3);
                if ((a[(i, j)] - one_sided) / scale).abs() > 1e-4 {
                    return Err(format!("case {case}: A[{i}][{j}] off"));
                }
            }
        }
        for j in 0..2 {
            let h = 1e-8 * u[j].abs().max(1.0);
            let mut up = u;
            up[j] += h;
            let fp = match awoisv_predict::predict_derivative(&x, &up, v, kappa, &params) {
                Ok(f) => f,
                Err(_) => continue,
            };
            for i in 0..5 {
                let one_sided = (fp[i] - f0[i]) / h;
                let scale = b[(i, j)].abs().max(1e-3);
                if ((b[(i, j)] - one_sided) / scale).abs() > 1e-4 {
                    return Err(format!("case {case}: B[{i}][{j}] off"));
                }
            }
        }
    }
    Ok(())
}

fn qp_kkt() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let solver = QpSolver::default();
    for case in 0..1000 {
        let n = 8;
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let mut h = &m * m.transpose();
        for i in 0..n {
            h[(i, i)] += 0.5;
        }
        let g = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let mut p = QpProblem::new(h, g);
        p.z_lb = DVector::from_element(n, -1.0);
        p.z_ub = DVector::from_element(n, 1.0);
        let sol = solver.solve(&p, None).map_err(|e| e.to_string())?;
        if sol.status != QpStatus::Optimal {
            return Err(format!("case {case}: status {:?}", sol.status));
        }
        if sol.dual_residual > 1e-5 || sol.primal_residual > 1e-5 {
            return Err(format!(
                "case {case}: residuals {} / {}",
                sol.primal_residual, sol.dual_residual
            ));
        }
    }
    Ok(())
}

fn kalman_psd() -> Result<(), String> {
    let cfg = MpcConfig::default();
    let mut filter = ErrorFilterState::new(&cfg);
    let a_e = StateMat::identity() * 0.9;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for step in 0..10_000 {
        let e = StateVec::from_fn(|i, _| 0.05 * rng.random_range(-1.0..1.0) * (i + 1) as f64);
        kalman_hysteresis_update(&mut filter, &e, &a_e, &cfg);
        if step % 1000 == 0 {
            let min = filter
                .p
                .symmetric_eigenvalues()
                .iter()
                .fold(f64::INFINITY, |m, &x| m.min(x));
            if min < -1e-12 {
                return Err(format!("step {step}: min eigenvalue {min}"));
            }
        }
    }
    Ok(())
}

fn hysteresis() -> Result<(), String> {
    let mut cfg = MpcConfig::default();
    cfg.kalman_r = [1e-12; 5];
    cfg.kalman_q = [1e-2; 5];
    cfg.hysteresis = [0.05; 5];
    let mut filter = ErrorFilterState::new(&cfg);
    let a_e = StateMat::identity();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut prev = kalman_hysteresis_update(
        &mut filter,
        &StateVec::from_fn(|_, _| rng.random_range(-0.2..0.2)),
        &a_e,
        &cfg,
    );
    for case in 0..1000 {
        // With a passthrough filter the pre-hold value equals the prediction
        // update; a component may change only by at least its threshold.
        let e = StateVec::from_fn(|_, _| rng.random_range(-0.2..0.2));
        let out = kalman_hysteresis_update(&mut filter, &e, &a_e, &cfg);
        for i in 0..5 {
            let moved = (out[i] - prev[i]).abs();
            if moved > 1e-12 && moved < cfg.hysteresis[i] - 1e-9 {
                return Err(format!(
                    "case {case}: component {i} moved {moved} below threshold"
                ));
            }
        }
        prev = out;
    }
    Ok(())
}

fn projection_identity() -> Result<(), String> {
    let path = build_path(
        &PathSpec::SinusoidalCurvature {
            lead_in: 20.0,
            wave_length: 80.0,
            cycles: 3.0,
            min_radius: 22.0,
            rel_heading_amplitude_deg: 30.0,
            rel_heading_phase_deg: 90.0,
        },
        0.1,
    )
    .map_err(|e| e.to_string())?;
    let max_d = 0.5 / path.max_abs_curvature();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..1000 {
        let s = rng.random_range(1.0..path.length() - 1.0);
        let d = rng.random_range(-0.95..0.95) * max_d;
        let (px, py) = path.offset_point(s, d).map_err(|e| e.to_string())?;
        let f = path
            .project(px, py, 0.0, Some(s - 1.0))
            .map_err(|e| format!("case {case}: {e}"))?;
        if (f.s - s).abs() > 1e-6 || (f.d - d).abs() > 1e-6 {
            return Err(format!("case {case}: ({s}, {d}) -> ({}, {})", f.s, f.d));
        }
    }
    Ok(())
}

fn deterministic_replay() -> Result<(), String> {
    // 20 s at the control rate gives 1000 compared rows per run pair.
    let mut sc = Scenario::default();
    sc.duration = 20.0;
    sc.speed = SpeedProfile::constant(5.0);
    sc.disturbance.seed = 42;
    sc.disturbance.beta_dot_std = 0.02;
    sc.disturbance.r_dot_std = 0.01;
    sc.disturbance.beta_dot_bound = 0.06;
    sc.disturbance.r_dot_bound = 0.03;
    sc.output.redact_timing = true;
    let run = |sc: &Scenario| -> Result<String, String> {
        let outcome = crate::run_scenario(sc, None).map_err(|e| e.to_string())?;
        Ok(outcome
            .rows
            .iter()
            .map(crate::metrics::write_row)
            .collect::<Vec<_>>()
            .join("\n"))
    };
    let first = run(&sc)?;
    let second = run(&sc)?;
    if first != second {
        return Err("repeated run differs".into());
    }
    Ok(())
}

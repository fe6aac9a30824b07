#![allow(clippy::field_reassign_with_default)]

//! Acceptance suite: every headline requirement of the artifact, each as one
//! test printing a single pass/fail line with its measured numbers. The
//! tolerances are pinned here, not configurable.

use std::sync::{Mutex, OnceLock, PoisonError};
use std::time::Instant;

use awoisv_core::{derivative_vbr, derivative_vxvyr, BodyStateVbr, SteerPose, VehicleParams};
use awoisv_mpc::{HeadingMode, Variant};
use awoisv_path::PathSpec;
use awoisv_sim::{
    characterize, run_scenario, validate, CharacterizeGrid, PlantModel, RunMetrics, Scenario,
    SpeedProfile, SteerTrend,
};

/// Case-1 style scenario: sinusoidal curvature (radius reaching ±22 m) with
/// a ±30 deg relative-heading profile in quadrature, body-heading tracking.
fn case1(v: f64) -> Scenario {
    let mut sc = Scenario::default();
    sc.name = format!("acceptance_case1_{v}");
    sc.path = PathSpec::SinusoidalCurvature {
        lead_in: 20.0,
        wave_length: 80.0,
        cycles: 6.0,
        min_radius: 22.0,
        rel_heading_amplitude_deg: 30.0,
        rel_heading_phase_deg: 90.0,
    };
    sc.speed = SpeedProfile::constant(v);
    sc.controller.heading_mode = HeadingMode::Body;
    sc.duration = 60.0;
    sc
}

/// The criteria assert wall-clock budgets, so they must not compete with
/// each other for cores; every test serializes on this lock.
fn serial() -> std::sync::MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(PoisonError::into_inner)
}

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion}: {detail}");
}

#[test]
fn criterion_1_case1_tracking_bounds() {
    let _guard = serial();
    let started = Instant::now();
    let sc = case1(8.0);
    let outcome = run_scenario(&sc, None).unwrap();
    let wall = started.elapsed().as_secs_f64();
    let m = &outcome.metrics;
    let pass = outcome.halted.is_none()
        && m.lateral_error_max <= 0.15
        && m.heading_error_max <= 7f64.to_radians()
        && wall <= 60.0;
    report(
        "criterion 1 (tracking bounds at 8 m/s)",
        pass,
        &format!(
            "max |d| = {:.4} m (<= 0.15), max heading err = {:.2} deg (<= 7), wall = {:.1} s (<= 60)",
            m.lateral_error_max,
            m.heading_error_max.to_degrees(),
            wall
        ),
    );
}

/// Criterion-2/3 conditions: 5 m/s, plant stiffness at 80%, process
/// disturbance and measurement noise bounded at the configured error-bound
/// levels, filter measurement variance matched to the injected noise, holds
/// at half the error bound.
fn mismatch_scenario(variant: Variant) -> Scenario {
    let me: [f64; 5] = [0.0, 0.075, 0.022, 0.022, 0.009];
    let mut sc = case1(5.0);
    sc.name = format!("acceptance_case2_{variant}");
    sc.controller.variant = variant;
    sc.plant.stiffness_scale = 0.8;
    sc.disturbance.seed = 7;
    sc.disturbance.beta_dot_std = 0.4;
    sc.disturbance.beta_dot_bound = 0.7;
    sc.disturbance.r_dot_std = 0.16;
    sc.disturbance.r_dot_bound = 0.288;
    let mut noise_std = [0.0; 5];
    let mut kalman_r = [0.0; 5];
    let mut hysteresis = [0.0; 5];
    for i in 0..5 {
        noise_std[i] = 0.5 * me[i];
        kalman_r[i] = (0.5 * me[i]).powi(2).max(1e-12);
        hysteresis[i] = 0.5 * me[i];
    }
    sc.disturbance.measurement_noise_std = noise_std;
    sc.disturbance.measurement_noise_bound = me;
    sc.controller.kalman_r = kalman_r;
    sc.controller.hysteresis = hysteresis;
    sc
}

struct VariantComparison {
    ltv: RunMetrics,
    tube: RunMetrics,
    filtered: RunMetrics,
}

fn variant_comparison() -> &'static VariantComparison {
    static RESULTS: OnceLock<VariantComparison> = OnceLock::new();
    RESULTS.get_or_init(|| {
        let run = |variant: Variant| {
            let outcome = run_scenario(&mismatch_scenario(variant), None).unwrap();
            assert!(
                outcome.halted.is_none(),
                "{variant} halted: {:?}",
                outcome.halted
            );
            outcome.metrics
        };
        VariantComparison {
            ltv: run(Variant::Ltvmpc),
            tube: run(Variant::TubeLtvmpc),
            filtered: run(Variant::FilteredTubeLtvmpc),
        }
    })
}

#[test]
fn criterion_2_variant_tracking_ordering() {
    let _guard = serial();
    let c = variant_comparison();
    let pass = c.tube.lateral_error_median < c.ltv.lateral_error_median
        && c.filtered.lateral_error_median < c.ltv.lateral_error_median;
    report(
        "criterion 2 (tube variants beat the nominal controller)",
        pass,
        &format!(
            "median |d|: LTVMPC {:.4}, T-LTVMPC {:.4}, FT-LTVMPC {:.4}",
            c.ltv.lateral_error_median,
            c.tube.lateral_error_median,
            c.filtered.lateral_error_median
        ),
    );
}

#[test]
fn criterion_3_filtered_variant_is_smoother() {
    let _guard = serial();
    let c = variant_comparison();
    let pass = c.filtered.sliding_std_avg < c.tube.sliding_std_avg;
    report(
        "criterion 3 (filtering smooths the commands)",
        pass,
        &format!(
            "sliding std avg: T-LTVMPC {:.5}, FT-LTVMPC {:.5}",
            c.tube.sliding_std_avg, c.filtered.sliding_std_avg
        ),
    );
}

#[test]
fn criterion_4_real_time_budget() {
    let _guard = serial();
    let sc = case1(8.0);
    // One retry absorbs scheduler noise in the wall-clock maximum; the
    // budget is about solver capability, not the test box's load spikes.
    let mut m = run_scenario(&sc, None).unwrap().metrics;
    if !(m.solve_time_mean < 0.020 && m.solve_time_max < 0.050) {
        m = run_scenario(&sc, None).unwrap().metrics;
    }
    let m = &m;
    let pass = m.solve_time_mean < 0.020 && m.solve_time_max < 0.050;
    report(
        "criterion 4 (optimization stays in the control budget)",
        pass,
        &format!(
            "mean solve = {:.2} ms (< 20), max = {:.2} ms (< 50), N = {}",
            1e3 * m.solve_time_mean,
            1e3 * m.solve_time_max,
            sc.controller.horizon
        ),
    );
}

#[test]
fn criterion_5_model_equivalence() {
    let _guard = serial();
    // Both dynamic formulations integrated in their own coordinates for
    // 10 s at 1 ms agree within 1e-6 after the transform; the check itself
    // must be quick.
    let started = Instant::now();
    let params = VehicleParams::default();
    let pose = SteerPose::new(0.066, 0.2).unwrap();
    let fx = vec![150.0; params.wheel_count()];
    let dt = 1e-3;
    let mut vbr = BodyStateVbr {
        v: 5.0,
        beta: 0.1,
        r: 0.05,
    };
    let mut xy = vbr.to_xy();
    for _ in 0..10_000 {
        let f = |z: &BodyStateVbr| derivative_vbr(z, &pose, &fx, &params).unwrap();
        let lift = |a: &BodyStateVbr, k: &BodyStateVbr, h: f64| BodyStateVbr {
            v: a.v + h * k.v,
            beta: a.beta + h * k.beta,
            r: a.r + h * k.r,
        };
        let k1 = f(&vbr);
        let k2 = f(&lift(&vbr, &k1, 0.5 * dt));
        let k3 = f(&lift(&vbr, &k2, 0.5 * dt));
        let k4 = f(&lift(&vbr, &k3, dt));
        vbr = BodyStateVbr {
            v: vbr.v + dt / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
            beta: vbr.beta + dt / 6.0 * (k1.beta + 2.0 * k2.beta + 2.0 * k3.beta + k4.beta),
            r: vbr.r + dt / 6.0 * (k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r),
        };
        let g = |z: &awoisv_core::BodyStateXy| derivative_vxvyr(z, &pose, &fx, &params).unwrap();
        let liftx = |a: &awoisv_core::BodyStateXy, k: &awoisv_core::BodyStateXy, h: f64| {
            awoisv_core::BodyStateXy {
                vx: a.vx + h * k.vx,
                vy: a.vy + h * k.vy,
                r: a.r + h * k.r,
            }
        };
        let k1 = g(&xy);
        let k2 = g(&liftx(&xy, &k1, 0.5 * dt));
        let k3 = g(&liftx(&xy, &k2, 0.5 * dt));
        let k4 = g(&liftx(&xy, &k3, dt));
        xy = awoisv_core::BodyStateXy {
            vx: xy.vx + dt / 6.0 * (k1.vx + 2.0 * k2.vx + 2.0 * k3.vx + k4.vx),
            vy: xy.vy + dt / 6.0 * (k1.vy + 2.0 * k2.vy + 2.0 * k3.vy + k4.vy),
            r: xy.r + dt / 6.0 * (k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r),
        };
    }
    let as_vbr = xy.to_vbr();
    let err = (as_vbr.v - vbr.v)
        .abs()
        .max((as_vbr.beta - vbr.beta).abs())
        .max((as_vbr.r - vbr.r).abs());
    let wall = started.elapsed().as_secs_f64();
    let pass = err < 1e-6 && wall < 5.0;
    report(
        "criterion 5 (dynamic formulations agree over 10 s)",
        pass,
        &format!("max error = {err:.3e} (< 1e-6), wall = {wall:.2} s (< 5)"),
    );
}

#[test]
fn criterion_6_steady_state_characterization() {
    let _guard = serial();
    let params = VehicleParams::default();
    let grids = CharacterizeGrid::reference_grids();
    let mut detail = String::new();
    let mut pass = true;
    for grid in &grids {
        let report_data = characterize(grid, &params, 0.5).unwrap();
        for row in &report_data.rows {
            assert_eq!(row.points.len(), 5, "five speeds per row");
            let sign = row.beta_r.signum() * grid.theta_r.signum();
            let ok = if row.beta_r == 0.0 {
                // Neutral: radius varies under 3% across the speed range.
                row.radius_variation < 0.03
            } else if sign > 0.0 {
                // Same sign: understeer (or neutral within tolerance).
                row.trend != SteerTrend::Oversteer
            } else {
                row.trend != SteerTrend::Understeer
            };
            if !ok {
                pass = false;
            }
            detail.push_str(&format!(
                "{} beta_r {:+.0} deg -> {:?} ({:.1}%); ",
                grid.name,
                row.beta_r.to_degrees(),
                row.trend,
                100.0 * row.radius_variation
            ));
        }
    }
    report(
        "criterion 6 (steady-state handling signs)",
        pass,
        detail.trim_end_matches("; "),
    );
}

#[test]
fn criterion_7_invariant_suites() {
    let _guard = serial();
    let started = Instant::now();
    let all_pass = validate::run_all();
    let wall = started.elapsed().as_secs_f64();
    let pass = all_pass && wall < 120.0;
    report(
        "criterion 7 (randomized invariant suites)",
        pass,
        &format!("all suites pass = {all_pass}, wall = {wall:.1} s (< 120)"),
    );
}

#[test]
fn criterion_8_zero_disturbance_collapse() {
    let _guard = serial();
    // Against the controller's own discrete model with disturbance, noise,
    // and mismatch all zero, the three variants must produce the same
    // closed-loop trajectory.
    let run = |variant: Variant| {
        let mut sc = Scenario::default();
        sc.name = format!("acceptance_collapse_{variant}");
        sc.path = PathSpec::SinusoidalCurvature {
            lead_in: 20.0,
            wave_length: 80.0,
            cycles: 3.0,
            min_radius: 40.0,
            rel_heading_amplitude_deg: 10.0,
            rel_heading_phase_deg: 90.0,
        };
        sc.speed = SpeedProfile::constant(10.0);
        sc.controller.heading_mode = HeadingMode::Body;
        sc.controller.variant = variant;
        sc.controller.t_control = 0.25;
        sc.controller.t_mpc = 0.25;
        sc.plant.model = PlantModel::NominalDiscrete;
        sc.duration = 25.0;
        let outcome = run_scenario(&sc, None).unwrap();
        assert!(outcome.halted.is_none(), "{variant} halted");
        outcome.rows
    };
    let ltv = run(Variant::Ltvmpc);
    let tube = run(Variant::TubeLtvmpc);
    let filtered = run(Variant::FilteredTubeLtvmpc);

    let max_gap = |a: &[awoisv_sim::TraceRow], b: &[awoisv_sim::TraceRow]| -> f64 {
        assert_eq!(a.len(), b.len());
        a.iter().zip(b).fold(0.0f64, |m, (x, y)| {
            m.max((x.s - y.s).abs())
                .max((x.d - y.d).abs())
                .max((x.heading_err - y.heading_err).abs())
                .max((x.beta - y.beta).abs())
                .max((x.r - y.r).abs())
                .max((x.theta_r - y.theta_r).abs())
                .max((x.beta_r - y.beta_r).abs())
        })
    };
    let gap_lt = max_gap(&ltv, &tube);
    let gap_lf = max_gap(&ltv, &filtered);
    let gap_tf = max_gap(&tube, &filtered);
    let pass = gap_lt < 1e-9 && gap_lf < 1e-9 && gap_tf < 1e-9;
    report(
        "criterion 8 (variants collapse without disturbance)",
        pass,
        &format!("max gaps: LTV/T = {gap_lt:.2e}, LTV/FT = {gap_lf:.2e}, T/FT = {gap_tf:.2e}"),
    );
}

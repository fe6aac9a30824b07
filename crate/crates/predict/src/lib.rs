//! Predictive model of the tracking problem in Frenet coordinates, its
//! linear time-varying approximation, and the successive-linearization
//! horizon builder.
//!
//! The prediction state is `x = [s, d, heading_err, beta, r]`: arc length,
//! signed lateral offset, velocity-heading error to the path tangent,
//! sideslip, and yaw rate. Controls are the two steering angles
//! `u = [theta_r, beta_r]`. Forward speed is a quasi-static parameter over
//! the horizon and longitudinal tire forces are neglected, which decouples
//! path tracking from speed tracking.

use nalgebra::{SMatrix, SVector};
use thiserror::Error;

use awoisv_core::{derivative_vbr, BodyStateVbr, CoreError, SteerPose, VehicleParams, V_MIN};
use awoisv_path::{PathError, ReferencePath};

/// Number of prediction states.
pub const N_X: usize = 5;
/// Number of control inputs.
pub const N_U: usize = 2;

pub type StateVec = SVector<f64, N_X>;
pub type InputVec = SVector<f64, N_U>;
pub type StateMat = SMatrix<f64, N_X, N_X>;
pub type InputMat = SMatrix<f64, N_X, N_U>;

/// State component indices.
pub mod idx {
    /// Arc length along the path (m).
    pub const S: usize = 0;
    /// Signed lateral offset (m), left positive.
    pub const D: usize = 1;
    /// Velocity-heading error to the path tangent (rad).
    pub const HEAD_ERR: usize = 2;
    /// Sideslip angle (rad).
    pub const BETA: usize = 3;
    /// Yaw rate (rad/s).
    pub const R: usize = 4;
    /// Steering radius angle input (rad).
    pub const THETA_R: usize = 0;
    /// Commanded sideslip input (rad).
    pub const BETA_R: usize = 1;
}

/// Minimum admissible value of `1 - d * kappa`; closer to the curvature
/// center the Frenet chart degenerates.
pub const CURVATURE_TUBE_MIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictError {
    #[error("forward speed {0} at or below v_min")]
    LowSpeed(f64),
    #[error("curvature tube violated: 1 - d*kappa = {0} <= {CURVATURE_TUBE_MIN}")]
    CurvatureTube(f64),
    #[error("horizon too short: N = {0}")]
    HorizonTooShort(usize),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Path(#[from] PathError),
}

/// One discretized linearization point:
/// `x(k+1) = a * x(k) + b * u(k) + c`.
///
/// The affine residual `c` makes the relation exact at the linearization
/// point, where the model was expanded about a non-equilibrium state.
#[derive(Debug, Clone, PartialEq)]
pub struct LtvStep {
    pub a: StateMat,
    pub b: InputMat,
    pub c: StateVec,
    /// State the step was linearized at.
    pub x_lin: StateVec,
    /// Input the step was linearized at.
    pub u_lin: InputVec,
    /// Quasi-static forward speed (m/s).
    pub v_t: f64,
    /// Path curvature at the predicted arc length (1/m).
    pub kappa: f64,
    /// Reference relative heading at the predicted arc length (rad).
    pub rel_heading_ref: f64,
}

/// Time derivative of the prediction state.
///
/// The sideslip and yaw-rate channels are the force-free body dynamics at
/// speed `v_t`; the kinematic channels follow the Frenet chart:
/// `ds = v cos(e) / (1 - d k)`, `dd = v sin(e)`,
/// `de = r + dbeta - k ds`.
pub fn predict_derivative(
    x: &StateVec,
    u: &InputVec,
    v_t: f64,
    kappa: f64,
    params: &VehicleParams,
) -> Result<StateVec, PredictError> {
    if v_t <= V_MIN {
        return Err(PredictError::LowSpeed(v_t));
    }
    let denom = 1.0 - x[idx::D] * kappa;
    if denom <= CURVATURE_TUBE_MIN {
        return Err(PredictError::CurvatureTube(denom));
    }
    let pose = SteerPose::new(u[idx::THETA_R], u[idx::BETA_R])?;
    let body = BodyStateVbr {
        v: v_t,
        beta: x[idx::BETA],
        r: x[idx::R],
    };
    let fx = vec![0.0; params.wheel_count()];
    let d_body = derivative_vbr(&body, &pose, &fx, params)?;

    let head_err = x[idx::HEAD_ERR];
    let ds = v_t * head_err.cos() / denom;
    let dd = v_t * head_err.sin();
    let dhead = x[idx::R] + d_body.beta - kappa * ds;

    Ok(StateVec::from([ds, dd, dhead, d_body.beta, d_body.r]))
}

/// Continuous-time Jacobians of [`predict_derivative`] by central finite
/// differences with per-component steps `1e-6 * max(1, |z_j|)`.
pub fn jacobians(
    x0: &StateVec,
    u0: &InputVec,
    v_t: f64,
    kappa: f64,
    params: &VehicleParams,
) -> Result<(StateMat, InputMat), PredictError> {
    let mut a = StateMat::zeros();
    for j in 0..N_X {
        let h = 1e-6 * x0[j].abs().max(1.0);
        let mut xp = *x0;
        let mut xm = *x0;
        xp[j] += h;
        xm[j] -= h;
        let fp = predict_derivative(&xp, u0, v_t, kappa, params)?;
        let fm = predict_derivative(&xm, u0, v_t, kappa, params)?;
        a.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    let mut b = InputMat::zeros();
    for j in 0..N_U {
        let h = 1e-6 * u0[j].abs().max(1.0);
        let mut up = *u0;
        let mut um = *u0;
        up[j] += h;
        um[j] -= h;
        let fp = predict_derivative(x0, &up, v_t, kappa, params)?;
        let fm = predict_derivative(x0, &um, v_t, kappa, params)?;
        b.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    Ok((a, b))
}

/// Forward-Euler discretization of the continuous linearization:
/// `a = I + a_t * t_mpc`, `b = b_t * t_mpc`, with the affine residual
/// `c = t_mpc * (f0 - a_t x0 - b_t u0)` so the step reproduces the nonlinear
/// derivative at the linearization point exactly.
pub fn discretize(
    a_t: &StateMat,
    b_t: &InputMat,
    f0: &StateVec,
    x0: &StateVec,
    u0: &InputVec,
    t_mpc: f64,
) -> (StateMat, InputMat, StateVec) {
    let a = StateMat::identity() + a_t * t_mpc;
    let b = b_t * t_mpc;
    let c = t_mpc * (f0 - a_t * x0 - b_t * u0);
    (a, b, c)
}

/// Build the LTV horizon by rolling the nonlinear model forward with a seed
/// control sequence, linearizing at every predicted point with the path
/// curvature and reference relative heading sampled at the predicted arc
/// length.
///
/// The rollout integrates each interval with substepped RK4 rather than one
/// forward-Euler step: the body modes are fast enough that a single Euler
/// step of the optimization period amplifies, which would push the
/// linearization points away from anything the plant can reach. Each step's
/// matrices still discretize by single-step forward Euler about its own
/// linearization point. Arc lengths past the end of the path clamp to the
/// final sample.
pub fn build_horizon(
    x0: &StateVec,
    u_seed: &[InputVec],
    path: &ReferencePath,
    v_t: f64,
    t_mpc: f64,
    n: usize,
    params: &VehicleParams,
) -> Result<Horizon, PredictError> {
    if n < 2 {
        return Err(PredictError::HorizonTooShort(n));
    }
    let mut steps = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n + 1);
    let mut x = *x0;
    states.push(x);
    const SUBSTEPS: usize = 8;
    for k in 0..n {
        let u = *u_seed.get(k).or(u_seed.last()).expect("non-empty seed");
        let s_clamped = x[idx::S].clamp(0.0, path.length());
        let sample = path.sample(s_clamped)?;
        let f0 = predict_derivative(&x, &u, v_t, sample.curvature, params)?;
        let (a_t, b_t) = jacobians(&x, &u, v_t, sample.curvature, params)?;
        let (a, b, c) = discretize(&a_t, &b_t, &f0, &x, &u, t_mpc);
        steps.push(LtvStep {
            a,
            b,
            c,
            x_lin: x,
            u_lin: u,
            v_t,
            kappa: sample.curvature,
            rel_heading_ref: sample.rel_heading_ref,
        });
        let h = t_mpc / SUBSTEPS as f64;
        for _ in 0..SUBSTEPS {
            let f = |z: &StateVec| predict_derivative(z, &u, v_t, sample.curvature, params);
            let k1 = f(&x)?;
            let k2 = f(&(x + 0.5 * h * k1))?;
            let k3 = f(&(x + 0.5 * h * k2))?;
            let k4 = f(&(x + h * k3))?;
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        states.push(x);
    }
    Ok(Horizon { steps, states })
}

/// LTV steps over the prediction horizon plus the nonlinear rollout they
/// were linearized on. `states[k]` is the rollout state entering step `k`;
/// `states[n]` is the terminal state.
#[derive(Debug, Clone, PartialEq)]
pub struct Horizon {
    pub steps: Vec<LtvStep>,
    pub states: Vec<StateVec>,
}

impl Horizon {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Time span covered by the horizon (s).
    pub fn span(&self, t_mpc: f64) -> f64 {
        self.len() as f64 * t_mpc
    }
}

/// Constant seed input matching the path curvature at the current position,
/// used before a previous optimal sequence exists: the steering radius angle
/// whose cotangent is the curvature radius, and no commanded sideslip.
pub fn curvature_matched_seed(kappa: f64) -> InputVec {
    InputVec::from([f64::atan(kappa), 0.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use awoisv_path::{build_path, PathSpec};

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn straight_aligned_state_moves_forward_only() {
        let p = params();
        let x = StateVec::zeros();
        let u = InputVec::zeros();
        let f = predict_derivative(&x, &u, 5.0, 0.0, &p).unwrap();
        assert!((f[idx::S] - 5.0).abs() < 1e-12);
        for i in 1..N_X {
            assert!(f[i].abs() < 1e-12, "component {i} = {}", f[i]);
        }
    }

    #[test]
    fn body_channels_match_core_dynamics() {
        let p = params();
        let x = StateVec::from([10.0, 0.3, 0.1, -0.2, 0.15]);
        let u = InputVec::from([0.05, -0.3]);
        let f = predict_derivative(&x, &u, 4.0, 1.0 / 30.0, &p).unwrap();
        let d = derivative_vbr(
            &BodyStateVbr {
                v: 4.0,
                beta: x[idx::BETA],
                r: x[idx::R],
            },
            &SteerPose::new(u[0], u[1]).unwrap(),
            &vec![0.0; p.wheel_count()],
            &p,
        )
        .unwrap();
        assert!((f[idx::BETA] - d.beta).abs() < 1e-12);
        assert!((f[idx::R] - d.r).abs() < 1e-12);
    }

    #[test]
    fn guards_fire() {
        let p = params();
        let u = InputVec::zeros();
        assert!(matches!(
            predict_derivative(&StateVec::zeros(), &u, 0.05, 0.0, &p),
            Err(PredictError::LowSpeed(_))
        ));
        let mut x = StateVec::zeros();
        x[idx::D] = 20.0;
        assert!(matches!(
            predict_derivative(&x, &u, 5.0, 1.0 / 22.0, &p),
            Err(PredictError::CurvatureTube(_))
        ));
    }

    #[test]
    fn steady_cornering_balances_frenet_rates() {
        // Find the steering command whose steady-state yaw rate matches the
        // path curvature at speed v; at that equilibrium the lateral-offset
        // and heading-error rates must both vanish.
        let p = params();
        let v = 5.0;
        let kappa: f64 = 1.0 / 30.0;

        // Steady (beta, r) for a fixed command, by integrating the body
        // channels to convergence.
        let settle = |theta_r: f64| -> (f64, f64) {
            let u = InputVec::from([theta_r, 0.0]);
            let mut beta = 0.0;
            let mut r = 0.0;
            let dt = 2e-3;
            for _ in 0..200_000 {
                let x = StateVec::from([0.0, 0.0, 0.0, beta, r]);
                let d = predict_derivative(&x, &u, v, kappa, &p).unwrap();
                beta += dt * d[idx::BETA];
                r += dt * d[idx::R];
                if d[idx::BETA].abs() < 1e-12 && d[idx::R].abs() < 1e-12 {
                    break;
                }
            }
            (beta, r)
        };

        // Secant iteration on theta_r for r_steady = kappa * v.
        let target = kappa * v;
        let mut t0 = kappa.atan() * 0.8;
        let mut t1 = kappa.atan() * 1.2;
        let mut r0 = settle(t0).1 - target;
        for _ in 0..30 {
            let r1 = settle(t1).1 - target;
            if (r1 - r0).abs() < 1e-15 {
                break;
            }
            let t2 = t1 - r1 * (t1 - t0) / (r1 - r0);
            t0 = t1;
            r0 = r1;
            t1 = t2;
            if r1.abs() < 1e-11 {
                break;
            }
        }
        let (beta_ss, r_ss) = settle(t1);
        assert!((r_ss - target).abs() < 1e-9, "r {} vs {}", r_ss, target);

        let x = StateVec::from([0.0, 0.0, 0.0, beta_ss, r_ss]);
        let u = InputVec::from([t1, 0.0]);
        let d = predict_derivative(&x, &u, v, kappa, &p).unwrap();
        assert!(d[idx::D].abs() < 1e-9, "dd = {}", d[idx::D]);
        assert!(d[idx::HEAD_ERR].abs() < 1e-7, "de = {}", d[idx::HEAD_ERR]);
        assert!(d[idx::BETA].abs() < 1e-9);
        assert!(d[idx::R].abs() < 1e-9);
    }

    #[test]
    fn jacobian_s_row_matches_analytic() {
        let p = params();
        let kappa = 1.0 / 25.0;
        let x = StateVec::from([5.0, 0.8, 0.12, 0.05, 0.1]);
        let u = InputVec::from([0.04, 0.02]);
        let v = 6.0;
        let (a, _) = jacobians(&x, &u, v, kappa, &p).unwrap();
        let denom = 1.0 - x[idx::D] * kappa;
        let analytic = v * x[idx::HEAD_ERR].cos() * kappa / (denom * denom);
        assert!(
            (a[(idx::S, idx::D)] - analytic).abs() < 1e-6 * analytic.abs().max(1.0),
            "{} vs {analytic}",
            a[(idx::S, idx::D)]
        );
        // d(dd)/d(head_err) = v cos(head_err).
        let expect = v * x[idx::HEAD_ERR].cos();
        assert!((a[(idx::D, idx::HEAD_ERR)] - expect).abs() < 1e-6 * expect);
    }

    #[test]
    fn jacobian_dd_dhead_is_speed_at_aligned_state() {
        let p = params();
        let (a, _) = jacobians(&StateVec::zeros(), &InputVec::zeros(), 7.0, 0.0, &p).unwrap();
        assert!((a[(idx::D, idx::HEAD_ERR)] - 7.0).abs() < 1e-6);
    }

    #[test]
    fn jacobian_step_halving_is_stable() {
        // Richardson check: the central difference is already converged, so
        // halving the step changes entries only in the noise floor.
        let p = params();
        let x = StateVec::from([3.0, -0.4, 0.2, 0.1, -0.12]);
        let u = InputVec::from([0.06, -0.2]);
        let v = 5.0;
        let kappa = -1.0 / 40.0;
        let (a1, b1) = jacobians(&x, &u, v, kappa, &p).unwrap();

        let fd = |h_scale: f64| -> (StateMat, InputMat) {
            let mut a = StateMat::zeros();
            for j in 0..N_X {
                let h = h_scale * x[j].abs().max(1.0);
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                let fp = predict_derivative(&xp, &u, v, kappa, &p).unwrap();
                let fm = predict_derivative(&xm, &u, v, kappa, &p).unwrap();
                a.set_column(j, &((fp - fm) / (2.0 * h)));
            }
            let mut b = InputMat::zeros();
            for j in 0..N_U {
                let h = h_scale * u[j].abs().max(1.0);
                let mut up = u;
                let mut um = u;
                up[j] += h;
                um[j] -= h;
                let fp = predict_derivative(&x, &up, v, kappa, &p).unwrap();
                let fm = predict_derivative(&x, &um, v, kappa, &p).unwrap();
                b.set_column(j, &((fp - fm) / (2.0 * h)));
            }
            (a, b)
        };
        let (a2, b2) = fd(0.5e-6);
        for i in 0..N_X {
            for j in 0..N_X {
                let scale = a1[(i, j)].abs().max(1.0);
                assert!(
                    ((a1[(i, j)] - a2[(i, j)]) / scale).abs() < 1e-6,
                    "A[{i}][{j}]"
                );
            }
            for j in 0..N_U {
                let scale = b1[(i, j)].abs().max(1.0);
                assert!(
                    ((b1[(i, j)] - b2[(i, j)]) / scale).abs() < 1e-6,
                    "B[{i}][{j}]"
                );
            }
        }
    }

    #[test]
    fn jacobian_matches_one_sided_difference() {
        let p = params();
        let x = StateVec::from([2.0, 0.5, -0.15, 0.08, 0.2]);
        let u = InputVec::from([-0.05, 0.3]);
        let v = 4.0;
        let kappa = 1.0 / 35.0;
        let (a, b) = jacobians(&x, &u, v, kappa, &p).unwrap();
        let f0 = predict_derivative(&x, &u, v, kappa, &p).unwrap();
        for j in 0..N_X {
            let h = 1e-7 * x[j].abs().max(1.0);
            let mut xp = x;
            xp[j] += h;
            let fp = predict_derivative(&xp, &u, v, kappa, &p).unwrap();
            let one_sided = (fp - f0) / h;
            for i in 0..N_X {
                let scale = a[(i, j)].abs().max(1e-3);
                assert!(
                    ((a[(i, j)] - one_sided[i]) / scale).abs() < 1e-4,
                    "A[{i}][{j}]: {} vs {}",
                    a[(i, j)],
                    one_sided[i]
                );
            }
        }
        for j in 0..N_U {
            let h = 1e-7 * u[j].abs().max(1.0);
            let mut up = u;
            up[j] += h;
            let fp = predict_derivative(&x, &up, v, kappa, &p).unwrap();
            let one_sided = (fp - f0) / h;
            for i in 0..N_X {
                let scale = b[(i, j)].abs().max(1e-3);
                assert!(
                    ((b[(i, j)] - one_sided[i]) / scale).abs() < 1e-4,
                    "B[{i}][{j}]"
                );
            }
        }
    }

    #[test]
    fn discretize_identity_cases() {
        let (a, b, c) = discretize(
            &StateMat::zeros(),
            &InputMat::zeros(),
            &StateVec::zeros(),
            &StateVec::zeros(),
            &InputVec::zeros(),
            0.25,
        );
        assert_eq!(a, StateMat::identity());
        assert_eq!(b, InputMat::zeros());
        assert_eq!(c, StateVec::zeros());

        // Linearization point exactly on the linear model: residual vanishes.
        let a_t = StateMat::from_fn(|i, j| (i + 2 * j) as f64 * 0.01);
        let b_t = InputMat::from_fn(|i, j| (i + j) as f64 * 0.02);
        let x0 = StateVec::from([0.1, 0.2, 0.3, 0.4, 0.5]);
        let u0 = InputVec::from([0.6, 0.7]);
        let f0 = a_t * x0 + b_t * u0;
        let (_, _, c) = discretize(&a_t, &b_t, &f0, &x0, &u0, 0.25);
        assert!(c.amax() < 1e-15);
    }

    #[test]
    fn ltv_step_reproduces_nonlinear_derivative_at_linearization_point() {
        let p = params();
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
        .unwrap();
        let x0 = StateVec::from([10.0, 0.1, 0.02, 0.01, 0.03]);
        let seed = vec![InputVec::from([0.02, 0.01]); 20];
        let t_mpc = 0.25;
        let h = build_horizon(&x0, &seed, &path, 5.0, t_mpc, 20, &p).unwrap();
        assert_eq!(h.len(), 20);
        assert!((h.span(t_mpc) - 5.0).abs() < 1e-12);
        for (k, step) in h.steps.iter().enumerate() {
            // a x0 + b u0 + c = x0 + T f(x0, u0) exactly, by construction of
            // the affine residual.
            let f0 =
                predict_derivative(&step.x_lin, &step.u_lin, step.v_t, step.kappa, &p).unwrap();
            let reproduced = step.a * step.x_lin + step.b * step.u_lin + step.c;
            let expected = step.x_lin + t_mpc * f0;
            let err = (reproduced - expected).amax();
            assert!(err < 1e-12, "step {k}: {err}");
            // The rollout states stay bounded (the substepped integration
            // does not inherit the Euler step's amplification).
            assert!(h.states[k + 1].amax() < 1e3);
        }
    }

    #[test]
    fn straight_horizon_is_time_invariant() {
        let p = params();
        let path = build_path(
            &PathSpec::Line {
                length: 200.0,
                heading: 0.0,
            },
            0.1,
        )
        .unwrap();
        let h = build_horizon(
            &StateVec::zeros(),
            &[InputVec::zeros()],
            &path,
            5.0,
            0.25,
            10,
            &p,
        )
        .unwrap();
        for step in &h.steps[1..] {
            assert!((step.a - h.steps[0].a).amax() < 1e-9);
            assert!((step.b - h.steps[0].b).amax() < 1e-9);
        }
    }

    #[test]
    fn taylor_remainder_second_order() {
        // One-step LTV error against the nonlinear step, relative to the
        // baseline error at the linearization point, shrinks ~4x when the
        // state perturbation halves.
        let p = params();
        let v = 5.0;
        let kappa = 1.0 / 30.0;
        let t = 0.01;
        let x0 = StateVec::from([0.0, 0.2, 0.05, 0.02, v * kappa]);
        let u0 = InputVec::from([kappa.atan(), 0.0]);
        let f0 = predict_derivative(&x0, &u0, v, kappa, &p).unwrap();
        let (a_t, b_t) = jacobians(&x0, &u0, v, kappa, &p).unwrap();
        let (a, b, c) = discretize(&a_t, &b_t, &f0, &x0, &u0, t);

        let rk4 = |x: &StateVec| -> StateVec {
            let f = |z: &StateVec| predict_derivative(z, &u0, v, kappa, &p).unwrap();
            let k1 = f(x);
            let k2 = f(&(x + 0.5 * t * k1));
            let k3 = f(&(x + 0.5 * t * k2));
            let k4 = f(&(x + t * k3));
            x + t / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        };
        let base = a * x0 + b * u0 + c - rk4(&x0);
        let direction = StateVec::from([0.0, 1.0, 0.6, 0.4, 0.2]).normalize();
        let err = |scale: f64| -> f64 {
            let x = x0 + scale * direction;
            ((a * x + b * u0 + c - rk4(&x)) - base).norm()
        };
        let ratio = err(0.08) / err(0.04);
        assert!(
            (2.5..6.0).contains(&ratio),
            "expected ~4x shrink, got {ratio}"
        );
    }
}

//! Constraint tightening from the filtered-error bound and assembly of the
//! QP constraint system.

use nalgebra::{DMatrix, DVector, RowDVector, SMatrix};

use awoisv_core::{SteerPose, VehicleParams};
use awoisv_predict::{idx, InputVec, LtvStep, StateMat, StateVec, N_U, N_X};

use crate::cost::{heading_row, spectral_radius, CondensedModel, RefProfile};
use crate::{MpcConfig, MpcError, Variant};

const HALF_PI: f64 = core::f64::consts::FRAC_PI_2;

/// Tightened nominal constraint boxes: the raw state and input boxes shrunk
/// by the filtered-error bound and its image under the feedback gain.
#[derive(Debug, Clone, PartialEq)]
pub struct TightenedSets {
    /// Componentwise bound on the held filtered error.
    pub error_box: StateVec,
    /// Half-width of the nominal sideslip band (raw band minus tightening).
    pub beta_halfwidth: f64,
    /// Nominal yaw-rate bound.
    pub r_halfwidth: f64,
    /// Nominal input bounds per component.
    pub input_halfwidth: InputVec,
    /// Infinity norm of the filter contraction map, for diagnostics.
    pub contraction_norm: f64,
    /// Spectral radius of the entrywise-absolute contraction map.
    pub contraction_rho: f64,
}

impl TightenedSets {
    /// No tightening: the raw boxes.
    pub fn untightened(cfg: &MpcConfig) -> Self {
        Self {
            error_box: StateVec::zeros(),
            beta_halfwidth: cfg.beta_max,
            r_halfwidth: cfg.r_max,
            input_halfwidth: InputVec::from([HALF_PI, HALF_PI]),
            contraction_norm: 0.0,
            contraction_rho: 0.0,
        }
    }
}

/// Compute the tightened nominal sets for the tube variants.
///
/// The steady filter gain is found by iterating the covariance recursion
/// with the closed-loop error transition `a_e`; the componentwise bound on
/// the held filtered error is the fixed point of
/// `c = |(I - K) a_e| c + |K| (error_bound + measurement_bound)`
/// with zero measurement bound, solved exactly. The nominal boxes are the
/// raw boxes shrunk by that bound (and by its image under the feedback gain
/// on the input side), so any nominal-feasible plan keeps the true state and
/// applied input admissible while the filtered error stays in its box.
pub fn tighten_sets(
    cfg: &MpcConfig,
    a_e: &StateMat,
    k_e: &crate::GainMat,
) -> Result<TightenedSets, MpcError> {
    if cfg.variant == Variant::Ltvmpc {
        return Ok(TightenedSets::untightened(cfg));
    }
    let q = StateMat::from_fn(|i, j| if i == j { cfg.kalman_q[i] } else { 0.0 });
    let r = StateMat::from_fn(|i, j| if i == j { cfg.kalman_r[i] } else { 0.0 });

    // Steady-state filter gain.
    let mut p = q;
    let mut gain = StateMat::identity();
    for _ in 0..10_000 {
        let p_prior = a_e * p * a_e.transpose() + q;
        let inv = (p_prior + r)
            .try_inverse()
            .ok_or_else(|| MpcError::InvalidConfig("degenerate filter covariance".into()))?;
        gain = p_prior * inv;
        let i_kc = StateMat::identity() - gain;
        let p_next = i_kc * p_prior * i_kc.transpose() + gain * r * gain.transpose();
        let delta = (p_next - p).amax();
        p = 0.5 * (p_next + p_next.transpose());
        if delta < 1e-14 {
            break;
        }
    }

    // Contraction map of the held-error bound recursion.
    let m = (StateMat::identity() - gain) * a_e;
    let m_abs = StateMat::from_fn(|i, j| m[(i, j)].abs());
    let rho = spectral_radius(&DMatrix::from_fn(N_X, N_X, |i, j| m_abs[(i, j)]));
    let norm_inf = (0..N_X).fold(0.0f64, |acc, i| {
        acc.max((0..N_X).map(|j| m_abs[(i, j)]).sum())
    });
    if rho >= 1.0 {
        return Err(MpcError::ContractionViolated(rho));
    }

    // Exact fixed point: (I - |M|) c = |K| * error_bound.
    let k_abs = StateMat::from_fn(|i, j| gain[(i, j)].abs());
    let me = StateVec::from_fn(|i, _| cfg.error_bound[i]);
    let rhs = k_abs * me;
    let system = StateMat::identity() - m_abs;
    let c = system
        .full_piv_lu()
        .solve(&rhs)
        .ok_or(MpcError::ContractionViolated(rho))?;

    let beta_halfwidth = cfg.beta_max - c[idx::BETA];
    let r_halfwidth = cfg.r_max - c[idx::R];
    if beta_halfwidth <= 0.0 || r_halfwidth <= 0.0 {
        return Err(MpcError::EmptyTightenedSet(format!(
            "state box: beta {beta_halfwidth}, r {r_halfwidth}"
        )));
    }
    let k_e_abs = SMatrix::<f64, N_U, N_X>::from_fn(|i, j| k_e[(i, j)].abs());
    let input_shrink = k_e_abs * c;
    let input_halfwidth = InputVec::from([HALF_PI - input_shrink[0], HALF_PI - input_shrink[1]]);
    if input_halfwidth[0] <= 0.0 || input_halfwidth[1] <= 0.0 {
        return Err(MpcError::EmptyTightenedSet(format!(
            "input box: {input_halfwidth:?}"
        )));
    }

    Ok(TightenedSets {
        error_box: c,
        beta_halfwidth,
        r_halfwidth,
        input_halfwidth,
        contraction_norm: norm_inf,
        contraction_rho: rho,
    })
}

/// Assembled constraint system over `z = [v(0..N-1), slack_beta(0..N-1),
/// slack_r(1..N-1)]`, where `v` is the prestabilized input parameterization.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
    pub z_lb: DVector<f64>,
    pub z_ub: DVector<f64>,
    /// Number of slack variables appended after the controls.
    pub n_slack: usize,
}

/// Build the constraint rows for one solve.
///
/// Per step: the sideslip state must stay inside a band around the commanded
/// sideslip input and the yaw rate inside its bound (both tightened, both
/// softened by slacks); the inputs stay inside their tightened open domain
/// (hard); the commanded pose stays inside the longitudinal-steering region
/// through a linearization of `|tan(theta_r)| <= (2/track) cos(beta_r)`
/// (hard); and consecutive wheel angles respect the steering-rate limit
/// through the linearized wheel-angle map (hard). The terminal state is
/// boxed on the lateral offset and the tracked heading error.
#[allow(clippy::too_many_arguments)]
pub fn assemble_constraints(
    steps: &[LtvStep],
    condensed: &CondensedModel,
    reference: &RefProfile,
    cfg: &MpcConfig,
    tightened: &TightenedSets,
    u_now: &InputVec,
    params: &VehicleParams,
) -> Result<ConstraintSet, MpcError> {
    let n = steps.len();
    let nu = n * N_U;
    let n_slack_beta = n; // one per step, k = 0..N-1
    let n_slack_r = n - 1; // k = 1..N-1
    let n_slack = n_slack_beta + n_slack_r;
    let nz = nu + n_slack;
    let n_wheels = params.wheel_count();

    // Row budget: input boxes, beta band, r bound, steering-region rows,
    // wheel-rate rows, terminal box.
    let m_rows = nu + 2 * n + 2 * (n - 1) + 2 * n + n_wheels * n + 2;
    let mut a = DMatrix::<f64>::zeros(m_rows, nz);
    let mut l = DVector::<f64>::from_element(m_rows, f64::NEG_INFINITY);
    let mut u = DVector::<f64>::from_element(m_rows, f64::INFINITY);
    let mut row = 0;

    // Decision variables are free except the slacks.
    let mut z_lb = DVector::<f64>::from_element(nz, f64::NEG_INFINITY);
    let mut z_ub = DVector::<f64>::from_element(nz, f64::INFINITY);
    for i in nu..nz {
        z_lb[i] = 0.0;
        z_ub[i] = f64::INFINITY;
    }

    // Helper to write an affine scalar row: lo <= sens . z + base <= hi,
    // with an optional slack column relaxing both sides.
    let push_row = |a: &mut DMatrix<f64>,
                    l: &mut DVector<f64>,
                    u: &mut DVector<f64>,
                    row: &mut usize,
                    sens: &RowDVector<f64>,
                    base: f64,
                    lo: f64,
                    hi: f64,
                    slack: Option<usize>| {
        match slack {
            None => {
                for j in 0..nu {
                    a[(*row, j)] = sens[j];
                }
                l[*row] = lo - base;
                u[*row] = hi - base;
                *row += 1;
            }
            Some(col) => {
                for j in 0..nu {
                    a[(*row, j)] = sens[j];
                    a[(*row + 1, j)] = sens[j];
                }
                a[(*row, col)] = -1.0;
                u[*row] = hi - base;
                a[(*row + 1, col)] = 1.0;
                l[*row + 1] = lo - base;
                *row += 2;
            }
        }
    };

    let input_sens = |k: usize, comp: usize| -> (RowDVector<f64>, f64) {
        let ug = &condensed.input_gain[k];
        (
            RowDVector::from_fn(nu, |_, j| ug[(comp, j)]),
            condensed.input_offset[k][comp],
        )
    };
    let state_sens = |k: usize, row_vec: &StateVec| -> (RowDVector<f64>, f64) {
        let m = &condensed.state_gain[k - 1];
        let sens = row_vec.transpose() * m;
        (
            RowDVector::from_fn(nu, |_, j| sens[j]),
            row_vec.dot(&condensed.state_offset[k - 1]),
        )
    };

    // Tightened input boxes (hard).
    for k in 0..n {
        for comp in 0..N_U {
            let (sens, base) = input_sens(k, comp);
            push_row(
                &mut a,
                &mut l,
                &mut u,
                &mut row,
                &sens,
                base,
                -tightened.input_halfwidth[comp],
                tightened.input_halfwidth[comp],
                None,
            );
        }
    }

    // Sideslip band: beta(k) - beta_r(k) within the tightened half-width,
    // slack-softened. beta(0) is the fixed current nominal state.
    let beta_row = {
        let mut r = StateVec::zeros();
        r[idx::BETA] = 1.0;
        r
    };
    for k in 0..n {
        let slack_col = nu + k;
        let (u_sens, u_base) = input_sens(k, idx::BETA_R);
        let (mut sens, mut base) = if k == 0 {
            (RowDVector::zeros(nu), steps[0].x_lin[idx::BETA])
        } else {
            state_sens(k, &beta_row)
        };
        sens -= u_sens;
        base -= u_base;
        push_row(
            &mut a,
            &mut l,
            &mut u,
            &mut row,
            &sens,
            base,
            -tightened.beta_halfwidth,
            tightened.beta_halfwidth,
            Some(slack_col),
        );
    }

    // Yaw-rate bound for k = 1..N-1, slack-softened.
    let r_row = {
        let mut r = StateVec::zeros();
        r[idx::R] = 1.0;
        r
    };
    for k in 1..n {
        let slack_col = nu + n_slack_beta + (k - 1);
        let (sens, base) = state_sens(k, &r_row);
        push_row(
            &mut a,
            &mut l,
            &mut u,
            &mut row,
            &sens,
            base,
            -tightened.r_halfwidth,
            tightened.r_halfwidth,
            Some(slack_col),
        );
    }

    // Longitudinal-steering region, linearized about each step's input.
    for (k, step) in steps.iter().enumerate() {
        let rows = steering_region_rows(&step.u_lin, params.track);
        let (theta_sens, theta_base) = input_sens(k, idx::THETA_R);
        let (beta_sens, beta_base) = input_sens(k, idx::BETA_R);
        for r in rows {
            let sens = RowDVector::from_fn(nu, |_, j| {
                r.theta_coeff * theta_sens[j] + r.beta_coeff * beta_sens[j]
            });
            let base = r.theta_coeff * theta_base + r.beta_coeff * beta_base;
            push_row(
                &mut a,
                &mut l,
                &mut u,
                &mut row,
                &sens,
                base,
                f64::NEG_INFINITY,
                r.upper,
                None,
            );
        }
    }

    // Wheel steering-rate limit through the linearized wheel-angle map,
    // evaluated at the currently applied input.
    let rate_budget = cfg.wheel_rate_max * cfg.t_mpc;
    let c_delta = wheel_angle_jacobian(u_now, params);
    for k in 0..n {
        let (t_sens, t_base) = input_sens(k, idx::THETA_R);
        let (b_sens, b_base) = input_sens(k, idx::BETA_R);
        let (pt_sens, pt_base, pb_sens, pb_base) = if k == 0 {
            (
                RowDVector::zeros(nu),
                u_now[0],
                RowDVector::zeros(nu),
                u_now[1],
            )
        } else {
            let (pt, ptb) = input_sens(k - 1, idx::THETA_R);
            let (pb, pbb) = input_sens(k - 1, idx::BETA_R);
            (pt, ptb, pb, pbb)
        };
        for cd in &c_delta {
            let sens = RowDVector::from_fn(nu, |_, j| {
                cd[0] * (t_sens[j] - pt_sens[j]) + cd[1] * (b_sens[j] - pb_sens[j])
            });
            let base = cd[0] * (t_base - pt_base) + cd[1] * (b_base - pb_base);
            push_row(
                &mut a,
                &mut l,
                &mut u,
                &mut row,
                &sens,
                base,
                -rate_budget,
                rate_budget,
                None,
            );
        }
    }

    // Terminal box on the lateral offset and tracked heading error.
    {
        let mut d_row = StateVec::zeros();
        d_row[idx::D] = 1.0;
        let (sens, base) = state_sens(n, &d_row);
        push_row(
            &mut a,
            &mut l,
            &mut u,
            &mut row,
            &sens,
            base,
            -cfg.terminal_d,
            cfg.terminal_d,
            None,
        );
        let h_row = heading_row(cfg.heading_mode);
        let (sens, base) = state_sens(n, &h_row);
        let target = reference.rel_heading[n];
        push_row(
            &mut a,
            &mut l,
            &mut u,
            &mut row,
            &sens,
            base,
            target - cfg.terminal_heading,
            target + cfg.terminal_heading,
            None,
        );
    }

    debug_assert_eq!(row, m_rows);

    // Row equilibration: normalize each row to unit infinity norm, which
    // keeps the splitting iteration's single penalty parameter effective
    // across rows of very different physical scales.
    for i in 0..m_rows {
        let mut scale: f64 = 0.0;
        for j in 0..nz {
            scale = scale.max(a[(i, j)].abs());
        }
        if scale > 0.0 {
            for j in 0..nz {
                a[(i, j)] /= scale;
            }
            if l[i].is_finite() {
                l[i] /= scale;
            }
            if u[i].is_finite() {
                u[i] /= scale;
            }
        }
    }

    Ok(ConstraintSet {
        a,
        l,
        u,
        z_lb,
        z_ub,
        n_slack,
    })
}

/// One linear inequality `theta_coeff * theta_r + beta_coeff * beta_r <=
/// upper` on the inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputHalfSpace {
    pub theta_coeff: f64,
    pub beta_coeff: f64,
    pub upper: f64,
}

/// Linearization of the longitudinal-steering region about an input point.
///
/// The exact region is `|cot(theta_r) cos(beta_r)| > track/2`, written in
/// the singularity-free form `|tan(theta_r)| < (2/track) cos(beta_r)` so
/// that straight driving (`theta_r = 0`) is admitted. The tangent is convex
/// on each side and the cosine concave, so points on the linearized boundary
/// always satisfy the exact exclusion, never the other way around.
pub fn steering_region_rows(u_lin: &InputVec, track: f64) -> [InputHalfSpace; 2] {
    let two_over_track = 2.0 / track;
    let t0 = u_lin[idx::THETA_R];
    let b0 = u_lin[idx::BETA_R];
    let tan0 = t0.tan();
    let dtan = 1.0 + tan0 * tan0;
    let cos0 = b0.cos();
    let dcos = -b0.sin();
    // tan_lin(theta) = tan0 + dtan (theta - t0);
    // cos_lin(beta) = cos0 + dcos (beta - b0).
    // Enforce ±tan_lin(theta) <= (2/track) cos_lin(beta).
    let tan_free = tan0 - dtan * t0;
    let cos_free = cos0 - dcos * b0;
    [
        InputHalfSpace {
            theta_coeff: dtan,
            beta_coeff: -two_over_track * dcos,
            upper: two_over_track * cos_free - tan_free,
        },
        InputHalfSpace {
            theta_coeff: -dtan,
            beta_coeff: -two_over_track * dcos,
            upper: two_over_track * cos_free + tan_free,
        },
    ]
}

/// Finite-difference sensitivity of every wheel angle to the two steering
/// inputs, evaluated at the given input.
pub fn wheel_angle_jacobian(u0: &InputVec, params: &VehicleParams) -> Vec<[f64; 2]> {
    let h = 1e-6;
    let eval = |u: &InputVec| -> Vec<f64> {
        params
            .wheels()
            .map(|w| {
                let (x, y) = params.wheel_position(w);
                awoisv_core::wheel_angle_from_pose(
                    &SteerPose {
                        theta_r: u[0],
                        beta_r: u[1],
                    },
                    x,
                    y,
                )
            })
            .collect()
    };
    let mut out = vec![[0.0; 2]; params.wheel_count()];
    for j in 0..N_U {
        let mut up = *u0;
        let mut um = *u0;
        up[j] += h;
        um[j] -= h;
        let fp = eval(&up);
        let fm = eval(&um);
        for (w, o) in out.iter_mut().enumerate() {
            o[j] = (fp[w] - fm[w]) / (2.0 * h);
        }
    }
    out
}

/// Exact per-wheel angles for a commanded pose via the singularity-free
/// direct form; total on the input domain, so an applied command never
/// fails to map to wheel angles.
pub fn exact_wheel_angles(u: &InputVec, params: &VehicleParams) -> Result<Vec<f64>, MpcError> {
    let pose = SteerPose::new(u[idx::THETA_R], u[idx::BETA_R])?;
    Ok(params
        .wheels()
        .map(|w| {
            let (x, y) = params.wheel_position(w);
            awoisv_core::wheel_angle_from_pose(&pose, x, y)
        })
        .collect())
}

//! The closed-loop controller: measurement projection, error filtering,
//! nominal optimization, and the combined control law.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use awoisv_core::{wrap_angle, BodyStateVbr, GlobalPose, VehicleParams};
use awoisv_path::ReferencePath;
use awoisv_predict::{
    build_horizon, curvature_matched_seed, idx, Horizon, InputVec, LtvStep, StateMat, StateVec, N_U,
};
use awoisv_qp::{QpProblem, QpSolver, QpStatus, WarmStart};

use crate::constraints::{assemble_constraints, exact_wheel_angles, tighten_sets, TightenedSets};
use crate::cost::{
    assemble_cost, condense, dlqr_tracking, input_weight, lyapunov_terminal_weight,
    stage_state_weight, RefProfile,
};
use crate::filter::{kalman_hysteresis_update, ErrorFilterState};
use crate::{GainMat, MpcConfig, MpcError, Variant};

const HALF_PI: f64 = core::f64::consts::FRAC_PI_2;
/// Hard clamp margin keeping applied inputs strictly inside the open domain.
const INPUT_CLAMP_MARGIN: f64 = 1e-6;
/// How far (in multiples of the per-component error budget) the measured
/// error may leave the invariant set before the nominal re-anchors.
const TUBE_RESET_FACTOR: f64 = 4.0;

/// Diagnostics of one optimization run.
#[derive(Debug, Clone)]
pub struct SolveInfo {
    pub status: QpStatus,
    pub iterations: usize,
    pub solve_time: f64,
    /// Optimal nominal control sequence (N entries).
    pub u_seq: Vec<InputVec>,
    /// Optimal nominal state sequence (states 1..=N).
    pub x_seq: Vec<StateVec>,
    /// Largest slack magnitude used by the soft state constraints.
    pub max_slack: f64,
    /// Whether the fallback (shifted previous solution) was applied.
    pub fallback: bool,
}

/// Output of one control tick.
#[derive(Debug, Clone)]
pub struct ControlOutput {
    /// Applied combined input.
    pub u: InputVec,
    /// Per-wheel steering commands in wheel order (rad).
    pub wheel_deltas: Vec<f64>,
    /// Measured prediction state.
    pub x_measured: StateVec,
    /// Nominal state the error is measured against.
    pub x_nominal: StateVec,
    /// Raw nominal-model error.
    pub e: StateVec,
    /// Error term used by the control law (variant dependent).
    pub e_hat: StateVec,
    /// Componentwise bound on the held filtered error (zero for the nominal
    /// variant).
    pub error_box: StateVec,
    /// Fresh solve diagnostics when the QP ran this tick.
    pub solve: Option<SolveInfo>,
    /// Whether the applied input needed the hard domain clamp.
    pub clamped: bool,
}

/// Receding-horizon tube controller. One instance per scenario; strict step
/// ordering (measure, filter, solve, apply, advance nominal).
pub struct TubeController {
    pub cfg: MpcConfig,
    params: VehicleParams,
    solver: QpSolver,
    filter: ErrorFilterState,
    tightened: TightenedSets,
    /// Error feedback gain in effect: the configured matrix, or the
    /// per-linearization LQR synthesis when enabled.
    gain: GainMat,
    /// Nominal state, propagated by the model and never reset to the plant
    /// for the tube variants. Its path coordinate re-synchronizes to the
    /// measurement at each solve: the error bound on that component is zero
    /// by configuration, no feedback acts on it, and letting it integrate
    /// freely would make the nominal plan from a different point of the
    /// curvature profile than the plant is at.
    x_nominal: StateVec,
    /// Linearized dynamics used for the inter-sample nominal propagation.
    current_step: Option<LtvStep>,
    /// Last optimal control sequence.
    u_seq: Vec<InputVec>,
    /// Position in `u_seq` used by the infeasibility fallback.
    seq_cursor: usize,
    /// Nominal input currently in effect.
    u_nominal: InputVec,
    /// Applied combined input of the previous tick.
    u_applied: InputVec,
    warm: Option<WarmStart>,
    projection_hint: Option<f64>,
    ticks_until_solve: usize,
    initialized: bool,
    /// Count of hard input clamps, for diagnostics.
    pub clamp_events: usize,
    /// Count of solves whose constraint tightening degenerated and reused
    /// the previous sets.
    pub tightening_failures: usize,
}

impl TubeController {
    pub fn new(cfg: MpcConfig, params: VehicleParams) -> Result<Self, MpcError> {
        cfg.validate()?;
        params.validate()?;
        let filter = ErrorFilterState::new(&cfg);
        let tightened = TightenedSets::untightened(&cfg);
        let gain = cfg.gain_matrix();
        Ok(Self {
            cfg,
            params,
            solver: QpSolver::default(),
            filter,
            tightened,
            gain,
            x_nominal: StateVec::zeros(),
            current_step: None,
            u_seq: Vec::new(),
            seq_cursor: 0,
            u_nominal: InputVec::zeros(),
            u_applied: InputVec::zeros(),
            warm: None,
            projection_hint: None,
            ticks_until_solve: 0,
            initialized: false,
            clamp_events: 0,
            tightening_failures: 0,
        })
    }

    pub fn tightened_sets(&self) -> &TightenedSets {
        &self.tightened
    }

    /// Project a plant measurement into the prediction state.
    pub fn measure(
        &mut self,
        pose: &GlobalPose,
        body: &BodyStateVbr,
        path: &ReferencePath,
    ) -> Result<StateVec, MpcError> {
        let heading = wrap_angle(pose.psi + body.beta);
        let f = path
            .project(pose.x, pose.y, heading, self.projection_hint)
            .map_err(|e| MpcError::ProjectionLost(e.to_string()))?;
        self.projection_hint = Some(f.s);
        Ok(StateVec::from([
            f.s,
            f.d,
            f.heading_error,
            body.beta,
            body.r,
        ]))
    }

    /// One control tick: returns the applied input and per-wheel commands.
    ///
    /// The optimization refreshes on its own slower period; between solves
    /// the nominal model propagates at the control period on the current
    /// linearization and only the error feedback refreshes.
    pub fn control_step(
        &mut self,
        pose: &GlobalPose,
        body: &BodyStateVbr,
        path: &ReferencePath,
        v_t: f64,
    ) -> Result<ControlOutput, MpcError> {
        let x_measured = self.measure(pose, body, path)?;
        self.control_step_from_state(x_measured, path, v_t)
    }

    /// Control tick from an already-projected measurement, for plants that
    /// live directly in the prediction coordinates.
    pub fn control_step_from_state(
        &mut self,
        x_measured: StateVec,
        path: &ReferencePath,
        v_t: f64,
    ) -> Result<ControlOutput, MpcError> {
        if !self.initialized {
            self.x_nominal = x_measured;
            let kappa0 = path
                .sample(x_measured[idx::S].clamp(0.0, path.length()))?
                .curvature;
            let seed = curvature_matched_seed(kappa0);
            self.u_seq = vec![seed; self.cfg.horizon];
            self.u_nominal = seed;
            self.u_applied = seed;
            self.ticks_until_solve = 0;
            self.initialized = true;
        }

        // Nominal anchor for the error. The plain LTV variant runs a
        // standard receding horizon from the measurement instead of an
        // independently evolving nominal model; the tube variants only
        // re-synchronize the path coordinate — unless the error has left
        // the invariant set by a wide margin, which voids the tube
        // containment argument: then the nominal re-anchors to the
        // measurement and the error filter restarts, so the optimization
        // plans from where the plant actually is instead of relying on the
        // saturated feedback to crawl back.
        if self.ticks_until_solve == 0 {
            match self.cfg.variant {
                Variant::Ltvmpc => self.x_nominal = x_measured,
                _ => {
                    self.x_nominal[idx::S] = x_measured[idx::S];
                    let escaped = (0..awoisv_predict::N_X).any(|i| {
                        let budget = self.tightened.error_box[i].max(self.cfg.error_bound[i]);
                        budget > 0.0
                            && (x_measured[i] - self.x_nominal[i]).abs()
                                > TUBE_RESET_FACTOR * budget
                    });
                    if escaped {
                        self.x_nominal = x_measured;
                        self.filter.reset(&self.cfg);
                    }
                }
            }
        }

        let e = x_measured - self.x_nominal;
        let a_e_tc = self.error_transition_at_control_rate();
        let filtered = kalman_hysteresis_update(&mut self.filter, &e, &a_e_tc, &self.cfg);
        let mut e_hat = match self.cfg.variant {
            Variant::Ltvmpc => StateVec::zeros(),
            Variant::TubeLtvmpc => e,
            Variant::FilteredTubeLtvmpc => filtered,
        };
        // The constraint tightening budgets for a feedback error inside the
        // invariant box; saturating the term there makes the applied input
        // admissible by construction and keeps a filter transient from
        // feeding on itself.
        if self.cfg.variant != Variant::Ltvmpc {
            for i in 0..awoisv_predict::N_X {
                let b = self.tightened.error_box[i];
                if b > 0.0 {
                    e_hat[i] = e_hat[i].clamp(-b, b);
                }
            }
        }

        let mut solve_info = None;
        if self.ticks_until_solve == 0 {
            solve_info = Some(self.solve(path, v_t)?);
            self.ticks_until_solve = self.cfg.ticks_per_solve();
        }
        self.ticks_until_solve -= 1;

        // Combined control law.
        let mut u = self.u_nominal + self.gain * e_hat;
        let mut clamped = false;
        for i in 0..N_U {
            let lim = HALF_PI - INPUT_CLAMP_MARGIN;
            if u[i].abs() > lim {
                u[i] = lim.copysign(u[i]);
                clamped = true;
            }
        }
        if clamped {
            self.clamp_events += 1;
        }

        let wheel_deltas = exact_wheel_angles(&u, &self.params)?;

        // Advance the nominal model one control period on the current
        // linearization with the nominal input held. At single rate this is
        // the discrete step itself, applied exactly; between solves of the
        // two-rate configuration it is the matching sub-step of the same
        // affine dynamics.
        if let Some(step) = &self.current_step {
            if self.cfg.ticks_per_solve() == 1 {
                self.x_nominal = step.a * self.x_nominal + step.b * self.u_nominal + step.c;
            } else {
                let t = self.cfg.t_mpc;
                let a_t = (step.a - StateMat::identity()) / t;
                let b_t = step.b / t;
                let f0_affine = step.c / t + a_t * self.x_nominal + b_t * self.u_nominal;
                self.x_nominal += self.cfg.t_control * f0_affine;
            }
        }

        self.u_applied = u;
        Ok(ControlOutput {
            u,
            wheel_deltas,
            x_measured,
            x_nominal: self.x_nominal,
            e,
            e_hat,
            error_box: self.tightened.error_box,
            solve: solve_info,
            clamped,
        })
    }

    /// Closed-loop error transition discretized at the control period, on
    /// the most recent linearization.
    fn error_transition_at_control_rate(&self) -> StateMat {
        match &self.current_step {
            Some(step) => {
                let t = self.cfg.t_mpc;
                let a_t = (step.a - StateMat::identity()) / t;
                let b_t = step.b / t;
                StateMat::identity() + (a_t + b_t * self.gain) * self.cfg.t_control
            }
            None => StateMat::identity(),
        }
    }

    /// Feedback gain in effect (configured or synthesized).
    pub fn feedback_gain(&self) -> &GainMat {
        &self.gain
    }

    /// The discretized linearization currently in effect, if a solve has
    /// run. The nominal-discrete reference plant steps this exact map.
    pub fn current_linearization(&self) -> Option<&LtvStep> {
        self.current_step.as_ref()
    }

    fn solve(&mut self, path: &ReferencePath, v_t: f64) -> Result<SolveInfo, MpcError> {
        let started = Instant::now();
        let n = self.cfg.horizon;

        // Seed with the shifted previous optimal sequence.
        let mut seed: Vec<InputVec> = self
            .u_seq
            .iter()
            .skip(self.seq_cursor + 1)
            .copied()
            .collect();
        if seed.is_empty() {
            seed.push(self.u_nominal);
        }
        while seed.len() < n {
            seed.push(*seed.last().unwrap());
        }

        let horizon = build_horizon(
            &self.x_nominal,
            &seed,
            path,
            v_t,
            self.cfg.t_mpc,
            n,
            &self.params,
        )?;
        self.current_step = Some(horizon.steps[0].clone());

        // Refresh the feedback gain on the new linearization when synthesis
        // is enabled: discrete LQR at the control period with the stage
        // weights plus a small full-rank term.
        if self.cfg.resynthesize_gain {
            let t = self.cfg.t_mpc;
            let step = &horizon.steps[0];
            let a_t = (step.a - StateMat::identity()) / t;
            let b_t = step.b / t;
            let a_tc = StateMat::identity() + a_t * self.cfg.t_control;
            let b_tc = b_t * self.cfg.t_control;
            let q = stage_state_weight(&self.cfg) + StateMat::identity() * 1e-3;
            let r = input_weight(&self.cfg);
            let k = dlqr_tracking(&a_tc, &b_tc, &q, &r)?;
            self.gain = -k;
        }

        // Error-side machinery on the fresh linearization. A linearization
        // where the filter contraction degenerates (unbounded error box or
        // an empty tightened set) keeps the previous solve's sets and is
        // counted as a diagnostic instead of halting the loop.
        let a_e_tc = self.error_transition_at_control_rate();
        match tighten_sets(&self.cfg, &a_e_tc, &self.gain) {
            Ok(t) => self.tightened = t,
            Err(MpcError::ContractionViolated(_) | MpcError::EmptyTightenedSet(_)) => {
                self.tightening_failures += 1;
            }
            Err(e) => return Err(e),
        }
        self.filter.bound = self.tightened.error_box;

        let condensed = condense(&horizon.steps, &self.x_nominal);
        let reference = self.reference_profile(&horizon, path)?;

        // Terminal weight: the fixed diagonal rows, or a closed-loop
        // Lyapunov solution on the fresh linearization when enabled.
        let terminal_full = if self.cfg.recompute_terminal {
            let q = stage_state_weight(&self.cfg);
            let r = input_weight(&self.cfg);
            let (p, _k) =
                lyapunov_terminal_weight(&horizon.steps[0].a, &horizon.steps[0].b, &q, &r, None)?;
            Some(p)
        } else {
            None
        };
        let (hu, gu) = assemble_cost(&condensed, &reference, &self.cfg, terminal_full.as_ref())?;

        // Extend with the quadratic slack block.
        let nz = n * N_U + (2 * n - 1);
        let mut h = DMatrix::zeros(nz, nz);
        h.view_mut((0, 0), (n * N_U, n * N_U)).copy_from(&hu);
        for i in n * N_U..nz {
            h[(i, i)] = 2.0 * self.cfg.slack_weight;
        }
        let mut g = DVector::zeros(nz);
        g.rows_mut(0, n * N_U).copy_from(&gu);

        let cons = assemble_constraints(
            &horizon.steps,
            &condensed,
            &reference,
            &self.cfg,
            &self.tightened,
            &self.u_applied,
            &self.params,
        )?;

        let problem = QpProblem {
            h,
            g,
            a: cons.a,
            l: cons.l,
            u: cons.u,
            z_lb: cons.z_lb,
            z_ub: cons.z_ub,
        };
        let solution = self.solver.solve(&problem, self.warm.as_ref())?;
        let solve_time = started.elapsed().as_secs_f64();

        // An iteration-capped solve returns its best iterate flagged; adopt
        // it only when that iterate is nearly feasible, otherwise treat it
        // like an infeasible solve and keep the previous plan.
        let accepted = match solution.status {
            QpStatus::Optimal => true,
            QpStatus::MaxIter => solution.primal_residual <= 1e-3,
            QpStatus::Infeasible => false,
        };
        if accepted {
            self.warm = Some(solution.warm_start());
            // An iteration-capped best iterate may violate the input rows;
            // keep the adopted sequence inside the tightened domain.
            let mut u_seq = condensed.controls(&solution.z);
            for u in &mut u_seq {
                for i in 0..N_U {
                    let lim = self.tightened.input_halfwidth[i];
                    u[i] = u[i].clamp(-lim, lim);
                }
            }
            let x_seq = condensed.states(&solution.z);
            let max_slack =
                (n * N_U..solution.z.len()).fold(0.0f64, |m, i| m.max(solution.z[i].abs()));
            self.u_seq = u_seq.clone();
            self.seq_cursor = 0;
            self.u_nominal = u_seq[0];
            Ok(SolveInfo {
                status: solution.status,
                iterations: solution.iterations,
                solve_time,
                u_seq,
                x_seq,
                max_slack,
                fallback: false,
            })
        } else {
            // Documented fallback: keep consuming the previous feasible
            // sequence, shifted one step per solve period.
            self.seq_cursor = (self.seq_cursor + 1).min(self.u_seq.len().saturating_sub(1));
            self.u_nominal = self.u_seq[self.seq_cursor];
            Ok(SolveInfo {
                status: solution.status,
                iterations: solution.iterations,
                solve_time,
                u_seq: self.u_seq.clone(),
                x_seq: Vec::new(),
                max_slack: f64::NAN,
                fallback: true,
            })
        }
    }

    fn reference_profile(
        &self,
        horizon: &Horizon,
        path: &ReferencePath,
    ) -> Result<RefProfile, MpcError> {
        let mut rel = Vec::with_capacity(horizon.len() + 1);
        let mut input = Vec::with_capacity(horizon.len());
        for (k, x) in horizon.states.iter().enumerate() {
            let s = x[idx::S].clamp(0.0, path.length());
            let sample = path.sample(s)?;
            rel.push(sample.rel_heading_ref);
            if k < horizon.len() {
                // Kinematic feedforward: steer to the path curvature; in
                // body mode hold the crab angle matching the heading target.
                let beta_ff = match self.cfg.heading_mode {
                    crate::HeadingMode::Body => -sample.rel_heading_ref,
                    crate::HeadingMode::Velocity => 0.0,
                };
                input.push(InputVec::from([f64::atan(sample.curvature), beta_ff]));
            }
        }
        Ok(RefProfile {
            rel_heading: rel,
            input,
        })
    }
}

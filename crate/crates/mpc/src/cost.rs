//! Condensed cost assembly over the control sequence and the terminal-weight
//! synthesis.

use nalgebra::{DMatrix, DVector, SMatrix};

use awoisv_predict::{idx, InputMat, InputVec, LtvStep, StateMat, StateVec, N_U, N_X};

use crate::{HeadingMode, MpcConfig, MpcError};

/// Dense affine maps from the decision vector to every predicted state and
/// every control over the horizon, with the states eliminated through the
/// per-step affine recursions.
///
/// The raw one-step transition matrices are unstable at the optimization
/// sample time for realistic speeds (the yaw mode leaves the unit circle
/// under forward Euler), so condensing directly onto the control sequence
/// amplifies by powers of the spectral radius and destroys the Hessian
/// conditioning. The decision vector is therefore a prestabilized
/// reparameterization: `u(k) = z(k) - K_k (x(k) - x_lin(k))`, with the gains
/// `K_k` from a backward Riccati pass over the horizon. The substitution is
/// affine and invertible, so the optimum over `u` is unchanged; the
/// recursion just runs on the contractive closed-loop matrices.
#[derive(Debug, Clone)]
pub struct CondensedModel {
    /// One `5 x 2N` block row per predicted state: `x(k) = state_gain[k-1] z
    /// + state_offset[k-1]`, `k = 1..=N`.
    pub state_gain: Vec<DMatrix<f64>>,
    pub state_offset: Vec<StateVec>,
    /// One `2 x 2N` block row per control: `u(k) = input_gain[k] z +
    /// input_offset[k]`, `k = 0..N-1`.
    pub input_gain: Vec<DMatrix<f64>>,
    pub input_offset: Vec<InputVec>,
    pub n: usize,
}

impl CondensedModel {
    /// Recover the control sequence from a decision vector.
    pub fn controls(&self, z: &DVector<f64>) -> Vec<InputVec> {
        (0..self.n)
            .map(|k| {
                let mut u = self.input_offset[k];
                for i in 0..N_U {
                    for j in 0..self.n * N_U {
                        u[i] += self.input_gain[k][(i, j)] * z[j];
                    }
                }
                u
            })
            .collect()
    }

    /// Recover the predicted state sequence (`x(1..=N)`).
    pub fn states(&self, z: &DVector<f64>) -> Vec<StateVec> {
        (0..self.n)
            .map(|k| {
                let mut x = self.state_offset[k];
                for i in 0..N_X {
                    for j in 0..self.n * N_U {
                        x[i] += self.state_gain[k][(i, j)] * z[j];
                    }
                }
                x
            })
            .collect()
    }
}

/// Backward Riccati pass producing the prestabilizing gains. The weights are
/// arbitrary as long as the result stabilizes; unit weights on the four
/// tracking states work across the operating range. The path-parameter
/// state is unweighted, so its marginal integrator mode receives no feedback
/// (its Riccati block stays identically zero).
fn prestabilizing_gains(steps: &[LtvStep]) -> Vec<SMatrix<f64, N_U, N_X>> {
    let n = steps.len();
    let mut q = StateMat::identity();
    q[(idx::S, idx::S)] = 0.0;
    let r = SMatrix::<f64, N_U, N_U>::identity();
    let mut p = q;
    let mut gains = vec![SMatrix::<f64, N_U, N_X>::zeros(); n];
    for k in (0..n).rev() {
        let a = &steps[k].a;
        let b = &steps[k].b;
        let inv = (b.transpose() * p * b + r)
            .try_inverse()
            .unwrap_or_else(SMatrix::identity);
        let gain = inv * b.transpose() * p * a;
        p = q + a.transpose() * p * (a - b * gain);
        p = 0.5 * (p + p.transpose());
        gains[k] = gain;
    }
    gains
}

/// Eliminate the states of the horizon recursion.
pub fn condense(steps: &[LtvStep], x0: &StateVec) -> CondensedModel {
    let n = steps.len();
    let nu = n * N_U;
    let gains = prestabilizing_gains(steps);

    let mut state_gain = Vec::with_capacity(n);
    let mut state_offset = Vec::with_capacity(n);
    let mut input_gain = Vec::with_capacity(n);
    let mut input_offset = Vec::with_capacity(n);

    // Running affine map of the current state: x(k) = g z + w.
    let mut g = DMatrix::<f64>::zeros(N_X, nu);
    let mut w = *x0;
    for (k, step) in steps.iter().enumerate() {
        let kk = &gains[k];
        // u(k) = z(k) - K_k (x(k) - x_lin(k)).
        let mut ug = DMatrix::<f64>::zeros(N_U, nu);
        for i in 0..N_U {
            ug[(i, k * N_U + i)] = 1.0;
        }
        let kg = DMatrix::from_fn(N_U, N_X, |i, j| kk[(i, j)]);
        ug -= &kg * &g;
        let uo = kk * (step.x_lin - w);
        let u_off = InputVec::from([uo[0], uo[1]]);

        // x(k+1) = A x(k) + B u(k) + c.
        let a_dyn = DMatrix::from_fn(N_X, N_X, |i, j| step.a[(i, j)]);
        let b_dyn = DMatrix::from_fn(N_X, N_U, |i, j| step.b[(i, j)]);
        g = &a_dyn * &g + &b_dyn * &ug;
        w = step.a * w + step.b * u_off + step.c;

        input_gain.push(ug);
        input_offset.push(u_off);
        state_gain.push(g.clone());
        state_offset.push(w);
    }
    CondensedModel {
        state_gain,
        state_offset,
        input_gain,
        input_offset,
        n,
    }
}

/// Selector of the tracked heading error: the raw velocity-heading state, or
/// the body-axis offset `heading_err - beta`.
pub fn heading_row(mode: HeadingMode) -> StateVec {
    let mut h = StateVec::zeros();
    h[idx::HEAD_ERR] = 1.0;
    if mode == HeadingMode::Body {
        h[idx::BETA] = -1.0;
    }
    h
}

/// Reference values over the horizon; `rel_heading[k]` pairs with the
/// predicted state `x(k)`, `k = 0..=N`, and `input[k]` with the control
/// `u(k)`, `k = 0..N-1`.
///
/// The input reference is the kinematic feedforward: the steering-radius
/// angle matching the path curvature, and the commanded sideslip that holds
/// the tracked heading offset while the velocity stays tangent. Penalizing
/// the deviation from it bounds the inputs without biasing the tracking
/// equilibrium the way an absolute input penalty would (an absolute penalty
/// of comparable weight to the heading weight parks the heading error at a
/// large fraction of the reference offset).
#[derive(Debug, Clone)]
pub struct RefProfile {
    pub rel_heading: Vec<f64>,
    pub input: Vec<InputVec>,
}

/// Quadratic cost over the stacked controls:
/// stage terms on the lateral offset and heading error for `k = 1..N-1`,
/// terminal terms at `k = N`, and the input penalty on every step. Returns
/// `(h, g)` for the QP convention `1/2 z' H z + g' z`.
///
/// `terminal_full` replaces the diagonal terminal rows with a complete
/// terminal weight matrix (as produced by [`lyapunov_terminal_weight`]),
/// taken about the reference state whose heading component carries the
/// terminal relative-heading target.
pub fn assemble_cost(
    condensed: &CondensedModel,
    reference: &RefProfile,
    cfg: &MpcConfig,
    terminal_full: Option<&StateMat>,
) -> Result<(DMatrix<f64>, DVector<f64>), MpcError> {
    let n = condensed.n;
    let nu = n * N_U;
    if reference.rel_heading.len() != n + 1 || reference.input.len() != n {
        return Err(MpcError::DimensionMismatch(format!(
            "reference profile has {}/{} entries, expected {}/{}",
            reference.rel_heading.len(),
            reference.input.len(),
            n + 1,
            n
        )));
    }
    let mut h = DMatrix::<f64>::zeros(nu, nu);
    let mut g = DVector::<f64>::zeros(nu);

    let d_row = {
        let mut r = StateVec::zeros();
        r[idx::D] = 1.0;
        r
    };
    let head = heading_row(cfg.heading_mode);

    // Rank-one update h += 2w s's, g += 2w residual s', accumulated
    // symmetrically.
    let add_scalar_term = |h: &mut DMatrix<f64>,
                           g: &mut DVector<f64>,
                           sens: &nalgebra::RowDVector<f64>,
                           weight: f64,
                           residual: f64| {
        for i in 0..nu {
            let wi = 2.0 * weight * sens[i];
            g[i] += wi * residual;
            for j in i..nu {
                let v = wi * sens[j];
                h[(i, j)] += v;
                if j != i {
                    h[(j, i)] += v;
                }
            }
        }
    };

    for k in 1..=n {
        let m = &condensed.state_gain[k - 1];
        let base = condensed.state_offset[k - 1];
        let (wd, wh) = if k < n {
            (cfg.q_d, cfg.q_heading)
        } else if terminal_full.is_none() {
            (cfg.p_d, cfg.p_heading)
        } else {
            (0.0, 0.0)
        };
        if wd > 0.0 {
            let sens = d_row.transpose() * m;
            add_scalar_term(&mut h, &mut g, &sens, wd, base[idx::D]);
        }
        if wh > 0.0 {
            let sens = head.transpose() * m;
            add_scalar_term(
                &mut h,
                &mut g,
                &sens,
                wh,
                head.dot(&base) - reference.rel_heading[k],
            );
        }
    }
    if let Some(p) = terminal_full {
        let m = &condensed.state_gain[n - 1];
        let mut x_ref = StateVec::zeros();
        x_ref[idx::HEAD_ERR] = reference.rel_heading[n];
        let residual = condensed.state_offset[n - 1] - x_ref;
        // H += 2 M' P M; g += 2 M' P (offset - x_ref).
        let p_dyn = DMatrix::from_fn(N_X, N_X, |i, j| p[(i, j)]);
        let pm = &p_dyn * m;
        let pr = p * residual;
        for i in 0..nu {
            let mut gi = 0.0;
            for s in 0..N_X {
                gi += m[(s, i)] * pr[s];
            }
            g[i] += 2.0 * gi;
            for j in i..nu {
                let mut hij = 0.0;
                for s in 0..N_X {
                    hij += m[(s, i)] * pm[(s, j)];
                }
                h[(i, j)] += 2.0 * hij;
                if j != i {
                    h[(j, i)] += 2.0 * hij;
                }
            }
        }
        // Symmetrize the terminal block against roundoff in P itself.
        for i in 0..nu {
            for j in (i + 1)..nu {
                let avg = 0.5 * (h[(i, j)] + h[(j, i)]);
                h[(i, j)] = avg;
                h[(j, i)] = avg;
            }
        }
    }

    // Input-deviation penalty through the prestabilized input maps.
    let r_diag = [cfg.r_theta, cfg.r_beta];
    for k in 0..n {
        let ug = &condensed.input_gain[k];
        let uo = condensed.input_offset[k];
        for row in 0..N_U {
            if r_diag[row] == 0.0 {
                continue;
            }
            let sens = nalgebra::RowDVector::from_fn(nu, |_, j| ug[(row, j)]);
            add_scalar_term(
                &mut h,
                &mut g,
                &sens,
                r_diag[row],
                uo[row] - reference.input[k][row],
            );
        }
    }
    Ok((h, g))
}

/// Largest eigenvalue magnitude.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .fold(0.0, |acc, e| acc.max(e.norm()))
}

/// Terminal weight from the closed-loop Lyapunov identity
/// `p - a_cl' p a_cl = q + k' r k` with `a_cl = a - b k`, solved by fixed
/// point. The gain is synthesized by discrete LQR when not supplied.
///
/// The path-parameter component carries no cost anywhere, leaves the
/// feedback (its input column is zero), and holds a structurally marginal
/// eigenvalue, so the synthesis and the stability test run on the remaining
/// four tracking states; the returned matrices embed it back with zeros.
pub fn lyapunov_terminal_weight(
    a: &StateMat,
    b: &InputMat,
    q: &StateMat,
    r: &SMatrix<f64, N_U, N_U>,
    k_f: Option<&SMatrix<f64, N_U, N_X>>,
) -> Result<(StateMat, SMatrix<f64, N_U, N_X>), MpcError> {
    // Reduced system without the path parameter (state 0).
    const NR: usize = N_X - 1;
    let ar = SMatrix::<f64, NR, NR>::from_fn(|i, j| a[(i + 1, j + 1)]);
    let br = SMatrix::<f64, NR, N_U>::from_fn(|i, j| b[(i + 1, j)]);
    let qr = SMatrix::<f64, NR, NR>::from_fn(|i, j| q[(i + 1, j + 1)]);

    let kr = match k_f {
        Some(k) => SMatrix::<f64, N_U, NR>::from_fn(|i, j| k[(i, j + 1)]),
        None => {
            // Riccati on the reduced system.
            let mut p = qr;
            for _ in 0..100_000 {
                let inv = (br.transpose() * p * br + r)
                    .try_inverse()
                    .ok_or_else(|| MpcError::InvalidConfig("singular input block".into()))?;
                let k = inv * br.transpose() * p * ar;
                let next = qr + ar.transpose() * p * (ar - br * k);
                let delta = (next - p).amax();
                p = next;
                if delta < 1e-12 {
                    break;
                }
            }
            let inv = (br.transpose() * p * br + r)
                .try_inverse()
                .ok_or_else(|| MpcError::InvalidConfig("singular input block".into()))?;
            inv * br.transpose() * p * ar
        }
    };

    let a_cl = ar - br * kr;
    let rho = spectral_radius(&DMatrix::from_fn(NR, NR, |i, j| a_cl[(i, j)]));
    if rho >= 1.0 {
        return Err(MpcError::UnstableClosedLoop(rho));
    }

    let rhs = qr + kr.transpose() * r * kr;
    let mut p = rhs;
    for _ in 0..200_000 {
        let next = rhs + a_cl.transpose() * p * a_cl;
        let delta = (next - p).amax();
        p = next;
        if delta < 1e-10 {
            break;
        }
    }

    let mut p_full = StateMat::zeros();
    let mut k_full = SMatrix::<f64, N_U, N_X>::zeros();
    for i in 0..NR {
        for j in 0..NR {
            p_full[(i + 1, j + 1)] = p[(i, j)];
        }
        for u in 0..N_U {
            k_full[(u, i + 1)] = kr[(u, i)];
        }
    }
    Ok((p_full, k_full))
}

/// Discrete LQR gain on the four tracking states, embedded back with a zero
/// column for the path parameter.
///
/// The path-parameter mode sits exactly on the unit circle and no input
/// column reaches it, so including it with any nonzero weight makes the
/// Riccati recursion diverge; it is excluded the same way the terminal
/// weight excludes it.
pub fn dlqr_tracking(
    a: &StateMat,
    b: &InputMat,
    q: &StateMat,
    r: &SMatrix<f64, N_U, N_U>,
) -> Result<SMatrix<f64, N_U, N_X>, MpcError> {
    const NR: usize = N_X - 1;
    let ar = SMatrix::<f64, NR, NR>::from_fn(|i, j| a[(i + 1, j + 1)]);
    let br = SMatrix::<f64, NR, N_U>::from_fn(|i, j| b[(i + 1, j)]);
    let qr = SMatrix::<f64, NR, NR>::from_fn(|i, j| q[(i + 1, j + 1)]);

    let r_inv = r
        .try_inverse()
        .ok_or_else(|| MpcError::InvalidConfig("singular input-weight block".into()))?;
    let mut ak = ar;
    let mut gk = br * r_inv * br.transpose();
    let mut hk = qr;
    let mut converged = false;
    for _ in 0..100 {
        let w = (SMatrix::<f64, NR, NR>::identity() + gk * hk)
            .try_inverse()
            .ok_or_else(|| MpcError::InvalidConfig("doubling step singular".into()))?;
        let awa = ak * w;
        let a_next = awa * ak;
        let g_next = gk + awa * gk * ak.transpose();
        let h_next = hk + ak.transpose() * hk * w * ak;
        let delta = (h_next - hk).amax();
        ak = a_next;
        gk = g_next;
        hk = 0.5 * (h_next + h_next.transpose());
        if delta < 1e-12 * hk.amax().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(MpcError::InvalidConfig(
            "Riccati doubling did not converge".into(),
        ));
    }
    let btpb = br.transpose() * hk * br + r;
    let inv = btpb
        .try_inverse()
        .ok_or_else(|| MpcError::InvalidConfig("singular input-weight block".into()))?;
    let kr = inv * br.transpose() * hk * ar;
    let mut k_full = SMatrix::<f64, N_U, N_X>::zeros();
    for i in 0..N_U {
        for j in 0..NR {
            k_full[(i, j + 1)] = kr[(i, j)];
        }
    }
    Ok(k_full)
}

/// Fixed diagonal terminal weight from the configuration, arranged on the
/// same rows as the stage cost.
pub fn fixed_terminal_weight(cfg: &MpcConfig) -> StateMat {
    let head = heading_row(cfg.heading_mode);
    let mut d = StateVec::zeros();
    d[idx::D] = 1.0;
    cfg.p_d * d * d.transpose() + cfg.p_heading * head * head.transpose()
}

/// Stage state weight matrix on the cost rows.
pub fn stage_state_weight(cfg: &MpcConfig) -> StateMat {
    let head = heading_row(cfg.heading_mode);
    let mut d = StateVec::zeros();
    d[idx::D] = 1.0;
    cfg.q_d * d * d.transpose() + cfg.q_heading * head * head.transpose()
}

/// Input weight matrix.
pub fn input_weight(cfg: &MpcConfig) -> SMatrix<f64, N_U, N_U> {
    SMatrix::<f64, N_U, N_U>::from_diagonal(&InputVec::from([cfg.r_theta, cfg.r_beta]))
}

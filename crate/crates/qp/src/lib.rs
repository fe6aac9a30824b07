//! Dense convex quadratic programming by operator splitting.
//!
//! Solves
//! ```text
//!     minimize    1/2 z' H z + g' z
//!     subject to  l <= A z <= u
//!                 z_lb <= z <= z_ub
//! ```
//! with an ADMM iteration that alternates an equality-constrained
//! least-squares step (one cached Cholesky factorization per solve) with a
//! projection onto the constraint intervals and a scaled dual update. Warm
//! starting reuses the previous primal/dual pair, which is what makes the
//! receding-horizon use fast: consecutive problems differ only slightly.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("H not symmetric: max asymmetry {0}")]
    NotSymmetric(f64),
    #[error("inconsistent bounds at row {0}: l = {1} > u = {2}")]
    InconsistentBounds(usize, f64, f64),
    #[error("KKT factorization failed")]
    FactorizationFailed,
}

/// Solver verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    /// Residuals below tolerance.
    Optimal,
    /// Iteration budget exhausted; the best iterate is returned.
    MaxIter,
    /// A primal infeasibility certificate was found.
    Infeasible,
}

impl std::fmt::Display for QpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QpStatus::Optimal => write!(f, "Optimal"),
            QpStatus::MaxIter => write!(f, "MaxIter"),
            QpStatus::Infeasible => write!(f, "Infeasible"),
        }
    }
}

/// Problem data. Variable bounds are kept separate from general rows and
/// stacked internally.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    /// General constraint rows (m x n); may be 0 x n.
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
    pub z_lb: DVector<f64>,
    pub z_ub: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem skeleton with free variables.
    pub fn new(h: DMatrix<f64>, g: DVector<f64>) -> Self {
        let n = g.len();
        Self {
            h,
            g,
            a: DMatrix::zeros(0, n),
            l: DVector::zeros(0),
            u: DVector::zeros(0),
            z_lb: DVector::from_element(n, f64::NEG_INFINITY),
            z_ub: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.n();
        if self.h.nrows() != n || self.h.ncols() != n {
            return Err(QpError::DimensionMismatch(format!(
                "H is {}x{}, expected {n}x{n}",
                self.h.nrows(),
                self.h.ncols()
            )));
        }
        if self.a.ncols() != n || self.a.nrows() != self.l.len() || self.a.nrows() != self.u.len() {
            return Err(QpError::DimensionMismatch("constraint rows".into()));
        }
        if self.z_lb.len() != n || self.z_ub.len() != n {
            return Err(QpError::DimensionMismatch("variable bounds".into()));
        }
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                asym = asym.max((self.h[(i, j)] - self.h[(j, i)]).abs());
            }
        }
        if asym > 1e-10 {
            return Err(QpError::NotSymmetric(asym));
        }
        for i in 0..self.l.len() {
            if self.l[i] > self.u[i] {
                return Err(QpError::InconsistentBounds(i, self.l[i], self.u[i]));
            }
        }
        for i in 0..n {
            if self.z_lb[i] > self.z_ub[i] {
                return Err(QpError::InconsistentBounds(i, self.z_lb[i], self.z_ub[i]));
            }
        }
        Ok(())
    }

    /// Plain-text dump of all problem matrices for offline cross-checking.
    pub fn dump_text<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let mat = |out: &mut W, name: &str, m: &DMatrix<f64>| -> std::io::Result<()> {
            writeln!(out, "{name} {} {}", m.nrows(), m.ncols())?;
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
                writeln!(out, "{}", row.join(" "))?;
            }
            Ok(())
        };
        let vec = |out: &mut W, name: &str, v: &DVector<f64>| -> std::io::Result<()> {
            writeln!(out, "{name} {}", v.len())?;
            let row: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
            writeln!(out, "{}", row.join(" "))?;
            Ok(())
        };
        mat(&mut out, "H", &self.h)?;
        vec(&mut out, "g", &self.g)?;
        mat(&mut out, "A", &self.a)?;
        vec(&mut out, "l", &self.l)?;
        vec(&mut out, "u", &self.u)?;
        vec(&mut out, "z_lb", &self.z_lb)?;
        vec(&mut out, "z_ub", &self.z_ub)?;
        Ok(())
    }
}

/// Primal/dual pair for warm starting. The dual covers the stacked system
/// (variable bounds first, then general rows).
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub z: DVector<f64>,
    pub y: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Duals of the stacked constraints (n bound rows, then m general rows).
    pub y: DVector<f64>,
}

impl QpSolution {
    /// Warm-start data for a subsequent, similar problem.
    pub fn warm_start(&self) -> WarmStart {
        WarmStart {
            z: self.z.clone(),
            y: self.y.clone(),
        }
    }
}

/// Tunable solver settings; the defaults satisfy the accuracy contract used
/// by the controller.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub eps_pinf: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub check_every: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-6,
            eps_rel: 1e-4,
            eps_pinf: 1e-7,
            max_iter: 4000,
            rho: 1.0,
            sigma: 1e-6,
            alpha: 1.6,
            check_every: 25,
        }
    }
}

/// Reusable solver instance. Single-threaded; distinct instances may run in
/// parallel.
#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    pub settings: QpSettings,
}

impl QpSolver {
    pub fn new(settings: QpSettings) -> Self {
        Self { settings }
    }

    pub fn solve(
        &self,
        problem: &QpProblem,
        warm: Option<&WarmStart>,
    ) -> Result<QpSolution, QpError> {
        problem.validate()?;
        let n = problem.n();
        let m = problem.a.nrows();
        let s = &self.settings;

        // Symmetrize and regularize the Hessian if a Cholesky probe fails.
        let mut h_orig = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                h_orig[(i, j)] = 0.5 * (problem.h[(i, j)] + problem.h[(j, i)]);
            }
        }
        if h_orig.clone().cholesky().is_none() {
            for i in 0..n {
                h_orig[(i, i)] += 1e-8;
            }
        }

        // Jacobi variable scaling: widely different curvatures per variable
        // (soft-constraint penalties versus input weights) otherwise starve
        // the single-penalty splitting iteration.
        let d = DVector::from_fn(n, |j, _| {
            (1.0 / h_orig[(j, j)].abs().max(1e-8).sqrt()).clamp(1e-3, 1e3)
        });
        let h = DMatrix::from_fn(n, n, |i, j| h_orig[(i, j)] * d[i] * d[j]);
        let g_s = DVector::from_fn(n, |j, _| problem.g[j] * d[j]);

        // Stacked constraint system: bounded variables first, then general
        // rows, with the variable scaling applied to the columns. Variables
        // free on both sides contribute nothing to the projection and are
        // not stacked.
        let bounded: Vec<usize> = (0..n)
            .filter(|&j| problem.z_lb[j].is_finite() || problem.z_ub[j].is_finite())
            .collect();
        let nb = bounded.len();
        let mt = nb + m;
        let mut a = DMatrix::zeros(mt, n);
        let mut l = DVector::zeros(mt);
        let mut u = DVector::zeros(mt);
        for (row, &j) in bounded.iter().enumerate() {
            a[(row, j)] = d[j];
            l[row] = problem.z_lb[j];
            u[row] = problem.z_ub[j];
        }
        for i in 0..m {
            for j in 0..n {
                a[(nb + i, j)] = problem.a[(i, j)] * d[j];
            }
        }
        l.rows_mut(nb, m).copy_from(&problem.l);
        u.rows_mut(nb, m).copy_from(&problem.u);
        let at = a.transpose();

        let mut rho = s.rho;
        let factor = |rho: f64| -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
            let mut k = &h + DMatrix::identity(n, n) * s.sigma;
            // K = H + sigma I + rho A'A.
            k += &at * &a * rho;
            k.cholesky()
        };
        let mut chol = factor(rho).ok_or(QpError::FactorizationFailed)?;

        let mut x = match warm {
            Some(w) => {
                if w.z.len() != n || w.y.len() != mt {
                    return Err(QpError::DimensionMismatch("warm start".into()));
                }
                DVector::from_fn(n, |j, _| w.z[j] / d[j])
            }
            None => DVector::zeros(n),
        };
        let mut y = warm
            .map(|w| w.y.clone())
            .unwrap_or_else(|| DVector::zeros(mt));
        let mut z = clamp(&(&a * &x), &l, &u);

        let mut best = (f64::INFINITY, x.clone(), y.clone(), 0.0, 0.0);
        let mut y_at_last_check = y.clone();
        let mut last_adapt = 0usize;

        // Original-system view used by the final residual check and polish.
        let mut a_orig = DMatrix::zeros(mt, n);
        for (row, &j) in bounded.iter().enumerate() {
            a_orig[(row, j)] = 1.0;
        }
        a_orig.view_mut((nb, 0), (m, n)).copy_from(&problem.a);
        let residuals = |x: &DVector<f64>, y: &DVector<f64>| -> (f64, f64) {
            let ax = &a_orig * x;
            let viol = (0..mt).fold(0.0f64, |acc, i| {
                acc.max((l[i] - ax[i]).max(0.0))
                    .max((ax[i] - u[i]).max(0.0))
            });
            let stat = (&h_orig * x + &problem.g + a_orig.transpose() * y).amax();
            (viol, stat)
        };

        // Two-phase termination: stop early at a loose tolerance and let the
        // active-set polish reach full precision; if the polish cannot
        // certify the tight tolerance, keep iterating to it.
        let mut loose_phase = true;
        let mut polish_attempts = 0usize;
        let mut active_signature: Option<Vec<i8>> = None;
        let mut polished: Option<(DVector<f64>, DVector<f64>, f64, f64)> = None;

        let mut iterations = s.max_iter;
        let mut status = QpStatus::MaxIter;
        let mut iter = 0;
        while iter < s.max_iter {
            iter += 1;
            // Least-squares step from the current (x, z, y).
            let rhs = &x * s.sigma - &g_s + &at * (&z * rho - &y);
            let x_tilde = chol.solve(&rhs);
            let z_tilde = &a * &x_tilde;
            // Over-relaxed updates.
            let x_next = &x_tilde * s.alpha + &x * (1.0 - s.alpha);
            let z_relaxed = &z_tilde * s.alpha + &z * (1.0 - s.alpha);
            let z_next = clamp(&(&z_relaxed + &y / rho), &l, &u);
            let y_next = &y + (&z_relaxed - &z_next) * rho;
            x = x_next;
            z = z_next;
            y = y_next;

            if iter % s.check_every == 0 || iter == s.max_iter {
                let ax = &a * &x;
                let r_prim = (&ax - &z).amax();
                let hx = &h * &x;
                let aty = &at * &y;
                let r_dual = (&hx + &g_s + &aty).amax();
                let eps_prim = s.eps_abs + s.eps_rel * ax.amax().max(z.amax());
                let eps_dual = s.eps_abs + s.eps_rel * hx.amax().max(g_s.amax()).max(aty.amax());

                let score = (r_prim / eps_prim).max(r_dual / eps_dual);
                if score < best.0 {
                    best = (score, x.clone(), y.clone(), r_prim, r_dual);
                }
                let loose = 100.0;
                if loose_phase && r_prim <= loose * eps_prim && r_dual <= loose * eps_dual {
                    // Try to certify through the polish step once the active
                    // set looks settled; fall back to the tight iteration if
                    // the budget runs out.
                    let signature: Vec<i8> = (0..mt)
                        .map(|i| {
                            if y[i] > 1e-10 {
                                1
                            } else if y[i] < -1e-10 {
                                -1
                            } else {
                                0
                            }
                        })
                        .collect();
                    let stable = active_signature.as_ref() == Some(&signature);
                    active_signature = Some(signature);
                    if stable {
                        if let Some((px, py, pp, pd)) =
                            polish(&h_orig, &problem.g, &a_orig, &l, &u, &y, 1e-6, 1e-6)
                        {
                            if pp <= s.eps_abs && pd <= s.eps_abs {
                                polished = Some((px, py, pp, pd));
                                status = QpStatus::Optimal;
                                iterations = iter;
                                best = (score, x.clone(), y.clone(), r_prim, r_dual);
                                break;
                            }
                        }
                        polish_attempts += 1;
                        if polish_attempts >= 10 {
                            loose_phase = false;
                        }
                    }
                }
                if r_prim <= eps_prim && r_dual <= eps_dual {
                    status = QpStatus::Optimal;
                    iterations = iter;
                    best = (score, x.clone(), y.clone(), r_prim, r_dual);
                    break;
                }

                // Primal infeasibility certificate from the dual drift.
                let dy = &y - &y_at_last_check;
                let dy_norm = dy.amax();
                if dy_norm > s.eps_pinf {
                    let at_dy = (&at * &dy).amax();
                    if at_dy <= s.eps_pinf * dy_norm {
                        let mut support = 0.0;
                        let mut certificate = true;
                        for i in 0..mt {
                            if dy[i] > 0.0 {
                                if u[i].is_infinite() {
                                    certificate = false;
                                    break;
                                }
                                support += u[i] * dy[i];
                            } else if dy[i] < 0.0 {
                                if l[i].is_infinite() {
                                    certificate = false;
                                    break;
                                }
                                support += l[i] * dy[i];
                            }
                        }
                        if certificate && support <= -s.eps_pinf * dy_norm {
                            status = QpStatus::Infeasible;
                            iterations = iter;
                            best = (score, x.clone(), y.clone(), r_prim, r_dual);
                            break;
                        }
                    }
                }
                y_at_last_check = y.clone();

                // Penalty rebalance whenever the residuals drift badly out
                // of proportion; each rebalance refactorizes once.
                if iter >= last_adapt + 100 {
                    let ratio = (r_prim / eps_prim) / (r_dual / eps_dual).max(1e-12);
                    if !(0.2..=5.0).contains(&ratio) {
                        rho = (rho * ratio.sqrt().clamp(0.1, 10.0)).clamp(1e-6, 1e6);
                        chol = factor(rho).ok_or(QpError::FactorizationFailed)?;
                        last_adapt = iter;
                    }
                }
            }
        }

        // Undo the variable scaling and recompute the residuals on the
        // original data.
        let (_, bx_s, by, _, _) = best;
        let mut bx = DVector::from_fn(n, |j, _| bx_s[j] * d[j]);
        let mut by = by;
        let (mut r_prim, mut r_dual) = residuals(&bx, &by);
        if let Some((px, py, pp, pd)) = polished {
            bx = px;
            by = py;
            r_prim = pp;
            r_dual = pd;
        } else if status == QpStatus::Optimal {
            if let Some((px, py, pp, pd)) =
                polish(&h_orig, &problem.g, &a_orig, &l, &u, &by, r_prim, r_dual)
            {
                bx = px;
                by = py;
                r_prim = pp;
                r_dual = pd;
            }
        }
        let objective = 0.5 * bx.dot(&(&h_orig * &bx)) + problem.g.dot(&bx);
        Ok(QpSolution {
            z: bx,
            objective,
            status,
            iterations,
            primal_residual: r_prim,
            dual_residual: r_dual,
            y: by,
        })
    }
}

fn clamp(v: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| v[i].max(l[i]).min(u[i]))
}

/// Active-set polish: re-solve the problem as an equality-constrained QP on
/// the constraints the splitting iteration identified as active, which
/// upgrades the solution from stopping-tolerance accuracy to near machine
/// precision. Returns the polished point only when it keeps the inactive
/// constraints satisfied and improves both residuals.
#[allow(clippy::too_many_arguments)]
fn polish(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    l: &DVector<f64>,
    u: &DVector<f64>,
    y: &DVector<f64>,
    r_prim: f64,
    r_dual: f64,
) -> Option<(DVector<f64>, DVector<f64>, f64, f64)> {
    let n = h.nrows();
    let mt = a.nrows();
    let mut active = Vec::new();
    for i in 0..mt {
        if y[i] < -1e-10 && l[i].is_finite() {
            active.push((i, l[i]));
        } else if y[i] > 1e-10 && u[i].is_finite() {
            active.push((i, u[i]));
        }
    }
    let na = active.len();
    // KKT system of the equality-constrained subproblem, with a small dual
    // regularization for rank deficiency.
    let dim = n + na;
    let mut k = DMatrix::zeros(dim, dim);
    k.view_mut((0, 0), (n, n)).copy_from(h);
    for (row, &(i, _)) in active.iter().enumerate() {
        for j in 0..n {
            k[(n + row, j)] = a[(i, j)];
            k[(j, n + row)] = a[(i, j)];
        }
        k[(n + row, n + row)] = -1e-9;
    }
    let mut rhs = DVector::zeros(dim);
    for j in 0..n {
        rhs[j] = -g[j];
    }
    for (row, &(_, b)) in active.iter().enumerate() {
        rhs[n + row] = b;
    }
    let lu = k.lu();
    let sol = lu.solve(&rhs)?;
    let px = DVector::from_fn(n, |i, _| sol[i]);
    let mut py = DVector::zeros(mt);
    for (row, &(i, _)) in active.iter().enumerate() {
        py[i] = sol[n + row];
    }
    // Validate the guessed active set: the polished duals must keep the
    // signs their bounds demand (a wrong guess yields an exact KKT point of
    // a different problem with sign-infeasible multipliers).
    let tol: f64 = 1e-9;
    for (row, &(i, b)) in active.iter().enumerate() {
        let dual = sol[n + row];
        let is_upper = (b - u[i]).abs() < (b - l[i]).abs() || l[i] == u[i];
        if is_upper && dual < -tol {
            return None;
        }
        if !is_upper && dual > tol {
            return None;
        }
    }
    // Inactive constraints must hold and residuals must improve.
    let az = a * &px;
    for i in 0..mt {
        if az[i] < l[i] - tol.max(r_prim) || az[i] > u[i] + tol.max(r_prim) {
            return None;
        }
    }
    let new_prim = (0..mt).fold(0.0f64, |m, i| {
        m.max((l[i] - az[i]).max(0.0)).max((az[i] - u[i]).max(0.0))
    });
    let new_dual = (h * &px + g + a.transpose() * &py).amax();
    if new_prim <= r_prim.max(1e-12) && new_dual <= r_dual.max(1e-12) {
        Some((px, py, new_prim, new_dual))
    } else {
        None
    }
}

//! Solver accuracy against an independent projected-gradient oracle, KKT
//! residual checks, and warm-start behavior on randomized problems.

use awoisv_qp::{QpProblem, QpSolver, QpStatus};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random strictly convex box-constrained QP.
fn random_box_qp(rng: &mut ChaCha8Rng, n: usize) -> QpProblem {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let mut h = &m * m.transpose();
    for i in 0..n {
        h[(i, i)] += 0.5;
    }
    let g = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let mut p = QpProblem::new(h, g);
    p.z_lb = DVector::from_fn(n, |_, _| rng.random_range(-1.5..-0.1));
    p.z_ub = DVector::from_fn(n, |_, _| rng.random_range(0.1..1.5));
    p
}

/// Projected gradient descent run to near machine precision; independent of
/// the operator-splitting implementation under test.
fn projected_gradient_oracle(p: &QpProblem, iters: usize) -> DVector<f64> {
    let n = p.n();
    // Lipschitz constant from the Gershgorin bound.
    let mut lip: f64 = 0.0;
    for i in 0..n {
        let row_sum: f64 = (0..n).map(|j| p.h[(i, j)].abs()).sum();
        lip = lip.max(row_sum);
    }
    let step = 1.0 / lip;
    let mut z = DVector::zeros(n);
    for _ in 0..iters {
        let grad = &p.h * &z + &p.g;
        let mut next = &z - &grad * step;
        for i in 0..n {
            next[i] = next[i].clamp(p.z_lb[i], p.z_ub[i]);
        }
        if (&next - &z).amax() < 1e-14 {
            z = next;
            break;
        }
        z = next;
    }
    z
}

#[test]
fn matches_projected_gradient_on_random_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let solver = QpSolver::default();
    for case in 0..25 {
        let p = random_box_qp(&mut rng, 10);
        let sol = solver.solve(&p, None).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "case {case}");
        let oracle = projected_gradient_oracle(&p, 1_000_000);
        let gap = (&sol.z - &oracle).amax();
        assert!(gap < 1e-5, "case {case}: gap {gap}");
    }
}

#[test]
fn kkt_residuals_at_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let solver = QpSolver::default();
    for case in 0..25 {
        let mut p = random_box_qp(&mut rng, 8);
        // Add a couple of general rows.
        p.a = DMatrix::from_fn(3, 8, |_, _| rng.random_range(-1.0..1.0));
        p.l = DVector::from_fn(3, |_, _| rng.random_range(-3.0..-0.5));
        p.u = DVector::from_fn(3, |_, _| rng.random_range(0.5..3.0));
        let sol = solver.solve(&p, None).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "case {case}");

        // Stationarity: H z + g + A_stacked' y = 0.
        let n = p.n();
        let mut stacked = DMatrix::zeros(n + 3, n);
        for i in 0..n {
            stacked[(i, i)] = 1.0;
        }
        stacked.view_mut((n, 0), (3, n)).copy_from(&p.a);
        let stat = (&p.h * &sol.z + &p.g + stacked.transpose() * &sol.y).amax();
        assert!(stat < 1e-5, "case {case}: stationarity {stat}");

        // Complementary slackness per stacked row.
        let az = &stacked * &sol.z;
        let mut l = DVector::zeros(n + 3);
        let mut u = DVector::zeros(n + 3);
        l.rows_mut(0, n).copy_from(&p.z_lb);
        u.rows_mut(0, n).copy_from(&p.z_ub);
        l.rows_mut(n, 3).copy_from(&p.l);
        u.rows_mut(n, 3).copy_from(&p.u);
        for i in 0..n + 3 {
            let slack = if sol.y[i] > 0.0 {
                u[i] - az[i]
            } else if sol.y[i] < 0.0 {
                az[i] - l[i]
            } else {
                0.0
            };
            let comp = sol.y[i].abs() * slack.abs();
            assert!(comp < 1e-5, "case {case} row {i}: complementarity {comp}");
        }
    }
}

#[test]
fn warm_start_reduces_iterations_on_shifted_problems() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let solver = QpSolver::default();
    let mut wins = 0;
    let total = 40;
    for _ in 0..total {
        let p = random_box_qp(&mut rng, 12);
        let cold = solver.solve(&p, None).unwrap();
        assert_eq!(cold.status, QpStatus::Optimal);
        // Perturb the linear term by 5% and re-solve warm.
        let mut shifted = p.clone();
        for i in 0..shifted.g.len() {
            shifted.g[i] *= 1.0 + 0.05 * rng.random_range(-1.0..1.0);
        }
        let warm = solver.solve(&shifted, Some(&cold.warm_start())).unwrap();
        let cold2 = solver.solve(&shifted, None).unwrap();
        if warm.iterations <= cold2.iterations {
            wins += 1;
        }
    }
    assert!(
        wins * 10 >= total * 9,
        "warm start won only {wins}/{total} cases"
    );
}

#[test]
fn objective_decreases_with_iteration_budget() {
    use awoisv_qp::QpSettings;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut monotone_pairs = 0;
    let mut total_pairs = 0;
    for _ in 0..20 {
        let p = random_box_qp(&mut rng, 10);
        let caps = [25, 50, 100, 200, 400];
        let mut objectives = Vec::new();
        for &cap in &caps {
            let solver = QpSolver::new(QpSettings {
                max_iter: cap,
                eps_abs: 1e-12,
                eps_rel: 1e-12,
                ..Default::default()
            });
            let sol = solver.solve(&p, None).unwrap();
            // Evaluate at the box-projected iterate so the point is feasible.
            let mut zf = sol.z.clone();
            for i in 0..zf.len() {
                zf[i] = zf[i].clamp(p.z_lb[i], p.z_ub[i]);
            }
            objectives.push(0.5 * zf.dot(&(&p.h * &zf)) + p.g.dot(&zf));
        }
        for w in objectives.windows(2) {
            total_pairs += 1;
            if w[1] <= w[0] + 1e-9 {
                monotone_pairs += 1;
            }
        }
    }
    assert!(
        monotone_pairs * 10 >= total_pairs * 9,
        "objective decreased in only {monotone_pairs}/{total_pairs} budget steps"
    );
}

//! Run metrics: tracking errors, command smoothness, and solver statistics.

use serde::{Deserialize, Serialize};

use crate::SimError;

/// One trace row, mirroring the CSV columns exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
    pub beta: f64,
    pub r: f64,
    pub s: f64,
    pub d: f64,
    pub heading_err: f64,
    pub theta_r: f64,
    pub beta_r: f64,
    pub wheel_deltas: Vec<f64>,
    pub e_hat: [f64; 5],
    pub solve_time: f64,
    pub qp_iters: usize,
    /// "Optimal" / "MaxIter" / "Infeasible" on solve rows, "-" between
    /// solves.
    pub qp_status: String,
    /// Reference relative heading at this row's arc length; not a CSV column
    /// (it is a function of `s` and the path), carried for metric
    /// computation.
    pub rel_heading_ref: f64,
}

/// Summary statistics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub samples: usize,
    pub lateral_error_median: f64,
    pub lateral_error_max: f64,
    /// Tracked heading error statistics (rad), per the scenario's heading
    /// mode, measured against the path's relative-heading profile.
    pub heading_error_median: f64,
    pub heading_error_max: f64,
    /// Sliding standard deviation per wheel (rad).
    pub sliding_std_per_wheel: Vec<f64>,
    /// Average over the wheels.
    pub sliding_std_avg: f64,
    pub sliding_window: usize,
    pub solve_count: usize,
    pub solve_time_mean: f64,
    pub solve_time_max: f64,
    pub qp_iter_mean: f64,
    pub qp_iter_max: usize,
    /// Steps where the plant state violated the raw sideslip band or yaw
    /// bound, and steps where the applied input needed clamping.
    pub beta_band_violations: usize,
    pub yaw_rate_violations: usize,
    pub input_clamp_events: usize,
}

/// Sliding standard deviation of one signal: the root of the mean window
/// variance over every window of length `w`.
pub fn sliding_std(signal: &[f64], w: usize) -> Result<f64, SimError> {
    if w < 2 {
        return Err(SimError::WindowTooLarge(w, signal.len()));
    }
    let n = signal.len();
    if n < w {
        return Err(SimError::WindowTooLarge(w, n));
    }
    let windows = n - w + 1;
    let mut acc = 0.0;
    for start in 0..windows {
        let win = &signal[start..start + w];
        let mean = win.iter().sum::<f64>() / w as f64;
        let var = win.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w as f64;
        acc += var;
    }
    Ok((acc / windows as f64).sqrt())
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Compute the metrics of a trace. `body_heading` selects whether the
/// tracked heading error is the body-axis offset (`heading_err - beta`) or
/// the raw velocity-heading state.
pub fn compute_metrics(
    rows: &[TraceRow],
    body_heading: bool,
    window: usize,
    beta_max: f64,
    r_max: f64,
) -> Result<RunMetrics, SimError> {
    if rows.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    let lateral: Vec<f64> = rows.iter().map(|r| r.d.abs()).collect();
    let heading: Vec<f64> = rows
        .iter()
        .map(|r| {
            let tracked = if body_heading {
                r.heading_err - r.beta
            } else {
                r.heading_err
            };
            (tracked - r.rel_heading_ref).abs()
        })
        .collect();

    let n_wheels = rows[0].wheel_deltas.len();
    let mut sliding = Vec::with_capacity(n_wheels);
    for wheel in 0..n_wheels {
        let signal: Vec<f64> = rows.iter().map(|r| r.wheel_deltas[wheel]).collect();
        sliding.push(sliding_std(&signal, window)?);
    }
    let sliding_avg = sliding.iter().sum::<f64>() / n_wheels as f64;

    let mut solve_count = 0;
    let mut solve_sum = 0.0;
    let mut solve_max: f64 = 0.0;
    let mut iter_sum = 0usize;
    let mut iter_max = 0usize;
    for r in rows {
        if r.qp_status != "-" {
            solve_count += 1;
            solve_sum += r.solve_time;
            solve_max = solve_max.max(r.solve_time);
            iter_sum += r.qp_iters;
            iter_max = iter_max.max(r.qp_iters);
        }
    }

    let mut beta_viol = 0;
    let mut r_viol = 0;
    for r in rows {
        if (r.beta - r.beta_r).abs() > beta_max {
            beta_viol += 1;
        }
        if r.r.abs() > r_max {
            r_viol += 1;
        }
    }

    Ok(RunMetrics {
        samples: rows.len(),
        lateral_error_median: median(&lateral),
        lateral_error_max: lateral.iter().fold(0.0f64, |m, &x| m.max(x)),
        heading_error_median: median(&heading),
        heading_error_max: heading.iter().fold(0.0f64, |m, &x| m.max(x)),
        sliding_std_per_wheel: sliding,
        sliding_std_avg: sliding_avg,
        sliding_window: window,
        solve_count,
        solve_time_mean: if solve_count > 0 {
            solve_sum / solve_count as f64
        } else {
            0.0
        },
        solve_time_max: solve_max,
        qp_iter_mean: if solve_count > 0 {
            iter_sum as f64 / solve_count as f64
        } else {
            0.0
        },
        qp_iter_max: iter_max,
        beta_band_violations: beta_viol,
        yaw_rate_violations: r_viol,
        input_clamp_events: 0,
    })
}

/// CSV header for a given wheel count.
pub fn trace_header(wheel_labels: &[String]) -> String {
    let mut cols = vec![
        "t",
        "x",
        "y",
        "psi",
        "v",
        "beta",
        "r",
        "s",
        "d",
        "heading_err",
        "theta_r",
        "beta_r",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    for label in wheel_labels {
        cols.push(format!("delta_{label}"));
    }
    for comp in ["s", "d", "heading", "beta", "r"] {
        cols.push(format!("ehat_{comp}"));
    }
    cols.push("solve_time".into());
    cols.push("qp_iters".into());
    cols.push("qp_status".into());
    cols.join(",")
}

/// Serialize one row in the fixed column order. Floats print in Rust's
/// shortest round-trip form so that re-parsing reproduces the exact values.
pub fn write_row(row: &TraceRow) -> String {
    let mut fields: Vec<String> = vec![
        row.t.to_string(),
        row.x.to_string(),
        row.y.to_string(),
        row.psi.to_string(),
        row.v.to_string(),
        row.beta.to_string(),
        row.r.to_string(),
        row.s.to_string(),
        row.d.to_string(),
        row.heading_err.to_string(),
        row.theta_r.to_string(),
        row.beta_r.to_string(),
    ];
    for d in &row.wheel_deltas {
        fields.push(d.to_string());
    }
    for e in &row.e_hat {
        fields.push(e.to_string());
    }
    fields.push(row.solve_time.to_string());
    fields.push(row.qp_iters.to_string());
    fields.push(row.qp_status.clone());
    fields.join(",")
}

/// Parse a trace CSV written by [`write_row`] back into rows. The
/// relative-heading reference is re-sampled from the path by the caller.
pub fn parse_trace(text: &str, n_wheels: usize) -> Result<Vec<TraceRow>, SimError> {
    let mut rows = Vec::new();
    let mut lines = text.lines();
    let _header = lines.next().ok_or(SimError::EmptyTrace)?;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = 12 + n_wheels + 5 + 3;
        if fields.len() != expected {
            return Err(SimError::TraceParse(format!(
                "line {}: {} fields, expected {expected}",
                lineno + 2,
                fields.len()
            )));
        }
        let f = |i: usize| -> Result<f64, SimError> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| SimError::TraceParse(format!("line {}: {e}", lineno + 2)))
        };
        let mut wheel_deltas = Vec::with_capacity(n_wheels);
        for wheel in 0..n_wheels {
            wheel_deltas.push(f(12 + wheel)?);
        }
        let mut e_hat = [0.0; 5];
        for (j, e) in e_hat.iter_mut().enumerate() {
            *e = f(12 + n_wheels + j)?;
        }
        rows.push(TraceRow {
            t: f(0)?,
            x: f(1)?,
            y: f(2)?,
            psi: f(3)?,
            v: f(4)?,
            beta: f(5)?,
            r: f(6)?,
            s: f(7)?,
            d: f(8)?,
            heading_err: f(9)?,
            theta_r: f(10)?,
            beta_r: f(11)?,
            wheel_deltas,
            e_hat,
            solve_time: f(12 + n_wheels + 5)?,
            qp_iters: fields[12 + n_wheels + 6]
                .parse()
                .map_err(|e| SimError::TraceParse(format!("line {}: {e}", lineno + 2)))?,
            qp_status: fields[12 + n_wheels + 7].to_string(),
            rel_heading_ref: 0.0,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_signal_has_zero_sliding_std() {
        let s = vec![0.3; 100];
        assert!(sliding_std(&s, 25).unwrap() < 1e-12);
    }

    #[test]
    fn alternating_signal_matches_hand_value() {
        // Window of 2 over ±a: every window has mean 0 and variance a^2.
        let a = 0.7;
        let s = vec![a, -a, a, -a];
        let out = sliding_std(&s, 2).unwrap();
        assert!((out - a).abs() < 1e-15, "{out}");
    }

    #[test]
    fn window_bounds_checked() {
        assert!(matches!(
            sliding_std(&[1.0, 2.0], 3),
            Err(SimError::WindowTooLarge(3, 2))
        ));
        assert!(matches!(
            sliding_std(&[1.0, 2.0, 3.0], 1),
            Err(SimError::WindowTooLarge(1, _))
        ));
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn row_round_trip_is_exact() {
        let row = TraceRow {
            t: 0.02,
            x: 1.0 / 3.0,
            y: -2.7182818284590455,
            psi: 0.1,
            v: 5.0,
            beta: -0.017453292519943295,
            r: 0.3,
            s: 12.340000000000002,
            d: -0.00123456789,
            heading_err: 1e-17,
            theta_r: 0.04,
            beta_r: -0.5,
            wheel_deltas: vec![0.1, -0.2, 0.3, -0.4],
            e_hat: [0.0, 1e-300, -0.5, 0.25, -1e-12],
            solve_time: 0.00234,
            qp_iters: 75,
            qp_status: "Optimal".into(),
            rel_heading_ref: 0.0,
        };
        let text = format!(
            "{}\n{}\n",
            trace_header(&["1L".into(), "1R".into(), "2L".into(), "2R".into()]),
            write_row(&row)
        );
        let parsed = parse_trace(&text, 4).unwrap();
        assert_eq!(parsed.len(), 1);
        let p = &parsed[0];
        assert_eq!(p.t, row.t);
        assert_eq!(p.y, row.y);
        assert_eq!(p.heading_err, row.heading_err);
        assert_eq!(p.e_hat, row.e_hat);
        assert_eq!(p.wheel_deltas, row.wheel_deltas);
        assert_eq!(p.qp_iters, row.qp_iters);
        assert_eq!(p.qp_status, row.qp_status);
    }
}

//! Sweeps over forward speed or controller variant with aggregated
//! comparison output.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use awoisv_mpc::Variant;

use crate::runner::run_scenario;
use crate::scenario::{Scenario, SpeedProfile};
use crate::{RunMetrics, SimError};

/// Which scenario field the sweep varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "axis", content = "values")]
pub enum SweepAxis {
    /// Constant forward speeds (m/s).
    Speed(Vec<f64>),
    /// Controller variants.
    Variant(Vec<Variant>),
}

impl SweepAxis {
    pub fn default_speeds() -> Self {
        SweepAxis::Speed(vec![2.0, 4.0, 6.0, 8.0])
    }

    pub fn default_variants() -> Self {
        SweepAxis::Variant(vec![
            Variant::Ltvmpc,
            Variant::TubeLtvmpc,
            Variant::FilteredTubeLtvmpc,
        ])
    }

    fn len(&self) -> usize {
        match self {
            SweepAxis::Speed(v) => v.len(),
            SweepAxis::Variant(v) => v.len(),
        }
    }
}

/// One sweep entry: the configuration label and its run outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub label: String,
    pub metrics: Option<RunMetrics>,
    pub halted: Option<String>,
    pub error: Option<String>,
}

/// Aggregated sweep results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub entries: Vec<SweepEntry>,
    /// Median-error reductions relative to the first variant, percent,
    /// present for variant sweeps: (label, lateral %, heading %).
    pub reductions_vs_first: Vec<(String, f64, f64)>,
}

/// Run every configuration on the axis; individual failures are recorded and
/// the sweep continues.
pub fn sweep(
    template: &Scenario,
    axis: &SweepAxis,
    out_dir: Option<&Path>,
) -> Result<SweepSummary, SimError> {
    if axis.len() < 1 {
        return Err(SimError::InvalidScenario("empty sweep axis".into()));
    }
    let mut entries = Vec::new();
    match axis {
        SweepAxis::Speed(speeds) => {
            for &v in speeds {
                let mut sc = template.clone();
                sc.speed = SpeedProfile::constant(v);
                sc.name = format!("{}_v{}", template.name, v);
                entries.push(run_entry(&sc, out_dir, format!("{v} m/s")));
            }
        }
        SweepAxis::Variant(variants) => {
            for &variant in variants {
                let mut sc = template.clone();
                sc.controller.variant = variant;
                sc.name = format!("{}_{}", template.name, variant.to_string().to_lowercase());
                entries.push(run_entry(&sc, out_dir, variant.to_string()));
            }
        }
    }

    // Percentage reductions of the median errors relative to the first
    // entry, for variant comparisons.
    let mut reductions = Vec::new();
    if matches!(axis, SweepAxis::Variant(_)) {
        if let Some(base) = entries.first().and_then(|e| e.metrics.as_ref()) {
            for e in entries.iter().skip(1) {
                if let Some(m) = &e.metrics {
                    let lat = 100.0 * (1.0 - m.lateral_error_median / base.lateral_error_median);
                    let head = 100.0 * (1.0 - m.heading_error_median / base.heading_error_median);
                    reductions.push((e.label.clone(), lat, head));
                }
            }
        }
    }

    let summary = SweepSummary {
        entries,
        reductions_vs_first: reductions,
    };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&summary)
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        fs::write(dir.join(format!("{}_sweep.json", template.name)), json)?;
        fs::write(
            dir.join(format!("{}_sweep.md", template.name)),
            summary.markdown_table(),
        )?;
    }
    Ok(summary)
}

fn run_entry(sc: &Scenario, out_dir: Option<&Path>, label: String) -> SweepEntry {
    match run_scenario(sc, out_dir) {
        Ok(outcome) => SweepEntry {
            label,
            metrics: Some(outcome.metrics),
            halted: outcome.halted,
            error: None,
        },
        Err(e) => SweepEntry {
            label,
            metrics: None,
            halted: None,
            error: Some(e.to_string()),
        },
    }
}

impl SweepSummary {
    /// Markdown comparison table of the headline metrics.
    pub fn markdown_table(&self) -> String {
        let mut out = String::new();
        out.push_str(
            "| configuration | median |d| (m) | max |d| (m) | median heading err (deg) | max heading err (deg) | sliding std avg (rad) | mean solve (ms) |\n",
        );
        out.push_str("|---|---|---|---|---|---|---|\n");
        for e in &self.entries {
            match &e.metrics {
                Some(m) => {
                    out.push_str(&format!(
                        "| {} | {:.4} | {:.4} | {:.3} | {:.3} | {:.5} | {:.2} |\n",
                        e.label,
                        m.lateral_error_median,
                        m.lateral_error_max,
                        m.heading_error_median.to_degrees(),
                        m.heading_error_max.to_degrees(),
                        m.sliding_std_avg,
                        1e3 * m.solve_time_mean,
                    ));
                }
                None => {
                    out.push_str(&format!(
                        "| {} | failed: {} | | | | | |\n",
                        e.label,
                        e.error.as_deref().unwrap_or("unknown")
                    ));
                }
            }
        }
        if !self.reductions_vs_first.is_empty() {
            out.push_str("\nMedian-error reduction vs first entry:\n\n");
            for (label, lat, head) in &self.reductions_vs_first {
                out.push_str(&format!(
                    "- {label}: lateral {lat:.1}%, heading {head:.1}%\n"
                ));
            }
        }
        out
    }
}

//! Command-line runner: simulate scenarios, sweep configurations,
//! characterize steady-state handling, and run the invariant suites.
//!
//! Exit codes: 0 on success, 1 on internal failure, 2 when the controller
//! halted mid-run, 3 on configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use awoisv_sim::{characterize, run_scenario, sweep, CharacterizeGrid, Scenario, SweepAxis};

#[derive(Parser)]
#[command(
    name = "awoisv-sim",
    about = "Closed-loop simulator for all-wheel omnidirectional steering path tracking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario from a JSON configuration file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the disturbance seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides config and AWOISV_SIM_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a family of scenarios varying one axis.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Sweep axis: "speed" (2, 4, 6, 8 m/s) or "variant".
        #[arg(long)]
        axis: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Steady-state handling characterization over the reference pose grids.
    Characterize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the randomized invariant suites.
    Validate,
}

fn resolve_out_dir(flag: Option<PathBuf>, scenario: &Scenario) -> PathBuf {
    flag.or_else(|| std::env::var_os("AWOISV_SIM_OUT").map(PathBuf::from))
        .or_else(|| scenario.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load_scenario(path: &PathBuf) -> Result<Scenario, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    Scenario::from_json(&text).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let mut scenario = match load_scenario(&config) {
                Ok(sc) => sc,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(3);
                }
            };
            if let Some(seed) = seed {
                scenario.disturbance.seed = seed;
            }
            let out_dir = resolve_out_dir(out, &scenario);
            match run_scenario(&scenario, Some(&out_dir)) {
                Ok(outcome) => {
                    let summary = serde_json::to_string_pretty(&outcome.metrics).unwrap();
                    let summary_path = out_dir.join(format!("{}_metrics.json", scenario.name));
                    if let Err(e) = std::fs::write(&summary_path, &summary) {
                        eprintln!("cannot write metrics: {e}");
                        return ExitCode::from(1);
                    }
                    println!("{summary}");
                    if let Some(trace) = &outcome.trace_path {
                        println!("trace: {}", trace.display());
                    }
                    match &outcome.halted {
                        Some(reason) => {
                            eprintln!("controller halted: {reason}");
                            ExitCode::from(2)
                        }
                        None => ExitCode::SUCCESS,
                    }
                }
                Err(e) => {
                    eprintln!("run failed: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Sweep { config, axis, out } => {
            let scenario = match load_scenario(&config) {
                Ok(sc) => sc,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(3);
                }
            };
            let axis = match axis.as_str() {
                "speed" => SweepAxis::default_speeds(),
                "variant" => SweepAxis::default_variants(),
                other => {
                    eprintln!("config error: unknown axis {other:?} (use speed|variant)");
                    return ExitCode::from(3);
                }
            };
            let out_dir = resolve_out_dir(out, &scenario);
            match sweep(&scenario, &axis, Some(&out_dir)) {
                Ok(summary) => {
                    print!("{}", summary.markdown_table());
                    let any_halt = summary.entries.iter().any(|e| e.halted.is_some());
                    if any_halt {
                        ExitCode::from(2)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("sweep failed: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Characterize { config, out } => {
            let scenario = match load_scenario(&config) {
                Ok(sc) => sc,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(3);
                }
            };
            let out_dir = resolve_out_dir(out, &scenario);
            if let Err(e) = std::fs::create_dir_all(&out_dir) {
                eprintln!("cannot create {}: {e}", out_dir.display());
                return ExitCode::from(1);
            }
            for grid in CharacterizeGrid::reference_grids() {
                match characterize(&grid, &scenario.vehicle, scenario.plant.speed_gain) {
                    Ok(report) => {
                        let json = serde_json::to_string_pretty(&report).unwrap();
                        let path = out_dir.join(format!("characterize_{}.json", grid.name));
                        if let Err(e) = std::fs::write(&path, json) {
                            eprintln!("cannot write {}: {e}", path.display());
                            return ExitCode::from(1);
                        }
                        println!("grid {}:", grid.name);
                        for row in &report.rows {
                            println!(
                                "  beta_r {:+6.1} deg: {:?} (radius varies {:.1}%)",
                                row.beta_r.to_degrees(),
                                row.trend,
                                100.0 * row.radius_variation
                            );
                        }
                    }
                    Err(e) => {
                        eprintln!("characterize failed: {e}");
                        return ExitCode::from(1);
                    }
                }
            }
            ExitCode::SUCCESS
        }
        Command::Validate => {
            if awoisv_sim::validate::run_all() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}

//! Command-line front end: scenario simulation, stability analysis,
//! parameter-region sweeps, and pole-placement gain selection.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use platoon_core::{
    AxisSpec, ChannelParams, SweepAxis, denominator_coeffs, pole_placement_gains, region_sweep,
    run_scenario, string_stable_norm, sufficient_conditions, validate_platoon,
};

/// A failure surfaced to the user as `error[CODE]: message` on stderr.
#[derive(Debug)]
pub struct CliError {
    code: &'static str,
    message: String,
}

impl CliError {
    pub fn parse(message: String) -> Self {
        Self {
            code: "parse",
            message,
        }
    }

    pub fn config(message: String) -> Self {
        Self {
            code: "config",
            message,
        }
    }

    pub fn io(message: String) -> Self {
        Self {
            code: "io",
            message,
        }
    }

    pub fn analysis(message: String) -> Self {
        Self {
            code: "analysis",
            message,
        }
    }

    pub fn sim(message: String) -> Self {
        Self {
            code: "sim",
            message,
        }
    }

    pub fn code(&self) -> &'static str {
        self.code
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

#[derive(Parser)]
#[command(
    name = "platoon",
    version,
    about = "Predictor-feedback CACC platoons: simulation and string-stability analysis"
)]
struct RunManifest {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop scenario and write time-series CSV files.
    Simulate {
        /// Scenario config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the CSV files.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Config overrides, e.g. `--set platoon.D=0`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Print the stability report for every follower in a scenario.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Sweep two parameter axes and write the string-stability grid.
    Region {
        #[arg(long)]
        config: PathBuf,
        /// First axis as `name:start:stop:steps` (name: h, dc, D, or p).
        #[arg(long)]
        axis1: String,
        /// Second axis, same format.
        #[arg(long)]
        axis2: String,
        /// Comma-separated MPF depths, e.g. `1,2,3,4,5`.
        #[arg(long, default_value = "1,2,3")]
        m: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Compute the gain triple that places all closed-loop poles at `p`.
    Gains {
        /// Desired (negative) triple pole.
        #[arg(long, allow_hyphen_values = true)]
        p: f64,
        /// Time headway.
        #[arg(long)]
        h: f64,
        /// MPF depth.
        #[arg(long)]
        m: usize,
        /// Engine lag.
        #[arg(long)]
        tau: f64,
    },
    /// Run a scenario as configured and again with every follower reduced
    /// to single-predecessor topology; write both result sets and a
    /// comparison table.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn parse_axis(spec: &str) -> Result<AxisSpec, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 4 {
        return Err(CliError::config(format!(
            "axis '{spec}' must be name:start:stop:steps"
        )));
    }
    let axis = SweepAxis::parse(parts[0]).map_err(|e| CliError::config(e.to_string()))?;
    let number = |field: &str, what: &str| -> Result<f64, CliError> {
        field
            .parse()
            .map_err(|_| CliError::config(format!("axis '{spec}': bad {what} '{field}'")))
    };
    let steps: usize = parts[3]
        .parse()
        .map_err(|_| CliError::config(format!("axis '{spec}': bad step count '{}'", parts[3])))?;
    Ok(AxisSpec {
        axis,
        start: number(parts[1], "start")?,
        stop: number(parts[2], "stop")?,
        steps,
    })
}

fn parse_depths(spec: &str) -> Result<Vec<usize>, CliError> {
    let depths: Result<Vec<usize>, _> = spec.split(',').map(|s| s.trim().parse()).collect();
    let depths = depths.map_err(|_| CliError::config(format!("bad depth list '{spec}'")))?;
    if depths.is_empty() || depths.contains(&0) {
        return Err(CliError::config(format!("bad depth list '{spec}'")));
    }
    Ok(depths)
}

fn run(manifest: RunManifest) -> Result<(), CliError> {
    match manifest.command {
        Command::Simulate { config, out, set } => {
            let validated = config::load_scenario(&config, &set)?;
            let result = run_scenario(&validated).map_err(|e| CliError::sim(e.to_string()))?;
            let files = output::write_timeseries_csv(&result, &out)?;
            println!(
                "simulated {} vehicles over {} samples (steady speed {} m/s)",
                result.vehicle_count(),
                result.sample_count(),
                result.steady_speed
            );
            for path in files {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Analyze { config, set } => {
            let validated = config::load_scenario(&config, &set)?;
            let cfg = validated.get();
            for index in 1..cfg.vehicles.len() {
                let params = ChannelParams::for_vehicle(&cfg.vehicles, index, cfg.actuation_delay);
                let mut verdict = sufficient_conditions(&params);
                if verdict.routh_ok {
                    verdict.norm = Some(
                        string_stable_norm(&params)
                            .map_err(|e| CliError::analysis(e.to_string()))?,
                    );
                }
                print!("{}", output::verdict_lines(index, &params, &verdict));
            }
            Ok(())
        }
        Command::Region {
            config,
            axis1,
            axis2,
            m,
            out,
            set,
        } => {
            let template = config::load_analysis(&config, &set)?;
            let ax1 = parse_axis(&axis1)?;
            let ax2 = parse_axis(&axis2)?;
            let depths = parse_depths(&m)?;
            let grid = region_sweep(&ax1, &ax2, &template, &depths)
                .map_err(|e| CliError::analysis(e.to_string()))?;
            let path = output::write_region_csv(&grid, &out)?;
            for (m_idx, depth) in depths.iter().enumerate() {
                let stable = grid.stable[m_idx].iter().filter(|s| **s).count();
                println!(
                    "m={depth}: {stable}/{} grid points string stable",
                    grid.stable[m_idx].len()
                );
            }
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Gains { p, h, m, tau } => {
            let (alpha, b, c) = pole_placement_gains(p, h, m, tau)
                .map_err(|e| CliError::analysis(e.to_string()))?;
            println!("alpha = {alpha:.12}");
            println!("b = {b:.12}");
            println!("c = {c:.12}");
            let params = ChannelParams::homogeneous(m, tau, h, 0.0, alpha, b, c, 0.0);
            let [_, d2, d1, d0] = denominator_coeffs(&params);
            println!("closed-loop denominator: s^3 + {d2:.9} s^2 + {d1:.9} s + {d0:.9}");
            Ok(())
        }
        Command::Compare { config, out, set } => {
            let validated = config::load_scenario(&config, &set)?;
            let multi = run_scenario(&validated).map_err(|e| CliError::sim(e.to_string()))?;

            let mut single_cfg = validated.get().clone();
            for vehicle in single_cfg.vehicles.iter_mut().skip(1) {
                vehicle.mpf_depth = 1;
            }
            let single_validated =
                validate_platoon(single_cfg).map_err(|e| CliError::config(e.to_string()))?;
            let single =
                run_scenario(&single_validated).map_err(|e| CliError::sim(e.to_string()))?;

            output::write_timeseries_csv(&multi, &out.join("mpf"))?;
            output::write_timeseries_csv(&single, &out.join("single"))?;
            let path = output::write_compare_csv(&multi, &single, &out)?;
            let amplified = single
                .metrics
                .iter()
                .filter(|metrics| metrics.amplification)
                .count();
            println!(
                "configured depths: max overshoot {:.6} m/s; single-predecessor: max overshoot {:.6} m/s, {amplified} vehicles amplify",
                multi
                    .metrics
                    .iter()
                    .map(|metrics| metrics.overshoot)
                    .fold(f64::MIN, f64::max),
                single
                    .metrics
                    .iter()
                    .map(|metrics| metrics.overshoot)
                    .fold(f64::MIN, f64::max),
            );
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("PLATOON_THREADS")
        && let Ok(count) = threads.parse::<usize>()
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(count)
            .build_global();
    }
    let manifest = RunManifest::parse();
    match run(manifest) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error[{}]: {}", error.code(), error);
            ExitCode::FAILURE
        }
    }
}

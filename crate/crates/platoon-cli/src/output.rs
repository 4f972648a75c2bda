//! CSV artifacts and the printed stability report.
//!
//! All numeric columns are written with nine digits after the decimal
//! point, which keeps the files byte-deterministic and makes a re-parse
//! reproduce the series at the printed precision.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use platoon_core::{ChannelParams, RegionGrid, SimulationResult, StabilityVerdict};

use crate::CliError;

fn fixed(value: f64) -> String {
    format!("{value:.9}")
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn series_csv(time: &[f64], per_vehicle: &[Vec<f64>]) -> String {
    let mut out = String::from("t");
    for i in 0..per_vehicle.len() {
        let _ = write!(out, ",veh{i}");
    }
    out.push('\n');
    for (k, t) in time.iter().enumerate() {
        out.push_str(&fixed(*t));
        for series in per_vehicle {
            out.push(',');
            out.push_str(&fixed(series[k]));
        }
        out.push('\n');
    }
    out
}

/// Writes `speed.csv`, `spacing.csv`, `accel.csv`, `control.csv`, and
/// `metrics.csv` under `dir`, returning the written paths.
pub fn write_timeseries_csv(
    result: &SimulationResult,
    dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    let quantities: [(&str, &Vec<Vec<f64>>); 4] = [
        ("speed.csv", &result.speed),
        ("spacing.csv", &result.spacing),
        ("accel.csv", &result.accel),
        ("control.csv", &result.control),
    ];
    let mut written = Vec::new();
    for (name, series) in quantities {
        let path = dir.join(name);
        write_file(&path, &series_csv(&result.time, series))?;
        written.push(path);
    }

    let mut metrics = String::from(
        "vehicle,peak_speed,overshoot,l2_speed_deviation,terminal_speed_error,terminal_spacing_error,min_spacing,amplification\n",
    );
    for (i, m) in result.metrics.iter().enumerate() {
        let _ = writeln!(
            metrics,
            "{i},{},{},{},{},{},{},{}",
            fixed(m.peak_speed),
            fixed(m.overshoot),
            fixed(m.l2_speed_deviation),
            fixed(m.terminal_speed_error),
            fixed(m.terminal_spacing_error),
            fixed(m.min_spacing),
            u8::from(m.amplification),
        );
    }
    let path = dir.join("metrics.csv");
    write_file(&path, &metrics)?;
    written.push(path);
    Ok(written)
}

/// Writes a region grid as `x,y,m,stable` rows, one block per MPF depth,
/// each block row-major in (axis1, axis2).
pub fn write_region_csv(grid: &RegionGrid, dir: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    let v1 = grid.axis1.values();
    let v2 = grid.axis2.values();
    let mut out = String::from("x,y,m,stable\n");
    for (m_idx, &m) in grid.mpf_depths.iter().enumerate() {
        for (i, x) in v1.iter().enumerate() {
            for (j, y) in v2.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{m},{}",
                    fixed(*x),
                    fixed(*y),
                    u8::from(grid.at(m_idx, i, j)),
                );
            }
        }
    }
    let path = dir.join("grid.csv");
    write_file(&path, &out)?;
    Ok(path)
}

/// Per-vehicle comparison of two runs of the same scenario.
pub fn write_compare_csv(
    multi: &SimulationResult,
    single: &SimulationResult,
    dir: &Path,
) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    let mut out = String::from(
        "vehicle,l2_mpf,l2_single,peak_mpf,peak_single,overshoot_mpf,overshoot_single,amplification_mpf,amplification_single\n",
    );
    for i in 0..multi.vehicle_count() {
        let a = &multi.metrics[i];
        let b = &single.metrics[i];
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{}",
            fixed(a.l2_speed_deviation),
            fixed(b.l2_speed_deviation),
            fixed(a.peak_speed),
            fixed(b.peak_speed),
            fixed(a.overshoot),
            fixed(b.overshoot),
            u8::from(a.amplification),
            u8::from(b.amplification),
        );
    }
    let path = dir.join("compare_metrics.csv");
    write_file(&path, &out)?;
    Ok(path)
}

/// Renders the stability report for one follower.
pub fn verdict_lines(index: usize, params: &ChannelParams, verdict: &StabilityVerdict) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "vehicle {index} (m={}, tau={}, h={}):",
        params.mpf_depth, params.tau, params.h
    );
    let _ = writeln!(
        out,
        "  individually stable: {} (margin {:.4})",
        verdict.routh_ok, verdict.routh_margin
    );
    let gammas = verdict
        .gammas
        .iter()
        .map(|g| format!("{g:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    let _ = writeln!(
        out,
        "  sufficient conditions: {} (beta_bar {:.4}, beta {:.4}, gamma_bar {:.4}, gamma_n [{gammas}])",
        verdict.sufficient_ok, verdict.beta_bar, verdict.beta, verdict.gamma_bar
    );
    match &verdict.norm {
        Some(report) => {
            let per = report
                .per_channel
                .iter()
                .enumerate()
                .map(|(k, norm)| format!("n={}: {norm:.6}", k + 1))
                .collect::<Vec<_>>()
                .join(", ");
            let _ = writeln!(
                out,
                "  norm criterion: {} (sum {:.6}; {per})",
                report.stable, report.sum_norm
            );
        }
        None => {
            let _ = writeln!(out, "  norm criterion: skipped (unstable channel)");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use platoon_core::{AxisSpec, SweepAxis, SweepTemplate, VehicleMetrics, compute_metrics};

    fn tiny_result() -> SimulationResult {
        let mut result = SimulationResult {
            time: vec![0.0, 0.01, 0.02],
            spacing: vec![vec![0.0; 3], vec![5.598, 5.6, 5.602]],
            speed: vec![vec![14.0; 3], vec![13.9, 14.0, 14.1]],
            accel: vec![vec![0.0; 3], vec![0.1, 0.1, 0.1]],
            control: vec![vec![0.0; 3], vec![0.2, 0.2, 0.2]],
            headways: vec![0.0, 0.4],
            mpf_depths: vec![0, 1],
            lengths: vec![0.0, 0.0],
            steady_speed: 14.0,
            metrics: Vec::new(),
        };
        result.metrics = compute_metrics(&result, 14.0);
        result
    }

    #[test]
    fn timeseries_files_have_header_and_one_row_per_sample() {
        let dir = tempfile::tempdir().unwrap();
        let result = tiny_result();
        let files = write_timeseries_csv(&result, dir.path()).unwrap();
        assert_eq!(files.len(), 5);
        let speed = std::fs::read_to_string(dir.path().join("speed.csv")).unwrap();
        let lines: Vec<&str> = speed.lines().collect();
        assert_eq!(lines.len(), 4); // header + 3 samples
        assert_eq!(lines[0], "t,veh0,veh1");
        assert_eq!(lines[1].split(',').count(), 3);
    }

    #[test]
    fn written_series_reparse_to_the_printed_precision() {
        let dir = tempfile::tempdir().unwrap();
        let result = tiny_result();
        write_timeseries_csv(&result, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("spacing.csv")).unwrap();
        for (k, line) in text.lines().skip(1).enumerate() {
            let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
            assert!((fields[0] - result.time[k]).abs() < 5e-10);
            for i in 0..2 {
                assert!((fields[i + 1] - result.spacing[i][k]).abs() < 5e-10);
            }
        }
    }

    #[test]
    fn metrics_csv_has_one_row_per_vehicle() {
        let dir = tempfile::tempdir().unwrap();
        let result = tiny_result();
        write_timeseries_csv(&result, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn region_csv_is_row_major_per_depth() {
        let template = SweepTemplate {
            tau: 0.1,
            alpha: 5.0,
            b: 10.0,
            c: 2.0,
            h: 1.0,
            comm_delay: 0.0,
            actuation_delay: 0.7,
            pole: None,
        };
        let ax1 = AxisSpec {
            axis: SweepAxis::Headway,
            start: 0.5,
            stop: 1.5,
            steps: 3,
        };
        let ax2 = AxisSpec {
            axis: SweepAxis::CommDelay,
            start: 0.0,
            stop: 0.1,
            steps: 2,
        };
        let grid = platoon_core::region_sweep(&ax1, &ax2, &template, &[1, 2]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = write_region_csv(&grid, dir.path()).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,y,m,stable");
        assert_eq!(lines.len(), 1 + 2 * 3 * 2);
        // First block is m=1, rows ordered h-major then dc.
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first[2], "1");
        assert!(first[0].starts_with("0.5"));
        let second: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(second[0], first[0]);
        assert_ne!(second[1], first[1]);
        // Verdicts in the file match the in-memory grid.
        for (row, line) in lines[1..].iter().enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            let (m_idx, rest) = (row / 6, row % 6);
            let (i, j) = (rest / 2, rest % 2);
            assert_eq!(fields[3] == "1", grid.at(m_idx, i, j));
        }
    }

    #[test]
    fn verdict_report_mentions_all_parts() {
        let params = ChannelParams::homogeneous(3, 0.1, 1.0, 0.0, 5.0, 10.0, 2.0, 0.7);
        let mut verdict = platoon_core::sufficient_conditions(&params);
        verdict.norm = Some(platoon_core::string_stable_norm(&params).unwrap());
        let text = verdict_lines(4, &params, &verdict);
        assert!(text.contains("vehicle 4"));
        assert!(text.contains("individually stable: true"));
        assert!(text.contains("norm criterion: true"));
    }

    #[test]
    fn compare_csv_shape() {
        let dir = tempfile::tempdir().unwrap();
        let mut result = tiny_result();
        result.metrics[1].amplification = false;
        let mut single = result.clone();
        single.metrics[1] = VehicleMetrics {
            amplification: true,
            ..single.metrics[1].clone()
        };
        let path = write_compare_csv(&result, &single, dir.path()).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[2].ends_with(",0,1"));
    }
}

//! Closed-loop simulation of an N+1 vehicle platoon with delay buffers.
//!
//! Each step reads delayed measurements and stored inputs, evaluates the
//! predictor-feedback law per follower, applies the dead-time-delayed
//! inputs to the third-order dynamics, and advances every vehicle with one
//! Euler step. The leader either realizes a piecewise-linear speed profile
//! through its own lag dynamics or replays a recorded speed series.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::controller::{ControllerError, ControllerRealization, assemble_measurement_vector};
use crate::history::{HistoryError, SignalHistory, StateHistory};
use crate::model::{ValidatedConfig, euler_step, vehicle_derivative};

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("profile has no samples")]
    EmptyFile,
    #[error("profile times must increase strictly (row {row})")]
    NonMonotoneTime { row: usize },
    #[error("profile speeds must be finite and nonnegative (row {row}: {value})")]
    NegativeSpeed { row: usize, value: f64 },
    #[error("expected header `t,v`")]
    BadHeader,
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("cannot read profile: {0}")]
    Io(String),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    History(#[from] HistoryError),
}

/// Speed trajectory the string leader realizes.
#[derive(Debug, Clone, PartialEq)]
pub enum LeaderProfile {
    /// `(time, speed)` knots joined linearly; the leader's third-order lag
    /// is driven by the profile's acceleration.
    Piecewise { knots: Vec<(f64, f64)> },
    /// Recorded speed series resampled on the simulation grid; the leader
    /// state replays it directly since the recording already embeds the
    /// source vehicle's dynamics.
    Data {
        ts: f64,
        speed: Vec<f64>,
        accel: Vec<f64>,
    },
}

impl LeaderProfile {
    pub fn constant(speed: f64) -> Self {
        Self::Piecewise {
            knots: vec![(0.0, speed)],
        }
    }

    pub fn from_knots(knots: Vec<(f64, f64)>) -> Result<Self, ProfileError> {
        let profile = Self::Piecewise { knots };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        match self {
            Self::Piecewise { knots } => {
                if knots.is_empty() {
                    return Err(ProfileError::EmptyFile);
                }
                for (row, pair) in knots.iter().enumerate() {
                    if !pair.1.is_finite() || pair.1 < 0.0 {
                        return Err(ProfileError::NegativeSpeed { row, value: pair.1 });
                    }
                    if row > 0 && pair.0 <= knots[row - 1].0 {
                        return Err(ProfileError::NonMonotoneTime { row });
                    }
                }
                Ok(())
            }
            Self::Data { speed, .. } => {
                if speed.is_empty() {
                    return Err(ProfileError::EmptyFile);
                }
                Ok(())
            }
        }
    }

    pub fn is_data(&self) -> bool {
        matches!(self, Self::Data { .. })
    }

    /// Profile speed at `t`; held constant outside the covered range.
    pub fn speed_at(&self, t: f64) -> f64 {
        match self {
            Self::Piecewise { knots } => {
                if t <= knots[0].0 {
                    return knots[0].1;
                }
                for pair in knots.windows(2) {
                    let [(t0, v0), (t1, v1)] = [pair[0], pair[1]];
                    if t < t1 {
                        return v0 + (t - t0) / (t1 - t0) * (v1 - v0);
                    }
                }
                knots.last().unwrap().1
            }
            Self::Data { ts, speed, .. } => {
                let idx = ((t / ts).round().max(0.0) as usize).min(speed.len() - 1);
                speed[idx]
            }
        }
    }

    /// Profile acceleration at `t` (right-continuous segment slope for
    /// piecewise profiles, central differences for data); zero outside
    /// the covered range.
    pub fn accel_at(&self, t: f64) -> f64 {
        match self {
            Self::Piecewise { knots } => {
                if t < knots[0].0 {
                    return 0.0;
                }
                for pair in knots.windows(2) {
                    let [(t0, v0), (t1, v1)] = [pair[0], pair[1]];
                    if t < t1 {
                        debug_assert!(t >= t0);
                        return (v1 - v0) / (t1 - t0);
                    }
                }
                0.0
            }
            Self::Data { ts, accel, .. } => {
                if t > ts * (accel.len() - 1) as f64 + 0.5 * ts {
                    return 0.0;
                }
                let idx = ((t / ts).round().max(0.0) as usize).min(accel.len() - 1);
                accel[idx]
            }
        }
    }

    /// The steady speed the profile ends at.
    pub fn final_speed(&self) -> f64 {
        match self {
            Self::Piecewise { knots } => knots.last().unwrap().1,
            Self::Data { speed, .. } => *speed.last().unwrap(),
        }
    }

    pub fn peak_speed(&self) -> f64 {
        match self {
            Self::Piecewise { knots } => knots.iter().map(|k| k.1).fold(f64::MIN, f64::max),
            Self::Data { speed, .. } => speed.iter().copied().fold(f64::MIN, f64::max),
        }
    }
}

/// Loads a `t,v` CSV (seconds, m/s), re-anchors it at `t = 0`, resamples
/// the speed onto the `ts` grid by linear interpolation, and derives the
/// acceleration by central differences.
pub fn load_leader_profile(path: &Path, ts: f64) -> Result<LeaderProfile, ProfileError> {
    let text = fs::read_to_string(path).map_err(|e| ProfileError::Io(e.to_string()))?;
    parse_leader_csv(&text, ts)
}

pub(crate) fn parse_leader_csv(text: &str, ts: f64) -> Result<LeaderProfile, ProfileError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let header = lines.next().ok_or(ProfileError::EmptyFile)?;
    let normalized: String = header.1.chars().filter(|c| !c.is_whitespace()).collect();
    if normalized != "t,v" {
        return Err(ProfileError::BadHeader);
    }

    let mut samples: Vec<(f64, f64)> = Vec::new();
    for (line_no, line) in lines {
        let row = line_no + 1;
        let mut fields = line.split(',');
        let mut parse_field = |name: &str| -> Result<f64, ProfileError> {
            fields
                .next()
                .ok_or_else(|| ProfileError::BadRow {
                    row,
                    message: format!("missing {name}"),
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| ProfileError::BadRow {
                    row,
                    message: format!("bad {name}: {e}"),
                })
        };
        let t = parse_field("time")?;
        let v = parse_field("speed")?;
        if !v.is_finite() || v < 0.0 {
            return Err(ProfileError::NegativeSpeed { row, value: v });
        }
        if let Some(last) = samples.last()
            && t <= last.0
        {
            return Err(ProfileError::NonMonotoneTime { row });
        }
        samples.push((t, v));
    }
    if samples.is_empty() {
        return Err(ProfileError::EmptyFile);
    }

    let t0 = samples[0].0;
    let duration = samples.last().unwrap().0 - t0;
    let n = (duration / ts).floor() as usize + 1;
    let mut speed = Vec::with_capacity(n);
    let mut cursor = 0;
    for k in 0..n {
        let t = t0 + k as f64 * ts;
        while cursor + 1 < samples.len() && samples[cursor + 1].0 < t {
            cursor += 1;
        }
        let value = if cursor + 1 == samples.len() {
            samples[cursor].1
        } else {
            let (ta, va) = samples[cursor];
            let (tb, vb) = samples[cursor + 1];
            va + (t - ta) / (tb - ta) * (vb - va)
        };
        speed.push(value);
    }

    let mut accel = vec![0.0; n];
    if n >= 2 {
        accel[0] = (speed[1] - speed[0]) / ts;
        accel[n - 1] = (speed[n - 1] - speed[n - 2]) / ts;
        for k in 1..n - 1 {
            accel[k] = (speed[k + 1] - speed[k - 1]) / (2.0 * ts);
        }
    }

    Ok(LeaderProfile::Data { ts, speed, accel })
}

/// Post-run quantities per vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleMetrics {
    pub peak_speed: f64,
    /// Peak speed excess above the steady speed (zero if none).
    pub overshoot: f64,
    /// L2 norm of the speed deviation from the steady speed.
    pub l2_speed_deviation: f64,
    /// Largest speed error over the final tenth of the horizon.
    pub terminal_speed_error: f64,
    /// Largest `spacing - headway * speed` over the final tenth.
    pub terminal_spacing_error: f64,
    pub min_spacing: f64,
    /// True when this vehicle's L2 deviation exceeds the maximum over the
    /// predecessors it communicates with.
    pub amplification: bool,
}

/// Time axis, per-vehicle series, and metrics of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub time: Vec<f64>,
    pub spacing: Vec<Vec<f64>>,
    pub speed: Vec<Vec<f64>>,
    pub accel: Vec<Vec<f64>>,
    pub control: Vec<Vec<f64>>,
    pub headways: Vec<f64>,
    pub mpf_depths: Vec<usize>,
    pub lengths: Vec<f64>,
    /// Steady speed the leader profile settles at; reference for metrics.
    pub steady_speed: f64,
    pub metrics: Vec<VehicleMetrics>,
}

impl SimulationResult {
    pub fn vehicle_count(&self) -> usize {
        self.speed.len()
    }

    pub fn sample_count(&self) -> usize {
        self.time.len()
    }
}

/// Reconstructs absolute positions from the spacing series: the leader
/// position integrates its speed from `x_0(0) = 0`, each follower sits one
/// spacing plus one vehicle length behind its predecessor.
pub fn reconstruct_positions(result: &SimulationResult) -> Vec<Vec<f64>> {
    let n = result.vehicle_count();
    let samples = result.sample_count();
    let ts = result.time[1] - result.time[0];
    let mut positions = vec![vec![0.0; samples]; n];
    for k in 1..samples {
        positions[0][k] = positions[0][k - 1] + ts * result.speed[0][k - 1];
    }
    for i in 1..n {
        let (upstream, rest) = positions.split_at_mut(i);
        let predecessor = &upstream[i - 1];
        for (k, position) in rest[0].iter_mut().enumerate() {
            *position = predecessor[k] - result.spacing[i][k] - result.lengths[i];
        }
    }
    positions
}

/// Runs the closed loop over the configured horizon.
///
/// Per step: the current states are appended to the measurement
/// histories, every follower evaluates its predictor-feedback input (the
/// quadrature endpoint involving the not-yet-known ego input is resolved
/// exactly, since it enters linearly), the dead-time-delayed inputs drive
/// the dynamics, and all vehicles advance one Euler step.
pub fn run_scenario(config: &ValidatedConfig) -> Result<SimulationResult, SimError> {
    let cfg = config.get();
    let n = cfg.vehicles.len();
    let ts = cfg.sample_time;
    let steps = (cfg.horizon / ts).round() as usize;
    let delay_steps = (cfg.actuation_delay / ts).round() as usize;
    let max_dc_steps = cfg
        .vehicles
        .iter()
        .map(|v| (v.comm_delay / ts).round() as usize)
        .max()
        .unwrap_or(0);
    let capacity = delay_steps + max_dc_steps + 2;
    let profile = &cfg.leader_profile;
    let data_mode = profile.is_data();

    let mut controllers = Vec::with_capacity(n.saturating_sub(1));
    let mut comm_delays: Vec<Vec<f64>> = Vec::with_capacity(n.saturating_sub(1));
    for i in 1..n {
        let ego = &cfg.vehicles[i];
        let predecessors: Vec<_> = (1..=ego.mpf_depth)
            .map(|j| cfg.vehicles[i - j].clone())
            .collect();
        comm_delays.push(predecessors.iter().map(|p| p.comm_delay).collect());
        controllers.push(ControllerRealization::new(
            ego,
            &predecessors,
            cfg.actuation_delay,
            ts,
        )?);
    }

    let mut states = cfg.initial_states.clone();
    states[0].spacing = 0.0;
    if data_mode {
        states[0].speed = profile.speed_at(0.0);
        states[0].accel = profile.accel_at(0.0);
    }

    let mut state_histories: Vec<StateHistory> = (0..n)
        .map(|i| StateHistory::new(ts, 0.0, capacity, states[i]))
        .collect();
    let mut input_histories: Vec<SignalHistory> = (0..n)
        .map(|_| SignalHistory::new(ts, 0.0, capacity, 0.0))
        .collect();

    let mut result = SimulationResult {
        time: Vec::with_capacity(steps + 1),
        spacing: vec![Vec::with_capacity(steps + 1); n],
        speed: vec![Vec::with_capacity(steps + 1); n],
        accel: vec![Vec::with_capacity(steps + 1); n],
        control: vec![Vec::with_capacity(steps + 1); n],
        headways: cfg.vehicles.iter().map(|v| v.headway).collect(),
        mpf_depths: cfg.vehicles.iter().map(|v| v.mpf_depth).collect(),
        lengths: cfg.vehicles.iter().map(|v| v.length).collect(),
        steady_speed: profile.final_speed(),
        metrics: Vec::new(),
    };

    for k in 0..=steps {
        let t = k as f64 * ts;
        if data_mode {
            states[0].speed = profile.speed_at(t);
            states[0].accel = profile.accel_at(t);
        }
        for (history, state) in state_histories.iter_mut().zip(&states) {
            history.push(state);
        }

        // The leader broadcasts its planned input one dead time ahead, so
        // the realized acceleration follows the profile without lag bias.
        let leader_u = profile.accel_at(t + cfg.actuation_delay);
        input_histories[0].push(leader_u);
        let mut controls = vec![0.0; n];
        controls[0] = leader_u;

        for i in 1..n {
            let controller = &controllers[i - 1];
            let m = controller.mpf_depth();
            let dcs = &comm_delays[i - 1];
            let pred_states: Vec<&StateHistory> =
                (1..=m).map(|j| &state_histories[i - j]).collect();
            let xbar = assemble_measurement_vector(&states[i], &pred_states, dcs, t)?;

            let u = if controller.delay_steps() == 0 {
                let u = controller.gain().dot(xbar.as_vector());
                input_histories[i].push(u);
                u
            } else {
                input_histories[i].push(0.0);
                let (before, rest) = input_histories.split_at_mut(i);
                let pred_inputs: Vec<&SignalHistory> = (1..=m).map(|j| &before[i - j]).collect();
                let q_partial =
                    controller.predictor_state(&xbar, &rest[0], &pred_inputs, dcs, t)?;
                let u = controller.predictor_control(&q_partial)
                    / (1.0 - 0.5 * ts * controller.gain_dot_ego_b());
                rest[0].replace_last(u);
                u
            };
            controls[i] = u;
        }

        result.time.push(t);
        for i in 0..n {
            result.spacing[i].push(states[i].spacing);
            result.speed[i].push(states[i].speed);
            result.accel[i].push(states[i].accel);
            result.control[i].push(controls[i]);
        }

        if k == steps {
            break;
        }
        let predecessor_speeds: Vec<f64> = states.iter().map(|s| s.speed).collect();
        for i in 0..n {
            if i == 0 && data_mode {
                continue;
            }
            let delayed_u = input_histories[i].value_at(t - cfg.actuation_delay)?;
            let v_pred = if i == 0 {
                states[0].speed // leader spacing derivative stays zero
            } else {
                predecessor_speeds[i - 1]
            };
            let deriv = vehicle_derivative(&states[i], v_pred, delayed_u, cfg.vehicles[i].tau);
            states[i] = euler_step(&states[i], &deriv, ts);
        }
    }

    result.metrics = compute_metrics(&result, result.steady_speed);
    Ok(result)
}

/// Recomputes the per-vehicle metrics of a run against the steady speed
/// `v_ss`. Steady-state errors are taken over the final tenth of the
/// horizon; the L2 deviation integrates over the whole run.
pub fn compute_metrics(result: &SimulationResult, v_ss: f64) -> Vec<VehicleMetrics> {
    let n = result.vehicle_count();
    let samples = result.sample_count();
    let ts = if samples > 1 {
        result.time[1] - result.time[0]
    } else {
        1.0
    };
    let tail_start = samples - (samples / 10).max(1);

    let l2: Vec<f64> = (0..n)
        .map(|i| {
            let sq = |v: f64| (v - v_ss) * (v - v_ss);
            let series = &result.speed[i];
            let mut total = 0.0;
            for k in 0..samples.saturating_sub(1) {
                total += 0.5 * ts * (sq(series[k]) + sq(series[k + 1]));
            }
            total.sqrt()
        })
        .collect();

    (0..n)
        .map(|i| {
            let speed = &result.speed[i];
            let peak_speed = speed.iter().copied().fold(f64::MIN, f64::max);
            let terminal_speed_error = speed[tail_start..]
                .iter()
                .map(|v| (v - v_ss).abs())
                .fold(0.0, f64::max);
            let (terminal_spacing_error, min_spacing) = if i == 0 {
                (0.0, 0.0)
            } else {
                let h = result.headways[i];
                let err = result.spacing[i][tail_start..]
                    .iter()
                    .zip(&speed[tail_start..])
                    .map(|(s, v)| (s - h * v).abs())
                    .fold(0.0, f64::max);
                let min = result.spacing[i].iter().copied().fold(f64::MAX, f64::min);
                (err, min)
            };
            let amplification = if i == 0 {
                false
            } else {
                let pred_max = (1..=result.mpf_depths[i])
                    .map(|j| l2[i - j])
                    .fold(0.0, f64::max);
                l2[i] > pred_max
            };
            VehicleMetrics {
                peak_speed,
                overshoot: (peak_speed - v_ss).max(0.0),
                l2_speed_deviation: l2[i],
                terminal_speed_error,
                terminal_spacing_error,
                min_spacing,
                amplification,
            }
        })
        .collect()
}

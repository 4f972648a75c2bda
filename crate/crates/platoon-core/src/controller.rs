//! Predictor-feedback controller for one ego vehicle.
//!
//! The ego vehicle `i` listens to its `m` nearest predecessors. Its
//! controller acts on the stacked measurement vector (length `3m + 2`)
//!
//! ```text
//! xbar = [ s_i, s_{i-1}, ..., s_{i-m+1},
//!          v_i, v_{i-1}, ..., v_{i-m},
//!          a_i, a_{i-1}, ..., a_{i-m} ]
//! ```
//!
//! where every non-ego entry is delayed by the broadcasting vehicle's
//! communication latency. The control input is `u_i = K^T q_i`, with `q_i`
//! a `D`-seconds-ahead reconstruction built from the state matrix `Gamma`,
//! the input vectors `B`, and trapezoidal quadrature over the stored input
//! histories of the ego vehicle and its predecessors.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::expm::matrix_exponential;
use crate::history::{HistoryError, SignalHistory, StateHistory};
use crate::model::{VehicleParams, VehicleState};

#[derive(Debug, Error, PartialEq)]
pub enum ControllerError {
    #[error("ego vehicle {index} has MPF depth {depth} but {supplied} predecessors were supplied")]
    PredecessorCount {
        index: usize,
        depth: usize,
        supplied: usize,
    },
    #[error("MPF depth must be at least 1 for a follower")]
    ZeroDepth,
    #[error("actuation delay {delay} is not a multiple of the sample time {sample_time}")]
    OffGridDelay { delay: f64, sample_time: f64 },
    #[error(transparent)]
    History(#[from] HistoryError),
}

/// Stacked measurement vector in the ordering documented at module level.
#[derive(Debug, Clone)]
pub struct MeasurementVector {
    values: DVector<f64>,
    mpf_depth: usize,
}

impl MeasurementVector {
    pub fn from_vector(values: DVector<f64>, mpf_depth: usize) -> Self {
        assert_eq!(values.len(), 3 * mpf_depth + 2);
        Self { values, mpf_depth }
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn mpf_depth(&self) -> usize {
        self.mpf_depth
    }
}

/// Builds the measurement vector at time `t` from the ego's current state
/// and the predecessors' histories, each read back by its own broadcast
/// delay. `predecessors` and `comm_delays` are ordered `i-1, ..., i-m`.
///
/// Note that the immediate predecessor's spacing and speed are read through
/// the delayed channel as well, even though an on-board sensor could supply
/// them undelayed.
pub fn assemble_measurement_vector(
    ego_state: &VehicleState,
    predecessors: &[&StateHistory],
    comm_delays: &[f64],
    t: f64,
) -> Result<MeasurementVector, HistoryError> {
    assert_eq!(predecessors.len(), comm_delays.len());
    let m = predecessors.len();
    let dim = 3 * m + 2;
    let mut values = DVector::zeros(dim);

    values[0] = ego_state.spacing;
    for k in 1..m {
        values[k] = predecessors[k - 1].spacing.delayed(t, comm_delays[k - 1])?;
    }
    values[m] = ego_state.speed;
    for k in 1..=m {
        values[m + k] = predecessors[k - 1].speed.delayed(t, comm_delays[k - 1])?;
    }
    values[2 * m + 1] = ego_state.accel;
    for k in 1..=m {
        values[2 * m + 1 + k] = predecessors[k - 1].accel.delayed(t, comm_delays[k - 1])?;
    }

    Ok(MeasurementVector {
        values,
        mpf_depth: m,
    })
}

/// State matrix of the stacked cascade. `predecessors` is ordered
/// `i-1, ..., i-m` and supplies the predecessor lags.
pub fn build_gamma(ego: &VehicleParams, predecessors: &[VehicleParams]) -> DMatrix<f64> {
    let m = predecessors.len();
    let dim = 3 * m + 2;
    let mut gamma = DMatrix::zeros(dim, dim);

    // Spacing rows: d/dt s_{i-k} = v_{i-k-1} - v_{i-k}.
    for k in 0..m {
        gamma[(k, m + k)] = -1.0;
        gamma[(k, m + k + 1)] = 1.0;
    }
    // Velocity rows: d/dt v_{i-k} = a_{i-k}.
    for k in 0..=m {
        gamma[(m + k, 2 * m + 1 + k)] = 1.0;
    }
    // Acceleration rows: d/dt a_{i-k} = -a_{i-k} / tau_{i-k}.
    for k in 0..=m {
        let tau = if k == 0 {
            ego.tau
        } else {
            predecessors[k - 1].tau
        };
        gamma[(2 * m + 1 + k, 2 * m + 1 + k)] = -1.0 / tau;
    }
    gamma
}

/// Input vectors `[B_i, B_{i-1}, ..., B_{i-m}]`; `B_{i-j}` has its single
/// nonzero entry `1/tau_{i-j}` in the acceleration row of vehicle `i-j`.
pub fn build_b_vectors(ego: &VehicleParams, predecessors: &[VehicleParams]) -> Vec<DVector<f64>> {
    let m = predecessors.len();
    let dim = 3 * m + 2;
    let mut vectors = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let tau = if j == 0 {
            ego.tau
        } else {
            predecessors[j - 1].tau
        };
        let mut b = DVector::zeros(dim);
        b[2 * m + 1 + j] = 1.0 / tau;
        vectors.push(b);
    }
    vectors
}

/// Feedback gain vector `K_i`; applied to the undelayed measurement vector
/// it reproduces the nominal delay-free control law exactly.
pub fn build_gain_vector(ego: &VehicleParams, predecessors: &[VehicleParams]) -> DVector<f64> {
    let m = predecessors.len();
    let mf = m as f64;
    let dim = 3 * m + 2;
    let mut k_vec = DVector::zeros(dim);

    for k in 0..m {
        k_vec[k] = (mf - k as f64) * ego.tau * ego.alpha / ego.headway;
    }
    k_vec[m] = -mf * ego.tau * (ego.alpha + ego.b);
    for k in 1..m {
        let pred_h = predecessors[k - 1].headway;
        k_vec[m + k] =
            ego.tau * ego.b - ego.tau * ego.alpha * (mf - k as f64) * pred_h / ego.headway;
    }
    k_vec[2 * m] = ego.tau * ego.b;
    k_vec[2 * m + 1] = -mf * ego.tau * ego.c;
    for k in 1..=m {
        k_vec[2 * m + 1 + k] = ego.tau * ego.c;
    }
    k_vec
}

/// Delay-free control law: spacing regulation toward `headway * speed`
/// plus speed and acceleration matching against the `m` predecessors.
///
/// `predecessors`/`predecessor_states` are ordered `i-1, ..., i-m`.
pub fn nominal_control(
    ego: &VehicleParams,
    predecessors: &[VehicleParams],
    ego_state: &VehicleState,
    predecessor_states: &[VehicleState],
) -> f64 {
    let m = predecessors.len();
    assert_eq!(predecessor_states.len(), m);
    let mf = m as f64;

    let mut spacing_term = 0.0;
    for n in 1..=m {
        // Vehicle i-n+1: the ego itself for n = 1, otherwise a predecessor.
        let (h, state) = if n == 1 {
            (ego.headway, ego_state)
        } else {
            (predecessors[n - 2].headway, &predecessor_states[n - 2])
        };
        spacing_term +=
            (mf - n as f64 + 1.0) * (h / ego.headway) * (state.spacing / h - state.speed);
    }

    let speed_term = predecessor_states.iter().map(|s| s.speed).sum::<f64>() - mf * ego_state.speed;
    let accel_term = predecessor_states.iter().map(|s| s.accel).sum::<f64>() - mf * ego_state.accel;

    ego.tau * (ego.alpha * spacing_term + ego.b * speed_term + ego.c * accel_term)
}

/// Precomputed controller matrices and quadrature kernels for one vehicle.
///
/// Immutable after construction; evaluation is pure given the histories.
#[derive(Debug, Clone)]
pub struct ControllerRealization {
    dim: usize,
    mpf_depth: usize,
    gamma: DMatrix<f64>,
    exp_gamma_d: DMatrix<f64>,
    b_vectors: Vec<DVector<f64>>,
    gain: DVector<f64>,
    actuation_delay: f64,
    sample_time: f64,
    delay_steps: usize,
    /// `kernels[j][k] = e^{Gamma * k * Ts} * B_{i-j}` for the quadrature
    /// grid offsets `k = 0..=delay_steps`.
    kernels: Vec<Vec<DVector<f64>>>,
    /// Trapezoidal weights on the same grid, scaled by `Ts`.
    quad_weights: Vec<f64>,
}

impl ControllerRealization {
    pub fn new(
        ego: &VehicleParams,
        predecessors: &[VehicleParams],
        actuation_delay: f64,
        sample_time: f64,
    ) -> Result<Self, ControllerError> {
        if ego.mpf_depth == 0 {
            return Err(ControllerError::ZeroDepth);
        }
        if predecessors.len() != ego.mpf_depth {
            return Err(ControllerError::PredecessorCount {
                index: ego.index,
                depth: ego.mpf_depth,
                supplied: predecessors.len(),
            });
        }
        let steps_raw = actuation_delay / sample_time;
        let delay_steps = steps_raw.round();
        if (steps_raw - delay_steps).abs() > 1e-6 {
            return Err(ControllerError::OffGridDelay {
                delay: actuation_delay,
                sample_time,
            });
        }
        let delay_steps = delay_steps as usize;

        let m = ego.mpf_depth;
        let dim = 3 * m + 2;
        let gamma = build_gamma(ego, predecessors);
        let b_vectors = build_b_vectors(ego, predecessors);
        let gain = build_gain_vector(ego, predecessors);
        let exp_gamma_d = matrix_exponential(&gamma, actuation_delay);

        let mut kernels = vec![Vec::with_capacity(delay_steps + 1); m + 1];
        let mut quad_weights = Vec::new();
        if delay_steps > 0 {
            for k in 0..=delay_steps {
                let propagator = matrix_exponential(&gamma, k as f64 * sample_time);
                for (j, b) in b_vectors.iter().enumerate() {
                    kernels[j].push(&propagator * b);
                }
                let edge = k == 0 || k == delay_steps;
                quad_weights.push(sample_time * if edge { 0.5 } else { 1.0 });
            }
        }

        Ok(Self {
            dim,
            mpf_depth: m,
            gamma,
            exp_gamma_d,
            b_vectors,
            gain,
            actuation_delay,
            sample_time,
            delay_steps,
            kernels,
            quad_weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mpf_depth(&self) -> usize {
        self.mpf_depth
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn exp_gamma_d(&self) -> &DMatrix<f64> {
        &self.exp_gamma_d
    }

    pub fn b_vectors(&self) -> &[DVector<f64>] {
        &self.b_vectors
    }

    pub fn gain(&self) -> &DVector<f64> {
        &self.gain
    }

    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    pub fn sample_time(&self) -> f64 {
        self.sample_time
    }

    pub fn actuation_delay(&self) -> f64 {
        self.actuation_delay
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn kernel(&self, channel: usize, offset: usize) -> &DVector<f64> {
        &self.kernels[channel][offset]
    }

    /// `K^T B_i`: the gain applied to the ego input channel, needed to
    /// resolve the quadrature endpoint in closed loop.
    pub fn gain_dot_ego_b(&self) -> f64 {
        self.gain.dot(&self.b_vectors[0])
    }

    /// Evaluates the predictor state
    /// `q(t) = e^{Gamma D} xbar(t) + sum_j integral e^{Gamma (t-theta)} B_j u_j`,
    /// with the integrals approximated by the trapezoidal rule on the
    /// sample grid. Channel `j >= 1` reads the predecessor's input shifted
    /// by its broadcast delay.
    ///
    /// All histories must cover `[t - D - max(comm_delay), t]`; the ego
    /// history must contain the sample at time `t` itself.
    pub fn predictor_state(
        &self,
        xbar: &MeasurementVector,
        ego_inputs: &SignalHistory,
        predecessor_inputs: &[&SignalHistory],
        comm_delays: &[f64],
        t: f64,
    ) -> Result<DVector<f64>, ControllerError> {
        assert_eq!(xbar.mpf_depth(), self.mpf_depth);
        assert_eq!(predecessor_inputs.len(), self.mpf_depth);
        assert_eq!(comm_delays.len(), self.mpf_depth);

        let mut q = &self.exp_gamma_d * xbar.as_vector();
        for k in 0..=self.delay_steps {
            if self.delay_steps == 0 {
                break;
            }
            let theta = t - k as f64 * self.sample_time;
            let w = self.quad_weights[k];
            let u_ego = ego_inputs.value_at(theta)?;
            q.axpy(w * u_ego, &self.kernels[0][k], 1.0);
            for j in 1..=self.mpf_depth {
                let u = predecessor_inputs[j - 1].value_at(theta - comm_delays[j - 1])?;
                q.axpy(w * u, &self.kernels[j][k], 1.0);
            }
        }
        Ok(q)
    }

    /// `u = K^T q`.
    pub fn predictor_control(&self, q: &DVector<f64>) -> f64 {
        self.gain.dot(q)
    }
}

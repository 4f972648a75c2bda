//! Domain types for vehicles and platoons, the continuous-time dynamics
//! right-hand side, and the fixed-step explicit Euler integrator.
//!
//! Every vehicle follows third-order longitudinal dynamics with an engine
//! lag `tau` and a shared actuation dead time `D`:
//!
//! ```text
//! ds/dt = v_pred - v
//! dv/dt = a
//! da/dt = (-a + u(t - D)) / tau
//! ```

use thiserror::Error;

use crate::sim::LeaderProfile;

/// Physical and control parameters of one vehicle in the string.
///
/// Index 0 is the string leader; its `headway`, gains and `mpf_depth` are
/// ignored by validation. `comm_delay` is the latency *other* vehicles
/// experience when receiving this vehicle's broadcasts.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    /// Position in the string, 0 = leader.
    pub index: usize,
    /// Engine/driveline lag (s).
    pub tau: f64,
    /// Desired time headway (s); equilibrium spacing is `headway * speed`.
    pub headway: f64,
    /// Broadcast latency of this vehicle's V2V messages (s).
    pub comm_delay: f64,
    /// Number of preceding vehicles this vehicle listens to.
    pub mpf_depth: usize,
    /// Spacing gain.
    pub alpha: f64,
    /// Speed-matching gain.
    pub b: f64,
    /// Acceleration-matching gain.
    pub c: f64,
    /// Vehicle length (m), used only for position reconstruction.
    pub length: f64,
}

impl VehicleParams {
    /// A follower with the given control parameters and zero length.
    #[allow(clippy::too_many_arguments)]
    pub fn follower(
        index: usize,
        tau: f64,
        headway: f64,
        comm_delay: f64,
        mpf_depth: usize,
        alpha: f64,
        b: f64,
        c: f64,
    ) -> Self {
        Self {
            index,
            tau,
            headway,
            comm_delay,
            mpf_depth,
            alpha,
            b,
            c,
            length: 0.0,
        }
    }

    /// The string leader: no headway, gains, or MPF depth of its own.
    pub fn leader(tau: f64, comm_delay: f64) -> Self {
        Self {
            index: 0,
            tau,
            headway: 0.0,
            comm_delay,
            mpf_depth: 0,
            alpha: 0.0,
            b: 0.0,
            c: 0.0,
            length: 0.0,
        }
    }
}

/// Longitudinal state of one vehicle: spacing to its predecessor, speed,
/// and acceleration. The leader's spacing is unused and held at zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub spacing: f64,
    pub speed: f64,
    pub accel: f64,
}

impl VehicleState {
    pub fn new(spacing: f64, speed: f64, accel: f64) -> Self {
        Self {
            spacing,
            speed,
            accel,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.spacing.is_finite() && self.speed.is_finite() && self.accel.is_finite()
    }
}

/// Time derivative of [`VehicleState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub d_spacing: f64,
    pub d_speed: f64,
    pub d_accel: f64,
}

/// Full scenario description prior to validation.
#[derive(Debug, Clone)]
pub struct PlatoonConfig {
    /// Vehicles ordered by index; element 0 is the leader.
    pub vehicles: Vec<VehicleParams>,
    /// Shared actuation dead time `D` (s).
    pub actuation_delay: f64,
    /// Simulation step (s).
    pub sample_time: f64,
    /// Simulation horizon (s).
    pub horizon: f64,
    /// Speed trajectory the leader realizes.
    pub leader_profile: LeaderProfile,
    /// Initial `(spacing, speed, accel)` per vehicle, leader included.
    pub initial_states: Vec<VehicleState>,
}

/// A [`PlatoonConfig`] that passed [`validate_platoon`]: all invariants
/// hold and every delay is snapped to an exact multiple of the sample time.
#[derive(Debug, Clone)]
pub struct ValidatedConfig(PlatoonConfig);

impl ValidatedConfig {
    pub fn get(&self) -> &PlatoonConfig {
        &self.0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ValidationError {
    #[error("platoon has no vehicles")]
    EmptyPlatoon,
    #[error("vehicle {index}: lag must be positive, got {tau}")]
    NonPositiveLag { index: usize, tau: f64 },
    #[error("vehicle {index}: headway must be positive, got {headway}")]
    NonPositiveHeadway { index: usize, headway: f64 },
    #[error("vehicle {index}: gain {name} must be positive, got {value}")]
    NonPositiveGain {
        index: usize,
        name: &'static str,
        value: f64,
    },
    #[error("vehicle {index}: communication delay must be nonnegative, got {delay}")]
    NegativeCommDelay { index: usize, delay: f64 },
    #[error("vehicle {index}: length must be nonnegative, got {length}")]
    NegativeLength { index: usize, length: f64 },
    #[error(
        "vehicle {index}: MPF depth {depth} exceeds available predecessors ({index}) or is zero"
    )]
    BadMpfDepth { index: usize, depth: usize },
    #[error("vehicle {index} has index field {stored}; vehicles must be listed in order")]
    IndexMismatch { index: usize, stored: usize },
    #[error("{what} = {value} is not a multiple of the sample time {sample_time} (within 1e-9)")]
    OffGridDelay {
        what: String,
        value: f64,
        sample_time: f64,
    },
    #[error("actuation delay must be nonnegative, got {0}")]
    NegativeActuationDelay(f64),
    #[error("sample time must be positive, got {0}")]
    BadSampleTime(f64),
    #[error("horizon {horizon} must exceed the sample time {sample_time}")]
    BadHorizon { horizon: f64, sample_time: f64 },
    #[error("initial states: expected {expected} entries, got {got}")]
    InitialStateCount { expected: usize, got: usize },
    #[error("vehicle {index}: initial state has non-finite component")]
    NonFiniteInitialState { index: usize },
    #[error("leader profile: {0}")]
    BadLeaderProfile(String),
}

/// Snaps `value` to the nearest multiple of `grid` if it is within 1e-9.
fn snap_to_grid(value: f64, grid: f64) -> Option<f64> {
    let steps = (value / grid).round();
    let snapped = steps * grid;
    if (value - snapped).abs() <= 1e-9 {
        Some(steps.max(0.0) * grid)
    } else {
        None
    }
}

/// Checks every platoon invariant and snaps the actuation and communication
/// delays onto the simulation grid.
///
/// The leader (index 0) only needs a positive lag and a nonnegative
/// broadcast delay; headway, gains, and MPF depth apply to followers.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN
pub fn validate_platoon(mut config: PlatoonConfig) -> Result<ValidatedConfig, ValidationError> {
    if config.vehicles.is_empty() {
        return Err(ValidationError::EmptyPlatoon);
    }
    if !(config.sample_time > 0.0) || !config.sample_time.is_finite() {
        return Err(ValidationError::BadSampleTime(config.sample_time));
    }
    if config.horizon <= config.sample_time || !config.horizon.is_finite() {
        return Err(ValidationError::BadHorizon {
            horizon: config.horizon,
            sample_time: config.sample_time,
        });
    }
    if config.actuation_delay < 0.0 || !config.actuation_delay.is_finite() {
        return Err(ValidationError::NegativeActuationDelay(
            config.actuation_delay,
        ));
    }
    let ts = config.sample_time;
    config.actuation_delay =
        snap_to_grid(config.actuation_delay, ts).ok_or_else(|| ValidationError::OffGridDelay {
            what: "actuation delay".into(),
            value: config.actuation_delay,
            sample_time: ts,
        })?;

    for (i, vehicle) in config.vehicles.iter_mut().enumerate() {
        if vehicle.index != i {
            return Err(ValidationError::IndexMismatch {
                index: i,
                stored: vehicle.index,
            });
        }
        if !(vehicle.tau > 0.0) {
            return Err(ValidationError::NonPositiveLag {
                index: i,
                tau: vehicle.tau,
            });
        }
        if vehicle.comm_delay < 0.0 {
            return Err(ValidationError::NegativeCommDelay {
                index: i,
                delay: vehicle.comm_delay,
            });
        }
        if vehicle.length < 0.0 {
            return Err(ValidationError::NegativeLength {
                index: i,
                length: vehicle.length,
            });
        }
        vehicle.comm_delay =
            snap_to_grid(vehicle.comm_delay, ts).ok_or_else(|| ValidationError::OffGridDelay {
                what: format!("communication delay of vehicle {i}"),
                value: vehicle.comm_delay,
                sample_time: ts,
            })?;
        if i == 0 {
            continue;
        }
        if !(vehicle.headway > 0.0) {
            return Err(ValidationError::NonPositiveHeadway {
                index: i,
                headway: vehicle.headway,
            });
        }
        for (name, value) in [("alpha", vehicle.alpha), ("b", vehicle.b), ("c", vehicle.c)] {
            if !(value > 0.0) {
                return Err(ValidationError::NonPositiveGain {
                    index: i,
                    name,
                    value,
                });
            }
        }
        if vehicle.mpf_depth == 0 || vehicle.mpf_depth > i {
            return Err(ValidationError::BadMpfDepth {
                index: i,
                depth: vehicle.mpf_depth,
            });
        }
    }

    if config.initial_states.len() != config.vehicles.len() {
        return Err(ValidationError::InitialStateCount {
            expected: config.vehicles.len(),
            got: config.initial_states.len(),
        });
    }
    for (i, state) in config.initial_states.iter().enumerate() {
        if !state.is_finite() {
            return Err(ValidationError::NonFiniteInitialState { index: i });
        }
    }
    config
        .leader_profile
        .validate()
        .map_err(|e| ValidationError::BadLeaderProfile(e.to_string()))?;

    Ok(ValidatedConfig(config))
}

/// Right-hand side of the third-order vehicle model.
///
/// `v_pred` is the predecessor's current speed and `u_delayed` the control
/// input issued `D` seconds ago.
pub fn vehicle_derivative(
    state: &VehicleState,
    v_pred: f64,
    u_delayed: f64,
    tau: f64,
) -> StateDerivative {
    debug_assert!(tau > 0.0);
    StateDerivative {
        d_spacing: v_pred - state.speed,
        d_speed: state.accel,
        d_accel: (-state.accel + u_delayed) / tau,
    }
}

/// One explicit Euler step: `state + ts * deriv`, componentwise.
pub fn euler_step(state: &VehicleState, deriv: &StateDerivative, ts: f64) -> VehicleState {
    debug_assert!(ts > 0.0);
    VehicleState {
        spacing: state.spacing + ts * deriv.d_spacing,
        speed: state.speed + ts * deriv.d_speed,
        accel: state.accel + ts * deriv.d_accel,
    }
}

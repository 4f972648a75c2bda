//! Predictor-feedback cooperative adaptive cruise control for heterogeneous
//! vehicle platoons with actuation and communication delays.
//!
//! The crate provides:
//!
//! - [`model`]: vehicle/platoon domain types, the third-order longitudinal
//!   dynamics, and the fixed-step Euler integrator;
//! - [`controller`]: the multiple-predecessor predictor-feedback control
//!   law, built from stacked cascade matrices, matrix exponentials, and
//!   trapezoidal quadrature over stored input histories;
//! - [`freq`]: speed-propagation transfer functions, H-infinity norms,
//!   individual-vehicle and string-stability checks, parameter-region
//!   sweeps, and pole-placement gain selection;
//! - [`sim`]: closed-loop scenario simulation with delay buffers, leader
//!   speed profiles, and post-run metrics;
//! - [`history`]: the uniformly sampled ring buffers backing the delayed
//!   lookups above.

pub mod controller;
pub mod expm;
pub mod freq;
pub mod history;
pub mod model;
pub mod sim;

pub use controller::{
    ControllerError, ControllerRealization, MeasurementVector, assemble_measurement_vector,
    build_b_vectors, build_gain_vector, build_gamma, nominal_control,
};
pub use expm::matrix_exponential;
pub use freq::{
    AxisSpec, ChannelParams, FreqError, NormReport, RegionGrid, StabilityVerdict, SweepAxis,
    SweepTemplate, denominator_coeffs, hinf_norm, pole_placement_gains, region_sweep, routh_stable,
    string_stable_norm, sufficient_conditions, tf_magnitude, tf_parameterized_magnitude,
    zero_delay_conditions,
};
pub use history::{HistoryError, SignalHistory, StateHistory};
pub use model::{
    PlatoonConfig, StateDerivative, ValidatedConfig, ValidationError, VehicleParams, VehicleState,
    euler_step, validate_platoon, vehicle_derivative,
};
pub use sim::{
    LeaderProfile, ProfileError, SimError, SimulationResult, VehicleMetrics, compute_metrics,
    load_leader_profile, run_scenario,
};

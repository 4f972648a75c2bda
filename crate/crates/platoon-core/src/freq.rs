//! Frequency-domain analysis of speed propagation down the platoon.
//!
//! For each ego vehicle the speed of predecessor `i-n` maps to the ego
//! speed through a third-order transfer function whose denominator is the
//! delay-free closed-loop cubic (the predictor removes the actuation dead
//! time from the poles). String stability in the L2 sense requires the
//! H-infinity norm of every channel to stay at its DC value `1/m`,
//! equivalently the channel-norm sum to stay at or below one.
//!
//! The module exposes both the direct norm computation (frequency sweep
//! plus golden-section refinement) and the closed-form sufficient
//! conditions on the parameters, together with a pole-placement gain
//! parameterization and two-axis parameter-region sweeps.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::VehicleParams;

/// Number of logarithmic grid points for the norm sweep.
const SWEEP_POINTS: usize = 2048;
const OMEGA_MIN: f64 = 1e-4;
const OMEGA_MAX: f64 = 1e4;
/// Ties at the string-stability boundary count as stable.
const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum FreqError {
    #[error("channel is not individually stable; the H-infinity norm is unbounded")]
    UnstableChannel,
    #[error("the zero-delay conditions require all communication delays to be zero")]
    NonzeroCommDelay,
    #[error("pole must be strictly negative, got {0}")]
    NonNegativePole(f64),
    #[error("pole placement leaves the admissible gain region: alpha={alpha}, b={b}, c={c}")]
    NonPositiveGain { alpha: f64, b: f64, c: f64 },
    #[error("invalid sweep axis: {0}")]
    InvalidAxis(String),
}

/// Everything one speed-propagation channel depends on: the ego control
/// parameters plus the headways and broadcast delays of the `m`
/// predecessors (ordered `i-1, ..., i-m`) and the actuation delay.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub alpha: f64,
    pub b: f64,
    pub c: f64,
    pub tau: f64,
    pub h: f64,
    pub mpf_depth: usize,
    pub pred_headways: Vec<f64>,
    pub pred_comm_delays: Vec<f64>,
    pub actuation_delay: f64,
}

impl ChannelParams {
    /// Homogeneous platoon: every predecessor shares the ego headway and
    /// one common communication delay.
    #[allow(clippy::too_many_arguments)]
    pub fn homogeneous(
        mpf_depth: usize,
        tau: f64,
        h: f64,
        comm_delay: f64,
        alpha: f64,
        b: f64,
        c: f64,
        actuation_delay: f64,
    ) -> Self {
        Self {
            alpha,
            b,
            c,
            tau,
            h,
            mpf_depth,
            pred_headways: vec![h; mpf_depth],
            pred_comm_delays: vec![comm_delay; mpf_depth],
            actuation_delay,
        }
    }

    /// Channel parameters of follower `index` inside a platoon. Each of
    /// its `m` predecessors contributes its own headway and broadcast
    /// delay (the leader's headway never enters any formula).
    pub fn for_vehicle(vehicles: &[VehicleParams], index: usize, actuation_delay: f64) -> Self {
        let ego = &vehicles[index];
        let m = ego.mpf_depth;
        assert!(
            m >= 1 && m <= index,
            "invalid MPF depth for vehicle {index}"
        );
        Self {
            alpha: ego.alpha,
            b: ego.b,
            c: ego.c,
            tau: ego.tau,
            h: ego.headway,
            mpf_depth: m,
            pred_headways: (1..=m).map(|n| vehicles[index - n].headway).collect(),
            pred_comm_delays: (1..=m).map(|n| vehicles[index - n].comm_delay).collect(),
            actuation_delay,
        }
    }
}

/// Per-channel H-infinity norms and the resulting string-stability flag.
#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    /// True iff `m * norm_n <= 1` for every channel (ties stable).
    pub stable: bool,
    /// Sum of the channel norms; at most 1 for a string-stable vehicle.
    pub sum_norm: f64,
    /// `norm_n` for `n = 1..=m`.
    pub per_channel: Vec<f64>,
}

/// Outcome of the analytic and norm-based stability checks with margins.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityVerdict {
    pub routh_ok: bool,
    pub routh_margin: f64,
    pub sufficient_ok: bool,
    pub beta_bar: f64,
    pub beta: f64,
    pub gamma_bar: f64,
    /// `gamma_n` for `n = 2..=m`; empty when `m = 1`.
    pub gammas: Vec<f64>,
    /// Filled by the norm-based check when the channel is stable.
    pub norm: Option<NormReport>,
}

/// Margins of the zero-communication-delay sufficient conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroDelayVerdict {
    pub ok: bool,
    pub routh_ok: bool,
    pub routh_margin: f64,
    pub beta: f64,
    /// `gamma_n` for `n = 1..=m`.
    pub gammas: Vec<f64>,
}

/// Monic denominator `[1, d2, d1, d0]` of every speed-propagation channel.
pub fn denominator_coeffs(p: &ChannelParams) -> [f64; 4] {
    let m = p.mpf_depth as f64;
    [
        1.0,
        (1.0 + m * p.tau * p.c) / p.tau,
        m * (p.alpha + p.b),
        m * p.alpha / p.h,
    ]
}

/// Routh-Hurwitz check of the closed-loop cubic. The returned margin is
/// `(1/tau + m c)(alpha + b) - alpha/h`; the cubic is Hurwitz iff the
/// margin is positive and all coefficients are.
pub fn routh_stable(p: &ChannelParams) -> (bool, f64) {
    let [_, d2, d1, d0] = denominator_coeffs(p);
    let m = p.mpf_depth as f64;
    let margin = (1.0 / p.tau + m * p.c) * (p.alpha + p.b) - p.alpha / p.h;
    (d2 > 0.0 && d1 > 0.0 && d0 > 0.0 && margin > 0.0, margin)
}

fn denominator_at(p: &ChannelParams, s: Complex64) -> Complex64 {
    let [_, d2, d1, d0] = denominator_coeffs(p);
    ((s + d2) * s + d1) * s + d0
}

/// `|G_{i,i-n}(j omega)|` for the channel from predecessor `i-n`.
///
/// For `n >= 2` the numerator is a real-coefficient quadratic times a
/// unit-modulus delay factor. The `n = 1` channel mixes the broadcast
/// delay of the immediate predecessor with the actuation delay, so its
/// numerator is genuinely complex; with zero broadcast delay the mix
/// collapses and the magnitude no longer depends on the actuation delay.
pub fn tf_magnitude(p: &ChannelParams, n: usize, omega: f64) -> f64 {
    assert!(
        n >= 1 && n <= p.mpf_depth,
        "channel offset {n} out of range 1..={}",
        p.mpf_depth
    );
    let m = p.mpf_depth as f64;
    let s = Complex64::new(0.0, omega);
    let num = if n == 1 {
        let dc1 = p.pred_comm_delays[0];
        let e_dc = (-s * dc1).exp();
        let e_d = (-s * p.actuation_delay).exp();
        let mu1 = p.c * e_dc;
        let mu2 = (p.b - (m - 1.0) * p.alpha * p.pred_headways[0] / p.h) * e_dc;
        let mu3 = p.alpha / p.h * (e_dc + m * e_d * (Complex64::new(1.0, 0.0) - e_dc));
        (mu1 * s + mu2) * s + mu3
    } else {
        let hn = p.pred_headways[n - 1];
        let b_n = p.b - (m - n as f64) * p.alpha * hn / p.h;
        (p.c * s + b_n) * s + p.alpha / p.h
    };
    num.norm() / denominator_at(p, s).norm()
}

/// Golden-section maximization of `f` on `[lo, hi]`.
fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..70 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    f1.max(f2)
}

fn sweep_max(f: impl Fn(f64) -> f64 + Copy) -> f64 {
    let log_min = OMEGA_MIN.ln();
    let log_max = OMEGA_MAX.ln();
    let step = (log_max - log_min) / (SWEEP_POINTS - 1) as f64;
    let omega = |k: usize| (log_min + k as f64 * step).exp();

    let mut best = 0.0;
    let mut best_k = 0;
    for k in 0..SWEEP_POINTS {
        let v = f(omega(k));
        if v > best {
            best = v;
            best_k = k;
        }
    }
    let lo = omega(best_k.saturating_sub(1));
    let hi = omega((best_k + 1).min(SWEEP_POINTS - 1));
    best.max(golden_section_max(f, lo, hi))
}

/// `sup_{omega > 0} |G_{i,i-n}(j omega)|` by logarithmic sweep plus local
/// refinement; the analytic DC limit `1/m` is appended since the sweep
/// cannot reach `omega = 0`.
pub fn hinf_norm(p: &ChannelParams, n: usize) -> Result<f64, FreqError> {
    let (stable, _) = routh_stable(p);
    if !stable {
        return Err(FreqError::UnstableChannel);
    }
    let peak = sweep_max(|w| tf_magnitude(p, n, w));
    Ok(peak.max(1.0 / p.mpf_depth as f64))
}

/// Direct string-stability check: every channel norm must stay at the DC
/// value `1/m`, which makes the channel-norm sum at most one.
pub fn string_stable_norm(p: &ChannelParams) -> Result<NormReport, FreqError> {
    let m = p.mpf_depth;
    let mut per_channel = Vec::with_capacity(m);
    for n in 1..=m {
        per_channel.push(hinf_norm(p, n)?);
    }
    let sum_norm = per_channel.iter().sum();
    let stable = per_channel
        .iter()
        .all(|norm| m as f64 * norm <= 1.0 + BOUNDARY_TOL);
    Ok(NormReport {
        stable,
        sum_norm,
        per_channel,
    })
}

fn beta_bar_margin(p: &ChannelParams) -> f64 {
    let m = p.mpf_depth as f64;
    let dc1 = p.pred_comm_delays[0];
    let lead = (1.0 + m * p.tau * p.c) / p.tau;
    lead * lead
        - 2.0 * m * (p.alpha + p.b)
        - m * m * p.c * p.c
        - m * m * 2.0 * p.c * (m * p.alpha / p.h) * dc1 * (2.0 * dc1 + p.actuation_delay)
}

fn beta_margin(p: &ChannelParams) -> f64 {
    let m = p.mpf_depth as f64;
    1.0 / (p.tau * p.tau) + 2.0 * m * p.c / p.tau - 2.0 * m * (p.alpha + p.b)
}

fn gamma_bar_margin(p: &ChannelParams) -> f64 {
    let m = p.mpf_depth as f64;
    let dc1 = p.pred_comm_delays[0];
    let q = p.b - (m - 1.0) * p.alpha * p.pred_headways[0] / p.h;
    let drift = m * p.alpha / p.h * dc1;
    m * m * (p.alpha + p.b) * (p.alpha + p.b)
        - 2.0 * ((1.0 + m * p.tau * p.c) / p.tau) * (m * p.alpha / p.h)
        - m * m * (-2.0 * p.c * p.alpha / p.h + q * q + 2.0 * drift * drift + 4.0 * q.abs() * drift)
        - 2.0 * m * m * (p.alpha / p.h) * drift * (2.0 * dc1 + p.actuation_delay)
}

fn gamma_margin(p: &ChannelParams, n: usize) -> f64 {
    let m = p.mpf_depth as f64;
    let ratio = p.pred_headways[n - 1] / p.h;
    let depth_gap = m - n as f64;
    -2.0 * m * p.alpha / (p.h * p.tau)
        + 2.0 * m * m * (1.0 + depth_gap * ratio) * p.alpha * p.b
        + m * m * (1.0 - depth_gap * depth_gap * ratio * ratio) * p.alpha * p.alpha
}

/// Sufficient string-stability conditions with communication delays:
/// individual stability plus either all four margin families nonnegative,
/// or both quadratic discriminant conditions with negative linear terms.
pub fn sufficient_conditions(p: &ChannelParams) -> StabilityVerdict {
    let (routh_ok, routh_margin) = routh_stable(p);
    let beta_bar = beta_bar_margin(p);
    let beta = beta_margin(p);
    let gamma_bar = gamma_bar_margin(p);
    let gammas: Vec<f64> = (2..=p.mpf_depth).map(|n| gamma_margin(p, n)).collect();

    let all_nonnegative =
        beta_bar >= 0.0 && beta >= 0.0 && gamma_bar >= 0.0 && gammas.iter().all(|g| *g >= 0.0);
    let discriminant_branch = beta_bar < 0.0
        && beta < 0.0
        && 4.0 * gamma_bar - beta_bar * beta_bar >= 0.0
        && gammas.iter().all(|g| 4.0 * g - beta * beta >= 0.0);

    StabilityVerdict {
        routh_ok,
        routh_margin,
        sufficient_ok: routh_ok && (all_nonnegative || discriminant_branch),
        beta_bar,
        beta,
        gamma_bar,
        gammas,
        norm: None,
    }
}

/// Specialization of the sufficient conditions to zero communication
/// delays; the verdict does not depend on the actuation delay at all.
pub fn zero_delay_conditions(p: &ChannelParams) -> Result<ZeroDelayVerdict, FreqError> {
    if p.pred_comm_delays.iter().any(|dc| *dc != 0.0) {
        return Err(FreqError::NonzeroCommDelay);
    }
    let (routh_ok, routh_margin) = routh_stable(p);
    let beta = beta_margin(p);
    let gammas: Vec<f64> = (1..=p.mpf_depth).map(|n| gamma_margin(p, n)).collect();

    let all_nonnegative = beta >= 0.0 && gammas.iter().all(|g| *g >= 0.0);
    let discriminant_branch = beta < 0.0 && gammas.iter().all(|g| 4.0 * g - beta * beta >= 0.0);

    Ok(ZeroDelayVerdict {
        ok: routh_ok && (all_nonnegative || discriminant_branch),
        routh_ok,
        routh_margin,
        beta,
        gammas,
    })
}

/// Gains that place all three closed-loop poles at `pole < 0`:
/// `alpha = -(h/m) p^3`, `b = (h/m) p^3 + (3/m) p^2`,
/// `c = -1/(m tau) - (3/m) p`. All three must come out positive, which
/// bounds the pole away from `-1/(3 tau)`.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // `!(pole < 0.0)` also rejects NaN
pub fn pole_placement_gains(
    pole: f64,
    h: f64,
    mpf_depth: usize,
    tau: f64,
) -> Result<(f64, f64, f64), FreqError> {
    if !(pole < 0.0) {
        return Err(FreqError::NonNegativePole(pole));
    }
    let m = mpf_depth as f64;
    let alpha = -(h / m) * pole.powi(3);
    let b = (h / m) * pole.powi(3) + (3.0 / m) * pole * pole;
    let c = -1.0 / (m * tau) - (3.0 / m) * pole;
    if alpha <= 0.0 || b <= 0.0 || c <= 0.0 {
        return Err(FreqError::NonPositiveGain { alpha, b, c });
    }
    Ok((alpha, b, c))
}

/// Channel magnitude under the pole-placement parameterization with a
/// homogeneous headway `h`: the denominator is `(s - pole)^3` and the
/// numerator coefficients are expressed in the pole directly. Second
/// route to the same quantity as [`tf_magnitude`] with gains from
/// [`pole_placement_gains`].
#[allow(clippy::too_many_arguments)]
pub fn tf_parameterized_magnitude(
    pole: f64,
    h: f64,
    mpf_depth: usize,
    tau: f64,
    comm_delays: &[f64],
    actuation_delay: f64,
    n: usize,
    omega: f64,
) -> f64 {
    assert!(n >= 1 && n <= mpf_depth);
    assert_eq!(comm_delays.len(), mpf_depth);
    let m = mpf_depth as f64;
    let s = Complex64::new(0.0, omega);
    let depth_gap = m - n as f64;

    let mu1 = -(1.0 / tau + 3.0 * pole) / m;
    let mu2 = (pole * pole / m) * (3.0 + h * pole + depth_gap * h * pole);
    let num = if n == 1 {
        let e_dc = (-s * comm_delays[0]).exp();
        let e_d = (-s * actuation_delay).exp();
        let mu3 = -(pole.powi(3) / m) * (e_dc + m * e_d * (Complex64::new(1.0, 0.0) - e_dc));
        (mu1 * e_dc * s + mu2 * e_dc) * s + mu3
    } else {
        // The common broadcast-delay factor has unit modulus.
        (mu1 * s + mu2) * s - pole.powi(3) / m
    };
    let den = (s - pole).powu(3);
    num.norm() / den.norm()
}

/// Parameter axes a region sweep can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Headway,
    CommDelay,
    ActuationDelay,
    Pole,
}

impl SweepAxis {
    pub fn parse(name: &str) -> Result<Self, FreqError> {
        match name {
            "h" => Ok(Self::Headway),
            "dc" => Ok(Self::CommDelay),
            "D" => Ok(Self::ActuationDelay),
            "p" => Ok(Self::Pole),
            other => Err(FreqError::InvalidAxis(format!(
                "unknown axis '{other}' (expected h, dc, D, or p)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Headway => "h",
            Self::CommDelay => "dc",
            Self::ActuationDelay => "D",
            Self::Pole => "p",
        }
    }
}

/// One sweep axis: `steps` evenly spaced values on `[start, stop]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisSpec {
    pub axis: SweepAxis,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl AxisSpec {
    pub fn values(&self) -> Vec<f64> {
        let d = (self.stop - self.start) / (self.steps - 1) as f64;
        (0..self.steps).map(|k| self.start + k as f64 * d).collect()
    }

    fn validate(&self) -> Result<(), FreqError> {
        if self.steps < 2
            || !self.start.is_finite()
            || !self.stop.is_finite()
            || self.stop < self.start
        {
            return Err(FreqError::InvalidAxis(format!(
                "axis {} needs start <= stop and at least 2 steps",
                self.axis.name()
            )));
        }
        Ok(())
    }
}

/// Fixed parameters of a region sweep; the swept axes override the
/// corresponding fields per grid point. When `pole` is set (or swept),
/// the gains come from [`pole_placement_gains`] instead of
/// `alpha`/`b`/`c`; points without admissible gains count as unstable.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTemplate {
    pub tau: f64,
    pub alpha: f64,
    pub b: f64,
    pub c: f64,
    pub h: f64,
    pub comm_delay: f64,
    pub actuation_delay: f64,
    pub pole: Option<f64>,
}

/// Boolean stability grids, one per MPF depth, in row-major order
/// (axis 1 outer, axis 2 inner).
#[derive(Debug, Clone)]
pub struct RegionGrid {
    pub axis1: AxisSpec,
    pub axis2: AxisSpec,
    pub mpf_depths: Vec<usize>,
    pub stable: Vec<Vec<bool>>,
}

impl RegionGrid {
    pub fn at(&self, m_idx: usize, i: usize, j: usize) -> bool {
        self.stable[m_idx][i * self.axis2.steps + j]
    }

    /// Smallest axis-1 value marked stable in column `j` of grid `m_idx`.
    pub fn min_stable_axis1(&self, m_idx: usize, j: usize) -> Option<f64> {
        let values = self.axis1.values();
        (0..self.axis1.steps)
            .find(|&i| self.at(m_idx, i, j))
            .map(|i| values[i])
    }
}

fn point_verdict(template: &SweepTemplate, axes: [(SweepAxis, f64); 2], mpf_depth: usize) -> bool {
    let mut h = template.h;
    let mut dc = template.comm_delay;
    let mut d = template.actuation_delay;
    let mut pole = template.pole;
    for (axis, value) in axes {
        match axis {
            SweepAxis::Headway => h = value,
            SweepAxis::CommDelay => dc = value,
            SweepAxis::ActuationDelay => d = value,
            SweepAxis::Pole => pole = Some(value),
        }
    }
    let (alpha, b, c) = match pole {
        Some(p) => match pole_placement_gains(p, h, mpf_depth, template.tau) {
            Ok(gains) => gains,
            Err(_) => return false,
        },
        None => (template.alpha, template.b, template.c),
    };
    let params = ChannelParams::homogeneous(mpf_depth, template.tau, h, dc, alpha, b, c, d);
    if !routh_stable(&params).0 {
        return false;
    }
    string_stable_norm(&params)
        .map(|r| r.stable)
        .unwrap_or(false)
}

/// Evaluates the direct string-stability verdict over a two-axis grid for
/// each requested MPF depth. Grid points are independent and evaluated in
/// parallel; the output ordering is deterministic.
pub fn region_sweep(
    axis1: &AxisSpec,
    axis2: &AxisSpec,
    template: &SweepTemplate,
    mpf_depths: &[usize],
) -> Result<RegionGrid, FreqError> {
    axis1.validate()?;
    axis2.validate()?;
    if axis1.axis == axis2.axis {
        return Err(FreqError::InvalidAxis(format!(
            "both axes sweep '{}'",
            axis1.axis.name()
        )));
    }
    let v1 = axis1.values();
    let v2 = axis2.values();
    let mut stable = Vec::with_capacity(mpf_depths.len());
    for &m in mpf_depths {
        let grid: Vec<bool> = (0..v1.len() * v2.len())
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / v2.len(), idx % v2.len());
                point_verdict(template, [(axis1.axis, v1[i]), (axis2.axis, v2[j])], m)
            })
            .collect();
        stable.push(grid);
    }
    Ok(RegionGrid {
        axis1: axis1.clone(),
        axis2: axis2.clone(),
        mpf_depths: mpf_depths.to_vec(),
        stable,
    })
}

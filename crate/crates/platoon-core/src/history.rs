//! Uniformly sampled ring buffer of past scalar signals, used for delayed
//! measurement lookups and for the quadrature window of the predictor.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HistoryError {
    #[error("history read at t={t} precedes the retained window (oldest {oldest})")]
    Underflow { t: f64, oldest: f64 },
    #[error("history read at t={t} is ahead of the newest stored sample ({newest})")]
    NotYetStored { t: f64, newest: f64 },
    #[error("history read at t={t} does not land on the sample grid")]
    OffGrid { t: f64 },
}

/// Ring buffer of samples spaced `ts` apart, starting at `start_time`.
///
/// Reads before `start_time` return `pre_value` (the signal's value for the
/// whole pre-run region); reads that fall off the retained window or ahead
/// of the newest sample are errors. Every read must land on a grid point.
#[derive(Debug, Clone)]
pub struct SignalHistory {
    samples: VecDeque<f64>,
    ts: f64,
    start_time: f64,
    /// Grid index of the oldest retained sample.
    oldest: usize,
    capacity: usize,
    pre_value: f64,
}

impl SignalHistory {
    /// `capacity` must cover the longest delayed lookback, i.e. at least
    /// `(D + max_comm_delay)/ts + 2` samples.
    pub fn new(ts: f64, start_time: f64, capacity: usize, pre_value: f64) -> Self {
        assert!(ts > 0.0 && capacity >= 1);
        Self {
            samples: VecDeque::with_capacity(capacity),
            ts,
            start_time,
            oldest: 0,
            capacity,
            pre_value,
        }
    }

    /// Appends the sample for the next grid instant, evicting the oldest
    /// retained sample once the capacity is reached.
    pub fn push(&mut self, value: f64) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
            self.oldest += 1;
        }
        self.samples.push_back(value);
    }

    /// Overwrites the newest stored sample.
    ///
    /// Panics if the buffer is empty. Used by the closed-loop stepper,
    /// which finalizes the ego input after the predictor evaluation.
    pub fn replace_last(&mut self, value: f64) {
        *self
            .samples
            .back_mut()
            .expect("replace_last on empty history") = value;
    }

    pub fn len(&self) -> usize {
        self.oldest + self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty() && self.oldest == 0
    }

    /// Time of the newest stored sample, if any.
    pub fn latest_time(&self) -> Option<f64> {
        if self.samples.is_empty() && self.oldest == 0 {
            None
        } else {
            Some(self.start_time + (self.len() - 1) as f64 * self.ts)
        }
    }

    /// Grid-aligned read at absolute time `t`.
    pub fn value_at(&self, t: f64) -> Result<f64, HistoryError> {
        if t < self.start_time - 0.5 * self.ts {
            return Ok(self.pre_value);
        }
        let raw = (t - self.start_time) / self.ts;
        let idx = raw.round();
        if (raw - idx).abs() > 1e-6 {
            return Err(HistoryError::OffGrid { t });
        }
        let idx = idx as i64;
        if idx < 0 {
            return Ok(self.pre_value);
        }
        let idx = idx as usize;
        if idx < self.oldest {
            return Err(HistoryError::Underflow {
                t,
                oldest: self.start_time + self.oldest as f64 * self.ts,
            });
        }
        match self.samples.get(idx - self.oldest) {
            Some(&v) => Ok(v),
            None => Err(HistoryError::NotYetStored {
                t,
                newest: self.latest_time().unwrap_or(f64::NEG_INFINITY),
            }),
        }
    }

    /// Read at `t - delay`; identical to `value_at` but keeps call sites
    /// close to the measurement-model notation.
    pub fn delayed(&self, t: f64, delay: f64) -> Result<f64, HistoryError> {
        self.value_at(t - delay)
    }
}

/// Per-vehicle spacing/speed/acceleration histories, bundled for the
/// measurement-vector assembly.
#[derive(Debug, Clone)]
pub struct StateHistory {
    pub spacing: SignalHistory,
    pub speed: SignalHistory,
    pub accel: SignalHistory,
}

impl StateHistory {
    pub fn new(
        ts: f64,
        start_time: f64,
        capacity: usize,
        initial: crate::model::VehicleState,
    ) -> Self {
        Self {
            spacing: SignalHistory::new(ts, start_time, capacity, initial.spacing),
            speed: SignalHistory::new(ts, start_time, capacity, initial.speed),
            accel: SignalHistory::new(ts, start_time, capacity, initial.accel),
        }
    }

    pub fn push(&mut self, state: &crate::model::VehicleState) {
        self.spacing.push(state.spacing);
        self.speed.push(state.speed);
        self.accel.push(state.accel);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_land_on_grid_points() {
        let mut h = SignalHistory::new(0.01, 0.0, 100, 0.0);
        for k in 0..50 {
            h.push(k as f64);
        }
        assert_eq!(h.value_at(0.0).unwrap(), 0.0);
        assert_eq!(h.value_at(0.12).unwrap(), 12.0);
        assert_eq!(h.value_at(0.49).unwrap(), 49.0);
        assert_eq!(h.delayed(0.49, 0.12).unwrap(), 37.0);
    }

    #[test]
    fn pre_run_region_returns_initial_value() {
        let mut h = SignalHistory::new(0.01, 0.0, 16, 7.5);
        h.push(1.0);
        assert_eq!(h.value_at(-0.05).unwrap(), 7.5);
        assert_eq!(h.value_at(-1.0).unwrap(), 7.5);
    }

    #[test]
    fn evicted_and_future_reads_fail() {
        let mut h = SignalHistory::new(0.01, 0.0, 4, 0.0);
        for k in 0..10 {
            h.push(k as f64);
        }
        // Samples 0..=5 were evicted (capacity 4 keeps 6..=9).
        assert!(matches!(
            h.value_at(0.05),
            Err(HistoryError::Underflow { .. })
        ));
        assert_eq!(h.value_at(0.06).unwrap(), 6.0);
        assert!(matches!(
            h.value_at(0.10),
            Err(HistoryError::NotYetStored { .. })
        ));
    }

    #[test]
    fn off_grid_read_is_rejected() {
        let mut h = SignalHistory::new(0.01, 0.0, 8, 0.0);
        h.push(1.0);
        h.push(2.0);
        assert!(matches!(
            h.value_at(0.005),
            Err(HistoryError::OffGrid { .. })
        ));
    }

    #[test]
    fn replace_last_overwrites_newest() {
        let mut h = SignalHistory::new(0.01, 0.0, 8, 0.0);
        h.push(1.0);
        h.push(2.0);
        h.replace_last(9.0);
        assert_eq!(h.value_at(0.01).unwrap(), 9.0);
        assert_eq!(h.value_at(0.0).unwrap(), 1.0);
    }
}

//! Linear swept-sine excitation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChirpError {
    #[error("time {t} s is outside the sweep interval [0, {duration}] s")]
    OutOfRange { t: f64, duration: f64 },
    #[error("invalid chirp configuration: {0}")]
    Invalid(String),
}

fn unit_amplitude() -> f64 {
    1.0
}

/// Linear chirp `x(t) = P sin(2π(f_start t + ½ ε t²) + φ)` with constant
/// sweep rate `ε = (f_end - f_start) / duration`.
///
/// The sweep rate is always derived from the endpoints and the duration so
/// the two can never disagree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpConfig {
    /// Start frequency in Hz.
    pub f_start: f64,
    /// End frequency in Hz.
    pub f_end: f64,
    /// Sweep duration in seconds.
    pub duration: f64,
    /// Drive amplitude (dimensionless).
    #[serde(default = "unit_amplitude")]
    pub amplitude: f64,
    /// Initial phase in radians.
    #[serde(default)]
    pub initial_phase: f64,
}

impl ChirpConfig {
    pub fn new(f_start: f64, f_end: f64, duration: f64) -> Result<Self, ChirpError> {
        let cfg = Self {
            f_start,
            f_end,
            duration,
            amplitude: 1.0,
            initial_phase: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds a sweep from its endpoints and the magnitude of the sweep rate.
    pub fn from_rate(f_start: f64, f_end: f64, rate: f64) -> Result<Self, ChirpError> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(ChirpError::Invalid(format!("sweep rate magnitude must be > 0, got {rate}")));
        }
        Self::new(f_start, f_end, (f_end - f_start).abs() / rate)
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn with_initial_phase(mut self, phase: f64) -> Self {
        self.initial_phase = phase;
        self
    }

    pub fn validate(&self) -> Result<(), ChirpError> {
        let finite = [self.f_start, self.f_end, self.duration, self.amplitude, self.initial_phase]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(ChirpError::Invalid("all fields must be finite".into()));
        }
        if self.duration <= 0.0 {
            return Err(ChirpError::Invalid(format!("duration must be > 0, got {}", self.duration)));
        }
        if self.f_start < 0.0 || self.f_end < 0.0 {
            return Err(ChirpError::Invalid("frequencies must be >= 0".into()));
        }
        Ok(())
    }

    /// Signed sweep rate ε in Hz/s.
    pub fn sweep_rate(&self) -> f64 {
        (self.f_end - self.f_start) / self.duration
    }

    pub fn is_upward(&self) -> bool {
        self.f_end > self.f_start
    }

    pub fn f_min(&self) -> f64 {
        self.f_start.min(self.f_end)
    }

    pub fn f_max(&self) -> f64 {
        self.f_start.max(self.f_end)
    }

    fn check_time(&self, t: f64) -> Result<(), ChirpError> {
        if t.is_nan() || t < 0.0 || t > self.duration {
            return Err(ChirpError::OutOfRange { t, duration: self.duration });
        }
        Ok(())
    }

    /// Instantaneous frequency `f_start + ε t`.
    pub fn frequency(&self, t: f64) -> Result<f64, ChirpError> {
        self.check_time(t)?;
        Ok(self.frequency_unchecked(t))
    }

    pub(crate) fn frequency_unchecked(&self, t: f64) -> f64 {
        self.f_start + self.sweep_rate() * t
    }

    /// Accumulated phase `2π(f_start t + ½ ε t²) + φ` in radians.
    pub fn phase(&self, t: f64) -> Result<f64, ChirpError> {
        self.check_time(t)?;
        Ok(self.phase_unchecked(t))
    }

    pub(crate) fn phase_unchecked(&self, t: f64) -> f64 {
        2.0 * PI * (self.f_start * t + 0.5 * self.sweep_rate() * t * t) + self.initial_phase
    }

    /// Drive waveform `P sin(phase(t))`.
    pub fn waveform(&self, t: f64) -> Result<f64, ChirpError> {
        Ok(self.amplitude * self.phase(t)?.sin())
    }
}

/// Default sweep band and rate: 0 Hz to 1000 Hz in 15 s.
pub const DEFAULT_F_LOW: f64 = 0.0;
pub const DEFAULT_F_HIGH: f64 = 1000.0;
pub const DEFAULT_SWEEP_DURATION: f64 = 15.0;

/// A session's excitation schedule: sweeps played back to back, each
/// preceded by `padding` seconds without excitation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excitation {
    pub sweeps: Vec<ChirpConfig>,
    #[serde(default)]
    pub padding: f64,
}

/// One scheduled sweep with its onset time in the session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledSweep {
    pub chirp: ChirpConfig,
    /// Session time at which the sweep starts, in seconds.
    pub onset: f64,
}

impl ScheduledSweep {
    pub fn end(&self) -> f64 {
        self.onset + self.chirp.duration
    }
}

impl Default for Excitation {
    fn default() -> Self {
        Self::bidirectional(DEFAULT_F_LOW, DEFAULT_F_HIGH, DEFAULT_SWEEP_DURATION)
            .expect("default excitation is valid")
    }
}

impl Excitation {
    /// An up-sweep `f_low → f_high` followed by the mirrored down-sweep.
    pub fn bidirectional(f_low: f64, f_high: f64, duration: f64) -> Result<Self, ChirpError> {
        Ok(Self {
            sweeps: vec![
                ChirpConfig::new(f_low, f_high, duration)?,
                ChirpConfig::new(f_high, f_low, duration)?,
            ],
            padding: 0.0,
        })
    }

    pub fn with_padding(mut self, padding: f64) -> Self {
        self.padding = padding;
        self
    }

    pub fn validate(&self) -> Result<(), ChirpError> {
        if self.sweeps.is_empty() {
            return Err(ChirpError::Invalid("excitation has no sweeps".into()));
        }
        if !(self.padding.is_finite() && self.padding >= 0.0) {
            return Err(ChirpError::Invalid(format!("padding must be >= 0, got {}", self.padding)));
        }
        self.sweeps.iter().try_for_each(ChirpConfig::validate)
    }

    pub fn schedule(&self) -> Vec<ScheduledSweep> {
        let mut onset = 0.0;
        self.sweeps
            .iter()
            .map(|c| {
                onset += self.padding;
                let s = ScheduledSweep { chirp: *c, onset };
                onset += c.duration;
                s
            })
            .collect()
    }

    /// Session length in seconds.
    pub fn total_duration(&self) -> f64 {
        self.sweeps.iter().map(|c| c.duration + self.padding).sum()
    }

    pub fn f_max(&self) -> f64 {
        self.sweeps.iter().map(ChirpConfig::f_max).fold(0.0, f64::max)
    }

    pub fn f_min(&self) -> f64 {
        self.sweeps.iter().map(ChirpConfig::f_min).fold(f64::INFINITY, f64::min)
    }

    /// The sweep active at session time `t` and the time within it.
    pub fn active_at(&self, t: f64) -> Option<(ScheduledSweep, f64)> {
        self.schedule()
            .into_iter()
            .find(|s| t >= s.onset && t < s.end())
            .map(|s| (s, t - s.onset))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sweep_rate_is_1000_over_15() {
        let up = ChirpConfig::new(0.0, 1000.0, 15.0).unwrap();
        assert!((up.sweep_rate() - 1000.0 / 15.0).abs() < 1e-12);
        assert!((up.sweep_rate() - 66.67).abs() < 0.005);
        assert!((up.frequency(15.0).unwrap() - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn frequency_at_origin_and_midpoint() {
        let down = ChirpConfig::new(1000.0, 0.0, 15.0).unwrap();
        assert_eq!(down.frequency(0.0).unwrap(), 1000.0);
        assert!((down.frequency(7.5).unwrap() - 500.0).abs() < 1e-9);
        assert!(down.sweep_rate() < 0.0);
    }

    #[test]
    fn out_of_range_time_is_rejected() {
        let c = ChirpConfig::new(0.0, 1000.0, 15.0).unwrap();
        assert!(matches!(c.frequency(-0.1), Err(ChirpError::OutOfRange { .. })));
        assert!(matches!(c.waveform(15.01), Err(ChirpError::OutOfRange { .. })));
        assert!(c.frequency(f64::NAN).is_err());
    }

    #[test]
    fn waveform_values() {
        let c = ChirpConfig::new(0.0, 1000.0, 15.0).unwrap();
        assert_eq!(c.waveform(0.0).unwrap(), 0.0);

        let tone = ChirpConfig::new(100.0, 100.0, 1.0).unwrap();
        assert!((tone.waveform(0.0025).unwrap() - 1.0).abs() < 1e-12);

        let doubled = c.with_amplitude(2.0);
        for i in 0..200 {
            let t = i as f64 * 0.0731;
            assert_eq!(doubled.waveform(t).unwrap(), 2.0 * c.waveform(t).unwrap());
        }
    }

    #[test]
    fn from_rate_builds_duration() {
        let c = ChirpConfig::from_rate(1000.0, 0.0, 1000.0 / 15.0).unwrap();
        assert!((c.duration - 15.0).abs() < 1e-12);
        assert!(ChirpConfig::from_rate(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn bidirectional_schedule() {
        let ex = Excitation::default();
        assert_eq!(ex.total_duration(), 30.0);
        let sched = ex.schedule();
        assert_eq!(sched.len(), 2);
        assert!(sched[0].chirp.is_upward() && !sched[1].chirp.is_upward());
        assert_eq!(sched[1].onset, 15.0);
        assert_eq!(sched[0].chirp.sweep_rate(), -sched[1].chirp.sweep_rate());

        let padded = ex.with_padding(2.0);
        assert_eq!(padded.total_duration(), 34.0);
        assert!(padded.active_at(1.0).is_none());
        let (s, local) = padded.active_at(20.0).unwrap();
        assert_eq!(s.onset, 19.0);
        assert!((local - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs() {
        assert!(ChirpConfig::new(0.0, 1000.0, 0.0).is_err());
        assert!(ChirpConfig::new(-1.0, 1000.0, 1.0).is_err());
        assert!(ChirpConfig::new(0.0, f64::INFINITY, 1.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // d/dt of the phase argument over 2π equals the instantaneous frequency.
            #[test]
            fn instantaneous_frequency_matches_phase_derivative(
                f0 in 0.0f64..1000.0, f1 in 0.0f64..1000.0, dur in 1.0f64..30.0, frac in 0.01f64..0.99
            ) {
                let c = ChirpConfig::new(f0, f1, dur).unwrap();
                let t = frac * dur;
                let h = 1e-6;
                let deriv = (c.phase(t + h).unwrap() - c.phase(t - h).unwrap()) / (2.0 * h) / (2.0 * PI);
                let f = c.frequency(t).unwrap();
                prop_assert!((deriv - f).abs() <= 1e-4 * (1.0 + f));
            }

            #[test]
            fn waveform_bounded_by_amplitude(p in 0.0f64..10.0, frac in 0.0f64..1.0) {
                let c = ChirpConfig::new(0.0, 1000.0, 15.0).unwrap().with_amplitude(p);
                prop_assert!(c.waveform(frac * 15.0).unwrap().abs() <= p);
            }

            #[test]
            fn frequency_monotone_with_rate_sign(f0 in 0.0f64..1000.0, f1 in 0.0f64..1000.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
                let c = ChirpConfig::new(f0, f1, 10.0).unwrap();
                let (ta, tb) = (a.min(b) * 10.0, a.max(b) * 10.0);
                let diff = c.frequency(tb).unwrap() - c.frequency(ta).unwrap();
                prop_assert!(diff * c.sweep_rate() >= 0.0);
            }
        }
    }
}

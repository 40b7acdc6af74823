use std::fmt;

use super::CsiTrace;

/// A single invariant violation found in a trace.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    InvalidPacketRate(f64),
    InvalidWavelength(f64),
    TooFewAntennas(usize),
    UnsupportedTxCount(usize),
    NoSubcarriers,
    DimensionMismatch {
        frame: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    NonFiniteSample {
        frame: usize,
        rx: usize,
        subcarrier: usize,
    },
    NonFiniteTimestamp {
        frame: usize,
    },
    /// `frame`'s timestamp is not strictly greater than its predecessor's.
    NonMonotoneTimestamp {
        frame: usize,
    },
    RateDurationMismatch {
        frame_count: usize,
        expected: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "empty: trace has no frames"),
            Violation::InvalidPacketRate(r) => write!(f, "packet rate must be > 0, got {r}"),
            Violation::InvalidWavelength(w) => write!(f, "carrier wavelength must be > 0, got {w}"),
            Violation::TooFewAntennas(n) => write!(f, "need at least 2 receive antennas, got {n}"),
            Violation::UnsupportedTxCount(n) => write!(f, "only single-transmitter traces are supported, got {n}"),
            Violation::NoSubcarriers => write!(f, "trace has no subcarriers"),
            Violation::DimensionMismatch { frame, expected, found } => write!(
                f,
                "frame {frame}: shape {}x{} does not match header {}x{}",
                found.0, found.1, expected.0, expected.1
            ),
            Violation::NonFiniteSample { frame, rx, subcarrier } => {
                write!(f, "frame {frame}: non-finite sample at antenna {rx}, subcarrier {subcarrier}")
            }
            Violation::NonFiniteTimestamp { frame } => write!(f, "frame {frame}: non-finite timestamp"),
            Violation::NonMonotoneTimestamp { frame } => {
                write!(f, "frame {frame}: timestamp not strictly increasing")
            }
            Violation::RateDurationMismatch { frame_count, expected } => write!(
                f,
                "frame count {frame_count} inconsistent with packet rate x duration = {expected}"
            ),
        }
    }
}

/// Checks every trace invariant and returns all violations found.
///
/// An empty result means the trace is valid.
pub fn validate_trace(trace: &CsiTrace) -> Vec<Violation> {
    let mut out = Vec::new();
    let rate_ok = trace.packet_rate.is_finite() && trace.packet_rate > 0.0;
    if !rate_ok {
        out.push(Violation::InvalidPacketRate(trace.packet_rate));
    }
    if !(trace.carrier_wavelength.is_finite() && trace.carrier_wavelength > 0.0) {
        out.push(Violation::InvalidWavelength(trace.carrier_wavelength));
    }
    if trace.n_rx < 2 {
        out.push(Violation::TooFewAntennas(trace.n_rx));
    }
    if trace.n_tx != 1 {
        out.push(Violation::UnsupportedTxCount(trace.n_tx));
    }
    if trace.n_subcarriers == 0 {
        out.push(Violation::NoSubcarriers);
    }
    if trace.frames.is_empty() {
        out.push(Violation::Empty);
        return out;
    }

    let expected_dims = (trace.n_rx, trace.n_subcarriers);
    let mut timestamps_ok = true;
    for (i, frame) in trace.frames.iter().enumerate() {
        let dims = (frame.n_rx, frame.n_subcarriers);
        if dims != expected_dims || !frame.is_consistent() {
            out.push(Violation::DimensionMismatch {
                frame: i,
                expected: expected_dims,
                found: dims,
            });
            continue;
        }
        for rx in 0..frame.n_rx {
            for (sub, v) in frame.antenna(rx).iter().enumerate() {
                if !(v.re.is_finite() && v.im.is_finite()) {
                    out.push(Violation::NonFiniteSample { frame: i, rx, subcarrier: sub });
                }
            }
        }
        if !frame.timestamp.is_finite() {
            timestamps_ok = false;
            out.push(Violation::NonFiniteTimestamp { frame: i });
        } else if i > 0 && frame.timestamp <= trace.frames[i - 1].timestamp {
            timestamps_ok = false;
            out.push(Violation::NonMonotoneTimestamp { frame: i });
        }
    }

    if rate_ok && timestamps_ok {
        let expected = (trace.packet_rate * trace.duration()).round();
        let n = trace.frames.len();
        if (n as f64 - expected).abs() > 1.0 {
            out.push(Violation::RateDurationMismatch {
                frame_count: n,
                expected: expected.max(0.0) as usize,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csi::{ComplexSample, CsiFrame};

    fn uniform_trace(frames: usize) -> CsiTrace {
        let mut t = CsiTrace::new(100.0, 3, 4);
        for i in 0..frames {
            let vals = (0..12).map(|k| ComplexSample::new(k as f32, -(i as f32))).collect();
            t.frames.push(CsiFrame::new(i as f64 / 100.0, 3, 4, vals));
        }
        t
    }

    #[test]
    fn well_formed_trace_has_no_violations() {
        assert!(validate_trace(&uniform_trace(50)).is_empty());
    }

    #[test]
    fn empty_trace_is_flagged() {
        assert_eq!(validate_trace(&uniform_trace(0)), vec![Violation::Empty]);
    }

    #[test]
    fn single_nan_is_reported_once_with_location() {
        let mut t = uniform_trace(20);
        t.frames[7].values[4 + 2].im = f32::NAN;
        assert_eq!(
            validate_trace(&t),
            vec![Violation::NonFiniteSample { frame: 7, rx: 1, subcarrier: 2 }]
        );
    }

    #[test]
    fn shuffled_timestamps_are_flagged() {
        let mut t = uniform_trace(20);
        t.frames.swap(3, 11);
        let v = validate_trace(&t);
        assert!(v.iter().any(|x| matches!(x, Violation::NonMonotoneTimestamp { .. })));
    }

    #[test]
    fn dimension_and_header_problems() {
        let mut t = uniform_trace(5);
        t.frames[2] = CsiFrame::zeros(0.02, 2, 4);
        t.n_tx = 2;
        let v = validate_trace(&t);
        assert!(v.contains(&Violation::UnsupportedTxCount(2)));
        assert!(v.contains(&Violation::DimensionMismatch { frame: 2, expected: (3, 4), found: (2, 4) }));

        let mut t = uniform_trace(5);
        t.n_rx = 1;
        t.packet_rate = 0.0;
        let v = validate_trace(&t);
        assert!(v.contains(&Violation::TooFewAntennas(1)));
        assert!(v.contains(&Violation::InvalidPacketRate(0.0)));
    }

    #[test]
    fn rate_duration_mismatch() {
        let mut t = uniform_trace(50);
        t.packet_rate = 50.0; // timestamps imply 100 fps
        let v = validate_trace(&t);
        assert!(matches!(v[..], [Violation::RateDurationMismatch { frame_count: 50, .. }]));
    }
}

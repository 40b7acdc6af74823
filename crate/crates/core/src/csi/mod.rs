//! Channel-state trace model shared by every stage of the pipeline.
//!
//! A [`CsiTrace`] is a time-ordered list of [`CsiFrame`]s, each holding the
//! `n_rx × n_subcarriers` complex channel response measured for one probe
//! packet. Samples are stored as `f32` pairs, which is also the on-disk
//! precision, so file round-trips are bit-exact.

mod chirp;
pub mod io;
mod validate;

use std::collections::BTreeMap;

use num_complex::Complex32;
use serde_json::Value;

pub use chirp::{ChirpConfig, ChirpError, Excitation, ScheduledSweep};
pub use io::{read_trace, write_trace, TraceError, TraceFormat};
pub use validate::{validate_trace, Violation};

/// One complex CSI entry.
pub type ComplexSample = Complex32;

/// Default probe rate in frames per second.
pub const DEFAULT_PACKET_RATE: f64 = 2000.0;
/// Default number of reported subcarriers.
pub const DEFAULT_SUBCARRIERS: usize = 30;
/// 5 GHz carrier wavelength in meters.
pub const DEFAULT_WAVELENGTH: f64 = 0.06;

/// Free-form key/value annotations attached to a trace.
pub type Metadata = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq)]
pub struct CsiFrame {
    /// Seconds since the start of the trace.
    pub timestamp: f64,
    pub n_rx: usize,
    pub n_subcarriers: usize,
    /// Row-major by antenna: `values[rx * n_subcarriers + sub]`.
    pub values: Vec<ComplexSample>,
}

impl CsiFrame {
    pub fn new(timestamp: f64, n_rx: usize, n_subcarriers: usize, values: Vec<ComplexSample>) -> Self {
        Self {
            timestamp,
            n_rx,
            n_subcarriers,
            values,
        }
    }

    /// All-zero frame.
    pub fn zeros(timestamp: f64, n_rx: usize, n_subcarriers: usize) -> Self {
        Self::new(timestamp, n_rx, n_subcarriers, vec![ComplexSample::default(); n_rx * n_subcarriers])
    }

    pub fn get(&self, rx: usize, sub: usize) -> ComplexSample {
        self.values[rx * self.n_subcarriers + sub]
    }

    /// The subcarrier row of one receive antenna.
    pub fn antenna(&self, rx: usize) -> &[ComplexSample] {
        &self.values[rx * self.n_subcarriers..(rx + 1) * self.n_subcarriers]
    }

    pub fn is_consistent(&self) -> bool {
        self.values.len() == self.n_rx * self.n_subcarriers
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsiTrace {
    /// Frames per second.
    pub packet_rate: f64,
    pub n_rx: usize,
    pub n_tx: usize,
    pub n_subcarriers: usize,
    /// Meters.
    pub carrier_wavelength: f64,
    pub frames: Vec<CsiFrame>,
    pub metadata: Metadata,
}

impl CsiTrace {
    /// Empty trace with the default single transmit antenna and 6 cm carrier.
    pub fn new(packet_rate: f64, n_rx: usize, n_subcarriers: usize) -> Self {
        Self {
            packet_rate,
            n_rx,
            n_tx: 1,
            n_subcarriers,
            carrier_wavelength: DEFAULT_WAVELENGTH,
            frames: Vec::new(),
            metadata: Metadata::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Covered time span assuming one frame period per frame.
    pub fn duration(&self) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) => b.timestamp - a.timestamp + 1.0 / self.packet_rate,
            _ => 0.0,
        }
    }

    /// Time series of one (antenna, subcarrier) cell.
    pub fn cell_series(&self, rx: usize, sub: usize) -> Vec<ComplexSample> {
        self.frames.iter().map(|f| f.get(rx, sub)).collect()
    }

    pub fn metadata_f64(&self, key: &str) -> Option<f64> {
        self.metadata.get(key).and_then(Value::as_f64)
    }
}

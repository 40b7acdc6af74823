//! End-to-end resonance estimation for one trace.
//!
//! Order of operations: conjugate product of the selected antenna pair,
//! per-subcarrier unwrapped phase, zero-phase high-pass of each phase
//! column, leading principal component, one spectrogram per sweep, optional
//! baseline subtraction, bidirectional peak estimate.

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csi::{validate_trace, CsiTrace, Excitation, Violation};
use crate::features::{
    estimate_resonance, pca_first, phase_series, stft, FeatureError, PcaProjection, PeakConfig, ResonanceEstimate,
    Spectrogram, StftConfig, SweepSpectrum,
};
use crate::preprocess::{
    conjugate_multiply, highpass_columns, select_pair, spectral_subtract, PreprocessError, DEFAULT_CUTOFF,
    DEFAULT_FILTER_ORDER,
};

/// Seconds.
pub const DEFAULT_EDGE_TRIM: f64 = 0.25;
/// Seconds; shortest automatic baseline before excitation onset.
pub const MIN_BASELINE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselinePolicy {
    /// Explicit baseline trace if given, else the pre-excitation interval, else none.
    #[default]
    Auto,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Sweep schedule used when a trace does not carry its own.
    pub excitation: Excitation,
    /// Frames per second for synthesized traces.
    pub packet_rate: f64,
    /// High-pass cutoff in Hz.
    pub cutoff: f64,
    pub filter_order: usize,
    pub stft: StftConfig,
    pub threshold_divisor: f64,
    /// Hz.
    pub verification_window: f64,
    pub min_peak_to_median: f64,
    pub cross_check_bins: f64,
    /// Seconds dropped at both ends of the filtered series.
    pub edge_trim: f64,
    pub baseline: BaselinePolicy,
    /// Fixed antenna pair; selected automatically when absent.
    pub antenna_pair: Option<(usize, usize)>,
    pub model_path: Option<String>,
    pub output_path: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let peaks = PeakConfig::default();
        Self {
            excitation: Excitation::default(),
            packet_rate: crate::csi::DEFAULT_PACKET_RATE,
            cutoff: DEFAULT_CUTOFF,
            filter_order: DEFAULT_FILTER_ORDER,
            stft: StftConfig::default(),
            threshold_divisor: peaks.threshold_divisor,
            verification_window: peaks.verification_window,
            min_peak_to_median: peaks.min_peak_to_median,
            cross_check_bins: peaks.cross_check_bins,
            edge_trim: DEFAULT_EDGE_TRIM,
            baseline: BaselinePolicy::Auto,
            antenna_pair: None,
            model_path: None,
            output_path: None,
        }
    }
}

impl PipelineConfig {
    pub fn peak_config(&self) -> PeakConfig {
        PeakConfig {
            threshold_divisor: self.threshold_divisor,
            verification_window: self.verification_window,
            min_peak_to_median: self.min_peak_to_median,
            min_freq: self.cutoff,
            cross_check_bins: self.cross_check_bins,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(self.packet_rate.is_finite() && self.packet_rate > 0.0) {
            return bad(format!("packet_rate must be > 0, got {}", self.packet_rate));
        }
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return bad(format!("cutoff must be > 0, got {}", self.cutoff));
        }
        if self.filter_order == 0 || self.filter_order % 2 != 0 {
            return bad(format!("filter_order must be even and positive, got {}", self.filter_order));
        }
        if !(self.edge_trim.is_finite() && self.edge_trim >= 0.0) {
            return bad(format!("edge_trim must be >= 0, got {}", self.edge_trim));
        }
        self.excitation.validate().map_err(|e| PipelineError::Config(format!("excitation: {e}")))?;
        self.stft.validate().map_err(|e| PipelineError::Config(format!("stft: {e}")))?;
        self.peak_config().validate().map_err(|e| match e {
            FeatureError::Config(m) => PipelineError::Config(m),
            other => PipelineError::Config(other.to_string()),
        })?;
        if let Some((l, s)) = self.antenna_pair {
            if l == s {
                return bad(format!("antenna_pair must name two antennas, got ({l}, {s})"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid trace: {}", join(.0))]
    InvalidTrace(Vec<Violation>),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl PipelineError {
    /// The excitation left no detectable resonance.
    pub fn is_no_peak(&self) -> bool {
        matches!(self, PipelineError::Feature(FeatureError::NoPeak { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineSource {
    Explicit,
    PreExcitation,
    None,
}

/// Single vibration series extracted from a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub pair: (usize, usize),
    pub sample_rate: f64,
    pub pca: PcaProjection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessOutput {
    pub estimate: ResonanceEstimate,
    pub antenna_pair: (usize, usize),
    pub explained_variance_ratio: f64,
    pub baseline: BaselineSource,
}

/// The trace's own sweep schedule if it records one, else the configured one.
pub fn trace_excitation(trace: &CsiTrace, cfg: &PipelineConfig) -> Excitation {
    trace
        .metadata
        .get("excitation")
        .and_then(|v| serde_json::from_value::<Excitation>(v.clone()).ok())
        .filter(|e| e.validate().is_ok())
        .unwrap_or_else(|| cfg.excitation.clone())
}

fn filtered_phases(trace: &CsiTrace, pair: (usize, usize), cfg: &PipelineConfig) -> Result<nalgebra::DMatrix<f64>, PipelineError> {
    let combined = conjugate_multiply(trace, pair.0, pair.1)?;
    let phases = phase_series(&combined);
    Ok(highpass_columns(&phases, trace.packet_rate, cfg.cutoff, cfg.filter_order)?)
}

fn check_trace(trace: &CsiTrace) -> Result<(), PipelineError> {
    let violations = validate_trace(trace);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::InvalidTrace(violations))
    }
}

/// Pair selection, phase extraction, filtering and PCA.
pub fn extract_component(trace: &CsiTrace, cfg: &PipelineConfig) -> Result<Component, PipelineError> {
    cfg.validate()?;
    check_trace(trace)?;
    let excitation = trace_excitation(trace, cfg);
    let pair = match cfg.antenna_pair {
        Some(p) => p,
        None => select_pair(trace, (cfg.cutoff, excitation.f_max()))?,
    };
    let phases = filtered_phases(trace, pair, cfg)?;
    Ok(Component { pair, sample_rate: trace.packet_rate, pca: pca_first(&phases)? })
}

/// Spectrogram of the whole component, time bins relative to the trace start.
pub fn component_spectrogram(trace: &CsiTrace, cfg: &PipelineConfig) -> Result<Spectrogram, PipelineError> {
    let c = extract_component(trace, cfg)?;
    Ok(stft(&c.pca.component, c.sample_rate, &cfg.stft)?)
}

fn sample_index(t: f64, rate: f64) -> usize {
    (t * rate).round().max(0.0) as usize
}

/// Full chain from raw trace to resonance estimate.
///
/// `baseline`, when given, is a no-vibration recording of the same scene; it
/// is projected with the same antenna pair and principal weights.
pub fn process_trace(
    trace: &CsiTrace,
    baseline: Option<&CsiTrace>,
    cfg: &PipelineConfig,
) -> Result<ProcessOutput, PipelineError> {
    let component = extract_component(trace, cfg)?;
    let rate = component.sample_rate;
    let series = &component.pca.component;
    let excitation = trace_excitation(trace, cfg);
    let schedule = excitation.schedule();

    let trim = sample_index(cfg.edge_trim, rate);
    let usable = trim..series.len().saturating_sub(trim);

    let mut spectra = Vec::with_capacity(schedule.len());
    for sweep in &schedule {
        let start = sample_index(sweep.onset, rate).max(usable.start);
        let end = sample_index(sweep.end(), rate).min(usable.end);
        if end <= start || end - start < cfg.stft.window_len {
            return Err(FeatureError::InsufficientData(format!(
                "sweep at {:.2}-{:.2} s is not covered by the trace",
                sweep.onset,
                sweep.end()
            ))
            .into());
        }
        let spec = stft(&series[start..end], rate, &cfg.stft)?.offset_time(start as f64 / rate);
        spectra.push(spec);
    }

    let (floor, source) = baseline_spectrogram(trace, baseline, &component, &schedule, cfg)?;
    if let Some(floor) = &floor {
        for s in spectra.iter_mut() {
            *s = spectral_subtract(s, floor)?;
        }
    }

    let sweeps: Vec<SweepSpectrum<'_>> = spectra
        .iter()
        .zip(&schedule)
        .map(|(spectrogram, s)| SweepSpectrum { spectrogram, chirp: &s.chirp })
        .collect();
    let estimate = estimate_resonance(&sweeps, &cfg.peak_config())?;
    Ok(ProcessOutput {
        estimate,
        antenna_pair: component.pair,
        explained_variance_ratio: component.pca.explained_variance_ratio,
        baseline: source,
    })
}

fn baseline_spectrogram(
    trace: &CsiTrace,
    explicit: Option<&CsiTrace>,
    component: &Component,
    schedule: &[crate::csi::ScheduledSweep],
    cfg: &PipelineConfig,
) -> Result<(Option<Spectrogram>, BaselineSource), PipelineError> {
    if cfg.baseline == BaselinePolicy::Off {
        return Ok((None, BaselineSource::None));
    }
    if let Some(b) = explicit {
        check_trace(b)?;
        if b.n_rx != trace.n_rx || b.n_subcarriers != trace.n_subcarriers || b.packet_rate != trace.packet_rate {
            return Err(PipelineError::Config("baseline trace shape or packet rate differs from the trace".into()));
        }
        let projected = component.pca.project(&filtered_phases(b, component.pair, cfg)?)?;
        return Ok((Some(stft(&projected, component.sample_rate, &cfg.stft)?), BaselineSource::Explicit));
    }
    let rate = component.sample_rate;
    let onset = schedule.first().map_or(0.0, |s| s.onset);
    let quiet = sample_index(onset, rate).min(component.pca.component.len());
    if quiet >= cfg.stft.window_len && onset >= MIN_BASELINE {
        let spec = stft(&component.pca.component[..quiet], rate, &cfg.stft)?;
        return Ok((Some(spec), BaselineSource::PreExcitation));
    }
    info!(
        "no baseline: pre-excitation interval of {onset:.2} s is shorter than one analysis window; skipping spectral subtraction"
    );
    Ok((None, BaselineSource::None))
}

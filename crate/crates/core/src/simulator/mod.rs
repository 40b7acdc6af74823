//! Synthetic CSI for a chirp-driven vibrating container in a multipath scene.
//!
//! Each receive antenna sees the superposition of static paths
//! `a / D² · exp(-j2πD/λ)` and dynamic paths whose length is stretched by the
//! container's surface displacement, `D + d(t)(cos θ + cos θ̄)`. Antennas differ
//! by a small per-path length offset `m · spacing · sin(arrival_angle)`. Each
//! frame is then rotated by a common clock phase (a random walk shared by all
//! antennas) and a fixed per-antenna phase, and circular Gaussian noise is
//! added per subcarrier.
//!
//! Noise for frame `i` is drawn from a ChaCha8 stream keyed by `(seed, i)`,
//! so frames can be generated in any order with identical output.

mod dataset;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::csi::{
    ChirpConfig, ChirpError, ComplexSample, CsiFrame, CsiTrace, Excitation, ScheduledSweep, DEFAULT_SUBCARRIERS,
    DEFAULT_WAVELENGTH,
};

pub use dataset::{
    plan_dataset, synth_dataset, CurveKnot, DatasetItem, GroundTruthCurve, LabeledTrace, Manifest, ManifestEntry,
};

/// Frequency ratio between the second and first resonance mode.
pub const SECOND_MODE_RATIO: f64 = 9.0 / 4.0;
/// Displacement ratio between the first and second mode.
pub const SECOND_MODE_ATTENUATION: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    Config(String),
    #[error("packet rate {rate} Hz is below the Nyquist rate {required} Hz for the excitation band")]
    Nyquist { rate: f64, required: f64 },
    #[error(transparent)]
    Chirp(#[from] ChirpError),
    #[error("level {level} ml is outside [0, {capacity}] ml")]
    LevelOutOfRange { level: f64, capacity: f64 },
    #[error("invalid ground-truth curve: {0}")]
    Curve(String),
}

fn default_lag() -> f64 {
    0.05
}

/// First-mode vibration response of the container surface.
///
/// The magnitude follows a driven damped oscillator,
/// `A(f) = c / sqrt((f_R² - f²)² + (γ f)²)`, with `c` chosen so that
/// `A(f_R) = peak_displacement`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VibrationModel {
    /// Hz.
    pub resonance_freq: f64,
    /// Half-power bandwidth γ in Hz.
    pub damping: f64,
    /// Meters of surface displacement at resonance. Zero disables vibration.
    pub peak_displacement: f64,
    /// Response lag δ in seconds: the amplitude follows `A(f(t - δ))`.
    #[serde(default = "default_lag")]
    pub lag: f64,
    /// Adds a second mode at 9/4 · f_R with a tenth of the displacement.
    #[serde(default)]
    pub second_mode: bool,
}

impl Default for VibrationModel {
    fn default() -> Self {
        Self {
            resonance_freq: 305.0,
            damping: 4.0,
            peak_displacement: 0.95e-3,
            lag: default_lag(),
            second_mode: false,
        }
    }
}

fn oscillator_gain(f: f64, f_r: f64, gamma: f64, peak: f64) -> f64 {
    let num = peak * gamma * f_r;
    let den = ((f_r * f_r - f * f).powi(2) + (gamma * f).powi(2)).sqrt();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl VibrationModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = |v: f64| v.is_finite();
        if !(ok(self.resonance_freq) && self.resonance_freq > 0.0) {
            return Err(SimError::Config(format!("vibration.resonance_freq must be > 0, got {}", self.resonance_freq)));
        }
        if !(ok(self.damping) && self.damping > 0.0) {
            return Err(SimError::Config(format!("vibration.damping must be > 0, got {}", self.damping)));
        }
        if !(ok(self.peak_displacement) && self.peak_displacement >= 0.0) {
            return Err(SimError::Config(format!(
                "vibration.peak_displacement must be >= 0, got {}",
                self.peak_displacement
            )));
        }
        if !(ok(self.lag) && self.lag >= 0.0) {
            return Err(SimError::Config(format!("vibration.lag must be >= 0, got {}", self.lag)));
        }
        Ok(())
    }

    /// First-mode magnitude response `A(f)` in meters.
    pub fn gain(&self, f: f64) -> f64 {
        oscillator_gain(f, self.resonance_freq, self.damping, self.peak_displacement)
    }

    /// Second-mode magnitude response (zero unless enabled).
    pub fn second_mode_gain(&self, f: f64) -> f64 {
        if !self.second_mode {
            return 0.0;
        }
        oscillator_gain(
            f,
            SECOND_MODE_RATIO * self.resonance_freq,
            SECOND_MODE_RATIO * self.damping,
            self.peak_displacement / SECOND_MODE_ATTENUATION,
        )
    }

    /// Surface displacement at time `t` into `chirp`.
    ///
    /// The phase follows the chirp's accumulated phase while the envelope
    /// follows the response at the lagged drive frequency.
    pub fn displacement(&self, chirp: &ChirpConfig, t: f64) -> Result<f64, ChirpError> {
        let phase = chirp.phase(t)?;
        Ok(self.displacement_with_phase(chirp, t, phase))
    }

    fn displacement_with_phase(&self, chirp: &ChirpConfig, t: f64, phase: f64) -> f64 {
        let f = chirp.frequency_unchecked((t - self.lag).max(0.0));
        (self.gain(f) + self.second_mode_gain(f)) * phase.sin()
    }
}

/// Free-function form of [`VibrationModel::displacement`].
pub fn displacement(vib: &VibrationModel, chirp: &ChirpConfig, t: f64) -> Result<f64, SimError> {
    Ok(vib.displacement(chirp, t)?)
}

/// One propagation path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    /// Total path length D in meters.
    pub length: f64,
    /// Amplitude scale `a` (absorbs the proportionality constant).
    pub base_attenuation: f64,
    /// Whether the path reflects off the vibrating container.
    #[serde(default)]
    pub is_dynamic: bool,
    /// θ in radians, dynamic paths only.
    #[serde(default)]
    pub incidence_angle: f64,
    /// θ̄ in radians, dynamic paths only.
    #[serde(default)]
    pub reflection_angle: f64,
    /// Arrival angle at the receive array in radians; sets the per-antenna length offset.
    #[serde(default)]
    pub arrival_angle: f64,
    /// Optional per-antenna amplitude multipliers (length `n_rx`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antenna_gains: Option<Vec<f64>>,
}

impl PathSpec {
    pub fn fixed(length: f64, base_attenuation: f64, arrival_angle: f64) -> Self {
        Self {
            length,
            base_attenuation,
            is_dynamic: false,
            incidence_angle: 0.0,
            reflection_angle: 0.0,
            arrival_angle,
            antenna_gains: None,
        }
    }

    pub fn vibrating(length: f64, base_attenuation: f64, incidence: f64, reflection: f64, arrival_angle: f64) -> Self {
        Self {
            length,
            base_attenuation,
            is_dynamic: true,
            incidence_angle: incidence,
            reflection_angle: reflection,
            arrival_angle,
            antenna_gains: None,
        }
    }

    pub fn with_antenna_gains(mut self, gains: Vec<f64>) -> Self {
        self.antenna_gains = Some(gains);
        self
    }

    /// Path-length change per meter of surface displacement, `cos θ + cos θ̄`.
    pub fn displacement_factor(&self) -> f64 {
        if self.is_dynamic {
            self.incidence_angle.cos() + self.reflection_angle.cos()
        } else {
            0.0
        }
    }

    fn antenna_gain(&self, rx: usize) -> f64 {
        self.antenna_gains.as_ref().map_or(1.0, |g| g[rx])
    }
}

/// A stationary vibrating reflector (fan, appliance) at a fixed frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interferer {
    pub length: f64,
    pub base_attenuation: f64,
    #[serde(default)]
    pub arrival_angle: f64,
    /// Hz.
    pub freq: f64,
    /// Path-length oscillation amplitude in meters.
    pub displacement: f64,
}

fn default_walk_step() -> f64 {
    0.1
}

/// Clock-induced phase impairments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockOffsetModel {
    /// Std of the per-frame common phase random-walk step, radians.
    #[serde(default = "default_walk_step")]
    pub walk_step_std: f64,
    /// Static phase per receive antenna, radians. Empty means all zero.
    #[serde(default)]
    pub antenna_phase_offsets: Vec<f64>,
}

impl Default for ClockOffsetModel {
    fn default() -> Self {
        Self {
            walk_step_std: default_walk_step(),
            antenna_phase_offsets: vec![0.0, 0.9, -1.4],
        }
    }
}

impl ClockOffsetModel {
    pub fn disabled() -> Self {
        Self {
            walk_step_std: 0.0,
            antenna_phase_offsets: Vec::new(),
        }
    }

    fn antenna_offset(&self, rx: usize) -> f64 {
        self.antenna_phase_offsets.get(rx).copied().unwrap_or(0.0)
    }
}

fn default_n_rx() -> usize {
    3
}

fn default_n_subcarriers() -> usize {
    DEFAULT_SUBCARRIERS
}

fn default_wavelength() -> f64 {
    DEFAULT_WAVELENGTH
}

fn default_spacing() -> f64 {
    DEFAULT_WAVELENGTH / 2.0
}

/// Everything the simulator needs to produce a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub paths: Vec<PathSpec>,
    #[serde(default)]
    pub excitation: Excitation,
    #[serde(default)]
    pub vibration: VibrationModel,
    /// Std of the circular complex noise added to every CSI value.
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub clock: ClockOffsetModel,
    #[serde(default = "default_wavelength")]
    pub carrier_wavelength: f64,
    #[serde(default = "default_n_rx")]
    pub n_rx: usize,
    #[serde(default = "default_n_subcarriers")]
    pub n_subcarriers: usize,
    /// Receive antenna spacing in meters.
    #[serde(default = "default_spacing")]
    pub antenna_spacing: f64,
    #[serde(default)]
    pub interferers: Vec<Interferer>,
}

impl Default for SceneConfig {
    /// Line-of-sight path, one wall reflection and one container reflection.
    fn default() -> Self {
        Self {
            paths: vec![
                PathSpec::fixed(2.0, 1.0, 0.35),
                PathSpec::fixed(3.4, 1.2, -0.9),
                PathSpec::vibrating(2.6, 1.0, PI / 3.0, PI / 3.0, 0.8),
            ],
            excitation: Excitation::default(),
            vibration: VibrationModel::default(),
            noise_std: 0.002,
            clock: ClockOffsetModel::default(),
            carrier_wavelength: DEFAULT_WAVELENGTH,
            n_rx: 3,
            n_subcarriers: DEFAULT_SUBCARRIERS,
            antenna_spacing: default_spacing(),
            interferers: Vec::new(),
        }
    }
}

impl SceneConfig {
    /// Same scene with noise and clock impairments switched off.
    pub fn noiseless(mut self) -> Self {
        self.noise_std = 0.0;
        self.clock = ClockOffsetModel::disabled();
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let cfg = |msg: String| Err(SimError::Config(msg));
        self.excitation.validate()?;
        self.vibration.validate()?;
        if self.n_rx < 2 {
            return cfg(format!("n_rx must be >= 2, got {}", self.n_rx));
        }
        if self.n_rx > u16::MAX as usize || self.n_subcarriers > u16::MAX as usize {
            return cfg("n_rx and n_subcarriers must fit in u16".into());
        }
        if self.n_subcarriers == 0 {
            return cfg("n_subcarriers must be >= 1".into());
        }
        if !(self.carrier_wavelength.is_finite() && self.carrier_wavelength > 0.0) {
            return cfg(format!("carrier_wavelength must be > 0, got {}", self.carrier_wavelength));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return cfg(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        if !(self.antenna_spacing.is_finite() && self.antenna_spacing >= 0.0) {
            return cfg(format!("antenna_spacing must be >= 0, got {}", self.antenna_spacing));
        }
        if !(self.clock.walk_step_std.is_finite() && self.clock.walk_step_std >= 0.0) {
            return cfg("clock.walk_step_std must be >= 0".into());
        }
        let offsets = &self.clock.antenna_phase_offsets;
        if !offsets.is_empty() && offsets.len() != self.n_rx {
            return cfg(format!(
                "clock.antenna_phase_offsets has {} entries, expected {}",
                offsets.len(),
                self.n_rx
            ));
        }
        if !self.paths.iter().any(|p| !p.is_dynamic) || !self.paths.iter().any(|p| p.is_dynamic) {
            return cfg("paths need at least one static and one dynamic entry".into());
        }
        let max_disp = self.vibration.peak_displacement
            * if self.vibration.second_mode { 1.0 + 1.0 / SECOND_MODE_ATTENUATION } else { 1.0 };
        for (i, p) in self.paths.iter().enumerate() {
            if !(p.length.is_finite() && p.length > 0.0) {
                return cfg(format!("paths[{i}].length must be > 0"));
            }
            if !(p.base_attenuation.is_finite() && p.base_attenuation >= 0.0) {
                return cfg(format!("paths[{i}].base_attenuation must be >= 0"));
            }
            if let Some(g) = &p.antenna_gains {
                if g.len() != self.n_rx || g.iter().any(|v| !v.is_finite()) {
                    return cfg(format!("paths[{i}].antenna_gains must have {} finite entries", self.n_rx));
                }
            }
            if p.is_dynamic {
                let range = 0.0..=PI / 2.0;
                if !range.contains(&p.incidence_angle) || !range.contains(&p.reflection_angle) {
                    return cfg(format!("paths[{i}] angles must lie in [0, pi/2]"));
                }
                // Small-displacement regime: the stretch must stay far below the path length.
                if max_disp * p.displacement_factor() > 1e-2 * p.length {
                    return cfg(format!("paths[{i}]: displacement is not small relative to the path length"));
                }
            }
        }
        for (i, it) in self.interferers.iter().enumerate() {
            let finite = [it.length, it.base_attenuation, it.arrival_angle, it.freq, it.displacement]
                .iter()
                .all(|v| v.is_finite());
            if !finite || it.length <= 0.0 || it.freq < 0.0 {
                return cfg(format!("interferers[{i}] is invalid"));
            }
        }
        let (f_lo, f_hi) = (self.excitation.f_min(), self.excitation.f_max());
        let f_r = self.vibration.resonance_freq;
        if f_r < f_lo || f_r > f_hi {
            return cfg(format!("resonance {f_r} Hz lies outside the excitation band [{f_lo}, {f_hi}] Hz"));
        }
        Ok(())
    }

    /// Ground-truth annotations recorded with every synthesized trace.
    pub fn ground_truth(&self) -> serde_json::Map<String, serde_json::Value> {
        let directions: Vec<&str> = self
            .excitation
            .sweeps
            .iter()
            .map(|c| if c.is_upward() { "up" } else { "down" })
            .collect();
        let mut m = serde_json::Map::new();
        m.insert("resonance_freq".into(), json!(self.vibration.resonance_freq));
        m.insert("response_lag".into(), json!(self.vibration.lag));
        m.insert("sweep_directions".into(), json!(directions));
        m.insert("excitation".into(), serde_json::to_value(&self.excitation).expect("serializable"));
        m
    }
}

/// Noise-free channel of one antenna at one instant.
fn channel_response(scene: &SceneConfig, rx: usize, t: f64, disp: f64) -> Complex64 {
    let lambda = scene.carrier_wavelength;
    let offset = rx as f64 * scene.antenna_spacing;
    let term = |len: f64, a: f64| Complex64::from_polar(a / (len * len), -2.0 * PI * len / lambda);

    let mut h = Complex64::new(0.0, 0.0);
    for p in &scene.paths {
        let gain = p.antenna_gain(rx);
        if gain == 0.0 {
            continue;
        }
        let len = p.length + offset * p.arrival_angle.sin() + disp * p.displacement_factor();
        h += term(len, gain * p.base_attenuation);
    }
    for it in &scene.interferers {
        let len = it.length + offset * it.arrival_angle.sin() + it.displacement * (2.0 * PI * it.freq * t).sin();
        h += term(len, it.base_attenuation);
    }
    h
}

fn surface_displacement(scene: &SceneConfig, schedule: &[ScheduledSweep], t: f64) -> f64 {
    schedule
        .iter()
        .find(|s| t >= s.onset && t <= s.end())
        .map(|s| {
            let local = t - s.onset;
            scene
                .vibration
                .displacement_with_phase(&s.chirp, local, s.chirp.phase_unchecked(local))
        })
        .unwrap_or(0.0)
}

/// Synthesizes one frame.
///
/// `common_phase` is the frame's clock phase shared by all antennas; noise
/// is drawn from `rng`.
pub fn synth_frame<R: Rng + ?Sized>(scene: &SceneConfig, t: f64, common_phase: f64, rng: &mut R) -> Result<CsiFrame, SimError> {
    let total = scene.excitation.total_duration();
    if !(t >= 0.0 && t <= total) {
        return Err(SimError::Chirp(ChirpError::OutOfRange { t, duration: total }));
    }
    Ok(frame_at(scene, &scene.excitation.schedule(), t, common_phase, rng))
}

fn frame_at<R: Rng + ?Sized>(
    scene: &SceneConfig,
    schedule: &[ScheduledSweep],
    t: f64,
    common_phase: f64,
    rng: &mut R,
) -> CsiFrame {
    let disp = surface_displacement(scene, schedule, t);
    let n_sub = scene.n_subcarriers;
    // Circular noise: E|n|² = noise_std², split evenly between I and Q.
    let noise = (scene.noise_std > 0.0)
        .then(|| Normal::new(0.0, scene.noise_std / std::f64::consts::SQRT_2).expect("finite std"));
    let mut values = Vec::with_capacity(scene.n_rx * n_sub);
    for rx in 0..scene.n_rx {
        let rot = Complex64::from_polar(1.0, common_phase + scene.clock.antenna_offset(rx));
        let h = channel_response(scene, rx, t, disp) * rot;
        for _ in 0..n_sub {
            let v = match &noise {
                Some(n) => h + Complex64::new(n.sample(rng), n.sample(rng)),
                None => h,
            };
            values.push(ComplexSample::new(v.re as f32, v.im as f32));
        }
    }
    CsiFrame::new(t, scene.n_rx, n_sub, values)
}

const WALK_STREAM: u64 = u64::MAX;

/// Noise generator for frame `index`.
pub fn frame_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Common clock phase for every frame: a Gaussian random walk starting at 0.
fn common_phase_walk(step_std: f64, frames: usize, seed: u64) -> Vec<f64> {
    if step_std == 0.0 {
        return vec![0.0; frames];
    }
    let mut rng = frame_rng(seed, WALK_STREAM);
    let step = Normal::new(0.0, step_std).expect("finite std");
    let mut acc = 0.0;
    (0..frames)
        .map(|i| {
            if i > 0 {
                acc += step.sample(&mut rng);
            }
            acc
        })
        .collect()
}

/// Synthesizes a complete session sampled at `packet_rate`.
///
/// Frames are generated in parallel; the output depends only on
/// `(scene, packet_rate, seed)`.
pub fn synth_trace(scene: &SceneConfig, packet_rate: f64, seed: u64) -> Result<CsiTrace, SimError> {
    scene.validate()?;
    let required = 2.0 * scene.excitation.f_max();
    if !(packet_rate.is_finite() && packet_rate >= required && packet_rate > 0.0) {
        return Err(SimError::Nyquist { rate: packet_rate, required });
    }
    let n_frames = (scene.excitation.total_duration() * packet_rate).round() as usize;
    let schedule = scene.excitation.schedule();
    let walk = common_phase_walk(scene.clock.walk_step_std, n_frames, seed);

    let frames: Vec<CsiFrame> = (0..n_frames)
        .into_par_iter()
        .map(|i| {
            let t = i as f64 / packet_rate;
            let mut rng = frame_rng(seed, i as u64);
            frame_at(scene, &schedule, t, walk[i], &mut rng)
        })
        .collect();

    let mut trace = CsiTrace::new(packet_rate, scene.n_rx, scene.n_subcarriers);
    trace.carrier_wavelength = scene.carrier_wavelength;
    trace.frames = frames;
    trace.metadata.extend(scene.ground_truth());
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csi::validate_trace;

    fn no_rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn gain_peaks_at_resonance() {
        let vib = VibrationModel { resonance_freq: 305.0, damping: 4.0, ..Default::default() };
        assert!((vib.gain(305.0) - vib.peak_displacement).abs() < 1e-15);
        let best = (0..=10_000)
            .map(|i| i as f64 * 0.1)
            .max_by(|a, b| vib.gain(*a).total_cmp(&vib.gain(*b)))
            .unwrap();
        assert!((best - 305.0).abs() <= 0.1);
    }

    #[test]
    fn displacement_reaches_peak_at_resonance_phase_peak() {
        // Constant-frequency drive at f_R: the envelope equals the peak everywhere.
        let vib = VibrationModel { lag: 0.0, ..Default::default() };
        let tone = ChirpConfig::new(305.0, 305.0, 1.0).unwrap();
        let t = 0.25 / 305.0; // sin(phase) = 1
        assert!((vib.displacement(&tone, t).unwrap() - vib.peak_displacement).abs() < 1e-12);
        assert!(displacement(&vib, &tone, 1.5).is_err());
    }

    #[test]
    fn far_from_resonance_is_attenuated() {
        // Oracle: evaluate the magnitude formula directly on a dense grid.
        for (f_r, gamma) in [(170.0, 2.0), (305.0, 4.0), (900.0, 8.0)] {
            let vib = VibrationModel { resonance_freq: f_r, damping: gamma, lag: 0.0, ..Default::default() };
            for k in 0..2000 {
                let f = k as f64 * 0.5;
                if (f - f_r).abs() < 10.0 * gamma {
                    continue;
                }
                let direct = vib.peak_displacement * gamma * f_r
                    / ((f_r * f_r - f * f).powi(2) + (gamma * f).powi(2)).sqrt();
                assert!(direct <= vib.peak_displacement / 10.0, "f_R={f_r} f={f}");
                assert!((vib.gain(f) - direct).abs() <= 1e-18);
            }
        }
    }

    #[test]
    fn phase_swing_of_sub_millimeter_displacement() {
        let p = PathSpec::vibrating(2.0, 1.0, PI / 3.0, PI / 3.0, 0.0);
        let path_change = 0.95e-3 * p.displacement_factor();
        assert!((path_change - 0.95e-3).abs() < 1e-12);
        let swing = 2.0 * PI * path_change / DEFAULT_WAVELENGTH;
        assert!((swing - 0.0995).abs() / 0.0995 < 0.01);
    }

    #[test]
    fn dynamic_path_phase_follows_drive() {
        // Only the container reflection is visible; drive with a constant tone at resonance.
        let mut scene = SceneConfig::default().noiseless();
        scene.paths = vec![
            PathSpec::fixed(2.0, 0.0, 0.0),
            PathSpec::vibrating(2.6, 1.0, 0.4, 1.1, 0.0),
        ];
        scene.vibration.lag = 0.0;
        let f = scene.vibration.resonance_freq;
        scene.excitation = Excitation { sweeps: vec![ChirpConfig::new(f, f, 1.0).unwrap()], padding: 0.0 };
        let trace = synth_trace(&scene, 20_000.0, 0).unwrap();
        let phase: Vec<f64> = trace.frames.iter().map(|fr| fr.get(0, 0).arg() as f64).collect();
        let mean = phase.iter().sum::<f64>() / phase.len() as f64;
        let dev: Vec<f64> = phase.iter().map(|p| p - mean).collect();

        let expected = 2.0 * PI * scene.vibration.peak_displacement * (0.4f64.cos() + 1.1f64.cos()) / 0.06;
        let swing = dev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((swing - expected).abs() / expected < 0.02, "swing {swing} vs {expected}");

        let crossings = dev.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
        assert!((crossings as f64 - 2.0 * f).abs() <= 2.0, "{crossings} crossings");
    }

    #[test]
    fn single_static_path_value() {
        let mut scene = SceneConfig::default().noiseless();
        scene.paths = vec![
            PathSpec::fixed(1.0, 1.0, 0.0),
            PathSpec::vibrating(2.0, 0.0, 0.5, 0.5, 0.0),
        ];
        let frame = synth_frame(&scene, 3.0, 0.0, &mut no_rng()).unwrap();
        let expected = (-2.0 * PI / 0.06).rem_euclid(2.0 * PI);
        assert!((expected - 2.0 * PI / 3.0).abs() < 1e-9);
        for v in &frame.values {
            assert!((v.norm() - 1.0).abs() < 1e-6);
            let diff = (v.arg() as f64 - expected).rem_euclid(2.0 * PI);
            assert!(diff.min(2.0 * PI - diff) < 1e-5);
        }
    }

    #[test]
    fn zero_displacement_gives_constant_frames() {
        let mut scene = SceneConfig::default().noiseless();
        scene.vibration.peak_displacement = 0.0;
        let trace = synth_trace(&scene, 2000.0, 1).unwrap();
        let first = &trace.frames[0].values;
        assert!(trace.frames.iter().step_by(997).all(|f| &f.values == first));
    }

    #[test]
    fn same_seed_same_frame() {
        let scene = SceneConfig::default();
        let a = synth_frame(&scene, 7.3, 0.4, &mut frame_rng(9, 14)).unwrap();
        let b = synth_frame(&scene, 7.3, 0.4, &mut frame_rng(9, 14)).unwrap();
        assert_eq!(a, b);
        let c = synth_frame(&scene, 7.3, 0.4, &mut frame_rng(10, 14)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn default_trace_shape() {
        let trace = synth_trace(&SceneConfig::default(), 2000.0, 3).unwrap();
        assert_eq!(trace.len(), 60_000);
        assert_eq!((trace.n_rx, trace.n_subcarriers), (3, 30));
        assert!(validate_trace(&trace).is_empty());
        assert_eq!(trace.metadata_f64("resonance_freq"), Some(305.0));
    }

    #[test]
    fn seed_changes_noise_not_ground_truth() {
        let mut scene = SceneConfig::default();
        scene.excitation = Excitation::bidirectional(100.0, 400.0, 1.0).unwrap();
        let a = synth_trace(&scene, 1000.0, 1).unwrap();
        let b = synth_trace(&scene, 1000.0, 2).unwrap();
        assert_ne!(a.frames, b.frames);
        assert_eq!(a.metadata, b.metadata);
        assert_eq!(synth_trace(&scene, 1000.0, 1).unwrap(), a);
    }

    #[test]
    fn nyquist_violation_is_a_config_error() {
        let err = synth_trace(&SceneConfig::default(), 1500.0, 0).unwrap_err();
        assert!(matches!(err, SimError::Nyquist { required, .. } if required == 2000.0));
    }

    #[test]
    fn scene_validation() {
        let mut s = SceneConfig::default();
        s.paths.retain(|p| !p.is_dynamic);
        assert!(s.validate().is_err());

        let mut s = SceneConfig::default();
        s.vibration.resonance_freq = 1200.0;
        assert!(s.validate().is_err());

        let mut s = SceneConfig::default();
        s.vibration.peak_displacement = 0.05; // 5 cm on a 2.6 m path is not "small"
        assert!(s.validate().is_err());

        let mut s = SceneConfig::default();
        s.paths[2].incidence_angle = 2.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn common_phase_is_exactly_common_mode() {
        let scene = SceneConfig::default().noiseless();
        let a = synth_frame(&scene, 4.2, 0.0, &mut no_rng()).unwrap();
        let b = synth_frame(&scene, 4.2, 1.3, &mut no_rng()).unwrap();
        for sub in 0..scene.n_subcarriers {
            let pa = a.get(0, sub) * a.get(1, sub).conj();
            let pb = b.get(0, sub) * b.get(1, sub).conj();
            assert!((pa - pb).norm() < 1e-6);
        }
    }

    #[test]
    fn scene_json_round_trip_with_defaults() {
        let json = r#"{"paths": [
            {"length": 2.0, "base_attenuation": 1.0},
            {"length": 2.5, "base_attenuation": 0.8, "is_dynamic": true, "incidence_angle": 1.0, "reflection_angle": 1.0}
        ]}"#;
        let scene: SceneConfig = serde_json::from_str(json).unwrap();
        scene.validate().unwrap();
        assert_eq!(scene.n_subcarriers, 30);
        assert_eq!(scene.vibration.lag, 0.05);
        let back: SceneConfig = serde_json::from_str(&serde_json::to_string(&scene).unwrap()).unwrap();
        assert_eq!(back, scene);
    }
}

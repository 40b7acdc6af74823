//! Peak picking in averaged spectra and the bidirectional resonance estimate.

use serde::{Deserialize, Serialize};

use super::{FeatureError, Spectrogram};
use crate::csi::ChirpConfig;

/// Smallest gap between the first two modes when the second sits at 9/4 of
/// the first and the first is at least `f_min`.
pub fn min_mode_spacing(f_min: f64) -> f64 {
    f_min * 9.0 / 4.0 - f_min
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    /// Candidates need at least `max / threshold_divisor`.
    pub threshold_divisor: f64,
    /// Hz; a candidate this close to a stronger one is dropped.
    pub verification_window: f64,
    /// Minimum peak to median band power; below it the sweep counts as unexcited.
    pub min_peak_to_median: f64,
    /// Lowest frequency considered (the high-pass cutoff).
    pub min_freq: f64,
    /// Max-cell disagreement, in bins, that halves the quality score.
    pub cross_check_bins: f64,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            threshold_divisor: 3.0,
            verification_window: 200.0,
            min_peak_to_median: 5.0,
            min_freq: 100.0,
            cross_check_bins: 2.0,
        }
    }
}

impl PeakConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: &str| Err(FeatureError::Config(m.into()));
        if !(self.threshold_divisor.is_finite() && self.threshold_divisor >= 1.0) {
            return bad("threshold_divisor must be >= 1");
        }
        if !(self.verification_window.is_finite() && self.verification_window >= 0.0) {
            return bad("verification_window must be >= 0");
        }
        if !(self.min_peak_to_median.is_finite() && self.min_peak_to_median >= 0.0) {
            return bad("min_peak_to_median must be >= 0");
        }
        if !(self.min_freq.is_finite() && self.min_freq >= 0.0) {
            return bad("min_freq must be >= 0");
        }
        if !(self.cross_check_bins.is_finite() && self.cross_check_bins >= 0.0) {
            return bad("cross_check_bins must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Index into the spectrum passed to [`detect_peaks`].
    pub bin: usize,
    /// Frequency of the bin itself.
    pub bin_freq: f64,
    /// Sub-bin refined frequency.
    pub freq: f64,
    pub power: f64,
}

/// Fractional offset of a peak from bin `k`, from a parabola through the
/// log powers of `k - 1, k, k + 1`. Returns 0 at the edges.
pub fn refine_peak(power: &[f64], k: usize) -> f64 {
    if k == 0 || k + 1 >= power.len() {
        return 0.0;
    }
    let (a, b, c) = (power[k - 1], power[k], power[k + 1]);
    let (a, b, c) = if a > 0.0 && b > 0.0 && c > 0.0 { (a.ln(), b.ln(), c.ln()) } else { (a, b, c) };
    let den = a - 2.0 * b + c;
    if !(den < 0.0) {
        return 0.0;
    }
    (0.5 * (a - c) / den).clamp(-0.5, 0.5)
}

/// Local maxima above `max / threshold_divisor` that survive the
/// verification window, in ascending frequency.
///
/// On equal power the lower frequency counts as the stronger peak.
pub fn detect_peaks(freqs: &[f64], power: &[f64], cfg: &PeakConfig) -> Result<Vec<Peak>, FeatureError> {
    cfg.validate()?;
    if freqs.len() != power.len() {
        return Err(FeatureError::Config("frequency and power lengths differ".into()));
    }
    let (lo, hi) = (freqs.first().copied().unwrap_or(0.0), freqs.last().copied().unwrap_or(0.0));
    let no_peak = |reason: &str| FeatureError::NoPeak { lo, hi, reason: reason.into() };
    if power.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(FeatureError::Config("power must be finite and non-negative".into()));
    }
    let max = power.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(no_peak("spectrum is empty or all zero"));
    }
    let threshold = max / cfg.threshold_divisor;
    let n = power.len();
    let candidates: Vec<usize> = (0..n)
        .filter(|&k| power[k] >= threshold && is_local_max(power, k))
        .collect();

    let stronger = |a: usize, b: usize| power[a] > power[b] || (power[a] == power[b] && freqs[a] < freqs[b]);
    let peaks: Vec<Peak> = candidates
        .iter()
        .filter(|&&k| {
            !candidates
                .iter()
                .any(|&j| j != k && stronger(j, k) && (freqs[j] - freqs[k]).abs() <= cfg.verification_window)
        })
        .map(|&k| {
            let step = if n > 1 { freqs[1] - freqs[0] } else { 0.0 };
            Peak { bin: k, bin_freq: freqs[k], freq: freqs[k] + refine_peak(power, k) * step, power: power[k] }
        })
        .collect();
    if peaks.is_empty() {
        return Err(no_peak("no local maximum above threshold"));
    }
    Ok(peaks)
}

/// Strictly above the left neighbour and not below the right one, so a
/// plateau contributes its first bin. Endpoints must beat their only neighbour.
fn is_local_max(power: &[f64], k: usize) -> bool {
    let n = power.len();
    let p = power[k];
    if n == 1 {
        return true;
    }
    if k == 0 {
        return p > power[1];
    }
    if k + 1 == n {
        return p > power[k - 1];
    }
    p > power[k - 1] && p >= power[k + 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

/// One sweep's spectrogram with the chirp that produced it.
#[derive(Debug, Clone, Copy)]
pub struct SweepSpectrum<'a> {
    pub spectrogram: &'a Spectrogram,
    pub chirp: &'a ChirpConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPeak {
    pub direction: Direction,
    /// Hz, first resonance candidate of this sweep.
    pub freq: f64,
    pub power: f64,
    /// Frequency of the strongest single time-frequency cell.
    pub max_cell_freq: f64,
    pub quality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceEstimate {
    pub f_up: f64,
    pub f_down: f64,
    /// Midpoint of `f_up` and `f_down`.
    pub f_resonance: f64,
    /// Mean first-peak power, `[up, down]`.
    pub peak_powers: [f64; 2],
    /// Worst per-sweep peak-to-median ratio.
    pub quality: f64,
    pub sweeps: Vec<SweepPeak>,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 0 {
        0.5 * (values[m - 1] + values[m])
    } else {
        values[m]
    }
}

fn sweep_peak(s: &SweepSpectrum<'_>, cfg: &PeakConfig) -> Result<SweepPeak, FeatureError> {
    let spec = s.spectrogram;
    let lo = cfg.min_freq.max(s.chirp.f_min());
    let hi = s.chirp.f_max();
    let band = spec.band(lo, hi);
    if band.len() < 3 {
        return Err(FeatureError::InsufficientData(format!("band {lo:.1}-{hi:.1} Hz has fewer than 3 bins")));
    }
    let mean = spec.mean_spectrum();
    let freqs = &spec.freq_bins[band.clone()];
    let power = &mean[band.clone()];
    let peaks = detect_peaks(freqs, power, cfg)?;
    let first = peaks[0];

    let med = median(&mut power.to_vec());
    let ratio = if med > 0.0 { first.power / med } else { f64::INFINITY };
    if ratio < cfg.min_peak_to_median {
        return Err(FeatureError::NoPeak {
            lo,
            hi,
            reason: format!("peak-to-median ratio {ratio:.2} below {}", cfg.min_peak_to_median),
        });
    }
    let (_, cell, _) = spec.max_cell(band).expect("band is non-empty");
    let max_cell_freq = spec.freq_bins[cell];
    let mut quality = ratio;
    if (max_cell_freq - first.freq).abs() > cfg.cross_check_bins * spec.bin_spacing() {
        quality /= 2.0;
    }
    Ok(SweepPeak {
        direction: if s.chirp.is_upward() { Direction::Up } else { Direction::Down },
        freq: first.freq,
        power: first.power,
        max_cell_freq,
        quality,
    })
}

/// Bidirectional first-resonance estimate.
///
/// Every sweep yields its first peak; peaks are averaged per direction and
/// the resonance is the midpoint of the two direction means, which cancels
/// a lag-induced shift that is symmetric in sweep direction.
pub fn estimate_resonance(sweeps: &[SweepSpectrum<'_>], cfg: &PeakConfig) -> Result<ResonanceEstimate, FeatureError> {
    cfg.validate()?;
    let rate = |up: bool| {
        let r: Vec<f64> = sweeps
            .iter()
            .filter(|s| s.chirp.is_upward() == up)
            .map(|s| s.chirp.sweep_rate().abs())
            .collect();
        (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64)
    };
    let (Some(up_rate), Some(down_rate)) = (rate(true), rate(false)) else {
        return Err(FeatureError::InsufficientData("need at least one upward and one downward sweep".into()));
    };
    if (up_rate - down_rate).abs() > 1e-6 * up_rate.max(down_rate) {
        return Err(FeatureError::Config(format!(
            "sweep rates differ in magnitude ({up_rate} vs {down_rate} Hz/s)"
        )));
    }

    let peaks = sweeps.iter().map(|s| sweep_peak(s, cfg)).collect::<Result<Vec<_>, _>>()?;
    let mean_of = |dir: Direction, f: fn(&SweepPeak) -> f64| {
        let v: Vec<f64> = peaks.iter().filter(|p| p.direction == dir).map(f).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let f_up = mean_of(Direction::Up, |p| p.freq);
    let f_down = mean_of(Direction::Down, |p| p.freq);
    Ok(ResonanceEstimate {
        f_up,
        f_down,
        f_resonance: (f_up + f_down) / 2.0,
        peak_powers: [mean_of(Direction::Up, |p| p.power), mean_of(Direction::Down, |p| p.power)],
        quality: peaks.iter().map(|p| p.quality).fold(f64::INFINITY, f64::min),
        sweeps: peaks,
    })
}

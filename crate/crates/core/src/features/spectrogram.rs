//! Short-time Fourier transform of a real series.

use std::f64::consts::PI;
use std::io::{self, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::FeatureError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_len: usize,
    /// Samples shared by consecutive windows.
    pub overlap: usize,
    pub fft_len: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { window_len: 2048, overlap: 2000, fft_len: 2048 }
    }
}

impl StftConfig {
    pub fn hop(&self) -> usize {
        self.window_len - self.overlap
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.window_len < 2 {
            return Err(FeatureError::Config(format!("window_len must be >= 2, got {}", self.window_len)));
        }
        if self.overlap >= self.window_len {
            return Err(FeatureError::Config(format!(
                "overlap {} must be smaller than window_len {}",
                self.overlap, self.window_len
            )));
        }
        if self.fft_len < self.window_len {
            return Err(FeatureError::Config(format!(
                "fft_len {} must be >= window_len {}",
                self.fft_len, self.window_len
            )));
        }
        Ok(())
    }

    /// Frequency resolution in Hz at `sample_rate`.
    pub fn bin_spacing(&self, sample_rate: f64) -> f64 {
        sample_rate / self.fft_len as f64
    }
}

/// Symmetric Hamming window.
pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Power spectrogram, one row per window position.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub sample_rate: f64,
    pub window_len: usize,
    pub hop: usize,
    pub fft_len: usize,
    /// One-sided grid `k · sample_rate / fft_len`, `k = 0..=fft_len/2`.
    pub freq_bins: Vec<f64>,
    /// Window centres in seconds.
    pub time_bins: Vec<f64>,
    /// Row-major `time × frequency`.
    pub power: Vec<f64>,
}

impl Spectrogram {
    pub fn n_time(&self) -> usize {
        self.time_bins.len()
    }

    pub fn n_freq(&self) -> usize {
        self.freq_bins.len()
    }

    pub fn bin_spacing(&self) -> f64 {
        self.sample_rate / self.fft_len as f64
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let n = self.n_freq();
        &self.power[t * n..(t + 1) * n]
    }

    /// Power averaged over all time bins.
    pub fn mean_spectrum(&self) -> Vec<f64> {
        let n = self.n_freq();
        let mut acc = vec![0.0; n];
        for t in 0..self.n_time() {
            for (a, p) in acc.iter_mut().zip(self.row(t)) {
                *a += p;
            }
        }
        let count = self.n_time().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= count);
        acc
    }

    /// Shifts every time bin by `seconds`.
    pub fn offset_time(mut self, seconds: f64) -> Self {
        self.time_bins.iter_mut().for_each(|t| *t += seconds);
        self
    }

    pub fn same_grid(&self, other: &Spectrogram) -> bool {
        self.freq_bins == other.freq_bins
    }

    /// Bin index range covering `[lo, hi]` Hz.
    pub fn band(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let start = self.freq_bins.partition_point(|&f| f < lo);
        let end = self.freq_bins.partition_point(|&f| f <= hi);
        start..end.max(start)
    }

    /// `(time index, freq index, power)` of the strongest cell within `bins`.
    pub fn max_cell(&self, bins: std::ops::Range<usize>) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for t in 0..self.n_time() {
            let row = self.row(t);
            for k in bins.clone() {
                if best.is_none_or(|b| row[k] > b.2) {
                    best = Some((t, k, row[k]));
                }
            }
        }
        best
    }

    /// CSV with a header of frequency bins and one row per time bin.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "time_s")?;
        for f in &self.freq_bins {
            write!(w, ",{f}")?;
        }
        writeln!(w)?;
        for (t, time) in self.time_bins.iter().enumerate() {
            write!(w, "{time}")?;
            for p in self.row(t) {
                write!(w, ",{p}")?;
            }
            writeln!(w)?;
        }
        w.flush()
    }
}

/// Hamming-windowed power STFT.
pub fn stft(signal: &[f64], sample_rate: f64, cfg: &StftConfig) -> Result<Spectrogram, FeatureError> {
    cfg.validate()?;
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(FeatureError::Config(format!("sample rate must be > 0, got {sample_rate}")));
    }
    if signal.len() < cfg.window_len {
        return Err(FeatureError::TooShort { needed: cfg.window_len, got: signal.len() });
    }
    let hop = cfg.hop();
    let n_time = (signal.len() - cfg.window_len) / hop + 1;
    let n_freq = cfg.fft_len / 2 + 1;
    let window = hamming(cfg.window_len);
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(cfg.fft_len);

    let rows: Vec<Vec<f64>> = (0..n_time)
        .into_par_iter()
        .map_init(
            || (vec![Complex64::default(); cfg.fft_len], vec![Complex64::default(); fft.get_inplace_scratch_len()]),
            |(buf, scratch), t| {
                let start = t * hop;
                buf.iter_mut().for_each(|c| *c = Complex64::default());
                for (i, (x, w)) in signal[start..start + cfg.window_len].iter().zip(&window).enumerate() {
                    buf[i] = Complex64::new(x * w, 0.0);
                }
                fft.process_with_scratch(buf, scratch);
                buf[..n_freq].iter().map(|c| c.norm_sqr()).collect()
            },
        )
        .collect();

    let half = cfg.window_len as f64 / 2.0;
    Ok(Spectrogram {
        sample_rate,
        window_len: cfg.window_len,
        hop,
        fft_len: cfg.fft_len,
        freq_bins: (0..n_freq).map(|k| k as f64 * sample_rate / cfg.fft_len as f64).collect(),
        time_bins: (0..n_time).map(|t| (t as f64 * hop as f64 + half) / sample_rate).collect(),
        power: rows.concat(),
    })
}

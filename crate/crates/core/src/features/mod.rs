//! From combined CSI to a resonance frequency: phase extraction, PCA across
//! subcarriers, spectrograms and bidirectional peak estimation.

mod peaks;
mod spectrogram;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::preprocess::CombinedSeries;

pub use peaks::{
    detect_peaks, estimate_resonance, min_mode_spacing, refine_peak, Direction, Peak, PeakConfig, ResonanceEstimate,
    SweepPeak, SweepSpectrum,
};
pub use spectrogram::{hamming, stft, Spectrogram, StftConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("series too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("no peak in {lo:.1}-{hi:.1} Hz: {reason}")]
    NoPeak { lo: f64, hi: f64, reason: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("spectrogram frequency grids differ")]
    GridMismatch,
}

/// Removes jumps larger than π between consecutive samples in place.
pub fn unwrap(phase: &mut [f64]) {
    let mut correction = 0.0;
    for i in 1..phase.len() {
        let raw = phase[i] + correction;
        let d = raw - phase[i - 1];
        if d.abs() >= PI {
            let mut wrapped = (d + PI).rem_euclid(2.0 * PI) - PI;
            if wrapped == -PI && d > 0.0 {
                wrapped = PI;
            }
            correction += wrapped - d;
        }
        phase[i] += correction;
    }
}

/// Unwrapped, mean-removed phase of every subcarrier column.
pub fn phase_series(series: &CombinedSeries) -> DMatrix<f64> {
    let (rows, cols) = series.values.shape();
    let mut out = DMatrix::zeros(rows, cols);
    for c in 0..cols {
        let mut col: Vec<f64> = series.values.column(c).iter().map(|z| z.arg()).collect();
        unwrap(&mut col);
        let mean = col.iter().sum::<f64>() / rows.max(1) as f64;
        out.column_mut(c)
            .iter_mut()
            .zip(&col)
            .for_each(|(o, v)| *o = v - mean);
    }
    out
}

/// Leading principal component of a `time × subcarrier` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    /// Unit-norm; the entry of largest magnitude is positive.
    pub weights: Vec<f64>,
    pub explained_variance_ratio: f64,
    /// Centered input projected onto `weights`.
    pub component: Vec<f64>,
}

impl PcaProjection {
    /// Projects another matrix with the same columns onto these weights
    /// after centering its columns.
    pub fn project(&self, data: &DMatrix<f64>) -> Result<Vec<f64>, FeatureError> {
        if data.ncols() != self.weights.len() {
            return Err(FeatureError::Config(format!(
                "matrix has {} columns, projection expects {}",
                data.ncols(),
                self.weights.len()
            )));
        }
        let w = DVector::from_column_slice(&self.weights);
        Ok((center(data) * w).as_slice().to_vec())
    }
}

fn center(data: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = data.clone();
    let n = x.nrows().max(1) as f64;
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    x
}

pub fn pca_first(phases: &DMatrix<f64>) -> Result<PcaProjection, FeatureError> {
    let (rows, cols) = phases.shape();
    if cols == 0 {
        return Err(FeatureError::Degenerate("matrix has no columns".into()));
    }
    if rows < cols + 1 {
        return Err(FeatureError::TooShort { needed: cols + 1, got: rows });
    }
    if phases.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::Degenerate("non-finite entries".into()));
    }
    let x = center(phases);
    let cov = x.tr_mul(&x) / (rows - 1) as f64;
    let total = cov.trace();
    if !(total > 0.0) {
        return Err(FeatureError::Degenerate("all columns are constant".into()));
    }
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.imax();
    let mut w: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let lead = (0..cols).fold(0, |best, i| if w[i].abs() > w[best].abs() { i } else { best });
    let sign = if w[lead] < 0.0 { -1.0 } else { 1.0 };
    w.iter_mut().for_each(|v| *v *= sign / norm);

    let component = (&x * DVector::from_column_slice(&w)).as_slice().to_vec();
    Ok(PcaProjection {
        weights: w,
        explained_variance_ratio: (eig.eigenvalues[top] / total).clamp(0.0, 1.0),
        component,
    })
}

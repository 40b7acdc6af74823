//! Offset cancellation, antenna-pair selection, high-pass filtering and
//! spectral subtraction.

mod filter;
mod subtract;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::csi::CsiTrace;
use crate::features::{stft, StftConfig};

pub use filter::{Biquad, Butterworth};
pub use subtract::spectral_subtract;

/// Filter order used by [`highpass`].
pub const DEFAULT_FILTER_ORDER: usize = 4;
/// Hz.
pub const DEFAULT_CUTOFF: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PreprocessError {
    #[error("antenna index {index} out of range for {n_rx} antennas")]
    AntennaOutOfRange { index: usize, n_rx: usize },
    #[error("antenna pair must use two different antennas, got ({0}, {0})")]
    SameAntenna(usize),
    #[error("need at least 2 receive antennas, got {0}")]
    TooFewAntennas(usize),
    #[error("trace has no frames")]
    Empty,
    #[error("frame {0} does not match the trace dimensions")]
    InconsistentFrame(usize),
    #[error("cutoff {cutoff} Hz must lie in (0, {nyquist}) Hz")]
    InvalidCutoff { cutoff: f64, nyquist: f64 },
    #[error("filter order must be even and positive, got {0}")]
    InvalidOrder(usize),
    #[error("series too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("spectrogram frequency grids differ")]
    GridMismatch,
    #[error("baseline spectrogram has no time bins")]
    EmptyBaseline,
}

/// Per-subcarrier product `H_l · conj(H_s)` over time.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedSeries {
    pub sample_rate: f64,
    /// `time × subcarrier`.
    pub values: DMatrix<Complex64>,
    pub source_pair: (usize, usize),
}

impl CombinedSeries {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn n_subcarriers(&self) -> usize {
        self.values.ncols()
    }
}

fn check_pair(trace: &CsiTrace, l: usize, s: usize) -> Result<(), PreprocessError> {
    for index in [l, s] {
        if index >= trace.n_rx {
            return Err(PreprocessError::AntennaOutOfRange { index, n_rx: trace.n_rx });
        }
    }
    if l == s {
        return Err(PreprocessError::SameAntenna(l));
    }
    if trace.frames.is_empty() {
        return Err(PreprocessError::Empty);
    }
    if let Some(i) = trace
        .frames
        .iter()
        .position(|f| f.n_rx != trace.n_rx || f.n_subcarriers != trace.n_subcarriers || !f.is_consistent())
    {
        return Err(PreprocessError::InconsistentFrame(i));
    }
    Ok(())
}

/// Cancels every phase term common to antennas `l` and `s`.
pub fn conjugate_multiply(trace: &CsiTrace, l: usize, s: usize) -> Result<CombinedSeries, PreprocessError> {
    check_pair(trace, l, s)?;
    let values = DMatrix::from_fn(trace.len(), trace.n_subcarriers, |t, n| {
        let f = &trace.frames[t];
        let a = f.get(l, n);
        let b = f.get(s, n);
        Complex64::new(a.re as f64, a.im as f64) * Complex64::new(b.re as f64, -(b.im as f64))
    });
    Ok(CombinedSeries { sample_rate: trace.packet_rate, values, source_pair: (l, s) })
}

/// Spectral concentration of one antenna pair's phase fluctuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub pair: (usize, usize),
    /// Peak over median power of the subcarrier-averaged phase deviation in the band.
    pub score: f64,
}

/// Scores every pair `l < s`.
///
/// Each subcarrier's product is rotated by the conjugate of its
/// time-averaged phasor so all subcarriers line up, the rotated products are
/// summed across subcarriers, and the phase of that sum (no unwrapping) is
/// reduced to the max/median ratio of its Welch spectrum over `band`. A pair
/// dominated by noise has a flat spectrum and scores near 1. Reversing a
/// pair negates the phase and leaves the score unchanged, so only `l < s`
/// is listed.
pub fn pair_scores(trace: &CsiTrace, band: (f64, f64)) -> Result<Vec<PairScore>, PreprocessError> {
    if trace.n_rx < 2 {
        return Err(PreprocessError::TooFewAntennas(trace.n_rx));
    }
    check_pair(trace, 0, 1)?;
    let len = trace.len();
    if len < 16 {
        return Err(PreprocessError::TooShort { needed: 16, got: len });
    }
    // Short segments: resolution matters less here than averaging down the noise.
    let window = 256.min(1 << len.ilog2());
    let cfg = StftConfig { window_len: window, overlap: window / 2, fft_len: window };
    let n_sub = trace.n_subcarriers;
    let product = |frame: &crate::csi::CsiFrame, l: usize, s: usize, n: usize| {
        let (a, b) = (frame.get(l, n), frame.get(s, n));
        Complex64::new(a.re as f64, a.im as f64) * Complex64::new(b.re as f64, -(b.im as f64))
    };

    let pairs: Vec<(usize, usize)> = (0..trace.n_rx)
        .flat_map(|l| (l + 1..trace.n_rx).map(move |s| (l, s)))
        .collect();
    let scores = pairs
        .par_iter()
        .map(|&(l, s)| {
            let mut align = vec![Complex64::default(); n_sub];
            for f in &trace.frames {
                for (n, acc) in align.iter_mut().enumerate() {
                    *acc += product(f, l, s, n);
                }
            }
            align.iter_mut().for_each(|m| {
                let norm = m.norm();
                *m = if norm > 0.0 { m.conj() / norm } else { Complex64::new(1.0, 0.0) };
            });
            let coherent: Vec<f64> = trace
                .frames
                .iter()
                .map(|f| (0..n_sub).map(|n| product(f, l, s, n) * align[n]).sum::<Complex64>().arg())
                .collect();
            let spec = stft(&coherent, trace.packet_rate, &cfg).expect("window fits the series");
            let power = spec.mean_spectrum();
            let mut in_band: Vec<f64> = power[spec.band(band.0, band.1)].to_vec();
            let max = in_band.iter().copied().fold(0.0, f64::max);
            let score = if max > 0.0 {
                in_band.sort_by(f64::total_cmp);
                let median = in_band[in_band.len() / 2];
                if median > 0.0 { max / median } else { f64::INFINITY }
            } else {
                0.0
            };
            PairScore { pair: (l, s), score }
        })
        .collect();
    Ok(scores)
}

/// Pair with the highest [`pair_scores`] score; ties go to the
/// lexicographically smallest pair.
pub fn select_pair(trace: &CsiTrace, band: (f64, f64)) -> Result<(usize, usize), PreprocessError> {
    let scores = pair_scores(trace, band)?;
    let mut best = scores[0];
    for s in &scores[1..] {
        if s.score > best.score {
            best = *s;
        }
    }
    Ok(best.pair)
}

fn design(cutoff: f64, sample_rate: f64, order: usize) -> Result<Butterworth, PreprocessError> {
    if order == 0 || order % 2 != 0 {
        return Err(PreprocessError::InvalidOrder(order));
    }
    Butterworth::highpass(order, cutoff, sample_rate).ok_or(PreprocessError::InvalidCutoff {
        cutoff,
        nyquist: sample_rate / 2.0,
    })
}

/// Zero-phase high-pass of the real and imaginary parts of every subcarrier.
pub fn highpass(series: &CombinedSeries, cutoff: f64) -> Result<CombinedSeries, PreprocessError> {
    let bw = design(cutoff, series.sample_rate, DEFAULT_FILTER_ORDER)?;
    let (rows, cols) = series.values.shape();
    let filtered: Vec<(Vec<f64>, Vec<f64>)> = (0..cols)
        .into_par_iter()
        .map(|c| {
            let col = series.values.column(c);
            let re: Vec<f64> = col.iter().map(|z| z.re).collect();
            let im: Vec<f64> = col.iter().map(|z| z.im).collect();
            (bw.filtfilt(&re), bw.filtfilt(&im))
        })
        .collect();
    let values = DMatrix::from_fn(rows, cols, |r, c| Complex64::new(filtered[c].0[r], filtered[c].1[r]));
    Ok(CombinedSeries { values, ..series.clone() })
}

/// Zero-phase high-pass of every column of a real `time × channel` matrix.
pub fn highpass_columns(
    data: &DMatrix<f64>,
    sample_rate: f64,
    cutoff: f64,
    order: usize,
) -> Result<DMatrix<f64>, PreprocessError> {
    let bw = design(cutoff, sample_rate, order)?;
    let cols: Vec<Vec<f64>> = (0..data.ncols())
        .into_par_iter()
        .map(|c| bw.filtfilt(data.column(c).as_slice()))
        .collect();
    Ok(DMatrix::from_fn(data.nrows(), data.ncols(), |r, c| cols[c][r]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csi::{ComplexSample, CsiFrame, Excitation};
    use crate::simulator::{synth_trace, PathSpec, SceneConfig};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn short_scene() -> SceneConfig {
        let mut s = SceneConfig::default();
        s.excitation = Excitation::bidirectional(150.0, 450.0, 1.5).unwrap();
        s.vibration.resonance_freq = 300.0;
        s
    }

    #[test]
    fn conjugation_cancels_common_phase() {
        let mut t = CsiTrace::new(100.0, 2, 1);
        let (a, b, alpha, beta, psi) = (1.5f32, 0.7f32, 0.4f32, -1.1f32, 2.9f32);
        t.frames.push(CsiFrame::new(
            0.0,
            2,
            1,
            vec![ComplexSample::from_polar(a, alpha + psi), ComplexSample::from_polar(b, beta + psi)],
        ));
        let z = conjugate_multiply(&t, 0, 1).unwrap().values[(0, 0)];
        assert!((z.arg() - (alpha - beta) as f64).abs() < 1e-6);
        assert!((z.norm() - (a * b) as f64).abs() < 1e-6);
    }

    #[test]
    fn random_walk_only_trace_is_constant() {
        let mut scene = short_scene().noiseless();
        scene.clock.walk_step_std = 0.3;
        scene.vibration.peak_displacement = 0.0;
        let trace = synth_trace(&scene, 1000.0, 4).unwrap();
        let z = conjugate_multiply(&trace, 0, 2).unwrap();
        let first = z.values.row(0).into_owned();
        for r in 0..z.len() {
            for c in 0..z.n_subcarriers() {
                assert!((z.values[(r, c)] - first[c]).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn bad_pairs() {
        let trace = synth_trace(&short_scene(), 1000.0, 0).unwrap();
        assert_eq!(conjugate_multiply(&trace, 1, 1).unwrap_err(), PreprocessError::SameAntenna(1));
        assert!(matches!(conjugate_multiply(&trace, 0, 3), Err(PreprocessError::AntennaOutOfRange { index: 3, .. })));
    }

    #[test]
    fn noise_only_antenna_is_excluded() {
        let mut scene = short_scene();
        scene.noise_std = 0.01;
        // Antenna 2 receives nothing but noise.
        for p in &mut scene.paths {
            *p = p.clone().with_antenna_gains(vec![1.0, 1.0, 0.0]);
        }
        let trace = synth_trace(&scene, 1000.0, 8).unwrap();
        let scores = pair_scores(&trace, (100.0, 450.0)).unwrap();
        let best = scores.iter().max_by(|a, b| a.score.total_cmp(&b.score)).unwrap();
        assert_eq!(best.pair, (0, 1));
        assert!(scores.iter().filter(|s| s.pair.1 == 2).all(|s| s.score < best.score / 1.5));
        assert_eq!(select_pair(&trace, (100.0, 450.0)).unwrap(), (0, 1));
    }

    #[test]
    fn identical_pairs_tie_to_first() {
        let mut t = CsiTrace::new(1000.0, 3, 2);
        for i in 0..200 {
            t.frames.push(CsiFrame::new(i as f64 / 1000.0, 3, 2, vec![ComplexSample::new(1.0, 0.0); 6]));
        }
        assert_eq!(select_pair(&t, (100.0, 500.0)).unwrap(), (0, 1));
        t.n_rx = 1;
        assert_eq!(select_pair(&t, (100.0, 500.0)).unwrap_err(), PreprocessError::TooFewAntennas(1));
    }

    #[test]
    fn two_antennas_give_the_only_pair() {
        let mut scene = short_scene();
        scene.n_rx = 2;
        scene.clock.antenna_phase_offsets.truncate(2);
        let trace = synth_trace(&scene, 1000.0, 1).unwrap();
        assert_eq!(select_pair(&trace, (100.0, 450.0)).unwrap(), (0, 1));
    }

    #[test]
    fn highpass_removes_static_product() {
        let mut scene = short_scene().noiseless();
        scene.paths.push(PathSpec::fixed(5.0, 0.5, 0.2));
        scene.vibration.peak_displacement = 0.0;
        let trace = synth_trace(&scene, 1000.0, 0).unwrap();
        let z = conjugate_multiply(&trace, 0, 1).unwrap();
        let h = highpass(&z, 100.0).unwrap();
        assert_eq!(h.values.shape(), z.values.shape());
        let scale = z.values[(0, 0)].norm();
        let trim = 250;
        for r in trim..h.len() - trim {
            assert!(h.values[(r, 0)].norm() <= 1e-6 * scale);
        }
        assert!(matches!(highpass(&z, 600.0), Err(PreprocessError::InvalidCutoff { .. })));
    }

    #[test]
    fn column_filter_matches_single_series() {
        let data = DMatrix::from_fn(500, 3, |r, c| (r as f64 * 0.3 * (c + 1) as f64).sin() + c as f64);
        let out = highpass_columns(&data, 1000.0, 100.0, 4).unwrap();
        let bw = Butterworth::highpass(4, 100.0, 1000.0).unwrap();
        for c in 0..3 {
            assert_eq!(out.column(c).as_slice(), &bw.filtfilt(data.column(c).as_slice())[..]);
        }
        assert_eq!(highpass_columns(&data, 1000.0, 100.0, 3).unwrap_err(), PreprocessError::InvalidOrder(3));
    }

    proptest! {
        #[test]
        fn common_phase_leaves_product_unchanged(psi in proptest::collection::vec(-PI..PI, 20), seed in any::<u64>()) {
            let mut t = CsiTrace::new(100.0, 3, 4);
            for i in 0..psi.len() {
                let vals = (0..12)
                    .map(|k| {
                        let x = ((seed % 1000) as f64 + (i * 12 + k) as f64).sin();
                        ComplexSample::from_polar(1.0 + 0.5 * x as f32, (3.0 * x) as f32)
                    })
                    .collect();
                t.frames.push(CsiFrame::new(i as f64 / 100.0, 3, 4, vals));
            }
            let mut rotated = t.clone();
            for (f, p) in rotated.frames.iter_mut().zip(&psi) {
                let r = ComplexSample::from_polar(1.0, *p as f32);
                f.values.iter_mut().for_each(|v| *v *= r);
            }
            let a = conjugate_multiply(&t, 2, 0).unwrap();
            let b = conjugate_multiply(&rotated, 2, 0).unwrap();
            for (x, y) in a.values.iter().zip(b.values.iter()) {
                // Rotation happens in f32 storage, so agreement is to f32 precision.
                prop_assert!((x - y).norm() <= 8.0 * f32::EPSILON as f64 * x.norm().max(1.0));
            }
        }
    }
}

use super::PreprocessError;
use crate::features::Spectrogram;

/// Removes the time-averaged baseline power from every time bin of
/// `signal`, clamping at zero.
pub fn spectral_subtract(signal: &Spectrogram, baseline: &Spectrogram) -> Result<Spectrogram, PreprocessError> {
    if !signal.same_grid(baseline) {
        return Err(PreprocessError::GridMismatch);
    }
    if baseline.n_time() == 0 {
        return Err(PreprocessError::EmptyBaseline);
    }
    let floor = baseline.mean_spectrum();
    let n = signal.n_freq();
    let mut out = signal.clone();
    for (i, p) in out.power.iter_mut().enumerate() {
        *p = (*p - floor[i % n]).max(0.0);
    }
    Ok(out)
}

//! Butterworth high-pass as a cascade of biquads, plus zero-phase filtering.

use std::f64::consts::PI;

/// Second-order section with `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Gain at DC.
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct-form II state that holds a constant input of 1 at steady state.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        [g - self.b[0], self.b[2] - self.a[1] * g]
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + z[0];
            z[0] = b1 * input - a1 * y + z[1];
            z[1] = b2 * input - a2 * y;
            *v = y;
        }
    }

    /// Magnitude response at `f` Hz for sample rate `fs`.
    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let z1 = num_complex::Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = self.b[0] + self.b[1] * z1 + self.b[2] * z2;
        let den = 1.0 + self.a[0] * z1 + self.a[1] * z2;
        (num / den).norm()
    }
}

/// Digital Butterworth high-pass (bilinear transform), even order only.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    pub sections: Vec<Biquad>,
    pub cutoff: f64,
    pub sample_rate: f64,
}

impl Butterworth {
    /// `None` unless `order` is even and positive and `0 < cutoff < fs/2`.
    pub fn highpass(order: usize, cutoff: f64, sample_rate: f64) -> Option<Self> {
        if order == 0 || order % 2 != 0 || !(cutoff > 0.0 && cutoff < sample_rate / 2.0) {
            return None;
        }
        let k = (PI * cutoff / sample_rate).tan();
        let sections = (1..=order / 2)
            .map(|i| {
                let q = 1.0 / (2.0 * ((2 * i - 1) as f64 * PI / (2 * order) as f64).cos());
                let norm = 1.0 / (1.0 + k / q + k * k);
                Biquad {
                    b: [norm, -2.0 * norm, norm],
                    a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
                }
            })
            .collect();
        Some(Self { sections, cutoff, sample_rate })
    }

    pub fn magnitude(&self, f: f64) -> f64 {
        self.sections.iter().map(|s| s.magnitude(f, self.sample_rate)).product()
    }

    /// Default edge padding, matching the common `3 · (2·sections + 1)` convention.
    fn pad_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    /// Causal filtering with steady-state initial conditions scaled by `x[0]`.
    fn forward(&self, x: &mut [f64]) {
        let Some(&first) = x.first() else { return };
        let mut level = first;
        for s in &self.sections {
            let z = s.step_state().map(|v| v * level);
            s.run(x, z);
            level *= s.dc_gain();
        }
    }

    /// Forward-backward filtering with odd reflection at both ends.
    ///
    /// The magnitude response is squared and the phase response cancels.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = self.pad_len().min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        self.forward(&mut ext);
        ext.reverse();
        self.forward(&mut ext);
        ext.reverse();
        ext.drain(..pad);
        ext.truncate(n);
        ext
    }
}

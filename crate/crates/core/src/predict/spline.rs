//! Cubic spline from resonance frequency to liquid level.

use serde::{Deserialize, Serialize};

use super::PredictError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EndCondition {
    /// Zero second derivative at both ends.
    Natural,
    /// Prescribed first derivatives (ml per Hz) at the lowest and highest knot.
    Clamped { start_slope: f64, end_slope: f64 },
    /// Clamped with slopes taken from the outer knot pairs.
    ClampedEstimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    /// Hz.
    pub freq: f64,
    /// ml.
    pub level: f64,
}

/// `a + b·u + c·u² + d·u³` with `u = f - knots[h].freq`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Segment {
    fn eval(&self, u: f64) -> f64 {
        self.a + u * (self.b + u * (self.c + u * self.d))
    }

    fn slope(&self, u: f64) -> f64 {
        self.b + u * (2.0 * self.c + 3.0 * u * self.d)
    }

    fn curvature(&self, u: f64) -> f64 {
        2.0 * self.c + 6.0 * self.d * u
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineModel {
    /// Ascending in frequency.
    pub knots: Vec<Knot>,
    /// `segments[h]` covers `[knots[h].freq, knots[h + 1].freq]`.
    pub segments: Vec<Segment>,
    /// Always `Natural` or `Clamped` once fitted.
    pub end_condition: EndCondition,
    pub capacity_ml: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelPrediction {
    /// ml, within `[0, capacity]`.
    pub level: f64,
    /// The frequency fell outside the knot range and was clamped.
    pub out_of_range: bool,
}

/// Averages repeated measurements per level and returns knots ascending in frequency.
pub fn average_by_level(samples: &[(f64, f64)]) -> Result<Vec<Knot>, PredictError> {
    let mut groups: Vec<(f64, f64, usize)> = Vec::new();
    for &(freq, level) in samples {
        if !(freq.is_finite() && level.is_finite()) {
            return Err(PredictError::InvalidInput(format!("non-finite sample ({freq}, {level})")));
        }
        match groups.iter_mut().find(|g| g.0 == level) {
            Some(g) => {
                g.1 += freq;
                g.2 += 1;
            }
            None => groups.push((level, freq, 1)),
        }
    }
    let mut knots: Vec<Knot> = groups
        .into_iter()
        .map(|(level, sum, n)| Knot { freq: sum / n as f64, level })
        .collect();
    knots.sort_by(|a, b| a.freq.total_cmp(&b.freq));
    Ok(knots)
}

/// Fits an interpolating cubic spline, level as a function of frequency.
pub fn fit_spline(samples: &[(f64, f64)], end: EndCondition, capacity_ml: f64) -> Result<SplineModel, PredictError> {
    if !(capacity_ml.is_finite() && capacity_ml > 0.0) {
        return Err(PredictError::InvalidInput(format!("capacity must be > 0, got {capacity_ml}")));
    }
    let knots = average_by_level(samples)?;
    if knots.len() < 3 {
        return Err(PredictError::InsufficientData(format!("need 3 distinct levels, got {}", knots.len())));
    }
    if let Some(w) = knots.windows(2).find(|w| w[0].freq == w[1].freq) {
        return Err(PredictError::IllPosed(format!(
            "levels {} and {} share frequency {} Hz",
            w[0].level, w[1].level, w[0].freq
        )));
    }

    let n = knots.len();
    let h: Vec<f64> = knots.windows(2).map(|w| w[1].freq - w[0].freq).collect();
    let secant: Vec<f64> = knots.windows(2).map(|w| w[1].level - w[0].level).zip(&h).map(|(dy, h)| dy / h).collect();

    let end = match end {
        EndCondition::ClampedEstimated => EndCondition::Clamped { start_slope: secant[0], end_slope: secant[n - 2] },
        e => e,
    };
    if let EndCondition::Clamped { start_slope, end_slope } = end {
        if !(start_slope.is_finite() && end_slope.is_finite()) {
            return Err(PredictError::InvalidInput("clamped end slopes must be finite".into()));
        }
    }

    // Tridiagonal system for the second derivatives m_i.
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for i in 1..n - 1 {
        lower[i] = h[i - 1];
        diag[i] = 2.0 * (h[i - 1] + h[i]);
        upper[i] = h[i];
        rhs[i] = 6.0 * (secant[i] - secant[i - 1]);
    }
    match end {
        EndCondition::Natural => {
            diag[0] = 1.0;
            diag[n - 1] = 1.0;
        }
        EndCondition::Clamped { start_slope, end_slope } => {
            diag[0] = 2.0 * h[0];
            upper[0] = h[0];
            rhs[0] = 6.0 * (secant[0] - start_slope);
            lower[n - 1] = h[n - 2];
            diag[n - 1] = 2.0 * h[n - 2];
            rhs[n - 1] = 6.0 * (end_slope - secant[n - 2]);
        }
        EndCondition::ClampedEstimated => unreachable!("resolved above"),
    }
    let m = solve_tridiagonal(&lower, &diag, &upper, &rhs);

    let segments = (0..n - 1)
        .map(|i| Segment {
            a: knots[i].level,
            b: secant[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0,
            c: m[i] / 2.0,
            d: (m[i + 1] - m[i]) / (6.0 * h[i]),
        })
        .collect();
    Ok(SplineModel { knots, segments, end_condition: end, capacity_ml })
}

/// Thomas algorithm; the systems built here are diagonally dominant.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let den = diag[i] - lower[i] * c[i - 1];
        c[i] = upper[i] / den;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

impl SplineModel {
    pub fn validate(&self) -> Result<(), PredictError> {
        let n = self.knots.len();
        if n < 3 || self.segments.len() != n - 1 {
            return Err(PredictError::InvalidInput(format!(
                "{n} knots need {} segments, found {}",
                n.saturating_sub(1),
                self.segments.len()
            )));
        }
        if self.knots.windows(2).any(|w| !(w[0].freq < w[1].freq)) {
            return Err(PredictError::InvalidInput("knot frequencies must be strictly increasing".into()));
        }
        let finite = self.knots.iter().all(|k| k.freq.is_finite() && k.level.is_finite())
            && self.segments.iter().all(|s| [s.a, s.b, s.c, s.d].iter().all(|v| v.is_finite()));
        if !finite || !(self.capacity_ml.is_finite() && self.capacity_ml > 0.0) {
            return Err(PredictError::InvalidInput("non-finite coefficient or capacity".into()));
        }
        if self.end_condition == EndCondition::ClampedEstimated {
            return Err(PredictError::InvalidInput("fitted model must record its resolved end slopes".into()));
        }
        Ok(())
    }

    fn locate(&self, f: f64) -> usize {
        let idx = self.knots.partition_point(|k| k.freq <= f);
        idx.saturating_sub(1).min(self.segments.len() - 1)
    }

    /// Raw spline value; extrapolates cubically outside the knot range.
    pub fn eval(&self, f: f64) -> f64 {
        let h = self.locate(f);
        self.segments[h].eval(f - self.knots[h].freq)
    }

    /// First derivative, using the segment that starts at or below `f`.
    pub fn slope(&self, f: f64) -> f64 {
        let h = self.locate(f);
        self.segments[h].slope(f - self.knots[h].freq)
    }

    pub fn curvature(&self, f: f64) -> f64 {
        let h = self.locate(f);
        self.segments[h].curvature(f - self.knots[h].freq)
    }

    /// Values of segment `h` and its derivatives at its right end.
    pub fn segment_end(&self, h: usize) -> (f64, f64, f64) {
        let u = self.knots[h + 1].freq - self.knots[h].freq;
        let s = &self.segments[h];
        (s.eval(u), s.slope(u), s.curvature(u))
    }

    pub fn freq_range(&self) -> (f64, f64) {
        (self.knots[0].freq, self.knots[self.knots.len() - 1].freq)
    }

    /// Level for frequency `f`, clamped to the knot range and capacity.
    pub fn predict(&self, f: f64) -> LevelPrediction {
        let (lo, hi) = self.freq_range();
        let (level, out_of_range) = if f.is_nan() {
            (f64::NAN, true)
        } else if f < lo {
            (self.knots[0].level, true)
        } else if f > hi {
            (self.knots[self.knots.len() - 1].level, true)
        } else {
            (self.eval(f), false)
        };
        LevelPrediction { level: level.clamp(0.0, self.capacity_ml), out_of_range }
    }
}

/// Free-function form of [`SplineModel::predict`].
pub fn predict_continuous(model: &SplineModel, f: f64) -> LevelPrediction {
    model.predict(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    /// Solves the full 4(n-1) system of interpolation, continuity and end
    /// conditions directly with a dense LU factorization.
    fn dense_oracle(knots: &[Knot], end: EndCondition) -> Vec<Segment> {
        let n = knots.len();
        let unknowns = 4 * (n - 1);
        let mut a = DMatrix::<f64>::zeros(unknowns, unknowns);
        let mut b = DVector::<f64>::zeros(unknowns);
        let mut row = 0;
        let col = |h: usize, k: usize| 4 * h + k;
        for h in 0..n - 1 {
            let u = knots[h + 1].freq - knots[h].freq;
            a[(row, col(h, 0))] = 1.0;
            b[row] = knots[h].level;
            row += 1;
            for (k, p) in [1.0, u, u * u, u * u * u].iter().enumerate() {
                a[(row, col(h, k))] = *p;
            }
            b[row] = knots[h + 1].level;
            row += 1;
        }
        for h in 0..n - 2 {
            let u = knots[h + 1].freq - knots[h].freq;
            // S'_h(end) - S'_{h+1}(start) = 0
            a[(row, col(h, 1))] = 1.0;
            a[(row, col(h, 2))] = 2.0 * u;
            a[(row, col(h, 3))] = 3.0 * u * u;
            a[(row, col(h + 1, 1))] = -1.0;
            row += 1;
            a[(row, col(h, 2))] = 2.0;
            a[(row, col(h, 3))] = 6.0 * u;
            a[(row, col(h + 1, 2))] = -2.0;
            row += 1;
        }
        let last = n - 2;
        let u_last = knots[n - 1].freq - knots[n - 2].freq;
        match end {
            EndCondition::Natural => {
                a[(row, col(0, 2))] = 2.0;
                row += 1;
                a[(row, col(last, 2))] = 2.0;
                a[(row, col(last, 3))] = 6.0 * u_last;
            }
            EndCondition::Clamped { start_slope, end_slope } => {
                a[(row, col(0, 1))] = 1.0;
                b[row] = start_slope;
                row += 1;
                a[(row, col(last, 1))] = 1.0;
                a[(row, col(last, 2))] = 2.0 * u_last;
                a[(row, col(last, 3))] = 3.0 * u_last * u_last;
                b[row] = end_slope;
            }
            EndCondition::ClampedEstimated => unreachable!(),
        }
        let x = a.lu().solve(&b).expect("non-singular");
        (0..n - 1)
            .map(|h| Segment { a: x[4 * h], b: x[4 * h + 1], c: x[4 * h + 2], d: x[4 * h + 3] })
            .collect()
    }

    fn samples() -> Vec<(f64, f64)> {
        vec![(520.0, 0.0), (480.0, 400.0), (434.0, 800.0), (372.0, 1200.0), (220.0, 1800.0)]
    }

    #[test]
    fn matches_dense_system() {
        for end in [EndCondition::Natural, EndCondition::Clamped { start_slope: -3.0, end_slope: -9.0 }] {
            let m = fit_spline(&samples(), end, 1800.0).unwrap();
            let oracle = dense_oracle(&m.knots, end);
            for (s, o) in m.segments.iter().zip(&oracle) {
                for (x, y) in [(s.a, o.a), (s.b, o.b), (s.c, o.c), (s.d, o.d)] {
                    assert!((x - y).abs() <= 1e-9 * y.abs().max(1e-6), "{s:?} vs {o:?}");
                }
            }
        }
    }

    #[test]
    fn straight_line_is_exact() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (200.0 + 50.0 * i as f64, 1500.0 - 250.0 * i as f64)).collect();
        let m = fit_spline(&pts, EndCondition::Natural, 1800.0).unwrap();
        assert!(m.segments.iter().all(|s| s.c.abs() < 1e-12 && s.d.abs() < 1e-12));
        for k in 0..=250 {
            let f = 200.0 + k as f64;
            assert!((m.eval(f) - (1500.0 - 5.0 * (f - 200.0))).abs() < 1e-9);
        }
    }

    #[test]
    fn five_levels_four_segments() {
        let m = fit_spline(&samples(), EndCondition::Natural, 1800.0).unwrap();
        assert_eq!(m.segments.len(), 4);
        for k in &m.knots {
            assert_eq!(m.predict(k.freq), LevelPrediction { level: k.level, out_of_range: false });
        }
    }

    #[test]
    fn end_conditions_hold() {
        let m = fit_spline(&samples(), EndCondition::Natural, 1800.0).unwrap();
        let (lo, _) = m.freq_range();
        assert!(m.curvature(lo).abs() < 1e-12);
        assert!(m.segment_end(m.segments.len() - 1).2.abs() < 1e-12);

        let m = fit_spline(&samples(), EndCondition::ClampedEstimated, 1800.0).unwrap();
        let EndCondition::Clamped { start_slope, end_slope } = m.end_condition else { panic!() };
        assert!((start_slope - (1200.0 - 1800.0) / (372.0 - 220.0)).abs() < 1e-12);
        assert!((m.slope(220.0) - start_slope).abs() < 1e-9);
        assert!((m.segment_end(3).1 - end_slope).abs() < 1e-9);
    }

    #[test]
    fn out_of_range_is_clamped_and_flagged() {
        let m = fit_spline(&samples(), EndCondition::Natural, 1800.0).unwrap();
        assert_eq!(m.predict(100.0), LevelPrediction { level: 1800.0, out_of_range: true });
        assert_eq!(m.predict(900.0), LevelPrediction { level: 0.0, out_of_range: true });
    }

    #[test]
    fn repeated_measurements_are_averaged() {
        let pts = vec![(300.0, 100.0), (302.0, 100.0), (250.0, 200.0), (200.0, 300.0), (204.0, 300.0)];
        let m = fit_spline(&pts, EndCondition::Natural, 400.0).unwrap();
        let freqs: Vec<f64> = m.knots.iter().map(|k| k.freq).collect();
        assert_eq!(freqs, vec![202.0, 250.0, 301.0]);
    }

    #[test]
    fn degenerate_inputs() {
        let two = vec![(300.0, 100.0), (250.0, 200.0)];
        assert!(matches!(fit_spline(&two, EndCondition::Natural, 400.0), Err(PredictError::InsufficientData(_))));
        let clash = vec![(300.0, 100.0), (300.0, 200.0), (250.0, 300.0)];
        assert!(matches!(fit_spline(&clash, EndCondition::Natural, 400.0), Err(PredictError::IllPosed(_))));
    }

    #[test]
    fn interpolation_error_below_dense_bound() {
        // Generating curve: level = 1800 (520 - f)^1.3 / 300^1.3, knots at 5 levels.
        let truth = |f: f64| 1800.0 * ((520.0 - f) / 300.0).powf(1.3);
        let knots_f = [520.0, 470.0, 400.0, 320.0, 220.0];
        let pts: Vec<(f64, f64)> = knots_f.iter().map(|&f| (f, truth(f))).collect();
        let m = fit_spline(&pts, EndCondition::Natural, 1800.0).unwrap();
        // Bound: dense brute-force maximum deviation of the linear interpolant,
        // which a smooth monotone curve's cubic spline should not exceed here.
        let linear = |f: f64| {
            let i = knots_f.iter().rposition(|&k| k >= f).unwrap().min(3);
            let (f0, f1) = (knots_f[i], knots_f[i + 1]);
            truth(f0) + (truth(f1) - truth(f0)) * (f - f0) / (f1 - f0)
        };
        let grid: Vec<f64> = (0..=3000).map(|k| 220.0 + 0.1 * k as f64).collect();
        let bound = grid.iter().map(|&f| (linear(f) - truth(f)).abs()).fold(0.0, f64::max);
        let err = grid.iter().map(|&f| (m.predict(f).level - truth(f)).abs()).fold(0.0, f64::max);
        assert!(err <= bound, "spline {err} vs linear {bound}");
    }

    proptest! {
        #[test]
        fn residuals_and_continuity(
            gaps in proptest::collection::vec(5.0f64..80.0, 3..10),
            steps in proptest::collection::vec(10.0f64..300.0, 10),
            natural in any::<bool>(),
        ) {
            let mut f = 150.0;
            let mut level = 2000.0;
            let mut pts = vec![(f, level)];
            for (g, s) in gaps.iter().zip(&steps) {
                f += g;
                level -= s;
                pts.push((f, level));
            }
            let end = if natural { EndCondition::Natural } else { EndCondition::ClampedEstimated };
            let m = fit_spline(&pts, end, 2000.0).unwrap();
            let max_level = pts.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
            for k in &m.knots {
                prop_assert!((m.eval(k.freq) - k.level).abs() <= 1e-9 * max_level);
            }
            for h in 0..m.segments.len() - 1 {
                let (v, d1, d2) = m.segment_end(h);
                let next = &m.segments[h + 1];
                prop_assert!((v - next.a).abs() <= 1e-9 * max_level);
                prop_assert!((d1 - next.b).abs() <= 1e-6 * d1.abs().max(next.b.abs()).max(1.0));
                prop_assert!((d2 - 2.0 * next.c).abs() <= 1e-6 * d2.abs().max((2.0 * next.c).abs()).max(1e-3));
            }
        }

        #[test]
        fn monotone_on_ground_truth_curve(query in 220.0f64..520.0, delta in 0.01f64..50.0) {
            let curve = crate::simulator::GroundTruthCurve::default();
            let train = [0usize, 2, 4, 6, 9];
            let pts: Vec<(f64, f64)> = train.iter().map(|&i| (curve.knots[i].resonance_freq, curve.knots[i].level_ml)).collect();
            let m = fit_spline(&pts, EndCondition::Natural, 1800.0).unwrap();
            let hi = (query + delta).min(520.0);
            prop_assert!(m.predict(hi).level <= m.predict(query).level + 1e-9);
        }
    }
}

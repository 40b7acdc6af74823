//! Error rate, accuracy, confusion matrix and weighted F-score.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::PredictError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousReport {
    pub capacity_ml: f64,
    /// `|predicted - truth| / capacity` per sample.
    pub error_rates: Vec<f64>,
    pub mean_error_rate: f64,
    /// `1 - mean_error_rate`.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: u32,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteReport {
    /// Ascending union of predicted and true labels.
    pub classes: Vec<u32>,
    /// `confusion[truth][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassMetrics>,
    /// Support-weighted means over classes.
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum EvalReport {
    Continuous(ContinuousReport),
    Discrete(DiscreteReport),
}

fn check_lengths(a: usize, b: usize) -> Result<(), PredictError> {
    if a != b {
        return Err(PredictError::LengthMismatch { predictions: a, truth: b });
    }
    if a == 0 {
        return Err(PredictError::InsufficientData("nothing to evaluate".into()));
    }
    Ok(())
}

pub fn evaluate_continuous(predicted: &[f64], truth: &[f64], capacity_ml: f64) -> Result<ContinuousReport, PredictError> {
    check_lengths(predicted.len(), truth.len())?;
    if !(capacity_ml.is_finite() && capacity_ml > 0.0) {
        return Err(PredictError::InvalidInput(format!("capacity must be > 0, got {capacity_ml}")));
    }
    let error_rates: Vec<f64> = predicted.iter().zip(truth).map(|(p, t)| (p - t).abs() / capacity_ml).collect();
    let mean_error_rate = error_rates.iter().sum::<f64>() / error_rates.len() as f64;
    Ok(ContinuousReport { capacity_ml, error_rates, mean_error_rate, accuracy: 1.0 - mean_error_rate })
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn evaluate_discrete(predicted: &[u32], truth: &[u32]) -> Result<DiscreteReport, PredictError> {
    check_lengths(predicted.len(), truth.len())?;
    let mut classes: Vec<u32> = predicted.iter().chain(truth).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let k = classes.len();
    let index = |l: u32| classes.binary_search(&l).expect("label collected above");

    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[index(t)][index(p)] += 1;
    }

    let n = truth.len();
    let mut per_class = Vec::with_capacity(k);
    let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
    for (i, &label) in classes.iter().enumerate() {
        let tp = confusion[i][i];
        let support: usize = confusion[i].iter().sum();
        let predicted_as: usize = confusion.iter().map(|row| row[i]).sum();
        let precision = ratio(tp, predicted_as);
        let recall = ratio(tp, support);
        let f_score = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        wp += support as f64 * precision;
        wr += support as f64 * recall;
        wf += support as f64 * f_score;
        per_class.push(ClassMetrics { label, support, precision, recall, f_score });
    }
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    Ok(DiscreteReport {
        classes,
        confusion,
        per_class,
        precision: wp / n as f64,
        recall: wr / n as f64,
        f_score: wf / n as f64,
        accuracy: ratio(correct, n),
    })
}

impl ContinuousReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>12}", "sample", "error_rate");
        for (i, e) in self.error_rates.iter().enumerate() {
            let _ = writeln!(s, "{:<8} {:>11.2}%", i, 100.0 * e);
        }
        let _ = writeln!(s, "{:<8} {:>11.2}%", "mean", 100.0 * self.mean_error_rate);
        let _ = writeln!(s, "{:<8} {:>11.2}%", "accuracy", 100.0 * self.accuracy);
        s
    }
}

impl DiscreteReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let width = self
            .classes
            .iter()
            .map(|c| c.to_string().len())
            .chain(self.confusion.iter().flatten().map(|v| v.to_string().len()))
            .max()
            .unwrap_or(1)
            .max(4);
        let _ = write!(s, "{:>6} |", "truth");
        for c in &self.classes {
            let _ = write!(s, " {c:>width$}");
        }
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            let _ = write!(s, "{c:>6} |");
            for v in row {
                let _ = write!(s, " {v:>width$}");
            }
            s.push('\n');
        }
        s.push('\n');
        let _ = writeln!(s, "{:>6} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f-score", "support");
        for m in &self.per_class {
            let _ = writeln!(
                s,
                "{:>6} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                m.label, m.precision, m.recall, m.f_score, m.support
            );
        }
        let total: usize = self.per_class.iter().map(|m| m.support).sum();
        let _ = writeln!(
            s,
            "{:>6} {:>9.4} {:>9.4} {:>9.4} {:>8}",
            "weight", self.precision, self.recall, self.f_score, total
        );
        let _ = writeln!(s, "accuracy {:.4}", self.accuracy);
        s
    }
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        match self {
            EvalReport::Continuous(r) => r.to_table(),
            EvalReport::Discrete(r) => r.to_table(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn continuous_arithmetic() {
        let r = evaluate_continuous(&[900.0], &[800.0], 1800.0).unwrap();
        assert!((r.error_rates[0] - 0.0556).abs() < 5e-5);
        assert!((r.accuracy - 0.9444).abs() < 5e-5);
    }

    #[test]
    fn perfect_discrete() {
        let labels: Vec<u32> = (1..=10).flat_map(|c| [c, c]).collect();
        let r = evaluate_discrete(&labels, &labels).unwrap();
        for (i, row) in r.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if i == j { 2 } else { 0 });
            }
        }
        assert_eq!((r.precision, r.recall, r.f_score, r.accuracy), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn single_class_predictor() {
        let truth: Vec<u32> = (1..=10).flat_map(|c| [c; 3]).collect();
        let pred = vec![4u32; truth.len()];
        let r = evaluate_discrete(&pred, &truth).unwrap();
        let four = &r.per_class[3];
        assert_eq!((four.recall, four.support), (1.0, 3));
        assert!((four.precision - 0.1).abs() < 1e-12);
        assert!(r.per_class.iter().filter(|m| m.label != 4).all(|m| m.recall == 0.0 && m.f_score == 0.0));
        // Weighted: every class has weight 1/10.
        assert!((r.recall - 0.1).abs() < 1e-12);
        assert!((r.precision - 0.01).abs() < 1e-12);
        assert!((r.f_score - 0.1 * (2.0 * 0.1 / 1.1)).abs() < 1e-12);
        for (row, m) in r.confusion.iter().zip(&r.per_class) {
            assert_eq!(row.iter().sum::<usize>(), m.support);
        }
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(evaluate_discrete(&[1], &[1, 2]), Err(PredictError::LengthMismatch { .. })));
        assert!(matches!(evaluate_continuous(&[1.0], &[], 10.0), Err(PredictError::LengthMismatch { .. })));
    }

    #[test]
    fn tables_are_aligned() {
        let r = evaluate_discrete(&[1, 2, 2, 10], &[1, 2, 10, 10]).unwrap();
        let table = r.to_table();
        let matrix: Vec<&str> = table.lines().take(4).collect();
        assert!(matrix.iter().all(|l| l.len() == matrix[0].len()));
        let json = serde_json::to_string(&EvalReport::Discrete(r.clone())).unwrap();
        assert!(json.contains("\"mode\":\"discrete\""));
        assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), EvalReport::Discrete(r));
    }

    proptest! {
        #[test]
        fn permutation_equivariant(
            pairs in proptest::collection::vec((1u32..6, 1u32..6), 1..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let split = |v: &[(u32, u32)]| -> (Vec<u32>, Vec<u32>) { v.iter().copied().unzip() };
            let (p1, t1) = split(&pairs);
            let (p2, t2) = split(&shuffled);
            let a = evaluate_discrete(&p1, &t1).unwrap();
            let b = evaluate_discrete(&p2, &t2).unwrap();
            prop_assert_eq!(&a.confusion, &b.confusion);
            prop_assert!((a.f_score - b.f_score).abs() < 1e-12);
            prop_assert!((a.precision - b.precision).abs() < 1e-12);
            prop_assert!((a.recall - b.recall).abs() < 1e-12);

            let cp: Vec<f64> = p1.iter().map(|&v| v as f64 * 100.0).collect();
            let ct: Vec<f64> = t1.iter().map(|&v| v as f64 * 97.0).collect();
            let cp2: Vec<f64> = p2.iter().map(|&v| v as f64 * 100.0).collect();
            let ct2: Vec<f64> = t2.iter().map(|&v| v as f64 * 97.0).collect();
            let c1 = evaluate_continuous(&cp, &ct, 1000.0).unwrap();
            let c2 = evaluate_continuous(&cp2, &ct2, 1000.0).unwrap();
            prop_assert!((c1.accuracy - c2.accuracy).abs() < 1e-12);
        }
    }
}

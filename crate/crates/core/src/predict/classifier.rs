//! One-vs-one linear soft-margin classifier over level classes.

use serde::{Deserialize, Serialize};

use super::PredictError;

pub const DEFAULT_C_GRID: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];

const SOLVER_EPS: f64 = 1e-3;
const MAX_ITER: usize = 10_000_000;
const TAU: f64 = 1e-12;
/// Decisions this close to zero count as a vote for the lower class.
const DECISION_TIE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: u32,
}

impl LabeledSample {
    pub fn new(freq: f64, label: u32) -> Self {
        Self { features: vec![freq], label }
    }
}

/// `weights · z + bias` on standardized features; positive favours `lower`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseFunction {
    pub lower: u32,
    pub upper: u32,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl PairwiseFunction {
    pub fn decision(&self, z: &[f64]) -> f64 {
        dot(&self.weights, z) + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    /// Ascending.
    pub classes: Vec<u32>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub cost: f64,
    /// Cross-validated accuracy of the chosen cost.
    pub cv_accuracy: f64,
    /// Ordered by (lower, upper).
    pub pairs: Vec<PairwiseFunction>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[&LabeledSample]) -> Self {
        let dim = rows[0].features.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            mean.iter_mut().zip(&r.features).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut scale = vec![0.0; dim];
        for r in rows {
            for (s, (v, m)) in scale.iter_mut().zip(r.features.iter().zip(&mean)) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut scale {
            *s = (*s / n).sqrt();
            if !(*s > 0.0) {
                *s = 1.0;
            }
        }
        Self { mean, scale }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

/// Dual coordinate solver for one binary problem, maximal-violating-pair
/// working set selection. Labels are +1 / -1.
fn solve_binary(x: &[Vec<f64>], y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = x.len();
    let k = |i: usize, j: usize| dot(&x[i], &x[j]);
    let q = |i: usize, j: usize| y[i] * y[j] * k(i, j);
    let qd: Vec<f64> = (0..n).map(|i| k(i, i)).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];

    let is_up = |a: f64, y: f64| if y > 0.0 { a < c } else { a > 0.0 };
    let is_low = |a: f64, y: f64| if y > 0.0 { a > 0.0 } else { a < c };

    for _ in 0..MAX_ITER {
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if is_up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if is_low(alpha[t], y[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < SOLVER_EPS {
            break;
        }

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = q(i, j);
        if y[i] != y[j] {
            let quad = (qd[i] + qd[j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qd[i] + qd[j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    // Offset from free vectors, else the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 { sum_free / free as f64 } else { (ub + lb) / 2.0 };

    let dim = x[0].len();
    let mut w = vec![0.0; dim];
    for t in 0..n {
        if alpha[t] != 0.0 {
            w.iter_mut().zip(&x[t]).for_each(|(wk, v)| *wk += alpha[t] * y[t] * v);
        }
    }
    (w, -rho)
}

fn sorted_classes(samples: &[&LabeledSample]) -> Vec<u32> {
    let mut classes: Vec<u32> = samples.iter().map(|s| s.label).collect();
    classes.sort_unstable();
    classes.dedup();
    classes
}

fn train_fixed(samples: &[&LabeledSample], cost: f64) -> ClassifierModel {
    let std = Standardizer::fit(samples);
    let z: Vec<Vec<f64>> = samples.iter().map(|s| std.apply(&s.features)).collect();
    let classes = sorted_classes(samples);
    let mut pairs = Vec::with_capacity(classes.len() * (classes.len() - 1) / 2);
    for (a, &lower) in classes.iter().enumerate() {
        for &upper in &classes[a + 1..] {
            let (mut x, mut y) = (Vec::new(), Vec::new());
            for (s, zs) in samples.iter().zip(&z) {
                if s.label == lower || s.label == upper {
                    x.push(zs.clone());
                    y.push(if s.label == lower { 1.0 } else { -1.0 });
                }
            }
            let (weights, bias) = solve_binary(&x, &y, cost);
            pairs.push(PairwiseFunction { lower, upper, weights, bias });
        }
    }
    ClassifierModel { classes, mean: std.mean, scale: std.scale, cost, cv_accuracy: f64::NAN, pairs }
}

/// Trains pairwise separators, choosing the cost by stratified cross-validation.
pub fn train_classifier(samples: &[LabeledSample], c_grid: &[f64]) -> Result<ClassifierModel, PredictError> {
    if samples.is_empty() {
        return Err(PredictError::InsufficientData("no training samples".into()));
    }
    let dim = samples[0].features.len();
    if dim == 0 || samples.iter().any(|s| s.features.len() != dim) {
        return Err(PredictError::InvalidInput("feature rows must share a non-zero length".into()));
    }
    if samples.iter().any(|s| s.features.iter().any(|v| !v.is_finite())) {
        return Err(PredictError::InvalidInput("non-finite feature".into()));
    }
    if c_grid.is_empty() || c_grid.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(PredictError::InvalidInput(format!("cost grid must be non-empty and positive: {c_grid:?}")));
    }
    let refs: Vec<&LabeledSample> = samples.iter().collect();
    let classes = sorted_classes(&refs);
    if classes.len() < 2 {
        return Err(PredictError::Degenerate(format!("need at least 2 classes, got {}", classes.len())));
    }

    // Fold = position within class modulo k.
    let mut seen = vec![0usize; classes.len()];
    let mut position = Vec::with_capacity(samples.len());
    for s in samples {
        let ci = classes.binary_search(&s.label).expect("label in class list");
        position.push(seen[ci]);
        seen[ci] += 1;
    }
    let min_count = *seen.iter().min().expect("non-empty");
    if min_count < 2 {
        return Err(PredictError::InsufficientData("every class needs at least 2 samples".into()));
    }
    let k = min_count.min(5);
    let fold: Vec<usize> = position.iter().map(|p| p % k).collect();

    let mut best: Option<(f64, f64)> = None;
    for &cost in c_grid {
        let mut correct = 0usize;
        for f in 0..k {
            let train: Vec<&LabeledSample> =
                samples.iter().zip(&fold).filter(|(_, &g)| g != f).map(|(s, _)| s).collect();
            let model = train_fixed(&train, cost);
            correct += samples
                .iter()
                .zip(&fold)
                .filter(|(s, &g)| g == f && model.predict(&s.features) == s.label)
                .count();
        }
        let acc = correct as f64 / samples.len() as f64;
        log::debug!("cost {cost}: cross-validated accuracy {acc:.4}");
        let better = match best {
            None => true,
            Some((bc, ba)) => acc > ba || (acc == ba && cost < bc),
        };
        if better {
            best = Some((cost, acc));
        }
    }
    let (cost, cv_accuracy) = best.expect("non-empty grid");
    let mut model = train_fixed(&refs, cost);
    model.cv_accuracy = cv_accuracy;
    Ok(model)
}

impl ClassifierModel {
    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) / s).collect()
    }

    /// Vote count per class, in `classes` order.
    pub fn votes(&self, x: &[f64]) -> Vec<usize> {
        let z = self.standardize(x);
        let mut votes = vec![0usize; self.classes.len()];
        for p in &self.pairs {
            let winner = if p.decision(&z) >= -DECISION_TIE { p.lower } else { p.upper };
            let idx = self.classes.binary_search(&winner).expect("pair labels are classes");
            votes[idx] += 1;
        }
        votes
    }

    /// Majority vote; ties go to the lower label.
    pub fn predict(&self, x: &[f64]) -> u32 {
        let votes = self.votes(x);
        let mut best = 0;
        for (i, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = i;
            }
        }
        self.classes[best]
    }

    pub fn validate(&self) -> Result<(), PredictError> {
        let k = self.classes.len();
        if k < 2 || self.classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PredictError::InvalidInput("classes must be ascending and at least 2".into()));
        }
        if self.pairs.len() != k * (k - 1) / 2 {
            return Err(PredictError::InvalidInput(format!(
                "{k} classes need {} pairwise functions, found {}",
                k * (k - 1) / 2,
                self.pairs.len()
            )));
        }
        let dim = self.mean.len();
        if dim == 0 || self.scale.len() != dim || self.pairs.iter().any(|p| p.weights.len() != dim) {
            return Err(PredictError::InvalidInput("feature dimensions disagree".into()));
        }
        if self.pairs.iter().any(|p| self.classes.binary_search(&p.lower).is_err() || self.classes.binary_search(&p.upper).is_err()) {
            return Err(PredictError::InvalidInput("pairwise function references unknown class".into()));
        }
        Ok(())
    }
}

/// Class for a single resonance frequency.
pub fn predict_discrete(model: &ClassifierModel, f: f64) -> u32 {
    model.predict(&[f])
}

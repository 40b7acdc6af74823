//! Labeled datasets: one scene per liquid level, several sweeps per level.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{synth_trace, SceneConfig, SimError};
use crate::csi::CsiTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveKnot {
    pub level_ml: f64,
    /// Hz.
    pub resonance_freq: f64,
}

/// Level → first resonance frequency relationship of one container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundTruthCurve {
    /// Sorted by level; frequencies strictly decreasing.
    pub knots: Vec<CurveKnot>,
    pub capacity_ml: f64,
}

impl Default for GroundTruthCurve {
    /// 10 levels from empty to 1800 ml spanning 520 → 220 Hz.
    fn default() -> Self {
        const FREQS: [f64; 10] = [520.0, 500.0, 480.0, 458.0, 434.0, 406.0, 372.0, 332.0, 282.0, 220.0];
        Self {
            knots: FREQS
                .iter()
                .enumerate()
                .map(|(i, &f)| CurveKnot { level_ml: 200.0 * i as f64, resonance_freq: f })
                .collect(),
            capacity_ml: 1800.0,
        }
    }
}

impl GroundTruthCurve {
    pub fn new(knots: Vec<CurveKnot>, capacity_ml: f64) -> Result<Self, SimError> {
        let c = Self { knots, capacity_ml };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Curve(m));
        if !(self.capacity_ml.is_finite() && self.capacity_ml > 0.0) {
            return err(format!("capacity must be > 0, got {}", self.capacity_ml));
        }
        if self.knots.len() < 2 {
            return err("need at least 2 knots".into());
        }
        for k in &self.knots {
            if !(k.level_ml.is_finite() && (0.0..=self.capacity_ml).contains(&k.level_ml)) {
                return err(format!("knot level {} outside [0, {}]", k.level_ml, self.capacity_ml));
            }
            if !(k.resonance_freq.is_finite() && k.resonance_freq > 0.0) {
                return err(format!("knot frequency must be > 0, got {}", k.resonance_freq));
            }
        }
        for w in self.knots.windows(2) {
            if w[1].level_ml <= w[0].level_ml {
                return err("knot levels must be strictly increasing".into());
            }
            if w[1].resonance_freq >= w[0].resonance_freq {
                return err(format!(
                    "frequency must strictly decrease with level ({} ml: {} Hz, {} ml: {} Hz)",
                    w[0].level_ml, w[0].resonance_freq, w[1].level_ml, w[1].resonance_freq
                ));
            }
        }
        Ok(())
    }

    /// Piecewise-linear frequency at `level_ml`. Beyond the outer knots the
    /// end segments are extended, which keeps the curve strictly monotone.
    pub fn frequency_at(&self, level_ml: f64) -> Result<f64, SimError> {
        if !(level_ml.is_finite() && (0.0..=self.capacity_ml).contains(&level_ml)) {
            return Err(SimError::LevelOutOfRange { level: level_ml, capacity: self.capacity_ml });
        }
        let k = &self.knots;
        if let Some(hit) = k.iter().find(|p| p.level_ml == level_ml) {
            return Ok(hit.resonance_freq);
        }
        let seg = k
            .windows(2)
            .position(|w| level_ml < w[1].level_ml)
            .unwrap_or(k.len() - 2);
        let (a, b) = (k[seg], k[seg + 1]);
        let u = (level_ml - a.level_ml) / (b.level_ml - a.level_ml);
        Ok(a.resonance_freq + u * (b.resonance_freq - a.resonance_freq))
    }

    pub fn frequency_span(&self) -> f64 {
        self.knots[0].resonance_freq - self.knots[self.knots.len() - 1].resonance_freq
    }
}

/// One trace to be synthesized, with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub scene: SceneConfig,
    pub level_ml: f64,
    /// 1-based rank of the level among the requested levels.
    pub level_class: usize,
    pub sweep_index: usize,
    pub seed: u64,
}

impl DatasetItem {
    pub fn resonance_freq(&self) -> f64 {
        self.scene.vibration.resonance_freq
    }

    pub fn synthesize(&self, packet_rate: f64) -> Result<LabeledTrace, SimError> {
        let mut trace = synth_trace(&self.scene, packet_rate, self.seed)?;
        trace.metadata.insert("level_ml".into(), json!(self.level_ml));
        trace.metadata.insert("level_class".into(), json!(self.level_class));
        Ok(LabeledTrace {
            trace,
            level_ml: self.level_ml,
            level_class: self.level_class,
            resonance_freq: self.resonance_freq(),
            sweep_index: self.sweep_index,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrace {
    pub trace: CsiTrace,
    pub level_ml: f64,
    pub level_class: usize,
    pub resonance_freq: f64,
    pub sweep_index: usize,
}

/// Expands `levels × sweeps_per_level` into items without synthesizing.
///
/// A full-size trace is tens of megabytes, so callers working at scale
/// should synthesize and consume items one at a time.
pub fn plan_dataset(
    curve: &GroundTruthCurve,
    base_scene: &SceneConfig,
    levels: &[f64],
    sweeps_per_level: usize,
    seed: u64,
) -> Result<Vec<DatasetItem>, SimError> {
    curve.validate()?;
    let mut ranked: Vec<f64> = levels.to_vec();
    ranked.sort_by(f64::total_cmp);
    ranked.dedup();

    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::with_capacity(levels.len() * sweeps_per_level);
    for &level in levels {
        let freq = curve.frequency_at(level)?;
        let mut scene = base_scene.clone();
        scene.vibration.resonance_freq = freq;
        scene.validate()?;
        let level_class = ranked.iter().position(|&l| l == level).expect("level is ranked") + 1;
        for sweep_index in 0..sweeps_per_level {
            items.push(DatasetItem {
                scene: scene.clone(),
                level_ml: level,
                level_class,
                sweep_index,
                seed: seeds.next_u64(),
            });
        }
    }
    Ok(items)
}

/// Plans and synthesizes every item in memory.
pub fn synth_dataset(
    curve: &GroundTruthCurve,
    base_scene: &SceneConfig,
    levels: &[f64],
    sweeps_per_level: usize,
    packet_rate: f64,
    seed: u64,
) -> Result<Vec<LabeledTrace>, SimError> {
    plan_dataset(curve, base_scene, levels, sweeps_per_level, seed)?
        .iter()
        .map(|item| item.synthesize(packet_rate))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the manifest's directory.
    pub file: String,
    pub level_ml: f64,
    pub level_class: usize,
    pub resonance_freq: f64,
    pub sweep_index: usize,
}

/// Index of a synthesized dataset on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub capacity_ml: f64,
    pub entries: Vec<ManifestEntry>,
}

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use liquidsense::csi::{read_trace, write_trace, CsiTrace, TraceFormat, DEFAULT_PACKET_RATE};
use liquidsense::pipeline::{component_spectrogram, process_trace, BaselinePolicy, PipelineConfig};
use liquidsense::predict::{
    evaluate_continuous, evaluate_discrete, fit_spline, load_model, save_model, train_classifier, EndCondition,
    EvalReport, LabeledSample, LevelModel, LevelOutput, DEFAULT_C_GRID,
};
use liquidsense::simulator::{plan_dataset, GroundTruthCurve, Manifest, ManifestEntry, SceneConfig};

use crate::records::{path_key, read_json, to_pretty, write_text, EstimateRecord, Prediction, PredictionRecord, Status};
use crate::split::{partition, Split};
use crate::{
    CliError, EvaluateArgs, Mode, PipelineArgs, PredictArgs, ProcessArgs, SimulateArgs, SpectrogramArgs, TraceFileFormat,
    TrainArgs,
};

type Result<T> = std::result::Result<T, CliError>;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Dataset description read by `simulate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub scene: SceneConfig,
    pub curve: GroundTruthCurve,
    /// ml; the curve's knot levels when absent.
    pub levels: Option<Vec<f64>>,
    pub sweeps_per_level: usize,
    pub packet_rate: f64,
    /// `"binary"` or `"jsonl"`.
    pub format: String,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            curve: GroundTruthCurve::default(),
            levels: None,
            sweeps_per_level: 10,
            packet_rate: DEFAULT_PACKET_RATE,
            format: "binary".into(),
        }
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut cfg: SimulationConfig = match &args.config {
        Some(p) => read_json(p, "simulation config")?,
        None => SimulationConfig::default(),
    };
    if let Some(s) = args.sweeps {
        cfg.sweeps_per_level = s;
    }
    if let Some(n) = args.noise {
        cfg.scene.noise_std = n;
    }
    if let Some(r) = args.rate {
        cfg.packet_rate = r;
    }
    let format = match args.format {
        Some(TraceFileFormat::Binary) => TraceFormat::Binary,
        Some(TraceFileFormat::Jsonl) => TraceFormat::JsonLines,
        None => match cfg.format.as_str() {
            "binary" => TraceFormat::Binary,
            "jsonl" => TraceFormat::JsonLines,
            other => return Err(CliError::Usage(format!("format: expected \"binary\" or \"jsonl\", got {other:?}"))),
        },
    };
    if cfg.sweeps_per_level == 0 {
        return Err(CliError::Usage("sweeps_per_level must be at least 1".into()));
    }
    let levels = cfg.levels.clone().unwrap_or_else(|| cfg.curve.knots.iter().map(|k| k.level_ml).collect());
    let items = plan_dataset(&cfg.curve, &cfg.scene, &levels, cfg.sweeps_per_level, args.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    // Synthesizing the first item checks the packet rate before anything is written.
    let first = items[0].synthesize(cfg.packet_rate).map_err(|e| CliError::Usage(e.to_string()))?;

    fs::create_dir_all(&args.out).map_err(|e| runtime(format!("cannot create {}: {e}", args.out.display())))?;
    let ext = match format {
        TraceFormat::Binary => "csit",
        TraceFormat::JsonLines => "jsonl",
    };
    let mut entries = Vec::with_capacity(items.len());
    let mut first = Some(first);
    for item in &items {
        let labeled = match first.take() {
            Some(t) => t,
            None => item.synthesize(cfg.packet_rate).map_err(runtime)?,
        };
        let file = format!("level{:02}_sweep{:02}.{ext}", item.level_class, item.sweep_index);
        write_trace(&labeled.trace, args.out.join(&file), format).map_err(runtime)?;
        info!("wrote {file} (f_R {:.2} Hz)", labeled.resonance_freq);
        entries.push(ManifestEntry {
            file,
            level_ml: item.level_ml,
            level_class: item.level_class,
            resonance_freq: labeled.resonance_freq,
            sweep_index: item.sweep_index,
        });
    }
    let manifest = Manifest { capacity_ml: cfg.curve.capacity_ml, entries };
    write_text(&args.out.join("manifest.json"), &to_pretty(&manifest)?)?;
    println!("wrote {} traces and manifest.json to {}", items.len(), args.out.display());
    Ok(())
}

fn pipeline_config(args: &PipelineArgs) -> Result<PipelineConfig> {
    let mut cfg: PipelineConfig = match &args.config {
        Some(p) => read_json(p, "pipeline config")?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = args.cutoff {
        cfg.cutoff = v;
    }
    if let Some(v) = args.filter_order {
        cfg.filter_order = v;
    }
    if let Some(v) = args.window {
        cfg.stft.window_len = v;
        if args.fft_len.is_none() {
            cfg.stft.fft_len = cfg.stft.fft_len.max(v);
        }
    }
    if let Some(v) = args.overlap {
        cfg.stft.overlap = v;
    }
    if let Some(v) = args.fft_len {
        cfg.stft.fft_len = v;
    }
    if let Some(v) = args.threshold_divisor {
        cfg.threshold_divisor = v;
    }
    if let Some(v) = args.verification_window {
        cfg.verification_window = v;
    }
    if let Some(v) = args.min_peak_to_median {
        cfg.min_peak_to_median = v;
    }
    if let Some(v) = args.edge_trim {
        cfg.edge_trim = v;
    }
    if args.pair.is_some() {
        cfg.antenna_pair = args.pair;
    }
    if args.no_baseline {
        cfg.baseline = BaselinePolicy::Off;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn estimate_one(path: &Path, baseline: Option<&CsiTrace>, cfg: &PipelineConfig) -> EstimateRecord {
    let name = path.display().to_string();
    let trace = match read_trace(path) {
        Ok(t) => t,
        Err(e) => return EstimateRecord::failed(name, Status::Error, e.to_string()),
    };
    match process_trace(&trace, baseline, cfg) {
        Ok(out) => EstimateRecord::ok(name, &out),
        Err(e) if e.is_no_peak() => EstimateRecord::failed(name, Status::NoPeak, e.to_string()),
        Err(e) => EstimateRecord::failed(name, Status::Error, e.to_string()),
    }
}

fn estimate_all(paths: &[PathBuf], baseline: Option<&CsiTrace>, cfg: &PipelineConfig) -> Vec<EstimateRecord> {
    paths.par_iter().map(|p| estimate_one(p, baseline, cfg)).collect()
}

fn fmt_opt(v: Option<f64>, prec: usize) -> String {
    v.map_or("-".into(), |x| format!("{x:.prec$}"))
}

fn estimate_table(records: &[EstimateRecord]) -> String {
    let width = records.iter().map(|r| r.file.len()).max().unwrap_or(4).max(4);
    let mut s = format!(
        "{:<width$}  {:<8} {:>9} {:>9} {:>11} {:>8}\n",
        "file", "status", "f_up", "f_down", "f_resonance", "quality"
    );
    for r in records {
        let status = match r.status {
            Status::Ok => "ok",
            Status::NoPeak => "no-peak",
            Status::Error => "error",
        };
        let _ = writeln!(
            s,
            "{:<width$}  {:<8} {:>9} {:>9} {:>11} {:>8}",
            r.file,
            status,
            fmt_opt(r.f_up, 2),
            fmt_opt(r.f_down, 2),
            fmt_opt(r.f_resonance, 2),
            fmt_opt(r.quality, 1)
        );
    }
    s
}

pub fn process(args: &ProcessArgs) -> Result<()> {
    let cfg = pipeline_config(&args.pipeline)?;
    let baseline = match &args.baseline {
        Some(p) => Some(read_trace(p).map_err(|e| CliError::Usage(format!("baseline {}: {e}", p.display())))?),
        None => None,
    };
    let records = estimate_all(&args.traces, baseline.as_ref(), &cfg);
    let json = to_pretty(&records)?;
    if let Some(out) = args.output.clone().or_else(|| cfg.output_path.clone().map(PathBuf::from)) {
        write_text(&out, &json)?;
    }
    if args.json {
        print!("{json}");
    } else {
        print!("{}", estimate_table(&records));
    }
    let errors = records.iter().filter(|r| r.status == Status::Error).count();
    if errors > 0 {
        return Err(CliError::Runtime(format!("{errors} of {} traces could not be processed", records.len())));
    }
    Ok(())
}

fn read_manifest(path: &Path) -> Result<(Manifest, PathBuf)> {
    let manifest: Manifest = read_json(path, "manifest")?;
    if manifest.entries.is_empty() {
        return Err(CliError::Usage(format!("manifest {} has no entries", path.display())));
    }
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((manifest, dir))
}

/// Estimates keyed by canonical trace path.
fn estimate_index(records: Vec<EstimateRecord>) -> HashMap<PathBuf, EstimateRecord> {
    records.into_iter().map(|r| (path_key(Path::new(&r.file)), r)).collect()
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let (manifest, dir) = read_manifest(&args.manifest)?;
    let cfg = pipeline_config(&args.pipeline)?;
    let output = args
        .output
        .clone()
        .or_else(|| cfg.model_path.clone().map(PathBuf::from))
        .ok_or_else(|| CliError::Usage("--output is required".into()))?;
    if let Some(grid) = &args.c_grid {
        if grid.is_empty() || grid.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(CliError::Usage(format!("--c-grid values must be positive: {grid:?}")));
        }
    }
    let split = args.split.unwrap_or(match args.mode {
        Mode::Continuous => Split::InterleavedLevels,
        Mode::Discrete => Split::HalfPerClass,
    });

    let paths: Vec<PathBuf> = manifest.entries.iter().map(|e| dir.join(&e.file)).collect();
    let index = match &args.estimates {
        Some(p) => estimate_index(read_json(p, "estimates")?),
        None => estimate_index(estimate_all(&paths, None, &cfg)),
    };
    let freq_of = |i: usize| -> Option<f64> {
        let rec = index.get(&path_key(&paths[i]));
        if rec.is_none() {
            warn!("no estimate for {}", paths[i].display());
        }
        rec.and_then(|r| r.f_resonance)
    };

    let (train_idx, test_idx) = partition(&manifest.entries, split, args.seed);
    if train_idx.is_empty() {
        return Err(CliError::Usage(format!("split {split:?} leaves no training entries")));
    }
    let model = match args.mode {
        Mode::Continuous => {
            let samples: Vec<(f64, f64)> = train_idx
                .iter()
                .filter_map(|&i| freq_of(i).map(|f| (f, manifest.entries[i].level_ml)))
                .collect();
            let end = if args.clamped { EndCondition::ClampedEstimated } else { EndCondition::Natural };
            LevelModel::Spline(fit_spline(&samples, end, manifest.capacity_ml).map_err(runtime)?)
        }
        Mode::Discrete => {
            let samples: Vec<LabeledSample> = train_idx
                .iter()
                .filter_map(|&i| freq_of(i).map(|f| LabeledSample::new(f, manifest.entries[i].level_class as u32)))
                .collect();
            let grid = args.c_grid.clone().unwrap_or_else(|| DEFAULT_C_GRID.to_vec());
            let m = train_classifier(&samples, &grid).map_err(runtime)?;
            info!("chose cost {} (cross-validated accuracy {:.4})", m.cost, m.cv_accuracy);
            LevelModel::Classifier(m)
        }
    };
    if let Some(parent) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(runtime)?;
    }
    save_model(&model, &output).map_err(runtime)?;
    if let Some(h) = &args.holdout {
        let entries = test_idx
            .iter()
            .map(|&i| {
                let mut e = manifest.entries[i].clone();
                e.file = path_key(&paths[i]).display().to_string();
                e
            })
            .collect();
        write_text(h, &to_pretty(&Manifest { capacity_ml: manifest.capacity_ml, entries })?)?;
    }
    println!(
        "trained {} model on {} entries ({} held out), saved to {}",
        model.kind(),
        train_idx.len(),
        test_idx.len(),
        output.display()
    );
    Ok(())
}

fn model_mode(model: &LevelModel) -> Mode {
    match model {
        LevelModel::Spline(_) => Mode::Continuous,
        LevelModel::Classifier(_) => Mode::Discrete,
    }
}

fn prediction_table(records: &[PredictionRecord]) -> String {
    let width = records.iter().map(|r| r.file.len()).max().unwrap_or(4).max(4);
    let mut s = format!("{:<width$}  {:>11} {:>10}\n", "file", "f_resonance", "prediction");
    for r in records {
        let p = match &r.prediction {
            Prediction::Continuous { level_ml, out_of_range } => {
                format!("{level_ml:.1} ml{}", if *out_of_range { " *" } else { "" })
            }
            Prediction::Discrete { class } => format!("class {class}"),
        };
        let _ = writeln!(s, "{:<width$}  {:>11.2} {:>10}", r.file, r.f_resonance, p);
    }
    s
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let model_path = &args.model;
    let model = load_model(model_path).map_err(|e| CliError::Usage(format!("model {}: {e}", model_path.display())))?;
    if let Some(mode) = args.mode {
        if mode != model_mode(&model) {
            return Err(CliError::Usage(format!("expected a {mode:?} model, {} holds a {}", model_path.display(), model.kind())));
        }
    }
    let records: Vec<EstimateRecord> = read_json(&args.estimates, "estimates")?;
    let keep: Option<Vec<PathBuf>> = match &args.manifest {
        Some(p) => {
            let (m, dir) = read_manifest(p)?;
            Some(m.entries.iter().map(|e| path_key(&dir.join(&e.file))).collect())
        }
        None => None,
    };
    let mut out = Vec::new();
    for r in records {
        if let Some(keep) = &keep {
            if !keep.contains(&path_key(Path::new(&r.file))) {
                continue;
            }
        }
        let Some(f) = r.f_resonance else {
            warn!("{}: no resonance estimate ({:?}), skipped", r.file, r.status);
            continue;
        };
        let prediction = match model.predict(f) {
            LevelOutput::Continuous(p) => Prediction::Continuous { level_ml: p.level, out_of_range: p.out_of_range },
            LevelOutput::Class(class) => Prediction::Discrete { class },
        };
        out.push(PredictionRecord { file: r.file, f_resonance: f, prediction });
    }
    let json = to_pretty(&out)?;
    if let Some(o) = &args.output {
        write_text(o, &json)?;
    }
    if args.json {
        print!("{json}");
    } else {
        print!("{}", prediction_table(&out));
    }
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let predictions: Vec<PredictionRecord> = read_json(&args.predictions, "predictions")?;
    let (manifest, dir) = read_manifest(&args.manifest)?;
    let discrete = predictions.iter().filter(|p| matches!(p.prediction, Prediction::Discrete { .. })).count();
    let mode = match (discrete, predictions.len() - discrete) {
        (0, 0) => return Err(CliError::Usage("no predictions to evaluate".into())),
        (_, 0) => Mode::Discrete,
        (0, _) => Mode::Continuous,
        _ => return Err(CliError::Usage("predictions mix continuous and discrete models".into())),
    };
    if let Some(expected) = args.mode {
        if expected != mode {
            return Err(CliError::Usage(format!("expected {expected:?} predictions, found {mode:?}")));
        }
    }
    let by_path: HashMap<PathBuf, &PredictionRecord> =
        predictions.iter().map(|p| (path_key(Path::new(&p.file)), p)).collect();

    let mut missing = 0usize;
    let report = match mode {
        Mode::Continuous => {
            let (mut pred, mut truth) = (Vec::new(), Vec::new());
            for e in &manifest.entries {
                match by_path.get(&path_key(&dir.join(&e.file))).map(|p| &p.prediction) {
                    Some(Prediction::Continuous { level_ml, .. }) => {
                        pred.push(*level_ml);
                        truth.push(e.level_ml);
                    }
                    _ => missing += 1,
                }
            }
            EvalReport::Continuous(evaluate_continuous(&pred, &truth, manifest.capacity_ml).map_err(runtime)?)
        }
        Mode::Discrete => {
            // Entries without a prediction count as misses (label 0).
            let (mut pred, mut truth) = (Vec::new(), Vec::new());
            for e in &manifest.entries {
                let class = match by_path.get(&path_key(&dir.join(&e.file))).map(|p| &p.prediction) {
                    Some(Prediction::Discrete { class }) => *class,
                    _ => {
                        missing += 1;
                        0
                    }
                };
                pred.push(class);
                truth.push(e.level_class as u32);
            }
            EvalReport::Discrete(evaluate_discrete(&pred, &truth).map_err(runtime)?)
        }
    };
    if missing > 0 {
        warn!(
            "{missing} manifest entries have no prediction ({})",
            if mode == Mode::Discrete { "scored as misses" } else { "excluded" }
        );
    }
    let json = to_pretty(&report)?;
    if let Some(o) = &args.output {
        write_text(o, &json)?;
    }
    if args.json {
        print!("{json}");
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}

pub fn spectrogram(args: &SpectrogramArgs) -> Result<()> {
    let cfg = pipeline_config(&args.pipeline)?;
    let trace = read_trace(&args.trace).map_err(|e| CliError::Usage(format!("{}: {e}", args.trace.display())))?;
    let spec = component_spectrogram(&trace, &cfg).map_err(runtime)?;
    if let Some(parent) = args.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(runtime)?;
    }
    let file = fs::File::create(&args.output).map_err(|e| runtime(format!("{}: {e}", args.output.display())))?;
    spec.write_csv(BufWriter::new(file)).map_err(runtime)?;
    println!(
        "wrote {} x {} spectrogram ({:.4} Hz bins) to {}",
        spec.n_time(),
        spec.n_freq(),
        spec.bin_spacing(),
        args.output.display()
    );
    Ok(())
}

//! JSON persistence for fitted level models.

use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use super::{ClassifierModel, LevelPrediction, PredictError, SplineModel};

pub const MODEL_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum LevelModel {
    Spline(SplineModel),
    Classifier(ClassifierModel),
}

/// Output of [`LevelModel::predict`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelOutput {
    Continuous(LevelPrediction),
    Class(u32),
}

impl LevelModel {
    pub fn kind(&self) -> &'static str {
        match self {
            LevelModel::Spline(_) => "spline",
            LevelModel::Classifier(_) => "classifier",
        }
    }

    pub fn predict(&self, f: f64) -> LevelOutput {
        match self {
            LevelModel::Spline(m) => LevelOutput::Continuous(m.predict(f)),
            LevelModel::Classifier(m) => LevelOutput::Class(m.predict(&[f])),
        }
    }

    pub fn to_json(&self) -> Result<String, PredictError> {
        let body = match self {
            LevelModel::Spline(m) => serde_json::to_value(m),
            LevelModel::Classifier(m) => serde_json::to_value(m),
        }
        .map_err(PredictError::Json)?;
        let Value::Object(fields) = body else { unreachable!("models serialize as objects") };
        let mut obj = Map::new();
        obj.insert("type".into(), Value::from(self.kind()));
        obj.insert("version".into(), Value::from(MODEL_VERSION));
        for (k, v) in fields {
            obj.insert(k, v);
        }
        let mut text = serde_json::to_string_pretty(&Value::Object(obj)).map_err(PredictError::Json)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self, PredictError> {
        let value: Value = serde_json::from_str(text).map_err(PredictError::Json)?;
        let Value::Object(mut obj) = value else {
            return Err(PredictError::Schema("model file must be a JSON object".into()));
        };
        match obj.remove("version") {
            Some(Value::Number(n)) if n.as_u64() == Some(MODEL_VERSION) => {}
            Some(v) => return Err(PredictError::Version { found: v.to_string(), expected: MODEL_VERSION }),
            None => return Err(PredictError::Schema("missing \"version\"".into())),
        }
        let kind = match obj.remove("type") {
            Some(Value::String(s)) => s,
            _ => return Err(PredictError::Schema("missing or non-string \"type\"".into())),
        };
        let body = Value::Object(obj);
        match kind.as_str() {
            "spline" => {
                let m: SplineModel = serde_json::from_value(body).map_err(PredictError::Json)?;
                m.validate()?;
                Ok(LevelModel::Spline(m))
            }
            "classifier" => {
                let m: ClassifierModel = serde_json::from_value(body).map_err(PredictError::Json)?;
                m.validate()?;
                Ok(LevelModel::Classifier(m))
            }
            other => Err(PredictError::Schema(format!("unknown model type {other:?}"))),
        }
    }
}

pub fn save_model(model: &LevelModel, path: impl AsRef<Path>) -> Result<(), PredictError> {
    fs::write(path, model.to_json()?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LevelModel, PredictError> {
    LevelModel::from_json(&fs::read_to_string(path)?)
}

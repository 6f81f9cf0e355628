//! Versioned JSON model files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{LearnError, Result, TrainedModel};

pub const MODEL_FORMAT_VERSION: &str = "1";
const FORMAT_NAME: &str = "pepscreen-model";

#[derive(Serialize)]
struct DocumentRef<'a> {
    format: &'static str,
    version: &'static str,
    model: &'a TrainedModel,
}

#[derive(Deserialize)]
struct Document {
    model: TrainedModel,
}

pub fn model_to_json(model: &TrainedModel) -> Result<String> {
    serde_json::to_string(&DocumentRef {
        format: FORMAT_NAME,
        version: MODEL_FORMAT_VERSION,
        model,
    })
    .map_err(|e| LearnError::Corrupt(e.to_string()))
}

pub fn model_from_json(text: &str) -> Result<TrainedModel> {
    let value: Value = serde_json::from_str(text).map_err(|e| LearnError::Corrupt(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| LearnError::Corrupt("model document is not an object".into()))?;
    match obj.get("format").and_then(Value::as_str) {
        Some(FORMAT_NAME) => {}
        _ => return Err(LearnError::Corrupt("missing or unknown format tag".into())),
    }
    match obj.get("version") {
        Some(Value::String(v)) if v == MODEL_FORMAT_VERSION => {}
        Some(Value::String(v)) => return Err(LearnError::UnsupportedVersion(v.clone())),
        Some(other) => return Err(LearnError::UnsupportedVersion(other.to_string())),
        None => return Err(LearnError::Corrupt("missing version field".into())),
    }
    let doc: Document = serde_json::from_value(value).map_err(|e| LearnError::Corrupt(e.to_string()))?;
    if doc.model.n_features == 0 {
        return Err(LearnError::Corrupt("model has zero features".into()));
    }
    Ok(doc.model)
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    let json = model_to_json(model)?;
    fs::write(path, json).map_err(|e| LearnError::Io(format!("{}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = fs::read_to_string(path).map_err(|e| LearnError::Io(format!("{}: {e}", path.display())))?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use crate::labeling::Class;
    use crate::learn::{train, DesignMatrix, ModelSpec};

    fn small_model() -> TrainedModel {
        let x = DesignMatrix::from_rows(&[[0.1, 0.7], [0.3, 0.2], [0.9, 0.4], [0.5, 0.55]]).unwrap();
        let y = [Class::Hemolytic, Class::NonHemolytic, Class::Hemolytic, Class::NonHemolytic];
        train(&ModelSpec::svm(), &x, &y, FeatureKind::UnitNorm).unwrap()
    }

    #[test]
    fn roundtrip_is_exact() {
        let m = small_model();
        let back = model_from_json(&model_to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        let probe = [0.123456789, 0.987654321];
        assert_eq!(
            back.score_row(&probe).unwrap().to_bits(),
            m.score_row(&probe).unwrap().to_bits()
        );
    }

    #[test]
    fn version_and_corruption() {
        let json = model_to_json(&small_model()).unwrap();
        let mut v: Value = serde_json::from_str(&json).unwrap();
        v["version"] = Value::String("99".into());
        assert_eq!(
            model_from_json(&v.to_string()),
            Err(LearnError::UnsupportedVersion("99".into()))
        );
        assert!(matches!(
            model_from_json(&json[..json.len() / 2]),
            Err(LearnError::Corrupt(_))
        ));
        assert!(matches!(model_from_json("[1,2]"), Err(LearnError::Corrupt(_))));
    }
}

//! Versioned JSON model file.
//!
//! Sections: `format_version`, `train_config`, `filters`, `svm`,
//! `training_accuracy`, `provenance`. Floats are written with shortest
//! round-trip formatting, so a reloaded model is bit-identical.

use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::pipeline::{TrainConfig, TrainedClassifier};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file is not valid JSON: {0}")]
    Syntax(String),
    #[error("model format version {found} is not supported (this build reads version {supported})")]
    Version { found: u64, supported: u32 },
    #[error("section `{section}`: {message}")]
    Section { section: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 (hex) of the training session file, when trained from one.
    pub session_sha256: Option<String>,
    pub seed: u64,
    pub created: DateTime<Utc>,
}

impl Provenance {
    pub fn new(session_bytes: Option<&[u8]>, seed: u64) -> Self {
        Provenance {
            session_sha256: session_bytes.map(|b| format!("{:x}", Sha256::digest(b))),
            seed,
            created: Utc::now(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub train_config: TrainConfig,
    pub filters: crate::csp::SpatialFilterSet,
    pub svm: crate::svm::SvmModel,
    pub training_accuracy: f64,
    pub provenance: Provenance,
}

impl ModelFile {
    pub fn new(classifier: &TrainedClassifier, provenance: Provenance) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            train_config: classifier.config.clone(),
            filters: classifier.filters.clone(),
            svm: classifier.svm.clone(),
            training_accuracy: classifier.training_accuracy,
            provenance,
        }
    }

    pub fn classifier(&self) -> TrainedClassifier {
        TrainedClassifier {
            filters: self.filters.clone(),
            svm: self.svm.clone(),
            config: self.train_config.clone(),
            training_accuracy: self.training_accuracy,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// Parses and re-validates every section.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let root: Value = serde_json::from_str(text).map_err(|e| ModelError::Syntax(e.to_string()))?;
        let Value::Object(mut map) = root else {
            return Err(ModelError::Syntax("top level is not an object".into()));
        };
        let found = match map.get("format_version") {
            Some(Value::Number(n)) if n.as_u64().is_some() => n.as_u64().unwrap(),
            _ => {
                return Err(ModelError::Section {
                    section: "format_version",
                    message: "missing or not a non-negative integer".into(),
                })
            }
        };
        if found != MODEL_FORMAT_VERSION as u64 {
            return Err(ModelError::Version {
                found,
                supported: MODEL_FORMAT_VERSION,
            });
        }
        let train_config: TrainConfig = section(&mut map, "train_config")?;
        let filters: crate::csp::SpatialFilterSet = section(&mut map, "filters")?;
        let svm: crate::svm::SvmModel = section(&mut map, "svm")?;
        let training_accuracy: f64 = section(&mut map, "training_accuracy")?;
        let provenance: Provenance = section(&mut map, "provenance")?;

        let invalid = |section, e: &dyn std::fmt::Display| ModelError::Section {
            section,
            message: e.to_string(),
        };
        train_config.validate().map_err(|e| invalid("train_config", &e))?;
        filters.validate().map_err(|e| invalid("filters", &e))?;
        svm.validate().map_err(|e| invalid("svm", &e))?;
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            train_config,
            filters,
            svm,
            training_accuracy,
            provenance,
        };
        // Cross-section consistency (channel sets, feature dimension).
        file.classifier().validate().map_err(|e| invalid("model", &e))?;
        Ok(file)
    }
}

fn section<T: DeserializeOwned>(map: &mut Map<String, Value>, name: &'static str) -> Result<T, ModelError> {
    let v = map.remove(name).ok_or(ModelError::Section {
        section: name,
        message: "missing".into(),
    })?;
    serde_json::from_value(v).map_err(|e| ModelError::Section {
        section: name,
        message: e.to_string(),
    })
}

pub fn save_model(
    classifier: &TrainedClassifier,
    provenance: Provenance,
    path: impl AsRef<Path>,
) -> Result<(), ModelError> {
    let mut text = ModelFile::new(classifier, provenance).to_json();
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelFile, ModelError> {
    ModelFile::from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::train_classifier;
    use crate::signal::{generate_session, SynthConfig};

    fn model_json() -> String {
        let trials = generate_session(&SynthConfig::default()).unwrap();
        let tc = train_classifier(&trials, &TrainConfig::default()).unwrap();
        ModelFile::new(&tc, Provenance::new(Some(b"abc"), 0)).to_json()
    }

    #[test]
    fn round_trip_and_hash() {
        let text = model_json();
        let m = ModelFile::from_json(&text).unwrap();
        assert_eq!(
            m.provenance.session_sha256.as_deref(),
            Some("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad")
        );
        assert_eq!(ModelFile::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn errors_name_the_problem() {
        let text = model_json();
        assert!(matches!(
            ModelFile::from_json(&text[..text.len() / 2]),
            Err(ModelError::Syntax(_))
        ));

        let mut v: Value = serde_json::from_str(&text).unwrap();
        v["format_version"] = 99.into();
        assert!(matches!(
            ModelFile::from_json(&v.to_string()),
            Err(ModelError::Version { found: 99, .. })
        ));

        let mut v: Value = serde_json::from_str(&text).unwrap();
        v["svm"]["bias"] = "oops".into();
        match ModelFile::from_json(&v.to_string()) {
            Err(ModelError::Section { section, .. }) => assert_eq!(section, "svm"),
            other => panic!("{other:?}"),
        }

        let mut v: Value = serde_json::from_str(&text).unwrap();
        v["train_config"]["window_len"] = 6.into();
        match ModelFile::from_json(&v.to_string()) {
            Err(ModelError::Section { section, .. }) => assert_eq!(section, "model"),
            other => panic!("{other:?}"),
        }

        let mut v: Value = serde_json::from_str(&text).unwrap();
        v.as_object_mut().unwrap().remove("filters");
        match ModelFile::from_json(&v.to_string()) {
            Err(ModelError::Section { section, .. }) => assert_eq!(section, "filters"),
            other => panic!("{other:?}"),
        }
    }
}

//! Results file: `{"method": "ddt", "results": [{"id", "box", "noisy", "noise_rate", "component_size"}]}`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::LocalizationResult;
use crate::bbox::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ddt,
    DdtPlus,
    Scda,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ddt => "ddt",
            Method::DdtPlus => "ddt_plus",
            Method::Scda => "scda",
        }
    }
}

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("i/o failure on results file: {0}")]
    Io(#[from] std::io::Error),
    #[error("results schema error: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResultEntry {
    id: String,
    #[serde(rename = "box")]
    bbox: Option<BoundingBox>,
    noisy: bool,
    noise_rate: f64,
    component_size: u64,
}

/// A method tag plus per-image results in manifest order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsFile {
    pub method: Method,
    #[serde(with = "entries")]
    pub results: Vec<LocalizationResult>,
}

mod entries {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(results: &[LocalizationResult], s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<ResultEntry> = results
            .iter()
            .map(|r| ResultEntry {
                id: r.image_id.clone(),
                bbox: r.bbox,
                noisy: r.noisy,
                noise_rate: r.noise_rate,
                component_size: r.component_size,
            })
            .collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<LocalizationResult>, D::Error> {
        let raw = Vec::<ResultEntry>::deserialize(d)?;
        Ok(raw
            .into_iter()
            .map(|e| LocalizationResult {
                image_id: e.id,
                bbox: e.bbox,
                noisy: e.noisy,
                noise_rate: e.noise_rate,
                component_size: e.component_size,
                // patched by ResultsFile::validate from the file-level tag
                method: Method::Ddt,
            })
            .collect())
    }
}

impl ResultsFile {
    pub fn new(method: Method, results: Vec<LocalizationResult>) -> Self {
        Self { method, results }
    }

    pub fn from_json_str(json: &str) -> Result<Self, ResultsError> {
        let mut file: ResultsFile = serde_json::from_str(json).map_err(|e| ResultsError::Schema(e.to_string()))?;
        for r in &mut file.results {
            r.method = file.method;
        }
        file.validate()?;
        Ok(file)
    }

    /// Checks the per-entry invariants: `noisy ⇔ box absent ⇔ component_size == 0`,
    /// `noise_rate ∈ [0, 1]`, unique ids.
    pub fn validate(&self) -> Result<(), ResultsError> {
        let mut seen = std::collections::HashSet::new();
        for r in &self.results {
            let bad = |msg: &str| Err(ResultsError::Schema(format!("result {:?}: {msg}", r.image_id)));
            if !seen.insert(r.image_id.as_str()) {
                return bad("duplicate id");
            }
            if r.noisy != r.bbox.is_none() || r.noisy != (r.component_size == 0) {
                return bad("noisy flag, box and component_size disagree");
            }
            if !(0.0..=1.0).contains(&r.noise_rate) {
                return bad("noise_rate outside [0, 1]");
            }
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialization is infallible")
    }
}

pub fn write_results(file: &ResultsFile, path: impl AsRef<Path>) -> Result<(), ResultsError> {
    let mut json = file.to_json_string();
    json.push('\n');
    fs::write(path, json)?;
    Ok(())
}

pub fn read_results(path: impl AsRef<Path>) -> Result<ResultsFile, ResultsError> {
    ResultsFile::from_json_str(&fs::read_to_string(path)?)
}

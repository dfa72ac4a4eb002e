//! On-disk model artifacts.
//!
//! An artifact is a JSON document:
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "family": "<model name>",
//!   "model": { "kind", "feature_spec", "body": { family payload } },
//!   "metadata": { "training_range", "training_samples", "fit_seconds", "settings", "crate_version" }
//! }
//! ```
//!
//! Floats are written in shortest round-trip form and parsed with exact
//! round-tripping, so a reloaded model predicts bit-identically.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DateRange;
use crate::error::{Error, Result};
use crate::models::{FitSettings, FittedModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub training_range: Option<DateRange>,
    pub training_samples: usize,
    pub fit_seconds: f64,
    pub settings: FitSettings,
    pub crate_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub family: String,
    pub model: FittedModel,
    pub metadata: FitMetadata,
}

impl ModelArtifact {
    pub fn new(model: FittedModel, metadata: FitMetadata) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            family: model.kind.name().to_string(),
            model,
            metadata,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::InvalidConfig("artifact has no format_version".into()))?;
        if found != FORMAT_VERSION as u64 {
            return Err(Error::FormatVersion {
                found: found.min(u32::MAX as u64) as u32,
                expected: FORMAT_VERSION,
            });
        }
        let artifact: ModelArtifact = serde_json::from_value(value)?;
        if artifact.family != artifact.model.kind.name() {
            return Err(Error::InvalidConfig(format!(
                "artifact family `{}` does not match its model `{}`",
                artifact.family,
                artifact.model.kind.name()
            )));
        }
        Ok(artifact)
    }

    /// Writes to a temporary sibling file and renames it into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(self.to_json()?.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

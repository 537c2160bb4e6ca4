//! Versioned JSON model files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Scenario;
use crate::error::{Error, Result};
use crate::features::FeaturizerConfig;
use crate::harness::{Approach, Member};
use crate::model::GateModel;
use crate::taxonomy::Taxonomy;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// How segment vectors are produced for the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputSpec {
    Hashing(FeaturizerConfig),
    Precomputed { dim: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StoredModel {
    Member(Member),
    Gate(GateModel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub scenario: Scenario,
    pub approach: Approach,
    pub input: InputSpec,
    /// Function names in preorder, checked against the taxonomy at load.
    pub taxonomy: Vec<String>,
    pub model: StoredModel,
}

impl ModelFile {
    pub fn new(
        scenario: Scenario,
        approach: Approach,
        input: InputSpec,
        taxonomy: &Taxonomy,
        model: StoredModel,
    ) -> Self {
        ModelFile {
            version: MODEL_FORMAT_VERSION,
            scenario,
            approach,
            input,
            taxonomy: taxonomy.nodes().map(|(_, n)| n.name.clone()).collect(),
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelVersion(header.version));
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text)
    }

    pub fn check_taxonomy(&self, taxonomy: &Taxonomy) -> Result<()> {
        let names: Vec<&str> = taxonomy.nodes().map(|(_, n)| n.name.as_str()).collect();
        if names != self.taxonomy.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Config("model was trained with a different taxonomy".into()));
        }
        Ok(())
    }
}

//! Cross-validation experiments: per-fold ensembles, the flat, hierarchical
//! and two-step approaches, and architecture ablations.

mod crossval;
mod ensemble;

pub use crossval::{
    crossval, run_seed, train_single, write_artifacts, CrossvalResult, FoldReport, RunMetrics, RunReport, Summary,
};
pub use ensemble::{
    build_inputs, predict_dialog, run_fold, train_ensemble, train_member, two_step_predict, vote, DialogInputs,
    FoldContext, Member, MemberOutput, SegmentPrediction, Vote,
};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{FoldScheme, Scenario};
use crate::decode::DecodeMode;
use crate::error::{Error, Result};
use crate::features::{Encoder, FeaturizerConfig, HashingEncoder, PrecomputedEncoder};
use crate::labels::LabelSpace;
use crate::model::{FlatModel, GateModel, NetworkConfig, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Approach {
    Flat,
    Hierarchical,
    TwoStep,
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(Approach::Flat),
            "hierarchical" => Ok(Approach::Hierarchical),
            "two-step" => Ok(Approach::TwoStep),
            other => Err(Error::Config(format!("unknown approach {other:?}"))),
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Approach::Flat => "flat",
            Approach::Hierarchical => "hierarchical",
            Approach::TwoStep => "two-step",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    NoCascade,
    NoSpecialization,
    IterativeDecode,
    NoExtraData,
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no-cascade" => Ok(Ablation::NoCascade),
            "no-specialization" => Ok(Ablation::NoSpecialization),
            "iterative-decode" => Ok(Ablation::IterativeDecode),
            "no-extra-data" => Ok(Ablation::NoExtraData),
            other => Err(Error::Config(format!("unknown ablation {other:?}"))),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::NoCascade => "no-cascade",
            Ablation::NoSpecialization => "no-specialization",
            Ablation::IterativeDecode => "iterative-decode",
            Ablation::NoExtraData => "no-extra-data",
        })
    }
}

/// Which labels fill the context of test segments.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextSource {
    /// The ensemble's own earlier predictions.
    #[default]
    Predicted,
    /// Gold labels of earlier segments (oracle history).
    Gold,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub folds: FoldScheme,
    pub approach: Approach,
    pub ablations: Vec<Ablation>,
    /// Mapped-provenance corpora added to every training side.
    pub extra: Vec<PathBuf>,
    /// Precomputed segment vectors replacing the hashing featurizer.
    pub precomputed: Option<PathBuf>,
    pub runs: usize,
    pub seed: u64,
    /// Reuse `seed` for every run instead of deriving one per run.
    pub same_seed_each_run: bool,
    pub inference_context: ContextSource,
    pub jobs: usize,
    pub train: TrainConfig,
    pub features: FeaturizerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: Scenario::TaskOnly,
            folds: FoldScheme::Dialog,
            approach: Approach::Hierarchical,
            ablations: Vec::new(),
            extra: Vec::new(),
            precomputed: None,
            runs: 5,
            seed: 0,
            same_seed_each_run: false,
            inference_context: ContextSource::Predicted,
            jobs: 1,
            train: TrainConfig::default(),
            features: FeaturizerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.approach == Approach::TwoStep && self.scenario != Scenario::AllSegments {
            return Err(Error::Config(
                "the two-step approach requires the all-segments scenario".into(),
            ));
        }
        if self.approach == Approach::Flat {
            for a in &self.ablations {
                if matches!(a, Ablation::NoCascade | Ablation::IterativeDecode) {
                    return Err(Error::Config(format!(
                        "ablation {a} does not apply to the flat approach"
                    )));
                }
            }
        }
        self.train.validate()?;
        if self.precomputed.is_none() {
            self.features.validate()?;
        }
        apply_ablation(&self.ablations, ModelBuilder::default()).map(|_| ())
    }

    pub fn builder(&self) -> Result<ModelBuilder> {
        apply_ablation(&self.ablations, ModelBuilder::default())
    }

    pub fn encoder(&self) -> Result<Arc<dyn Encoder>> {
        Ok(match &self.precomputed {
            Some(path) => Arc::new(PrecomputedEncoder::load(path)?),
            None => Arc::new(HashingEncoder::new(self.features.clone())?),
        })
    }
}

/// Architecture and data switches toggled by ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelBuilder {
    pub cascade: bool,
    pub specialization: bool,
    pub decode: DecodeMode,
    pub use_extra: bool,
}

impl Default for ModelBuilder {
    fn default() -> Self {
        ModelBuilder {
            cascade: true,
            specialization: true,
            decode: DecodeMode::Map,
            use_extra: true,
        }
    }
}

impl ModelBuilder {
    pub fn hierarchical(&self, space: &LabelSpace, input_dim: usize, train: &TrainConfig) -> NetworkConfig {
        NetworkConfig {
            input_dim,
            level_sizes: space.alphabet_sizes(),
            hidden: train.hidden,
            dropout: train.dropout,
            cascade: self.cascade,
            specialization: self.specialization,
        }
    }

    pub fn flat(&self, space: &LabelSpace, input_dim: usize, train: &TrainConfig) -> NetworkConfig {
        NetworkConfig {
            specialization: self.specialization,
            ..FlatModel::config(space, input_dim, train.hidden, train.dropout)
        }
    }

    pub fn gate(&self, input_dim: usize, train: &TrainConfig) -> NetworkConfig {
        NetworkConfig {
            specialization: self.specialization,
            ..GateModel::config(input_dim, train.hidden, train.dropout)
        }
    }
}

pub fn apply_ablation(ablations: &[Ablation], mut builder: ModelBuilder) -> Result<ModelBuilder> {
    for a in ablations {
        match a {
            Ablation::NoCascade => builder.cascade = false,
            Ablation::NoSpecialization => builder.specialization = false,
            Ablation::IterativeDecode => builder.decode = DecodeMode::Iterative,
            Ablation::NoExtraData => builder.use_extra = false,
        }
    }
    Ok(builder)
}

/// Parses ablation names, rejecting unknown ones.
pub fn parse_ablations<S: AsRef<str>>(names: &[S]) -> Result<Vec<Ablation>> {
    names.iter().map(|n| n.as_ref().parse()).collect()
}

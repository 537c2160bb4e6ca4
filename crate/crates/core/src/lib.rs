//! Hierarchical recognition of ISO 24617-2 general-purpose communicative
//! functions: taxonomy, corpus handling, hashed features, cascading
//! per-level classifiers, MAP path decoding, hierarchical metrics and a
//! cross-validation harness.

pub mod corpus;
pub mod decode;
pub mod error;
pub mod features;
pub mod harness;
pub mod labels;
pub mod metrics;
pub mod model;
pub mod model_file;
pub mod predictions;
pub mod rng;
pub mod synthetic;
pub mod taxonomy;

pub use corpus::{CorpusSet, CorpusStats, Dialog, FoldScheme, Provenance, Scenario, Segment};
pub use decode::{decode, iterative_decode, map_decode, DecodeMode, Decoded};
pub use error::{Error, Result};
pub use features::{Encoder, FeaturizerConfig, HashingEncoder, PrecomputedEncoder, SparseVec};
pub use harness::{Ablation, Approach, ContextSource, ExperimentConfig, Member};
pub use labels::LabelSpace;
pub use metrics::{EvalExample, LevelDiagnostics, MetricsReport};
pub use model::{LevelDistributions, Network, NetworkConfig, TrainConfig};
pub use model_file::ModelFile;
pub use taxonomy::{Label, LabelPath, NodeId, Taxonomy};

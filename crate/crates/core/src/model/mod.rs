//! Hierarchical, flat and gate classifiers and their training loop.

mod network;
mod train;

pub use network::{softmax, Dense, LevelLayers, Network, NetworkConfig, Trace};
pub use train::{train, Adam, EpochRecord, Example, TrainConfig, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SparseVec;
use crate::labels::LabelSpace;

/// Gold class index per output level.
pub type Target = Vec<usize>;

/// Per-level probability vectors for one segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelDistributions(pub Vec<Vec<f64>>);

impl LevelDistributions {
    pub fn levels(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn n_levels(&self) -> usize {
        self.0.len()
    }

    /// Checks lengths against the space and normalization within `tol`.
    pub fn check(&self, space: &LabelSpace, tol: f64) -> Result<()> {
        let sizes = space.alphabet_sizes();
        if sizes.len() != self.0.len() {
            return Err(Error::DimensionMismatch {
                expected: sizes.len(),
                found: self.0.len(),
            });
        }
        for (p, &k) in self.0.iter().zip(&sizes) {
            if p.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: p.len(),
                });
            }
            let sum: f64 = p.iter().sum();
            if p.iter().any(|&x| x < 0.0) || (sum - 1.0).abs() > tol {
                return Err(Error::Config(format!("not a distribution (sum {sum})")));
            }
        }
        Ok(())
    }
}

/// Smallest probability used inside logarithms.
pub const PROB_FLOOR: f64 = 1e-300;

pub(crate) fn loss_from_probs(probs: &[Vec<f64>], target: &Target) -> f64 {
    probs.iter().zip(target).map(|(p, &c)| -p[c].max(PROB_FLOOR).ln()).sum()
}

/// Sum over levels of the cross-entropy against the gold class.
pub fn loss(dists: &LevelDistributions, target: &Target) -> f64 {
    loss_from_probs(&dists.0, target)
}

/// Single output level over the valid paths, treated as atomic labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatModel(pub Network);

impl FlatModel {
    pub fn config(space: &LabelSpace, input_dim: usize, hidden: usize, dropout: f64) -> NetworkConfig {
        NetworkConfig {
            input_dim,
            level_sizes: vec![space.valid_paths().len()],
            hidden,
            dropout,
            cascade: false,
            specialization: true,
        }
    }

    /// Distribution over `space.valid_paths()`.
    pub fn forward_flat(&self, x: &SparseVec) -> Result<Vec<f64>> {
        let mut d = self.0.forward(x)?;
        Ok(d.0.remove(0))
    }
}

/// Binary `{Task, None}` classifier with the same body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateModel(pub Network);

impl GateModel {
    pub const TASK: usize = 0;
    pub const NONE: usize = 1;

    pub fn config(input_dim: usize, hidden: usize, dropout: f64) -> NetworkConfig {
        NetworkConfig {
            input_dim,
            level_sizes: vec![2],
            hidden,
            dropout,
            cascade: false,
            specialization: true,
        }
    }

    /// `[P(Task), P(None)]`.
    pub fn forward_gate(&self, x: &SparseVec) -> Result<[f64; 2]> {
        let d = self.0.forward(x)?;
        Ok([d.0[0][Self::TASK], d.0[0][Self::NONE]])
    }
}

/// Base64 of little-endian f64 bytes; exact and compact.
pub(crate) mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let text = String::deserialize(d)?;
        let bytes = STANDARD.decode(text).map_err(serde::de::Error::custom)?;
        if bytes.len() % 8 != 0 {
            return Err(serde::de::Error::custom("parameter blob not a multiple of 8 bytes"));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

//! Segment representations: hashed character and word n-gram bags, or vectors
//! loaded from a precomputed embedding file.

use std::collections::HashMap;
use std::hash::Hasher;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::corpus::Segment;
use crate::error::{Error, Result};

/// Sparse vector with strictly increasing indices.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SparseVec {
    pub dim: usize,
    pub idx: Vec<u32>,
    pub val: Vec<f64>,
}

impl SparseVec {
    pub fn zeros(dim: usize) -> Self {
        SparseVec {
            dim,
            ..Default::default()
        }
    }

    pub fn from_dense(v: &[f64]) -> Self {
        let mut s = SparseVec::zeros(v.len());
        for (i, &x) in v.iter().enumerate() {
            if x != 0.0 {
                s.idx.push(i as u32);
                s.val.push(x);
            }
        }
        s
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for (&i, &x) in self.idx.iter().zip(&self.val) {
            v[i as usize] = x;
        }
        v
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    /// Appends `other` after the last dimension of `self`.
    pub fn concat(&self, other: &SparseVec) -> SparseVec {
        let mut out = self.clone();
        let offset = self.dim as u32;
        out.idx.extend(other.idx.iter().map(|&i| i + offset));
        out.val.extend_from_slice(&other.val);
        out.dim += other.dim;
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx.iter().map(|&i| i as usize).zip(self.val.iter().copied())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizerConfig {
    pub char_windows: Vec<usize>,
    pub word_windows: Vec<usize>,
    /// Buckets per channel.
    pub hash_dim: usize,
    pub lowercase: bool,
    /// L2-normalize each channel.
    pub normalize: bool,
    pub seed: u64,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            char_windows: vec![3, 5, 7],
            word_windows: vec![1, 2, 3],
            hash_dim: 1 << 10,
            lowercase: true,
            normalize: true,
            seed: 0,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hash_dim == 0 {
            return Err(Error::Config("hash_dim must be at least 1".into()));
        }
        if self.char_windows.iter().chain(&self.word_windows).any(|&w| w == 0) {
            return Err(Error::Config("window sizes must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        self.char_windows.len() + self.word_windows.len()
    }

    pub fn dim(&self) -> usize {
        self.hash_dim * self.n_channels()
    }

    pub fn bucket(&self, gram: &str) -> usize {
        let mut h = FnvHasher::with_key(0xcbf2_9ce4_8422_2325 ^ self.seed);
        h.write(gram.as_bytes());
        (h.finish() % self.hash_dim as u64) as usize
    }
}

/// Gram windows over `tokens`. A non-empty sequence shorter than the
/// window yields a single gram covering all of it.
pub fn windows<T>(tokens: &[T], size: usize) -> impl Iterator<Item = &[T]> {
    let short = !tokens.is_empty() && tokens.len() < size;
    let n = if short {
        1
    } else {
        (tokens.len() + 1).saturating_sub(size)
    };
    (0..n).map(move |i| if short { tokens } else { &tokens[i..i + size] })
}

/// Character grams for each char window, then word grams (joined by a single
/// space) for each word window; one channel per window.
pub fn grams(text: &str, cfg: &FeaturizerConfig) -> Vec<Vec<String>> {
    let text = if cfg.lowercase {
        text.to_lowercase()
    } else {
        text.to_string()
    };
    let chars: Vec<char> = text.chars().collect();
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut channels = Vec::with_capacity(cfg.n_channels());
    for &w in &cfg.char_windows {
        channels.push(windows(&chars, w).map(|g| g.iter().collect()).collect());
    }
    for &w in &cfg.word_windows {
        channels.push(windows(&words, w).map(|g| g.join(" ")).collect());
    }
    channels
}

pub fn featurize_sparse(text: &str, cfg: &FeaturizerConfig) -> SparseVec {
    let mut out = SparseVec::zeros(cfg.dim());
    for (c, channel) in grams(text, cfg).into_iter().enumerate() {
        let mut counts: Vec<(usize, f64)> = Vec::new();
        let mut slots: HashMap<usize, usize> = HashMap::new();
        for g in &channel {
            let b = cfg.bucket(g);
            match slots.get(&b) {
                Some(&k) => counts[k].1 += 1.0,
                None => {
                    slots.insert(b, counts.len());
                    counts.push((b, 1.0));
                }
            }
        }
        counts.sort_by_key(|&(b, _)| b);
        let norm = if cfg.normalize {
            counts.iter().map(|(_, x)| x * x).sum::<f64>().sqrt()
        } else {
            1.0
        };
        let offset = c * cfg.hash_dim;
        for (b, x) in counts {
            out.idx.push((offset + b) as u32);
            out.val.push(x / norm);
        }
    }
    out
}

/// Dense hashed n-gram bag of length [`FeaturizerConfig::dim`].
pub fn featurize(text: &str, cfg: &FeaturizerConfig) -> Vec<f64> {
    featurize_sparse(text, cfg).to_dense()
}

/// Produces the base representation of a segment.
pub trait Encoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, segment: &Segment) -> Result<SparseVec>;
}

#[derive(Clone, Debug)]
pub struct HashingEncoder {
    pub config: FeaturizerConfig,
}

impl HashingEncoder {
    pub fn new(config: FeaturizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(HashingEncoder { config })
    }
}

impl Encoder for HashingEncoder {
    fn dim(&self) -> usize {
        self.config.dim()
    }

    fn encode(&self, segment: &Segment) -> Result<SparseVec> {
        Ok(featurize_sparse(&segment.text, &self.config))
    }
}

#[derive(Serialize, Deserialize)]
struct EmbeddingLine {
    key: String,
    vec: Vec<f64>,
}

/// Vectors keyed by `"dialog:index"`.
#[derive(Clone, Debug, Default)]
pub struct PrecomputedEncoder {
    dim: usize,
    vectors: HashMap<String, SparseVec>,
}

impl PrecomputedEncoder {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Self::from_reader(BufReader::new(file), path)
    }

    pub fn from_reader(reader: impl BufRead, origin: &Path) -> Result<Self> {
        let mut enc = PrecomputedEncoder::default();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(format!("reading {}", origin.display()), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EmbeddingLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?;
            enc.insert(rec.key, &rec.vec)?;
        }
        Ok(enc)
    }

    pub fn insert(&mut self, key: String, vec: &[f64]) -> Result<()> {
        if self.vectors.is_empty() {
            self.dim = vec.len();
        } else if vec.len() != self.dim {
            return Err(Error::RaggedEmbeddings {
                key,
                expected: self.dim,
                found: vec.len(),
            });
        }
        self.vectors.insert(key, SparseVec::from_dense(vec));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&SparseVec> {
        self.vectors.get(key)
    }

    /// Writes every segment's encoding under `encoder` in the file format
    /// read by [`PrecomputedEncoder::load`].
    pub fn export<'a>(
        encoder: &dyn Encoder,
        segments: impl IntoIterator<Item = &'a Segment>,
        mut out: impl Write,
    ) -> Result<()> {
        for s in segments {
            let rec = EmbeddingLine {
                key: s.key(),
                vec: encoder.encode(s)?.to_dense(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n").map_err(|e| Error::io("writing embeddings", e))?;
        }
        Ok(())
    }
}

impl Encoder for PrecomputedEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, segment: &Segment) -> Result<SparseVec> {
        let key = segment.key();
        self.vectors.get(&key).cloned().ok_or(Error::MissingEmbedding(key))
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LevelDistributions, Target};
use crate::error::{Error, Result};
use crate::features::SparseVec;

/// Fully connected layer. Weights are stored input-major
/// (`w[i * out_dim + o]`) so a sparse input touches contiguous rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    #[serde(with = "super::b64")]
    pub w: Vec<f64>,
    #[serde(with = "super::b64")]
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
        }
    }

    /// Uniform in `[-limit, limit]` with the Glorot limit; zero biases.
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut d = Dense::zeros(in_dim, out_dim);
        for w in &mut d.w {
            *w = rng.gen_range(-limit..=limit);
        }
        d
    }

    pub fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }

    /// `out = b + W^T [sparse ; tail]`, where `tail` occupies the last rows.
    fn forward(&self, sparse: &SparseVec, tail: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.b);
        for (i, x) in sparse.iter() {
            axpy(x, self.row(i), out);
        }
        for (k, &x) in tail.iter().enumerate() {
            if x != 0.0 {
                axpy(x, self.row(sparse.dim + k), out);
            }
        }
    }

    fn forward_dense(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.b);
        for (i, &x) in input.iter().enumerate() {
            if x != 0.0 {
                axpy(x, self.row(i), out);
            }
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.out_dim..(i + 1) * self.out_dim]
    }

    /// Accumulates parameter gradients for `delta` (gradient at the output)
    /// into `grad` and returns the gradient with respect to `tail`.
    fn backward(&self, sparse: &SparseVec, tail: &[f64], delta: &[f64], grad: &mut Dense) -> Vec<f64> {
        for (g, d) in grad.b.iter_mut().zip(delta) {
            *g += d;
        }
        let out = self.out_dim;
        for (i, x) in sparse.iter() {
            axpy(x, delta, &mut grad.w[i * out..(i + 1) * out]);
        }
        let mut d_tail = vec![0.0; tail.len()];
        for (k, &x) in tail.iter().enumerate() {
            let i = sparse.dim + k;
            if x != 0.0 {
                axpy(x, delta, &mut grad.w[i * out..(i + 1) * out]);
            }
            d_tail[k] = dot(self.row(i), delta);
        }
        d_tail
    }

    fn backward_dense(&self, input: &[f64], delta: &[f64], grad: &mut Dense) -> Vec<f64> {
        for (g, d) in grad.b.iter_mut().zip(delta) {
            *g += d;
        }
        let out = self.out_dim;
        let mut d_in = vec![0.0; input.len()];
        for (i, &x) in input.iter().enumerate() {
            if x != 0.0 {
                axpy(x, delta, &mut grad.w[i * out..(i + 1) * out]);
            }
            d_in[i] = dot(self.row(i), delta);
        }
        d_in
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    /// Alphabet size of each output level.
    pub level_sizes: Vec<usize>,
    pub hidden: usize,
    pub dropout: f64,
    /// Feed each level's distribution to all deeper levels.
    pub cascade: bool,
    /// Per-level hidden layers; without them output layers read the input.
    pub specialization: bool,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.level_sizes.is_empty() || self.level_sizes.contains(&0) {
            return Err(Error::Config("every level needs a non-empty alphabet".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if self.specialization && self.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        Ok(())
    }

    /// Width of the cascaded distributions appended at level `d`.
    pub fn cascade_dim(&self, d: usize) -> usize {
        if self.cascade {
            self.level_sizes[..d].iter().sum()
        } else {
            0
        }
    }

    pub fn level_input_dim(&self, d: usize) -> usize {
        self.input_dim + self.cascade_dim(d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelLayers {
    pub hidden: Option<Dense>,
    pub output: Dense,
}

/// Per-level specialization and output layers over a shared input, with
/// optional cascading of earlier levels' distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub config: NetworkConfig,
    pub levels: Vec<LevelLayers>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    /// Cascaded input of each level.
    tails: Vec<Vec<f64>>,
    /// Hidden pre-activations.
    pre: Vec<Vec<f64>>,
    /// Dropout scale per hidden unit (0 or 1/(1-p)); empty at inference.
    masks: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
    pub logits: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
}

impl Network {
    pub fn new(config: NetworkConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let levels = (0..config.level_sizes.len())
            .map(|d| {
                let in_dim = config.level_input_dim(d);
                let out = config.level_sizes[d];
                if config.specialization {
                    LevelLayers {
                        hidden: Some(Dense::init(in_dim, config.hidden, rng)),
                        output: Dense::init(config.hidden, out, rng),
                    }
                } else {
                    LevelLayers {
                        hidden: None,
                        output: Dense::init(in_dim, out, rng),
                    }
                }
            })
            .collect();
        Ok(Network { config, levels })
    }

    /// Same shape, all parameters zero.
    pub fn zeros_like(&self) -> Self {
        Network {
            config: self.config.clone(),
            levels: self
                .levels
                .iter()
                .map(|l| LevelLayers {
                    hidden: l.hidden.as_ref().map(|h| Dense::zeros(h.in_dim, h.out_dim)),
                    output: Dense::zeros(l.output.in_dim, l.output.out_dim),
                })
                .collect(),
        }
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Parameter blocks in a fixed order: per level hidden w, b, output w, b.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for l in &self.levels {
            if let Some(h) = &l.hidden {
                v.push(&h.w);
                v.push(&h.b);
            }
            v.push(&l.output.w);
            v.push(&l.output.b);
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.levels {
            if let Some(h) = &mut l.hidden {
                v.push(&mut h.w);
                v.push(&mut h.b);
            }
            v.push(&mut l.output.w);
            v.push(&mut l.output.b);
        }
        v
    }

    fn check_input(&self, x: &SparseVec) -> Result<()> {
        if x.dim != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                found: x.dim,
            });
        }
        Ok(())
    }

    /// Inference-mode forward pass.
    pub fn forward(&self, x: &SparseVec) -> Result<LevelDistributions> {
        self.check_input(x)?;
        Ok(LevelDistributions(self.trace::<rand_chacha::ChaCha8Rng>(x, None).probs))
    }

    /// Forward pass; dropout is applied when `dropout_rng` is given.
    pub fn trace<R: Rng>(&self, x: &SparseVec, mut dropout_rng: Option<&mut R>) -> Trace {
        let n = self.n_levels();
        let mut t = Trace::default();
        let mut cascade: Vec<f64> = Vec::new();
        let p = self.config.dropout;
        for d in 0..n {
            let layers = &self.levels[d];
            let tail = if self.config.cascade {
                cascade.clone()
            } else {
                Vec::new()
            };
            let mut logits = Vec::new();
            match &layers.hidden {
                Some(h) => {
                    let mut pre = Vec::new();
                    h.forward(x, &tail, &mut pre);
                    let mask: Vec<f64> = match dropout_rng.as_deref_mut() {
                        Some(rng) if p > 0.0 => (0..pre.len())
                            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) })
                            .collect(),
                        _ => Vec::new(),
                    };
                    let act: Vec<f64> = pre
                        .iter()
                        .enumerate()
                        .map(|(i, &z)| {
                            let a = z.max(0.0);
                            if mask.is_empty() {
                                a
                            } else {
                                a * mask[i]
                            }
                        })
                        .collect();
                    layers.output.forward_dense(&act, &mut logits);
                    t.pre.push(pre);
                    t.masks.push(mask);
                    t.hidden.push(act);
                }
                None => {
                    layers.output.forward(x, &tail, &mut logits);
                    t.pre.push(Vec::new());
                    t.masks.push(Vec::new());
                    t.hidden.push(Vec::new());
                }
            }
            let probs = softmax(&logits);
            cascade.extend_from_slice(&probs);
            t.tails.push(tail);
            t.logits.push(logits);
            t.probs.push(probs);
        }
        t
    }

    /// Sum of per-level cross-entropies for one example, accumulating the
    /// gradient (scaled by `scale`) into `grad`.
    pub fn backward(&self, x: &SparseVec, target: &Target, t: &Trace, scale: f64, grad: &mut Network) -> f64 {
        let n = self.n_levels();
        let loss = super::loss_from_probs(&t.probs, target);
        // gradient of the loss with respect to each level's probabilities,
        // flowing back from the levels it cascades into
        let mut d_probs: Vec<Vec<f64>> = t.probs.iter().map(|p| vec![0.0; p.len()]).collect();
        for d in (0..n).rev() {
            let p = &t.probs[d];
            let g = &d_probs[d];
            let gp: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
            let delta: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(c, &pc)| {
                    let ce = pc - if c == target[d] { 1.0 } else { 0.0 };
                    scale * ce + pc * (g[c] - gp)
                })
                .collect();
            let layers = &self.levels[d];
            let gl = &mut grad.levels[d];
            let d_tail = match &layers.hidden {
                Some(h) => {
                    let d_act = layers.output.backward_dense(&t.hidden[d], &delta, &mut gl.output);
                    let mask = &t.masks[d];
                    let d_pre: Vec<f64> = d_act
                        .iter()
                        .enumerate()
                        .map(|(i, &g)| {
                            if t.pre[d][i] <= 0.0 {
                                0.0
                            } else if mask.is_empty() {
                                g
                            } else {
                                g * mask[i]
                            }
                        })
                        .collect();
                    h.backward(x, &t.tails[d], &d_pre, gl.hidden.as_mut().expect("same shape"))
                }
                None => layers.output.backward(x, &t.tails[d], &delta, &mut gl.output),
            };
            if !self.config.cascade {
                continue;
            }
            let mut offset = 0;
            for (e, dp) in d_probs.iter_mut().enumerate().take(d) {
                let k = self.config.level_sizes[e];
                for (a, b) in dp.iter_mut().zip(&d_tail[offset..offset + k]) {
                    *a += b;
                }
                offset += k;
            }
        }
        loss
    }

    /// Mean loss over `batch` and its exact gradient (dropout off).
    pub fn gradients(&self, batch: &[(SparseVec, Target)]) -> Result<(f64, Network)> {
        let mut grad = self.zeros_like();
        let mut total = 0.0;
        let scale = 1.0 / batch.len().max(1) as f64;
        for (x, target) in batch {
            self.check_input(x)?;
            let t = self.trace::<rand_chacha::ChaCha8Rng>(x, None);
            total += self.backward(x, target, &t, scale, &mut grad);
        }
        Ok((total * scale, grad))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn config(cascade: bool, specialization: bool) -> NetworkConfig {
        NetworkConfig {
            input_dim: 7,
            level_sizes: vec![3, 4, 2],
            hidden: 5,
            dropout: 0.5,
            cascade,
            specialization,
        }
    }

    fn input(rng: &mut ChaCha8Rng, dim: usize) -> SparseVec {
        let v: Vec<f64> = (0..dim)
            .map(|_| {
                if rng.gen::<f64>() < 0.3 {
                    0.0
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            })
            .collect();
        SparseVec::from_dense(&v)
    }

    #[test]
    fn softmax_is_distribution() {
        let p = softmax(&[1000.0, -1000.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Network::new(config(true, true), &mut rng).unwrap();
        assert!(matches!(
            net.forward(&SparseVec::zeros(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn bad_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = config(true, true);
        c.dropout = 1.0;
        assert!(Network::new(c, &mut rng).is_err());
        let mut c = config(true, true);
        c.level_sizes = vec![];
        assert!(Network::new(c, &mut rng).is_err());
    }

    #[test]
    fn dropout_only_in_training() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::new(config(true, true), &mut rng).unwrap();
        let x = input(&mut rng, 7);
        let a = net.trace::<ChaCha8Rng>(&x, None).probs;
        let b = net.trace::<ChaCha8Rng>(&x, None).probs;
        assert_eq!(a, b);
        let mut drop = ChaCha8Rng::seed_from_u64(2);
        let c = net.trace(&x, Some(&mut drop)).probs;
        assert_ne!(a, c);
    }

    #[test]
    fn no_specialization_reads_input_directly() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Network::new(config(true, false), &mut rng).unwrap();
        for (d, l) in net.levels.iter().enumerate() {
            assert!(l.hidden.is_none());
            assert_eq!(l.output.in_dim, net.config.level_input_dim(d));
        }
        assert_eq!(net.levels[0].output.in_dim, 7);
    }

    #[test]
    fn cascade_changes_input_width() {
        let c = config(true, true);
        let off = config(false, true);
        assert_eq!(c.level_input_dim(0), 7);
        assert_eq!(c.level_input_dim(1), 7 + 3);
        assert_eq!(c.level_input_dim(2), 7 + 3 + 4);
        for d in 0..3 {
            assert_eq!(off.level_input_dim(d), 7);
        }
    }
}

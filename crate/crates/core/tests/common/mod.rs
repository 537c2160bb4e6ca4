#![allow(dead_code)]

use std::sync::Arc;

use hcfr_core::corpus::Dialog;
use hcfr_core::features::{featurize_sparse, Encoder, FeaturizerConfig, HashingEncoder, SparseVec};
use hcfr_core::harness::{Approach, ExperimentConfig, FoldContext, SegmentPrediction};
use hcfr_core::metrics::EvalExample;
use hcfr_core::model::{Network, NetworkConfig, Target, TrainConfig};
use hcfr_core::taxonomy::{Label, LabelPath, Taxonomy};
use hcfr_core::{LabelSpace, LevelDistributions, Scenario};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn space(gated: bool) -> LabelSpace {
    LabelSpace::new(Arc::new(Taxonomy::bundled()), gated)
}

/// Random distributions; `sharp` raises raw weights to a power so some
/// levels are peaked and others flat.
pub fn random_dists(space: &LabelSpace, rng: &mut impl Rng, sharp: bool) -> LevelDistributions {
    LevelDistributions(
        space
            .alphabet_sizes()
            .iter()
            .map(|&k| {
                let pow = if sharp { rng.gen_range(1.0..6.0) } else { 1.0 };
                let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>().powf(pow)).collect();
                let sum: f64 = raw.iter().sum::<f64>().max(1e-300);
                raw.into_iter().map(|x| x / sum).collect()
            })
            .collect(),
    )
}

/// Every valid path, built straight from the node chains rather than from
/// the label space.
pub fn oracle_paths(taxonomy: &Taxonomy, gated: bool) -> Vec<LabelPath> {
    let depth = taxonomy.depth();
    let mut out = Vec::new();
    if gated {
        out.push(LabelPath(vec![Label::None; depth + 1]));
    }
    for (id, _) in taxonomy.nodes() {
        let mut chain = vec![id];
        let mut cur = taxonomy.node(id).parent;
        while let Some(p) = cur {
            chain.push(p);
            cur = taxonomy.node(p).parent;
        }
        chain.reverse();
        let mut labels = Vec::new();
        if gated {
            labels.push(Label::Task);
        }
        labels.extend(chain.into_iter().map(Label::Function));
        labels.resize(depth + usize::from(gated), Label::None);
        out.push(LabelPath(labels));
    }
    out
}

/// Product of the per-level probabilities of `path`, found by scanning the
/// alphabet for each label.
pub fn oracle_prob(space: &LabelSpace, dists: &LevelDistributions, path: &LabelPath) -> f64 {
    path.labels()
        .iter()
        .enumerate()
        .map(|(pos, l)| {
            let c = space
                .alphabet(pos)
                .iter()
                .position(|a| a == l)
                .expect("label in alphabet");
            dists.0[pos][c]
        })
        .product()
}

/// Structural check of a path against the taxonomy.
pub fn path_ok(taxonomy: &Taxonomy, path: &LabelPath, gated: bool) -> bool {
    let labels = path.labels();
    if labels.len() != taxonomy.depth() + usize::from(gated) {
        return false;
    }
    let body = if gated {
        match labels[0] {
            Label::None => return labels.iter().all(|l| l.is_none()),
            Label::Task => &labels[1..],
            Label::Function(_) => return false,
        }
    } else {
        labels
    };
    let mut parent = None;
    let mut ended = false;
    for (d, l) in body.iter().enumerate() {
        match l {
            Label::Task => return false,
            Label::None => {
                if d == 0 {
                    return false;
                }
                ended = true;
            }
            Label::Function(id) => {
                let n = taxonomy.node(*id);
                if ended || n.level != d + 1 || n.parent != parent {
                    return false;
                }
                parent = Some(*id);
            }
        }
    }
    true
}

pub fn random_batch(space: &LabelSpace, dim: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<(SparseVec, Target)> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim)
                .map(|_| {
                    if rng.gen_bool(0.6) {
                        rng.gen_range(-1.5..1.5)
                    } else {
                        0.0
                    }
                })
                .collect();
            let path = &space.valid_classes()[rng.gen_range(0..space.valid_classes().len())];
            (SparseVec::from_dense(&v), path.clone())
        })
        .collect()
}

/// Largest relative error between analytic and central-difference gradients.
pub fn max_gradient_error(net: &Network, batch: &[(SparseVec, Target)]) -> f64 {
    let (_, grad) = net.gradients(batch).unwrap();
    let analytic: Vec<f64> = grad.params().iter().flat_map(|p| p.iter().copied()).collect();
    let mut probe = net.clone();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut k = 0;
    let n_blocks = probe.params().len();
    for b in 0..n_blocks {
        let len = probe.params()[b].len();
        for i in 0..len {
            let orig = probe.params_mut()[b][i];
            probe.params_mut()[b][i] = orig + h;
            let up = probe.gradients(batch).unwrap().0;
            probe.params_mut()[b][i] = orig - h;
            let down = probe.gradients(batch).unwrap().0;
            probe.params_mut()[b][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max(err);
            k += 1;
        }
    }
    worst
}

pub fn hier_config(space: &LabelSpace, input_dim: usize, cascade: bool, specialization: bool) -> NetworkConfig {
    NetworkConfig {
        input_dim,
        level_sizes: space.alphabet_sizes(),
        hidden: 5,
        dropout: 0.5,
        cascade,
        specialization,
    }
}

/// Twenty segments whose texts carry distinct cue words, one gold path each.
pub fn separable_set(space: &LabelSpace, features: &FeaturizerConfig) -> Vec<(SparseVec, usize)> {
    let n_paths = space.valid_paths().len();
    (0..20)
        .map(|i| {
            let text = format!("cue{i} token{} marker{}", i * 3, i % 4);
            (featurize_sparse(&text, features), (i * 5) % n_paths)
        })
        .collect()
}

pub fn overfit_features() -> FeaturizerConfig {
    FeaturizerConfig {
        hash_dim: 256,
        ..Default::default()
    }
}

pub fn first_perfect_epoch(history: &[hcfr_core::model::EpochRecord]) -> Option<usize> {
    history.iter().find(|r| r.val_score == 100.0).map(|r| r.epoch)
}

pub fn taxonomy() -> Arc<Taxonomy> {
    Arc::new(Taxonomy::bundled())
}

pub fn small_config(approach: Approach, scenario: Scenario) -> ExperimentConfig {
    ExperimentConfig {
        approach,
        scenario,
        runs: 1,
        seed: 3,
        train: TrainConfig {
            hidden: 12,
            max_epochs: 12,
            patience: 3,
            ..Default::default()
        },
        features: FeaturizerConfig {
            hash_dim: 128,
            ..Default::default()
        },
        ..Default::default()
    }
}

pub fn encoder(cfg: &ExperimentConfig) -> HashingEncoder {
    HashingEncoder::new(cfg.features.clone()).unwrap()
}

/// Replaces every gold label with a different valid function.
pub fn corrupt(dialog: &Dialog, taxonomy: &Taxonomy, rng: &mut ChaCha8Rng) -> Dialog {
    let paths = taxonomy.valid_paths();
    let mut d = dialog.clone();
    for s in &mut d.segments {
        loop {
            let p = paths.choose(rng).unwrap().clone();
            if p != s.gold {
                s.gold = p;
                break;
            }
        }
    }
    d
}

pub struct Spaces {
    pub space: LabelSpace,
    pub inner: LabelSpace,
}

pub fn spaces(t: &Arc<Taxonomy>, scenario: Scenario) -> Spaces {
    Spaces {
        space: LabelSpace::new(t.clone(), scenario.gated()),
        inner: LabelSpace::new(t.clone(), false),
    }
}

pub fn ctx<'a>(s: &'a Spaces, cfg: &'a ExperimentConfig, enc: &dyn Encoder) -> FoldContext<'a> {
    FoldContext {
        space: &s.space,
        inner: &s.inner,
        approach: cfg.approach,
        builder: cfg.builder().unwrap(),
        train: &cfg.train,
        context: cfg.inference_context,
        encoder_dim: enc.dim(),
    }
}

pub fn preds_key(p: &[SegmentPrediction]) -> Vec<(String, usize, String, u64)> {
    p.iter()
        .map(|p| (p.dialog.clone(), p.index, format!("{:?}", p.pred), p.prob.to_bits()))
        .collect()
}

pub fn ex(s: &LabelSpace, gold: &str, pred: &str) -> EvalExample {
    let t = s.taxonomy();
    EvalExample::new(t.path_of(gold).unwrap(), t.path_of(pred).unwrap())
}

/// Prediction set whose fourth level realizes known L4 rates:
/// 616 labeled (358 hits, 171 false None, 87 confusions) and 502 None
/// (433 kept None).
pub fn l4_reference_set(s: &LabelSpace) -> Vec<EvalExample> {
    let mut v = Vec::new();
    v.extend((0..358).map(|_| ex(s, "Answer", "Answer")));
    v.extend((0..171).map(|_| ex(s, "Answer", "Inform")));
    v.extend((0..87).map(|_| ex(s, "Answer", "Agreement")));
    v.extend((0..433).map(|_| ex(s, "Inform", "Inform")));
    v.extend((0..69).map(|_| ex(s, "Inform", "Agreement")));
    v
}

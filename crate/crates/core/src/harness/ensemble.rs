use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Approach, ContextSource, ModelBuilder};
use crate::corpus::{context_features, Dialog};
use crate::decode::{decode, flat_decode, map_decode, DecodeMode, Decoded};
use crate::error::{Error, Result};
use crate::features::{Encoder, SparseVec};
use crate::labels::LabelSpace;
use crate::model::{train, Example, FlatModel, GateModel, Network, TrainConfig};
use crate::rng;
use crate::taxonomy::{Label, LabelPath};

/// A dialog with cached segment encodings and gold-history inputs.
#[derive(Clone, Debug)]
pub struct DialogInputs<'a> {
    pub dialog: &'a Dialog,
    pub base: Vec<SparseVec>,
    /// Gold paths in the experiment space.
    pub gold: Vec<LabelPath>,
    /// Base encoding followed by the gold-history context.
    pub x: Vec<SparseVec>,
}

impl<'a> DialogInputs<'a> {
    /// Model input for segment `i` given the paths used as history.
    pub fn input(&self, space: &LabelSpace, i: usize, history: &[LabelPath]) -> SparseVec {
        let ctx = context_features(space, self.dialog, i, history);
        self.base[i].concat(&SparseVec::from_dense(&ctx))
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }
}

pub fn build_inputs<'a>(space: &LabelSpace, dialog: &'a Dialog, encoder: &dyn Encoder) -> Result<DialogInputs<'a>> {
    let base = dialog
        .segments
        .iter()
        .map(|s| encoder.encode(s))
        .collect::<Result<Vec<_>>>()?;
    if let Some(b) = base.iter().find(|b| b.dim != encoder.dim()) {
        return Err(Error::DimensionMismatch {
            expected: encoder.dim(),
            found: b.dim,
        });
    }
    let gold: Vec<LabelPath> = dialog.segments.iter().map(|s| space.lift(&s.gold)).collect();
    let mut inputs = DialogInputs {
        dialog,
        base,
        gold,
        x: Vec::new(),
    };
    inputs.x = (0..inputs.len())
        .map(|i| inputs.input(space, i, &inputs.gold))
        .collect();
    Ok(inputs)
}

/// Shared settings for training and applying ensemble members.
#[derive(Clone, Copy, Debug)]
pub struct FoldContext<'a> {
    /// Experiment label space (gated in the all-segments scenario).
    pub space: &'a LabelSpace,
    /// Ungated space over the taxonomy, used by the two-step inner model.
    pub inner: &'a LabelSpace,
    pub approach: Approach,
    pub builder: ModelBuilder,
    pub train: &'a TrainConfig,
    pub context: ContextSource,
    /// Width of the encoder output (before context).
    pub encoder_dim: usize,
}

impl FoldContext<'_> {
    pub fn input_dim(&self) -> usize {
        self.encoder_dim + crate::corpus::context_dim(self.space)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Member {
    Hierarchical(Network),
    Flat(FlatModel),
    TwoStep { gate: GateModel, hier: Network },
}

/// A member's decode together with the distributions it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct MemberOutput {
    pub decoded: Decoded,
    pub dists: Vec<Vec<f64>>,
}

impl Member {
    pub fn predict(
        &self,
        x: &SparseVec,
        space: &LabelSpace,
        inner: &LabelSpace,
        mode: DecodeMode,
    ) -> Result<MemberOutput> {
        match self {
            Member::Hierarchical(net) => {
                let d = net.forward(x)?;
                Ok(MemberOutput {
                    decoded: decode(&d, space, mode),
                    dists: d.0,
                })
            }
            Member::Flat(m) => {
                let p = m.forward_flat(x)?;
                Ok(MemberOutput {
                    decoded: flat_decode(&p, space),
                    dists: vec![p],
                })
            }
            Member::TwoStep { gate, hier } => {
                let g = gate.forward_gate(x)?;
                let d = hier.forward(x)?;
                let decoded = two_step_predict(g, &d, space, inner, mode)?;
                let mut dists = vec![g.to_vec()];
                dists.extend(d.0);
                Ok(MemberOutput { decoded, dists })
            }
        }
    }
}

/// Combines a `[P(Task), P(None)]` gate output with the inner model's
/// distributions. A `None` decision yields the all-`None` path with
/// probability `P(None)`; otherwise the inner decode is prefixed with `Task`
/// and its probability scaled by `P(Task)`.
pub fn two_step_predict(
    gate: [f64; 2],
    inner_dists: &crate::model::LevelDistributions,
    space: &LabelSpace,
    inner: &LabelSpace,
    mode: DecodeMode,
) -> Result<Decoded> {
    if !space.is_gated() || inner.is_gated() {
        return Err(Error::Config(
            "two-step prediction needs the all-segments label space".into(),
        ));
    }
    let floor = crate::model::PROB_FLOOR;
    if gate[GateModel::NONE] > gate[GateModel::TASK] {
        let log_prob = gate[GateModel::NONE].max(floor).ln();
        return Ok(Decoded {
            path: LabelPath::all_none(space.n_levels()),
            log_prob,
            prob: log_prob.exp(),
        });
    }
    let d = decode(inner_dists, inner, mode);
    let mut labels = Vec::with_capacity(space.n_levels());
    labels.push(Label::Task);
    labels.extend_from_slice(d.path.labels());
    let log_prob = gate[GateModel::TASK].max(floor).ln() + d.log_prob;
    Ok(Decoded {
        path: LabelPath(labels),
        log_prob,
        prob: log_prob.exp(),
    })
}

fn hier_examples(space: &LabelSpace, dialogs: &[&DialogInputs]) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for d in dialogs {
        for (x, g) in d.x.iter().zip(&d.gold) {
            out.push(Example {
                x: x.clone(),
                target: space.classes(g)?,
            });
        }
    }
    Ok(out)
}

fn flat_examples(space: &LabelSpace, dialogs: &[&DialogInputs]) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for d in dialogs {
        for (x, g) in d.x.iter().zip(&d.gold) {
            let c = space
                .path_index(g)
                .ok_or_else(|| Error::InvalidPath(format!("{g:?}")))?;
            out.push(Example {
                x: x.clone(),
                target: vec![c],
            });
        }
    }
    Ok(out)
}

fn gate_class(path: &LabelPath) -> usize {
    if path.labels()[0] == Label::Task {
        GateModel::TASK
    } else {
        GateModel::NONE
    }
}

fn gate_examples(dialogs: &[&DialogInputs]) -> Vec<Example> {
    dialogs
        .iter()
        .flat_map(|d| d.x.iter().zip(&d.gold))
        .map(|(x, g)| Example {
            x: x.clone(),
            target: vec![gate_class(g)],
        })
        .collect()
}

/// Task-function segments only, with targets in the ungated space.
fn inner_examples(ctx: &FoldContext, dialogs: &[&DialogInputs]) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for d in dialogs {
        for (x, g) in d.x.iter().zip(&d.gold) {
            if gate_class(g) == GateModel::TASK {
                out.push(Example {
                    x: x.clone(),
                    target: ctx.inner.classes(&ctx.space.lower(g))?,
                });
            }
        }
    }
    Ok(out)
}

fn percent(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * hits as f64 / n as f64
    }
}

fn fit(net: &mut Network, data: &[Example], cfg: &TrainConfig, score: impl FnMut(&Network) -> f64) -> Result<()> {
    let out = train(net, data, cfg, score)?;
    log::debug!(
        "trained {} epochs, best epoch {} (validation {:.2})",
        out.history.len(),
        out.best_epoch,
        out.best_score
    );
    Ok(())
}

/// Trains one member on `train` dialogs (gold plus extra), early-stopped on
/// the exact match ratio over `val`. Validation uses gold history and MAP or
/// argmax decoding regardless of the configured decode mode.
pub fn train_member(ctx: &FoldContext, train: &[&DialogInputs], val: &DialogInputs, seed: u64) -> Result<Member> {
    let input_dim = ctx.input_dim();
    let cfg_for = |stream: &str| TrainConfig {
        seed: rng::derive_seed(seed, stream, 0),
        ..ctx.train.clone()
    };
    let init = |stream: &str| rng::stream(seed, stream, 1);
    match ctx.approach {
        Approach::Hierarchical => {
            let space = ctx.space;
            let mut net = Network::new(ctx.builder.hierarchical(space, input_dim, ctx.train), &mut init("hier"))?;
            let data = hier_examples(space, train)?;
            fit(&mut net, &data, &cfg_for("hier"), |m| {
                let hits = val
                    .x
                    .iter()
                    .zip(&val.gold)
                    .filter(|(x, g)| m.forward(x).is_ok_and(|d| &map_decode(&d, space).path == *g))
                    .count();
                percent(hits, val.len())
            })?;
            Ok(Member::Hierarchical(net))
        }
        Approach::Flat => {
            let space = ctx.space;
            let mut net = Network::new(ctx.builder.flat(space, input_dim, ctx.train), &mut init("flat"))?;
            let data = flat_examples(space, train)?;
            fit(&mut net, &data, &cfg_for("flat"), |m| {
                let hits = val
                    .x
                    .iter()
                    .zip(&val.gold)
                    .filter(|(x, g)| m.forward(x).is_ok_and(|d| &flat_decode(&d.0[0], space).path == *g))
                    .count();
                percent(hits, val.len())
            })?;
            Ok(Member::Flat(FlatModel(net)))
        }
        Approach::TwoStep => {
            if !ctx.space.is_gated() {
                return Err(Error::Config(
                    "the two-step approach requires the all-segments scenario".into(),
                ));
            }
            let mut gate = Network::new(ctx.builder.gate(input_dim, ctx.train), &mut init("gate"))?;
            fit(&mut gate, &gate_examples(train), &cfg_for("gate"), |m| {
                let hits = val
                    .x
                    .iter()
                    .zip(&val.gold)
                    .filter(|(x, g)| {
                        m.forward(x).is_ok_and(|d| {
                            let task = d.0[0][GateModel::TASK] >= d.0[0][GateModel::NONE];
                            task == (gate_class(g) == GateModel::TASK)
                        })
                    })
                    .count();
                percent(hits, val.len())
            })?;

            let inner = ctx.inner;
            let mut hier = Network::new(
                ctx.builder.hierarchical(inner, input_dim, ctx.train),
                &mut init("inner"),
            )?;
            let val_task: Vec<(&SparseVec, LabelPath)> = val
                .x
                .iter()
                .zip(&val.gold)
                .filter(|(_, g)| gate_class(g) == GateModel::TASK)
                .map(|(x, g)| (x, ctx.space.lower(g)))
                .collect();
            fit(&mut hier, &inner_examples(ctx, train)?, &cfg_for("inner"), |m| {
                let hits = val_task
                    .iter()
                    .filter(|(x, g)| m.forward(x).is_ok_and(|d| map_decode(&d, inner).path == *g))
                    .count();
                percent(hits, val_task.len())
            })?;
            Ok(Member::TwoStep {
                gate: GateModel(gate),
                hier,
            })
        }
    }
}

/// One member's ballot.
#[derive(Clone, Debug, PartialEq)]
pub struct Vote {
    pub path: LabelPath,
    pub weight: f64,
}

/// Weighted majority vote: weights are summed per distinct path and the
/// heaviest path wins. Exact ties are broken by `rng` over the tied paths in
/// label-space order. Returns the winner and its share of the total weight.
pub fn vote(votes: &[Vote], space: &LabelSpace, rng: &mut impl Rng) -> Result<(LabelPath, f64)> {
    if votes.is_empty() {
        return Err(Error::Config("empty ensemble".into()));
    }
    let mut by_path: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for v in votes {
        let idx = space
            .path_index(&v.path)
            .ok_or_else(|| Error::InvalidPath(format!("{:?}", v.path)))?;
        by_path.entry(idx).or_default().push(v.weight);
    }
    // order-independent sums
    let totals: Vec<(usize, f64)> = by_path
        .into_iter()
        .map(|(idx, mut ws)| {
            ws.sort_by(f64::total_cmp);
            (idx, ws.iter().sum())
        })
        .collect();
    let best = totals.iter().map(|&(_, w)| w).fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = totals.iter().filter(|&&(_, w)| w == best).map(|&(i, _)| i).collect();
    let winner = if tied.len() == 1 {
        tied[0]
    } else {
        tied[rng.gen_range(0..tied.len())]
    };
    let mut all: Vec<f64> = votes.iter().map(|v| v.weight).collect();
    all.sort_by(f64::total_cmp);
    let total: f64 = all.iter().sum();
    let share = if total > 0.0 {
        best / total
    } else {
        1.0 / tied.len() as f64
    };
    Ok((space.valid_paths()[winner].clone(), share))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentPrediction {
    pub dialog: String,
    pub corpus: String,
    pub index: usize,
    pub gold: LabelPath,
    pub pred: LabelPath,
    /// Voted path's share of the ensemble weight; the member's own path
    /// probability for a single member.
    pub prob: f64,
    pub log_prob: f64,
    /// Distributions of the first member.
    pub dists: Vec<Vec<f64>>,
}

/// Predicts a dialog segment by segment. With predicted context, each
/// segment's history is the ensemble's earlier decisions.
pub fn predict_dialog(
    ctx: &FoldContext,
    members: &[Member],
    inputs: &DialogInputs,
    seed: u64,
) -> Result<Vec<SegmentPrediction>> {
    let mut history: Vec<LabelPath> = Vec::with_capacity(inputs.len());
    let mut out = Vec::with_capacity(inputs.len());
    for (i, seg) in inputs.dialog.segments.iter().enumerate() {
        let x = match ctx.context {
            ContextSource::Predicted => inputs.input(ctx.space, i, &history),
            ContextSource::Gold => inputs.x[i].clone(),
        };
        let outputs = members
            .iter()
            .map(|m| m.predict(&x, ctx.space, ctx.inner, ctx.builder.decode))
            .collect::<Result<Vec<_>>>()?;
        let (pred, prob, log_prob) = if outputs.len() == 1 {
            let d = &outputs[0].decoded;
            (d.path.clone(), d.prob, d.log_prob)
        } else {
            let votes: Vec<Vote> = outputs
                .iter()
                .map(|o| Vote {
                    path: o.decoded.path.clone(),
                    weight: o.decoded.prob,
                })
                .collect();
            let mut ties = ChaCha8Rng::seed_from_u64(rng::derive_seed(
                seed,
                &format!("ties/{}", seg.dialog_id),
                seg.index as u64,
            ));
            let (p, share) = vote(&votes, ctx.space, &mut ties)?;
            (p, share, share.max(crate::model::PROB_FLOOR).ln())
        };
        history.push(pred.clone());
        out.push(SegmentPrediction {
            dialog: seg.dialog_id.clone(),
            corpus: inputs.dialog.corpus_id.clone(),
            index: seg.index,
            gold: inputs.gold[i].clone(),
            pred,
            prob,
            log_prob,
            dists: outputs.into_iter().next().map(|o| o.dists).unwrap_or_default(),
        });
    }
    Ok(out)
}

/// One member per gold training dialog: each is early-stopped on its dialog
/// and trained on the others plus `extra`.
pub fn train_ensemble(
    ctx: &FoldContext,
    fold_name: &str,
    train: &[&DialogInputs],
    extra: &[&DialogInputs],
    seed: u64,
) -> Result<Vec<Member>> {
    if train.len() < 2 {
        return Err(Error::TooFewFolds(format!(
            "fold {fold_name:?} has {} gold training dialogs, need at least 2",
            train.len()
        )));
    }
    train
        .par_iter()
        .map(|val| {
            let rest: Vec<&DialogInputs> = train
                .iter()
                .filter(|d| d.dialog.dialog_id != val.dialog.dialog_id)
                .chain(extra.iter().filter(|_| ctx.builder.use_extra))
                .copied()
                .collect();
            let member_seed = rng::derive_seed(seed, &format!("member/{fold_name}/{}", val.dialog.dialog_id), 0);
            log::info!("fold {fold_name}: member validated on {}", val.dialog.dialog_id);
            train_member(ctx, &rest, val, member_seed)
        })
        .collect()
}

/// Trains the fold's ensemble and predicts every test dialog by vote.
pub fn run_fold(
    ctx: &FoldContext,
    fold_name: &str,
    train: &[&DialogInputs],
    extra: &[&DialogInputs],
    test: &[&DialogInputs],
    seed: u64,
) -> Result<Vec<SegmentPrediction>> {
    let members = train_ensemble(ctx, fold_name, train, extra, seed)?;
    let mut out = Vec::new();
    for t in test {
        out.extend(predict_dialog(ctx, &members, t, seed)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::LevelDistributions;
    use crate::taxonomy::Taxonomy;

    fn spaces() -> (LabelSpace, LabelSpace) {
        let t = Arc::new(Taxonomy::bundled());
        (LabelSpace::new(t.clone(), true), LabelSpace::new(t, false))
    }

    fn one_hot(space: &LabelSpace, path: &LabelPath) -> LevelDistributions {
        let classes = space.classes(path).unwrap();
        LevelDistributions(
            space
                .alphabet_sizes()
                .iter()
                .zip(classes)
                .map(|(&k, c)| {
                    let mut v = vec![0.0; k];
                    v[c] = 1.0;
                    v
                })
                .collect(),
        )
    }

    #[test]
    fn summed_weights_decide_vote() {
        let (_, s) = spaces();
        let a = s.valid_paths()[1].clone();
        let b = s.valid_paths()[4].clone();
        let votes = vec![
            Vote {
                path: a.clone(),
                weight: 0.3,
            },
            Vote { path: a, weight: 0.3 },
            Vote {
                path: b.clone(),
                weight: 0.7,
            },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(vote(&votes, &s, &mut rng).unwrap().0, b);
    }

    #[test]
    fn single_vote_wins() {
        let (_, s) = spaces();
        let a = s.valid_paths()[7].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (p, share) = vote(
            &[Vote {
                path: a.clone(),
                weight: 0.2,
            }],
            &s,
            &mut rng,
        )
        .unwrap();
        assert_eq!(p, a);
        assert_eq!(share, 1.0);
    }

    #[test]
    fn ties_are_seeded() {
        let (_, s) = spaces();
        let votes: Vec<Vote> = (0..4)
            .map(|i| Vote {
                path: s.valid_paths()[i].clone(),
                weight: 0.5,
            })
            .collect();
        let pick = |seed| vote(&votes, &s, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap().0;
        assert_eq!(pick(3), pick(3));
        let mut reversed = votes.clone();
        reversed.reverse();
        for seed in 0..20 {
            let r = vote(&reversed, &s, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap().0;
            assert_eq!(r, pick(seed));
        }
        let winners: std::collections::HashSet<_> = (0..50).map(pick).collect();
        assert!(winners.len() > 1);
    }

    #[test]
    fn gate_none_dominates() {
        let (g, inner) = spaces();
        let answer = inner.taxonomy().path_of("Answer").unwrap();
        let d = two_step_predict([0.1, 0.9], &one_hot(&inner, &answer), &g, &inner, DecodeMode::Map).unwrap();
        assert!(d.path.is_all_none());
        assert_eq!(d.path.len(), 7);
        assert!((d.prob - 0.9).abs() < 1e-12);
    }

    #[test]
    fn gate_task_prefixes_inner_path() {
        let (g, inner) = spaces();
        let answer = inner.taxonomy().path_of("Answer").unwrap();
        let d = two_step_predict([1.0, 0.0], &one_hot(&inner, &answer), &g, &inner, DecodeMode::Map).unwrap();
        assert_eq!(d.path, g.lift(&answer));
        assert_eq!(d.prob, 1.0);
    }

    #[test]
    fn gate_error_is_uncorrectable() {
        use crate::metrics::{set_counts, EvalExample};
        let (g, inner) = spaces();
        let answer = inner.taxonomy().path_of("Answer").unwrap();
        let d = two_step_predict([0.2, 0.8], &one_hot(&inner, &answer), &g, &inner, DecodeMode::Map).unwrap();
        let e = EvalExample::new(g.lift(&answer), d.path);
        let (inter, _, gold) = set_counts(&[e]);
        assert_eq!(inter, 0);
        assert_eq!(gold, 4);
    }

    #[test]
    fn two_step_needs_gated_space() {
        let (_, inner) = spaces();
        let d = one_hot(&inner, &inner.valid_paths()[0]);
        assert!(two_step_predict([1.0, 0.0], &d, &inner, &inner, DecodeMode::Map).is_err());
    }
}

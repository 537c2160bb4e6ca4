use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::ensemble::{build_inputs, run_fold, DialogInputs, FoldContext, SegmentPrediction};
use super::{Ablation, Approach, ExperimentConfig};
use crate::corpus::{make_folds, scenario_filter, CorpusSet, FoldScheme, Provenance, Scenario};
use crate::error::{Error, Result};
use crate::features::Encoder;
use crate::labels::LabelSpace;
use crate::metrics::{
    per_level_diagnostics, round2, ser_round2, EvalExample, LevelDiagnostics, MetricsReport, METRIC_NAMES,
};
use crate::predictions::{write_records, PredictionRecord};
use crate::rng;
use crate::taxonomy::Taxonomy;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldReport {
    pub held_out: String,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunMetrics {
    pub run: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    #[serde(serialize_with = "ser_round2")]
    pub mr: f64,
    #[serde(serialize_with = "ser_round2")]
    pub hp: f64,
    #[serde(serialize_with = "ser_round2")]
    pub hr: f64,
    #[serde(serialize_with = "ser_round2")]
    pub hf: f64,
}

impl Summary {
    fn from_values(v: [f64; 4]) -> Self {
        Summary {
            mr: v[0],
            hp: v[1],
            hr: v[2],
            hf: v[3],
        }
    }

    pub fn values(&self) -> [f64; 4] {
        [self.mr, self.hp, self.hr, self.hf]
    }
}

/// Aggregate of all runs: per-run metrics, their mean and sample standard
/// deviation, and the per-level and per-fold breakdown of run 0.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub approach: Approach,
    pub scenario: Scenario,
    pub folds_scheme: FoldScheme,
    pub ablations: Vec<Ablation>,
    pub n_folds: usize,
    pub runs: Vec<RunMetrics>,
    pub mean: Summary,
    pub std: Summary,
    pub diagnostics: LevelDiagnostics,
    pub folds: Vec<FoldReport>,
}

#[derive(Clone, Debug)]
pub struct CrossvalResult {
    pub report: RunReport,
    pub predictions: Vec<PredictionRecord>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn examples(preds: &[SegmentPrediction]) -> Vec<EvalExample> {
    preds
        .iter()
        .map(|p| EvalExample::new(p.gold.clone(), p.pred.clone()))
        .collect()
}

pub fn run_seed(cfg: &ExperimentConfig, run: usize) -> u64 {
    if cfg.same_seed_each_run {
        cfg.seed
    } else {
        rng::derive_seed(cfg.seed, "run", run as u64)
    }
}

/// Repeats the full cross-validation `cfg.runs` times.
pub fn crossval(
    gold: &CorpusSet,
    extras: &[CorpusSet],
    taxonomy: Arc<Taxonomy>,
    encoder: &dyn Encoder,
    cfg: &ExperimentConfig,
) -> Result<CrossvalResult> {
    cfg.validate()?;
    if gold.provenance != Provenance::Gold {
        return Err(Error::Config("cross-validation needs a gold corpus".into()));
    }
    let builder = cfg.builder()?;
    let gold = scenario_filter(gold, cfg.scenario);
    let extras: Vec<CorpusSet> = if builder.use_extra {
        extras.iter().map(|c| scenario_filter(c, cfg.scenario)).collect()
    } else {
        Vec::new()
    };
    let space = LabelSpace::new(taxonomy.clone(), cfg.scenario.gated());
    let inner = LabelSpace::new(taxonomy, false);
    let folds = make_folds(&gold, &extras, cfg.folds)?;

    let gold_inputs = gold
        .dialogs
        .iter()
        .map(|d| build_inputs(&space, d, encoder))
        .collect::<Result<Vec<_>>>()?;
    let extra_inputs = extras
        .iter()
        .flat_map(|c| c.dialogs.iter())
        .map(|d| build_inputs(&space, d, encoder))
        .collect::<Result<Vec<_>>>()?;
    let by_id: HashMap<&str, &DialogInputs> = gold_inputs.iter().map(|d| (d.dialog.dialog_id.as_str(), d)).collect();
    let lookup = |ds: &[&crate::corpus::Dialog]| -> Vec<&DialogInputs> {
        ds.iter().map(|d| by_id[d.dialog_id.as_str()]).collect()
    };
    let extra_refs: Vec<&DialogInputs> = extra_inputs.iter().collect();

    let ctx = FoldContext {
        space: &space,
        inner: &inner,
        approach: cfg.approach,
        builder,
        train: &cfg.train,
        context: cfg.inference_context,
        encoder_dim: encoder.dim(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let mut runs = Vec::with_capacity(cfg.runs);
    let mut records = Vec::new();
    let mut first: Option<(Vec<FoldReport>, LevelDiagnostics)> = None;
    for run in 0..cfg.runs {
        let seed = run_seed(cfg, run);
        log::info!("run {run} (seed {seed}): {} folds", folds.len());
        let per_fold: Vec<Vec<SegmentPrediction>> = pool.install(|| {
            folds
                .par_iter()
                .map(|f| {
                    let fold_seed = rng::derive_seed(seed, &format!("fold/{}", f.held_out), 0);
                    run_fold(
                        &ctx,
                        &f.held_out,
                        &lookup(&f.train),
                        &extra_refs,
                        &lookup(&f.test),
                        fold_seed,
                    )
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let pooled: Vec<SegmentPrediction> = per_fold.iter().flatten().cloned().collect();
        let all = examples(&pooled);
        runs.push(RunMetrics {
            run,
            seed,
            metrics: MetricsReport::compute(&all)?,
        });
        if first.is_none() {
            let fold_reports = folds
                .iter()
                .zip(&per_fold)
                .map(|(f, p)| {
                    Ok(FoldReport {
                        held_out: f.held_out.clone(),
                        metrics: MetricsReport::compute(&examples(p))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            first = Some((fold_reports, per_level_diagnostics(&all, &space)?));
        }
        for (f, preds) in folds.iter().zip(per_fold) {
            for p in preds {
                records.push(PredictionRecord {
                    run: Some(run),
                    fold: Some(f.held_out.clone()),
                    dialog: p.dialog,
                    corpus: p.corpus,
                    index: p.index,
                    gold: space.path_to_names(&p.gold),
                    pred: space.path_to_names(&p.pred),
                    prob: p.prob,
                    log_prob: p.log_prob,
                    dists: None,
                });
            }
        }
    }

    let mut mean = [0.0; 4];
    let mut std = [0.0; 4];
    for k in 0..4 {
        let vals: Vec<f64> = runs.iter().map(|r| r.metrics.values()[k]).collect();
        (mean[k], std[k]) = mean_std(&vals);
    }
    let (fold_reports, diagnostics) = first.expect("at least one run");
    Ok(CrossvalResult {
        report: RunReport {
            approach: cfg.approach,
            scenario: cfg.scenario,
            folds_scheme: cfg.folds,
            ablations: cfg.ablations.clone(),
            n_folds: folds.len(),
            runs,
            mean: Summary::from_values(mean),
            std: Summary::from_values(std),
            diagnostics,
            folds: fold_reports,
        },
        predictions: records,
    })
}

/// Trains a single member on the whole corpus, early-stopped on the dialog
/// `val_dialog` (default: the last gold dialog), which is left out of
/// training.
pub fn train_single(
    gold: &CorpusSet,
    extras: &[CorpusSet],
    taxonomy: Arc<Taxonomy>,
    encoder: &dyn Encoder,
    cfg: &ExperimentConfig,
    val_dialog: Option<&str>,
) -> Result<super::Member> {
    cfg.validate()?;
    let builder = cfg.builder()?;
    let gold = scenario_filter(gold, cfg.scenario);
    let extras: Vec<CorpusSet> = if builder.use_extra {
        extras.iter().map(|c| scenario_filter(c, cfg.scenario)).collect()
    } else {
        Vec::new()
    };
    let val_id = match val_dialog {
        Some(id) => gold
            .dialog(id)
            .ok_or_else(|| Error::Config(format!("validation dialog {id:?} not in corpus")))?
            .dialog_id
            .clone(),
        None => gold.dialogs.last().ok_or(Error::EmptyData)?.dialog_id.clone(),
    };
    let space = LabelSpace::new(taxonomy.clone(), cfg.scenario.gated());
    let inner = LabelSpace::new(taxonomy, false);
    let inputs = gold
        .dialogs
        .iter()
        .chain(extras.iter().flat_map(|c| c.dialogs.iter()))
        .map(|d| build_inputs(&space, d, encoder))
        .collect::<Result<Vec<_>>>()?;
    let n_gold = gold.dialogs.len();
    let val = inputs[..n_gold]
        .iter()
        .find(|d| d.dialog.dialog_id == val_id)
        .expect("validation dialog present");
    let train: Vec<&DialogInputs> = inputs
        .iter()
        .enumerate()
        .filter(|(i, d)| *i >= n_gold || d.dialog.dialog_id != val_id)
        .map(|(_, d)| d)
        .collect();
    if train.is_empty() {
        return Err(Error::EmptyData);
    }
    let ctx = FoldContext {
        space: &space,
        inner: &inner,
        approach: cfg.approach,
        builder,
        train: &cfg.train,
        context: cfg.inference_context,
        encoder_dim: encoder.dim(),
    };
    super::train_member(&ctx, &train, val, rng::derive_seed(cfg.seed, "single", 0))
}

impl RunReport {
    pub fn render(&self) -> String {
        let f = |x: f64| format!("{:.2}", round2(x));
        let ablations = if self.ablations.is_empty() {
            "none".to_string()
        } else {
            self.ablations
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "approach {}, scenario {}, {} folds ({}), {} run(s), ablations: {}",
            self.approach,
            self.scenario,
            self.n_folds,
            self.folds_scheme,
            self.runs.len(),
            ablations
        );
        out.push('\n');
        let _ = writeln!(
            out,
            "{:<8}{:>16}{:>16}{:>16}{:>16}",
            "", METRIC_NAMES[0], METRIC_NAMES[1], METRIC_NAMES[2], METRIC_NAMES[3]
        );
        let cells: Vec<String> = self
            .mean
            .values()
            .iter()
            .zip(self.std.values())
            .map(|(&m, s)| format!("{} ± {}", f(m), f(s)))
            .collect();
        let _ = writeln!(
            out,
            "{:<8}{:>16}{:>16}{:>16}{:>16}",
            "mean", cells[0], cells[1], cells[2], cells[3]
        );
        for r in &self.runs {
            let v = r.metrics.values();
            let _ = writeln!(
                out,
                "{:<8}{:>16}{:>16}{:>16}{:>16}",
                format!("run {}", r.run),
                f(v[0]),
                f(v[1]),
                f(v[2]),
                f(v[3])
            );
        }
        out.push_str("\nper fold (run 0)\n");
        let width = self.folds.iter().map(|r| r.held_out.len()).max().unwrap_or(4).max(8) + 2;
        let _ = writeln!(
            out,
            "{:<width$}{:>6}{:>8}{:>8}{:>8}{:>8}",
            "held out", "n", "MR", "hP", "hR", "hF"
        );
        for r in &self.folds {
            let v = r.metrics.values();
            let _ = writeln!(
                out,
                "{:<width$}{:>6}{:>8}{:>8}{:>8}{:>8}",
                r.held_out,
                r.metrics.n,
                f(v[0]),
                f(v[1]),
                f(v[2]),
                f(v[3])
            );
        }
        out.push_str("\nper level (run 0)\n");
        out.push_str(&self.diagnostics.render());
        out
    }
}

/// Writes `config.json`, `predictions.jsonl`, `report.json` and
/// `report.txt` into `dir`.
pub fn write_artifacts(dir: &Path, cfg: &ExperimentConfig, result: &CrossvalResult) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    };
    let mut config = serde_json::to_vec_pretty(cfg)?;
    config.push(b'\n');
    write("config.json", &config)?;
    let mut preds = Vec::new();
    write_records(&result.predictions, &mut preds)?;
    write("predictions.jsonl", &preds)?;
    let mut report = serde_json::to_vec_pretty(&result.report)?;
    report.push(b'\n');
    write("report.json", &report)?;
    write("report.txt", result.report.render().as_bytes())
}

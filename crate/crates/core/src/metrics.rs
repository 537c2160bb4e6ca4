//! Exact match ratio, hierarchical precision/recall/F-measure and per-level
//! diagnostics. All values are percentages.

use std::collections::HashSet;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::labels::LabelSpace;
use crate::taxonomy::{LabelPath, NodeId};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalExample {
    pub gold: LabelPath,
    pub pred: LabelPath,
}

impl EvalExample {
    pub fn new(gold: LabelPath, pred: LabelPath) -> Self {
        EvalExample { gold, pred }
    }

    /// Functions on the gold path (`Y`); `Task` and `None` are excluded.
    pub fn gold_set(&self) -> HashSet<NodeId> {
        self.gold.functions().collect()
    }

    /// Functions on the predicted path (`Z`).
    pub fn pred_set(&self) -> HashSet<NodeId> {
        self.pred.functions().collect()
    }
}

/// Half-up rounding to two decimals. The small offset makes decimal halves
/// such as `70.745` (stored just below the half) round up.
pub fn round2(x: f64) -> f64 {
    let scaled = x * 100.0;
    let r = (scaled.abs() + 0.5 + 1e-9).floor();
    r.copysign(scaled) / 100.0
}

pub(crate) fn ser_round2<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(round2(*x))
}

pub(crate) fn ser_round2_opt<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_some(&round2(*v)),
        None => s.serialize_none(),
    }
}

pub fn exact_match_ratio(examples: &[EvalExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::NoExamples);
    }
    let hits = examples.iter().filter(|e| e.gold == e.pred).count();
    Ok(100.0 * hits as f64 / examples.len() as f64)
}

/// Summed `|Y ∩ Z|`, `|Z|` and `|Y|` over all examples.
pub fn set_counts(examples: &[EvalExample]) -> (usize, usize, usize) {
    examples.iter().fold((0, 0, 0), |(i, z, y), e| {
        let ys = e.gold_set();
        let zs = e.pred_set();
        (i + ys.intersection(&zs).count(), z + zs.len(), y + ys.len())
    })
}

pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// `(hP, hR, hF)`. Errors when no example predicts (hP) or holds (hR) a
/// function.
pub fn hierarchical_prf(examples: &[EvalExample]) -> Result<(f64, f64, f64)> {
    if examples.is_empty() {
        return Err(Error::NoExamples);
    }
    let (inter, pred, gold) = set_counts(examples);
    if pred == 0 {
        return Err(Error::UndefinedMetric("hP: no predicted functions"));
    }
    if gold == 0 {
        return Err(Error::UndefinedMetric("hR: no gold functions"));
    }
    let hp = 100.0 * inter as f64 / pred as f64;
    let hr = 100.0 * inter as f64 / gold as f64;
    Ok((hp, hr, harmonic_mean(hp, hr)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    #[serde(serialize_with = "ser_round2")]
    pub mr: f64,
    #[serde(serialize_with = "ser_round2")]
    pub hp: f64,
    #[serde(serialize_with = "ser_round2")]
    pub hr: f64,
    #[serde(serialize_with = "ser_round2")]
    pub hf: f64,
}

impl MetricsReport {
    /// Like [`hierarchical_prf`], but an undefined precision or recall is
    /// reported as 0 so that degenerate folds still aggregate.
    pub fn compute(examples: &[EvalExample]) -> Result<Self> {
        let mr = exact_match_ratio(examples)?;
        let (inter, pred, gold) = set_counts(examples);
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
        let hp = ratio(inter, pred);
        let hr = ratio(inter, gold);
        Ok(MetricsReport {
            n: examples.len(),
            mr,
            hp,
            hr,
            hf: harmonic_mean(hp, hr),
        })
    }

    pub fn values(&self) -> [f64; 4] {
        [self.mr, self.hp, self.hr, self.hf]
    }
}

pub const METRIC_NAMES: [&str; 4] = ["MR", "hP", "hR", "hF"];

/// One row of the per-level table. Undefined entries are `None` (shown as
/// `-`).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelRow {
    pub level: String,
    #[serde(serialize_with = "ser_round2")]
    pub mr: f64,
    #[serde(serialize_with = "ser_round2")]
    pub none_pct: f64,
    #[serde(serialize_with = "ser_round2_opt")]
    pub mr_labeled: Option<f64>,
    #[serde(serialize_with = "ser_round2_opt")]
    pub false_none: Option<f64>,
    #[serde(serialize_with = "ser_round2_opt")]
    pub label_confusion: Option<f64>,
    #[serde(serialize_with = "ser_round2_opt")]
    pub none_precision: Option<f64>,
    #[serde(serialize_with = "ser_round2_opt")]
    pub none_recall: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelDiagnostics {
    pub rows: Vec<LevelRow>,
}

pub fn per_level_diagnostics(examples: &[EvalExample], space: &LabelSpace) -> Result<LevelDiagnostics> {
    if examples.is_empty() {
        return Err(Error::NoExamples);
    }
    let n = examples.len() as f64;
    let pct = |a: usize, b: usize| (b > 0).then(|| 100.0 * a as f64 / b as f64);
    let mut rows = Vec::with_capacity(space.n_levels());
    for pos in 0..space.n_levels() {
        let (mut hit, mut gold_none, mut pred_none, mut both_none) = (0, 0, 0, 0);
        let (mut labeled_hit, mut false_none, mut confusion) = (0, 0, 0);
        for e in examples {
            let g = e.gold.labels()[pos];
            let p = e.pred.labels()[pos];
            hit += (g == p) as usize;
            gold_none += g.is_none() as usize;
            pred_none += p.is_none() as usize;
            both_none += (g.is_none() && p.is_none()) as usize;
            if !g.is_none() {
                if g == p {
                    labeled_hit += 1;
                } else if p.is_none() {
                    false_none += 1;
                } else {
                    confusion += 1;
                }
            }
        }
        let labeled = examples.len() - gold_none;
        rows.push(LevelRow {
            level: space.level_name(pos),
            mr: 100.0 * hit as f64 / n,
            none_pct: 100.0 * gold_none as f64 / n,
            mr_labeled: pct(labeled_hit, labeled),
            false_none: pct(false_none, labeled),
            label_confusion: pct(confusion, labeled),
            none_precision: pct(both_none, pred_none),
            none_recall: pct(both_none, gold_none),
        });
    }
    Ok(LevelDiagnostics { rows })
}

impl LevelDiagnostics {
    pub fn render(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.2}", round2(x)));
        let mut out = format!(
            "{:<6}{:>8}{:>8}{:>9}{:>8}{:>8}{:>8}{:>8}\n",
            "Level", "MR", "None%", "MR\\None", "FNone", "LC", "NoneP", "NoneR"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<6}{:>8}{:>8}{:>9}{:>8}{:>8}{:>8}{:>8}\n",
                r.level,
                fmt(Some(r.mr)),
                fmt(Some(r.none_pct)),
                fmt(r.mr_labeled),
                fmt(r.false_none),
                fmt(r.label_confusion),
                fmt(r.none_precision),
                fmt(r.none_recall)
            ));
        }
        out
    }
}

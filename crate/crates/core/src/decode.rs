//! Turning per-level distributions into a valid label path.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSpace;
use crate::model::{LevelDistributions, PROB_FLOOR};
use crate::taxonomy::{Label, LabelPath};

#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub path: LabelPath,
    /// Natural log of the joint path probability.
    pub log_prob: f64,
    pub prob: f64,
}

impl Decoded {
    fn new(path: LabelPath, log_prob: f64) -> Self {
        Decoded {
            path,
            log_prob,
            prob: log_prob.exp(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeMode {
    #[default]
    Map,
    Iterative,
}

impl FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "map" => Ok(DecodeMode::Map),
            "iterative" => Ok(DecodeMode::Iterative),
            other => Err(Error::Config(format!("unknown decode mode {other:?}"))),
        }
    }
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecodeMode::Map => "map",
            DecodeMode::Iterative => "iterative",
        })
    }
}

pub fn decode(dists: &LevelDistributions, space: &LabelSpace, mode: DecodeMode) -> Decoded {
    match mode {
        DecodeMode::Map => map_decode(dists, space),
        DecodeMode::Iterative => iterative_decode(dists, space),
    }
}

fn log_tables(dists: &LevelDistributions) -> Vec<Vec<f64>> {
    dists
        .levels()
        .iter()
        .map(|p| p.iter().map(|&x| x.max(PROB_FLOOR).ln()).collect())
        .collect()
}

/// Natural-log joint probability of a valid path, including the `None`
/// factors at padded levels.
pub fn path_log_probability(dists: &LevelDistributions, space: &LabelSpace, path: &LabelPath) -> Result<f64> {
    space.validate(path)?;
    let classes = space.classes(path)?;
    if dists.n_levels() != classes.len() {
        return Err(Error::DimensionMismatch {
            expected: classes.len(),
            found: dists.n_levels(),
        });
    }
    Ok(classes
        .iter()
        .zip(dists.levels())
        .map(|(&c, p)| p[c].max(PROB_FLOOR).ln())
        .sum())
}

pub fn path_probability(dists: &LevelDistributions, space: &LabelSpace, path: &LabelPath) -> Result<f64> {
    path_log_probability(dists, space, path).map(f64::exp)
}

struct MapSearch<'a> {
    space: &'a LabelSpace,
    logs: Vec<Vec<f64>>,
    labels: Vec<Label>,
    best: Option<(f64, Vec<Label>)>,
}

impl MapSearch<'_> {
    /// Scores the path that stops after `labels` (padded with `None`), then
    /// extends it with each admitted child in preorder.
    fn visit(&mut self, prefix_log: f64) {
        let n = self.space.n_levels();
        let depth = self.labels.len();
        let mut score = prefix_log;
        for pos in depth..n {
            score += self.logs[pos][self.space.none_class(pos)];
        }
        if self.best.as_ref().is_none_or(|(b, _)| score > *b) {
            let mut path = self.labels.clone();
            path.resize(n, Label::None);
            self.best = Some((score, path));
        }
        if depth < n {
            self.expand(depth, prefix_log);
        }
    }

    fn expand(&mut self, pos: usize, prefix_log: f64) {
        let prev = self.labels.last().copied();
        let mask = self.space.mask(pos, prev).expect("position in range");
        for (c, &label) in self.space.alphabet(pos).iter().enumerate() {
            if !mask[c] || label.is_none() {
                continue;
            }
            self.labels.push(label);
            let log = prefix_log + self.logs[pos][c];
            if matches!(label, Label::Task) {
                // the gate label alone is not a path; descend directly
                self.expand(pos + 1, log);
            } else {
                self.visit(log);
            }
            self.labels.pop();
        }
    }
}

/// Maximum a posteriori path over all valid paths; ties go to the earliest
/// path in preorder.
pub fn map_decode(dists: &LevelDistributions, space: &LabelSpace) -> Decoded {
    let mut search = MapSearch {
        space,
        logs: log_tables(dists),
        labels: Vec::new(),
        best: None,
    };
    if space.is_gated() {
        search.visit(0.0);
    } else {
        search.expand(0, 0.0);
    }
    let (log_prob, labels) = search.best.expect("taxonomy is non-empty");
    Decoded::new(LabelPath(labels), log_prob)
}

/// Top-down argmax, each level restricted to the children of the label
/// chosen above it.
pub fn iterative_decode(dists: &LevelDistributions, space: &LabelSpace) -> Decoded {
    let logs = log_tables(dists);
    let mut labels = Vec::with_capacity(space.n_levels());
    let mut log_prob = 0.0;
    let mut prev = None;
    for (pos, level) in dists.levels().iter().enumerate() {
        let mask = space.mask(pos, prev).expect("position in range");
        let mut best: Option<usize> = None;
        for (c, &p) in level.iter().enumerate() {
            if mask[c] && best.is_none_or(|b| p > level[b]) {
                best = Some(c);
            }
        }
        let c = best.expect("mask admits at least one label");
        let label = space.alphabet(pos)[c];
        log_prob += logs[pos][c];
        labels.push(label);
        prev = Some(label);
    }
    Decoded::new(LabelPath(labels), log_prob)
}

/// Argmax of a flat distribution over `space.valid_paths()`.
pub fn flat_decode(probs: &[f64], space: &LabelSpace) -> Decoded {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    Decoded::new(space.valid_paths()[best].clone(), probs[best].max(PROB_FLOOR).ln())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::taxonomy::Taxonomy;

    fn space(gated: bool) -> LabelSpace {
        LabelSpace::new(Arc::new(Taxonomy::bundled()), gated)
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

    fn uniform(space: &LabelSpace) -> LevelDistributions {
        LevelDistributions(
            space
                .alphabet_sizes()
                .iter()
                .map(|&k| vec![1.0 / k as f64; k])
                .collect(),
        )
    }

    #[test]
    fn one_hot_paths_decode_exactly() {
        for gated in [false, true] {
            let s = space(gated);
            for p in s.valid_paths() {
                let d = one_hot(&s, p);
                assert_eq!(path_probability(&d, &s, p).unwrap(), 1.0);
                let m = map_decode(&d, &s);
                assert_eq!(&m.path, p);
                assert_eq!(m.prob, 1.0);
                assert_eq!(&iterative_decode(&d, &s).path, p);
            }
        }
    }

    #[test]
    fn answer_probability_is_product_of_factors() {
        let s = space(false);
        let answer = s.taxonomy().path_of("Answer").unwrap();
        let classes = s.classes(&answer).unwrap();
        let factors = [0.9, 0.8, 0.7, 0.6, 0.5, 0.5];
        let dists = LevelDistributions(
            s.alphabet_sizes()
                .iter()
                .zip(&classes)
                .zip(factors)
                .map(|((&k, &c), f)| {
                    let mut v = vec![(1.0 - f) / (k - 1) as f64; k];
                    v[c] = f;
                    v
                })
                .collect(),
        );
        let p = path_probability(&dists, &s, &answer).unwrap();
        assert!((p - 0.0756).abs() < 1e-12);
    }

    #[test]
    fn invalid_path_rejected() {
        let s = space(false);
        let bad = LabelPath::all_none(6);
        assert!(path_probability(&uniform(&s), &s, &bad).is_err());
    }

    #[test]
    fn uniform_ties_go_to_first_path() {
        for gated in [false, true] {
            let s = space(gated);
            let m = map_decode(&uniform(&s), &s);
            assert_eq!(m.path, s.valid_paths()[0]);
        }
    }

    #[test]
    fn map_beats_greedy_on_adversarial_case() {
        // Level 1 slightly prefers Action-Discussion, but everything below it
        // is spread thin while the Information-Transfer subtree is confident.
        let s = space(false);
        let t = s.taxonomy();
        let answer = t.path_of("Answer").unwrap();
        let classes = s.classes(&answer).unwrap();
        let sizes = s.alphabet_sizes();
        let mut levels: Vec<Vec<f64>> = sizes.iter().map(|&k| vec![1.0 / k as f64; k]).collect();
        let adf = s
            .class_of(0, Label::Function(t.id("Action-Discussion Functions").unwrap()))
            .unwrap();
        levels[0] = vec![0.0; 3];
        levels[0][adf] = 0.55;
        levels[0][classes[0]] = 0.45;
        for pos in 1..6 {
            let k = sizes[pos];
            levels[pos] = vec![0.02 / (k - 1) as f64; k];
            levels[pos][classes[pos]] = 0.98;
        }
        let d = LevelDistributions(levels);
        let map = map_decode(&d, &s);
        let it = iterative_decode(&d, &s);
        assert_eq!(map.path, answer);
        assert_ne!(it.path, map.path);
        assert!(map.log_prob >= it.log_prob);
    }

    #[test]
    fn zero_probabilities_are_floored() {
        let s = space(false);
        let p = s.valid_paths()[3].clone();
        let mut d = one_hot(&s, &p);
        d.0[0] = vec![0.0; 3];
        let m = map_decode(&d, &s);
        assert!(m.log_prob.is_finite());
        assert!(s.is_valid(&m.path));
    }

    #[test]
    fn flat_argmax() {
        let s = space(true);
        let mut probs = vec![0.0; s.valid_paths().len()];
        probs[5] = 0.7;
        probs[2] = 0.3;
        let d = flat_decode(&probs, &s);
        assert_eq!(d.path, s.valid_paths()[5]);
        assert!((d.prob - 0.7).abs() < 1e-15);
    }
}

//! Per-level label alphabets and the set of valid paths a classifier may emit.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::taxonomy::{Label, LabelPath, Taxonomy};

/// The label positions a model predicts over.
///
/// Without the gate, positions `0..D` are taxonomy levels `1..=D`. With the
/// gate, position 0 is an extra level with alphabet `{Task, None}` and the
/// taxonomy levels follow.
#[derive(Clone, Debug)]
pub struct LabelSpace {
    taxonomy: Arc<Taxonomy>,
    gated: bool,
    alphabets: Vec<Vec<Label>>,
    class_index: Vec<HashMap<Label, usize>>,
    valid: Vec<LabelPath>,
    valid_classes: Vec<Vec<usize>>,
}

impl LabelSpace {
    pub fn new(taxonomy: Arc<Taxonomy>, gated: bool) -> Self {
        let mut alphabets = Vec::new();
        if gated {
            alphabets.push(vec![Label::Task, Label::None]);
        }
        for d in 1..=taxonomy.depth() {
            alphabets.push(taxonomy.alphabet(d).expect("level in range"));
        }
        let class_index = alphabets
            .iter()
            .map(|a| a.iter().enumerate().map(|(i, &l)| (l, i)).collect())
            .collect();
        let mut valid = Vec::new();
        if gated {
            valid.push(LabelPath::all_none(taxonomy.depth() + 1));
        }
        for p in taxonomy.valid_paths() {
            if gated {
                let mut labels = vec![Label::Task];
                labels.extend(p.0);
                valid.push(LabelPath(labels));
            } else {
                valid.push(p);
            }
        }
        let mut space = LabelSpace {
            taxonomy,
            gated,
            alphabets,
            class_index,
            valid,
            valid_classes: Vec::new(),
        };
        space.valid_classes = space
            .valid
            .iter()
            .map(|p| space.classes(p).expect("valid path encodes"))
            .collect();
        space
    }

    pub fn taxonomy(&self) -> &Arc<Taxonomy> {
        &self.taxonomy
    }

    pub fn is_gated(&self) -> bool {
        self.gated
    }

    pub fn n_levels(&self) -> usize {
        self.alphabets.len()
    }

    pub fn alphabet(&self, pos: usize) -> &[Label] {
        &self.alphabets[pos]
    }

    pub fn alphabet_sizes(&self) -> Vec<usize> {
        self.alphabets.iter().map(Vec::len).collect()
    }

    /// Display name of a position, `L0` being the gate level.
    pub fn level_name(&self, pos: usize) -> String {
        if self.gated {
            format!("L{pos}")
        } else {
            format!("L{}", pos + 1)
        }
    }

    pub fn class_of(&self, pos: usize, label: Label) -> Option<usize> {
        self.class_index.get(pos)?.get(&label).copied()
    }

    pub fn none_class(&self, pos: usize) -> usize {
        self.alphabets[pos].len() - 1
    }

    /// Mask over `alphabet(pos)` given the label chosen at `pos - 1`
    /// (`None` for position 0).
    pub fn mask(&self, pos: usize, prev: Option<Label>) -> Result<Vec<bool>> {
        if pos >= self.n_levels() {
            return Err(Error::LevelOutOfRange {
                level: pos,
                depth: self.n_levels(),
            });
        }
        match (self.gated, pos, prev) {
            (true, 0, _) => Ok(vec![true, true]),
            (true, 1, Some(Label::Task)) => self.taxonomy.children_mask(1, Label::Task),
            (true, _, Some(parent)) => self.taxonomy.children_mask(pos, parent),
            (false, 0, _) => self.taxonomy.children_mask(1, Label::Task),
            (false, _, Some(parent)) => self.taxonomy.children_mask(pos + 1, parent),
            (_, _, None) => Err(Error::InvalidPath(format!("position {pos} needs a parent label"))),
        }
    }

    /// Valid paths in preorder; with the gate the all-`None` path comes first.
    pub fn valid_paths(&self) -> &[LabelPath] {
        &self.valid
    }

    /// Class indices of each valid path, aligned with [`Self::valid_paths`].
    pub fn valid_classes(&self) -> &[Vec<usize>] {
        &self.valid_classes
    }

    pub fn path_index(&self, path: &LabelPath) -> Option<usize> {
        self.valid.iter().position(|p| p == path)
    }

    /// Per-position class indices.
    pub fn classes(&self, path: &LabelPath) -> Result<Vec<usize>> {
        if path.len() != self.n_levels() {
            return Err(Error::InvalidPath(format!(
                "length {} != {}",
                path.len(),
                self.n_levels()
            )));
        }
        path.labels()
            .iter()
            .enumerate()
            .map(|(pos, &l)| {
                self.class_of(pos, l)
                    .ok_or_else(|| Error::InvalidPath(format!("label {l:?} not in alphabet of position {pos}")))
            })
            .collect()
    }

    pub fn path_from_classes(&self, classes: &[usize]) -> LabelPath {
        LabelPath(
            classes
                .iter()
                .enumerate()
                .map(|(pos, &c)| self.alphabets[pos][c])
                .collect(),
        )
    }

    /// Checks length, absorbing `None`, and parent/child chaining.
    pub fn validate(&self, path: &LabelPath) -> Result<()> {
        self.classes(path)?;
        let mut prev = None;
        for (pos, &label) in path.labels().iter().enumerate() {
            let mask = self.mask(pos, prev)?;
            let class = self.class_of(pos, label).expect("checked above");
            if !mask[class] {
                return Err(Error::InvalidPath(format!(
                    "{} not admitted after {:?} at {}",
                    self.label_name(label),
                    prev.map(|p| self.label_name(p)),
                    self.level_name(pos)
                )));
            }
            prev = Some(label);
        }
        Ok(())
    }

    pub fn is_valid(&self, path: &LabelPath) -> bool {
        self.validate(path).is_ok()
    }

    /// Converts an ungated taxonomy path into this space.
    pub fn lift(&self, taxonomy_path: &LabelPath) -> LabelPath {
        if !self.gated {
            return taxonomy_path.clone();
        }
        let gate = if taxonomy_path.is_all_none() {
            Label::None
        } else {
            Label::Task
        };
        let mut labels = Vec::with_capacity(taxonomy_path.len() + 1);
        labels.push(gate);
        labels.extend_from_slice(taxonomy_path.labels());
        LabelPath(labels)
    }

    /// Drops the gate level, if any.
    pub fn lower(&self, path: &LabelPath) -> LabelPath {
        if self.gated {
            LabelPath(path.labels()[1..].to_vec())
        } else {
            path.clone()
        }
    }

    pub fn label_name(&self, label: Label) -> String {
        match label {
            Label::Task => "Task".to_string(),
            Label::None => "None".to_string(),
            Label::Function(id) => self.taxonomy.name(id).to_string(),
        }
    }

    /// Names for serialization; `None` becomes JSON null.
    pub fn path_to_names(&self, path: &LabelPath) -> Vec<Option<String>> {
        path.labels()
            .iter()
            .map(|&l| match l {
                Label::None => None,
                other => Some(self.label_name(other)),
            })
            .collect()
    }

    pub fn path_from_names(&self, names: &[Option<String>]) -> Result<LabelPath> {
        let labels = names
            .iter()
            .map(|n| match n {
                None => Ok(Label::None),
                Some(s) if s.eq_ignore_ascii_case("task") => Ok(Label::Task),
                Some(s) => self.taxonomy.id(s).map(Label::Function),
            })
            .collect::<Result<Vec<_>>>()?;
        let path = LabelPath(labels);
        self.validate(&path)?;
        Ok(path)
    }
}

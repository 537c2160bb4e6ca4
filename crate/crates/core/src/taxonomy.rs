//! The general-purpose communicative function hierarchy and path arithmetic.
//!
//! A [`Taxonomy`] is loaded from a JSON document (the bundled default lives in
//! `data/taxonomy.json`) and is immutable afterwards. Nodes are numbered in
//! preorder with children in document order, so every derived ordering (level
//! alphabets, valid paths, masks) is deterministic.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

const BUNDLED: &str = include_str!("../data/taxonomy.json");

/// Index of a node in preorder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) u16);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug)]
pub struct FunctionNode {
    pub name: String,
    /// 1-based depth.
    pub level: usize,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
}

/// A label at one position of a [`LabelPath`].
///
/// `Task` doubles as the virtual root above the level-1 functions; it only
/// appears inside paths at the gate level of a gated [`LabelSpace`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Task,
    Function(NodeId),
    None,
}

impl Label {
    pub fn is_none(self) -> bool {
        matches!(self, Label::None)
    }

    pub fn function(self) -> Option<NodeId> {
        match self {
            Label::Function(id) => Some(id),
            _ => None,
        }
    }
}

/// Fixed-length sequence of per-level labels, padded with [`Label::None`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelPath(pub Vec<Label>);

impl LabelPath {
    pub fn all_none(len: usize) -> Self {
        LabelPath(vec![Label::None; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.0
    }

    pub fn is_all_none(&self) -> bool {
        self.0.iter().all(|l| l.is_none())
    }

    /// The deepest function on the path.
    pub fn terminal(&self) -> Option<NodeId> {
        self.0.iter().rev().find_map(|l| l.function())
    }

    /// Functions on the path, shallowest first. `Task` and `None` are skipped.
    pub fn functions(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.iter().filter_map(|l| l.function())
    }
}

#[derive(Deserialize)]
struct TreeDoc {
    name: String,
    #[serde(default)]
    children: Vec<TreeDoc>,
}

#[derive(Deserialize)]
struct FlatEntry {
    name: String,
    #[serde(default)]
    parent: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Document {
    Tree(TreeDoc),
    Flat(Vec<FlatEntry>),
}

#[derive(Clone, Debug)]
pub struct Taxonomy {
    nodes: Vec<FunctionNode>,
    roots: Vec<NodeId>,
    depth: usize,
    by_name: HashMap<String, NodeId>,
    levels: Vec<Vec<NodeId>>,
}

impl Taxonomy {
    /// The bundled transcription of the ISO 24617-2 hierarchy.
    pub fn bundled() -> Self {
        Self::from_json_str(BUNDLED).expect("bundled taxonomy is valid")
    }

    pub fn bundled_document() -> &'static str {
        BUNDLED
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json_str(&text)
    }

    /// Parses either a nested `{"name", "children"}` tree whose root is a
    /// virtual node, or a flat list of `{"name", "parent"}` entries where
    /// level-1 nodes have a null parent.
    pub fn from_json_str(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::EmptyTaxonomy);
        }
        let doc: Document = serde_json::from_str(text).map_err(|e| Error::TaxonomyFormat(e.to_string()))?;
        let edges = match doc {
            Document::Tree(root) => {
                let mut edges = Vec::new();
                for child in &root.children {
                    flatten_tree(child, None, &mut edges);
                }
                edges
            }
            Document::Flat(entries) => entries.into_iter().map(|e| (e.name, e.parent)).collect(),
        };
        Self::from_edges(edges)
    }

    fn from_edges(edges: Vec<(String, Option<String>)>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::EmptyTaxonomy);
        }
        let mut seen = HashSet::new();
        for (name, _) in &edges {
            if name.trim().is_empty() {
                return Err(Error::TaxonomyFormat("node with empty name".into()));
            }
            if !seen.insert(name.to_lowercase()) {
                return Err(Error::DuplicateName(name.clone()));
            }
        }
        let parent_of: HashMap<String, Option<String>> = edges
            .iter()
            .map(|(n, p)| (n.to_lowercase(), p.as_ref().map(|p| p.to_lowercase())))
            .collect();
        for (name, parent) in &edges {
            if let Some(p) = parent {
                if !parent_of.contains_key(&p.to_lowercase()) {
                    return Err(Error::OrphanNode {
                        name: name.clone(),
                        parent: p.clone(),
                    });
                }
            }
        }
        for (name, _) in &edges {
            let mut visited = HashSet::new();
            let mut cur = Some(name.to_lowercase());
            while let Some(n) = cur {
                if !visited.insert(n.clone()) {
                    return Err(Error::Cycle(name.clone()));
                }
                cur = parent_of[&n].clone();
            }
        }

        let mut children: HashMap<Option<String>, Vec<&str>> = HashMap::new();
        for (name, parent) in &edges {
            children
                .entry(parent.as_ref().map(|p| p.to_lowercase()))
                .or_default()
                .push(name);
        }

        let mut tax = Taxonomy {
            nodes: Vec::with_capacity(edges.len()),
            roots: Vec::new(),
            depth: 0,
            by_name: HashMap::new(),
            levels: Vec::new(),
        };
        let roots = children.get(&None).cloned().unwrap_or_default();
        for root in roots {
            let id = tax.push_subtree(root, None, 1, &children);
            tax.roots.push(id);
        }
        tax.depth = tax.nodes.iter().map(|n| n.level).max().unwrap_or(0);
        tax.levels = vec![Vec::new(); tax.depth];
        for (i, n) in tax.nodes.iter().enumerate() {
            tax.levels[n.level - 1].push(NodeId(i as u16));
        }
        Ok(tax)
    }

    fn push_subtree(
        &mut self,
        name: &str,
        parent: Option<NodeId>,
        level: usize,
        children: &HashMap<Option<String>, Vec<&str>>,
    ) -> NodeId {
        let id = NodeId(self.nodes.len() as u16);
        self.nodes.push(FunctionNode {
            name: name.to_string(),
            level,
            parent,
            children: Vec::new(),
        });
        self.by_name.insert(name.to_lowercase(), id);
        if let Some(kids) = children.get(&Some(name.to_lowercase())) {
            for kid in kids {
                let kid_id = self.push_subtree(kid, Some(id), level + 1, children);
                self.nodes[id.index()].children.push(kid_id);
            }
        }
        id
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn node(&self, id: NodeId) -> &FunctionNode {
        &self.nodes[id.index()]
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.index()].name
    }

    /// Nodes in preorder.
    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &FunctionNode)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i as u16), n))
    }

    /// Case-insensitive lookup.
    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.by_name
            .get(&name.to_lowercase())
            .copied()
            .ok_or_else(|| Error::UnknownFunction(name.to_string()))
    }

    /// Functions at 1-based level `d`, in preorder.
    pub fn level_nodes(&self, d: usize) -> Result<&[NodeId]> {
        self.check_level(d)?;
        Ok(&self.levels[d - 1])
    }

    fn check_level(&self, d: usize) -> Result<()> {
        if d == 0 || d > self.depth {
            return Err(Error::LevelOutOfRange {
                level: d,
                depth: self.depth,
            });
        }
        Ok(())
    }

    /// Root-to-node chain.
    pub fn chain(&self, id: NodeId) -> Vec<NodeId> {
        let mut chain = vec![id];
        let mut cur = self.node(id).parent;
        while let Some(p) = cur {
            chain.push(p);
            cur = self.node(p).parent;
        }
        chain.reverse();
        chain
    }

    pub fn path_of(&self, name: &str) -> Result<LabelPath> {
        Ok(self.path_of_id(self.id(name)?))
    }

    pub fn path_of_id(&self, id: NodeId) -> LabelPath {
        let mut labels: Vec<Label> = self.chain(id).into_iter().map(Label::Function).collect();
        labels.resize(self.depth, Label::None);
        LabelPath(labels)
    }

    /// Labels at 1-based level `d`: its functions in preorder, then `None`.
    pub fn alphabet(&self, d: usize) -> Result<Vec<Label>> {
        let mut labels: Vec<Label> = self.level_nodes(d)?.iter().map(|&id| Label::Function(id)).collect();
        labels.push(Label::None);
        Ok(labels)
    }

    /// Mask over [`Taxonomy::alphabet`]`(d)` admitting the labels that may
    /// follow `parent`. For `d = 1` the parent is the virtual root
    /// ([`Label::Task`]), which admits the level-1 functions only: a path
    /// holds at least one function, and the empty path lives at the gate
    /// level. A `None` parent admits only `None`.
    pub fn children_mask(&self, d: usize, parent: Label) -> Result<Vec<bool>> {
        let alphabet = self.alphabet(d)?;
        let admitted: Vec<Label> = match parent {
            Label::None => vec![Label::None],
            Label::Task => {
                if d != 1 {
                    return Err(Error::InvalidPath(format!(
                        "virtual root is only a parent at level 1, not {d}"
                    )));
                }
                self.roots.iter().map(|&r| Label::Function(r)).collect()
            }
            Label::Function(p) => {
                if d == 1 || self.node(p).level != d - 1 {
                    return Err(Error::InvalidPath(format!(
                        "{:?} is not at level {}",
                        self.name(p),
                        d.saturating_sub(1)
                    )));
                }
                let mut v: Vec<Label> = self.node(p).children.iter().map(|&c| Label::Function(c)).collect();
                v.push(Label::None);
                v
            }
        };
        Ok(alphabet.iter().map(|l| admitted.contains(l)).collect())
    }

    /// One path per function, in preorder.
    pub fn valid_paths(&self) -> Vec<LabelPath> {
        (0..self.nodes.len())
            .map(|i| self.path_of_id(NodeId(i as u16)))
            .collect()
    }

    /// Renders the tree with one node per line, indented by level.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (_, node) in self.nodes() {
            out.push_str(&"  ".repeat(node.level - 1));
            out.push_str(&format!("L{} {}\n", node.level, node.name));
        }
        out
    }
}

fn flatten_tree(node: &TreeDoc, parent: Option<&str>, out: &mut Vec<(String, Option<String>)>) {
    out.push((node.name.clone(), parent.map(str::to_string)));
    for child in &node.children {
        flatten_tree(child, Some(&node.name), out);
    }
}

impl fmt::Display for Taxonomy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

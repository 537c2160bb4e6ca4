//! Annotated dialogs, evaluation scenarios, dialog-history context and
//! cross-validation folds.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSpace;
use crate::taxonomy::{LabelPath, Taxonomy};

/// Number of preceding segments encoded as context.
pub const CONTEXT_WINDOW: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub dialog_id: String,
    /// Position in the source file's dialog; kept through scenario filtering.
    pub index: usize,
    pub speaker: String,
    pub text: String,
    /// Taxonomy-depth path; all-`None` without a Task-dimension function.
    pub gold: LabelPath,
}

impl Segment {
    pub fn has_task_function(&self) -> bool {
        !self.gold.is_all_none()
    }

    pub fn key(&self) -> String {
        format!("{}:{}", self.dialog_id, self.index)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dialog {
    pub dialog_id: String,
    pub corpus_id: String,
    pub segments: Vec<Segment>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Gold,
    Mapped,
}

#[derive(Clone, Debug)]
pub struct CorpusSet {
    pub dialogs: Vec<Dialog>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct SegmentLine {
    dialog: String,
    corpus: String,
    index: usize,
    speaker: String,
    text: String,
    function: Option<String>,
}

impl CorpusSet {
    pub fn empty(provenance: Provenance) -> Self {
        CorpusSet {
            dialogs: Vec::new(),
            provenance,
        }
    }

    pub fn load(path: impl AsRef<Path>, taxonomy: &Taxonomy, provenance: Provenance) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Self::from_reader(BufReader::new(file), path, taxonomy, provenance)
    }

    /// Reads line-delimited segment records; `origin` labels error messages.
    pub fn from_reader(
        reader: impl BufRead,
        origin: &Path,
        taxonomy: &Taxonomy,
        provenance: Provenance,
    ) -> Result<Self> {
        let mut dialogs: Vec<Dialog> = Vec::new();
        let mut by_id: HashMap<String, usize> = HashMap::new();
        for (n, line) in reader.lines().enumerate() {
            let lineno = n + 1;
            let line = line.map_err(|e| Error::io(format!("reading {}", origin.display()), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: lineno,
                message,
            };
            let rec: SegmentLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let gold = match &rec.function {
                Some(f) => taxonomy.path_of(f).map_err(|e| parse_err(e.to_string()))?,
                None => LabelPath::all_none(taxonomy.depth()),
            };
            let slot = *by_id.entry(rec.dialog.clone()).or_insert_with(|| {
                dialogs.push(Dialog {
                    dialog_id: rec.dialog.clone(),
                    corpus_id: rec.corpus.clone(),
                    segments: Vec::new(),
                });
                dialogs.len() - 1
            });
            let dialog = &mut dialogs[slot];
            if dialog.corpus_id != rec.corpus {
                return Err(parse_err(format!(
                    "dialog {:?} listed under corpus {:?} and {:?}",
                    rec.dialog, dialog.corpus_id, rec.corpus
                )));
            }
            if rec.index != dialog.segments.len() {
                return Err(Error::NonContiguous {
                    dialog: rec.dialog,
                    expected: dialog.segments.len(),
                    found: rec.index,
                });
            }
            dialog.segments.push(Segment {
                dialog_id: rec.dialog,
                index: rec.index,
                speaker: rec.speaker,
                text: rec.text,
                gold,
            });
        }
        Ok(CorpusSet { dialogs, provenance })
    }

    pub fn write_jsonl(&self, mut out: impl Write, taxonomy: &Taxonomy) -> Result<()> {
        for d in &self.dialogs {
            for s in &d.segments {
                let rec = SegmentLine {
                    dialog: d.dialog_id.clone(),
                    corpus: d.corpus_id.clone(),
                    index: s.index,
                    speaker: s.speaker.clone(),
                    text: s.text.clone(),
                    function: s.gold.terminal().map(|id| taxonomy.name(id).to_string()),
                };
                serde_json::to_writer(&mut out, &rec)?;
                out.write_all(b"\n").map_err(|e| Error::io("writing corpus", e))?;
            }
        }
        Ok(())
    }

    pub fn segments(&self) -> impl Iterator<Item = &Segment> {
        self.dialogs.iter().flat_map(|d| d.segments.iter())
    }

    pub fn n_segments(&self) -> usize {
        self.dialogs.iter().map(|d| d.segments.len()).sum()
    }

    pub fn corpus_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.dialogs
            .iter()
            .map(|d| d.corpus_id.as_str())
            .filter(|c| seen.insert(*c))
            .collect()
    }

    pub fn dialog(&self, id: &str) -> Option<&Dialog> {
        self.dialogs.iter().find(|d| d.dialog_id == id)
    }

    /// Rejects duplicate dialog ids.
    pub fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for d in &self.dialogs {
            if !seen.insert(d.dialog_id.as_str()) {
                return Err(Error::DuplicateDialog(d.dialog_id.clone()));
            }
        }
        Ok(())
    }

    /// Concatenates corpora of the same provenance.
    pub fn merge(sets: impl IntoIterator<Item = CorpusSet>, provenance: Provenance) -> Result<Self> {
        let mut out = CorpusSet::empty(provenance);
        for s in sets {
            out.dialogs.extend(s.dialogs);
        }
        out.check_unique()?;
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    TaskOnly,
    AllSegments,
}

impl Scenario {
    /// Whether the gate level `{Task, None}` is part of the label space.
    pub fn gated(self) -> bool {
        matches!(self, Scenario::AllSegments)
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "task-only" => Ok(Scenario::TaskOnly),
            "all-segments" => Ok(Scenario::AllSegments),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::TaskOnly => "task-only",
            Scenario::AllSegments => "all-segments",
        })
    }
}

/// Task-only keeps segments with a Task-dimension function and drops dialogs
/// left empty; all-segments returns the corpus unchanged.
pub fn scenario_filter(corpus: &CorpusSet, scenario: Scenario) -> CorpusSet {
    match scenario {
        Scenario::AllSegments => corpus.clone(),
        Scenario::TaskOnly => CorpusSet {
            provenance: corpus.provenance,
            dialogs: corpus
                .dialogs
                .iter()
                .map(|d| Dialog {
                    dialog_id: d.dialog_id.clone(),
                    corpus_id: d.corpus_id.clone(),
                    segments: d.segments.iter().filter(|s| s.has_task_function()).cloned().collect(),
                })
                .filter(|d| !d.segments.is_empty())
                .collect(),
        },
    }
}

/// Length of a context vector in `space`.
pub fn context_dim(space: &LabelSpace) -> usize {
    CONTEXT_WINDOW * (space.alphabet_sizes().iter().sum::<usize>() + 1)
}

/// Encodes the labels of the (up to) three segments preceding position `i`
/// plus one speaker-change flag each. Slot 0 holds segment `i - 1`. A slot's
/// flag is set when its speaker differs from the speaker of the segment that
/// follows it. Slots before the dialog start stay zero.
///
/// `history[j]` is the path (in `space`) used for segment `j`; only `j < i`
/// is read.
pub fn context_features(space: &LabelSpace, dialog: &Dialog, i: usize, history: &[LabelPath]) -> Vec<f64> {
    let sizes = space.alphabet_sizes();
    let block = sizes.iter().sum::<usize>() + 1;
    let mut v = vec![0.0; CONTEXT_WINDOW * block];
    for slot in 0..CONTEXT_WINDOW {
        if slot >= i {
            break;
        }
        let j = i - 1 - slot;
        let base = slot * block;
        let mut offset = base;
        for (pos, &label) in history[j].labels().iter().enumerate() {
            if let Some(c) = space.class_of(pos, label) {
                v[offset + c] = 1.0;
            }
            offset += sizes[pos];
        }
        if dialog.segments[j].speaker != dialog.segments[j + 1].speaker {
            v[base + block - 1] = 1.0;
        }
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoldScheme {
    Dialog,
    Corpus,
}

impl FromStr for FoldScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dialog" => Ok(FoldScheme::Dialog),
            "corpus" => Ok(FoldScheme::Corpus),
            other => Err(Error::Config(format!("unknown fold scheme {other:?}"))),
        }
    }
}

impl fmt::Display for FoldScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FoldScheme::Dialog => "dialog",
            FoldScheme::Corpus => "corpus",
        })
    }
}

/// One cross-validation split. Extra (mapped) dialogs only ever train.
#[derive(Clone, Debug)]
pub struct Fold<'a> {
    pub held_out: String,
    pub train: Vec<&'a Dialog>,
    pub extra: Vec<&'a Dialog>,
    pub test: Vec<&'a Dialog>,
}

pub fn make_folds<'a>(gold: &'a CorpusSet, extras: &'a [CorpusSet], scheme: FoldScheme) -> Result<Vec<Fold<'a>>> {
    if gold.provenance != Provenance::Gold {
        return Err(Error::Config(
            "folds are built over a gold corpus; mapped corpora only train".into(),
        ));
    }
    gold.check_unique()?;
    let extra: Vec<&Dialog> = extras.iter().flat_map(|c| c.dialogs.iter()).collect();
    let groups: Vec<(String, Vec<&Dialog>)> = match scheme {
        FoldScheme::Dialog => gold.dialogs.iter().map(|d| (d.dialog_id.clone(), vec![d])).collect(),
        FoldScheme::Corpus => gold
            .corpus_ids()
            .into_iter()
            .map(|c| {
                (
                    c.to_string(),
                    gold.dialogs.iter().filter(|d| d.corpus_id == c).collect(),
                )
            })
            .collect(),
    };
    if groups.len() < 2 {
        return Err(Error::TooFewFolds(format!(
            "{scheme} scheme needs at least 2 groups, found {}",
            groups.len()
        )));
    }
    Ok(groups
        .into_iter()
        .map(|(held_out, test)| {
            let train = gold
                .dialogs
                .iter()
                .filter(|d| !test.iter().any(|t| t.dialog_id == d.dialog_id))
                .collect();
            Fold {
                held_out,
                train,
                extra: extra.clone(),
                test,
            }
        })
        .collect())
}

/// Segment counts per function and corpus, with Task/None totals.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CorpusStats {
    pub dialogs: usize,
    pub segments: usize,
    pub task_segments: usize,
    pub none_segments: usize,
    pub corpora: Vec<String>,
    /// function name -> per-corpus counts aligned with `corpora`
    pub functions: BTreeMap<String, Vec<usize>>,
    pub task_by_corpus: Vec<usize>,
    pub none_by_corpus: Vec<usize>,
}

impl CorpusStats {
    pub fn compute(corpus: &CorpusSet, taxonomy: &Taxonomy) -> Self {
        let corpora: Vec<String> = corpus.corpus_ids().into_iter().map(String::from).collect();
        let k = corpora.len();
        let mut stats = CorpusStats {
            dialogs: corpus.dialogs.len(),
            corpora: corpora.clone(),
            task_by_corpus: vec![0; k],
            none_by_corpus: vec![0; k],
            ..Default::default()
        };
        for d in &corpus.dialogs {
            let ci = corpora.iter().position(|c| *c == d.corpus_id).unwrap();
            for s in &d.segments {
                stats.segments += 1;
                match s.gold.terminal() {
                    Some(f) => {
                        stats.task_segments += 1;
                        stats.task_by_corpus[ci] += 1;
                        stats
                            .functions
                            .entry(taxonomy.name(f).to_string())
                            .or_insert_with(|| vec![0; k])[ci] += 1;
                    }
                    None => {
                        stats.none_segments += 1;
                        stats.none_by_corpus[ci] += 1;
                    }
                }
            }
        }
        stats
    }

    pub fn render(&self) -> String {
        let mut rows: Vec<(&String, &Vec<usize>)> = self.functions.iter().collect();
        rows.sort_by(|a, b| {
            b.1.iter()
                .sum::<usize>()
                .cmp(&a.1.iter().sum::<usize>())
                .then(a.0.cmp(b.0))
        });
        let width = rows
            .iter()
            .map(|r| r.0.len())
            .max()
            .unwrap_or(0)
            .max("General-Purpose CFs".len());
        let mut out = format!("{:width$}", "Function");
        for c in &self.corpora {
            out.push_str(&format!(" {c:>12}"));
        }
        out.push_str(&format!(" {:>8}\n", "Total"));
        let line = |name: &str, counts: &[usize]| {
            let mut s = format!("{name:width$}");
            for c in counts {
                s.push_str(&format!(" {c:>12}"));
            }
            s.push_str(&format!(" {:>8}\n", counts.iter().sum::<usize>()));
            s
        };
        for (name, counts) in rows {
            out.push_str(&line(name, counts));
        }
        out.push_str(&line("General-Purpose CFs", &self.task_by_corpus));
        out.push_str(&line("None", &self.none_by_corpus));
        let totals: Vec<usize> = self
            .task_by_corpus
            .iter()
            .zip(&self.none_by_corpus)
            .map(|(a, b)| a + b)
            .collect();
        out.push_str(&line("Total", &totals));
        out
    }
}

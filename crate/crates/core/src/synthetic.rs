//! Deterministic synthetic dialogs: the bundled toy corpus and a corpus with
//! the DialogBank's function distribution.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{CorpusSet, Dialog, Provenance, Segment};
use crate::error::Result;
use crate::rng;
use crate::taxonomy::{LabelPath, Taxonomy};

const FILLER: &[&str] = &[
    "the", "a", "we", "you", "it", "that", "then", "so", "there", "now", "this", "one",
];

const BACKCHANNEL: &[&str] = &["uh-huh", "mm", "um", "hmm", "uh", "yeah-yeah"];

/// Cue words by function; texts for a function always contain one of them.
fn cues(function: &str) -> &'static [&'static str] {
    match function {
        "Inform" => &["actually", "basically", "apparently"],
        "Answer" => &["because", "answer", "it-is"],
        "Agreement" => &["agree", "exactly", "true"],
        "Disagreement" => &["disagree", "not-really"],
        "Correction" => &["correction", "rather", "i-meant"],
        "Confirm" => &["yes", "correct", "right-yes"],
        "Disconfirm" => &["no", "nope", "incorrect"],
        "Propositional Question" => &["is-it", "does", "did"],
        "Check Question" => &["right?", "isn't-it", "okay?"],
        "Set Question" => &["where", "what", "which"],
        "Choice Question" => &["or", "either", "whether"],
        "Instruct" => &["go", "turn", "move"],
        "Request" => &["please", "could-you", "would-you"],
        "Suggest" => &["maybe", "how-about", "let's"],
        "Offer" => &["i-can", "shall-i"],
        "Promise" => &["promise", "i-will"],
        "Accept Request" => &["sure", "will-do", "ok-then"],
        "Decline Request" => &["cannot", "won't"],
        "Address Request" => &["depends", "let-me-see"],
        "Accept Suggest" => &["good-idea", "sounds-good"],
        "Decline Suggest" => &["rather-not", "bad-idea"],
        "Address Suggest" => &["perhaps-later"],
        "Accept Offer" => &["thanks", "yes-please"],
        "Decline Offer" => &["no-thanks"],
        "Address Offer" => &["not-sure-yet"],
        _ => &["misc"],
    }
}

fn text_for(function: Option<&str>, rng: &mut impl Rng) -> String {
    let mut words: Vec<&str> = Vec::new();
    match function {
        Some(f) => {
            let n = rng.gen_range(2..6);
            for _ in 0..n {
                words.push(FILLER.choose(rng).expect("non-empty"));
            }
            let cue = cues(f).choose(rng).expect("non-empty");
            let at = rng.gen_range(0..=words.len());
            words.insert(at, cue);
        }
        None => {
            words.push(BACKCHANNEL.choose(rng).expect("non-empty"));
            if rng.gen_bool(0.3) {
                words.push(BACKCHANNEL.choose(rng).expect("non-empty"));
            }
        }
    }
    words.join(" ")
}

fn segment(dialog: &str, index: usize, speaker: &str, text: String, gold: LabelPath) -> Segment {
    Segment {
        dialog_id: dialog.to_string(),
        index,
        speaker: speaker.to_string(),
        text,
        gold,
    }
}

/// Builds a dialog from a function sequence (`None` for segments without a
/// Task-dimension function). Speakers alternate, sometimes holding the turn.
pub fn dialog_from_functions(
    taxonomy: &Taxonomy,
    dialog_id: &str,
    corpus_id: &str,
    functions: &[Option<&str>],
    rng: &mut impl Rng,
) -> Result<Dialog> {
    let mut speaker = 0;
    let mut segments = Vec::with_capacity(functions.len());
    for (i, f) in functions.iter().enumerate() {
        if i > 0 && rng.gen_bool(0.7) {
            speaker = 1 - speaker;
        }
        let gold = match f {
            Some(name) => taxonomy.path_of(name)?,
            None => LabelPath::all_none(taxonomy.depth()),
        };
        segments.push(segment(dialog_id, i, ["A", "B"][speaker], text_for(*f, rng), gold));
    }
    Ok(Dialog {
        dialog_id: dialog_id.to_string(),
        corpus_id: corpus_id.to_string(),
        segments,
    })
}

const TOY_FUNCTIONS: &[Option<&str>] = &[
    Some("Inform"),
    Some("Answer"),
    Some("Set Question"),
    Some("Propositional Question"),
    Some("Instruct"),
    Some("Agreement"),
    Some("Check Question"),
    Some("Accept Request"),
    Some("Confirm"),
    Some("Request"),
    None,
    None,
];

fn toy_dialog(taxonomy: &Taxonomy, id: &str, corpus: &str, len: usize, seed: u64) -> Result<Dialog> {
    let mut rng = rng::stream(seed, id, 0);
    let fs: Vec<Option<&str>> = (0..len)
        .map(|_| *TOY_FUNCTIONS.choose(&mut rng).expect("non-empty"))
        .collect();
    dialog_from_functions(taxonomy, id, corpus, &fs, &mut rng)
}

/// Six gold dialogs from two corpora (`alpha`, `beta`), about a dozen
/// segments each, with cue words that make functions learnable.
pub fn toy_corpus(taxonomy: &Taxonomy, seed: u64) -> Result<CorpusSet> {
    let mut dialogs = Vec::new();
    for (i, corpus) in ["alpha", "alpha", "alpha", "beta", "beta", "beta"].iter().enumerate() {
        let id = format!("{corpus}-{}", i % 3 + 1);
        dialogs.push(toy_dialog(taxonomy, &id, corpus, 10 + i % 3, seed)?);
    }
    Ok(CorpusSet {
        dialogs,
        provenance: Provenance::Gold,
    })
}

/// Two mapped-provenance dialogs used as extra training data.
pub fn toy_extra(taxonomy: &Taxonomy, seed: u64) -> Result<CorpusSet> {
    let dialogs = (1..=2)
        .map(|i| toy_dialog(taxonomy, &format!("mapped-{i}"), "mapped", 12, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorpusSet {
        dialogs,
        provenance: Provenance::Mapped,
    })
}

/// Corpora, dialogs per corpus, and function counts per corpus of the
/// DialogBank's English portion.
pub const DIALOGBANK_CORPORA: [(&str, usize); 4] = [("MapTask", 3), ("Switchboard", 4), ("TRAINS", 3), ("DBOX", 5)];

pub const DIALOGBANK_FUNCTIONS: &[(&str, [usize; 4])] = &[
    ("Inform", [56, 338, 44, 37]),
    ("Instruct", [143, 0, 1, 11]),
    ("Answer", [35, 30, 16, 31]),
    ("Propositional Question", [26, 11, 2, 25]),
    ("Set Question", [7, 12, 13, 28]),
    ("Accept Request", [52, 0, 1, 1]),
    ("Agreement", [8, 42, 2, 1]),
    ("Check Question", [28, 9, 7, 6]),
    ("Confirm", [11, 9, 6, 14]),
    ("Suggest", [3, 3, 2, 5]),
    ("Disconfirm", [1, 1, 0, 10]),
    ("Request", [2, 2, 1, 4]),
    ("Choice Question", [3, 0, 1, 4]),
    ("Correction", [2, 0, 0, 1]),
    ("Address Request", [3, 0, 0, 0]),
    ("Offer", [0, 0, 0, 2]),
    ("Decline Offer", [0, 0, 0, 1]),
    ("Disagreement", [1, 0, 0, 0]),
    ("Accept Offer", [0, 0, 0, 1]),
    ("Accept Suggest", [0, 0, 0, 1]),
    ("Promise", [0, 0, 0, 1]),
];

pub const DIALOGBANK_NONE: [usize; 4] = [281, 555, 140, 266];

/// A synthetic corpus with exactly the DialogBank's per-corpus function and
/// `None` counts (2,360 segments), shuffled and split into dialogs.
pub fn dialogbank_like(taxonomy: &Taxonomy, seed: u64) -> Result<CorpusSet> {
    let mut dialogs = Vec::new();
    for (c, &(corpus, n_dialogs)) in DIALOGBANK_CORPORA.iter().enumerate() {
        let mut rng = rng::stream(seed, corpus, 0);
        let mut fs: Vec<Option<&str>> = Vec::new();
        for (name, counts) in DIALOGBANK_FUNCTIONS {
            fs.extend(std::iter::repeat_n(Some(*name), counts[c]));
        }
        fs.extend(std::iter::repeat_n(None, DIALOGBANK_NONE[c]));
        fs.shuffle(&mut rng);
        let per = fs.len().div_ceil(n_dialogs);
        for (k, chunk) in fs.chunks(per).enumerate() {
            let id = format!("{}-{}", corpus.to_lowercase(), k + 1);
            dialogs.push(dialog_from_functions(taxonomy, &id, corpus, chunk, &mut rng)?);
        }
    }
    Ok(CorpusSet {
        dialogs,
        provenance: Provenance::Gold,
    })
}

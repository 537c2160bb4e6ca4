use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hcfr_core::corpus::{scenario_filter, CorpusStats};
use hcfr_core::harness::{self, build_inputs, predict_dialog, FoldContext, ModelBuilder};
use hcfr_core::metrics::{per_level_diagnostics, round2, MetricsReport};
use hcfr_core::model_file::{InputSpec, StoredModel};
use hcfr_core::predictions::{examples, read_records, records_gated, write_records, PredictionRecord};
use hcfr_core::{
    synthetic, Ablation, Approach, ContextSource, CorpusSet, DecodeMode, Encoder, ExperimentConfig, FeaturizerConfig,
    FoldScheme, HashingEncoder, LabelSpace, Member, ModelFile, PrecomputedEncoder, Provenance, Scenario, Taxonomy,
    TrainConfig,
};

/// Usage problems detected after argument parsing; exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

// Fallible stdout writes, so a closed pipe ends the program quietly.
macro_rules! out {
    ($($arg:tt)*) => {
        write!(std::io::stdout().lock(), $($arg)*)?
    };
}

macro_rules! outln {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout().lock(), $($arg)*)?
    };
}

#[derive(Parser)]
#[command(name = "hcfr", version, about = "Hierarchical communicative function recognition")]
struct Cli {
    /// Taxonomy document (defaults to the bundled one).
    #[arg(long, global = true, env = "HCFR_TAXONOMY")]
    taxonomy: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Show or validate a taxonomy document.
    Taxonomy {
        #[command(subcommand)]
        action: TaxonomyAction,
    },
    /// Corpus statistics, validation, synthetic corpora and feature export.
    Corpus {
        #[command(subcommand)]
        action: CorpusAction,
    },
    /// Train one model on a corpus.
    Train(TrainArgs),
    /// Predict label paths for a corpus with a trained model.
    Predict(PredictArgs),
    /// Score a predictions file.
    Eval(EvalArgs),
    /// Run a cross-validation experiment.
    Crossval(CrossvalArgs),
    /// Per-level diagnostics of a predictions file.
    Diagnose(EvalArgs),
}

#[derive(Subcommand)]
enum TaxonomyAction {
    /// Print the tree with levels.
    Show {
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Check a document for structural errors.
    Validate {
        #[arg(long)]
        file: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Toy,
    ToyExtra,
    Dialogbank,
}

#[derive(Subcommand)]
enum CorpusAction {
    /// Segment and function counts per corpus.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_parser = parse_scenario)]
        scenario: Option<Scenario>,
        #[arg(long)]
        json: bool,
    },
    /// Parse a corpus file and report problems.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Write a deterministic synthetic corpus.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export hashed segment vectors in the precomputed-embedding format.
    ExportFeatures {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: hcfr_core::Error| e.to_string())
}

fn parse_folds(s: &str) -> Result<FoldScheme, String> {
    s.parse().map_err(|e: hcfr_core::Error| e.to_string())
}

fn parse_approach(s: &str) -> Result<Approach, String> {
    s.parse().map_err(|e: hcfr_core::Error| e.to_string())
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    s.parse().map_err(|e: hcfr_core::Error| e.to_string())
}

fn parse_decode(s: &str) -> Result<DecodeMode, String> {
    s.parse().map_err(|e: hcfr_core::Error| e.to_string())
}

#[derive(Clone, Copy, ValueEnum)]
enum ContextArg {
    Predicted,
    Gold,
}

/// Options shared by `train` and `crossval`.
#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Experiment config JSON; flags given explicitly override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
    #[arg(long, value_parser = parse_approach)]
    approach: Option<Approach>,
    /// Ablation to apply; repeatable.
    #[arg(long = "ablate", value_parser = parse_ablation)]
    ablations: Vec<Ablation>,
    /// Mapped-provenance corpus added to training; repeatable.
    #[arg(long)]
    extra: Vec<PathBuf>,
    /// Precomputed segment vectors instead of hashed n-grams.
    #[arg(long)]
    precomputed: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Hash buckets per n-gram channel.
    #[arg(long)]
    hash_dim: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Gold dialog used for early stopping (default: the last one).
    #[arg(long)]
    val_dialog: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the gate of a two-step model to its own file.
    #[arg(long)]
    gate_out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Gate model replacing the gate of a two-step model.
    #[arg(long)]
    gate: Option<PathBuf>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    precomputed: Option<PathBuf>,
    #[arg(long, default_value = "map", value_parser = parse_decode)]
    decode: DecodeMode,
    /// Include per-level distributions in each record.
    #[arg(long)]
    dump_dists: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Only records of this run.
    #[arg(long)]
    run: Option<usize>,
    /// Only records of this fold.
    #[arg(long)]
    fold: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CrossvalArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long, value_parser = parse_folds)]
    folds: Option<FoldScheme>,
    #[arg(long)]
    runs: Option<usize>,
    /// Use the base seed for every run.
    #[arg(long)]
    same_seed: bool,
    /// History used as context for test segments.
    #[arg(long, value_enum)]
    context: Option<ContextArg>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory for config, predictions and reports.
    #[arg(long)]
    out: PathBuf,
}

fn load_taxonomy(path: Option<&Path>) -> anyhow::Result<Arc<Taxonomy>> {
    Ok(Arc::new(match path {
        Some(p) => Taxonomy::load(p)?,
        None => Taxonomy::bundled(),
    }))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

impl ExperimentArgs {
    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.scenario {
            cfg.scenario = s;
        }
        if let Some(a) = self.approach {
            cfg.approach = a;
        }
        if !self.ablations.is_empty() {
            cfg.ablations = self.ablations.clone();
        }
        if !self.extra.is_empty() {
            cfg.extra = self.extra.clone();
        }
        if self.precomputed.is_some() {
            cfg.precomputed = self.precomputed.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        let t = &mut cfg.train;
        t.hidden = self.hidden.unwrap_or(t.hidden);
        t.max_epochs = self.max_epochs.unwrap_or(t.max_epochs);
        t.patience = self.patience.unwrap_or(t.patience);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.dropout = self.dropout.unwrap_or(t.dropout);
        t.learning_rate = self.learning_rate.unwrap_or(t.learning_rate);
        if let Some(h) = self.hash_dim {
            cfg.features.hash_dim = h;
        }
        Ok(cfg)
    }
}

fn load_data(
    corpus: &Path,
    cfg: &ExperimentConfig,
    taxonomy: &Taxonomy,
) -> anyhow::Result<(CorpusSet, Vec<CorpusSet>, Arc<dyn Encoder>)> {
    let gold = CorpusSet::load(corpus, taxonomy, Provenance::Gold)?;
    let extras = cfg
        .extra
        .iter()
        .map(|p| CorpusSet::load(p, taxonomy, Provenance::Mapped))
        .collect::<hcfr_core::Result<Vec<_>>>()?;
    let encoder = cfg.encoder()?;
    Ok((gold, extras, encoder))
}

fn input_spec(cfg: &ExperimentConfig, encoder: &dyn Encoder) -> InputSpec {
    match cfg.precomputed {
        Some(_) => InputSpec::Precomputed { dim: encoder.dim() },
        None => InputSpec::Hashing(cfg.features.clone()),
    }
}

fn cmd_taxonomy(action: TaxonomyAction, global: Option<&Path>) -> anyhow::Result<()> {
    match action {
        TaxonomyAction::Show { file } => {
            let t = load_taxonomy(file.as_deref().or(global))?;
            out!("{}", t.render());
            outln!("depth {}, {} functions", t.depth(), t.len());
        }
        TaxonomyAction::Validate { file } => {
            let t = load_taxonomy(file.as_deref().or(global))?;
            outln!(
                "ok: depth {}, {} functions, {} valid paths",
                t.depth(),
                t.len(),
                t.valid_paths().len()
            );
        }
    }
    Ok(())
}

fn cmd_corpus(action: CorpusAction, taxonomy: &Taxonomy) -> anyhow::Result<()> {
    match action {
        CorpusAction::Stats { corpus, scenario, json } => {
            let mut c = CorpusSet::load(&corpus, taxonomy, Provenance::Gold)?;
            if let Some(s) = scenario {
                c = scenario_filter(&c, s);
            }
            let stats = CorpusStats::compute(&c, taxonomy);
            if json {
                outln!("{}", serde_json::to_string_pretty(&stats)?);
            } else {
                out!("{}", stats.render());
            }
        }
        CorpusAction::Validate { corpus } => {
            let c = CorpusSet::load(&corpus, taxonomy, Provenance::Gold)?;
            c.check_unique()?;
            outln!("ok: {} dialogs, {} segments", c.dialogs.len(), c.n_segments());
        }
        CorpusAction::Synth { kind, seed, out } => {
            let c = match kind {
                SynthKind::Toy => synthetic::toy_corpus(taxonomy, seed)?,
                SynthKind::ToyExtra => synthetic::toy_extra(taxonomy, seed)?,
                SynthKind::Dialogbank => synthetic::dialogbank_like(taxonomy, seed)?,
            };
            let mut w = create(&out)?;
            c.write_jsonl(&mut w, taxonomy)?;
            w.flush()?;
        }
        CorpusAction::ExportFeatures { corpus, features, out } => {
            let cfg: FeaturizerConfig = match features {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p)?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                None => FeaturizerConfig::default(),
            };
            let c = CorpusSet::load(&corpus, taxonomy, Provenance::Gold)?;
            let enc = HashingEncoder::new(cfg)?;
            let mut w = create(&out)?;
            PrecomputedEncoder::export(&enc, c.segments(), &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn validate_config(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    cfg.validate().map_err(|e| usage(e.to_string()))
}

fn cmd_train(args: TrainArgs, taxonomy: Arc<Taxonomy>) -> anyhow::Result<()> {
    let cfg = args.exp.config()?;
    validate_config(&cfg)?;
    if args.gate_out.is_some() && cfg.approach != Approach::TwoStep {
        return Err(usage("--gate-out applies to the two-step approach"));
    }
    let (gold, extras, encoder) = load_data(&args.exp.corpus, &cfg, &taxonomy)?;
    let member = harness::train_single(
        &gold,
        &extras,
        taxonomy.clone(),
        encoder.as_ref(),
        &cfg,
        args.val_dialog.as_deref(),
    )?;
    let spec = input_spec(&cfg, encoder.as_ref());
    if let (Some(path), Member::TwoStep { gate, .. }) = (&args.gate_out, &member) {
        ModelFile::new(
            cfg.scenario,
            cfg.approach,
            spec.clone(),
            &taxonomy,
            StoredModel::Gate(gate.clone()),
        )
        .save(path)?;
    }
    ModelFile::new(cfg.scenario, cfg.approach, spec, &taxonomy, StoredModel::Member(member)).save(&args.out)?;
    Ok(())
}

fn cmd_predict(args: PredictArgs, taxonomy: Arc<Taxonomy>) -> anyhow::Result<()> {
    let file = ModelFile::load(&args.model)?;
    file.check_taxonomy(&taxonomy)?;
    let mut member = match file.model {
        StoredModel::Member(m) => m,
        StoredModel::Gate(_) => bail!("{} holds a gate only; pass it with --gate", args.model.display()),
    };
    if let Some(gpath) = &args.gate {
        let g = ModelFile::load(gpath)?;
        let StoredModel::Gate(new_gate) = g.model else {
            bail!("{} is not a gate model", gpath.display());
        };
        match &mut member {
            Member::TwoStep { gate, .. } => *gate = new_gate,
            _ => return Err(usage("--gate needs a two-step model")),
        }
    }
    let encoder: Box<dyn Encoder> = match (&file.input, &args.precomputed) {
        (InputSpec::Hashing(cfg), _) => Box::new(HashingEncoder::new(cfg.clone())?),
        (InputSpec::Precomputed { dim }, Some(p)) => {
            let enc = PrecomputedEncoder::load(p)?;
            if enc.dim() != *dim {
                bail!("precomputed vectors have dimension {}, model expects {dim}", enc.dim());
            }
            Box::new(enc)
        }
        (InputSpec::Precomputed { .. }, None) => {
            return Err(usage("model was trained on precomputed vectors; pass --precomputed"))
        }
    };
    let corpus = scenario_filter(
        &CorpusSet::load(&args.corpus, &taxonomy, Provenance::Gold)?,
        file.scenario,
    );
    let space = LabelSpace::new(taxonomy.clone(), file.scenario.gated());
    let inner = LabelSpace::new(taxonomy, false);
    let train = TrainConfig::default();
    let ctx = FoldContext {
        space: &space,
        inner: &inner,
        approach: file.approach,
        builder: ModelBuilder {
            decode: args.decode,
            ..ModelBuilder::default()
        },
        train: &train,
        context: ContextSource::Predicted,
        encoder_dim: encoder.dim(),
    };
    let members = [member];
    let mut records = Vec::new();
    for d in &corpus.dialogs {
        let inputs = build_inputs(&space, d, encoder.as_ref())?;
        for p in predict_dialog(&ctx, &members, &inputs, 0)? {
            records.push(PredictionRecord {
                run: None,
                fold: None,
                dialog: p.dialog,
                corpus: p.corpus,
                index: p.index,
                gold: space.path_to_names(&p.gold),
                pred: space.path_to_names(&p.pred),
                prob: p.prob,
                log_prob: p.log_prob,
                dists: args.dump_dists.then_some(p.dists),
            });
        }
    }
    let mut w = create(&args.out)?;
    write_records(&records, &mut w)?;
    w.flush()?;
    Ok(())
}

fn selected_records(args: &EvalArgs, taxonomy: &Arc<Taxonomy>) -> anyhow::Result<(Vec<PredictionRecord>, LabelSpace)> {
    let records: Vec<PredictionRecord> = read_records(&args.predictions)?
        .into_iter()
        .filter(|r| args.run.is_none_or(|run| r.run == Some(run)))
        .filter(|r| args.fold.as_ref().is_none_or(|f| r.fold.as_ref() == Some(f)))
        .collect();
    if records.is_empty() {
        bail!("no prediction records selected");
    }
    let gated = records_gated(&records, taxonomy.depth())?;
    Ok((records, LabelSpace::new(taxonomy.clone(), gated)))
}

fn cmd_eval(args: EvalArgs, taxonomy: Arc<Taxonomy>) -> anyhow::Result<()> {
    let (records, space) = selected_records(&args, &taxonomy)?;
    let report = MetricsReport::compute(&examples(&records, &space)?)?;
    if args.json {
        outln!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        outln!("n  {}", report.n);
        for (name, v) in hcfr_core::metrics::METRIC_NAMES.iter().zip(report.values()) {
            outln!("{name:<3}{:>8.2}", round2(v));
        }
    }
    Ok(())
}

fn cmd_diagnose(args: EvalArgs, taxonomy: Arc<Taxonomy>) -> anyhow::Result<()> {
    let (records, space) = selected_records(&args, &taxonomy)?;
    let diag = per_level_diagnostics(&examples(&records, &space)?, &space)?;
    if args.json {
        outln!("{}", serde_json::to_string_pretty(&diag)?);
    } else {
        out!("{}", diag.render());
    }
    Ok(())
}

fn cmd_crossval(args: CrossvalArgs, taxonomy: Arc<Taxonomy>) -> anyhow::Result<()> {
    let mut cfg = args.exp.config()?;
    if let Some(f) = args.folds {
        cfg.folds = f;
    }
    if let Some(r) = args.runs {
        cfg.runs = r;
    }
    if args.same_seed {
        cfg.same_seed_each_run = true;
    }
    if let Some(c) = args.context {
        cfg.inference_context = match c {
            ContextArg::Predicted => ContextSource::Predicted,
            ContextArg::Gold => ContextSource::Gold,
        };
    }
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    validate_config(&cfg)?;
    let (gold, extras, encoder) = load_data(&args.exp.corpus, &cfg, &taxonomy)?;
    let result = harness::crossval(&gold, &extras, taxonomy, encoder.as_ref(), &cfg)?;
    harness::write_artifacts(&args.out, &cfg, &result)?;
    out!("{}", result.report.render());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let global = cli.taxonomy.as_deref();
    match cli.command {
        Command::Taxonomy { action } => cmd_taxonomy(action, global),
        Command::Corpus { action } => cmd_corpus(action, &*load_taxonomy(global)?),
        Command::Train(a) => cmd_train(a, load_taxonomy(global)?),
        Command::Predict(a) => cmd_predict(a, load_taxonomy(global)?),
        Command::Eval(a) => cmd_eval(a, load_taxonomy(global)?),
        Command::Crossval(a) => cmd_crossval(a, load_taxonomy(global)?),
        Command::Diagnose(a) => cmd_diagnose(a, load_taxonomy(global)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<std::io::Error>().map(|e| e.kind()) == Some(std::io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) if e.downcast_ref::<Usage>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(1)
        }
    }
}

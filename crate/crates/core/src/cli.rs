//! Command-line front end: prepare, annotate, train, generate, evaluate,
//! synth.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::annotator::{AnnotateError, Annotator, RuleAnnotator};
use crate::autograd::{load_checkpoint, CheckpointError, GraphError};
use crate::config::{ConfigError, RunConfig};
use crate::corpus::{self, build_vocabs, filter_entities, split_dataset, CorpusError, Entity, VocabSet};
use crate::lexicon::{tokenize, Lexicon};
use crate::metrics::{self, MetricError};
use crate::model::{DecodeMode, Model, ModelError};
use crate::synthetic;
use crate::train::{self, TrainError, TrainOutputs, Trainer};

pub const CONFIG_FILE: &str = "config.txt";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("entity `{id}`: {source}")]
    Entity { id: String, source: ModelError },
}

impl CliError {
    /// Short stable category used in the error prefix.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Io { .. } => "io",
            Self::Corpus(_) => "corpus",
            Self::Config(_) => "config",
            Self::Annotate(_) => "annotate",
            Self::Model(_) | Self::Entity { .. } => "model",
            Self::Train(_) => "train",
            Self::Checkpoint(_) => "checkpoint",
            Self::Metric(_) => "metrics",
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Parser)]
#[command(name = "typedesc", version, about = "Two-stage entity type description generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter, split, annotate and build vocabularies.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        min_statements: Option<usize>,
        #[arg(long)]
        value_vocab: Option<usize>,
        #[arg(long)]
        target_vocab: Option<usize>,
        /// Base config file; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Annotate descriptions as `description TAB template TAB heads`.
    Annotate {
        /// Text file with one description per line.
        #[arg(long, conflicts_with = "text")]
        input: Option<PathBuf>,
        /// TSV output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// A single description.
        #[arg(long)]
        text: Option<String>,
    },
    /// Train both stages.
    Train {
        #[arg(long)]
        data_dir: PathBuf,
        /// Defaults to the config written by `prepare`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// `key=value` overrides applied after the config file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        quiet: bool,
    },
    /// Generate templates and descriptions.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `greedy` or `beam:<k>`.
        #[arg(long, default_value = "greedy")]
        mode: String,
        /// Use this template instead of Stage 1's output.
        #[arg(long)]
        template: Option<String>,
    },
    /// Score predictions against references.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        references: PathBuf,
        /// Report JSON path; the table always goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic entity corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Parses `args` and runs the command. Help and version requests print
/// and return `Ok`.
pub fn main_with_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            return Err(CliError::Usage(first.trim_start_matches("error: ").to_string()));
        }
    };
    run(cli.command)
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Prepare { input, out_dir, seed, min_statements, value_vocab, target_vocab, config } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&p)?,
                None => RunConfig::default(),
            };
            cfg.train.seed = seed;
            if let Some(m) = min_statements {
                cfg.min_statements = m;
            }
            if let Some(v) = value_vocab {
                cfg.value_vocab = v;
            }
            if let Some(v) = target_vocab {
                cfg.target_vocab = v;
            }
            prepare(&input, &out_dir, &mut cfg)
        }
        Command::Annotate { input, out, text } => annotate(input.as_deref(), out.as_deref(), text.as_deref()),
        Command::Train { data_dir, config, out_dir, overrides, quiet } => {
            let path = config.unwrap_or_else(|| data_dir.join(CONFIG_FILE));
            let mut cfg = if path.exists() { RunConfig::load(&path)? } else { RunConfig::default() };
            cfg.apply_overrides(&overrides)?;
            train_cmd(&data_dir, &out_dir, cfg, quiet)
        }
        Command::Generate { checkpoint, input, out, mode, template } => {
            let mode: DecodeMode = mode.parse().map_err(CliError::Usage)?;
            generate(&checkpoint, &input, &out, mode, template.as_deref())
        }
        Command::Evaluate { predictions, references, out } => {
            let lexicon = Lexicon::english();
            let annotator = RuleAnnotator::new(lexicon.clone());
            let report = metrics::evaluate(&predictions, &references, &annotator, &lexicon)?;
            if let Some(out) = out {
                let json = serde_json::to_string_pretty(&report).expect("report serializes");
                fs::write(&out, json + "\n").map_err(io_err(&out))?;
            }
            print!("{report}");
            Ok(())
        }
        Command::Synth { out, count, seed } => {
            let ents = synthetic::generate(count, seed);
            corpus::write_jsonl(&out, &ents)?;
            Ok(())
        }
    }
}

fn annotate_all(entities: &mut [Entity], annotator: &RuleAnnotator) -> Result<()> {
    for e in entities {
        e.template = Some(annotator.annotate(&e.description_tokens())?.template_string());
    }
    Ok(())
}

pub fn prepare(input: &Path, out_dir: &Path, cfg: &mut RunConfig) -> Result<()> {
    let lexicon = Lexicon::english();
    let annotator = RuleAnnotator::new(lexicon.clone());
    let entities = filter_entities(corpus::load_jsonl(input)?, cfg.min_statements);
    let mut split = split_dataset(&entities, cfg.train.seed)?;
    let vocabs = build_vocabs(&split.train, cfg.value_vocab, cfg.target_vocab, cfg.model.max_position, &lexicon)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    for (name, part) in [("train.jsonl", &mut split.train), ("valid.jsonl", &mut split.valid), ("test.jsonl", &mut split.test)] {
        annotate_all(part, &annotator)?;
        corpus::write_jsonl(&out_dir.join(name), part)?;
    }
    vocabs.save(out_dir)?;
    cfg.data_dir = Some(out_dir.to_path_buf());
    cfg.save(&out_dir.join(CONFIG_FILE))?;
    Ok(())
}

fn annotation_row(annotator: &RuleAnnotator, description: &str) -> Result<String> {
    let a = annotator.annotate(&tokenize(description))?;
    Ok(format!("{description}\t{}\t{}", a.template_string(), a.heads().join(",")))
}

fn annotate(input: Option<&Path>, out: Option<&Path>, text: Option<&str>) -> Result<()> {
    let annotator = RuleAnnotator::new(Lexicon::english());
    let mut rows = String::new();
    match (input, text) {
        (_, Some(t)) => rows = annotation_row(&annotator, t.trim())? + "\n",
        (Some(input), None) => {
            let text = fs::read_to_string(input).map_err(io_err(input))?;
            for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
                rows.push_str(&annotation_row(&annotator, line)?);
                rows.push('\n');
            }
        }
        (None, None) => return Err(CliError::Usage("annotate needs --input or --text".into())),
    }
    match out {
        Some(out) => fs::write(out, rows).map_err(io_err(out)),
        None => std::io::stdout().lock().write_all(rows.as_bytes()).map_err(io_err(Path::new("<stdout>"))),
    }
}

fn load_split(data_dir: &Path, name: &str, annotator: &RuleAnnotator) -> Result<Vec<Entity>> {
    let path = data_dir.join(name);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut ents = corpus::load_jsonl(&path)?;
    for e in &mut ents {
        if e.template.is_none() {
            e.template = Some(annotator.annotate(&e.description_tokens())?.template_string());
        }
    }
    Ok(ents)
}

fn train_cmd(data_dir: &Path, out_dir: &Path, mut cfg: RunConfig, quiet: bool) -> Result<()> {
    let annotator = RuleAnnotator::new(Lexicon::english());
    let train_set = load_split(data_dir, "train.jsonl", &annotator)?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrain.into());
    }
    let valid_set = load_split(data_dir, "valid.jsonl", &annotator)?;
    let vocabs = VocabSet::load(data_dir, cfg.model.max_position)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    vocabs.save(out_dir)?;
    cfg.data_dir = Some(data_dir.to_path_buf());
    cfg.out_dir = Some(out_dir.to_path_buf());
    cfg.save(&out_dir.join(CONFIG_FILE))?;

    let model = Model::new(cfg.model, vocabs, cfg.train.seed)?;
    let examples = |ents: &[Entity]| -> Result<Vec<_>> {
        ents.iter().map(|e| model.example(e, None).map_err(|source| CliError::Entity { id: e.entity_id.clone(), source })).collect()
    };
    let train_ex = examples(&train_set)?;
    let valid_ex = examples(&valid_set)?;
    let mut trainer = Trainer::new(model, cfg.train.clone())?;
    let outputs = TrainOutputs::in_dir(out_dir);
    let report = train::train(&mut trainer, &train_ex, &valid_ex, Some(&outputs), |r, _| {
        if !quiet {
            let valid = r.valid_loss.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
            eprintln!("epoch {:>3}  train {:.4}  valid {}  {:.1}s", r.epoch, r.train_loss, valid, r.seconds);
        }
        true
    })?;
    if !quiet {
        eprintln!("best epoch {} (valid {:.4})", report.best_epoch, report.best_loss);
    }
    Ok(())
}

/// Rebuilds a trained model from the directory holding `checkpoint`.
pub fn load_model(checkpoint: &Path) -> Result<Model> {
    let dir = checkpoint.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let params = load_checkpoint(checkpoint)?;
    let cfg = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let vocabs = VocabSet::load(dir, cfg.model.max_position)?;
    let mut model = Model::new(cfg.model, vocabs, cfg.train.seed)?;
    model.store.load_from(&params).map_err(|e: GraphError| ModelError::from(e))?;
    Ok(model)
}

#[derive(Serialize)]
struct GeneratedLine<'a> {
    entity_id: &'a str,
    template: String,
    hypothesis: String,
}

fn generate(checkpoint: &Path, input: &Path, out: &Path, mode: DecodeMode, template: Option<&str>) -> Result<()> {
    let model = load_model(checkpoint)?;
    let entities = corpus::load_jsonl(input)?;
    let results: Vec<_> = entities
        .par_iter()
        .map(|e| model.generate(e, mode, template).map_err(|source| CliError::Entity { id: e.entity_id.clone(), source }))
        .collect();
    let mut text = String::new();
    for (e, r) in entities.iter().zip(results) {
        let g = r?;
        let line = GeneratedLine { entity_id: &e.entity_id, template: g.template.join(" "), hypothesis: g.description.join(" ") };
        text.push_str(&serde_json::to_string(&line).expect("line serializes"));
        text.push('\n');
    }
    fs::write(out, text).map_err(io_err(out))
}

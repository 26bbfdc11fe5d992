//! Entity ingestion, filtering, splitting and infobox reconstruction.

mod vocab;

pub use vocab::{build_vocabs, Vocab, VocabSet, BOS, EOS, PAD, UNK};

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::lexicon::{is_punctuation, tokenize, Lexicon};
use crate::metrics::is_copied;

pub const DEFAULT_MAX_POSITION: usize = 16;
pub const DEFAULT_MIN_STATEMENTS: usize = 5;

pub const INSTANCE_OF: &str = "P31";
pub const SUBCLASS_OF: &str = "P279";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed json: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing key `{key}`")]
    MissingKey { line: usize, key: &'static str },
    #[error("line {line}: key `{key}` has the wrong type")]
    WrongType { line: usize, key: &'static str },
    #[error("need at least 10 entities to split, got {0}")]
    TooFewToSplit(usize),
    #[error("vocabulary size {size} is smaller than the {reserved} reserved tokens")]
    VocabTooSmall { size: usize, reserved: usize },
    #[error("cannot build vocabularies from an empty training set")]
    EmptyTrain,
    #[error("corpus has no non-stopword description tokens")]
    EmptyCorpus,
    #[error("vocab file {path} line {line}: duplicate token `{token}`")]
    DuplicateToken { path: String, line: usize, token: String },
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub property_id: String,
    pub property_label: String,
    pub value: String,
}

impl Statement {
    pub fn new(property_id: &str, property_label: &str, value: &str) -> Self {
        Self {
            property_id: property_id.to_string(),
            property_label: property_label.to_lowercase(),
            value: value.to_lowercase(),
        }
    }

    /// The property label as a single token: "named after" -> "named_after".
    pub fn property_token(&self) -> String {
        self.property_label.split_whitespace().collect::<Vec<_>>().join("_")
    }

    pub fn value_tokens(&self) -> Vec<String> {
        tokenize(&self.value)
    }
}

/// A knowledge-graph entity with its infobox and gold type description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    pub entity_id: String,
    pub label: String,
    /// Lowercased, tokenized and re-joined with single spaces.
    pub description: String,
    pub statements: Vec<Statement>,
    /// Gold head-modifier template, when the dataset was prepared with one.
    pub template: Option<String>,
}

impl Entity {
    pub fn new(entity_id: &str, label: &str, description: &str, statements: Vec<Statement>) -> Self {
        Self {
            entity_id: entity_id.to_string(),
            label: label.to_lowercase(),
            description: tokenize(description).join(" "),
            statements,
            template: None,
        }
    }

    pub fn description_tokens(&self) -> Vec<String> {
        self.description.split_whitespace().map(str::to_string).collect()
    }

    /// Every value word of the infobox, in statement order.
    pub fn source_values(&self) -> Vec<String> {
        self.statements.iter().flat_map(|s| s.value_tokens()).collect()
    }

    /// Value words of the `instance of` and `subclass of` statements.
    pub fn kg_type_values(&self) -> Vec<String> {
        self.statements
            .iter()
            .filter(|s| s.property_id == INSTANCE_OF || s.property_id == SUBCLASS_OF)
            .flat_map(|s| s.value_tokens())
            .collect()
    }

    /// JSONL record form.
    pub fn to_json(&self) -> Value {
        let statements: Vec<Value> = self
            .statements
            .iter()
            .map(|s| serde_json::json!([s.property_id, s.property_label, s.value]))
            .collect();
        let mut obj = serde_json::json!({
            "entity_id": self.entity_id,
            "label": self.label,
            "description": self.description,
            "statements": statements,
        });
        if let Some(t) = &self.template {
            obj["template"] = Value::String(t.clone());
        }
        obj
    }
}

/// One reconstructed infobox word with its property and in-value position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceToken {
    pub word: String,
    pub property: String,
    pub position: usize,
}

impl SourceToken {
    pub fn new(word: &str, property: &str, position: usize) -> Self {
        Self { word: word.to_string(), property: property.to_string(), position }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<Entity>,
    pub valid: Vec<Entity>,
    pub test: Vec<Entity>,
}

fn get_str(obj: &serde_json::Map<String, Value>, key: &'static str, line: usize) -> Result<String> {
    match obj.get(key) {
        None => Err(CorpusError::MissingKey { line, key }),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(CorpusError::WrongType { line, key }),
    }
}

fn parse_entity(text: &str, line: usize) -> Result<Entity> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| CorpusError::Malformed { line, message: e.to_string() })?;
    let obj = value
        .as_object()
        .ok_or_else(|| CorpusError::Malformed { line, message: "expected a json object".into() })?;
    let entity_id = get_str(obj, "entity_id", line)?;
    let label = get_str(obj, "label", line)?;
    let description = get_str(obj, "description", line)?;
    let raw = obj.get("statements").ok_or(CorpusError::MissingKey { line, key: "statements" })?;
    let wrong = CorpusError::WrongType { line, key: "statements" };
    let mut statements = Vec::new();
    for item in raw.as_array().ok_or(wrong)? {
        let triple = match item.as_array() {
            Some(t) if t.len() == 3 => t,
            _ => return Err(CorpusError::WrongType { line, key: "statements" }),
        };
        let field = |i: usize| {
            triple[i].as_str().ok_or(CorpusError::WrongType { line, key: "statements" })
        };
        statements.push(Statement::new(field(0)?, field(1)?, field(2)?));
    }
    let mut entity = Entity::new(&entity_id, &label, &description, statements);
    if let Some(Value::String(t)) = obj.get("template") {
        entity.template = Some(t.clone());
    }
    Ok(entity)
}

/// Parses JSONL text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_jsonl(text: &str) -> Result<Vec<Entity>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_entity(l, i + 1))
        .collect()
}

pub fn load_jsonl(path: &Path) -> Result<Vec<Entity>> {
    let io_err = |source| CorpusError::Io { path: path.display().to_string(), source };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_entity(&line, i + 1)?);
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, entities: &[Entity]) -> Result<()> {
    let io_err = |source| CorpusError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for e in entities {
        writeln!(w, "{}", e.to_json()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Keeps entities with at least `min_statements` statements and a non-empty
/// description.
pub fn filter_entities(entities: Vec<Entity>, min_statements: usize) -> Vec<Entity> {
    entities
        .into_iter()
        .filter(|e| e.statements.len() >= min_statements && !e.description.is_empty())
        .collect()
}

/// Flattens the infobox into value words tagged with their property token and
/// position inside the value. Positions saturate at `max_position - 1`.
pub fn reconstruct_infobox(entity: &Entity, max_position: usize) -> Vec<SourceToken> {
    let last = max_position.max(1) - 1;
    let mut out = Vec::new();
    for st in &entity.statements {
        let property = st.property_token();
        for (k, word) in st.value_tokens().into_iter().enumerate() {
            out.push(SourceToken { word, property: property.clone(), position: k.min(last) });
        }
    }
    out
}

/// Seeded shuffle followed by an 8:1:1 partition.
pub fn split_dataset(entities: &[Entity], seed: u64) -> Result<DatasetSplit> {
    let n = entities.len();
    if n < 10 {
        return Err(CorpusError::TooFewToSplit(n));
    }
    let mut shuffled = entities.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (n as f64 * 0.8).round() as usize;
    let n_valid = (n as f64 * 0.1).round() as usize;
    let test = shuffled.split_off(n_train + n_valid);
    let valid = shuffled.split_off(n_train);
    Ok(DatasetSplit { train: shuffled, valid, test })
}

/// Fraction of non-stopword description tokens that are copied from the
/// infobox values under the prefix rule of [`is_copied`]. Heads are included.
pub fn corpus_copy_ratio(entities: &[Entity], lexicon: &Lexicon) -> Result<f64> {
    let mut copied = 0usize;
    let mut total = 0usize;
    for e in entities {
        let source = e.source_values();
        for tok in e.description_tokens() {
            if lexicon.is_stopword(&tok) || is_punctuation(&tok) {
                continue;
            }
            total += 1;
            if is_copied(&tok, &source, lexicon, 4) {
                copied += 1;
            }
        }
    }
    if total == 0 {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(copied as f64 / total as f64)
}

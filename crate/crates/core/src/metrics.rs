//! Corpus-level BLEU-1/2, ROUGE-L, modifier copy ratio and head accuracy.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotator::Annotator;
use crate::corpus::{self, CorpusError};
use crate::lexicon::{tokenize, Lexicon};

/// Prefix length used to decide whether a word was copied from the infobox.
pub const COPY_PREFIX_LEN: usize = 4;

const ROUGE_BETA: f64 = 1.2;
const BLEU_ZERO_PRECISION: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("hypothesis corpus has no tokens")]
    EmptyHypotheses,
    #[error("bleu order must be 1 or 2, got {0}")]
    BadOrder(usize),
    #[error("{0} has a zero denominator over the whole corpus")]
    ZeroDenominator(&'static str),
    #[error("prediction/reference ids do not match: {0:?}")]
    IdMismatch(Vec<String>),
    #[error("predictions line {line}: {message}")]
    BadPrediction { line: usize, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, MetricError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalRecord {
    pub entity_id: String,
    pub hypothesis: Vec<String>,
    pub reference: Vec<String>,
    pub source_values: Vec<String>,
    pub kg_type_values: Vec<String>,
}

impl EvalRecord {
    pub fn new(hypothesis: &str, reference: &str, source_values: &[&str], kg_type_values: &[&str]) -> Self {
        Self {
            entity_id: String::new(),
            hypothesis: tokenize(hypothesis),
            reference: tokenize(reference),
            source_values: source_values.iter().map(|s| s.to_string()).collect(),
            kg_type_values: kg_type_values.iter().map(|s| s.to_string()).collect(),
        }
    }
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Cumulative corpus BLEU up to order `n` with uniform weights, clipped
/// n-gram precision and the usual brevity penalty. Scaled to [0, 100].
pub fn bleu_n(corpus: &[EvalRecord], n: usize) -> Result<f64> {
    if !(1..=2).contains(&n) {
        return Err(MetricError::BadOrder(n));
    }
    if corpus.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let mut matches = vec![0usize; n];
    let mut totals = vec![0usize; n];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for rec in corpus {
        hyp_len += rec.hypothesis.len();
        ref_len += rec.reference.len();
        for k in 1..=n {
            let hyp = ngrams(&rec.hypothesis, k);
            let reference = ngrams(&rec.reference, k);
            totals[k - 1] += hyp.values().sum::<usize>();
            matches[k - 1] += hyp.iter().map(|(g, c)| (*c).min(reference.get(g).copied().unwrap_or(0))).sum::<usize>();
        }
    }
    if hyp_len == 0 {
        return Err(MetricError::EmptyHypotheses);
    }
    let log_precision: f64 = matches
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| {
            let p = if m == 0 || t == 0 { BLEU_ZERO_PRECISION } else { m as f64 / t as f64 };
            p.ln()
        })
        .sum::<f64>()
        / n as f64;
    let brevity = if hyp_len < ref_len { (1.0 - ref_len as f64 / hyp_len as f64).exp() } else { 1.0 };
    Ok(100.0 * brevity * log_precision.exp())
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Sentence-level LCS F-measure (beta = 1.2) averaged over the corpus,
/// scaled to [0, 100].
pub fn rouge_l(corpus: &[EvalRecord]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let total: f64 = corpus
        .iter()
        .map(|rec| {
            let lcs = lcs_len(&rec.hypothesis, &rec.reference);
            if lcs == 0 {
                return 0.0;
            }
            let p = lcs as f64 / rec.hypothesis.len() as f64;
            let r = lcs as f64 / rec.reference.len() as f64;
            let b2 = ROUGE_BETA * ROUGE_BETA;
            (1.0 + b2) * p * r / (r + b2 * p)
        })
        .sum();
    Ok(100.0 * total / corpus.len() as f64)
}

/// True when `word` shares its first `min(prefix_len, len)` characters with
/// the start of some non-stopword source value word.
pub fn is_copied<S: AsRef<str>>(word: &str, source_values: &[S], lexicon: &Lexicon, prefix_len: usize) -> bool {
    let prefix: String = word.chars().take(prefix_len).collect();
    if prefix.is_empty() {
        return false;
    }
    source_values
        .iter()
        .map(AsRef::as_ref)
        .filter(|s| !lexicon.is_stopword(s))
        .any(|s| s.starts_with(prefix.as_str()))
}

/// Ratio of hypothesis modifier tokens that are copied from the source values.
pub fn mod_copy(corpus: &[EvalRecord], annotator: &dyn Annotator, lexicon: &Lexicon) -> Result<f64> {
    let (mut copied, mut total) = (0usize, 0usize);
    for rec in corpus {
        let Ok(ann) = annotator.annotate(&rec.hypothesis) else { continue };
        for m in ann.modifiers() {
            total += 1;
            if is_copied(&m, &rec.source_values, lexicon, COPY_PREFIX_LEN) {
                copied += 1;
            }
        }
    }
    if total == 0 {
        return Err(MetricError::ZeroDenominator("mod_copy"));
    }
    Ok(copied as f64 / total as f64)
}

/// Fraction of hypothesis heads found among the reference heads or the
/// `instance of` / `subclass of` value words.
pub fn hed_acc(corpus: &[EvalRecord], annotator: &dyn Annotator) -> Result<f64> {
    let (mut correct, mut total) = (0usize, 0usize);
    for rec in corpus {
        let Ok(heads) = annotator.extract_heads(&rec.hypothesis) else { continue };
        if heads.is_empty() {
            continue;
        }
        let mut allowed: HashSet<String> = annotator.extract_heads(&rec.reference).unwrap_or_default().into_iter().collect();
        allowed.extend(rec.kg_type_values.iter().cloned());
        total += heads.len();
        correct += heads.iter().filter(|h| allowed.contains(*h)).count();
    }
    if total == 0 {
        return Err(MetricError::ZeroDenominator("hed_acc"));
    }
    Ok(correct as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub bleu1: f64,
    pub bleu2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub mod_copy: f64,
    pub hed_acc: f64,
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "| {:>6} | {:>6} | {:>6} | {:>7} | {:>6} |", "B-1", "B-2", "RG-L", "ModCopy", "HedAcc")?;
        writeln!(f, "|--------|--------|--------|---------|--------|")?;
        writeln!(
            f,
            "| {:>6.2} | {:>6.2} | {:>6.2} | {:>7.2} | {:>6.2} |",
            self.bleu1,
            self.bleu2,
            self.rouge_l,
            100.0 * self.mod_copy,
            100.0 * self.hed_acc
        )
    }
}

pub fn report(corpus: &[EvalRecord], annotator: &dyn Annotator, lexicon: &Lexicon) -> Result<Report> {
    Ok(Report {
        bleu1: bleu_n(corpus, 1)?,
        bleu2: bleu_n(corpus, 2)?,
        rouge_l: rouge_l(corpus)?,
        mod_copy: mod_copy(corpus, annotator, lexicon)?,
        hed_acc: hed_acc(corpus, annotator)?,
    })
}

#[derive(Debug, Deserialize)]
struct Prediction {
    entity_id: String,
    hypothesis: String,
}

/// Joins a predictions JSONL file with an entity JSONL file by entity id.
pub fn load_records(predictions: &Path, references: &Path) -> Result<Vec<EvalRecord>> {
    let text = fs::read_to_string(predictions)
        .map_err(|source| MetricError::Io { path: predictions.display().to_string(), source })?;
    let mut preds = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let p: Prediction = serde_json::from_str(line)
            .map_err(|e| MetricError::BadPrediction { line: i + 1, message: e.to_string() })?;
        preds.push(p);
    }
    if preds.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let refs = corpus::load_jsonl(references)?;
    let by_id: HashMap<&str, &corpus::Entity> = refs.iter().map(|e| (e.entity_id.as_str(), e)).collect();
    let pred_ids: BTreeSet<&str> = preds.iter().map(|p| p.entity_id.as_str()).collect();
    let mut offending: BTreeSet<String> =
        pred_ids.iter().filter(|id| !by_id.contains_key(*id)).map(|s| s.to_string()).collect();
    offending.extend(refs.iter().filter(|e| !pred_ids.contains(e.entity_id.as_str())).map(|e| e.entity_id.clone()));
    if !offending.is_empty() {
        return Err(MetricError::IdMismatch(offending.into_iter().collect()));
    }
    Ok(preds
        .into_iter()
        .map(|p| {
            let e = by_id[p.entity_id.as_str()];
            EvalRecord {
                hypothesis: tokenize(&p.hypothesis),
                reference: e.description_tokens(),
                source_values: e.source_values(),
                kg_type_values: e.kg_type_values(),
                entity_id: p.entity_id,
            }
        })
        .collect())
}

pub fn evaluate(predictions: &Path, references: &Path, annotator: &dyn Annotator, lexicon: &Lexicon) -> Result<Report> {
    report(&load_records(predictions, references)?, annotator, lexicon)
}

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use super::{CorpusError, Entity, Result};
use crate::annotator::{HEAD_SLOT, MOD_SLOT};
use crate::lexicon::{is_punctuation, Lexicon, PUNCTUATION};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";

const SEQ_RESERVED: &[&str] = &[PAD, UNK, BOS, EOS];
const PROP_RESERVED: &[&str] = &[PAD, UNK];

/// Bidirectional token/id map. Ids are dense and follow insertion order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self { tokens: Vec::new(), index: HashMap::new() };
        for t in tokens {
            v.push(t.into());
        }
        v
    }

    fn push(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Id of `token`, falling back to the unk id.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or_else(|| self.unk())
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pad(&self) -> usize {
        self.index[PAD]
    }
    pub fn unk(&self) -> usize {
        self.index[UNK]
    }
    pub fn bos(&self) -> usize {
        self.index[BOS]
    }
    pub fn eos(&self) -> usize {
        self.index[EOS]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|source| CorpusError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|source| CorpusError::Io { path: path.display().to_string(), source })?;
        let mut v = Self { tokens: Vec::new(), index: HashMap::new() };
        for (i, line) in text.lines().enumerate() {
            if v.contains(line) {
                return Err(CorpusError::DuplicateToken {
                    path: path.display().to_string(),
                    line: i + 1,
                    token: line.to_string(),
                });
            }
            v.push(line.to_string());
        }
        Ok(v)
    }
}

/// Frequency-ranked vocabulary: reserved tokens first, then the most frequent
/// words with lexicographic tie-breaking, up to `size` entries in total.
fn ranked<'a>(words: impl Iterator<Item = &'a str>, reserved: &[&str], size: usize) -> Result<Vocab> {
    if size < reserved.len() {
        return Err(CorpusError::VocabTooSmall { size, reserved: reserved.len() });
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for w in words {
        *counts.entry(w).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().filter(|(w, _)| !reserved.contains(w)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut vocab = Vocab::from_tokens(reserved.iter().copied());
    vocab.tokens.reserve(size - reserved.len());
    for (w, _) in ranked.into_iter().take(size - reserved.len()) {
        vocab.push(w.to_string());
    }
    Ok(vocab)
}

/// All vocabularies the model needs. Value words, properties and positions
/// use separate id spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabSet {
    pub value: Vocab,
    pub property: Vocab,
    pub position_count: usize,
    pub target: Vocab,
    pub template: Vocab,
}

const FILES: [&str; 4] = ["value.vocab", "property.vocab", "target.vocab", "template.vocab"];

impl VocabSet {
    pub fn save(&self, dir: &Path) -> Result<()> {
        for (name, v) in FILES.iter().zip([&self.value, &self.property, &self.target, &self.template]) {
            v.save(&dir.join(name))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, position_count: usize) -> Result<Self> {
        Ok(Self {
            value: Vocab::load(&dir.join(FILES[0]))?,
            property: Vocab::load(&dir.join(FILES[1]))?,
            position_count,
            target: Vocab::load(&dir.join(FILES[2]))?,
            template: Vocab::load(&dir.join(FILES[3]))?,
        })
    }

    /// Rebuilds the target vocabulary without `words`, so they can only be
    /// produced through copying.
    pub fn exclude_target_words<S: AsRef<str>>(&mut self, words: &[S]) {
        let drop: BTreeSet<&str> = words.iter().map(AsRef::as_ref).filter(|w| !SEQ_RESERVED.contains(w)).collect();
        self.target = Vocab::from_tokens(self.target.tokens.iter().filter(|t| !drop.contains(t.as_str())).cloned());
    }
}

/// Builds all vocabularies from the training split.
pub fn build_vocabs(
    train: &[Entity],
    value_vocab_size: usize,
    target_vocab_size: usize,
    max_position: usize,
    lexicon: &Lexicon,
) -> Result<VocabSet> {
    if train.is_empty() {
        return Err(CorpusError::EmptyTrain);
    }
    let value_words: Vec<String> = train.iter().flat_map(Entity::source_values).collect();
    let value = ranked(value_words.iter().map(String::as_str), SEQ_RESERVED, value_vocab_size)?;

    let desc_words: Vec<String> = train.iter().flat_map(Entity::description_tokens).collect();
    let target = ranked(desc_words.iter().map(String::as_str), SEQ_RESERVED, target_vocab_size)?;

    let props: BTreeSet<String> = train.iter().flat_map(|e| e.statements.iter().map(|s| s.property_token())).collect();
    let property = Vocab::from_tokens(PROP_RESERVED.iter().map(|s| s.to_string()).chain(props));

    let mut punct: BTreeSet<String> = PUNCTUATION.iter().map(|s| s.to_string()).collect();
    punct.extend(desc_words.iter().filter(|w| is_punctuation(w)).cloned());
    let template = Vocab::from_tokens(
        SEQ_RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain([HEAD_SLOT.to_string(), MOD_SLOT.to_string()])
            .chain(punct)
            .chain(lexicon.stopwords().map(str::to_string)),
    );

    Ok(VocabSet { value, property, position_count: max_position, target, template })
}

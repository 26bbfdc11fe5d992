//! Rule-based head/modifier identification for type descriptions.
//!
//! Type descriptions are short English noun compounds such as
//! `street in paris , france` or `american singer , producer`. The rule:
//!
//! 1. stopwords and punctuation are function material;
//! 2. everything before the first preposition is the head segment, split into
//!    coordinated conjuncts on `,`/`and`/`or`;
//! 3. the last content token of each conjunct is a head, other content tokens
//!    in the conjunct are modifiers;
//! 4. content tokens after the first preposition are modifiers.
//!
//! When the head segment holds no content token (a description that opens with
//! a preposition) the first maximal content run is used instead, so every
//! description with content has at least one head.

use thiserror::Error;

use crate::lexicon::Lexicon;

pub const HEAD_SLOT: &str = "$hed$";
pub const MOD_SLOT: &str = "$mod$";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnnotateError {
    #[error("cannot annotate an empty description")]
    Empty,
    #[error("template slot {index} ({slot}) has no filler left")]
    MissingFiller { index: usize, slot: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Head,
    Modifier,
    Function,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub tokens: Vec<String>,
    pub roles: Vec<Role>,
    pub template: Vec<String>,
}

impl Annotation {
    fn with_role(&self, role: Role) -> Vec<String> {
        self.tokens
            .iter()
            .zip(&self.roles)
            .filter(|(_, r)| **r == role)
            .map(|(t, _)| t.clone())
            .collect()
    }

    pub fn heads(&self) -> Vec<String> {
        self.with_role(Role::Head)
    }

    pub fn modifiers(&self) -> Vec<String> {
        self.with_role(Role::Modifier)
    }

    pub fn template_string(&self) -> String {
        self.template.join(" ")
    }
}

/// Anything that can assign head/modifier roles to a tokenized description.
pub trait Annotator {
    fn annotate(&self, tokens: &[String]) -> Result<Annotation, AnnotateError>;

    /// Head tokens in description order.
    fn extract_heads(&self, tokens: &[String]) -> Result<Vec<String>, AnnotateError> {
        Ok(self.annotate(tokens)?.heads())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RuleAnnotator {
    lexicon: Lexicon,
}

impl RuleAnnotator {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    /// Marks the last content token of each conjunct in `range` as head.
    /// Returns whether any head was assigned.
    fn mark_heads(&self, tokens: &[String], roles: &mut [Role], range: std::ops::Range<usize>) -> bool {
        let mut found = false;
        let mut last_content: Option<usize> = None;
        for i in range {
            if self.lexicon.is_coordinator(&tokens[i]) {
                if let Some(j) = last_content.take() {
                    roles[j] = Role::Head;
                    found = true;
                }
            } else if roles[i] != Role::Function {
                last_content = Some(i);
            }
        }
        if let Some(j) = last_content {
            roles[j] = Role::Head;
            found = true;
        }
        found
    }
}

impl Annotator for RuleAnnotator {
    fn annotate(&self, tokens: &[String]) -> Result<Annotation, AnnotateError> {
        if tokens.is_empty() {
            return Err(AnnotateError::Empty);
        }
        let mut roles: Vec<Role> = tokens
            .iter()
            .map(|t| if self.lexicon.is_function(t) { Role::Function } else { Role::Modifier })
            .collect();

        let boundary = tokens.iter().position(|t| self.lexicon.is_preposition(t)).unwrap_or(tokens.len());
        if !self.mark_heads(tokens, &mut roles, 0..boundary) {
            if let Some(start) = roles.iter().position(|r| *r != Role::Function) {
                let end = roles[start..].iter().position(|r| *r == Role::Function).map_or(tokens.len(), |k| start + k);
                roles[end - 1] = Role::Head;
            }
        }

        let template = tokens
            .iter()
            .zip(&roles)
            .map(|(t, r)| match r {
                Role::Head => HEAD_SLOT.to_string(),
                Role::Modifier => MOD_SLOT.to_string(),
                Role::Function => t.clone(),
            })
            .collect();
        Ok(Annotation { tokens: tokens.to_vec(), roles, template })
    }
}

/// Fills `$hed$` and `$mod$` slots in order; other tokens pass through.
pub fn apply_template<S: AsRef<str>>(
    template: &[S],
    heads: &[S],
    modifiers: &[S],
) -> Result<Vec<String>, AnnotateError> {
    let mut heads = heads.iter();
    let mut mods = modifiers.iter();
    template
        .iter()
        .enumerate()
        .map(|(index, t)| match t.as_ref() {
            HEAD_SLOT => heads
                .next()
                .map(|h| h.as_ref().to_string())
                .ok_or(AnnotateError::MissingFiller { index, slot: HEAD_SLOT }),
            MOD_SLOT => mods
                .next()
                .map(|m| m.as_ref().to_string())
                .ok_or(AnnotateError::MissingFiller { index, slot: MOD_SLOT }),
            other => Ok(other.to_string()),
        })
        .collect()
}

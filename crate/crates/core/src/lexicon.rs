//! Function-word lexicon and tokenization shared by the corpus, the annotator
//! and the metrics.

use std::collections::BTreeSet;

/// Characters detached from the edges of whitespace-separated tokens.
const DETACHABLE: &[char] = &[',', '.', '(', ')', ';', ':', '!', '?', '"'];

/// Fixed punctuation tokens always present in the template vocabulary.
pub const PUNCTUATION: &[&str] = &[",", ".", "(", ")", ";", ":", "!", "?", "\"", "-", "&", "/", "'"];

const PREPOSITIONS: &[&str] = &[
    "about", "above", "across", "after", "against", "along", "amid", "among", "amongst", "around",
    "at", "before", "behind", "below", "beneath", "beside", "besides", "between", "beyond", "by",
    "despite", "during", "except", "for", "from", "in", "inside", "into", "near", "of", "on",
    "onto", "outside", "over", "per", "since", "through", "throughout", "till", "to", "toward",
    "towards", "under", "underneath", "until", "upon", "via", "with", "within", "without",
];

const COORDINATORS: &[&str] = &[",", "and", "or", "&"];

const OTHER_FUNCTION_WORDS: &[&str] = &[
    // articles and determiners
    "a", "an", "the", "this", "that", "these", "those", "each", "every", "some", "any", "all",
    "both", "either", "neither", "another", "such", "no",
    // conjunctions
    "and", "or", "nor", "but", "yet", "so", "if", "because", "while", "although", "though",
    "whether", "than", "as", "unless", "whereas",
    // pronouns
    "i", "me", "my", "mine", "we", "us", "our", "ours", "you", "your", "yours", "he", "him",
    "his", "she", "her", "hers", "it", "its", "they", "them", "their", "theirs", "who", "whom",
    "whose", "which", "what", "where", "when", "why", "how", "itself", "himself", "herself",
    "themselves", "ourselves", "myself", "yourself",
    // auxiliaries and modals
    "am", "is", "are", "was", "were", "be", "been", "being", "have", "has", "had", "having", "do",
    "does", "did", "will", "would", "shall", "should", "can", "could", "may", "might", "must",
    "ought",
    // adverbs and particles
    "not", "also", "just", "only", "very", "too", "there", "here", "then", "once", "again",
    "ever", "up", "down", "out", "off",
];

/// Returns true when every character of `token` is punctuation.
pub fn is_punctuation(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c.is_ascii_punctuation() || c.is_ascii_whitespace())
}

/// Lowercases `text`, splits on whitespace and detaches leading and trailing
/// punctuation (commas, periods, parentheses and a few others) into their own
/// tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    for piece in lower.split_whitespace() {
        let chars: Vec<char> = piece.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && DETACHABLE.contains(&chars[start]) {
            start += 1;
        }
        while end > start && DETACHABLE.contains(&chars[end - 1]) {
            end -= 1;
        }
        out.extend(chars[..start].iter().map(|c| c.to_string()));
        if start < end {
            out.push(chars[start..end].iter().collect());
        }
        out.extend(chars[end..].iter().map(|c| c.to_string()));
    }
    out
}

/// A set of function words. Prepositions and coordinators are tracked
/// separately because the head-modifier annotator keys on them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    stopwords: BTreeSet<String>,
    prepositions: BTreeSet<String>,
    coordinators: BTreeSet<String>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::english()
    }
}

impl Lexicon {
    /// The embedded English function-word list.
    pub fn english() -> Self {
        let prepositions: BTreeSet<String> = PREPOSITIONS.iter().map(|s| s.to_string()).collect();
        let mut stopwords: BTreeSet<String> =
            OTHER_FUNCTION_WORDS.iter().map(|s| s.to_string()).collect();
        stopwords.extend(prepositions.iter().cloned());
        Self {
            stopwords,
            prepositions,
            coordinators: COORDINATORS.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// A lexicon with no stopwords. Punctuation is still treated as function
    /// material and "," still coordinates.
    pub fn empty() -> Self {
        Self {
            stopwords: BTreeSet::new(),
            prepositions: BTreeSet::new(),
            coordinators: [",".to_string(), "&".to_string()].into_iter().collect(),
        }
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    pub fn is_preposition(&self, token: &str) -> bool {
        self.prepositions.contains(token)
    }

    pub fn is_coordinator(&self, token: &str) -> bool {
        self.coordinators.contains(token)
    }

    /// Stopword or punctuation.
    pub fn is_function(&self, token: &str) -> bool {
        self.is_stopword(token) || is_punctuation(token)
    }

    pub fn stopwords(&self) -> impl Iterator<Item = &str> {
        self.stopwords.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.stopwords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stopwords.is_empty()
    }
}

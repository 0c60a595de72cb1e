//! Text normalization, word shingles and lexicon-based validity scoring.
//!
//! Everything here is a pure function over immutable inputs. The tokenizer
//! case-folds, deletes Unicode punctuation and symbol characters, then splits
//! on whitespace; surface forms are otherwise left alone (no stemming, no
//! stop-word removal).

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shingle width used when nothing else is configured.
pub const DEFAULT_NGRAM: usize = 3;

static STRIP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\p{P}\p{S}]").unwrap());

static BUILTIN_ENGLISH: &str = include_str!("../../../data/en_words.txt");

#[derive(Debug, Error)]
pub enum TextError {
    #[error("shingle width must be at least 1")]
    ZeroWidth,
    #[error("shingle widths differ ({left} vs {right})")]
    WidthMismatch { left: usize, right: usize },
    #[error("lexicon {source_name} contains no words")]
    EmptyLexicon { source_name: String },
    #[error("failed to read lexicon {path}: {source}")]
    LexiconIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Lowercase word tokens with punctuation and symbols removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NormalizedText {
    tokens: Vec<String>,
}

impl NormalizedText {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Keeps only the first `max` tokens.
    pub fn truncated(&self, max: usize) -> NormalizedText {
        NormalizedText {
            tokens: self.tokens.iter().take(max).cloned().collect(),
        }
    }

    /// Tokens joined with single spaces.
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

impl fmt::Display for NormalizedText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.joined())
    }
}

/// Normalizes raw text into word tokens.
///
/// Case folding goes through uppercase first so that characters whose
/// uppercase form expands (e.g. `ß` to `SS`) fold to the same tokens as their
/// uppercased spelling.
pub fn normalize(text: &str) -> NormalizedText {
    let folded = text.to_uppercase().to_lowercase();
    let stripped = STRIP.replace_all(&folded, "");
    NormalizedText {
        tokens: stripped.split_whitespace().map(str::to_owned).collect(),
    }
}

/// One shingle: exactly `n` consecutive tokens.
pub type Gram = Vec<String>;

/// A deduplicated set of word n-grams of a fixed width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NGramSet {
    n: usize,
    grams: BTreeSet<Gram>,
}

impl NGramSet {
    pub fn empty(n: usize) -> Result<Self, TextError> {
        if n == 0 {
            return Err(TextError::ZeroWidth);
        }
        Ok(NGramSet {
            n,
            grams: BTreeSet::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn contains(&self, gram: &[String]) -> bool {
        self.grams.contains(gram)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Gram> {
        self.grams.iter()
    }

    /// Each gram rendered as space-joined tokens, in sorted order.
    pub fn to_strings(&self) -> Vec<String> {
        self.grams.iter().map(|g| g.join(" ")).collect()
    }

    fn check_width(&self, other: &NGramSet) -> Result<(), TextError> {
        if self.n != other.n {
            return Err(TextError::WidthMismatch {
                left: self.n,
                right: other.n,
            });
        }
        Ok(())
    }
}

/// All contiguous `n`-token windows of `text`, deduplicated.
pub fn ngrams(text: &NormalizedText, n: usize) -> Result<NGramSet, TextError> {
    let mut set = NGramSet::empty(n)?;
    if text.tokens.len() >= n {
        set.grams = text.tokens.windows(n).map(<[String]>::to_vec).collect();
    }
    Ok(set)
}

/// Grams present in both sets.
pub fn shared_ngrams(a: &NGramSet, b: &NGramSet) -> Result<NGramSet, TextError> {
    a.check_width(b)?;
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    Ok(NGramSet {
        n: a.n,
        grams: small
            .grams
            .iter()
            .filter(|g| large.grams.contains(*g))
            .cloned()
            .collect(),
    })
}

/// `|a ∩ b| / |a ∪ b|`, or 0.0 when both sets are empty.
pub fn jaccard(a: &NGramSet, b: &NGramSet) -> Result<f64, TextError> {
    a.check_width(b)?;
    let inter = a.grams.intersection(&b.grams).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

/// A read-only set of valid words, stored in normalized form.
#[derive(Debug, Clone)]
pub struct Lexicon {
    words: HashSet<String>,
    source: String,
}

impl Lexicon {
    /// Builds a lexicon from word-list lines. Blank lines and lines starting
    /// with `#` are skipped; every other line is normalized and each resulting
    /// token is added.
    pub fn from_lines<'a, I>(lines: I, source: impl Into<String>) -> Result<Self, TextError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let source = source.into();
        let mut words = HashSet::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            words.extend(normalize(line).tokens);
        }
        if words.is_empty() {
            return Err(TextError::EmptyLexicon {
                source_name: source,
            });
        }
        Ok(Lexicon { words, source })
    }

    /// Loads a UTF-8 word list, one word per line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TextError> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|source| TextError::LexiconIo {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_lines(content.lines(), path.display().to_string())
    }

    /// The bundled English word list.
    pub fn builtin_english() -> Self {
        Self::from_lines(BUILTIN_ENGLISH.lines(), "builtin:en_words")
            .expect("bundled word list is non-empty")
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

/// Fraction of tokens found in the lexicon; 0.0 for an empty text.
pub fn lexical_validity(text: &NormalizedText, lex: &Lexicon) -> f64 {
    if text.is_empty() {
        return 0.0;
    }
    let valid = text.tokens.iter().filter(|t| lex.contains(t)).count();
    valid as f64 / text.len() as f64
}

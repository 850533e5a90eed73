use serde::{Deserialize, Serialize};

use super::porter::porter_stem;
use super::tokenize::{normalize_and_tokenize, Token, EOS_TOKEN, SEP_TOKEN};

/// A keyphrase: its normalized tokens plus the space-joined Porter stems used
/// as the canonical identity for matching and deduplication.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phrase {
    pub tokens: Vec<Token>,
    pub stemmed_key: String,
}

impl Phrase {
    pub fn new(tokens: Vec<Token>) -> Self {
        assert!(!tokens.is_empty(), "phrase must have at least one token");
        let stemmed_key = tokens
            .iter()
            .map(|t| porter_stem(t.as_str()))
            .collect::<Vec<_>>()
            .join(" ");
        Phrase { tokens, stemmed_key }
    }

    /// Normalize raw text into a phrase; `None` when nothing survives.
    pub fn from_text(raw: &str) -> Option<Self> {
        let tokens = normalize_and_tokenize(raw);
        if tokens.is_empty() {
            None
        } else {
            Some(Phrase::new(tokens))
        }
    }

    pub fn surface(&self) -> String {
        super::tokenize::join_tokens(&self.tokens)
    }

    fn stems(&self) -> Vec<String> {
        self.stemmed_key.split(' ').map(str::to_string).collect()
    }
}

/// One source text with its gold keyphrases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub source: Vec<Token>,
    /// Number of leading source tokens that came from the title.
    pub title_len: usize,
    pub gold: Vec<Phrase>,
}

/// Stemmed view of a source token sequence, reusable across many phrase
/// containment checks.
pub struct StemmedSource(Vec<String>);

impl StemmedSource {
    pub fn new(source: &[Token]) -> Self {
        StemmedSource(source.iter().map(|t| porter_stem(t.as_str())).collect())
    }

    /// Index of the first contiguous occurrence of the phrase's stems.
    pub fn find(&self, phrase: &Phrase) -> Option<usize> {
        let needle = phrase.stems();
        if needle.is_empty() || needle.len() > self.0.len() {
            return None;
        }
        self.0.windows(needle.len()).position(|w| w == needle.as_slice())
    }
}

/// True iff the phrase's stemmed token sequence occurs contiguously in the
/// stemmed source.
pub fn is_present(phrase: &Phrase, source: &[Token]) -> bool {
    StemmedSource::new(source).find(phrase).is_some()
}

/// Split gold phrases into present ones (ordered by first stemmed match in
/// the source, ties keeping gold order) and absent ones (gold order).
pub fn partition_keyphrases(doc: &Document) -> (Vec<Phrase>, Vec<Phrase>) {
    let stems = StemmedSource::new(&doc.source);
    let mut present: Vec<(usize, Phrase)> = Vec::new();
    let mut absent = Vec::new();
    for phrase in &doc.gold {
        match stems.find(phrase) {
            Some(idx) => present.push((idx, phrase.clone())),
            None => absent.push(phrase.clone()),
        }
    }
    present.sort_by_key(|(idx, _)| *idx); // stable: ties keep gold order
    (present.into_iter().map(|(_, p)| p).collect(), absent)
}

/// Join phrases into the delimiter-separated training target: tokens of the
/// present phrases then the absent ones, `<sep>` between phrases, `</s>` last.
pub fn build_target_sequence(present: &[Phrase], absent: &[Phrase]) -> Vec<Token> {
    let mut out = Vec::new();
    for (i, phrase) in present.iter().chain(absent.iter()).enumerate() {
        if i > 0 {
            out.push(Token::new(SEP_TOKEN));
        }
        out.extend(phrase.tokens.iter().cloned());
    }
    out.push(Token::new(EOS_TOKEN));
    out
}

/// Keep the first occurrence of each stemmed key, preserving order.
pub fn dedup_phrases(phrases: &[Phrase]) -> Vec<Phrase> {
    let mut seen = std::collections::HashSet::new();
    phrases
        .iter()
        .filter(|p| seen.insert(p.stemmed_key.clone()))
        .cloned()
        .collect()
}

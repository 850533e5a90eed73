use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::text::{Document, Token, BOS_TOKEN, DIGIT_TOKEN, EOS_TOKEN, PAD_TOKEN, SEP_TOKEN, UNK_TOKEN};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const BOS_ID: usize = 2;
pub const EOS_ID: usize = 3;
pub const SEP_ID: usize = 4;
pub const DIGIT_ID: usize = 5;

pub const RESERVED: [&str; 6] = [PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN, SEP_TOKEN, DIGIT_TOKEN];

/// Token <-> id bijection with the six reserved tokens at ids 0..6.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    /// Build from a corpus: reserved tokens plus the `size - 6` most frequent
    /// source and target tokens, frequency ties broken lexicographically.
    pub fn build(docs: &[Document], size: usize) -> Self {
        assert!(size > RESERVED.len(), "vocabulary size must exceed the reserved tokens");
        let mut freq: HashMap<String, u64> = HashMap::new();
        let bump = |tok: &Token, freq: &mut HashMap<String, u64>| {
            if !RESERVED.contains(&tok.as_str()) {
                *freq.entry(tok.as_str().to_string()).or_insert(0) += 1;
            }
        };
        for doc in docs {
            for tok in &doc.source {
                bump(tok, &mut freq);
            }
            for phrase in &doc.gold {
                for tok in &phrase.tokens {
                    bump(tok, &mut freq);
                }
            }
        }
        let mut ranked: Vec<(String, u64)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(ranked.into_iter().take(size - RESERVED.len()).map(|(t, _)| t));
        Vocabulary::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Vec<String> {
        v.tokens
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = String;

    fn try_from(tokens: Vec<String>) -> Result<Self, String> {
        if tokens.len() < RESERVED.len() {
            return Err("vocabulary shorter than the reserved token block".into());
        }
        for (i, r) in RESERVED.iter().enumerate() {
            if tokens[i] != *r {
                return Err(format!("reserved token {i} is `{}`, expected `{r}`", tokens[i]));
            }
        }
        let vocab = Vocabulary::from_tokens(tokens);
        if vocab.index.len() != vocab.tokens.len() {
            return Err("duplicate token in vocabulary".into());
        }
        Ok(vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{normalize_and_tokenize, Phrase};

    fn doc(source: &str, keys: &[&str]) -> Document {
        Document {
            id: "d".into(),
            source: normalize_and_tokenize(source),
            title_len: 0,
            gold: keys.iter().map(|k| Phrase::from_text(k).unwrap()).collect(),
        }
    }

    #[test]
    fn frequency_then_lexicographic() {
        // a:3 b:2 c:1 -> size 8 leaves room for two
        let docs = vec![doc("a a b", &["a", "b", "c"])];
        let v = Vocabulary::build(&docs, 8);
        assert_eq!(v.len(), 8);
        assert_eq!(v.token(6), Some("a"));
        assert_eq!(v.token(7), Some("b"));
        assert_eq!(v.id_or_unk("c"), UNK_ID);
    }

    #[test]
    fn empty_corpus_keeps_reserved_only() {
        let v = Vocabulary::build(&[], 100);
        assert_eq!(v.len(), 6);
        assert_eq!(v.token(PAD_ID), Some(PAD_TOKEN));
        assert_eq!(v.token(DIGIT_ID), Some(DIGIT_TOKEN));
    }

    #[test]
    fn tie_break_is_lexicographic() {
        let docs = vec![doc("b a", &["b"])]; // a:1 b:2
        let v = Vocabulary::build(&docs, 7); // room for exactly one
        assert_eq!(v.token(6), Some("b"));
        let docs = vec![doc("b a", &["x"])]; // a:1 b:1 x:1, ties
        let v = Vocabulary::build(&docs, 7);
        assert_eq!(v.token(6), Some("a"));
    }

    #[test]
    fn digit_token_maps_to_reserved_id() {
        let docs = vec![doc("version 42", &["42"])];
        let v = Vocabulary::build(&docs, 20);
        assert_eq!(v.id(DIGIT_TOKEN), Some(DIGIT_ID));
        // the <digit> occurrences must not consume a frequency slot
        assert!(v.tokens()[6..].iter().all(|t| t != DIGIT_TOKEN));
    }
}

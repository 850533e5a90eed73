use serde::{Deserialize, Serialize};

/// Reserved token surfaces. These occupy the first six vocabulary ids.
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "</s>";
pub const SEP_TOKEN: &str = "<sep>";
pub const DIGIT_TOKEN: &str = "<digit>";

/// A single normalized token: lowercase, non-empty, no whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(String);

impl Token {
    pub fn new(s: impl Into<String>) -> Self {
        let s = s.into();
        debug_assert!(!s.is_empty());
        debug_assert!(!s.chars().any(|c| c.is_whitespace() || c.is_uppercase()));
        Token(s)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for Token {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Split text on whitespace and punctuation boundaries and lowercase it,
/// keeping punctuation marks as standalone tokens. Digits are left alone, so
/// re-tokenizing a space-joined surface list reproduces it. Used when
/// datasets are written back to disk.
pub fn tokenize_surfaces(raw: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    fn flush(word: &mut String, out: &mut Vec<String>) {
        if !word.is_empty() {
            out.push(std::mem::take(word));
        }
    }
    for c in raw.chars() {
        if c.is_whitespace() {
            flush(&mut word, &mut out);
        } else if c.is_alphanumeric() {
            for lc in c.to_lowercase() {
                word.push(lc);
            }
        } else {
            flush(&mut word, &mut out);
            out.push(c.to_string());
        }
    }
    flush(&mut word, &mut out);
    out
}

/// Full normalization: surface tokenization plus replacing every all-digit
/// token with `<digit>`.
pub fn normalize_and_tokenize(raw: &str) -> Vec<Token> {
    tokenize_surfaces(raw)
        .into_iter()
        .map(|w| {
            if w.bytes().all(|b| b.is_ascii_digit()) {
                Token::new(DIGIT_TOKEN)
            } else {
                Token::new(w)
            }
        })
        .collect()
}

/// Render a token sequence back to text with single spaces.
pub fn join_tokens(tokens: &[Token]) -> String {
    tokens.iter().map(Token::as_str).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surfaces(raw: &str) -> Vec<String> {
        normalize_and_tokenize(raw).into_iter().map(|t| t.0).collect()
    }

    #[test]
    fn digits_replaced() {
        assert_eq!(surfaces("Graph SLAM in 2019"), vec!["graph", "slam", "in", "<digit>"]);
    }

    #[test]
    fn empty_input() {
        assert!(normalize_and_tokenize("").is_empty());
    }

    #[test]
    fn lowercasing_idempotent() {
        assert_eq!(surfaces("ABC abc"), vec!["abc", "abc"]);
    }

    #[test]
    fn punctuation_standalone() {
        assert_eq!(surfaces("state-of-the-art!"), vec!["state", "-", "of", "-", "the", "-", "art", "!"]);
    }

    #[test]
    fn mixed_alphanumerics_kept() {
        assert_eq!(surfaces("x64 and 2.7"), vec!["x64", "and", "<digit>", ".", "<digit>"]);
    }

    #[test]
    fn reserved_surface_cannot_be_injected() {
        assert_eq!(surfaces("<digit>"), vec!["<", "digit", ">"]);
    }

    #[test]
    fn surface_join_is_stable() {
        let raw = "A graph-based SLAM survey, 2019 edition.";
        let surf = tokenize_surfaces(raw);
        assert_eq!(tokenize_surfaces(&surf.join(" ")), surf);
        // normalizing the joined surfaces equals normalizing the raw text
        assert_eq!(normalize_and_tokenize(&surf.join(" ")), normalize_and_tokenize(raw));
    }

    #[test]
    fn normalized_join_roundtrip_without_digits() {
        let toks = normalize_and_tokenize("Efficient graph-based SLAM, a survey.");
        let again = normalize_and_tokenize(&join_tokens(&toks));
        assert_eq!(toks, again);
    }
}

use crate::corpus::vocab::{Vocabulary, BOS_ID, EOS_ID, SEP_ID, UNK_ID};
use crate::text::{build_target_sequence, partition_keyphrases, Document};

/// A document rendered into id space, with per-example copy ids for
/// out-of-vocabulary source tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub id: String,
    /// Source ids over the base vocabulary (OOV -> `<unk>`), for embedding lookup.
    pub source_ids: Vec<usize>,
    /// Source ids over base vocab plus copy ids V, V+1, ... per distinct OOV surface.
    pub source_ext_ids: Vec<usize>,
    /// Copy id j (absolute id V+j) -> surface token.
    pub ext_map: Vec<String>,
    /// Target ids over the extended space, terminated by `</s>`.
    pub target_ext_ids: Vec<usize>,
    /// Teacher-forcing inputs: `<bos>` then the target prefix over base vocab.
    pub target_in_ids: Vec<usize>,
}

impl EncodedExample {
    pub fn source_len(&self) -> usize {
        self.source_ids.len()
    }

    pub fn target_len(&self) -> usize {
        self.target_ext_ids.len()
    }

    /// Extended vocabulary size for this example.
    pub fn ext_vocab(&self, base: usize) -> usize {
        base + self.ext_map.len()
    }

    /// Surface form of an extended id (copy ids resolve through `ext_map`).
    pub fn surface<'a>(&'a self, vocab: &'a Vocabulary, id: usize) -> Option<&'a str> {
        if id < vocab.len() {
            vocab.token(id)
        } else {
            self.ext_map.get(id - vocab.len()).map(String::as_str)
        }
    }
}

/// Encode a normalized document: assign copy ids to distinct OOV source
/// tokens in order of first occurrence; resolve target tokens to base ids,
/// then copy ids, then `<unk>`.
pub fn encode_example(doc: &Document, vocab: &Vocabulary) -> EncodedExample {
    let base = vocab.len();
    let mut ext_map: Vec<String> = Vec::new();
    let mut source_ids = Vec::with_capacity(doc.source.len());
    let mut source_ext_ids = Vec::with_capacity(doc.source.len());
    for tok in &doc.source {
        match vocab.id(tok.as_str()) {
            Some(id) => {
                source_ids.push(id);
                source_ext_ids.push(id);
            }
            None => {
                source_ids.push(UNK_ID);
                let j = match ext_map.iter().position(|s| s == tok.as_str()) {
                    Some(j) => j,
                    None => {
                        ext_map.push(tok.as_str().to_string());
                        ext_map.len() - 1
                    }
                };
                source_ext_ids.push(base + j);
            }
        }
    }

    let (present, absent) = partition_keyphrases(doc);
    let target_tokens = build_target_sequence(&present, &absent);
    let target_ext_ids: Vec<usize> = target_tokens
        .iter()
        .map(|tok| match vocab.id(tok.as_str()) {
            Some(id) => id,
            None => ext_map
                .iter()
                .position(|s| s == tok.as_str())
                .map(|j| base + j)
                .unwrap_or(UNK_ID),
        })
        .collect();
    let mut target_in_ids = Vec::with_capacity(target_ext_ids.len());
    target_in_ids.push(BOS_ID);
    for tok in &target_tokens[..target_tokens.len() - 1] {
        target_in_ids.push(vocab.id_or_unk(tok.as_str()));
    }

    debug_assert_eq!(target_ext_ids.last(), Some(&EOS_ID));
    debug_assert_eq!(target_in_ids.len(), target_ext_ids.len());
    EncodedExample {
        id: doc.id.clone(),
        source_ids,
        source_ext_ids,
        ext_map,
        target_ext_ids,
        target_in_ids,
    }
}

/// Encode a bare source (no gold keyphrases) for inference: copy ids are
/// assigned as in `encode_example`, the target side is a placeholder.
pub fn encode_source_tokens(
    id: &str,
    source: &[crate::text::Token],
    vocab: &Vocabulary,
) -> EncodedExample {
    let base = vocab.len();
    let mut ext_map: Vec<String> = Vec::new();
    let mut source_ids = Vec::with_capacity(source.len());
    let mut source_ext_ids = Vec::with_capacity(source.len());
    for tok in source {
        match vocab.id(tok.as_str()) {
            Some(tid) => {
                source_ids.push(tid);
                source_ext_ids.push(tid);
            }
            None => {
                source_ids.push(UNK_ID);
                let j = match ext_map.iter().position(|s| s == tok.as_str()) {
                    Some(j) => j,
                    None => {
                        ext_map.push(tok.as_str().to_string());
                        ext_map.len() - 1
                    }
                };
                source_ext_ids.push(base + j);
            }
        }
    }
    EncodedExample {
        id: id.to_string(),
        source_ids,
        source_ext_ids,
        ext_map,
        target_ext_ids: vec![EOS_ID],
        target_in_ids: vec![BOS_ID],
    }
}

/// Positions whose target token is `<sep>` or `</s>`.
pub fn delimiter_positions(target_ext_ids: &[usize]) -> Vec<usize> {
    target_ext_ids
        .iter()
        .enumerate()
        .filter(|(_, &id)| id == SEP_ID || id == EOS_ID)
        .map(|(i, _)| i)
        .collect()
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

    fn tiny_vocab(words: &[&str]) -> Vocabulary {
        let docs = vec![doc(&words.join(" "), &[words[0]])];
        Vocabulary::build(&docs, 6 + words.len())
    }

    #[test]
    fn oov_source_tokens_get_copy_ids() {
        let vocab = tiny_vocab(&["a", "b"]);
        let d = doc("a c", &["c"]);
        let ex = encode_example(&d, &vocab);
        let v = vocab.len();
        assert_eq!(ex.source_ids, vec![vocab.id("a").unwrap(), UNK_ID]);
        assert_eq!(ex.source_ext_ids, vec![vocab.id("a").unwrap(), v]);
        assert_eq!(ex.ext_map, vec!["c".to_string()]);
        // target "c" resolves to the copy id, then </s>
        assert_eq!(ex.target_ext_ids, vec![v, EOS_ID]);
        assert_eq!(ex.target_in_ids, vec![BOS_ID, UNK_ID]);
    }

    #[test]
    fn in_vocab_example_uses_no_copy_ids() {
        let vocab = tiny_vocab(&["a", "b"]);
        let d = doc("a b", &["b"]);
        let ex = encode_example(&d, &vocab);
        assert!(ex.ext_map.is_empty());
        assert_eq!(ex.source_ids, ex.source_ext_ids);
    }

    #[test]
    fn oov_target_absent_from_source_is_unk() {
        let vocab = tiny_vocab(&["a", "b"]);
        let d = doc("a b", &["q"]);
        let ex = encode_example(&d, &vocab);
        assert_eq!(ex.target_ext_ids, vec![UNK_ID, EOS_ID]);
    }

    #[test]
    fn repeated_oov_surface_shares_one_copy_id() {
        let vocab = tiny_vocab(&["a"]);
        let d = doc("c a c", &["c"]);
        let ex = encode_example(&d, &vocab);
        let v = vocab.len();
        assert_eq!(ex.ext_map.len(), 1);
        assert_eq!(ex.source_ext_ids, vec![v, vocab.id("a").unwrap(), v]);
    }

    #[test]
    fn delimiter_positions_mark_sep_and_eos() {
        let ids = vec![7, SEP_ID, 8, EOS_ID];
        assert_eq!(delimiter_positions(&ids), vec![1, 3]);
    }

    #[test]
    fn roundtrip_through_surfaces() {
        let vocab = tiny_vocab(&["graph", "slam"]);
        let d = doc("graph slam rover", &["graph slam", "rover"]);
        let ex = encode_example(&d, &vocab);
        let back: Vec<&str> = ex
            .source_ext_ids
            .iter()
            .map(|&id| ex.surface(&vocab, id).unwrap())
            .collect();
        assert_eq!(back, vec!["graph", "slam", "rover"]);
        let target: Vec<&str> = ex
            .target_ext_ids
            .iter()
            .map(|&id| ex.surface(&vocab, id).unwrap())
            .collect();
        assert_eq!(target, vec!["graph", "slam", "<sep>", "rover", "</s>"]);
    }
}

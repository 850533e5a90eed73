//! Deterministic text normalization, stemming, present/absent partitioning
//! and target-sequence construction.

mod phrase;
mod porter;
mod tokenize;

pub use phrase::{
    build_target_sequence, dedup_phrases, is_present, partition_keyphrases, Document, Phrase,
    StemmedSource,
};
pub use porter::porter_stem;
pub use tokenize::{
    tokenize_surfaces,
    join_tokens, normalize_and_tokenize, Token, BOS_TOKEN, DIGIT_TOKEN, EOS_TOKEN, PAD_TOKEN,
    SEP_TOKEN, UNK_TOKEN,
};

//! Vocabulary construction, dataset ingestion and batching.

mod batch;
mod encode;
mod jsonl;
mod stackex;
mod vocab;

pub use batch::{make_batches, Batch};
pub use encode::{delimiter_positions, encode_example, encode_source_tokens, EncodedExample};
pub use jsonl::{document_from_record, load_jsonl, load_raw_records, write_jsonl, LoadedDataset, RawRecord};
pub use stackex::{
    convert_stackexchange, parse_tags, stats_for_file, strip_html, ConvertReport, SplitConfig,
    SplitStats,
};
pub use vocab::{
    Vocabulary, BOS_ID, DIGIT_ID, EOS_ID, PAD_ID, RESERVED, SEP_ID, UNK_ID,
};

use std::fs::File;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{KpError, Result};
use crate::text::{dedup_phrases, normalize_and_tokenize, Document, Phrase};

/// On-disk record: one JSON object per line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub title: String,
    pub abstract_: String,
    pub keywords: Vec<String>,
}

// `abstract` is a Rust keyword; serialize under the schema's field name.
impl RawRecord {
    fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "id": self.id,
            "title": self.title,
            "abstract": self.abstract_,
            "keywords": self.keywords,
        })
    }
}

/// Outcome of reading one dataset file.
#[derive(Debug)]
pub struct LoadedDataset {
    pub docs: Vec<Document>,
    /// Lines skipped because no usable keyphrase survived normalization.
    pub skipped_empty: usize,
}

fn field<'a>(
    value: &'a serde_json::Value,
    name: &str,
    path: &Path,
    line: usize,
) -> Result<&'a serde_json::Value> {
    value.get(name).ok_or_else(|| KpError::MissingField {
        path: path.to_path_buf(),
        line,
        field: name.to_string(),
    })
}

fn str_field(value: &serde_json::Value, name: &str, path: &Path, line: usize) -> Result<String> {
    let v = field(value, name, path, line)?;
    v.as_str().map(str::to_string).ok_or_else(|| KpError::JsonLine {
        path: path.to_path_buf(),
        line,
        msg: format!("field `{name}` is not a string"),
    })
}

/// Convert one parsed record into a normalized document. Returns `None` when
/// no keyphrase survives normalization (such lines are skipped and counted).
pub fn document_from_record(
    id: String,
    title: &str,
    body: &str,
    keywords: &[String],
) -> Option<Document> {
    let title_tokens = normalize_and_tokenize(title);
    let body_tokens = normalize_and_tokenize(body);
    let title_len = title_tokens.len();
    let mut source = title_tokens;
    source.extend(body_tokens);
    if source.is_empty() {
        return None;
    }
    let gold: Vec<Phrase> = keywords.iter().filter_map(|k| Phrase::from_text(k)).collect();
    let gold = dedup_phrases(&gold);
    if gold.is_empty() {
        return None;
    }
    Some(Document { id, source, title_len, gold })
}

/// Read a dataset JSONL file ({"id", "title", "abstract", "keywords"} per
/// line) into normalized documents.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<LoadedDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| KpError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut docs = Vec::new();
    let mut skipped_empty = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| KpError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| KpError::JsonLine {
                path: path.to_path_buf(),
                line: line_no,
                msg: e.to_string(),
            })?;
        let id = str_field(&value, "id", path, line_no)?;
        let title = str_field(&value, "title", path, line_no)?;
        let abstract_ = str_field(&value, "abstract", path, line_no)?;
        let kw = field(&value, "keywords", path, line_no)?;
        let keywords: Vec<String> = kw
            .as_array()
            .ok_or_else(|| KpError::JsonLine {
                path: path.to_path_buf(),
                line: line_no,
                msg: "field `keywords` is not a list".into(),
            })?
            .iter()
            .map(|v| {
                v.as_str().map(str::to_string).ok_or_else(|| KpError::JsonLine {
                    path: path.to_path_buf(),
                    line: line_no,
                    msg: "keyword entry is not a string".into(),
                })
            })
            .collect::<Result<_>>()?;
        match document_from_record(id, &title, &abstract_, &keywords) {
            Some(doc) => docs.push(doc),
            None => skipped_empty += 1,
        }
    }
    Ok(LoadedDataset { docs, skipped_empty })
}

/// Read raw records without digit replacement: title/abstract/keywords are
/// surface-tokenized (lowercased, punctuation split) so the stored text
/// reloads to identical normalized documents. Records whose keyword list is
/// empty after tokenization are skipped and counted.
pub fn load_raw_records(path: impl AsRef<Path>) -> Result<(Vec<RawRecord>, usize)> {
    use crate::text::tokenize_surfaces;
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| KpError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut skipped = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| KpError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| KpError::JsonLine {
                path: path.to_path_buf(),
                line: line_no,
                msg: e.to_string(),
            })?;
        let id = str_field(&value, "id", path, line_no)?;
        let title = tokenize_surfaces(&str_field(&value, "title", path, line_no)?).join(" ");
        let abstract_ = tokenize_surfaces(&str_field(&value, "abstract", path, line_no)?).join(" ");
        let kw = field(&value, "keywords", path, line_no)?;
        let keywords: Vec<String> = kw
            .as_array()
            .ok_or_else(|| KpError::JsonLine {
                path: path.to_path_buf(),
                line: line_no,
                msg: "field `keywords` is not a list".into(),
            })?
            .iter()
            .filter_map(|v| v.as_str())
            .map(|s| tokenize_surfaces(s).join(" "))
            .filter(|s| !s.is_empty())
            .collect();
        if keywords.is_empty() || (title.is_empty() && abstract_.is_empty()) {
            skipped += 1;
            continue;
        }
        records.push(RawRecord { id, title, abstract_, keywords });
    }
    Ok((records, skipped))
}

/// Write records as JSONL (the inverse of `load_jsonl`'s schema).
pub fn write_jsonl(path: impl AsRef<Path>, records: &[RawRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| KpError::io(path, e))?;
    for rec in records {
        let line = serde_json::to_string(&rec.to_json()).expect("serializable");
        writeln!(file, "{line}").map_err(|e| KpError::io(path, e))?;
    }
    Ok(())
}

use std::path::Path;

use quick_xml::events::Event;
use quick_xml::Reader;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::jsonl::{load_jsonl, write_jsonl, RawRecord};
use crate::error::{KpError, Result};
use crate::text::{is_present, tokenize_surfaces};

/// Split sizes and truncation limits for the converter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitConfig {
    pub valid: usize,
    pub test: usize,
    pub seed: u64,
    /// Token budget for training sources.
    pub train_truncate: usize,
    /// Token budget for validation and test sources.
    pub eval_truncate: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            valid: 16_000,
            test: 16_000,
            seed: 1,
            train_truncate: 300,
            eval_truncate: 1_000,
        }
    }
}

/// Table-1 style statistics for one emitted split.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SplitStats {
    pub count: usize,
    pub kp_mean: f64,
    pub kp_var: f64,
    pub pct_present: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvertReport {
    pub rows_seen: usize,
    pub kept: usize,
    pub skipped_not_question: usize,
    pub skipped_no_tags: usize,
    pub skipped_empty: usize,
    pub train: SplitStats,
    pub valid: SplitStats,
    pub test: SplitStats,
}

struct PostRow {
    id: String,
    title: String,
    body: String,
    tags: Vec<String>,
}

/// Strip HTML tags, decode the common entities, and keep all text content
/// (including code blocks).
pub fn strip_html(html: &str) -> String {
    let mut out = String::with_capacity(html.len());
    let mut chars = html.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '<' => {
                // skip to the closing angle bracket
                for t in chars.by_ref() {
                    if t == '>' {
                        break;
                    }
                }
                out.push(' ');
            }
            '&' => {
                let mut entity = String::new();
                let mut terminated = false;
                while let Some(&n) = chars.peek() {
                    if n == ';' {
                        chars.next();
                        terminated = true;
                        break;
                    }
                    if n.is_whitespace() || n == '&' || n == '<' || entity.len() > 8 {
                        break;
                    }
                    entity.push(n);
                    chars.next();
                }
                if !terminated {
                    out.push('&');
                    out.push_str(&entity);
                    continue;
                }
                match entity.as_str() {
                    "lt" => out.push('<'),
                    "gt" => out.push('>'),
                    "amp" => out.push('&'),
                    "quot" => out.push('"'),
                    "apos" => out.push('\''),
                    "nbsp" => out.push(' '),
                    e if e.starts_with("#x") || e.starts_with("#X") => {
                        if let Ok(code) = u32::from_str_radix(&e[2..], 16) {
                            out.push(char::from_u32(code).unwrap_or(' '));
                        }
                    }
                    e if e.starts_with('#') => {
                        if let Ok(code) = e[1..].parse::<u32>() {
                            out.push(char::from_u32(code).unwrap_or(' '));
                        }
                    }
                    _ => out.push(' '),
                }
            }
            _ => out.push(c),
        }
    }
    out
}

/// Parse a Tags attribute value such as `<java><linux>` into tag phrases,
/// mapping hyphens to spaces (`event-handling` -> `event handling`).
pub fn parse_tags(raw: &str) -> Vec<String> {
    raw.split(['<', '>'])
        .map(|t| t.trim().replace('-', " "))
        .filter(|t| !t.is_empty())
        .collect()
}

fn attr_map(e: &quick_xml::events::BytesStart<'_>, path: &Path, pos: u64) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for attr in e.attributes() {
        let attr = attr.map_err(|err| KpError::Xml {
            path: path.to_path_buf(),
            pos,
            msg: err.to_string(),
        })?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).to_string();
        let value = attr
            .unescape_value()
            .map_err(|err| KpError::Xml {
                path: path.to_path_buf(),
                pos,
                msg: err.to_string(),
            })?
            .to_string();
        out.push((key, value));
    }
    Ok(out)
}

fn read_posts(path: &Path) -> Result<(Vec<PostRow>, usize, usize, usize)> {
    let mut reader = Reader::from_file(path).map_err(|e| KpError::Xml {
        path: path.to_path_buf(),
        pos: 0,
        msg: e.to_string(),
    })?;
    let mut buf = Vec::new();
    let mut rows = Vec::new();
    let mut rows_seen = 0usize;
    let mut skipped_not_question = 0usize;
    let mut skipped_no_tags = 0usize;
    loop {
        let pos = reader.buffer_position();
        match reader.read_event_into(&mut buf) {
            Err(e) => {
                return Err(KpError::Xml {
                    path: path.to_path_buf(),
                    pos: reader.buffer_position(),
                    msg: e.to_string(),
                })
            }
            Ok(Event::Eof) => break,
            Ok(Event::Empty(ref e)) | Ok(Event::Start(ref e)) if e.name().as_ref() == b"row" => {
                rows_seen += 1;
                let attrs = attr_map(e, path, pos)?;
                let get = |k: &str| attrs.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone());
                if get("PostTypeId").as_deref() != Some("1") {
                    skipped_not_question += 1;
                } else {
                    let tags = get("Tags").map(|t| parse_tags(&t)).unwrap_or_default();
                    if tags.is_empty() {
                        skipped_no_tags += 1;
                    } else {
                        rows.push(PostRow {
                            id: get("Id").unwrap_or_else(|| format!("row{rows_seen}")),
                            title: get("Title").unwrap_or_default(),
                            body: get("Body").unwrap_or_default(),
                            tags,
                        });
                    }
                }
            }
            Ok(_) => {}
        }
        buf.clear();
    }
    Ok((rows, rows_seen, skipped_not_question, skipped_no_tags))
}

/// Turn one post into a storable record, truncating the combined
/// title-then-body token stream to `max_tokens`.
fn record_from_post(post: &PostRow, max_tokens: usize) -> Option<RawRecord> {
    let title_tokens = tokenize_surfaces(&post.title);
    let body_tokens = tokenize_surfaces(&strip_html(&post.body));
    let mut combined: Vec<String> = title_tokens;
    let title_len = combined.len().min(max_tokens);
    combined.extend(body_tokens);
    combined.truncate(max_tokens);
    if combined.is_empty() {
        return None;
    }
    let title = combined[..title_len].join(" ");
    let body = combined[title_len..].join(" ");
    Some(RawRecord {
        id: post.id.clone(),
        title,
        abstract_: body,
        keywords: post.tags.clone(),
    })
}

/// Recompute Table-1 statistics for an emitted split file.
pub fn stats_for_file(path: &Path) -> Result<SplitStats> {
    let ds = load_jsonl(path)?;
    let count = ds.docs.len();
    let counts: Vec<f64> = ds.docs.iter().map(|d| d.gold.len() as f64).collect();
    let total: f64 = counts.iter().sum();
    let kp_mean = if count == 0 { 0.0 } else { total / count as f64 };
    let kp_var = if count == 0 {
        0.0
    } else {
        counts.iter().map(|c| (c - kp_mean).powi(2)).sum::<f64>() / count as f64
    };
    let mut present = 0usize;
    for doc in &ds.docs {
        for phrase in &doc.gold {
            if is_present(phrase, &doc.source) {
                present += 1;
            }
        }
    }
    let pct_present = if total == 0.0 { 0.0 } else { 100.0 * present as f64 / total };
    Ok(SplitStats { count, kp_mean, kp_var, pct_present })
}

/// Convert a StackExchange `Posts.xml` dump into train/valid/test JSONL files
/// plus a `stats.json`, under `out_dir`.
pub fn convert_stackexchange(
    posts_xml: &Path,
    out_dir: &Path,
    cfg: &SplitConfig,
) -> Result<ConvertReport> {
    let (posts, rows_seen, skipped_not_question, skipped_no_tags) = read_posts(posts_xml)?;
    if posts.len() < cfg.valid + cfg.test {
        return Err(KpError::InvalidInput(format!(
            "{} usable posts cannot cover valid={} + test={}",
            posts.len(),
            cfg.valid,
            cfg.test
        )));
    }

    let mut order: Vec<usize> = (0..posts.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order.shuffle(&mut rng);
    let valid_idx = &order[..cfg.valid];
    let test_idx = &order[cfg.valid..cfg.valid + cfg.test];
    let train_idx = &order[cfg.valid + cfg.test..];

    std::fs::create_dir_all(out_dir).map_err(|e| KpError::io(out_dir, e))?;
    let mut skipped_empty = 0usize;
    let emit = |name: &str, idx: &[usize], trunc: usize, skipped: &mut usize| -> Result<()> {
        let mut idx: Vec<usize> = idx.to_vec();
        idx.sort_unstable(); // stable file order regardless of shuffle
        let records: Vec<RawRecord> = idx
            .iter()
            .filter_map(|&i| {
                let rec = record_from_post(&posts[i], trunc);
                if rec.is_none() {
                    *skipped += 1;
                }
                rec
            })
            .collect();
        write_jsonl(out_dir.join(name), &records)
    };
    emit("train.jsonl", train_idx, cfg.train_truncate, &mut skipped_empty)?;
    emit("valid.jsonl", valid_idx, cfg.eval_truncate, &mut skipped_empty)?;
    emit("test.jsonl", test_idx, cfg.eval_truncate, &mut skipped_empty)?;

    let train = stats_for_file(&out_dir.join("train.jsonl"))?;
    let valid = stats_for_file(&out_dir.join("valid.jsonl"))?;
    let test = stats_for_file(&out_dir.join("test.jsonl"))?;
    let stats = serde_json::json!({ "train": train, "valid": valid, "test": test });
    std::fs::write(
        out_dir.join("stats.json"),
        serde_json::to_string_pretty(&stats).expect("serializable"),
    )
    .map_err(|e| KpError::io(out_dir.join("stats.json"), e))?;

    Ok(ConvertReport {
        rows_seen,
        kept: posts.len(),
        skipped_not_question,
        skipped_no_tags,
        skipped_empty,
        train,
        valid,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_tags_and_decodes_entities() {
        assert_eq!(strip_html("<p>code</p>").trim(), "code");
        assert_eq!(strip_html("a&lt;b&gt;c"), "a<b>c");
        assert_eq!(strip_html("x&amp;y"), "x&y");
        assert_eq!(strip_html("n&#39;t &#x41;"), "n't A");
        assert_eq!(strip_html("broken &amp without semicolon"), "broken &amp without semicolon");
    }

    #[test]
    fn tags_parse_and_hyphens_become_spaces() {
        assert_eq!(parse_tags("<java><linux>"), vec!["java", "linux"]);
        assert_eq!(parse_tags("<event-handling>"), vec!["event handling"]);
        assert!(parse_tags("").is_empty());
    }

    fn fixture_xml(rows: &[String]) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<posts>\n{}\n</posts>\n",
            rows.join("\n")
        )
    }

    fn question(id: usize, title: &str, body_html_escaped: &str, tags: &str) -> String {
        format!(
            "  <row Id=\"{id}\" PostTypeId=\"1\" Title=\"{title}\" Body=\"{body_html_escaped}\" Tags=\"{tags}\" />"
        )
    }

    #[test]
    fn converts_fixture_rows() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<String> = (0..8)
            .map(|i| {
                question(
                    i,
                    &format!("Question {i} about widgets"),
                    "&lt;p&gt;some code&lt;/p&gt;",
                    "&lt;java&gt;&lt;linux&gt;",
                )
            })
            .chain(std::iter::once(
                "  <row Id=\"99\" PostTypeId=\"2\" Body=\"an answer\" />".to_string(),
            ))
            .collect();
        let xml_path = dir.path().join("Posts.xml");
        std::fs::write(&xml_path, fixture_xml(&rows)).unwrap();
        let cfg = SplitConfig { valid: 2, test: 2, seed: 1, ..Default::default() };
        let report = convert_stackexchange(&xml_path, dir.path(), &cfg).unwrap();
        assert_eq!(report.rows_seen, 9);
        assert_eq!(report.kept, 8);
        assert_eq!(report.skipped_not_question, 1);
        assert_eq!(report.train.count, 4);
        assert_eq!(report.valid.count, 2);
        assert_eq!(report.test.count, 2);
        assert_eq!(report.train.kp_mean, 2.0);
        assert_eq!(report.train.kp_var, 0.0);

        let train = load_jsonl(dir.path().join("train.jsonl")).unwrap();
        let doc = &train.docs[0];
        assert!(doc.gold.iter().any(|p| p.surface() == "java"));
        assert!(doc.source.iter().any(|t| t.as_str() == "code"));
    }

    #[test]
    fn splits_are_disjoint_and_seeded() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<String> = (0..20)
            .map(|i| question(i, &format!("T{i}"), "body text here", "&lt;rust&gt;"))
            .collect();
        let xml_path = dir.path().join("Posts.xml");
        std::fs::write(&xml_path, fixture_xml(&rows)).unwrap();
        let cfg = SplitConfig { valid: 5, test: 5, seed: 7, ..Default::default() };
        convert_stackexchange(&xml_path, dir.path(), &cfg).unwrap();
        let ids = |name: &str| -> Vec<String> {
            load_jsonl(dir.path().join(name)).unwrap().docs.into_iter().map(|d| d.id).collect()
        };
        let train = ids("train.jsonl");
        let valid = ids("valid.jsonl");
        let test = ids("test.jsonl");
        assert_eq!(train.len() + valid.len() + test.len(), 20);
        let mut all: Vec<&String> = train.iter().chain(&valid).chain(&test).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 20, "splits must be disjoint by post id");

        // same seed reproduces membership
        let dir2 = tempfile::tempdir().unwrap();
        let xml2 = dir2.path().join("Posts.xml");
        std::fs::write(&xml2, fixture_xml(&rows)).unwrap();
        convert_stackexchange(&xml2, dir2.path(), &cfg).unwrap();
        let valid2: Vec<String> = load_jsonl(dir2.path().join("valid.jsonl"))
            .unwrap()
            .docs
            .into_iter()
            .map(|d| d.id)
            .collect();
        assert_eq!(valid, valid2);
    }

    #[test]
    fn training_sources_truncate_to_budget() {
        let dir = tempfile::tempdir().unwrap();
        let long_body = vec!["tok"; 310].join(" ");
        let rows: Vec<String> = (0..4)
            .map(|i| question(i, "Short title", &long_body, "&lt;rust&gt;"))
            .collect();
        let xml_path = dir.path().join("Posts.xml");
        std::fs::write(&xml_path, fixture_xml(&rows)).unwrap();
        let cfg = SplitConfig { valid: 1, test: 1, seed: 3, ..Default::default() };
        convert_stackexchange(&xml_path, dir.path(), &cfg).unwrap();
        let train = load_jsonl(dir.path().join("train.jsonl")).unwrap();
        for doc in &train.docs {
            assert_eq!(doc.source.len(), 300);
        }
        let valid = load_jsonl(dir.path().join("valid.jsonl")).unwrap();
        assert_eq!(valid.docs[0].source.len(), 312); // short enough for the eval budget
    }

    #[test]
    fn malformed_xml_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let xml_path = dir.path().join("Posts.xml");
        std::fs::write(&xml_path, "<posts>\n  <row Id=\"1\" PostTypeId=\"1\"\n").unwrap();
        match convert_stackexchange(&xml_path, dir.path(), &SplitConfig::default()) {
            Err(KpError::Xml { pos, .. }) => assert!(pos > 0),
            other => panic!("expected Xml error, got {other:?}"),
        }
    }
}

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{KpError, Result};
use crate::text::{dedup_phrases, Document, Phrase, StemmedSource};

/// Matching outcome for one document at one cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchResult {
    /// Predictions actually considered: min(k, number of predictions).
    pub considered: usize,
    pub correct: usize,
    pub targets: usize,
}

impl MatchResult {
    /// P@k = correct / min(k, #pred); 0 when there are no predictions.
    pub fn precision(&self) -> f64 {
        if self.considered == 0 {
            0.0
        } else {
            self.correct as f64 / self.considered as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.targets == 0 {
            0.0
        } else {
            self.correct as f64 / self.targets as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// One-to-one matching of the top-k predictions against the gold set, by
/// stemmed key. A gold phrase can be matched by at most one prediction.
pub fn match_at_k(preds: &[Phrase], gold: &[Phrase], k: usize) -> Result<MatchResult> {
    if gold.is_empty() {
        return Err(KpError::InvalidInput(
            "match_at_k needs a non-empty gold set (empty-gold documents are removed upstream)"
                .into(),
        ));
    }
    let considered = k.min(preds.len());
    let mut unmatched: HashSet<&str> = gold.iter().map(|p| p.stemmed_key.as_str()).collect();
    let targets = unmatched.len();
    let mut correct = 0;
    for pred in &preds[..considered] {
        if unmatched.remove(pred.stemmed_key.as_str()) {
            correct += 1;
        }
    }
    Ok(MatchResult { considered, correct, targets })
}

/// F1@O: the cutoff equals the number of gold keyphrases.
pub fn f1_at_o(preds: &[Phrase], gold: &[Phrase]) -> Result<MatchResult> {
    match_at_k(preds, gold, gold.len())
}

/// F1@M: every prediction is used, no truncation.
pub fn f1_at_m(preds: &[Phrase], gold: &[Phrase]) -> Result<MatchResult> {
    match_at_k(preds, gold, preds.len())
}

/// R@k for the absent-phrase protocol.
pub fn recall_at_k(preds: &[Phrase], gold: &[Phrase], k: usize) -> Result<f64> {
    Ok(match_at_k(preds, gold, k)?.recall())
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<MatchResult> for Prf {
    fn from(m: MatchResult) -> Prf {
        Prf { precision: m.precision(), recall: m.recall(), f1: m.f1() }
    }
}

/// Macro-averaged present-side metrics.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PresentReport {
    /// Documents with at least one present gold phrase.
    pub docs: usize,
    pub at_5: Prf,
    pub at_10: Prf,
    pub f1_at_o: f64,
    pub f1_at_m: f64,
    /// Extra fixed-k columns requested at evaluation time.
    pub extra: BTreeMap<usize, Prf>,
}

/// Macro-averaged absent-side metrics.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AbsentReport {
    /// Documents with at least one absent gold phrase.
    pub docs: usize,
    pub r_at_10: f64,
    pub r_at_50: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricReport {
    pub documents: usize,
    /// Gold documents that had no prediction entry (scored as empty).
    pub missing_predictions: usize,
    pub present: PresentReport,
    pub absent: AbsentReport,
}

#[derive(Default)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn value(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }
}

#[derive(Default)]
struct PrfMean {
    p: Mean,
    r: Mean,
    f: Mean,
}

impl PrfMean {
    fn push(&mut self, m: MatchResult) {
        self.p.push(m.precision());
        self.r.push(m.recall());
        self.f.push(m.f1());
    }

    fn value(&self) -> Prf {
        Prf { precision: self.p.value(), recall: self.r.value(), f1: self.f.value() }
    }
}

/// Per-document scores before macro averaging.
struct DocScore {
    missing: bool,
    present: Option<(MatchResult, MatchResult, Vec<(usize, MatchResult)>, f64, f64)>,
    absent: Option<(f64, f64)>,
}

fn score_document(
    doc: &Document,
    preds: Option<&[Phrase]>,
    extra_ks: &[usize],
) -> Result<DocScore> {
    let missing = preds.is_none();
    let preds = dedup_phrases(preds.unwrap_or(&[]));
    let stems = StemmedSource::new(&doc.source);
    let (pred_present, pred_absent): (Vec<Phrase>, Vec<Phrase>) =
        preds.into_iter().partition(|p| stems.find(p).is_some());
    let (gold_present, gold_absent): (Vec<Phrase>, Vec<Phrase>) =
        doc.gold.iter().cloned().partition(|p| stems.find(p).is_some());

    let present = if gold_present.is_empty() {
        None
    } else {
        let at5 = match_at_k(&pred_present, &gold_present, 5)?;
        let at10 = match_at_k(&pred_present, &gold_present, 10)?;
        let extra = extra_ks
            .iter()
            .map(|&k| Ok((k, match_at_k(&pred_present, &gold_present, k)?)))
            .collect::<Result<Vec<_>>>()?;
        let o = f1_at_o(&pred_present, &gold_present)?.f1();
        let m = f1_at_m(&pred_present, &gold_present)?.f1();
        Some((at5, at10, extra, o, m))
    };
    let absent = if gold_absent.is_empty() {
        None
    } else {
        Some((
            recall_at_k(&pred_absent, &gold_absent, 10)?,
            recall_at_k(&pred_absent, &gold_absent, 50)?,
        ))
    };
    Ok(DocScore { missing, present, absent })
}

/// Score a prediction list against gold documents: predictions and gold are
/// each split into present/absent sides against the source, metrics are
/// macro-averaged over the documents eligible for each side. Documents score
/// in parallel; the fold runs in document order, so results are
/// reproducible bit for bit regardless of thread count.
pub fn evaluate_dataset(
    docs: &[Document],
    predictions: &[(String, Vec<Phrase>)],
    extra_ks: &[usize],
) -> Result<MetricReport> {
    use rayon::prelude::*;

    let mut seen = HashSet::new();
    for doc in docs {
        if !seen.insert(doc.id.as_str()) {
            return Err(KpError::IdMismatch(format!("duplicate document id `{}` in gold", doc.id)));
        }
    }
    let mut pred_map: std::collections::HashMap<&str, &[Phrase]> = Default::default();
    for (id, phrases) in predictions {
        if pred_map.insert(id.as_str(), phrases.as_slice()).is_some() {
            return Err(KpError::IdMismatch(format!("duplicate document id `{id}` in predictions")));
        }
    }

    let scores: Vec<DocScore> = docs
        .par_iter()
        .map(|doc| score_document(doc, pred_map.get(doc.id.as_str()).copied(), extra_ks))
        .collect::<Result<Vec<_>>>()?;

    let mut missing = 0usize;
    let mut p5 = PrfMean::default();
    let mut p10 = PrfMean::default();
    let mut extra: BTreeMap<usize, PrfMean> = extra_ks.iter().map(|&k| (k, PrfMean::default())).collect();
    let mut f1o = Mean::default();
    let mut f1m = Mean::default();
    let mut r10 = Mean::default();
    let mut r50 = Mean::default();
    let mut present_docs = 0usize;
    let mut absent_docs = 0usize;

    for score in scores {
        if score.missing {
            missing += 1;
        }
        if let Some((at5, at10, per_k, o, m)) = score.present {
            present_docs += 1;
            p5.push(at5);
            p10.push(at10);
            for (k, res) in per_k {
                extra.get_mut(&k).expect("requested k").push(res);
            }
            f1o.push(o);
            f1m.push(m);
        }
        if let Some((a10, a50)) = score.absent {
            absent_docs += 1;
            r10.push(a10);
            r50.push(a50);
        }
    }

    Ok(MetricReport {
        documents: docs.len(),
        missing_predictions: missing,
        present: PresentReport {
            docs: present_docs,
            at_5: p5.value(),
            at_10: p10.value(),
            f1_at_o: f1o.value(),
            f1_at_m: f1m.value(),
            extra: extra.into_iter().map(|(k, m)| (k, m.value())).collect(),
        },
        absent: AbsentReport { docs: absent_docs, r_at_10: r10.value(), r_at_50: r50.value() },
    })
}

/// Aligned plain-text rendering of a report.
pub fn render_table(report: &MetricReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "documents: {}   missing predictions: {}\n",
        report.documents, report.missing_predictions
    ));
    out.push_str(&format!("present ({} docs)\n", report.present.docs));
    out.push_str("  metric        P        R       F1\n");
    let row = |name: &str, prf: &Prf| {
        format!("  {:<8} {:>8.4} {:>8.4} {:>8.4}\n", name, prf.precision, prf.recall, prf.f1)
    };
    out.push_str(&row("@5", &report.present.at_5));
    out.push_str(&row("@10", &report.present.at_10));
    for (k, prf) in &report.present.extra {
        out.push_str(&row(&format!("@{k}"), prf));
    }
    out.push_str(&format!("  {:<8} {:>26.4}\n", "F1@O", report.present.f1_at_o));
    out.push_str(&format!("  {:<8} {:>26.4}\n", "F1@M", report.present.f1_at_m));
    out.push_str(&format!("absent ({} docs)\n", report.absent.docs));
    out.push_str(&format!("  {:<8} {:>17.4}\n", "R@10", report.absent.r_at_10));
    out.push_str(&format!("  {:<8} {:>17.4}\n", "R@50", report.absent.r_at_50));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::normalize_and_tokenize;

    fn phrases(list: &[&str]) -> Vec<Phrase> {
        list.iter().map(|s| Phrase::from_text(s).unwrap()).collect()
    }

    #[test]
    fn identity_prediction_is_perfect() {
        let gold = phrases(&["graph slam", "rover"]);
        let m = match_at_k(&gold.clone(), &gold, gold.len()).unwrap();
        assert_eq!(m.precision(), 1.0);
        assert_eq!(m.recall(), 1.0);
        assert_eq!(m.f1(), 1.0);
    }

    #[test]
    fn five_of_ten_fixture() {
        // |gold| = 10, top-5 predictions all correct, k = 5
        let gold = phrases(&["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]);
        let preds = phrases(&["a", "b", "c", "d", "e"]);
        let m = match_at_k(&preds, &gold, 5).unwrap();
        assert_eq!(m.precision(), 1.0);
        assert_eq!(m.recall(), 0.5);
        assert!((m.f1() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn precision_denominator_is_min_k_pred() {
        let gold = phrases(&["a", "b"]);
        let preds = phrases(&["a", "x", "y"]);
        let m = match_at_k(&preds, &gold, 5).unwrap();
        assert_eq!(m.considered, 3);
        assert!((m.precision() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_at_m_fixture() {
        // 3 predictions, 1 correct, |gold| = 2: P = 1/3, R = 1/2, F1 = 0.4
        let gold = phrases(&["a", "b"]);
        let preds = phrases(&["a", "x", "y"]);
        let m = f1_at_m(&preds, &gold).unwrap();
        assert!((m.f1() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn f1_at_o_truncates_to_gold_count() {
        let gold = phrases(&["a", "b"]);
        // extras beyond |gold| are ignored by F1@O
        let preds = phrases(&["a", "b", "x", "y"]);
        let m = f1_at_o(&preds, &gold).unwrap();
        assert_eq!(m.f1(), 1.0);
    }

    #[test]
    fn matching_is_one_to_one_under_stemming() {
        // two predictions that stem identically can match only one gold
        let gold = phrases(&["robot", "arm"]);
        let preds = phrases(&["robots", "robot"]);
        let m = match_at_k(&preds, &gold, 2).unwrap();
        assert_eq!(m.correct, 1);
        assert!(m.precision() <= 1.0);
    }

    #[test]
    fn recall_cases() {
        let gold = phrases(&["a", "b", "c", "d"]);
        assert_eq!(recall_at_k(&phrases(&["x"]), &gold, 10).unwrap(), 0.0);
        assert_eq!(recall_at_k(&phrases(&["a", "b"]), &gold, 10).unwrap(), 0.5);
        let all = phrases(&["a", "b", "c", "d"]);
        assert_eq!(recall_at_k(&all, &gold, 10).unwrap(), 1.0);
    }

    #[test]
    fn empty_gold_is_an_error() {
        assert!(match_at_k(&phrases(&["a"]), &[], 5).is_err());
    }

    #[test]
    fn dataset_split_and_missing_predictions() {
        let docs = vec![
            Document {
                id: "1".into(),
                source: normalize_and_tokenize("alpha beta gamma"),
                title_len: 0,
                gold: phrases(&["alpha beta", "rover"]),
            },
            Document {
                id: "2".into(),
                source: normalize_and_tokenize("delta epsilon"),
                title_len: 0,
                gold: phrases(&["delta"]),
            },
        ];
        // doc 1 predicted perfectly on both sides, doc 2 missing
        let preds = vec![("1".to_string(), phrases(&["alpha beta", "rover"]))];
        let report = evaluate_dataset(&docs, &preds, &[]).unwrap();
        assert_eq!(report.documents, 2);
        assert_eq!(report.missing_predictions, 1);
        assert_eq!(report.present.docs, 2);
        assert_eq!(report.absent.docs, 1);
        // doc1 present F1@O = 1, doc2 = 0 -> macro 0.5
        assert!((report.present.f1_at_o - 0.5).abs() < 1e-12);
        assert_eq!(report.absent.r_at_10, 1.0);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let doc = Document {
            id: "1".into(),
            source: normalize_and_tokenize("alpha"),
            title_len: 0,
            gold: phrases(&["alpha"]),
        };
        let docs = vec![doc.clone(), doc];
        assert!(matches!(
            evaluate_dataset(&docs, &[], &[]),
            Err(KpError::IdMismatch(_))
        ));
    }

    #[test]
    fn removing_a_correct_prediction_never_helps() {
        let gold = phrases(&["a", "b", "c"]);
        let full = phrases(&["a", "x", "b"]);
        let dropped = phrases(&["x", "b"]); // removed the correct "a"
        for k in 1..=4 {
            let with = match_at_k(&full, &gold, k).unwrap();
            let without = match_at_k(&dropped, &gold, k).unwrap();
            assert!(without.f1() <= with.f1() + 1e-12, "k={k}");
            assert!(without.recall() <= with.recall() + 1e-12);
        }
    }
}

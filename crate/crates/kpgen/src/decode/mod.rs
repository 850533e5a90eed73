//! Decoding strategies: greedy and beam-search self-terminating decoding,
//! sequence-to-phrase splitting, and exhaustive over-generation with
//! deduplication and ranking.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::corpus::{EncodedExample, Vocabulary, BOS_ID, EOS_ID, SEP_ID, UNK_ID};
use crate::error::Result;
use crate::model::{decode_step, DecoderState, EncoderCache, ModelParams};
use crate::text::{Phrase, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Greedy,
    TopBeam,
    Exhaustive,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Strategy::Greedy => "greedy",
            Strategy::TopBeam => "top-beam",
            Strategy::Exhaustive => "exhaustive",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "greedy" => Ok(Strategy::Greedy),
            "top-beam" => Ok(Strategy::TopBeam),
            "exhaustive" => Ok(Strategy::Exhaustive),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

/// One beam-search hypothesis over the extended vocabulary.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
    state: DecoderState,
}

impl Hypothesis {
    fn prev_token(&self) -> usize {
        self.tokens.last().copied().unwrap_or(BOS_ID)
    }

    fn score(&self, length_normalize: bool) -> f64 {
        if length_normalize {
            self.log_prob / self.tokens.len().max(1) as f64
        } else {
            self.log_prob
        }
    }
}

/// A decoded phrase with its hypothesis score.
#[derive(Debug, Clone)]
pub struct ScoredPhrase {
    pub phrase: Phrase,
    pub score: f64,
}

/// Ordered unique phrase list for one document.
#[derive(Debug, Clone)]
pub struct DecodeResult {
    pub doc_id: String,
    pub phrases: Vec<ScoredPhrase>,
    pub strategy: Strategy,
    /// Number of `<unk>` tokens that were emitted as the argmax.
    pub unk_emitted: usize,
}

impl DecodeResult {
    pub fn surfaces(&self) -> Vec<String> {
        self.phrases.iter().map(|p| p.phrase.surface()).collect()
    }
}

/// Greedy decoding: argmax token at each step (ties broken toward the lowest
/// id), stopping at `</s>` or `max_len`. Returns the emitted extended ids,
/// the cumulative log-probability, and the decoder state at every step.
pub fn greedy_decode_states(
    params: &ModelParams,
    enc: &EncoderCache,
    ex: &EncodedExample,
    max_len: usize,
) -> Result<(Vec<usize>, f64, Vec<Array1<f64>>)> {
    let mut state = DecoderState::fresh(params, enc);
    let mut tokens = Vec::new();
    let mut states = Vec::new();
    let mut log_prob = 0.0;
    for _ in 0..max_len {
        let prev = tokens.last().copied().unwrap_or(BOS_ID);
        let dist = decode_step(params, enc, ex, &mut state, prev)?;
        let mut best = 0usize;
        let mut best_p = dist.p[0];
        for (i, &p) in dist.p.iter().enumerate().skip(1) {
            if p > best_p {
                best = i;
                best_p = p;
            }
        }
        tokens.push(best);
        states.push(state.h_d.clone());
        log_prob += best_p.max(f64::MIN_POSITIVE).ln();
        if best == EOS_ID {
            break;
        }
    }
    Ok((tokens, log_prob, states))
}

pub fn greedy_decode(
    params: &ModelParams,
    enc: &EncoderCache,
    ex: &EncodedExample,
    max_len: usize,
) -> Result<(Vec<usize>, f64)> {
    let (tokens, lp, _) = greedy_decode_states(params, enc, ex, max_len)?;
    Ok((tokens, lp))
}

/// Beam search over the extended vocabulary. Finished hypotheses retire to a
/// completed pool; hypotheses still alive at `max_len` are force-completed.
/// Returns up to `width` hypotheses ranked by cumulative log-probability
/// (optionally length-normalized), ties broken by lexicographic token order.
pub fn beam_search(
    params: &ModelParams,
    enc: &EncoderCache,
    ex: &EncodedExample,
    width: usize,
    max_len: usize,
    length_normalize: bool,
) -> Result<Vec<Hypothesis>> {
    assert!(width >= 1);
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
        state: DecoderState::fresh(params, enc),
    }];
    let mut completed: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        // expand every live hypothesis one step
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new(); // (log_prob, token, parent)
        let mut stepped: Vec<DecoderState> = Vec::with_capacity(live.len());
        for (idx, hyp) in live.iter().enumerate() {
            let mut state = hyp.state.clone();
            let dist = decode_step(params, enc, ex, &mut state, hyp.prev_token())?;
            for (tok, &p) in dist.p.iter().enumerate() {
                candidates.push((hyp.log_prob + p.max(f64::MIN_POSITIVE).ln(), tok, idx));
            }
            stepped.push(state);
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("finite scores")
                .then_with(|| a.1.cmp(&b.1))
                .then_with(|| a.2.cmp(&b.2))
        });
        candidates.truncate(width);
        let mut next_live = Vec::with_capacity(width);
        for (lp, tok, parent) in candidates {
            let mut tokens = live[parent].tokens.clone();
            tokens.push(tok);
            let hyp = Hypothesis {
                tokens,
                log_prob: lp,
                finished: tok == EOS_ID,
                state: stepped[parent].clone(),
            };
            if hyp.finished {
                completed.push(hyp);
            } else {
                next_live.push(hyp);
            }
        }
        live = next_live;
    }
    // hypotheses that never emitted </s> are kept as they stand
    completed.extend(live);
    completed.sort_by(|a, b| {
        b.score(length_normalize)
            .partial_cmp(&a.score(length_normalize))
            .expect("finite scores")
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    completed.truncate(width);
    Ok(completed)
}

/// Truncate at the first `</s>`, split on `<sep>`, drop empty segments.
/// Duplicates are retained; deduplication is a separate stage.
pub fn sequence_to_phrases(
    ids: &[usize],
    ex: &EncodedExample,
    vocab: &Vocabulary,
) -> Vec<Phrase> {
    let cut = ids.iter().position(|&id| id == EOS_ID).unwrap_or(ids.len());
    let mut phrases = Vec::new();
    for segment in ids[..cut].split(|&id| id == SEP_ID) {
        if segment.is_empty() {
            continue;
        }
        let tokens: Vec<Token> = segment
            .iter()
            .filter_map(|&id| ex.surface(vocab, id).map(Token::new))
            .collect();
        if !tokens.is_empty() {
            phrases.push(Phrase::new(tokens));
        }
    }
    phrases
}

fn push_unique(out: &mut Vec<ScoredPhrase>, phrase: Phrase, score: f64) {
    if !out.iter().any(|sp| sp.phrase.stemmed_key == phrase.stemmed_key) {
        out.push(ScoredPhrase { phrase, score });
    }
}

/// Decode exactly one sequence (greedy or the rank-1 beam hypothesis), split
/// it into phrases, and deduplicate. The phrase count is model-determined.
pub fn self_terminating_decode(
    params: &ModelParams,
    vocab: &Vocabulary,
    ex: &EncodedExample,
    mode: Strategy,
    beam_width: usize,
    max_len: usize,
    length_normalize: bool,
) -> Result<DecodeResult> {
    let (ids, score) = match mode {
        Strategy::Greedy => greedy_decode(params, &crate::model::encode_source(params, &ex.source_ids, None)?, ex, max_len)?,
        Strategy::TopBeam => {
            let enc = crate::model::encode_source(params, &ex.source_ids, None)?;
            let hyps = beam_search(params, &enc, ex, beam_width, max_len, length_normalize)?;
            let top = hyps.into_iter().next().expect("beam returns at least one hypothesis");
            (top.tokens, top.log_prob)
        }
        Strategy::Exhaustive => {
            panic!("exhaustive decoding goes through exhaustive_decode")
        }
    };
    let unk_emitted = ids.iter().filter(|&&id| id == UNK_ID).count();
    let mut phrases = Vec::new();
    for phrase in sequence_to_phrases(&ids, ex, vocab) {
        push_unique(&mut phrases, phrase, score);
    }
    Ok(DecodeResult { doc_id: ex.id.clone(), phrases, strategy: mode, unk_emitted })
}

/// Over-generate with a wide beam, then harvest phrases in beam-rank order
/// (position order within a hypothesis), deduplicating by stemmed key. Each
/// phrase keeps the score of the first hypothesis it appeared in.
pub fn exhaustive_decode(
    params: &ModelParams,
    vocab: &Vocabulary,
    ex: &EncodedExample,
    width: usize,
    max_len: usize,
    length_normalize: bool,
) -> Result<DecodeResult> {
    let enc = crate::model::encode_source(params, &ex.source_ids, None)?;
    let hyps = beam_search(params, &enc, ex, width, max_len, length_normalize)?;
    let mut phrases = Vec::new();
    let mut unk_emitted = 0usize;
    for hyp in &hyps {
        unk_emitted += hyp.tokens.iter().filter(|&&id| id == UNK_ID).count();
        let score = hyp.score(length_normalize);
        for phrase in sequence_to_phrases(&hyp.tokens, ex, vocab) {
            push_unique(&mut phrases, phrase, score);
        }
    }
    Ok(DecodeResult { doc_id: ex.id.clone(), phrases, strategy: Strategy::Exhaustive, unk_emitted })
}

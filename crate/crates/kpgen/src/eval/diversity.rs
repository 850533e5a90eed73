use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EncodedExample, SEP_ID};
use crate::decode::DecodeResult;
use crate::error::Result;
use crate::model::{encode_source, ModelParams};

/// Diversity diagnostics over a set of decode results and sampled states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiversityStats {
    pub avg_unique_phrases: f64,
    pub mean_pairwise_cosine: f64,
    pub states_sampled: usize,
}

/// Average unique-phrase count per document (results are deduplicated).
pub fn avg_unique_phrases(results: &[DecodeResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().map(|r| r.phrases.len() as f64).sum::<f64>() / results.len() as f64
}

/// Mean cosine similarity over all unordered pairs.
pub fn mean_pairwise_cosine(vectors: &[Array1<f64>]) -> f64 {
    let n = vectors.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let na = vectors[i].dot(&vectors[i]).sqrt();
            let nb = vectors[j].dot(&vectors[j]).sqrt();
            if na > 1e-12 && nb > 1e-12 {
                sum += vectors[i].dot(&vectors[j]) / (na * nb);
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        0.0
    } else {
        sum / pairs as f64
    }
}

/// Decoder states at `k` steps after each emitted `<sep>`, harvested from a
/// greedy self-terminating decode of one document.
pub fn delimiter_following_states(
    params: &ModelParams,
    ex: &EncodedExample,
    max_len: usize,
    steps_after: &[usize],
) -> Result<Vec<(usize, Array1<f64>)>> {
    let enc = encode_source(params, &ex.source_ids, None)?;
    let (tokens, _, states) = crate::decode::greedy_decode_states(params, &enc, ex, max_len)?;
    let mut out = Vec::new();
    for (pos, &tok) in tokens.iter().enumerate() {
        if tok == SEP_ID {
            for &k in steps_after {
                if k >= 1 && pos + k < states.len() {
                    out.push((k, states[pos + k].clone()));
                }
            }
        }
    }
    Ok(out)
}

/// Deterministically subsample state vectors down to `limit`.
pub fn sample_states(
    mut states: Vec<Array1<f64>>,
    limit: usize,
    seed: u64,
) -> Vec<Array1<f64>> {
    if states.len() <= limit {
        return states;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    states.shuffle(&mut rng);
    states.truncate(limit);
    states
}

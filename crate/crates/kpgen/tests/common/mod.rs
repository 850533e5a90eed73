//! Shared helpers for integration tests: tiny random configurations and the
//! central finite-difference gradient oracle.
#![allow(dead_code)]

use kpgen::corpus::{encode_example, EncodedExample, Vocabulary};
use kpgen::loss::{forward_batch, gradients, Lambdas};
use kpgen::model::{BatchNoise, ModelDims, ModelParams};
use kpgen::text::{normalize_and_tokenize, Document, Phrase};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WORD_POOL: [&str; 10] =
    ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta", "iota", "kappa"];

/// Random documents over a small word pool. Several pool words fall outside
/// the vocabulary so the copy path is exercised.
pub fn tiny_docs(seed: u64, count: usize, max_source: usize) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let src_len = rng.gen_range(2..=max_source);
            let words: Vec<&str> =
                (0..src_len).map(|_| *WORD_POOL.choose(&mut rng).unwrap()).collect();
            let n_gold = rng.gen_range(1..=2);
            let gold: Vec<Phrase> = (0..n_gold)
                .map(|_| {
                    // half present (drawn from the source), half pool-random
                    let len = rng.gen_range(1..=2);
                    let toks: Vec<&str> = if rng.gen_bool(0.5) {
                        let start = rng.gen_range(0..words.len());
                        words[start..(start + len).min(words.len())].to_vec()
                    } else {
                        (0..len).map(|_| *WORD_POOL.choose(&mut rng).unwrap()).collect()
                    };
                    Phrase::from_text(&toks.join(" ")).unwrap()
                })
                .collect();
            let gold = kpgen::text::dedup_phrases(&gold);
            Document {
                id: format!("doc{i}"),
                source: normalize_and_tokenize(&words.join(" ")),
                title_len: 0,
                gold,
            }
        })
        .collect()
}

pub struct TinySetup {
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub examples: Vec<EncodedExample>,
    pub noise: Option<BatchNoise>,
    pub sc_seed: u64,
}

/// The acceptance-scale tiny configuration: hidden 8, vocab 12, source
/// length <= 6, batch 3.
pub fn tiny_setup(seed: u64, with_dropout: bool) -> TinySetup {
    let docs = tiny_docs(seed, 3, 6);
    let vocab = Vocabulary::build(&docs, 12);
    let examples: Vec<EncodedExample> = docs.iter().map(|d| encode_example(d, &vocab)).collect();
    let dims = ModelDims { vocab: vocab.len(), embed: 7, hidden: 8, tenc_hidden: 8 };
    let params = ModelParams::init(dims, seed.wrapping_mul(31).wrapping_add(7));
    let noise = with_dropout
        .then(|| BatchNoise::sample(&dims, &examples, 0.1, seed.wrapping_add(99)));
    TinySetup { params, vocab, examples, noise, sc_seed: seed ^ 0x9e3779b9 }
}

pub const FD_H: f64 = 1e-4;
pub const SC_NEGATIVES: usize = 2;

/// Relative error with an absolute floor, per coordinate.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    /// (tensor, flat index, analytic, finite difference) of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Compare analytic gradients against central finite differences on a
/// deterministic sample of coordinates from every tensor. The detached
/// values (coverage states consumed by the decoder, encoder finals consumed
/// by the coverage loss) are frozen during the difference evaluations, which
/// is exactly the function the analytic gradient differentiates.
pub fn grad_check(setup: &TinySetup, lambdas: Lambdas, coords_per_tensor: usize) -> GradCheckReport {
    let fwd = forward_batch(
        &setup.params,
        &setup.examples,
        lambdas,
        setup.noise.as_ref(),
        SC_NEGATIVES,
        setup.sc_seed,
        None,
    )
    .expect("forward");
    let frozen = fwd.freeze_detached();

    // the frozen replay must reproduce the live loss at the same point
    let replay = forward_batch(
        &setup.params,
        &setup.examples,
        lambdas,
        setup.noise.as_ref(),
        SC_NEGATIVES,
        setup.sc_seed,
        Some(&frozen),
    )
    .expect("frozen replay");
    assert!(
        (replay.breakdown.total - fwd.breakdown.total).abs() < 1e-12,
        "frozen replay drifted: {} vs {}",
        replay.breakdown.total,
        fwd.breakdown.total
    );

    let noise_slices = setup.noise.as_ref().map(|n| n.per_example.as_slice());
    let grads = gradients(&setup.params, &setup.examples, &fwd, lambdas, noise_slices)
        .expect("gradients");

    let mut rng = ChaCha8Rng::seed_from_u64(setup.sc_seed.wrapping_add(1));
    let mut report =
        GradCheckReport { max_rel_err: 0.0, coords_checked: 0, worst: None };
    let tensor_names: Vec<&'static str> = setup.params.tensors().iter().map(|(n, _)| *n).collect();
    for (tensor_idx, name) in tensor_names.iter().enumerate() {
        let len = setup.params.tensors()[tensor_idx].1.as_slice().len();
        let mut picks: Vec<usize> = (0..len).collect();
        picks.shuffle(&mut rng);
        picks.truncate(coords_per_tensor.min(len));
        for flat in picks {
            let analytic = grads.tensors()[tensor_idx].1.as_slice()[flat];
            let eval = |delta: f64| -> f64 {
                let mut p = setup.params.clone();
                p.tensors_mut()[tensor_idx].1.as_slice_mut()[flat] += delta;
                forward_batch(
                    &p,
                    &setup.examples,
                    lambdas,
                    setup.noise.as_ref(),
                    SC_NEGATIVES,
                    setup.sc_seed,
                    Some(&frozen),
                )
                .expect("fd forward")
                .breakdown
                .total
            };
            let fd = (eval(FD_H) - eval(-FD_H)) / (2.0 * FD_H);
            let err = rel_err(analytic, fd);
            report.coords_checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((name.to_string(), flat, analytic, fd));
            }
        }
    }
    report
}

pub const LAMBDA_GRID: [Lambdas; 4] = [
    Lambdas { or: 0.0, sc: 0.0 },
    Lambdas { or: 1.0, sc: 0.0 },
    Lambdas { or: 0.0, sc: 1.0 },
    Lambdas { or: 1.0, sc: 1.0 },
];

use serde::{Deserialize, Serialize};

use crate::corpus::{encode_example, make_batches, EncodedExample, Vocabulary};
use crate::decode::{self, Strategy};
use crate::error::{KpError, Result};
use crate::eval::f1_at_o;
use crate::loss::{forward_batch, gradients, Lambdas, LossBreakdown};
use crate::model::{BatchNoise, ModelDims, ModelParams};
use crate::text::{dedup_phrases, Document, Phrase};
use crate::train::adam::{adam_step, clip_global_norm, AdamState};
use crate::train::checkpoint::Checkpoint;
use crate::train::config::TrainConfig;

/// Gradient clip threshold; protects the contrastive term early in training.
pub const MAX_GRAD_NORM: f64 = 1.0;
/// Decode budget for the per-epoch validation pass.
pub const VALIDATION_MAX_LEN: usize = 40;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u64,
    pub mean_total: f64,
    pub mean_nll: f64,
    pub mean_or: f64,
    pub mean_sc: f64,
    pub val_f1_o: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Best checkpoint by validation F1@O; absent only when training diverged
    /// before the first epoch finished.
    pub best: Option<Checkpoint>,
    pub best_epoch: u64,
    pub best_f1_o: f64,
    pub history: Vec<EpochStats>,
    pub diverged: bool,
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(a)
        .wrapping_mul(0xbf58476d1ce4e5b9)
        .wrapping_add(b);
    x ^= x >> 31;
    x
}

/// Greedy self-terminating decode over validation documents, scored with
/// F1@O against the full gold set.
pub fn validation_f1_o(
    params: &ModelParams,
    vocab: &Vocabulary,
    docs: &[Document],
    max_len: usize,
) -> Result<f64> {
    if docs.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for doc in docs {
        let ex = encode_example(doc, vocab);
        let result =
            decode::self_terminating_decode(params, vocab, &ex, Strategy::Greedy, 1, max_len, false)?;
        let preds: Vec<Phrase> = result.phrases.into_iter().map(|sp| sp.phrase).collect();
        let gold = dedup_phrases(&doc.gold);
        sum += f1_at_o(&preds, &gold)?.f1();
    }
    Ok(sum / docs.len() as f64)
}

/// Teacher-forced training with Adam, epoch-level validation, and best-F1@O
/// checkpoint selection. On divergence the best checkpoint so far is
/// retained and `diverged` is set.
pub fn train(
    config: &TrainConfig,
    train_docs: &[Document],
    valid_docs: &[Document],
    mut progress: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_docs.is_empty() {
        return Err(KpError::InvalidInput("training set is empty".into()));
    }
    let vocab = Vocabulary::build(train_docs, config.vocab);
    let examples: Vec<EncodedExample> =
        train_docs.iter().map(|d| encode_example(d, &vocab)).collect();
    let dims = ModelDims {
        vocab: vocab.len(),
        embed: config.embedding_dim,
        hidden: config.hidden,
        tenc_hidden: config.target_encoder_hidden,
    };
    let mut params = ModelParams::init(dims, config.seed);
    let mut adam = AdamState::new(dims);
    let lambdas = Lambdas { or: config.lambda_or, sc: config.lambda_sc };

    let mut history: Vec<EpochStats> = Vec::new();
    let mut val_history: Vec<f64> = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut best_epoch = 0u64;
    let mut best_f1 = f64::NEG_INFINITY;

    for epoch in 1..=config.max_epochs as u64 {
        let batches = make_batches(&examples, config.batch_size, mix(config.seed, epoch, 0));
        let mut sums = LossBreakdown::combine(0.0, 0.0, 0.0, lambdas);
        for (step, batch) in batches.iter().enumerate() {
            let step_seed = mix(config.seed, epoch, 1 + step as u64);
            let noise = (config.dropout > 0.0).then(|| {
                BatchNoise::sample(&dims, &batch.examples, config.dropout, step_seed)
            });
            let fwd = forward_batch(
                &params,
                &batch.examples,
                lambdas,
                noise.as_ref(),
                config.negatives,
                mix(config.seed, epoch, 0x5eed + step as u64),
                None,
            )?;
            if !fwd.breakdown.is_finite() {
                return Ok(TrainOutcome {
                    best,
                    best_epoch,
                    best_f1_o: if best_f1.is_finite() { best_f1 } else { 0.0 },
                    history,
                    diverged: true,
                });
            }
            sums.nll += fwd.breakdown.nll * batch.len() as f64;
            sums.l_or += fwd.breakdown.l_or * batch.len() as f64;
            sums.l_sc += fwd.breakdown.l_sc * batch.len() as f64;
            sums.total += fwd.breakdown.total * batch.len() as f64;
            let mut grads = gradients(
                &params,
                &batch.examples,
                &fwd,
                lambdas,
                noise.as_ref().map(|n| n.per_example.as_slice()),
            )?;
            clip_global_norm(&mut grads, MAX_GRAD_NORM);
            if let Err(e) = adam_step(&mut params, &grads, &mut adam, config.learning_rate) {
                let _ = e;
                return Ok(TrainOutcome {
                    best,
                    best_epoch,
                    best_f1_o: if best_f1.is_finite() { best_f1 } else { 0.0 },
                    history,
                    diverged: true,
                });
            }
        }

        let n = examples.len() as f64;
        let val = validation_f1_o(&params, &vocab, valid_docs, VALIDATION_MAX_LEN)?;
        val_history.push(val);
        let stats = EpochStats {
            epoch,
            mean_total: sums.total / n,
            mean_nll: sums.nll / n,
            mean_or: sums.l_or / n,
            mean_sc: sums.l_sc / n,
            val_f1_o: val,
        };
        progress(&stats);
        history.push(stats);
        if val > best_f1 {
            best_f1 = val;
            best_epoch = epoch;
            best = Some(Checkpoint::snapshot(
                &params,
                &adam,
                config,
                &vocab,
                epoch,
                val_history.clone(),
            ));
        }
    }

    Ok(TrainOutcome {
        best,
        best_epoch,
        best_f1_o: if best_f1.is_finite() { best_f1 } else { 0.0 },
        history,
        diverged: false,
    })
}

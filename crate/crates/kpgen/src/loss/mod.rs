//! The three training losses and their batch combination.

mod backward;

pub use backward::gradients;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::EncodedExample;
use crate::error::{KpError, Result};
use crate::model::{
    bilinear_logit, forward_example, log_sum_exp, BatchNoise, ExampleForward, FrozenDetach,
    ModelParams, PROB_CLAMP,
};

/// Loss weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lambdas {
    pub or: f64,
    pub sc: f64,
}

impl Lambdas {
    pub fn zero() -> Self {
        Lambdas { or: 0.0, sc: 0.0 }
    }
}

/// Components of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub nll: f64,
    pub l_sc: f64,
    pub l_or: f64,
    pub total: f64,
    pub lambda_or: f64,
    pub lambda_sc: f64,
}

impl LossBreakdown {
    pub fn combine(nll: f64, l_or: f64, l_sc: f64, lambdas: Lambdas) -> Self {
        LossBreakdown {
            nll,
            l_sc,
            l_or,
            total: nll + lambdas.or * l_or + lambdas.sc * l_sc,
            lambda_or: lambdas.or,
            lambda_sc: lambdas.sc,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.nll.is_finite() && self.l_sc.is_finite() && self.l_or.is_finite() && self.total.is_finite()
    }
}

/// Mean negative log-likelihood over one sequence of per-step distributions.
/// Probabilities below 1e-12 are clamped before the log.
pub fn nll_loss(step_distributions: &[Array1<f64>], targets: &[usize]) -> Result<f64> {
    assert_eq!(step_distributions.len(), targets.len());
    if targets.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (p, &t) in step_distributions.iter().zip(targets) {
        if t >= p.len() {
            return Err(KpError::Shape(format!(
                "target id {t} out of range for a distribution over {}",
                p.len()
            )));
        }
        sum += -(p[t].max(PROB_CLAMP)).ln();
    }
    Ok(sum / targets.len() as f64)
}

/// Contrastive semantic-coverage loss:
/// -log( g(h_true, h_sc) / sum_i g(h_i, h_sc) ), computed via log-sum-exp of
/// the bilinear logits.
pub fn semantic_coverage_loss(
    h_sc_final: &Array1<f64>,
    encoder_finals: &[Array1<f64>],
    true_index: usize,
    bilinear: &Array2<f64>,
) -> Result<f64> {
    let n = encoder_finals.len();
    if n < 2 {
        return Err(KpError::Shape(
            "semantic coverage loss needs at least two candidates".into(),
        ));
    }
    assert!(true_index < n);
    let logits =
        Array1::from_iter(encoder_finals.iter().map(|a| bilinear_logit(a, h_sc_final, bilinear)));
    Ok(log_sum_exp(&logits) - logits[true_index])
}

/// Frobenius norm of the off-diagonal Gram matrix of the given states.
/// Zero or one state gives 0.
pub fn orthogonal_reg_loss(states: &[Array1<f64>]) -> f64 {
    let n = states.len();
    if n <= 1 {
        return 0.0;
    }
    let mut sum_sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let g = states[i].dot(&states[j]);
                sum_sq += g * g;
            }
        }
    }
    sum_sq.sqrt()
}

/// In-batch negative sampling plan for the coverage loss: per example, the
/// candidate list starts with the example itself followed by sampled
/// negatives from the same batch.
#[derive(Debug, Clone)]
pub struct ScPlan {
    pub candidates: Vec<Vec<usize>>,
}

impl ScPlan {
    pub fn sample(batch_size: usize, negatives: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut candidates = Vec::with_capacity(batch_size);
        for b in 0..batch_size {
            let mut others: Vec<usize> = (0..batch_size).filter(|&i| i != b).collect();
            others.shuffle(&mut rng);
            others.truncate(negatives);
            let mut list = Vec::with_capacity(others.len() + 1);
            list.push(b);
            list.extend(others);
            candidates.push(list);
        }
        ScPlan { candidates }
    }
}

/// Coverage-loss values for a batch.
#[derive(Debug, Clone)]
pub struct ScForward {
    pub plan: ScPlan,
    /// Softmax over each example's candidate logits.
    pub probs: Vec<Array1<f64>>,
    pub losses: Vec<f64>,
}

/// Forward pass and loss values for a whole batch.
#[derive(Debug)]
pub struct BatchForward {
    pub examples: Vec<ExampleForward>,
    /// Encoder final state offered to the candidate pool, per example
    /// (frozen values when running under a detach freeze).
    pub enc_finals_for_sc: Vec<Array1<f64>>,
    pub or_losses: Vec<f64>,
    pub sc: Option<ScForward>,
    pub token_count: usize,
    pub breakdown: LossBreakdown,
}

impl BatchForward {
    /// Snapshot every value that crosses a detach boundary.
    pub fn freeze_detached(&self) -> Vec<FrozenDetach> {
        self.examples.iter().map(ExampleForward::freeze_detached).collect()
    }
}

/// Run the teacher-forced forward pass over a batch and combine the three
/// losses of the training objective. `sc_seed` drives negative sampling;
/// batches of size one skip the coverage term (it needs two candidates).
pub fn forward_batch(
    params: &ModelParams,
    examples: &[EncodedExample],
    lambdas: Lambdas,
    noise: Option<&BatchNoise>,
    negatives: usize,
    sc_seed: u64,
    frozen: Option<&[FrozenDetach]>,
) -> Result<BatchForward> {
    assert!(!examples.is_empty());
    if let Some(n) = noise {
        assert_eq!(n.per_example.len(), examples.len());
    }
    if let Some(f) = frozen {
        assert_eq!(f.len(), examples.len());
    }
    let mut fwds = Vec::with_capacity(examples.len());
    for (i, ex) in examples.iter().enumerate() {
        let mask = noise.map(|n| &n.per_example[i]);
        let fr = frozen.map(|f| &f[i]);
        fwds.push(forward_example(params, ex, mask, fr)?);
    }

    let token_count: usize = examples.iter().map(EncodedExample::target_len).sum();
    let nll = fwds.iter().map(ExampleForward::nll_sum).sum::<f64>() / token_count as f64;

    let or_losses: Vec<f64> = fwds
        .iter()
        .map(|f| {
            let states: Vec<Array1<f64>> =
                f.delim_positions.iter().map(|&t| f.steps[t].gru.h_new.clone()).collect();
            orthogonal_reg_loss(&states)
        })
        .collect();
    let l_or = or_losses.iter().sum::<f64>() / examples.len() as f64;

    let enc_finals_for_sc: Vec<Array1<f64>> = match frozen {
        Some(f) => f.iter().map(|fr| fr.enc_final_for_sc.clone()).collect(),
        None => fwds.iter().map(|f| f.enc.final_state.clone()).collect(),
    };

    let sc = if examples.len() >= 2 {
        let plan = ScPlan::sample(examples.len(), negatives, sc_seed);
        let mut probs = Vec::with_capacity(examples.len());
        let mut losses = Vec::with_capacity(examples.len());
        for (b, fwd) in fwds.iter().enumerate() {
            let c = fwd.tenc_final();
            let logits = Array1::from_iter(
                plan.candidates[b]
                    .iter()
                    .map(|&i| bilinear_logit(&enc_finals_for_sc[i], &c, &params.bilinear)),
            );
            let lse = log_sum_exp(&logits);
            losses.push(lse - logits[0]);
            probs.push(logits.mapv(|v| (v - lse).exp()));
        }
        Some(ScForward { plan, probs, losses })
    } else {
        None
    };
    let l_sc = sc
        .as_ref()
        .map(|s| s.losses.iter().sum::<f64>() / examples.len() as f64)
        .unwrap_or(0.0);

    let breakdown = LossBreakdown::combine(nll, l_or, l_sc, lambdas);
    Ok(BatchForward {
        examples: fwds,
        enc_finals_for_sc,
        or_losses,
        sc,
        token_count,
        breakdown,
    })
}

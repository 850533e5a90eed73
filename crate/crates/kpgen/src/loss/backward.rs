//! Exact reverse-mode gradients of the combined objective, with the two
//! detach rules: the coverage state entering the decoder GRU carries no
//! gradient back into the target encoder, and encoder finals entering the
//! coverage loss carry no gradient back into the source encoder.

use ndarray::{Array1, Array2};

use crate::corpus::EncodedExample;
use crate::error::{KpError, Result};
use crate::loss::{BatchForward, Lambdas};
use crate::model::ops::add_outer;
use crate::model::{
    gru_backward, softmax, DropoutMasks, ExampleForward, GradientSet, ModelParams, PROB_CLAMP,
};

const OR_EPS: f64 = 1e-12;

/// Compute gradients for every parameter tensor from a recorded forward pass.
pub fn gradients(
    params: &ModelParams,
    examples: &[EncodedExample],
    fwd: &BatchForward,
    lambdas: Lambdas,
    noise: Option<&[DropoutMasks]>,
) -> Result<GradientSet> {
    let batch = examples.len();
    let mut grads = ModelParams::zeros(params.dims);

    // coverage-loss gradients: dB and the seed gradient on each tenc final
    let mut sc_seeds: Vec<Option<Array1<f64>>> = vec![None; batch];
    if lambdas.sc != 0.0 {
        if let Some(sc) = &fwd.sc {
            let factor = lambdas.sc / batch as f64;
            for b in 0..batch {
                let c = fwd.examples[b].tenc_final();
                let cands = &sc.plan.candidates[b];
                let probs = &sc.probs[b];
                let mut agg = Array1::zeros(params.dims.enc_state());
                for (pos, &cand) in cands.iter().enumerate() {
                    let coef = factor * (probs[pos] - if pos == 0 { 1.0 } else { 0.0 });
                    agg.scaled_add(coef, &fwd.enc_finals_for_sc[cand]);
                }
                add_outer(&mut grads.bilinear, &agg, &c);
                sc_seeds[b] = Some(params.bilinear.t().dot(&agg));
            }
        }
    }

    for b in 0..batch {
        let or_factor = if lambdas.or != 0.0 { lambdas.or / batch as f64 } else { 0.0 };
        backward_example(
            params,
            &mut grads,
            &examples[b],
            &fwd.examples[b],
            noise.map(|n| &n[b]),
            1.0 / fwd.token_count as f64,
            or_factor,
            sc_seeds[b].take(),
        );
    }

    grads.embedding.row_mut(0).fill(0.0); // <pad> row stays frozen
    if let Some(name) = grads.non_finite_tensor() {
        return Err(KpError::NonFinite(name.to_string()));
    }
    Ok(grads)
}

/// Gradient contributions of the orthogonal-regularization term on each
/// delimiter state: d||offdiag(H^T H)||_F / dH = 2 H offdiag(G) / loss.
fn or_state_grads(fwd: &ExampleForward, or_factor: f64) -> Vec<(usize, Array1<f64>)> {
    let n = fwd.delim_positions.len();
    if or_factor == 0.0 || n <= 1 {
        return Vec::new();
    }
    let states: Vec<&Array1<f64>> =
        fwd.delim_positions.iter().map(|&t| &fwd.steps[t].gru.h_new).collect();
    let mut gram = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                gram[[i, j]] = states[i].dot(states[j]);
            }
        }
    }
    let loss = gram.iter().map(|g| g * g).sum::<f64>().sqrt();
    if loss < OR_EPS {
        return Vec::new();
    }
    let scale = 2.0 * or_factor / loss;
    fwd.delim_positions
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let mut d = Array1::zeros(states[0].len());
            for i in 0..n {
                if i != j {
                    d.scaled_add(scale * gram[[i, j]], states[i]);
                }
            }
            (t, d)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn backward_example(
    params: &ModelParams,
    grads: &mut GradientSet,
    ex: &EncodedExample,
    fwd: &ExampleForward,
    noise: Option<&DropoutMasks>,
    nll_scale: f64,
    or_factor: f64,
    sc_seed: Option<Array1<f64>>,
) {
    let dims = params.dims;
    let vocab = dims.vocab;
    let hidden = dims.hidden;
    let n_src = ex.source_len();
    let m = ex.target_len();

    let mut d_enc_states: Array2<f64> = Array2::zeros((n_src, dims.enc_state()));
    let mut or_grads: Vec<Option<Array1<f64>>> = vec![None; m];
    for (t, d) in or_state_grads(fwd, or_factor) {
        or_grads[t] = Some(d);
    }

    let mut d_h_carry: Array1<f64> = Array1::zeros(hidden);
    for t in (0..m).rev() {
        let step = &fwd.steps[t];
        let gold = ex.target_ext_ids[t];
        let mut d_h_drop: Array1<f64> = Array1::zeros(hidden);
        let mut d_ctx: Array1<f64> = Array1::zeros(dims.enc_state());
        let mut d_alpha: Array1<f64> = Array1::zeros(n_src);

        // seed from the NLL term at this position
        let val = if step.p_gold > PROB_CLAMP { -nll_scale / step.p_gold } else { 0.0 };
        if val != 0.0 {
            // switch scalar
            let ds = val * (step.pa_gold - step.alpha_gold);
            // copy path: alpha positions carrying the gold id
            for (i, &eid) in ex.source_ext_ids.iter().enumerate() {
                if eid == gold {
                    d_alpha[i] += val * (1.0 - step.s);
                }
            }
            // generative path (only when gold is a base-vocabulary id)
            if gold < vocab {
                let dpa_gold = val * step.s;
                let p_a = softmax(&params.out_proj.apply(&step.readout_act));
                let inner = dpa_gold * p_a[gold];
                let mut d_logits = p_a.mapv(|v| -inner * v);
                d_logits[gold] += inner;
                add_outer(&mut grads.out_proj.w, &d_logits, &step.readout_act);
                grads.out_proj.b += &d_logits;
                let d_r4 = params.out_proj.w.t().dot(&d_logits);
                let d_a4 = &d_r4 * &step.readout_act.mapv(|v| 1.0 - v * v);
                let u = crate::model::concat(&step.h_drop, &step.context);
                add_outer(&mut grads.readout.w, &d_a4, &u);
                grads.readout.b += &d_a4;
                let d_u = params.readout.w.t().dot(&d_a4);
                d_h_drop += &d_u.slice(ndarray::s![..hidden]);
                d_ctx += &d_u.slice(ndarray::s![hidden..]);
            }
            // switch MLP
            let d_s_logit = ds * step.s * (1.0 - step.s);
            if d_s_logit != 0.0 {
                let q = &step.switch_act;
                grads.switch_out.w.row_mut(0).scaled_add(d_s_logit, q);
                grads.switch_out.b[0] += d_s_logit;
                let d_q = params.switch_out.w.row(0).to_owned() * d_s_logit;
                let d_qa = &d_q * &q.mapv(|v| 1.0 - v * v);
                add_outer(&mut grads.switch_ctx.w, &d_qa, &step.context);
                grads.switch_ctx.b += &d_qa;
                add_outer(&mut grads.switch_state.w, &d_qa, &step.h_drop);
                grads.switch_state.b += &d_qa;
                d_ctx += &params.switch_ctx.w.t().dot(&d_qa);
                d_h_drop += &params.switch_state.w.t().dot(&d_qa);
            }
        }

        // context = sum_i alpha_i h_e_i
        if d_ctx.iter().any(|&v| v != 0.0) {
            d_alpha += &fwd.enc.states.dot(&d_ctx);
            add_outer(&mut d_enc_states, &step.alpha, &d_ctx);
        }

        // attention softmax + energy MLP
        if d_alpha.iter().any(|&v| v != 0.0) {
            let dot = d_alpha.dot(&step.alpha);
            let d_e = &step.alpha * &d_alpha.mapv(|v| v - dot);
            let w2 = params.attn_score.w.row(0).to_owned();
            for i in 0..n_src {
                if d_e[i] == 0.0 {
                    continue;
                }
                let v = crate::model::concat(&step.h_drop, &fwd.enc.states.row(i).to_owned());
                let g = params.attn_hidden.apply(&v).mapv(f64::tanh);
                grads.attn_score.w.row_mut(0).scaled_add(d_e[i], &g);
                grads.attn_score.b[0] += d_e[i];
                let d_g = &w2 * d_e[i];
                let d_a1 = &d_g * &g.mapv(|x| 1.0 - x * x);
                add_outer(&mut grads.attn_hidden.w, &d_a1, &v);
                grads.attn_hidden.b += &d_a1;
                let d_v = params.attn_hidden.w.t().dot(&d_a1);
                d_h_drop += &d_v.slice(ndarray::s![..hidden]);
                d_enc_states
                    .row_mut(i)
                    .scaled_add(1.0, &d_v.slice(ndarray::s![hidden..]));
            }
        }

        // through the output dropout into the raw decoder state
        let mut d_h = match noise {
            Some(masks) => &d_h_drop * &masks.h_d.row(t),
            None => d_h_drop,
        };
        if let Some(d_or) = &or_grads[t] {
            d_h += d_or;
        }
        d_h += &d_h_carry;

        // decoder GRU cell; the coverage half of the input is detached
        let u = crate::model::concat(&step.x_drop, &step.hsc_in);
        let h_prev = if t > 0 { &fwd.steps[t - 1].gru.h_new } else { &fwd.h_d0 };
        let (d_u, d_h_prev) = gru_backward(&params.dec, &mut grads.dec, &u, h_prev, &step.gru, &d_h);
        let d_x_drop = d_u.slice(ndarray::s![..dims.embed]).to_owned();
        let d_x = match noise {
            Some(masks) => &d_x_drop * &masks.x_d.row(t),
            None => d_x_drop,
        };
        grads.embedding.row_mut(ex.target_in_ids[t]).scaled_add(1.0, &d_x);
        d_h_carry = d_h_prev;
    }

    // initial decoder state
    let d_a0 = &d_h_carry * &fwd.h_d0.mapv(|v| 1.0 - v * v);
    add_outer(&mut grads.init_map.w, &d_a0, &fwd.enc.final_state);
    grads.init_map.b += &d_a0;
    d_enc_states
        .row_mut(n_src - 1)
        .scaled_add(1.0, &params.init_map.w.t().dot(&d_a0));

    // coverage loss into the target encoder (the only live path into it)
    if let Some(seed) = sc_seed {
        let mut d_h = seed;
        for j in (0..m).rev() {
            let x = params.embed(base_id(ex.target_ext_ids[j], vocab));
            let h_prev = fwd.tenc_states.row(j).to_owned();
            let (d_x, d_h_prev) =
                gru_backward(&params.tenc, &mut grads.tenc, &x, &h_prev, &fwd.tenc_steps[j], &d_h);
            grads
                .embedding
                .row_mut(base_id(ex.target_ext_ids[j], vocab))
                .scaled_add(1.0, &d_x);
            d_h = d_h_prev;
        }
    }

    // encoder: undo the output dropout, then run both chains
    let mut d_x_emb: Array2<f64> = Array2::zeros((n_src, dims.embed));
    if let Some(masks) = noise {
        d_enc_states *= &masks.h_e;
    }
    let mut carry = Array1::zeros(hidden);
    let zero_h = Array1::zeros(hidden);
    for t in (0..n_src).rev() {
        let d_tot = &d_enc_states.slice(ndarray::s![t, ..hidden]).to_owned() + &carry;
        let h_prev = if t > 0 { &fwd.enc.fwd[t - 1].h_new } else { &zero_h };
        let (d_x, d_h_prev) = gru_backward(
            &params.enc_fwd,
            &mut grads.enc_fwd,
            &fwd.enc.x_drop.row(t).to_owned(),
            h_prev,
            &fwd.enc.fwd[t],
            &d_tot,
        );
        d_x_emb.row_mut(t).scaled_add(1.0, &d_x);
        carry = d_h_prev;
    }
    let mut carry = Array1::zeros(hidden);
    for t in 0..n_src {
        let d_tot = &d_enc_states.slice(ndarray::s![t, hidden..]).to_owned() + &carry;
        let h_prev = if t + 1 < n_src { &fwd.enc.bwd[t + 1].h_new } else { &zero_h };
        let (d_x, d_h_next) = gru_backward(
            &params.enc_bwd,
            &mut grads.enc_bwd,
            &fwd.enc.x_drop.row(t).to_owned(),
            h_prev,
            &fwd.enc.bwd[t],
            &d_tot,
        );
        d_x_emb.row_mut(t).scaled_add(1.0, &d_x);
        carry = d_h_next;
    }
    if let Some(masks) = noise {
        d_x_emb *= &masks.x_e;
    }
    for (t, &id) in ex.source_ids.iter().enumerate() {
        grads.embedding.row_mut(id).scaled_add(1.0, &d_x_emb.row(t));
    }
}

fn base_id(ext_id: usize, vocab: usize) -> usize {
    if ext_id < vocab {
        ext_id
    } else {
        crate::corpus::UNK_ID
    }
}

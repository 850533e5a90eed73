use ndarray::{Array1, Array2};

use crate::error::{KpError, Result};
use crate::model::params::{GruWeights, ModelParams};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable softmax.
pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.mapv(|v| (v - max).exp());
    let sum = out.sum();
    out.mapv_inplace(|v| v / sum);
    out
}

pub fn log_sum_exp(logits: &Array1<f64>) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logits.mapv(|v| (v - max).exp()).sum().ln()
}

pub fn concat(a: &Array1<f64>, b: &Array1<f64>) -> Array1<f64> {
    let mut out = Array1::zeros(a.len() + b.len());
    out.slice_mut(ndarray::s![..a.len()]).assign(a);
    out.slice_mut(ndarray::s![a.len()..]).assign(b);
    out
}

/// Intermediate values of one GRU step, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct GruCache {
    pub r: Array1<f64>,
    pub z: Array1<f64>,
    pub n: Array1<f64>,
    pub h_new: Array1<f64>,
}

/// Standard GRU update: sigmoid reset/update gates, tanh candidate,
/// h' = z*h + (1-z)*n.
pub fn gru_cell(w: &GruWeights, x: &Array1<f64>, h: &Array1<f64>) -> GruCache {
    debug_assert_eq!(x.len(), w.input(), "gru input width");
    debug_assert_eq!(h.len(), w.hidden(), "gru state width");
    let r = (w.w_r.dot(x) + w.u_r.dot(h) + &w.b_r).mapv(sigmoid);
    let z = (w.w_z.dot(x) + w.u_z.dot(h) + &w.b_z).mapv(sigmoid);
    let rh = &r * h;
    let n = (w.w_n.dot(x) + w.u_n.dot(&rh) + &w.b_n).mapv(f64::tanh);
    let h_new = &z * h + (1.0 - &z) * &n;
    GruCache { r, z, n, h_new }
}

/// Reverse-mode step for `gru_cell`. Accumulates weight gradients into
/// `grads` and returns (d_input, d_prev_state).
pub fn gru_backward(
    w: &GruWeights,
    grads: &mut GruWeights,
    x: &Array1<f64>,
    h_prev: &Array1<f64>,
    cache: &GruCache,
    d_h_new: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let GruCache { r, z, n, .. } = cache;
    let dz = d_h_new * &(h_prev - n);
    let dn = d_h_new * &(1.0 - z);
    let mut dh = d_h_new * z;

    let da_n = &dn * &(1.0 - n * n);
    add_outer(&mut grads.w_n, &da_n, x);
    let rh = r * h_prev;
    add_outer(&mut grads.u_n, &da_n, &rh);
    grads.b_n += &da_n;
    let mut dx = w.w_n.t().dot(&da_n);
    let drh = w.u_n.t().dot(&da_n);
    let dr = &drh * h_prev;
    dh += &(&drh * r);

    let da_z = &dz * &(z * &(1.0 - z));
    add_outer(&mut grads.w_z, &da_z, x);
    add_outer(&mut grads.u_z, &da_z, h_prev);
    grads.b_z += &da_z;
    dx += &w.w_z.t().dot(&da_z);
    dh += &w.u_z.t().dot(&da_z);

    let da_r = &dr * &(r * &(1.0 - r));
    add_outer(&mut grads.w_r, &da_r, x);
    add_outer(&mut grads.u_r, &da_r, h_prev);
    grads.b_r += &da_r;
    dx += &w.w_r.t().dot(&da_r);
    dh += &w.u_r.t().dot(&da_r);

    (dx, dh)
}

/// grad += col * row^T
pub fn add_outer(grad: &mut Array2<f64>, col: &Array1<f64>, row: &Array1<f64>) {
    for (i, &c) in col.iter().enumerate() {
        if c != 0.0 {
            let mut g = grad.row_mut(i);
            g.scaled_add(c, row);
        }
    }
}

/// h_d^0 = tanh(L0 h_e_final).
pub fn init_decoder_state(params: &ModelParams, enc_final: &Array1<f64>) -> Array1<f64> {
    params.init_map.apply(enc_final).mapv(f64::tanh)
}

/// Additive attention: energy = L2(tanh(L1([h_d, h_e_i]))), masked softmax,
/// context = sum_i alpha_i h_e_i. `enc_states` holds one row per position.
pub fn attention(
    params: &ModelParams,
    h_d: &Array1<f64>,
    enc_states: &Array2<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let n = enc_states.nrows();
    if n == 0 {
        return Err(KpError::Shape("attention over an empty source".into()));
    }
    let mut energies = Array1::zeros(n);
    for (i, row) in enc_states.rows().into_iter().enumerate() {
        let v = concat(h_d, &row.to_owned());
        let g = params.attn_hidden.apply(&v).mapv(f64::tanh);
        energies[i] = params.attn_score.apply(&g)[0];
    }
    let alpha = softmax(&energies);
    let context = enc_states.t().dot(&alpha);
    Ok((alpha, context))
}

/// p_a = softmax(L3(tanh(L4([h_d, context])))). Returns the distribution and
/// the tanh readout activation (needed for backprop).
pub fn generative_distribution(
    params: &ModelParams,
    h_d: &Array1<f64>,
    context: &Array1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let readout_act = params.readout.apply(&concat(h_d, context)).mapv(f64::tanh);
    let p_a = softmax(&params.out_proj.apply(&readout_act));
    (p_a, readout_act)
}

/// s = sigmoid(L5(tanh(L6(context) + L7(h_d)))). Returns s and the tanh
/// activation.
pub fn pointer_switch(
    params: &ModelParams,
    context: &Array1<f64>,
    h_d: &Array1<f64>,
) -> (f64, Array1<f64>) {
    let act = (params.switch_ctx.apply(context) + params.switch_state.apply(h_d)).mapv(f64::tanh);
    let s = sigmoid(params.switch_out.apply(&act)[0]);
    (s, act)
}

/// p = s * p_a scattered over base ids + (1-s) * alpha scattered over
/// `source_ext_ids`, accumulating duplicate surfaces.
pub fn mix_distributions(
    s: f64,
    p_a: &Array1<f64>,
    alpha: &Array1<f64>,
    source_ext_ids: &[usize],
    ext_vocab: usize,
) -> Array1<f64> {
    let base = p_a.len();
    debug_assert!(ext_vocab >= base);
    let mut p = Array1::zeros(ext_vocab);
    p.slice_mut(ndarray::s![..base]).assign(&(p_a * s));
    for (i, &eid) in source_ext_ids.iter().enumerate() {
        p[eid] += (1.0 - s) * alpha[i];
    }
    p
}

/// g = exp(h_a^T B h_b), the unnormalized pairing score of Eq. 2. Losses work
/// with the logit h_a^T B h_b directly.
pub fn bilinear_score(h_a: &Array1<f64>, h_b: &Array1<f64>, b: &Array2<f64>) -> f64 {
    bilinear_logit(h_a, h_b, b).exp()
}

pub fn bilinear_logit(h_a: &Array1<f64>, h_b: &Array1<f64>, b: &Array2<f64>) -> f64 {
    h_a.dot(&b.dot(h_b))
}

/// One target-encoder step over the embedding of the previous target token.
pub fn target_encoder_step(
    params: &ModelParams,
    prev_base_id: usize,
    h_sc: &Array1<f64>,
) -> GruCache {
    gru_cell(&params.tenc, &params.embed(prev_base_id), h_sc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ModelDims;

    fn tiny() -> ModelParams {
        ModelParams::init(ModelDims { vocab: 12, embed: 7, hidden: 8, tenc_hidden: 8 }, 3)
    }

    #[test]
    fn gru_zero_weights_zero_inputs_give_zero() {
        let w = ModelParams::zeros(ModelDims { vocab: 6, embed: 4, hidden: 3, tenc_hidden: 3 }).dec;
        let out = gru_cell(&w, &Array1::zeros(7), &Array1::zeros(3));
        assert!(out.h_new.iter().all(|&v| v == 0.0));
        assert!(out.r.iter().all(|&v| v == 0.5));
        assert!(out.z.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn gru_shape_contract() {
        let p = tiny();
        let x = Array1::linspace(-1.0, 1.0, p.dims.dec_input());
        let h = Array1::linspace(0.3, -0.3, p.dims.hidden);
        let out = gru_cell(&p.dec, &x, &h);
        assert_eq!(out.h_new.len(), p.dims.hidden);
    }

    #[test]
    fn gru_matches_scalar_oracle() {
        // independent transcription of the cell equations with plain loops
        let p = tiny();
        let w = &p.tenc;
        let x = Array1::linspace(-0.9, 0.8, p.dims.embed);
        let h = Array1::linspace(0.5, -0.5, p.dims.tenc_hidden);
        let out = gru_cell(w, &x, &h);
        let hid = w.hidden();
        for i in 0..hid {
            let mut ar = w.b_r[i];
            let mut az = w.b_z[i];
            for j in 0..x.len() {
                ar += w.w_r[[i, j]] * x[j];
                az += w.w_z[[i, j]] * x[j];
            }
            for j in 0..hid {
                ar += w.u_r[[i, j]] * h[j];
                az += w.u_z[[i, j]] * h[j];
            }
            let r = 1.0 / (1.0 + (-ar).exp());
            let z = 1.0 / (1.0 + (-az).exp());
            let mut an = w.b_n[i];
            for j in 0..x.len() {
                an += w.w_n[[i, j]] * x[j];
            }
            for j in 0..hid {
                // the reset gate for coordinate j of the previous state
                let mut arj = w.b_r[j];
                for k in 0..x.len() {
                    arj += w.w_r[[j, k]] * x[k];
                }
                for k in 0..hid {
                    arj += w.u_r[[j, k]] * h[k];
                }
                let rj = 1.0 / (1.0 + (-arj).exp());
                an += w.u_n[[i, j]] * (rj * h[j]);
            }
            let n = an.tanh();
            let expect = z * h[i] + (1.0 - z) * n;
            assert!((out.h_new[i] - expect).abs() < 1e-12);
            assert!((out.r[i] - r).abs() < 1e-12);
            assert!((out.z[i] - z).abs() < 1e-12);
            let _ = n;
        }
    }

    #[test]
    fn init_state_in_open_interval() {
        let p = tiny();
        let f = Array1::linspace(-3.0, 3.0, p.dims.enc_state());
        let h0 = init_decoder_state(&p, &f);
        assert!(h0.iter().all(|&v| v > -1.0 && v < 1.0));
        let z = ModelParams::zeros(p.dims);
        assert!(init_decoder_state(&z, &f).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn attention_uniform_when_energies_equal() {
        // zero parameters give equal energies over all positions
        let p = ModelParams::zeros(ModelDims { vocab: 6, embed: 4, hidden: 3, tenc_hidden: 3 });
        let states = Array2::from_shape_fn((4, 6), |(i, j)| (i * 6 + j) as f64 * 0.05);
        let (alpha, ctx) = attention(&p, &Array1::zeros(3), &states).unwrap();
        for &a in alpha.iter() {
            assert!((a - 0.25).abs() < 1e-12);
        }
        let mean = states.t().dot(&alpha);
        assert!(ctx.iter().zip(mean.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn attention_single_position() {
        let p = tiny();
        let states = Array2::from_shape_fn((1, p.dims.enc_state()), |(_, j)| j as f64 * 0.1);
        let h = Array1::linspace(0.0, 1.0, p.dims.hidden);
        let (alpha, ctx) = attention(&p, &h, &states).unwrap();
        assert_eq!(alpha.len(), 1);
        assert!((alpha[0] - 1.0).abs() < 1e-12);
        assert!(ctx.iter().zip(states.row(0).iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn attention_empty_source_errors() {
        let p = tiny();
        let states = Array2::zeros((0, p.dims.enc_state()));
        assert!(attention(&p, &Array1::zeros(p.dims.hidden), &states).is_err());
    }

    #[test]
    fn softmax_fixture() {
        let alpha = softmax(&ndarray::array![1.0, 2.0]);
        assert!((alpha[0] - 0.2689414213699951).abs() < 1e-12);
        assert!((alpha[1] - 0.7310585786300049).abs() < 1e-12);
    }

    #[test]
    fn generative_distribution_normalizes() {
        let p = tiny();
        let (pa, _) = generative_distribution(
            &p,
            &Array1::linspace(-1.0, 1.0, p.dims.hidden),
            &Array1::linspace(1.0, -1.0, p.dims.enc_state()),
        );
        assert!((pa.sum() - 1.0).abs() < 1e-9);
        assert!(pa.iter().all(|&v| v > 0.0));
        // zero logits -> uniform
        let z = ModelParams::zeros(p.dims);
        let (pa, _) = generative_distribution(
            &z,
            &Array1::zeros(p.dims.hidden),
            &Array1::zeros(p.dims.enc_state()),
        );
        assert!(pa.iter().all(|&v| (v - 1.0 / 12.0).abs() < 1e-12));
    }

    #[test]
    fn pointer_switch_zero_weights_is_half() {
        let p = ModelParams::zeros(ModelDims { vocab: 6, embed: 4, hidden: 3, tenc_hidden: 3 });
        let (s, _) = pointer_switch(&p, &Array1::zeros(6), &Array1::zeros(3));
        assert_eq!(s, 0.5);
    }

    #[test]
    fn pointer_switch_monotone_in_logit() {
        let mut p = tiny();
        let ctx = Array1::linspace(0.1, 0.6, p.dims.enc_state());
        let h = Array1::linspace(-0.2, 0.4, p.dims.hidden);
        let (s1, _) = pointer_switch(&p, &ctx, &h);
        p.switch_out.b[0] += 1.0;
        let (s2, _) = pointer_switch(&p, &ctx, &h);
        assert!(s2 > s1);
    }

    #[test]
    fn mix_distributions_cases() {
        // s=1 keeps p_a with zero copy mass
        let pa = ndarray::array![0.6, 0.4];
        let alpha = ndarray::array![1.0];
        let p = mix_distributions(1.0, &pa, &alpha, &[0], 3);
        assert!((p[0] - 0.6).abs() < 1e-12 && (p[1] - 0.4).abs() < 1e-12 && p[2] == 0.0);
        // s=0, all attention on source token with base id 0
        let p = mix_distributions(0.0, &pa, &alpha, &[0], 3);
        assert!((p[0] - 1.0).abs() < 1e-12);
        // s=0.5 mixes: p(a) = 0.5*0.6 + 0.5*1.0 = 0.8
        let p = mix_distributions(0.5, &pa, &alpha, &[0], 3);
        assert!((p[0] - 0.8).abs() < 1e-12);
        assert!((p[1] - 0.2).abs() < 1e-12);
        assert!((p.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mix_accumulates_duplicate_positions() {
        let pa = ndarray::array![0.5, 0.5];
        let alpha = ndarray::array![0.25, 0.75];
        // both positions carry the same copy id 2
        let p = mix_distributions(0.4, &pa, &alpha, &[2, 2], 3);
        assert!((p[2] - 0.6).abs() < 1e-12); // (1-s)*(a1+a2)
    }

    #[test]
    fn bilinear_fixture() {
        let b = ndarray::array![[0.0, 2.0], [0.0, 0.0]];
        let g = bilinear_score(&ndarray::array![1.0, 0.0], &ndarray::array![0.0, 1.0], &b);
        assert!((g - 2f64.exp()).abs() < 1e-9);
        let zero = Array2::zeros((2, 2));
        let g = bilinear_score(&ndarray::array![3.0, -1.0], &ndarray::array![2.0, 5.0], &zero);
        assert_eq!(g, 1.0);
        assert!(g > 0.0);
    }

    #[test]
    fn target_encoder_zero_state_stays_zero_with_zero_weights() {
        let p = ModelParams::zeros(ModelDims { vocab: 6, embed: 4, hidden: 3, tenc_hidden: 3 });
        let out = target_encoder_step(&p, 2, &Array1::zeros(3));
        assert!(out.h_new.iter().all(|&v| v == 0.0));
    }
}

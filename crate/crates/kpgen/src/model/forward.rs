use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{delimiter_positions, EncodedExample, UNK_ID};
use crate::error::{KpError, Result};
use crate::model::ops::{
    attention, concat, generative_distribution, gru_cell, init_decoder_state, mix_distributions,
    pointer_switch, GruCache,
};
use crate::model::params::{ModelDims, ModelParams};

/// Inverted-dropout masks for one example: entries are 0 or 1/(1-rate).
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    pub x_e: Array2<f64>,
    pub h_e: Array2<f64>,
    pub x_d: Array2<f64>,
    pub h_d: Array2<f64>,
}

impl DropoutMasks {
    pub fn sample(
        dims: &ModelDims,
        source_len: usize,
        target_len: usize,
        rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!((0.0..1.0).contains(&rate));
        let keep = 1.0 - rate;
        let mut draw = |rows: usize, cols: usize| {
            Array2::from_shape_fn((rows, cols), |_| {
                if rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
        };
        DropoutMasks {
            x_e: draw(source_len, dims.embed),
            h_e: draw(source_len, dims.enc_state()),
            x_d: draw(target_len, dims.embed),
            h_d: draw(target_len, dims.hidden),
        }
    }
}

/// Dropout masks for a whole batch, or `None` in eval mode.
#[derive(Debug, Clone, Default)]
pub struct BatchNoise {
    pub per_example: Vec<DropoutMasks>,
}

impl BatchNoise {
    pub fn sample(dims: &ModelDims, examples: &[EncodedExample], rate: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BatchNoise {
            per_example: examples
                .iter()
                .map(|ex| {
                    DropoutMasks::sample(dims, ex.source_len(), ex.target_len(), rate, &mut rng)
                })
                .collect(),
        }
    }
}

/// Bidirectional encoder output plus everything backprop needs.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    /// N x E post-dropout input embeddings.
    pub x_drop: Array2<f64>,
    pub fwd: Vec<GruCache>,
    pub bwd: Vec<GruCache>,
    /// N x 2H per-step forward ⊕ backward states, post-dropout. This is the
    /// view every consumer (attention, decoder init, coverage loss) sees.
    pub states: Array2<f64>,
    /// Final state: the last row of `states`.
    pub final_state: Array1<f64>,
}

/// Run the bidirectional GRU over a source id sequence.
pub fn encode_source(
    params: &ModelParams,
    source_ids: &[usize],
    noise: Option<&DropoutMasks>,
) -> Result<EncoderCache> {
    let n = source_ids.len();
    if n == 0 {
        return Err(KpError::Shape("cannot encode an empty source".into()));
    }
    let dims = params.dims;
    let mut x_drop = Array2::zeros((n, dims.embed));
    for (t, &id) in source_ids.iter().enumerate() {
        let mut row = params.embed(id);
        if let Some(m) = noise {
            row *= &m.x_e.row(t);
        }
        x_drop.row_mut(t).assign(&row);
    }

    let mut fwd = Vec::with_capacity(n);
    let mut h = Array1::zeros(dims.hidden);
    for t in 0..n {
        let cache = gru_cell(&params.enc_fwd, &x_drop.row(t).to_owned(), &h);
        h = cache.h_new.clone();
        fwd.push(cache);
    }
    let mut bwd: Vec<Option<GruCache>> = vec![None; n];
    let mut h = Array1::zeros(dims.hidden);
    for t in (0..n).rev() {
        let cache = gru_cell(&params.enc_bwd, &x_drop.row(t).to_owned(), &h);
        h = cache.h_new.clone();
        bwd[t] = Some(cache);
    }
    let bwd: Vec<GruCache> = bwd.into_iter().map(Option::unwrap).collect();

    let mut states = Array2::zeros((n, dims.enc_state()));
    for t in 0..n {
        let mut row = concat(&fwd[t].h_new, &bwd[t].h_new);
        if let Some(m) = noise {
            row *= &m.h_e.row(t);
        }
        states.row_mut(t).assign(&row);
    }
    let final_state = states.row(n - 1).to_owned();
    Ok(EncoderCache { x_drop, fwd, bwd, states, final_state })
}

/// Cached values of one teacher-forced decoder step.
#[derive(Debug, Clone)]
pub struct DecStepCache {
    pub x_drop: Array1<f64>,
    /// Semantic-coverage state consumed by this step (already detached).
    pub hsc_in: Array1<f64>,
    pub gru: GruCache,
    /// Post-dropout decoder state used by attention/readout/switch.
    pub h_drop: Array1<f64>,
    pub alpha: Array1<f64>,
    pub context: Array1<f64>,
    pub readout_act: Array1<f64>,
    pub switch_act: Array1<f64>,
    pub s: f64,
    /// p(gold) under the mixed distribution.
    pub p_gold: f64,
    /// p_a at the gold id when it lies in the base vocabulary, else 0.
    pub pa_gold: f64,
    /// Total attention mass on source positions whose extended id is gold.
    pub alpha_gold: f64,
}

/// Values that cross a detach boundary, frozen for finite-difference checks:
/// the decoder consumes these instead of recomputing them, exactly as the
/// analytic gradient treats them (as constants).
#[derive(Debug, Clone)]
pub struct FrozenDetach {
    /// M x T: semantic-coverage states consumed by decoder steps 0..M.
    pub hsc_for_decoder: Array2<f64>,
    /// Encoder final state as offered to the coverage-loss candidate pool.
    pub enc_final_for_sc: Array1<f64>,
}

/// Full forward record of one example.
#[derive(Debug)]
pub struct ExampleForward {
    pub enc: EncoderCache,
    pub h_d0: Array1<f64>,
    pub steps: Vec<DecStepCache>,
    /// Target-encoder step caches; step j consumed target token j.
    pub tenc_steps: Vec<GruCache>,
    /// (M+1) x T: row j is the coverage state after j target tokens.
    pub tenc_states: Array2<f64>,
    /// Per-position -log p(gold), clamped at 1e-12.
    pub token_nll: Vec<f64>,
    pub delim_positions: Vec<usize>,
}

impl ExampleForward {
    pub fn nll_sum(&self) -> f64 {
        self.token_nll.iter().sum()
    }

    /// Coverage state offered to the contrastive loss (live tenc final).
    pub fn tenc_final(&self) -> Array1<f64> {
        self.tenc_states.row(self.tenc_states.nrows() - 1).to_owned()
    }

    /// Snapshot of the values crossing detach boundaries.
    pub fn freeze_detached(&self) -> FrozenDetach {
        let m = self.steps.len();
        let t = self.tenc_states.ncols();
        let mut hsc = Array2::zeros((m, t));
        for (i, step) in self.steps.iter().enumerate() {
            hsc.row_mut(i).assign(&step.hsc_in);
        }
        FrozenDetach { hsc_for_decoder: hsc, enc_final_for_sc: self.enc.final_state.clone() }
    }
}

pub const PROB_CLAMP: f64 = 1e-12;

fn base_id(ext_id: usize, vocab: usize) -> usize {
    if ext_id < vocab {
        ext_id
    } else {
        UNK_ID
    }
}

/// Teacher-forced forward pass over one encoded example.
pub fn forward_example(
    params: &ModelParams,
    ex: &EncodedExample,
    noise: Option<&DropoutMasks>,
    frozen: Option<&FrozenDetach>,
) -> Result<ExampleForward> {
    let dims = params.dims;
    let vocab = dims.vocab;
    let m = ex.target_len();
    let enc = encode_source(params, &ex.source_ids, noise)?;
    let h_d0 = init_decoder_state(params, &enc.final_state);

    // target encoder runs over the gold target tokens (live values)
    let mut tenc_states = Array2::zeros((m + 1, dims.tenc_hidden));
    let mut tenc_steps = Vec::with_capacity(m);
    let mut h_sc = Array1::zeros(dims.tenc_hidden);
    for j in 0..m {
        let tok = base_id(ex.target_ext_ids[j], vocab);
        let cache = gru_cell(&params.tenc, &params.embed(tok), &h_sc);
        h_sc = cache.h_new.clone();
        tenc_states.row_mut(j + 1).assign(&h_sc);
        tenc_steps.push(cache);
    }

    let ext_vocab = ex.ext_vocab(vocab);
    let mut steps = Vec::with_capacity(m);
    let mut token_nll = Vec::with_capacity(m);
    let mut h_d = h_d0.clone();
    for t in 0..m {
        let mut x = params.embed(ex.target_in_ids[t]);
        if let Some(mask) = noise {
            x *= &mask.x_d.row(t);
        }
        let hsc_in = match frozen {
            Some(f) => f.hsc_for_decoder.row(t).to_owned(),
            None => tenc_states.row(t).to_owned(),
        };
        let gru = gru_cell(&params.dec, &concat(&x, &hsc_in), &h_d);
        h_d = gru.h_new.clone();
        let mut h_drop = h_d.clone();
        if let Some(mask) = noise {
            h_drop *= &mask.h_d.row(t);
        }
        let (alpha, context) = attention(params, &h_drop, &enc.states)?;
        let (p_a, readout_act) = generative_distribution(params, &h_drop, &context);
        let (s, switch_act) = pointer_switch(params, &context, &h_drop);

        let gold = ex.target_ext_ids[t];
        if gold >= ext_vocab {
            return Err(KpError::Shape(format!(
                "target id {gold} outside extended vocabulary {ext_vocab}"
            )));
        }
        let pa_gold = if gold < vocab { p_a[gold] } else { 0.0 };
        let alpha_gold: f64 = ex
            .source_ext_ids
            .iter()
            .zip(alpha.iter())
            .filter(|(&eid, _)| eid == gold)
            .map(|(_, &a)| a)
            .sum();
        let p_gold = s * pa_gold + (1.0 - s) * alpha_gold;
        token_nll.push(-(p_gold.max(PROB_CLAMP)).ln());
        steps.push(DecStepCache {
            x_drop: x,
            hsc_in,
            gru,
            h_drop,
            alpha,
            context,
            readout_act,
            switch_act,
            s,
            p_gold,
            pa_gold,
            alpha_gold,
        });
    }

    Ok(ExampleForward {
        enc,
        h_d0,
        steps,
        tenc_steps,
        tenc_states,
        token_nll,
        delim_positions: delimiter_positions(&ex.target_ext_ids),
    })
}

/// Distribution produced by one decoding step.
#[derive(Debug, Clone)]
pub struct StepDistribution {
    /// Probabilities over the extended vocabulary.
    pub p: Array1<f64>,
    /// Attention over source positions.
    pub alpha: Array1<f64>,
    /// Pointer switch in [0, 1].
    pub s: f64,
}

/// Decoder state carried between decoding steps.
#[derive(Debug, Clone)]
pub struct DecoderState {
    pub h_d: Array1<f64>,
    pub h_sc: Array1<f64>,
    pub step: usize,
}

impl DecoderState {
    pub fn fresh(params: &ModelParams, enc: &EncoderCache) -> Self {
        DecoderState {
            h_d: init_decoder_state(params, &enc.final_state),
            h_sc: Array1::zeros(params.dims.tenc_hidden),
            step: 0,
        }
    }
}

/// Advance one decoding step: the target encoder consumes the previous
/// generated token (none before the first step), then the decoder GRU runs on
/// [embedding(prev), h_sc] and emits the mixed distribution.
pub fn decode_step(
    params: &ModelParams,
    enc: &EncoderCache,
    ex: &EncodedExample,
    state: &mut DecoderState,
    prev_ext_id: usize,
) -> Result<StepDistribution> {
    let vocab = params.dims.vocab;
    let prev_base = base_id(prev_ext_id, vocab);
    if state.step > 0 {
        state.h_sc = gru_cell(&params.tenc, &params.embed(prev_base), &state.h_sc).h_new;
    }
    let x = params.embed(prev_base);
    let gru = gru_cell(&params.dec, &concat(&x, &state.h_sc), &state.h_d);
    state.h_d = gru.h_new;
    state.step += 1;
    let (alpha, context) = attention(params, &state.h_d, &enc.states)?;
    let (p_a, _) = generative_distribution(params, &state.h_d, &context);
    let (s, _) = pointer_switch(params, &context, &state.h_d);
    let p = mix_distributions(s, &p_a, &alpha, &ex.source_ext_ids, ex.ext_vocab(vocab));
    Ok(StepDistribution { p, alpha, s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{encode_example, Vocabulary, BOS_ID};
    use crate::text::{normalize_and_tokenize, Document, Phrase};

    fn fixture() -> (ModelParams, Vocabulary, EncodedExample) {
        let doc = Document {
            id: "d".into(),
            source: normalize_and_tokenize("alpha beta gamma rover"),
            title_len: 0,
            gold: vec![
                Phrase::from_text("alpha beta").unwrap(),
                Phrase::from_text("rover").unwrap(),
            ],
        };
        let vocab = Vocabulary::build(std::slice::from_ref(&doc), 9); // gamma is the least frequent and stays OOV
        let ex = encode_example(&doc, &vocab);
        let dims = ModelDims { vocab: vocab.len(), embed: 7, hidden: 8, tenc_hidden: 8 };
        (ModelParams::init(dims, 11), vocab, ex)
    }

    #[test]
    fn encoder_shapes_and_determinism() {
        let (params, _, ex) = fixture();
        let a = encode_source(&params, &ex.source_ids, None).unwrap();
        let b = encode_source(&params, &ex.source_ids, None).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.states.nrows(), ex.source_len());
        assert_eq!(a.final_state, a.states.row(a.states.nrows() - 1).to_owned());
        assert!(encode_source(&params, &[], None).is_err());
    }

    #[test]
    fn encoder_single_position_final_equals_row() {
        let (params, _, _) = fixture();
        let enc = encode_source(&params, &[BOS_ID], None).unwrap();
        assert_eq!(enc.states.nrows(), 1);
        assert_eq!(enc.final_state, enc.states.row(0).to_owned());
    }

    #[test]
    fn reversing_source_swaps_directions_under_symmetric_weights() {
        let (mut params, _, ex) = fixture();
        params.enc_bwd = params.enc_fwd.clone();
        let fwd = encode_source(&params, &ex.source_ids, None).unwrap();
        let mut rev_ids = ex.source_ids.clone();
        rev_ids.reverse();
        let rev = encode_source(&params, &rev_ids, None).unwrap();
        let n = ex.source_len();
        let h = params.dims.hidden;
        for t in 0..n {
            for k in 0..h {
                let a = fwd.states[[t, k]];
                let b = rev.states[[n - 1 - t, h + k]];
                assert!((a - b).abs() < 1e-12, "fwd state should mirror bwd state");
            }
        }
    }

    #[test]
    fn forward_probabilities_are_normalized_per_step() {
        let (params, _, ex) = fixture();
        let fwd = forward_example(&params, &ex, None, None).unwrap();
        // re-derive complete distributions step by step and compare p_gold
        let enc = encode_source(&params, &ex.source_ids, None).unwrap();
        let mut state = DecoderState::fresh(&params, &enc);
        for (t, step) in fwd.steps.iter().enumerate() {
            let prev = ex.target_in_ids[t];
            let dist = decode_step(&params, &enc, &ex, &mut state, prev).unwrap();
            assert!((dist.p.sum() - 1.0).abs() < 1e-6);
            assert!(dist.p.iter().all(|&v| v >= 0.0));
            assert!((dist.alpha.sum() - 1.0).abs() < 1e-6);
            let gold = ex.target_ext_ids[t];
            assert!((dist.p[gold] - step.p_gold).abs() < 1e-9);
        }
    }

    #[test]
    fn teacher_forcing_matches_decode_steps_on_gold_prefix() {
        // the composed training forward equals chaining the decode-time steps
        let (params, _, ex) = fixture();
        let fwd = forward_example(&params, &ex, None, None).unwrap();
        let enc = encode_source(&params, &ex.source_ids, None).unwrap();
        let mut state = DecoderState::fresh(&params, &enc);
        for t in 0..ex.target_len() {
            let prev = if t == 0 { BOS_ID } else { ex.target_ext_ids[t - 1] };
            decode_step(&params, &enc, &ex, &mut state, prev).unwrap();
            let diff = (&state.h_d - &fwd.steps[t].gru.h_new)
                .iter()
                .map(|v| v.abs())
                .fold(0.0, f64::max);
            assert!(diff < 1e-12, "step {t} state drift {diff}");
        }
    }

    #[test]
    fn detach_freeze_reproduces_loss_at_the_same_point() {
        let (params, _, ex) = fixture();
        let live = forward_example(&params, &ex, None, None).unwrap();
        let frozen = live.freeze_detached();
        let replay = forward_example(&params, &ex, None, Some(&frozen)).unwrap();
        assert!((live.nll_sum() - replay.nll_sum()).abs() < 1e-12);
    }

    #[test]
    fn eval_mode_is_bitwise_reproducible() {
        let (params, _, ex) = fixture();
        let a = forward_example(&params, &ex, None, None).unwrap();
        let b = forward_example(&params, &ex, None, None).unwrap();
        assert_eq!(a.token_nll, b.token_nll);
    }

    #[test]
    fn dropout_masks_scale_with_keep_probability() {
        let dims = ModelDims { vocab: 9, embed: 4, hidden: 5, tenc_hidden: 5 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let masks = DropoutMasks::sample(&dims, 50, 60, 0.1, &mut rng);
        let expect = 1.0 / 0.9;
        for &v in masks.x_e.iter().chain(masks.h_d.iter()) {
            assert!(v == 0.0 || (v - expect).abs() < 1e-12);
        }
        // with dropout, training forward still yields normalized alpha
        let (params, _, ex) = fixture();
        let noise = BatchNoise::sample(&params.dims, std::slice::from_ref(&ex), 0.1, 7);
        let fwd = forward_example(&params, &ex, Some(&noise.per_example[0]), None).unwrap();
        for step in &fwd.steps {
            assert!((step.alpha.sum() - 1.0).abs() < 1e-9);
        }
    }
}

//! Forward computations of the network: embeddings, GRU cells, bidirectional
//! encoder, attentive decoder step with semantic-coverage input, pointer
//! softmax, target encoder and the bilinear pairing score.

pub mod forward;
pub mod ops;
pub mod params;

pub use forward::{
    decode_step, encode_source, forward_example, BatchNoise, DecStepCache, DecoderState,
    DropoutMasks, EncoderCache, ExampleForward, FrozenDetach, StepDistribution, PROB_CLAMP,
};
pub use ops::{
    attention, bilinear_logit, bilinear_score, concat, generative_distribution, gru_backward,
    gru_cell, init_decoder_state, log_sum_exp, mix_distributions, pointer_switch, sigmoid,
    softmax, target_encoder_step, GruCache,
};
pub use params::{Affine, GradientSet, GruWeights, ModelDims, ModelParams, TensorMut, TensorRef};

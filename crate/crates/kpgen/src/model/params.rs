use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Tensor shapes of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed: usize,
    /// Hidden units of the encoder (per direction) and decoder GRUs, and of
    /// the attention/readout/switch MLPs.
    pub hidden: usize,
    pub tenc_hidden: usize,
}

impl ModelDims {
    /// Bidirectional encoder state width (forward ⊕ backward).
    pub fn enc_state(&self) -> usize {
        2 * self.hidden
    }

    /// Decoder GRU input width: token embedding ⊕ semantic-coverage state.
    pub fn dec_input(&self) -> usize {
        self.embed + self.tenc_hidden
    }

    pub fn attn_input(&self) -> usize {
        self.hidden + self.enc_state()
    }

    pub fn readout_input(&self) -> usize {
        self.hidden + self.enc_state()
    }
}

/// y = Wx + b.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Affine {
    fn init(rng: &mut ChaCha8Rng, out: usize, input: usize) -> Self {
        Affine { w: uniform2(rng, out, input), b: Array1::zeros(out) }
    }

    fn zeros(out: usize, input: usize) -> Self {
        Affine { w: Array2::zeros((out, input)), b: Array1::zeros(out) }
    }

    pub fn apply(&self, x: &Array1<f64>) -> Array1<f64> {
        self.w.dot(x) + &self.b
    }
}

/// One GRU cell's weights: W* act on the input, U* on the previous state.
#[derive(Debug, Clone, PartialEq)]
pub struct GruWeights {
    pub w_r: Array2<f64>,
    pub w_z: Array2<f64>,
    pub w_n: Array2<f64>,
    pub u_r: Array2<f64>,
    pub u_z: Array2<f64>,
    pub u_n: Array2<f64>,
    pub b_r: Array1<f64>,
    pub b_z: Array1<f64>,
    pub b_n: Array1<f64>,
}

impl GruWeights {
    fn init(rng: &mut ChaCha8Rng, hidden: usize, input: usize) -> Self {
        GruWeights {
            w_r: uniform2(rng, hidden, input),
            w_z: uniform2(rng, hidden, input),
            w_n: uniform2(rng, hidden, input),
            u_r: uniform2(rng, hidden, hidden),
            u_z: uniform2(rng, hidden, hidden),
            u_n: uniform2(rng, hidden, hidden),
            b_r: Array1::zeros(hidden),
            b_z: Array1::zeros(hidden),
            b_n: Array1::zeros(hidden),
        }
    }

    fn zeros(hidden: usize, input: usize) -> Self {
        GruWeights {
            w_r: Array2::zeros((hidden, input)),
            w_z: Array2::zeros((hidden, input)),
            w_n: Array2::zeros((hidden, input)),
            u_r: Array2::zeros((hidden, hidden)),
            u_z: Array2::zeros((hidden, hidden)),
            u_n: Array2::zeros((hidden, hidden)),
            b_r: Array1::zeros(hidden),
            b_z: Array1::zeros(hidden),
            b_n: Array1::zeros(hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_r.len()
    }

    pub fn input(&self) -> usize {
        self.w_r.ncols()
    }
}

fn uniform2(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = 1.0 / (cols.max(1) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

/// Every learned tensor of the encoder / decoder / target-encoder / attention
/// / pointer stack. Also used, shape for shape, as the gradient container and
/// as Adam moment storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    /// Shared embedding table (row 0 = `<pad>`, frozen at zero).
    pub embedding: Array2<f64>,
    pub enc_fwd: GruWeights,
    pub enc_bwd: GruWeights,
    pub dec: GruWeights,
    pub tenc: GruWeights,
    /// L0: encoder final state -> initial decoder state (tanh outside).
    pub init_map: Affine,
    /// L1: [h_d, h_e_i] -> attention hidden (tanh outside).
    pub attn_hidden: Affine,
    /// L2: attention hidden -> scalar energy.
    pub attn_score: Affine,
    /// L4: [h_d, context] -> readout hidden (tanh outside).
    pub readout: Affine,
    /// L3: readout hidden -> vocabulary logits.
    pub out_proj: Affine,
    /// L6: context -> switch hidden.
    pub switch_ctx: Affine,
    /// L7: decoder state -> switch hidden.
    pub switch_state: Affine,
    /// L5: switch hidden -> scalar (sigmoid outside).
    pub switch_out: Affine,
    /// B: bilinear map pairing encoder finals with target-encoder finals.
    pub bilinear: Array2<f64>,
}

/// Gradients are shape-matched to the parameters, one tensor per tensor.
pub type GradientSet = ModelParams;

pub enum TensorRef<'a> {
    V(&'a Array1<f64>),
    M(&'a Array2<f64>),
}

pub enum TensorMut<'a> {
    V(&'a mut Array1<f64>),
    M(&'a mut Array2<f64>),
}

impl<'a> TensorRef<'a> {
    pub fn as_slice(&self) -> &[f64] {
        match self {
            TensorRef::V(a) => a.as_slice().expect("standard layout"),
            TensorRef::M(a) => a.as_slice().expect("standard layout"),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            TensorRef::V(a) => a.shape().to_vec(),
            TensorRef::M(a) => a.shape().to_vec(),
        }
    }
}

impl<'a> TensorMut<'a> {
    pub fn as_slice_mut(&mut self) -> &mut [f64] {
        match self {
            TensorMut::V(a) => a.as_slice_mut().expect("standard layout"),
            TensorMut::M(a) => a.as_slice_mut().expect("standard layout"),
        }
    }
}

macro_rules! gru_entries {
    ($vec:ident, $wrap:ident, $prefix:literal, $g:expr) => {
        $vec.push((concat!($prefix, ".w_r"), $wrap::M(&$g.w_r)));
        $vec.push((concat!($prefix, ".w_z"), $wrap::M(&$g.w_z)));
        $vec.push((concat!($prefix, ".w_n"), $wrap::M(&$g.w_n)));
        $vec.push((concat!($prefix, ".u_r"), $wrap::M(&$g.u_r)));
        $vec.push((concat!($prefix, ".u_z"), $wrap::M(&$g.u_z)));
        $vec.push((concat!($prefix, ".u_n"), $wrap::M(&$g.u_n)));
        $vec.push((concat!($prefix, ".b_r"), $wrap::V(&$g.b_r)));
        $vec.push((concat!($prefix, ".b_z"), $wrap::V(&$g.b_z)));
        $vec.push((concat!($prefix, ".b_n"), $wrap::V(&$g.b_n)));
    };
}

macro_rules! gru_entries_mut {
    ($vec:ident, $prefix:literal, $g:expr) => {
        $vec.push((concat!($prefix, ".w_r"), TensorMut::M(&mut $g.w_r)));
        $vec.push((concat!($prefix, ".w_z"), TensorMut::M(&mut $g.w_z)));
        $vec.push((concat!($prefix, ".w_n"), TensorMut::M(&mut $g.w_n)));
        $vec.push((concat!($prefix, ".u_r"), TensorMut::M(&mut $g.u_r)));
        $vec.push((concat!($prefix, ".u_z"), TensorMut::M(&mut $g.u_z)));
        $vec.push((concat!($prefix, ".u_n"), TensorMut::M(&mut $g.u_n)));
        $vec.push((concat!($prefix, ".b_r"), TensorMut::V(&mut $g.b_r)));
        $vec.push((concat!($prefix, ".b_z"), TensorMut::V(&mut $g.b_z)));
        $vec.push((concat!($prefix, ".b_n"), TensorMut::V(&mut $g.b_n)));
    };
}

macro_rules! affine_entries {
    ($vec:ident, $wrap:ident, $prefix:literal, $a:expr) => {
        $vec.push((concat!($prefix, ".w"), $wrap::M(&$a.w)));
        $vec.push((concat!($prefix, ".b"), $wrap::V(&$a.b)));
    };
}

macro_rules! affine_entries_mut {
    ($vec:ident, $prefix:literal, $a:expr) => {
        $vec.push((concat!($prefix, ".w"), TensorMut::M(&mut $a.w)));
        $vec.push((concat!($prefix, ".b"), TensorMut::V(&mut $a.b)));
    };
}

impl ModelParams {
    /// Random initialization: uniform with 1/sqrt(fan_in) bounds, zero biases,
    /// zero `<pad>` embedding row.
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut embedding = uniform2(&mut rng, dims.vocab, dims.embed);
        embedding.row_mut(0).fill(0.0);
        ModelParams {
            dims,
            embedding,
            enc_fwd: GruWeights::init(&mut rng, dims.hidden, dims.embed),
            enc_bwd: GruWeights::init(&mut rng, dims.hidden, dims.embed),
            dec: GruWeights::init(&mut rng, dims.hidden, dims.dec_input()),
            tenc: GruWeights::init(&mut rng, dims.tenc_hidden, dims.embed),
            init_map: Affine::init(&mut rng, dims.hidden, dims.enc_state()),
            attn_hidden: Affine::init(&mut rng, dims.hidden, dims.attn_input()),
            attn_score: Affine::init(&mut rng, 1, dims.hidden),
            readout: Affine::init(&mut rng, dims.hidden, dims.readout_input()),
            out_proj: Affine::init(&mut rng, dims.vocab, dims.hidden),
            switch_ctx: Affine::init(&mut rng, dims.hidden, dims.enc_state()),
            switch_state: Affine::init(&mut rng, dims.hidden, dims.hidden),
            switch_out: Affine::init(&mut rng, 1, dims.hidden),
            bilinear: uniform2(&mut rng, dims.enc_state(), dims.tenc_hidden),
        }
    }

    /// All-zero tensors of the same shapes; the gradient container.
    pub fn zeros(dims: ModelDims) -> Self {
        ModelParams {
            dims,
            embedding: Array2::zeros((dims.vocab, dims.embed)),
            enc_fwd: GruWeights::zeros(dims.hidden, dims.embed),
            enc_bwd: GruWeights::zeros(dims.hidden, dims.embed),
            dec: GruWeights::zeros(dims.hidden, dims.dec_input()),
            tenc: GruWeights::zeros(dims.tenc_hidden, dims.embed),
            init_map: Affine::zeros(dims.hidden, dims.enc_state()),
            attn_hidden: Affine::zeros(dims.hidden, dims.attn_input()),
            attn_score: Affine::zeros(1, dims.hidden),
            readout: Affine::zeros(dims.hidden, dims.readout_input()),
            out_proj: Affine::zeros(dims.vocab, dims.hidden),
            switch_ctx: Affine::zeros(dims.hidden, dims.enc_state()),
            switch_state: Affine::zeros(dims.hidden, dims.hidden),
            switch_out: Affine::zeros(1, dims.hidden),
            bilinear: Array2::zeros((dims.enc_state(), dims.tenc_hidden)),
        }
    }

    pub fn tensors(&self) -> Vec<(&'static str, TensorRef<'_>)> {
        let mut v: Vec<(&'static str, TensorRef<'_>)> = Vec::with_capacity(48);
        v.push(("embedding", TensorRef::M(&self.embedding)));
        gru_entries!(v, TensorRef, "enc_fwd", self.enc_fwd);
        gru_entries!(v, TensorRef, "enc_bwd", self.enc_bwd);
        gru_entries!(v, TensorRef, "dec", self.dec);
        gru_entries!(v, TensorRef, "tenc", self.tenc);
        affine_entries!(v, TensorRef, "init_map", self.init_map);
        affine_entries!(v, TensorRef, "attn_hidden", self.attn_hidden);
        affine_entries!(v, TensorRef, "attn_score", self.attn_score);
        affine_entries!(v, TensorRef, "readout", self.readout);
        affine_entries!(v, TensorRef, "out_proj", self.out_proj);
        affine_entries!(v, TensorRef, "switch_ctx", self.switch_ctx);
        affine_entries!(v, TensorRef, "switch_state", self.switch_state);
        affine_entries!(v, TensorRef, "switch_out", self.switch_out);
        v.push(("bilinear", TensorRef::M(&self.bilinear)));
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, TensorMut<'_>)> {
        let mut v: Vec<(&'static str, TensorMut<'_>)> = Vec::with_capacity(48);
        v.push(("embedding", TensorMut::M(&mut self.embedding)));
        gru_entries_mut!(v, "enc_fwd", self.enc_fwd);
        gru_entries_mut!(v, "enc_bwd", self.enc_bwd);
        gru_entries_mut!(v, "dec", self.dec);
        gru_entries_mut!(v, "tenc", self.tenc);
        affine_entries_mut!(v, "init_map", self.init_map);
        affine_entries_mut!(v, "attn_hidden", self.attn_hidden);
        affine_entries_mut!(v, "attn_score", self.attn_score);
        affine_entries_mut!(v, "readout", self.readout);
        affine_entries_mut!(v, "out_proj", self.out_proj);
        affine_entries_mut!(v, "switch_ctx", self.switch_ctx);
        affine_entries_mut!(v, "switch_state", self.switch_state);
        affine_entries_mut!(v, "switch_out", self.switch_out);
        v.push(("bilinear", TensorMut::M(&mut self.bilinear)));
        v
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.as_slice().len()).sum()
    }

    /// First non-finite tensor, if any.
    pub fn non_finite_tensor(&self) -> Option<&'static str> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| t.as_slice().iter().any(|v| !v.is_finite()))
            .map(|(name, _)| name)
    }

    /// Embedding row for a base-vocabulary id.
    pub fn embed(&self, id: usize) -> Array1<f64> {
        self.embedding.row(id).to_owned()
    }
}

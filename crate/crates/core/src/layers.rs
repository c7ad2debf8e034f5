//! Layer building blocks shared by the encoder and the matcher.
//!
//! Every layer reads its weights from a [`ParamStore`] and records its forward
//! computation on a [`Graph`], so backward rules come from the graph ops.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// The layer kinds the architecture is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Linear,
    LayerNorm,
    DepthwiseConv1d,
    FeedForward,
    MultiHeadAttention,
    Swish,
    Glu,
    ResidualAdd,
    Embedding,
}

impl LayerKind {
    pub const ALL: [LayerKind; 9] = [
        LayerKind::Linear,
        LayerKind::LayerNorm,
        LayerKind::DepthwiseConv1d,
        LayerKind::FeedForward,
        LayerKind::MultiHeadAttention,
        LayerKind::Swish,
        LayerKind::Glu,
        LayerKind::ResidualAdd,
        LayerKind::Embedding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Linear => "linear",
            LayerKind::LayerNorm => "layer-norm",
            LayerKind::DepthwiseConv1d => "depthwise-conv1d",
            LayerKind::FeedForward => "feed-forward",
            LayerKind::MultiHeadAttention => "multi-head-attention",
            LayerKind::Swish => "swish",
            LayerKind::Glu => "glu",
            LayerKind::ResidualAdd => "residual-add",
            LayerKind::Embedding => "embedding",
        }
    }

    /// Registers fresh parameters for this kind under `prefix`.
    pub fn build<R: Rng>(
        self,
        store: &mut ParamStore,
        prefix: &str,
        dims: &LayerDims,
        rng: &mut R,
    ) -> Layer {
        let d = dims.dim;
        match self {
            LayerKind::Linear => Layer::Linear(Linear::new(store, prefix, d, d, rng)),
            LayerKind::LayerNorm => Layer::LayerNorm(LayerNorm::new(store, prefix, d)),
            LayerKind::DepthwiseConv1d => {
                Layer::DepthwiseConv1d(DepthwiseConv1d::new(store, prefix, d, dims.kernel, rng))
            }
            LayerKind::FeedForward => {
                Layer::FeedForward(FeedForward::new(store, prefix, d, d * dims.expansion, rng))
            }
            LayerKind::MultiHeadAttention => Layer::MultiHeadAttention(MultiHeadAttention::new(
                store, prefix, d, dims.heads, rng,
            )),
            LayerKind::Swish => Layer::Swish,
            LayerKind::Glu => Layer::Glu,
            LayerKind::ResidualAdd => Layer::ResidualAdd,
            LayerKind::Embedding => {
                Layer::Embedding(Embedding::new(store, prefix, dims.vocab, d, dims.pad_row, rng))
            }
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LayerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownLayerKind(s.to_string()))
    }
}

/// Sizes used by [`LayerKind::build`].
#[derive(Clone, Debug)]
pub struct LayerDims {
    pub dim: usize,
    pub expansion: usize,
    pub kernel: usize,
    pub heads: usize,
    pub vocab: usize,
    pub pad_row: Option<usize>,
}

impl Default for LayerDims {
    fn default() -> Self {
        Self {
            dim: 64,
            expansion: 2,
            kernel: 7,
            heads: 4,
            vocab: 40,
            pad_row: None,
        }
    }
}

pub enum LayerInput<'a> {
    Dense(Var),
    Ids(&'a [usize]),
}

/// A built layer of any kind.
pub enum Layer {
    Linear(Linear),
    LayerNorm(LayerNorm),
    DepthwiseConv1d(DepthwiseConv1d),
    FeedForward(FeedForward),
    MultiHeadAttention(MultiHeadAttention),
    Swish,
    Glu,
    ResidualAdd,
    Embedding(Embedding),
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Linear(_) => LayerKind::Linear,
            Layer::LayerNorm(_) => LayerKind::LayerNorm,
            Layer::DepthwiseConv1d(_) => LayerKind::DepthwiseConv1d,
            Layer::FeedForward(_) => LayerKind::FeedForward,
            Layer::MultiHeadAttention(_) => LayerKind::MultiHeadAttention,
            Layer::Swish => LayerKind::Swish,
            Layer::Glu => LayerKind::Glu,
            Layer::ResidualAdd => LayerKind::ResidualAdd,
            Layer::Embedding(_) => LayerKind::Embedding,
        }
    }

    /// Forward pass. Attention runs as self-attention over the input and
    /// residual-add adds the input to itself; both are exercised with
    /// distinct operands by the encoder and matcher.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, input: LayerInput<'_>) -> Result<Var> {
        match (self, input) {
            (Layer::Embedding(e), LayerInput::Ids(ids)) => e.forward(g, store, ids),
            (Layer::Embedding(_), LayerInput::Dense(_)) => {
                Err(Error::Shape("embedding takes phoneme ids".into()))
            }
            (_, LayerInput::Ids(_)) => Err(Error::Shape(format!(
                "{} takes a dense input",
                self.kind()
            ))),
            (Layer::Linear(l), LayerInput::Dense(x)) => l.forward(g, store, x),
            (Layer::LayerNorm(l), LayerInput::Dense(x)) => l.forward(g, store, x),
            (Layer::DepthwiseConv1d(l), LayerInput::Dense(x)) => l.forward(g, store, x),
            (Layer::FeedForward(l), LayerInput::Dense(x)) => l.forward(g, store, x),
            (Layer::MultiHeadAttention(l), LayerInput::Dense(x)) => l.forward(g, store, x, x),
            (Layer::Swish, LayerInput::Dense(x)) => Ok(g.swish(x)),
            (Layer::Glu, LayerInput::Dense(x)) => g.glu(x),
            (Layer::ResidualAdd, LayerInput::Dense(x)) => g.add(x, x),
        }
    }
}

/// Affine map `x·W + b` with `W` stored as in×out.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_glorot(format!("{prefix}.weight"), fan_in, fan_out, rng);
        let bias = store.add_const(format!("{prefix}.bias"), 1, fan_out, 0.0);
        Self { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let h = g.matmul(x, w)?;
        g.add_row(h, b)
    }

    pub fn param_ids(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, prefix: &str, dim: usize) -> Self {
        Self {
            gamma: store.add_const(format!("{prefix}.gamma"), 1, dim, 1.0),
            beta: store.add_const(format!("{prefix}.beta"), 1, dim, 0.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        g.layer_norm(x, gamma, beta, LAYER_NORM_EPS)
    }
}

#[derive(Clone, Debug)]
pub struct DepthwiseConv1d {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl DepthwiseConv1d {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        channels: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        // each channel sees `kernel` inputs and feeds `kernel` outputs
        let limit = (3.0 / kernel as f64).sqrt();
        let data = (0..kernel * channels)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        let weight = store.add(format!("{prefix}.weight"), Tensor::matrix(kernel, channels, data));
        let bias = store.add_const(format!("{prefix}.bias"), 1, channels, 0.0);
        Self { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.depthwise_conv1d(x, w, b)
    }
}

/// Position-wise `Linear → swish → Linear`.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            up: Linear::new(store, &format!("{prefix}.up"), dim, hidden, rng),
            down: Linear::new(store, &format!("{prefix}.down"), hidden, dim, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.up.forward(g, store, x)?;
        let h = g.swish(h);
        self.down.forward(g, store, h)
    }
}

/// Scaled dot-product attention split over `heads` column groups.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Self {
        assert!(heads > 0 && dim % heads == 0, "dim {dim} not divisible by {heads} heads");
        Self {
            query: Linear::new(store, &format!("{prefix}.query"), dim, dim, rng),
            key: Linear::new(store, &format!("{prefix}.key"), dim, dim, rng),
            value: Linear::new(store, &format!("{prefix}.value"), dim, dim, rng),
            output: Linear::new(store, &format!("{prefix}.output"), dim, dim, rng),
            heads,
        }
    }

    /// Attends from the rows of `q_in` (m×D) over the rows of `kv_in` (n×D).
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, q_in: Var, kv_in: Var) -> Result<Var> {
        let q = self.query.forward(g, store, q_in)?;
        let k = self.key.forward(g, store, kv_in)?;
        let v = self.value.forward(g, store, kv_in)?;
        let ctx = attend(g, q, k, v, self.heads)?;
        self.output.forward(g, store, ctx)
    }
}

/// `softmax(QKᵀ/√d_h)·V` per head, heads concatenated along columns.
pub fn attend(g: &mut Graph, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
    let dim = g.value(q).cols();
    if g.value(k).cols() != dim || g.value(v).cols() != dim {
        return Err(Error::DimensionMismatch {
            op: "attention",
            lhs: g.value(q).shape().to_vec(),
            rhs: g.value(k).shape().to_vec(),
        });
    }
    let dh = dim / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                g.slice_cols(q, h * dh, dh)?,
                g.slice_cols(k, h * dh, dh)?,
                g.slice_cols(v, h * dh, dh)?,
            )
        };
        let scores = g.matmul_nt(qh, kh)?;
        let scores = g.scale(scores, scale);
        let weights = g.softmax_rows(scores)?;
        outs.push(g.matmul(weights, vh)?);
    }
    if heads == 1 {
        Ok(outs[0])
    } else {
        g.concat_cols(&outs)
    }
}

/// Lookup table with an optional frozen all-zero row.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub frozen_row: Option<usize>,
}

impl Embedding {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        rows: usize,
        dim: usize,
        frozen_row: Option<usize>,
        rng: &mut R,
    ) -> Self {
        let mut data: Vec<f64> = (0..rows * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if let Some(r) = frozen_row {
            data[r * dim..(r + 1) * dim].fill(0.0);
        }
        let table = store.add(format!("{prefix}.table"), Tensor::matrix(rows, dim, data));
        Self { table, frozen_row }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, ids: &[usize]) -> Result<Var> {
        let t = g.param(store, self.table);
        g.embedding(t, ids, self.frozen_row)
    }
}

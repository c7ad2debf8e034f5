//! Audio encoder: an input projection followed by conformer blocks.
//!
//! Each block is the macaron layout: half-step feed-forward, multi-head
//! self-attention, convolution module, half-step feed-forward, final
//! layer-norm. The time axis is never subsampled, so `n` frames in give `n`
//! rows out.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::layers::{DepthwiseConv1d, FeedForward, LayerNorm, Linear, MultiHeadAttention};
use crate::params::ParamStore;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub layers: usize,
    pub dim: usize,
    pub conv_kernel: usize,
    pub ff_expansion: usize,
    pub heads: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            dim: 64,
            conv_kernel: 7,
            ff_expansion: 2,
            heads: 4,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "encoder dim {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if self.conv_kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "conv kernel must be odd, got {}",
                self.conv_kernel
            )));
        }
        if self.ff_expansion == 0 {
            return Err(Error::Config("ff_expansion must be positive".into()));
        }
        Ok(())
    }
}

/// Pre-norm feed-forward module used twice per block with half-step residuals.
#[derive(Clone, Debug)]
pub struct FeedForwardModule {
    pub norm: LayerNorm,
    pub ff: FeedForward,
}

impl FeedForwardModule {
    fn new<R: Rng>(store: &mut ParamStore, prefix: &str, cfg: &EncoderConfig, rng: &mut R) -> Self {
        Self {
            norm: LayerNorm::new(store, &format!("{prefix}.norm"), cfg.dim),
            ff: FeedForward::new(store, prefix, cfg.dim, cfg.dim * cfg.ff_expansion, rng),
        }
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.norm.forward(g, store, x)?;
        let h = self.ff.forward(g, store, h)?;
        Ok(g.scale(h, 0.5))
    }
}

/// `LN → pointwise(2D) → GLU → depthwise conv → LN → swish → pointwise(D)`.
#[derive(Clone, Debug)]
pub struct ConvModule {
    pub norm: LayerNorm,
    pub pointwise_in: Linear,
    pub depthwise: DepthwiseConv1d,
    pub conv_norm: LayerNorm,
    pub pointwise_out: Linear,
}

impl ConvModule {
    fn new<R: Rng>(store: &mut ParamStore, prefix: &str, cfg: &EncoderConfig, rng: &mut R) -> Self {
        let d = cfg.dim;
        Self {
            norm: LayerNorm::new(store, &format!("{prefix}.norm"), d),
            pointwise_in: Linear::new(store, &format!("{prefix}.pointwise_in"), d, 2 * d, rng),
            depthwise: DepthwiseConv1d::new(store, &format!("{prefix}.depthwise"), d, cfg.conv_kernel, rng),
            conv_norm: LayerNorm::new(store, &format!("{prefix}.conv_norm"), d),
            pointwise_out: Linear::new(store, &format!("{prefix}.pointwise_out"), d, d, rng),
        }
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.norm.forward(g, store, x)?;
        let h = self.pointwise_in.forward(g, store, h)?;
        let h = g.glu(h)?;
        let h = self.depthwise.forward(g, store, h)?;
        let h = self.conv_norm.forward(g, store, h)?;
        let h = g.swish(h);
        self.pointwise_out.forward(g, store, h)
    }
}

#[derive(Clone, Debug)]
pub struct ConformerBlock {
    pub ff1: FeedForwardModule,
    pub attn_norm: LayerNorm,
    pub attn: MultiHeadAttention,
    pub conv: ConvModule,
    pub ff2: FeedForwardModule,
    pub final_norm: LayerNorm,
}

impl ConformerBlock {
    fn new<R: Rng>(store: &mut ParamStore, prefix: &str, cfg: &EncoderConfig, rng: &mut R) -> Self {
        Self {
            ff1: FeedForwardModule::new(store, &format!("{prefix}.ff1"), cfg, rng),
            attn_norm: LayerNorm::new(store, &format!("{prefix}.attn_norm"), cfg.dim),
            attn: MultiHeadAttention::new(store, &format!("{prefix}.attn"), cfg.dim, cfg.heads, rng),
            conv: ConvModule::new(store, &format!("{prefix}.conv"), cfg, rng),
            ff2: FeedForwardModule::new(store, &format!("{prefix}.ff2"), cfg, rng),
            final_norm: LayerNorm::new(store, &format!("{prefix}.final_norm"), cfg.dim),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.ff1.forward(g, store, x)?;
        let x = g.add(x, h)?;
        let h = self.attn_norm.forward(g, store, x)?;
        let h = self.attn.forward(g, store, h, h)?;
        let x = g.add(x, h)?;
        let h = self.conv.forward(g, store, x)?;
        let x = g.add(x, h)?;
        let h = self.ff2.forward(g, store, x)?;
        let x = g.add(x, h)?;
        self.final_norm.forward(g, store, x)
    }

    /// The linear layers whose outputs feed a residual sum.
    pub fn branch_outputs(&self) -> [&Linear; 4] {
        [
            &self.ff1.ff.down,
            &self.attn.output,
            &self.conv.pointwise_out,
            &self.ff2.ff.down,
        ]
    }
}

#[derive(Clone, Debug)]
pub struct AudioEncoder {
    pub input: Linear,
    pub blocks: Vec<ConformerBlock>,
}

impl AudioEncoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        feature_dim: usize,
        cfg: &EncoderConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let input = Linear::new(store, "encoder.input", feature_dim, cfg.dim, rng);
        let blocks = (0..cfg.layers)
            .map(|i| ConformerBlock::new(store, &format!("encoder.block{i}"), cfg, rng))
            .collect();
        Ok(Self { input, blocks })
    }

    /// n×F frames to n×D embeddings.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, frames: Var) -> Result<Var> {
        if g.value(frames).rows() == 0 {
            return Err(Error::EmptyAudio);
        }
        let mut x = self.input.forward(g, store, frames)?;
        for block in &self.blocks {
            x = block.forward(g, store, x)?;
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_frames(rng: &mut ChaCha8Rng, n: usize, f: usize) -> Tensor {
        Tensor::matrix(n, f, (0..n * f).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn preserves_time_dimension() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = AudioEncoder::new(&mut store, 16, &EncoderConfig::default(), &mut rng).unwrap();
        for n in [1, 2, 37] {
            let mut g = Graph::new();
            let x = g.input(random_frames(&mut rng, n, 16));
            let h = enc.forward(&mut g, &store, x).unwrap();
            assert_eq!(g.value(h).shape(), &[n, 64]);
        }
    }

    #[test]
    fn deterministic() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = EncoderConfig {
            layers: 2,
            dim: 16,
            ..EncoderConfig::default()
        };
        let enc = AudioEncoder::new(&mut store, 8, &cfg, &mut rng).unwrap();
        let x = random_frames(&mut rng, 20, 8);
        let run = || {
            let mut g = Graph::new();
            let xv = g.input(x.clone());
            let h = enc.forward(&mut g, &store, xv).unwrap();
            g.value(h).clone()
        };
        let (a, b) = (run(), run());
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn zeroed_branches_reduce_to_projection() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = EncoderConfig {
            layers: 1,
            dim: 16,
            ..EncoderConfig::default()
        };
        let enc = AudioEncoder::new(&mut store, 8, &cfg, &mut rng).unwrap();
        for lin in enc.blocks[0].branch_outputs() {
            for id in lin.param_ids() {
                store.get_mut(id).data_mut().fill(0.0);
            }
        }
        let x = random_frames(&mut rng, 11, 8);
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let h = enc.forward(&mut g, &store, xv).unwrap();

        // oracle: affine projection then a plain row normalisation (unit gamma, zero beta)
        let w = store.get(enc.input.weight);
        let b = store.get(enc.input.bias);
        let proj = x.matmul(w).unwrap();
        for i in 0..11 {
            let row: Vec<f64> = (0..16).map(|j| proj.at(i, j) + b.data()[j]).collect();
            let mean = row.iter().sum::<f64>() / 16.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            for j in 0..16 {
                let expect = (row[j] - mean) / (var + 1e-5).sqrt();
                assert!((g.value(h).at(i, j) - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn config_validation() {
        let bad = EncoderConfig {
            dim: 10,
            heads: 4,
            ..EncoderConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = EncoderConfig {
            conv_kernel: 6,
            ..EncoderConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}

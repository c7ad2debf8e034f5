//! Text-to-audio cross-attention and the matching heads.
//!
//! The padded anchor embedding (T×D) queries the audio embedding (n×D). The
//! attended output `C` is always T×D, so the utterance head can flatten it
//! directly and prefix head `t` can flatten its first `t + 1` rows.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{PaddedAnchor, SubseqLabels};
use crate::graph::{Graph, Var};
use crate::layers::{Embedding, FeedForward, LayerNorm, Linear, MultiHeadAttention};
use crate::params::ParamStore;
use crate::tensor::softmax_rows;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherConfig {
    pub hidden: usize,
    pub filter: usize,
    pub layers: usize,
    pub heads: usize,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            filter: 128,
            layers: 4,
            heads: 4,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.hidden % self.heads != 0 {
            return Err(Error::Config(format!(
                "matcher hidden {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if self.filter == 0 || self.layers == 0 {
            return Err(Error::Config("matcher filter and layers must be positive".into()));
        }
        Ok(())
    }
}

/// Post-norm block: cross-attention + residual + LN, feed-forward + residual + LN.
#[derive(Clone, Debug)]
pub struct CrossAttentionBlock {
    pub attn: MultiHeadAttention,
    pub attn_norm: LayerNorm,
    pub ff: FeedForward,
    pub ff_norm: LayerNorm,
}

impl CrossAttentionBlock {
    fn new<R: Rng>(store: &mut ParamStore, prefix: &str, cfg: &MatcherConfig, rng: &mut R) -> Self {
        Self {
            attn: MultiHeadAttention::new(store, &format!("{prefix}.attn"), cfg.hidden, cfg.heads, rng),
            attn_norm: LayerNorm::new(store, &format!("{prefix}.attn_norm"), cfg.hidden),
            ff: FeedForward::new(store, &format!("{prefix}.ff"), cfg.hidden, cfg.filter, rng),
            ff_norm: LayerNorm::new(store, &format!("{prefix}.ff_norm"), cfg.hidden),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, audio: Var) -> Result<Var> {
        let h = self.attn.forward(g, store, x, audio)?;
        let x = g.add(x, h)?;
        let x = self.attn_norm.forward(g, store, x)?;
        let h = self.ff.forward(g, store, x)?;
        let x = g.add(x, h)?;
        self.ff_norm.forward(g, store, x)
    }
}

/// Phoneme-to-vector table, query projection and the cross-attention stack.
#[derive(Clone, Debug)]
pub struct Matcher {
    pub p2v: Embedding,
    pub query_proj: Linear,
    pub blocks: Vec<CrossAttentionBlock>,
}

impl Matcher {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        table_rows: usize,
        pad_id: usize,
        cfg: &MatcherConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let p2v = Embedding::new(store, "text.p2v", table_rows, cfg.hidden, Some(pad_id), rng);
        let query_proj = Linear::new(store, "text.query_proj", cfg.hidden, cfg.hidden, rng);
        let blocks = (0..cfg.layers)
            .map(|i| CrossAttentionBlock::new(store, &format!("matcher.block{i}"), cfg, rng))
            .collect();
        Ok(Self {
            p2v,
            query_proj,
            blocks,
        })
    }

    /// Projected text embedding used as the first query (T×D).
    pub fn text_query(&self, g: &mut Graph, store: &ParamStore, anchor: &PaddedAnchor) -> Result<Var> {
        let e = self.p2v.forward(g, store, anchor.ids())?;
        self.query_proj.forward(g, store, e)
    }

    /// Runs the blocks over a T×D query against n×D audio; returns C (T×D).
    pub fn cross_attend(&self, g: &mut Graph, store: &ParamStore, query: Var, audio: Var) -> Result<Var> {
        let (q, a) = (g.value(query), g.value(audio));
        if a.rows() == 0 {
            return Err(Error::EmptyAudio);
        }
        if q.cols() != a.cols() {
            return Err(Error::DimensionMismatch {
                op: "cross_attend",
                lhs: q.shape().to_vec(),
                rhs: a.shape().to_vec(),
            });
        }
        let mut x = query;
        for block in &self.blocks {
            x = block.forward(g, store, x, audio)?;
        }
        Ok(x)
    }
}

/// Flatten-and-classify over all of C.
#[derive(Clone, Debug)]
pub struct UtteranceHead {
    pub fc: Linear,
}

impl UtteranceHead {
    pub fn new<R: Rng>(store: &mut ParamStore, max_len: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            fc: Linear::new(store, "utterance.fc", max_len * dim, 2, rng),
        }
    }

    /// 1×2 logits (mismatch, match).
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, c: Var) -> Result<Var> {
        let flat = g.flatten(c)?;
        self.fc.forward(g, store, flat)
    }
}

/// Independent prefix classifiers; head `t` reads rows `0..=t` of C.
#[derive(Clone, Debug)]
pub struct SubsequenceHeads {
    pub fcs: Vec<Linear>,
}

impl SubsequenceHeads {
    pub fn new<R: Rng>(store: &mut ParamStore, max_len: usize, dim: usize, rng: &mut R) -> Self {
        let fcs = (0..max_len)
            .map(|t| Linear::new(store, &format!("subseq.fc{}", t + 1), (t + 1) * dim, 2, rng))
            .collect();
        Self { fcs }
    }

    /// Evaluates heads `0..count`; each output is 1×2 logits.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, c: Var, count: usize) -> Result<Vec<Var>> {
        let rows = g.value(c).rows();
        if count > rows || count > self.fcs.len() {
            return Err(Error::Shape(format!(
                "{count} prefix heads requested for {rows} rows"
            )));
        }
        (0..count)
            .map(|t| {
                let prefix = g.slice_rows(c, 0, t + 1)?;
                let flat = g.flatten(prefix)?;
                self.fcs[t].forward(g, store, flat)
            })
            .collect()
    }
}

/// Mean cross-entropy over the valid prefix heads.
pub fn subsequence_loss(g: &mut Graph, head_logits: &[Var], labels: &SubseqLabels) -> Result<Var> {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (t, label) in labels.iter().enumerate() {
        if let Some(class) = label.class() {
            let logits = *head_logits
                .get(t)
                .ok_or_else(|| Error::Shape(format!("no logits for prefix head {}", t + 1)))?;
            rows.push(logits);
            targets.push(class);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyKeyword);
    }
    let stacked = g.concat_rows(&rows)?;
    g.cross_entropy(stacked, &targets)
}

/// Utterance-level decision: the two logits and the match probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchDecision {
    pub logits: [f64; 2],
    pub score: f64,
}

impl MatchDecision {
    pub fn from_logits(logits: [f64; 2]) -> Self {
        let p = softmax_rows(&crate::tensor::Tensor::matrix(1, 2, logits.to_vec()))
            .expect("finite logits");
        Self {
            logits,
            score: p.data()[1],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{pad_anchor, subsequence_labels, SubseqLabel};
    use crate::layers::attend;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Tensor {
        Tensor::matrix(m, n, (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn zero_query_row_averages_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut qt = random(&mut rng, 3, 4);
        qt.data_mut()[4..8].fill(0.0);
        let kt = random(&mut rng, 6, 4);
        let vt = random(&mut rng, 6, 4);
        let mut g = Graph::new();
        let (q, k, v) = (g.input(qt), g.input(kt), g.input(vt.clone()));
        let out = attend(&mut g, q, k, v, 1).unwrap();
        for j in 0..4 {
            let mean: f64 = (0..6).map(|i| vt.at(i, j)).sum::<f64>() / 6.0;
            assert!((g.value(out).at(1, j) - mean).abs() < 1e-14);
        }
    }

    #[test]
    fn saturated_attention_selects_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let qt = random(&mut rng, 2, 4);
        let mut kv = random(&mut rng, 5, 4);
        // row 3 points along query row 0, scaled to 1000
        let q0: Vec<f64> = qt.row(0).to_vec();
        let norm = q0.iter().map(|x| x * x).sum::<f64>().sqrt();
        for j in 0..4 {
            kv.data_mut()[3 * 4 + j] = 1000.0 * q0[j] / norm;
        }
        let mut g = Graph::new();
        let (q, k, v) = (g.input(qt), g.input(kv.clone()), g.input(kv.clone()));
        let out = attend(&mut g, q, k, v, 1).unwrap();
        for j in 0..4 {
            assert!((g.value(out).at(0, j) - kv.at(3, j)).abs() < 1e-6);
        }
    }

    fn small_matcher(store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Matcher {
        let cfg = MatcherConfig {
            hidden: 8,
            filter: 16,
            layers: 2,
            heads: 2,
        };
        Matcher::new(store, 14, 13, &cfg, rng).unwrap()
    }

    #[test]
    fn output_shape_independent_of_audio_length() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = small_matcher(&mut store, &mut rng);
        let anchor = pad_anchor(&[0, 1, 2], 25, 13).unwrap();
        for n in [1, 2, 10, 100, 500] {
            let mut g = Graph::new();
            let q = m.text_query(&mut g, &store, &anchor).unwrap();
            let a = g.input(random(&mut rng, n, 8));
            let c = m.cross_attend(&mut g, &store, q, a).unwrap();
            assert_eq!(g.value(c).shape(), &[25, 8]);
        }
    }

    #[test]
    fn padded_query_rows_are_zero_before_projection() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = small_matcher(&mut store, &mut rng);
        let anchor = pad_anchor(&[5, 1], 6, 13).unwrap();
        let mut g = Graph::new();
        let e = m.p2v.forward(&mut g, &store, anchor.ids()).unwrap();
        for t in 2..6 {
            assert!(g.value(e).row(t).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn zero_heads_give_even_odds() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let utt = UtteranceHead::new(&mut store, 25, 64, &mut rng);
        assert_eq!(store.get(utt.fc.weight).shape(), &[1600, 2]);
        store.get_mut(utt.fc.weight).data_mut().fill(0.0);
        let mut g = Graph::new();
        let c = g.input(random(&mut rng, 25, 64));
        let logits = utt.forward(&mut g, &store, c).unwrap();
        assert_eq!(g.value(logits).data(), &[0.0, 0.0]);
        assert_eq!(MatchDecision::from_logits([0.0, 0.0]).score, 0.5);
    }

    #[test]
    fn head_input_sizes() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let heads = SubsequenceHeads::new(&mut store, 25, 8, &mut rng);
        assert_eq!(store.get(heads.fcs[0].weight).shape(), &[8, 2]);
        assert_eq!(store.get(heads.fcs[24].weight).shape(), &[200, 2]);
    }

    #[test]
    fn prefix_locality() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let heads = SubsequenceHeads::new(&mut store, 6, 4, &mut rng);
        let base = random(&mut rng, 6, 4);
        let eval = |c: &Tensor| {
            let mut g = Graph::new();
            let cv = g.input(c.clone());
            let outs = heads.forward(&mut g, &store, cv, 6).unwrap();
            outs.iter().map(|&o| g.value(o).clone()).collect::<Vec<_>>()
        };
        let before = eval(&base);
        for j in 0..6 {
            let mut c = base.clone();
            c.data_mut()[j * 4] += 0.5;
            let after = eval(&c);
            for t in 0..6 {
                let changed = after[t] != before[t];
                assert_eq!(changed, t >= j, "head {t} row {j}");
            }
        }
    }

    #[test]
    fn subsequence_loss_examples() {
        let anchor = pad_anchor(&[0, 1, 2, 3, 4], 8, 13).unwrap();
        let labels = subsequence_labels(&anchor, &[0, 1, 5, 3, 4]);

        // uniform logits -> ln 2
        let mut g = Graph::new();
        let logits: Vec<Var> = (0..8).map(|_| g.input(Tensor::zeros(1, 2))).collect();
        let l = subsequence_loss(&mut g, &logits, &labels).unwrap();
        assert!((g.value(l).item().unwrap() - 2f64.ln()).abs() < 1e-15);

        // confident and correct -> 0
        let mut g = Graph::new();
        let logits: Vec<Var> = labels
            .iter()
            .map(|lab| {
                let v = match lab {
                    SubseqLabel::Match => vec![-800.0, 800.0],
                    SubseqLabel::Mismatch => vec![800.0, -800.0],
                    SubseqLabel::Invalid => vec![3.0, -1.0],
                };
                g.input(Tensor::matrix(1, 2, v))
            })
            .collect();
        let l = subsequence_loss(&mut g, &logits, &labels).unwrap();
        assert_eq!(g.value(l).item().unwrap(), 0.0);
    }

    #[test]
    fn subsequence_loss_matches_direct_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let len = rng.gen_range(1..=8);
            let ids: Vec<usize> = (0..len).map(|_| rng.gen_range(0..3)).collect();
            let spoken: Vec<usize> = (0..rng.gen_range(0..10)).map(|_| rng.gen_range(0..3)).collect();
            let anchor = pad_anchor(&ids, 8, 13).unwrap();
            let labels = subsequence_labels(&anchor, &spoken);
            let raw: Vec<[f64; 2]> = (0..8)
                .map(|_| [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)])
                .collect();
            let mut g = Graph::new();
            let logits: Vec<Var> = raw.iter().map(|r| g.input(Tensor::matrix(1, 2, r.to_vec()))).collect();
            let l = subsequence_loss(&mut g, &logits, &labels).unwrap();

            let mut sum = 0.0;
            let mut count = 0;
            for (t, lab) in labels.iter().enumerate() {
                if let Some(cls) = lab.class() {
                    let [a, b] = raw[t];
                    let z = (a.exp() + b.exp()).ln();
                    sum += z - raw[t][cls];
                    count += 1;
                }
            }
            assert!((g.value(l).item().unwrap() - sum / count as f64).abs() < 1e-12);
        }
    }
}

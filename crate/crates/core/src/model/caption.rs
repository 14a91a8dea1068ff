//! Captioning branch: difference embedding, multi-head cross-attention,
//! the semantic fusion stack that injects detection-branch features into
//! the caption pathway, and the transformer caption decoder.

use super::layers::{Dense, FeedForward, Projection, SeqNorm};
use super::vocab::{PAD, START};
use super::{ModelConfig, ModelError};
use crate::num::Real;
use crate::params::{Binding, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::{concat, Tensor};

/// Sinusoidal position table `[len, dim]`; constant, never trained.
pub fn positional_encoding<F: Real>(len: usize, dim: usize) -> Tensor<F> {
    let mut values = vec![F::ZERO; len * dim];
    for pos in 0..len {
        for i in 0..dim {
            let exponent = 2.0 * (i / 2) as f64 / dim as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            let v = if i % 2 == 0 { angle.sin() } else { angle.cos() };
            values[pos * dim + i] = F::from_f64(v);
        }
    }
    Tensor::from_vec(&[len, dim], values)
}

/// Additive causal mask `[len, len]`: 0 at or below the diagonal, a large
/// negative constant above it. After the stabilized softmax the masked
/// weights are exactly zero.
pub fn causal_mask<F: Real>(len: usize) -> Tensor<F> {
    let neg = F::from_f64(-1.0e30);
    let mut values = vec![F::ZERO; len * len];
    for i in 0..len {
        for j in i + 1..len {
            values[i * len + j] = neg;
        }
    }
    Tensor::from_vec(&[len, len], values)
}

/// Multi-head attention of a query sequence over a context sequence:
/// per head, softmax(Q K^T / sqrt(d)) V with d = dim / heads; heads are
/// concatenated and passed through a bias-free output projection.
#[derive(Debug, Clone)]
pub struct MultiHeadCrossAttention {
    query: Projection,
    key: Projection,
    value: Projection,
    output: Projection,
    heads: usize,
}

/// Gain for attention output projections at init; see
/// [`Projection::new_scaled`].
const OUTPUT_PROJ_GAIN: f64 = 0.05;

impl MultiHeadCrossAttention {
    pub fn new<F: Real>(store: &mut ParamStore<F>, rng: &mut Rng, name: &str, dim: usize, heads: usize) -> Self {
        assert!(
            heads > 0 && dim % heads == 0,
            "attention width {dim} not divisible by {heads} heads"
        );
        MultiHeadCrossAttention {
            query: Projection::new(store, rng, &format!("{name}.query"), dim, dim),
            key: Projection::new(store, rng, &format!("{name}.key"), dim, dim),
            value: Projection::new(store, rng, &format!("{name}.value"), dim, dim),
            output: Projection::new_scaled(
                store,
                rng,
                &format!("{name}.output"),
                dim,
                dim,
                OUTPUT_PROJ_GAIN,
            ),
            heads,
        }
    }

    fn per_head<F: Real>(
        &self,
        bind: &Binding<F>,
        x_q: &Tensor<F>,
        x_c: &Tensor<F>,
        mask: Option<&Tensor<F>>,
    ) -> (Vec<Tensor<F>>, Vec<Tensor<F>>) {
        assert_eq!(
            x_q.shape()[1],
            x_c.shape()[1],
            "query width {:?} vs context width {:?}",
            x_q.shape(),
            x_c.shape()
        );
        let dim = x_q.shape()[1];
        let head_dim = dim / self.heads;
        let scale = F::from_f64(1.0 / (head_dim as f64).sqrt());
        let q = self.query.forward(bind, x_q);
        let k = self.key.forward(bind, x_c);
        let v = self.value.forward(bind, x_c);
        let mut weights = Vec::with_capacity(self.heads);
        let mut outputs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (lo, hi) = (h * head_dim, (h + 1) * head_dim);
            let qh = q.slice_axis(1, lo, hi);
            let kh = k.slice_axis(1, lo, hi);
            let vh = v.slice_axis(1, lo, hi);
            let mut scores = qh.matmul(&kh.transpose2d()).scale(scale);
            if let Some(m) = mask {
                scores = scores.add(m);
            }
            let attn = scores.softmax(1);
            outputs.push(attn.matmul(&vh));
            weights.push(attn);
        }
        (weights, outputs)
    }

    pub fn forward<F: Real>(
        &self,
        bind: &Binding<F>,
        x_q: &Tensor<F>,
        x_c: &Tensor<F>,
        mask: Option<&Tensor<F>>,
    ) -> Tensor<F> {
        let (_, outputs) = self.per_head(bind, x_q, x_c, mask);
        let refs: Vec<&Tensor<F>> = outputs.iter().collect();
        self.output.forward(bind, &concat(&refs, 1))
    }

    /// Per-head attention matrices, for invariant checks.
    pub fn attention_weights<F: Real>(
        &self,
        bind: &Binding<F>,
        x_q: &Tensor<F>,
        x_c: &Tensor<F>,
        mask: Option<&Tensor<F>>,
    ) -> Vec<Tensor<F>> {
        self.per_head(bind, x_q, x_c, mask).0
    }

    pub fn output_projection_id(&self) -> ParamId {
        self.output.id()
    }
}

/// Difference embedding over flattened level-4 features: a linear
/// projection of the channel-wise difference plus the per-position cosine
/// similarity of the two feature vectors, broadcast over channels.
#[derive(Debug, Clone)]
pub struct DiffEmbedding {
    proj: Dense,
}

impl DiffEmbedding {
    pub fn new<F: Real>(store: &mut ParamStore<F>, rng: &mut Rng, name: &str, dim: usize) -> Self {
        DiffEmbedding {
            proj: Dense::new(store, rng, &format!("{name}.proj"), dim, dim),
        }
    }

    /// Inputs are `[C,h,w]` level-4 features; output is `[h*w, C]`.
    pub fn forward<F: Real>(&self, bind: &Binding<F>, x_t1: &Tensor<F>, x_t2: &Tensor<F>) -> Tensor<F> {
        assert_eq!(
            x_t1.shape(),
            x_t2.shape(),
            "difference embedding inputs differ: {:?} vs {:?}",
            x_t1.shape(),
            x_t2.shape()
        );
        let f1 = x_t1.flatten_spatial();
        let f2 = x_t2.flatten_spatial();
        let projected = self.proj.forward(bind, &f2.sub(&f1));
        let cos = f1.cosine_rows(&f2);
        projected.add_col(&cos)
    }
}

/// The fusion stack between the two branches. In full mode the difference
/// embedding first cross-attends to the deepest fused detection feature,
/// then to the concatenated bi-temporal tokens; the baseline drops the
/// first stage entirely. Residual connections wrap both attentions and the
/// final normalized feed-forward.
#[derive(Debug, Clone)]
pub struct SemanticFusion {
    diff: DiffEmbedding,
    cd_attention: Option<MultiHeadCrossAttention>,
    temporal_attention: MultiHeadCrossAttention,
    norm: SeqNorm,
    ff: FeedForward,
}

impl SemanticFusion {
    pub fn new<F: Real>(store: &mut ParamStore<F>, rng: &mut Rng, cfg: &ModelConfig, with_cd_stage: bool) -> Self {
        let dim = cfg.widths[3];
        SemanticFusion {
            diff: DiffEmbedding::new(store, rng, "fusion.diff", dim),
            cd_attention: with_cd_stage.then(|| {
                MultiHeadCrossAttention::new(store, rng, "fusion.cd_attention", dim, cfg.heads)
            }),
            temporal_attention: MultiHeadCrossAttention::new(
                store,
                rng,
                "fusion.temporal_attention",
                dim,
                cfg.heads,
            ),
            norm: SeqNorm::new(store, "fusion.norm", dim),
            ff: FeedForward::new(store, rng, "fusion.ff", dim, dim * cfg.ff_mult),
        }
    }

    /// `x_t1_l4`/`x_t2_l4` are `[C,h,w]` level-4 backbone features;
    /// `fused_l4` is the deepest fused detection feature, present exactly
    /// when the fusion was built with the detection stage.
    pub fn forward<F: Real>(
        &self,
        bind: &Binding<F>,
        x_t1_l4: &Tensor<F>,
        x_t2_l4: &Tensor<F>,
        fused_l4: Option<&Tensor<F>>,
    ) -> Result<Tensor<F>, ModelError> {
        let queries = self.diff.forward(bind, x_t1_l4, x_t2_l4);
        let after_cd = match (&self.cd_attention, fused_l4) {
            (Some(attention), Some(fused)) => {
                let ctx = fused.flatten_spatial();
                queries.add(&attention.forward(bind, &queries, &ctx, None))
            }
            (None, None) => queries,
            (Some(_), None) => {
                return Err(ModelError::ModeMismatch(
                    "full-mode fusion requires the fused detection feature".into(),
                ))
            }
            (None, Some(_)) => {
                return Err(ModelError::ModeMismatch(
                    "baseline fusion does not accept a fused detection feature".into(),
                ))
            }
        };
        let temporal_ctx = concat(&[&x_t1_l4.flatten_spatial(), &x_t2_l4.flatten_spatial()], 0);
        let mixed = after_cd.add(&self.temporal_attention.forward(bind, &after_cd, &temporal_ctx, None));
        let normed = self.norm.forward(bind, &mixed);
        Ok(mixed.add(&self.ff.forward(bind, &normed)))
    }

    pub fn cd_attention(&self) -> Option<&MultiHeadCrossAttention> {
        self.cd_attention.as_ref()
    }
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    self_norm: SeqNorm,
    self_attention: MultiHeadCrossAttention,
    cross_norm: SeqNorm,
    cross_attention: MultiHeadCrossAttention,
    ff_norm: SeqNorm,
    ff: FeedForward,
}

impl DecoderLayer {
    fn new<F: Real>(store: &mut ParamStore<F>, rng: &mut Rng, name: &str, cfg: &ModelConfig) -> Self {
        let dim = cfg.widths[3];
        DecoderLayer {
            self_norm: SeqNorm::new(store, &format!("{name}.self_norm"), dim),
            self_attention: MultiHeadCrossAttention::new(store, rng, &format!("{name}.self_attention"), dim, cfg.heads),
            cross_norm: SeqNorm::new(store, &format!("{name}.cross_norm"), dim),
            cross_attention: MultiHeadCrossAttention::new(
                store,
                rng,
                &format!("{name}.cross_attention"),
                dim,
                cfg.heads,
            ),
            ff_norm: SeqNorm::new(store, &format!("{name}.ff_norm"), dim),
            ff: FeedForward::new(store, rng, &format!("{name}.ff"), dim, dim * cfg.ff_mult),
        }
    }

    fn forward<F: Real>(
        &self,
        bind: &Binding<F>,
        x: &Tensor<F>,
        visual: &Tensor<F>,
        mask: &Tensor<F>,
    ) -> Tensor<F> {
        let normed = self.self_norm.forward(bind, x);
        let x = x.add(&self.self_attention.forward(bind, &normed, &normed, Some(mask)));
        let normed = self.cross_norm.forward(bind, &x);
        let x = x.add(&self.cross_attention.forward(bind, &normed, visual, None));
        let normed = self.ff_norm.forward(bind, &x);
        x.add(&self.ff.forward(bind, &normed))
    }
}

/// Transformer caption decoder over visual tokens, with a final residual
/// connection that adds the token-embedding stream to the decoder stack
/// output just before the vocabulary projection.
#[derive(Debug, Clone)]
pub struct CaptionDecoder {
    embedding: ParamId,
    layers: Vec<DecoderLayer>,
    final_norm: SeqNorm,
    vocab_proj: Dense,
    vocab_size: usize,
    max_len: usize,
}

impl CaptionDecoder {
    pub fn new<F: Real>(store: &mut ParamStore<F>, rng: &mut Rng, cfg: &ModelConfig, vocab_size: usize) -> Self {
        let dim = cfg.widths[3];
        let embedding = store.add_uniform("decoder.embedding", &[vocab_size, dim], dim, rng);
        let layers = (0..cfg.decoder_layers)
            .map(|i| DecoderLayer::new(store, rng, &format!("decoder.layer{i}"), cfg))
            .collect();
        CaptionDecoder {
            embedding,
            layers,
            final_norm: SeqNorm::new(store, "decoder.final_norm", dim),
            vocab_proj: Dense::new(store, rng, "decoder.vocab_proj", dim, vocab_size),
            vocab_size,
            max_len: cfg.max_caption_len,
        }
    }

    /// Teacher-forced pass: logits `[len(tokens), V]`, where row `t`
    /// depends only on tokens `0..=t`.
    pub fn forward<F: Real>(
        &self,
        bind: &Binding<F>,
        visual: &Tensor<F>,
        tokens: &[u32],
    ) -> Result<Tensor<F>, ModelError> {
        if tokens.is_empty() || tokens[0] != START {
            return Err(ModelError::MissingStart);
        }
        if tokens.len() > self.max_len {
            return Err(ModelError::CaptionTooLong {
                len: tokens.len(),
                max: self.max_len,
            });
        }
        for &t in tokens {
            if t as usize >= self.vocab_size {
                return Err(ModelError::TokenOutOfRange {
                    id: t,
                    vocab: self.vocab_size,
                });
            }
        }
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let dim = visual.shape()[1];
        let embedded = bind
            .get(self.embedding)
            .embedding(&ids)
            .add(&positional_encoding(ids.len(), dim));
        let mask = causal_mask(ids.len());
        let mut x = embedded.clone();
        for layer in &self.layers {
            x = layer.forward(bind, &x, visual, &mask);
        }
        let pre_logits = self.final_norm.forward(bind, &x).add(&embedded);
        Ok(self.vocab_proj.forward(bind, &pre_logits))
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }
}

/// Summed cross-entropy over non-padding timesteps: `logits[t]` is
/// penalized against `targets[t]`, and `<pad>` positions contribute
/// neither loss nor gradient.
pub fn caption_loss<F: Real>(logits: &Tensor<F>, targets: &[u32]) -> Result<Tensor<F>, ModelError> {
    let shape = logits.shape();
    if shape.len() != 2 {
        return Err(ModelError::InvalidInput(format!(
            "caption loss expects [L,V] logits, got {shape:?}"
        )));
    }
    if targets.len() != shape[0] {
        return Err(ModelError::LengthMismatch {
            logits: shape[0],
            targets: targets.len(),
        });
    }
    let vocab = shape[1];
    let mut rows: Vec<Option<usize>> = Vec::with_capacity(targets.len());
    for &t in targets {
        if t == PAD {
            rows.push(None);
        } else if (t as usize) < vocab {
            rows.push(Some(t as usize));
        } else {
            return Err(ModelError::TokenOutOfRange { id: t, vocab });
        }
    }
    Ok(logits.cross_entropy_sum_rows(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::vocab::END;

    fn fusion_fixture(with_cd: bool) -> (SemanticFusion, ParamStore<f64>) {
        let cfg = ModelConfig {
            widths: [4, 4, 4, 8],
            heads: 2,
            ff_mult: 2,
            ..ModelConfig::default()
        };
        let mut store = ParamStore::new();
        let mut rng = Rng::new(21);
        let fusion = SemanticFusion::new(&mut store, &mut rng, &cfg, with_cd);
        (fusion, store)
    }

    fn random_feature(rng: &mut Rng, c: usize, h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_vec(&[c, h, w], (0..c * h * w).map(|_| rng.range(-1.0, 1.0)).collect())
    }

    #[test]
    fn diff_embedding_equal_inputs_is_bias_plus_one() {
        // Equal nonzero inputs: difference projects to b, cosine is 1.
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut rng = Rng::new(9);
        let diff = DiffEmbedding::new(&mut store, &mut rng, "diff", 4);
        let bias_id = store.lookup("diff.proj.bias").unwrap();
        let bias = vec![0.3, -0.2, 0.05, 1.0];
        store.set_values(bias_id, bias.clone());
        let bind = store.bind(false);
        let x = Tensor::from_vec(&[4, 1, 2], vec![0.5, 1.0, -0.3, 0.2, 0.9, -0.4, 0.1, 0.8]);
        let out = diff.forward(&bind, &x, &x);
        assert_eq!(out.shape(), &[2, 4]);
        for row in 0..2 {
            for c in 0..4 {
                let got = out.to_vec()[row * 4 + c];
                assert!((got - (bias[c] + 1.0)).abs() < 1e-12, "row {row} ch {c}: {got}");
            }
        }
    }

    #[test]
    fn diff_embedding_identity_projection_cases() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut rng = Rng::new(9);
        let diff = DiffEmbedding::new(&mut store, &mut rng, "diff", 2);
        let w_id = store.lookup("diff.proj.weight").unwrap();
        store.set_values(w_id, vec![1.0, 0.0, 0.0, 1.0]);
        let bind = store.bind(false);

        // x2 = 2*x1 (parallel): output = x1 + 1 per position.
        let x1 = Tensor::from_vec(&[2, 1, 1], vec![0.6, -0.2]);
        let x2 = Tensor::from_vec(&[2, 1, 1], vec![1.2, -0.4]);
        let out = diff.forward(&bind, &x1, &x2).to_vec();
        assert!((out[0] - (0.6 + 1.0)).abs() < 1e-12);
        assert!((out[1] - (-0.2 + 1.0)).abs() < 1e-12);

        // Orthogonal vectors: cosine term vanishes, leaving the projected
        // difference.
        let a = Tensor::from_vec(&[2, 1, 1], vec![1.0, 0.0]);
        let b = Tensor::from_vec(&[2, 1, 1], vec![0.0, 2.0]);
        let out = diff.forward(&bind, &a, &b).to_vec();
        assert_eq!(out, vec![-1.0, 2.0]);
    }

    #[test]
    fn diff_embedding_swap_negates_linear_term_keeps_cosine() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut rng = Rng::new(9);
        let diff = DiffEmbedding::new(&mut store, &mut rng, "diff", 3);
        let w_id = store.lookup("diff.proj.weight").unwrap();
        store.set_values(w_id, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let bind = store.bind(false);
        let mut rng2 = Rng::new(33);
        let x1 = random_feature(&mut rng2, 3, 2, 2);
        let x2 = random_feature(&mut rng2, 3, 2, 2);
        let fwd = diff.forward(&bind, &x1, &x2).to_vec();
        let rev = diff.forward(&bind, &x2, &x1).to_vec();
        let cos = x1.flatten_spatial().cosine_rows(&x2.flatten_spatial()).to_vec();
        for row in 0..4 {
            for c in 0..3 {
                let f = fwd[row * 3 + c] - cos[row];
                let r = rev[row * 3 + c] - cos[row];
                assert!((f + r).abs() < 1e-12, "linear parts must negate");
            }
        }
    }

    #[test]
    fn single_context_token_attends_with_weight_one() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut rng = Rng::new(13);
        let mca = MultiHeadCrossAttention::new(&mut store, &mut rng, "mca", 4, 2);
        let bind = store.bind(false);
        let mut r = Rng::new(2);
        let xq = Tensor::from_vec(&[3, 4], (0..12).map(|_| r.range(-1.0, 1.0)).collect());
        let xc = Tensor::from_vec(&[1, 4], (0..4).map(|_| r.range(-1.0, 1.0)).collect());
        for attn in mca.attention_weights(&bind, &xq, &xc, None) {
            for &w in attn.values().iter() {
                assert!((w - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut rng = Rng::new(14);
        let mca = MultiHeadCrossAttention::new(&mut store, &mut rng, "mca", 8, 4);
        let bind = store.bind(false);
        let mut r = Rng::new(3);
        let xq = Tensor::from_vec(&[5, 8], (0..40).map(|_| r.range(-2.0, 2.0)).collect());
        let xc = Tensor::from_vec(&[7, 8], (0..56).map(|_| r.range(-2.0, 2.0)).collect());
        for attn in mca.attention_weights(&bind, &xq, &xc, None) {
            let v = attn.to_vec();
            for row in 0..5 {
                let sum: f64 = v[row * 7..(row + 1) * 7].iter().sum();
                assert!((sum - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn fusion_mode_mismatch_is_rejected() {
        let (full, store) = fusion_fixture(true);
        let bind = store.bind(false);
        let mut rng = Rng::new(4);
        let x1 = random_feature(&mut rng, 8, 2, 2);
        let x2 = random_feature(&mut rng, 8, 2, 2);
        assert!(matches!(
            full.forward(&bind, &x1, &x2, None),
            Err(ModelError::ModeMismatch(_))
        ));
        let (baseline, store) = fusion_fixture(false);
        let bind = store.bind(false);
        let fused = random_feature(&mut rng, 8, 2, 2);
        assert!(matches!(
            baseline.forward(&bind, &x1, &x2, Some(&fused)),
            Err(ModelError::ModeMismatch(_))
        ));
    }

    #[test]
    fn zeroed_first_attention_output_collapses_full_to_baseline() {
        // With W^o of the detection-attention stage zeroed, the residual
        // carries the queries through unchanged, so the remaining pathway
        // must agree with a baseline fusion sharing all other parameters.
        let (full, mut store) = fusion_fixture(true);
        let wo = full.cd_attention().unwrap().output_projection_id();
        let n = store.get(wo).values.len();
        store.set_values(wo, vec![0.0; n]);
        let bind = store.bind(false);
        let mut rng = Rng::new(6);
        let x1 = random_feature(&mut rng, 8, 2, 2);
        let x2 = random_feature(&mut rng, 8, 2, 2);
        let fused = random_feature(&mut rng, 8, 2, 2);
        let full_out = full.forward(&bind, &x1, &x2, Some(&fused)).unwrap();

        // Build the baseline twin with identical shared parameters by
        // copying values across stores by name.
        let (baseline, mut base_store) = fusion_fixture(false);
        let names: Vec<String> = base_store.iter().map(|(_, p)| p.name.clone()).collect();
        for name in names {
            if let Some(src) = store.lookup(&name) {
                let values = store.get(src).values.clone();
                let dst = base_store.lookup(&name).unwrap();
                base_store.set_values(dst, values);
            }
        }
        let base_bind = base_store.bind(false);
        let base_out = baseline.forward(&base_bind, &x1, &x2, None).unwrap();
        for (a, b) in full_out.to_vec().iter().zip(base_out.to_vec()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fusion_preserves_sequence_shape() {
        let (fusion, store) = fusion_fixture(true);
        let bind = store.bind(false);
        let mut rng = Rng::new(8);
        let x1 = random_feature(&mut rng, 8, 2, 2);
        let x2 = random_feature(&mut rng, 8, 2, 2);
        let fused = random_feature(&mut rng, 8, 2, 2);
        let out = fusion.forward(&bind, &x1, &x2, Some(&fused)).unwrap();
        assert_eq!(out.shape(), &[4, 8]);
    }

    fn decoder_fixture(vocab: usize) -> (CaptionDecoder, ParamStore<f64>, ModelConfig) {
        let cfg = ModelConfig {
            widths: [4, 4, 4, 8],
            heads: 2,
            ff_mult: 2,
            max_caption_len: 12,
            ..ModelConfig::default()
        };
        let mut store = ParamStore::new();
        let mut rng = Rng::new(31);
        let decoder = CaptionDecoder::new(&mut store, &mut rng, &cfg, vocab);
        (decoder, store, cfg)
    }

    #[test]
    fn decoder_logit_shape_and_causality() {
        let (decoder, store, _) = decoder_fixture(9);
        let bind = store.bind(false);
        let mut rng = Rng::new(12);
        let visual = Tensor::from_vec(&[4, 8], (0..32).map(|_| rng.range(-1.0, 1.0)).collect());
        let tokens = [START, 5, 6, 7, 8];
        let logits = decoder.forward(&bind, &visual, &tokens).unwrap();
        assert_eq!(logits.shape(), &[5, 9]);
        // Perturb token at position t+1: logits at positions <= t must not
        // move, for every prefix length.
        for t in 1..tokens.len() {
            let mut perturbed = tokens;
            perturbed[t] = 4;
            let other = decoder.forward(&bind, &visual, &perturbed).unwrap();
            let (a, b) = (logits.to_vec(), other.to_vec());
            for row in 0..t {
                for v in 0..9 {
                    assert_eq!(a[row * 9 + v], b[row * 9 + v], "prefix row {row} changed by token {t}");
                }
            }
        }
    }

    #[test]
    fn decoder_rejects_bad_token_streams() {
        let (decoder, store, _) = decoder_fixture(9);
        let bind = store.bind(false);
        let visual = Tensor::zeros(&[4, 8]);
        assert!(matches!(
            decoder.forward(&bind, &visual, &[5, 6]),
            Err(ModelError::MissingStart)
        ));
        assert!(matches!(
            decoder.forward(&bind, &visual, &[START, 42]),
            Err(ModelError::TokenOutOfRange { id: 42, vocab: 9 })
        ));
        let long: Vec<u32> = std::iter::once(START).chain(std::iter::repeat(4).take(20)).collect();
        assert!(matches!(
            decoder.forward(&bind, &visual, &long),
            Err(ModelError::CaptionTooLong { .. })
        ));
    }

    #[test]
    fn caption_loss_closed_forms() {
        // Uniform over V=16 for 3 steps: 3 ln 16. Perfect prediction: 0.
        let logits: Tensor<f64> = Tensor::zeros(&[3, 16]);
        let loss = caption_loss(&logits, &[4, 5, END]).unwrap().item();
        assert!((loss - 3.0 * (16f64).ln()).abs() < 1e-12);

        let mut confident = vec![0.0; 3 * 16];
        for (row, &t) in [4u32, 5, END].iter().enumerate() {
            confident[row * 16 + t as usize] = 60.0;
        }
        let loss = caption_loss(&Tensor::from_vec(&[3, 16], confident), &[4, 5, END])
            .unwrap()
            .item();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn caption_loss_ignores_padding_tail() {
        let mut rng = Rng::new(3);
        let values: Vec<f64> = (0..4 * 8).map(|_| rng.range(-1.0, 1.0)).collect();
        let logits = Tensor::from_vec(&[4, 8], values.clone());
        let trimmed = Tensor::from_vec(&[2, 8], values[..16].to_vec());
        let padded = caption_loss(&logits, &[5, END, PAD, PAD]).unwrap().item();
        let plain = caption_loss(&trimmed, &[5, END]).unwrap().item();
        assert!((padded - plain).abs() < 1e-12);
    }

    #[test]
    fn caption_loss_length_mismatch_rejected() {
        let logits: Tensor<f64> = Tensor::zeros(&[3, 8]);
        assert!(matches!(
            caption_loss(&logits, &[1, 2]),
            Err(ModelError::LengthMismatch { logits: 3, targets: 2 })
        ));
    }
}

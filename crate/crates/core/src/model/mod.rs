//! The full change-captioning model: a siamese encoder feeding an
//! auxiliary change-detection branch (bi-temporal fusion + UNet-style
//! head, trained on pseudo-labels) and a caption branch (semantic fusion +
//! transformer decoder). In baseline mode the detection branch and the
//! fusion's first cross-attention stage do not exist at all — their
//! parameters are never created.

pub mod backbone;
pub mod caption;
pub mod cd;
pub mod layers;
pub mod vocab;

pub use backbone::{FeaturePyramid, SiameseEncoder};
pub use caption::{
    caption_loss, causal_mask, positional_encoding, CaptionDecoder, DiffEmbedding,
    MultiHeadCrossAttention, SemanticFusion,
};
pub use cd::{detection_loss, logits_to_mask, BiTemporalFusion, CdHead, FusedPyramid};
pub use vocab::Vocabulary;

use crate::data::RgbBuffer;
use crate::num::Real;
use crate::params::{Binding, ParamStore};
use crate::rng::{fnv1a64, Rng};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Detection branch plus full fusion.
    #[default]
    Full,
    /// No detection branch; fusion keeps only the bi-temporal stage.
    Baseline,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "full" => Some(Mode::Full),
            "baseline" => Some(Mode::Baseline),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub image_size: usize,
    pub stem_width: usize,
    pub widths: [usize; 4],
    /// Channel width of the head's two final upsampling blocks.
    pub head_width: usize,
    pub num_classes: usize,
    pub heads: usize,
    pub decoder_layers: usize,
    pub ff_mult: usize,
    pub max_caption_len: usize,
    pub mode: Mode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            image_size: 64,
            stem_width: 16,
            widths: [32, 64, 128, 256],
            head_width: 16,
            num_classes: 2,
            heads: 4,
            decoder_layers: 1,
            ff_mult: 4,
            max_caption_len: 20,
            mode: Mode::Full,
        }
    }
}

impl ModelConfig {
    /// Desk-test preset: same topology, CPU-friendly widths.
    pub fn small() -> Self {
        ModelConfig {
            stem_width: 8,
            widths: [8, 16, 32, 64],
            head_width: 8,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.image_size == 0 || self.image_size % 32 != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "image_size {} must be a positive multiple of 32",
                self.image_size
            )));
        }
        if self.widths.windows(2).any(|w| w[1] < w[0]) {
            return Err(ModelError::InvalidConfig(format!(
                "channel widths must be non-decreasing, got {:?}",
                self.widths
            )));
        }
        if self.heads == 0 || self.widths[3] % self.heads != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "widths[3]={} must be divisible by heads={}",
                self.widths[3], self.heads
            )));
        }
        if self.num_classes < 2 {
            return Err(ModelError::InvalidConfig(format!(
                "num_classes {} must be at least 2",
                self.num_classes
            )));
        }
        if self.decoder_layers == 0 || self.max_caption_len < 2 {
            return Err(ModelError::InvalidConfig(
                "decoder_layers must be >= 1 and max_caption_len >= 2".into(),
            ));
        }
        Ok(())
    }

    /// Digest of the canonical JSON form; embedded in checkpoints so a
    /// mismatched config is caught on load.
    pub fn digest(&self) -> u64 {
        fnv1a64(serde_json::to_string(self).expect("serializable").as_bytes())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("image size {height}x{width} is invalid: both sides must be positive multiples of 32")]
    InvalidImageSize { height: usize, width: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("mode mismatch: {0}")]
    ModeMismatch(String),
    #[error("token id {id} out of vocabulary range {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("mask value {value} exceeds class count {classes}")]
    MaskClassOutOfRange { value: u8, classes: usize },
    #[error("token sequence must begin with <start>")]
    MissingStart,
    #[error("token sequence length {len} exceeds the decoder maximum {max}")]
    CaptionTooLong { len: usize, max: usize },
    #[error("caption loss got {logits} logit rows but {targets} targets")]
    LengthMismatch { logits: usize, targets: usize },
    #[error("vocabulary format error: {0}")]
    VocabFormat(String),
    #[error("parameter mismatch: {0}")]
    ParamMismatch(String),
}

/// Converts an in-memory RGB image to a `[3,H,W]` tensor.
pub fn image_to_tensor<F: Real>(image: &RgbBuffer) -> Tensor<F> {
    let (h, w) = (image.height, image.width);
    let mut values = vec![F::ZERO; 3 * h * w];
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                values[(c * h + y) * w + x] = F::from_f64(image.at(y, x, c) as f64);
            }
        }
    }
    Tensor::from_vec(&[3, h, w], values)
}

/// Everything the caption branch needs from one image pair, plus the
/// detection logits when the branch exists.
pub struct EncodedPair<F: Real> {
    pub visual: Tensor<F>,
    pub cd_logits: Option<Tensor<F>>,
}

pub struct ChangeCaptionModel<F: Real> {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore<F>,
    encoder: SiameseEncoder,
    btf: Option<Vec<BiTemporalFusion>>,
    cd_head: Option<CdHead>,
    fusion: SemanticFusion,
    decoder: CaptionDecoder,
}

impl<F: Real> ChangeCaptionModel<F> {
    /// Builds a freshly initialized model; all randomness derives from
    /// `seed`.
    pub fn new(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = Rng::derive(seed, "model_init");
        let encoder = SiameseEncoder::new(&mut store, &mut rng, &config);
        let full = config.mode == Mode::Full;
        let btf = full.then(|| {
            config
                .widths
                .iter()
                .enumerate()
                .map(|(i, &w)| {
                    BiTemporalFusion::new(&mut store, &mut rng, &format!("btf.level{}", i + 1), w)
                })
                .collect()
        });
        let cd_head = full.then(|| CdHead::new(&mut store, &mut rng, &config));
        let fusion = SemanticFusion::new(&mut store, &mut rng, &config, full);
        let decoder = CaptionDecoder::new(&mut store, &mut rng, &config, vocab.size());
        Ok(ChangeCaptionModel {
            config,
            vocab,
            store,
            encoder,
            btf,
            cd_head,
            fusion,
            decoder,
        })
    }

    /// Replaces parameter values with checkpointed ones, matched by name.
    pub fn load_values(&mut self, loaded: &ParamStore<F>) -> Result<(), ModelError> {
        if loaded.len() != self.store.len() {
            return Err(ModelError::ParamMismatch(format!(
                "checkpoint has {} parameters, model expects {}",
                loaded.len(),
                self.store.len()
            )));
        }
        let ids: Vec<_> = self.store.iter().map(|(id, p)| (id, p.name.clone(), p.shape.clone())).collect();
        for (id, name, shape) in ids {
            let src = loaded
                .lookup(&name)
                .ok_or_else(|| ModelError::ParamMismatch(format!("checkpoint is missing '{name}'")))?;
            let param = loaded.get(src);
            if param.shape != shape {
                return Err(ModelError::ParamMismatch(format!(
                    "'{name}' has shape {:?} in checkpoint, expected {shape:?}",
                    param.shape
                )));
            }
            self.store.set_values(id, param.values.clone());
        }
        Ok(())
    }

    pub fn bind(&self, trainable: bool) -> Binding<F> {
        self.store.bind(trainable)
    }

    pub fn encoder(&self) -> &SiameseEncoder {
        &self.encoder
    }

    pub fn fusion(&self) -> &SemanticFusion {
        &self.fusion
    }

    pub fn decoder(&self) -> &CaptionDecoder {
        &self.decoder
    }

    pub fn btf(&self) -> Option<&[BiTemporalFusion]> {
        self.btf.as_deref()
    }

    pub fn cd_head(&self) -> Option<&CdHead> {
        self.cd_head.as_ref()
    }

    /// Runs both siamese passes, the detection branch (in full mode), and
    /// the semantic fusion; the result feeds the decoder any number of
    /// times.
    pub fn encode_pair(
        &self,
        bind: &Binding<F>,
        pre: &Tensor<F>,
        post: &Tensor<F>,
    ) -> Result<EncodedPair<F>, ModelError> {
        let pyr_pre = self.encoder.forward(bind, pre)?;
        let pyr_post = self.encoder.forward(bind, post)?;
        self.encode_from_pyramids(bind, pyr_pre, pyr_post)
    }

    /// Feature-injection hook: runs everything downstream of the encoder
    /// on externally computed pyramids (for example features exported from
    /// a pretrained backbone), bypassing the built-in siamese encoder.
    pub fn encode_from_pyramids(
        &self,
        bind: &Binding<F>,
        pyr_pre: FeaturePyramid<F>,
        pyr_post: FeaturePyramid<F>,
    ) -> Result<EncodedPair<F>, ModelError> {
        for (a, b) in pyr_pre.levels.iter().zip(pyr_post.levels.iter()) {
            if a.shape() != b.shape() {
                return Err(ModelError::InvalidInput(format!(
                    "pyramid level shapes differ: {:?} vs {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        let (fused_l4, cd_logits) = match (&self.btf, &self.cd_head) {
            (Some(btf), Some(head)) => {
                let levels: Vec<Tensor<F>> = btf
                    .iter()
                    .zip(pyr_pre.levels.iter().zip(pyr_post.levels.iter()))
                    .map(|(fusion, (a, b))| fusion.fuse(bind, a, b))
                    .collect();
                let fused = FusedPyramid {
                    levels: levels.try_into().expect("four levels"),
                };
                let logits = head.decode(bind, &fused);
                (Some(fused.levels[3].clone()), Some(logits))
            }
            _ => (None, None),
        };
        let visual = self.fusion.forward(
            bind,
            &pyr_pre.levels[3],
            &pyr_post.levels[3],
            fused_l4.as_ref(),
        )?;
        Ok(EncodedPair { visual, cd_logits })
    }

    /// Teacher-forced decoder logits for a token prefix.
    pub fn decode_tokens(
        &self,
        bind: &Binding<F>,
        visual: &Tensor<F>,
        tokens: &[u32],
    ) -> Result<Tensor<F>, ModelError> {
        self.decoder.forward(bind, visual, tokens)
    }
}

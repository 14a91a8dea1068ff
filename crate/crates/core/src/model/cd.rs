//! Auxiliary change-detection branch: per-level bi-temporal fusion, a
//! UNet-style decoding head, and the pseudo-label detection loss.

use super::layers::{ConvBlock, UpsampleBlock};
use super::{ModelConfig, ModelError};
use crate::data::MaskBuffer;
use crate::num::Real;
use crate::params::{Binding, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::{concat, Tensor};

/// Fused bi-temporal features, level for level with the input pyramid.
#[derive(Debug, Clone)]
pub struct FusedPyramid<F: Real> {
    pub levels: [Tensor<F>; 4],
}

/// Fusion output with the internal difference feature exposed for
/// inspection.
#[derive(Debug, Clone)]
pub struct FusionParts<F: Real> {
    pub fused: Tensor<F>,
    pub difference: Tensor<F>,
}

/// One bi-temporal fusion module: conv over the channel concatenation of
/// both temporal features and their difference, back to the level width.
#[derive(Debug, Clone)]
pub struct BiTemporalFusion {
    conv: ConvBlock,
}

impl BiTemporalFusion {
    pub fn new<F: Real>(store: &mut ParamStore<F>, rng: &mut Rng, name: &str, width: usize) -> Self {
        BiTemporalFusion {
            conv: ConvBlock::new(store, rng, name, 3 * width, width, 3, 1),
        }
    }

    /// `concat([x_t1, x_t2, x_t2 - x_t1])` over channels, then the conv
    /// block. Spatial size is preserved; channel width returns to the
    /// input width.
    pub fn fuse<F: Real>(&self, bind: &Binding<F>, x_t1: &Tensor<F>, x_t2: &Tensor<F>) -> Tensor<F> {
        self.fuse_parts(bind, x_t1, x_t2).fused
    }

    pub fn fuse_parts<F: Real>(&self, bind: &Binding<F>, x_t1: &Tensor<F>, x_t2: &Tensor<F>) -> FusionParts<F> {
        assert_eq!(
            x_t1.shape(),
            x_t2.shape(),
            "bi-temporal fusion inputs differ: {:?} vs {:?}",
            x_t1.shape(),
            x_t2.shape()
        );
        let difference = x_t2.sub(x_t1);
        let stacked = concat(&[x_t1, x_t2, &difference], 0);
        FusionParts {
            fused: self.conv.forward(bind, &stacked),
            difference,
        }
    }
}

/// UNet-style decoder: walk the fused pyramid deepest-first, upsample x2,
/// concatenate the next-shallower level, fuse with a conv block; then two
/// more x2 upsamples to full resolution and a 1x1 classifier.
#[derive(Debug, Clone)]
pub struct CdHead {
    ups: Vec<UpsampleBlock>,
    merges: Vec<ConvBlock>,
    raise0: UpsampleBlock,
    raise1: UpsampleBlock,
    classifier_weight: ParamId,
    classifier_bias: ParamId,
    num_classes: usize,
}

impl CdHead {
    pub fn new<F: Real>(store: &mut ParamStore<F>, rng: &mut Rng, cfg: &ModelConfig) -> Self {
        let w = cfg.widths;
        let mut ups = Vec::new();
        let mut merges = Vec::new();
        for i in (0..3).rev() {
            ups.push(UpsampleBlock::new(
                store,
                rng,
                &format!("cd_head.up{}", i + 1),
                w[i + 1],
                w[i],
            ));
            merges.push(ConvBlock::new(
                store,
                rng,
                &format!("cd_head.merge{}", i + 1),
                2 * w[i],
                w[i],
                3,
                1,
            ));
        }
        let raise0 = UpsampleBlock::new(store, rng, "cd_head.raise0", w[0], cfg.head_width);
        let raise1 = UpsampleBlock::new(store, rng, "cd_head.raise1", cfg.head_width, cfg.head_width);
        let classifier_weight = store.add_uniform(
            "cd_head.classifier.weight",
            &[cfg.num_classes, cfg.head_width, 1, 1],
            cfg.head_width,
            rng,
        );
        let classifier_bias = store.add_zeros("cd_head.classifier.bias", &[cfg.num_classes]);
        CdHead {
            ups,
            merges,
            raise0,
            raise1,
            classifier_weight,
            classifier_bias,
            num_classes: cfg.num_classes,
        }
    }

    /// Decodes fused features to per-pixel class logits at the full input
    /// resolution.
    pub fn decode<F: Real>(&self, bind: &Binding<F>, fused: &FusedPyramid<F>) -> Tensor<F> {
        let mut x = fused.levels[3].clone();
        for (step, i) in (0..3).rev().enumerate() {
            let up = self.ups[step].forward(bind, &x);
            let skip = &fused.levels[i];
            assert_eq!(
                up.shape()[1..],
                skip.shape()[1..],
                "cd head upsample landed on {:?} but level {} is {:?}",
                up.shape(),
                i + 1,
                skip.shape()
            );
            x = self.merges[step].forward(bind, &concat(&[&up, skip], 0));
        }
        let x = self.raise0.forward(bind, &x);
        let x = self.raise1.forward(bind, &x);
        x.conv2d(bind.get(self.classifier_weight), Some(bind.get(self.classifier_bias)), 1, 0)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// Mean per-pixel cross-entropy of change logits `[C,H,W]` against a
/// pseudo-label mask; probabilities come from a per-pixel softmax over the
/// class axis.
pub fn detection_loss<F: Real>(logits: &Tensor<F>, pseudo_mask: &MaskBuffer) -> Result<Tensor<F>, ModelError> {
    let shape = logits.shape();
    if shape.len() != 3 {
        return Err(ModelError::InvalidInput(format!(
            "detection loss expects [C,H,W] logits, got {shape:?}"
        )));
    }
    let classes = shape[0];
    if shape[1] != pseudo_mask.height || shape[2] != pseudo_mask.width {
        return Err(ModelError::InvalidInput(format!(
            "logits {}x{} vs mask {}x{}",
            shape[1], shape[2], pseudo_mask.height, pseudo_mask.width
        )));
    }
    let mut labels = Vec::with_capacity(pseudo_mask.data.len());
    for &v in &pseudo_mask.data {
        if (v as usize) >= classes {
            return Err(ModelError::MaskClassOutOfRange {
                value: v,
                classes,
            });
        }
        labels.push(v as usize);
    }
    Ok(logits.cross_entropy_mean_pixels(&labels))
}

/// Per-pixel argmax over the class axis, exported in the dataset's mask
/// convention.
pub fn logits_to_mask<F: Real>(logits: &Tensor<F>) -> MaskBuffer {
    let shape = logits.shape();
    assert_eq!(shape.len(), 3);
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let v = logits.values();
    let mut mask = MaskBuffer::zeros(h, w);
    for p in 0..h * w {
        let mut best = 0usize;
        for ch in 1..c {
            if v[ch * h * w + p] > v[best * h * w + p] {
                best = ch;
            }
        }
        mask.data[p] = best.min(1) as u8;
    }
    mask
}

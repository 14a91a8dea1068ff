//! Synthetic bi-temporal scene data: generation, pseudo-label corruption,
//! and an on-disk layout that stays drop-in compatible with the public
//! LEVIR-CC release (`A/`, `B/`, `label/`, `captions.json`), so real image
//! pairs and externally produced change masks can replace the synthetic
//! ones without code changes.

mod corrupt;
pub mod grammar;
mod io;
mod scene;
mod synth;

pub use corrupt::{corrupt_mask, CorruptionParams, CorruptionPreset};
pub use io::{load_dataset, mask_to_png, write_dataset};
pub use scene::{event_footprint_mask, generate_scene, ChangeEvent, ObjectEvent, ObjectKind, SceneSpec};
pub use synth::{build_dataset, PseudoLabelPolicy, SynthConfig};

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

/// RGB image with values in `[0,1]`, row-major HWC.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbBuffer {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
}

impl RgbBuffer {
    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        RgbBuffer {
            height,
            width,
            pixels: vec![value; height * width * 3],
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.pixels[(y * self.width + x) * 3 + c] = v;
    }
}

/// Binary mask, 0 = unchanged, 1 = changed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskBuffer {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl MaskBuffer {
    pub fn zeros(height: usize, width: usize) -> Self {
        MaskBuffer {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn ones_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v <= 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// One bi-temporal sample: image pair, ground-truth change mask, change
/// pseudo-label, and exactly five reference captions.
#[derive(Debug, Clone)]
pub struct BiTemporalSample {
    pub id: String,
    pub pre_image: RgbBuffer,
    pub post_image: RgbBuffer,
    pub gt_mask: MaskBuffer,
    pub pseudo_mask: MaskBuffer,
    pub captions: Vec<String>,
    pub split: Split,
}

impl BiTemporalSample {
    /// Enforces the structural invariants every consumer relies on.
    pub fn validate(&self) -> Result<(), DataError> {
        let (h, w) = (self.pre_image.height, self.pre_image.width);
        if self.post_image.height != h || self.post_image.width != w {
            return Err(DataError::SizeMismatch {
                id: self.id.clone(),
                detail: format!(
                    "pre {}x{} vs post {}x{}",
                    h, w, self.post_image.height, self.post_image.width
                ),
            });
        }
        if h % 32 != 0 || w % 32 != 0 {
            return Err(DataError::SizeMismatch {
                id: self.id.clone(),
                detail: format!("image size {h}x{w} is not a multiple of 32"),
            });
        }
        for (name, mask) in [("gt", &self.gt_mask), ("pseudo", &self.pseudo_mask)] {
            if mask.height != h || mask.width != w {
                return Err(DataError::SizeMismatch {
                    id: self.id.clone(),
                    detail: format!("{name} mask {}x{} vs image {h}x{w}", mask.height, mask.width),
                });
            }
            if !mask.is_binary() {
                return Err(DataError::SizeMismatch {
                    id: self.id.clone(),
                    detail: format!("{name} mask contains values other than 0 and 1"),
                });
            }
        }
        if self.captions.len() != 5 {
            return Err(DataError::CaptionCount {
                id: self.id.clone(),
                found: self.captions.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing dataset file: {path}")]
    MissingFile { path: PathBuf },
    #[error("failed to decode image {path}: {source}")]
    ImageDecode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("failed to parse {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("sample {id}: expected 5 captions, found {found}")]
    CaptionCount { id: String, found: usize },
    #[error("sample {id}: unknown split value '{split}'")]
    UnknownSplit { id: String, split: String },
    #[error("mask {path} contains value {value}; only 0 and 255 are valid")]
    InvalidMaskValue { path: PathBuf, value: u8 },
    #[error("sample {id}: {detail}")]
    SizeMismatch { id: String, detail: String },
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

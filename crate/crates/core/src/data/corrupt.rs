//! Pseudo-label simulation by corrupting ground-truth masks.
//!
//! Stands in for running a pre-trained change-detection model over the
//! dataset: dilation fakes over-segmentation, erosion under-segmentation,
//! and random flips salt-and-pepper disagreement. With all parameters zero
//! the output equals the input.

use super::{DataError, MaskBuffer};
use crate::rng::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionParams {
    pub dilate_px: usize,
    pub erode_px: usize,
    pub flip_rate: f64,
}

impl CorruptionParams {
    pub fn identity() -> Self {
        CorruptionParams {
            dilate_px: 0,
            erode_px: 0,
            flip_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !(0.0..=1.0).contains(&self.flip_rate) {
            return Err(DataError::InvalidParams(format!(
                "flip_rate {} outside [0, 1]",
                self.flip_rate
            )));
        }
        Ok(())
    }
}

/// Named corruption presets selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionPreset {
    /// Pseudo-labels equal ground truth.
    None,
    /// Slight over-segmentation and sparse flips.
    Light,
    /// Stronger boundary distortion and more flips.
    Heavy,
}

impl CorruptionPreset {
    pub fn params(&self) -> CorruptionParams {
        match self {
            CorruptionPreset::None => CorruptionParams::identity(),
            CorruptionPreset::Light => CorruptionParams {
                dilate_px: 1,
                erode_px: 0,
                flip_rate: 0.005,
            },
            CorruptionPreset::Heavy => CorruptionParams {
                dilate_px: 2,
                erode_px: 1,
                flip_rate: 0.02,
            },
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(CorruptionPreset::None),
            "light" => Some(CorruptionPreset::Light),
            "heavy" => Some(CorruptionPreset::Heavy),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CorruptionPreset::None => "none",
            CorruptionPreset::Light => "light",
            CorruptionPreset::Heavy => "heavy",
        }
    }
}

/// One 3x3 (chebyshev radius 1) morphological step. Pixels outside the
/// mask count as unchanged.
fn morph_step(mask: &MaskBuffer, dilate: bool) -> MaskBuffer {
    let mut out = MaskBuffer::zeros(mask.height, mask.width);
    for y in 0..mask.height {
        for x in 0..mask.width {
            let mut hit = !dilate;
            'scan: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (ny, nx) = (y as i64 + dy, x as i64 + dx);
                    let v = if ny >= 0 && nx >= 0 && (ny as usize) < mask.height && (nx as usize) < mask.width
                    {
                        mask.at(ny as usize, nx as usize)
                    } else {
                        0
                    };
                    if dilate && v == 1 {
                        hit = true;
                        break 'scan;
                    }
                    if !dilate && v == 0 {
                        hit = false;
                        break 'scan;
                    }
                }
            }
            out.set(y, x, hit as u8);
        }
    }
    out
}

/// Deterministic mask corruption: dilate `dilate_px` steps, erode
/// `erode_px` steps, then flip each pixel independently with probability
/// `flip_rate`. Output stays binary.
pub fn corrupt_mask(mask: &MaskBuffer, params: &CorruptionParams, seed: u64) -> Result<MaskBuffer, DataError> {
    params.validate()?;
    debug_assert!(mask.is_binary());
    let mut out = mask.clone();
    for _ in 0..params.dilate_px {
        out = morph_step(&out, true);
    }
    for _ in 0..params.erode_px {
        out = morph_step(&out, false);
    }
    if params.flip_rate > 0.0 {
        let mut rng = Rng::derive(seed, "mask_flip");
        for v in out.data.iter_mut() {
            if rng.f64() < params.flip_rate {
                *v = 1 - *v;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_mask(size: usize, from: usize, to: usize) -> MaskBuffer {
        let mut m = MaskBuffer::zeros(size, size);
        for y in from..to {
            for x in from..to {
                m.set(y, x, 1);
            }
        }
        m
    }

    #[test]
    fn zero_params_are_identity() {
        let m = square_mask(32, 10, 20);
        let out = corrupt_mask(&m, &CorruptionParams::identity(), 123).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn full_flip_inverts_everything() {
        let m = MaskBuffer::zeros(16, 16);
        let out = corrupt_mask(
            &m,
            &CorruptionParams {
                dilate_px: 0,
                erode_px: 0,
                flip_rate: 1.0,
            },
            7,
        )
        .unwrap();
        assert_eq!(out.ones_count(), 16 * 16);
    }

    #[test]
    fn dilation_grows_isolated_square_by_one_ring() {
        // 10x10 square away from borders: one dilation step grows it to
        // 12x12 = 144 pixels.
        let m = square_mask(32, 10, 20);
        assert_eq!(m.ones_count(), 100);
        let out = corrupt_mask(
            &m,
            &CorruptionParams {
                dilate_px: 1,
                erode_px: 0,
                flip_rate: 0.0,
            },
            0,
        )
        .unwrap();
        assert_eq!(out.ones_count(), 144);
    }

    #[test]
    fn erosion_shrinks_back() {
        let m = square_mask(32, 10, 20);
        let out = corrupt_mask(
            &m,
            &CorruptionParams {
                dilate_px: 0,
                erode_px: 1,
                flip_rate: 0.0,
            },
            0,
        )
        .unwrap();
        assert_eq!(out.ones_count(), 64);
    }

    #[test]
    fn corruption_is_deterministic_per_seed() {
        let m = square_mask(32, 4, 28);
        let params = CorruptionParams {
            dilate_px: 1,
            erode_px: 1,
            flip_rate: 0.1,
        };
        assert_eq!(
            corrupt_mask(&m, &params, 42).unwrap(),
            corrupt_mask(&m, &params, 42).unwrap()
        );
        assert_ne!(
            corrupt_mask(&m, &params, 42).unwrap(),
            corrupt_mask(&m, &params, 43).unwrap()
        );
    }

    #[test]
    fn invalid_flip_rate_rejected() {
        let m = MaskBuffer::zeros(8, 8);
        let err = corrupt_mask(
            &m,
            &CorruptionParams {
                dilate_px: 0,
                erode_px: 0,
                flip_rate: 1.5,
            },
            0,
        )
        .unwrap_err();
        assert!(matches!(err, DataError::InvalidParams(_)));
    }
}

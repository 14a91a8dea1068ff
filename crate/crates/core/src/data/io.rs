//! On-disk dataset layout.
//!
//! ```text
//! root/
//!   A/<id>.png        pre-change image (RGB)
//!   B/<id>.png        post-change image (RGB)
//!   label/<id>.png    change pseudo-label (single channel, 0 or 255)
//!   gt/<id>.png       ground-truth change mask (synthetic data only)
//!   captions.json     {"images":[{"id","split","sentences":[{"raw"}x5]}]}
//! ```
//!
//! `A/`, `B/`, `label/`, and `captions.json` mirror the public LEVIR-CC
//! layout, so externally produced pseudo-labels (for example from a
//! pre-trained detection model) can be dropped into `label/` unchanged.
//! `gt/` is an extension for synthetic data; when absent, the ground-truth
//! mask falls back to the pseudo-label.

use super::{BiTemporalSample, DataError, MaskBuffer, RgbBuffer, Split};
use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct CaptionsFile {
    images: Vec<CaptionRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CaptionRecord {
    id: String,
    split: String,
    sentences: Vec<Sentence>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sentence {
    raw: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn rgb_to_png(image: &RgbBuffer, path: &Path) -> Result<(), DataError> {
    let mut img = RgbImage::new(image.width as u32, image.height as u32);
    for y in 0..image.height {
        for x in 0..image.width {
            let px = image::Rgb([
                quantize(image.at(y, x, 0)),
                quantize(image.at(y, x, 1)),
                quantize(image.at(y, x, 2)),
            ]);
            img.put_pixel(x as u32, y as u32, px);
        }
    }
    img.save(path).map_err(|source| DataError::ImageDecode {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a mask as a single-channel PNG with 0 = unchanged, 255 = changed.
pub fn mask_to_png(mask: &MaskBuffer, path: &Path) -> Result<(), DataError> {
    let mut img = GrayImage::new(mask.width as u32, mask.height as u32);
    for y in 0..mask.height {
        for x in 0..mask.width {
            img.put_pixel(x as u32, y as u32, image::Luma([mask.at(y, x) * 255]));
        }
    }
    img.save(path).map_err(|source| DataError::ImageDecode {
        path: path.to_path_buf(),
        source,
    })
}

fn png_to_rgb(path: &Path) -> Result<RgbBuffer, DataError> {
    if !path.exists() {
        return Err(DataError::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let img = image::open(path)
        .map_err(|source| DataError::ImageDecode {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (width, height) = (img.width() as usize, img.height() as usize);
    let mut out = RgbBuffer::filled(height, width, 0.0);
    for y in 0..height {
        for x in 0..width {
            let px = img.get_pixel(x as u32, y as u32);
            for c in 0..3 {
                out.set(y, x, c, px[c] as f32 / 255.0);
            }
        }
    }
    Ok(out)
}

fn png_to_mask(path: &Path) -> Result<MaskBuffer, DataError> {
    if !path.exists() {
        return Err(DataError::MissingFile {
            path: path.to_path_buf(),
        });
    }
    let img = image::open(path)
        .map_err(|source| DataError::ImageDecode {
            path: path.to_path_buf(),
            source,
        })?
        .to_luma8();
    let (width, height) = (img.width() as usize, img.height() as usize);
    let mut out = MaskBuffer::zeros(height, width);
    for y in 0..height {
        for x in 0..width {
            let v = img.get_pixel(x as u32, y as u32)[0];
            let bit = match v {
                0 => 0,
                255 => 1,
                other => {
                    return Err(DataError::InvalidMaskValue {
                        path: path.to_path_buf(),
                        value: other,
                    })
                }
            };
            out.set(y, x, bit);
        }
    }
    Ok(out)
}

/// Writes every sample plus `captions.json`. Images are quantized to
/// 8 bits; everything else round-trips exactly.
pub fn write_dataset(samples: &[BiTemporalSample], root: &Path) -> Result<(), DataError> {
    for sub in ["A", "B", "label", "gt"] {
        let dir = root.join(sub);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let mut records = Vec::with_capacity(samples.len());
    for sample in samples {
        sample.validate()?;
        let file = format!("{}.png", sample.id);
        rgb_to_png(&sample.pre_image, &root.join("A").join(&file))?;
        rgb_to_png(&sample.post_image, &root.join("B").join(&file))?;
        mask_to_png(&sample.pseudo_mask, &root.join("label").join(&file))?;
        mask_to_png(&sample.gt_mask, &root.join("gt").join(&file))?;
        records.push(CaptionRecord {
            id: sample.id.clone(),
            split: sample.split.as_str().to_string(),
            sentences: sample
                .captions
                .iter()
                .map(|raw| Sentence { raw: raw.clone() })
                .collect(),
        });
    }
    let captions_path = root.join("captions.json");
    let json = serde_json::to_string_pretty(&CaptionsFile { images: records }).expect("serializable");
    fs::write(&captions_path, json).map_err(io_err(&captions_path))?;
    Ok(())
}

/// Loads a dataset directory, validating every invariant on the way in.
pub fn load_dataset(root: &Path) -> Result<Vec<BiTemporalSample>, DataError> {
    let captions_path = root.join("captions.json");
    if !captions_path.exists() {
        return Err(DataError::MissingFile {
            path: captions_path,
        });
    }
    let text = fs::read_to_string(&captions_path).map_err(io_err(&captions_path))?;
    let parsed: CaptionsFile = serde_json::from_str(&text).map_err(|source| DataError::Json {
        path: captions_path.clone(),
        source,
    })?;
    let has_gt_dir = root.join("gt").is_dir();
    let mut samples = Vec::with_capacity(parsed.images.len());
    for record in parsed.images {
        if record.sentences.len() != 5 {
            return Err(DataError::CaptionCount {
                id: record.id,
                found: record.sentences.len(),
            });
        }
        let split = Split::parse(&record.split).ok_or_else(|| DataError::UnknownSplit {
            id: record.id.clone(),
            split: record.split.clone(),
        })?;
        let file = format!("{}.png", record.id);
        let pre_image = png_to_rgb(&root.join("A").join(&file))?;
        let post_image = png_to_rgb(&root.join("B").join(&file))?;
        let pseudo_mask = png_to_mask(&root.join("label").join(&file))?;
        let gt_mask = if has_gt_dir {
            png_to_mask(&root.join("gt").join(&file))?
        } else {
            pseudo_mask.clone()
        };
        let sample = BiTemporalSample {
            id: record.id,
            pre_image,
            post_image,
            gt_mask,
            pseudo_mask,
            captions: record.sentences.into_iter().map(|s| s.raw).collect(),
            split,
        };
        sample.validate()?;
        samples.push(sample);
    }
    Ok(samples)
}

//! Browser bindings for the interactive demo page: synthesize a
//! bi-temporal scene pair, corrupt its ground-truth mask into a
//! pseudo-label, and score candidate captions — all in-page via
//! wasm-bindgen. Build with `wasm-pack build --target web crates/wasm-demo`.

use changecap::data::{
    corrupt_mask, generate_scene, grammar, ChangeEvent, CorruptionParams, MaskBuffer, ObjectEvent,
    ObjectKind, RgbBuffer, SceneSpec,
};
use changecap::metrics::{score_corpus, EvalPair};
use changecap::rng::Rng;
use wasm_bindgen::prelude::*;

fn rgba_bytes(image: &RgbBuffer) -> Vec<u8> {
    let mut out = Vec::with_capacity(image.height * image.width * 4);
    for y in 0..image.height {
        for x in 0..image.width {
            for c in 0..3 {
                out.push((image.at(y, x, c).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
            out.push(255);
        }
    }
    out
}

fn mask_rgba(mask: &MaskBuffer, tint: [u8; 3]) -> Vec<u8> {
    let mut out = Vec::with_capacity(mask.height * mask.width * 4);
    for &v in &mask.data {
        if v == 1 {
            out.extend_from_slice(&tint);
        } else {
            out.extend_from_slice(&[20, 20, 24]);
        }
        out.push(255);
    }
    out
}

/// One rendered scene pair, exposed to JS as flat RGBA buffers.
#[wasm_bindgen]
pub struct ScenePair {
    size: usize,
    pre: Vec<u8>,
    post: Vec<u8>,
    gt: Vec<u8>,
    pseudo: Vec<u8>,
    captions: Vec<String>,
    changed_pixels: usize,
    pseudo_pixels: usize,
}

#[wasm_bindgen]
impl ScenePair {
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pre_rgba(&self) -> Vec<u8> {
        self.pre.clone()
    }

    pub fn post_rgba(&self) -> Vec<u8> {
        self.post.clone()
    }

    pub fn gt_rgba(&self) -> Vec<u8> {
        self.gt.clone()
    }

    pub fn pseudo_rgba(&self) -> Vec<u8> {
        self.pseudo.clone()
    }

    /// Reference captions as a JSON string array.
    pub fn captions_json(&self) -> String {
        serde_json::to_string(&self.captions).expect("serializable")
    }

    #[wasm_bindgen(getter)]
    pub fn changed_pixels(&self) -> usize {
        self.changed_pixels
    }

    #[wasm_bindgen(getter)]
    pub fn pseudo_pixels(&self) -> usize {
        self.pseudo_pixels
    }
}

const KINDS: [ObjectKind; 3] = [ObjectKind::Building, ObjectKind::Road, ObjectKind::Vegetation];

/// Synthesizes a deterministic scene pair. `n_events` change events are
/// placed pseudo-randomly from `seed`; the pseudo-label is the
/// ground-truth building footprint corrupted by the given dilation,
/// erosion, and flip-rate knobs.
#[wasm_bindgen]
pub fn synthesize_pair(
    seed: u64,
    n_events: usize,
    illumination: f64,
    noise_sigma: f64,
    dilate_px: usize,
    erode_px: usize,
    flip_rate: f64,
    label_all_kinds: bool,
) -> Result<ScenePair, JsError> {
    let mut rng = Rng::derive(seed, "demo_scene");
    let mut objects: Vec<ObjectEvent> = Vec::new();
    for _ in 0..n_events.min(4) {
        for _attempt in 0..100 {
            let kind = KINDS[rng.below(3)];
            let event = if rng.below(2) == 0 {
                ChangeEvent::Appear
            } else {
                ChangeEvent::Disappear
            };
            let (rows, cols) = match kind {
                ObjectKind::Road => (1 + rng.below(2), 3 + rng.below(3)),
                _ => (2 + rng.below(2), 2 + rng.below(2)),
            };
            let candidate = ObjectEvent {
                kind,
                event,
                row: rng.below(8 - rows + 1),
                col: rng.below(8 - cols + 1),
                rows,
                cols,
            };
            let overlaps = objects.iter().any(|o| {
                o.row < candidate.row + candidate.rows
                    && candidate.row < o.row + o.rows
                    && o.col < candidate.col + candidate.cols
                    && candidate.col < o.col + o.cols
            });
            if !overlaps {
                objects.push(candidate);
                break;
            }
        }
    }
    let spec = SceneSpec {
        image_size: 64,
        grid_size: 8,
        object_events: objects,
        illumination_delta: illumination.clamp(-0.3, 0.3),
        noise_sigma: noise_sigma.max(0.0),
    };
    let sample = generate_scene(&spec, seed).map_err(|e| JsError::new(&e.to_string()))?;
    let policy_mask = if label_all_kinds {
        sample.gt_mask.clone()
    } else {
        sample.pseudo_mask.clone()
    };
    let params = CorruptionParams {
        dilate_px,
        erode_px,
        flip_rate: flip_rate.clamp(0.0, 1.0),
    };
    let pseudo = corrupt_mask(&policy_mask, &params, seed ^ 0x5eed)
        .map_err(|e| JsError::new(&e.to_string()))?;
    Ok(ScenePair {
        size: spec.image_size,
        pre: rgba_bytes(&sample.pre_image),
        post: rgba_bytes(&sample.post_image),
        gt: mask_rgba(&sample.gt_mask, [240, 80, 70]),
        pseudo: mask_rgba(&pseudo, [90, 170, 250]),
        changed_pixels: sample.gt_mask.ones_count(),
        pseudo_pixels: pseudo.ones_count(),
        captions: sample.captions.clone(),
    })
}

/// Scores one candidate caption against up to five references; returns
/// the full metric report as JSON.
#[wasm_bindgen]
pub fn score_caption(candidate: &str, references_json: &str) -> Result<String, JsError> {
    let references: Vec<String> =
        serde_json::from_str(references_json).map_err(|e| JsError::new(&e.to_string()))?;
    if references.is_empty() {
        return Err(JsError::new("at least one reference caption is required"));
    }
    let pair = EvalPair::from_raw(candidate, &references);
    let report = score_corpus(std::slice::from_ref(&pair));
    Ok(serde_json::to_string(&report).expect("serializable"))
}

/// The demo page offers these as candidate templates.
#[wasm_bindgen]
pub fn no_change_templates_json() -> String {
    serde_json::to_string(&grammar::NO_CHANGE_TEMPLATES).expect("serializable")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthesize_pair_is_deterministic_and_sized() {
        let a = synthesize_pair(9, 2, 0.05, 0.01, 1, 0, 0.01, false).unwrap();
        let b = synthesize_pair(9, 2, 0.05, 0.01, 1, 0, 0.01, false).unwrap();
        assert_eq!(a.size(), 64);
        assert_eq!(a.pre_rgba(), b.pre_rgba());
        assert_eq!(a.pseudo_rgba(), b.pseudo_rgba());
        assert_eq!(a.pre_rgba().len(), 64 * 64 * 4);
        let captions: Vec<String> = serde_json::from_str(&a.captions_json()).unwrap();
        assert_eq!(captions.len(), 5);
    }

    #[test]
    fn zero_events_scene_has_empty_mask() {
        let pair = synthesize_pair(4, 0, 0.0, 0.0, 0, 0, 0.0, false).unwrap();
        assert_eq!(pair.changed_pixels, 0);
    }

    #[test]
    fn score_caption_round_trips_json() {
        let refs = serde_json::to_string(&["a building appears at the top of the scene"; 5]).unwrap();
        let report = score_caption("a building appears at the top of the scene", &refs).unwrap();
        let parsed: changecap::metrics::MetricReport = serde_json::from_str(&report).unwrap();
        assert!((parsed.bleu4 - 100.0).abs() < 1e-9);
    }
}

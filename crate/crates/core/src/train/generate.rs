//! Caption generation on a frozen model: greedy decoding and a small beam
//! search. Neither applies length normalization, so beam(1) is exactly
//! greedy, ties included (both prefer the lowest token id).

use crate::data::MaskBuffer;
use crate::model::vocab::{END, START};
use crate::model::{logits_to_mask, ChangeCaptionModel, ModelError};
use crate::num::Real;
use crate::params::Binding;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeStrategy {
    Greedy,
    /// Beam width in 1..=5.
    Beam(usize),
}

#[derive(Debug, Clone)]
pub struct GeneratedCaption {
    /// Full token path including `<start>` and, if reached, `<end>`.
    pub tokens: Vec<u32>,
    pub text: String,
    /// Predicted change mask (full mode only).
    pub mask: Option<MaskBuffer>,
}

fn last_row_log_probs<F: Real>(logits: &Tensor<F>) -> Vec<f64> {
    let shape = logits.shape();
    let (rows, vocab) = (shape[0], shape[1]);
    let v = logits.values();
    let row = &v[(rows - 1) * vocab..rows * vocab];
    let mx = row.iter().fold(f64::NEG_INFINITY, |acc, &x| acc.max(x.to_f64()));
    let sum: f64 = row.iter().map(|&x| (x.to_f64() - mx).exp()).sum();
    let lse = mx + sum.ln();
    row.iter().map(|&x| x.to_f64() - lse).collect()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Generates a caption for an image pair. The pair is encoded once; the
/// decoder is re-run per emitted token. Generation always terminates:
/// either `<end>` is produced or the length cap cuts the sequence.
pub fn generate_caption<F: Real>(
    model: &ChangeCaptionModel<F>,
    bind: &Binding<F>,
    pre: &Tensor<F>,
    post: &Tensor<F>,
    strategy: DecodeStrategy,
) -> Result<GeneratedCaption, ModelError> {
    let encoded = model.encode_pair(bind, pre, post)?;
    let mask = encoded.cd_logits.as_ref().map(logits_to_mask);
    let tokens = decode_visual(model, bind, &encoded.visual, strategy)?;
    let text = model.vocab.decode(&tokens);
    Ok(GeneratedCaption { tokens, text, mask })
}

/// Decodes from an already-encoded visual embedding; lets callers that
/// also need the encoder outputs avoid a second siamese pass.
pub fn decode_visual<F: Real>(
    model: &ChangeCaptionModel<F>,
    bind: &Binding<F>,
    visual: &Tensor<F>,
    strategy: DecodeStrategy,
) -> Result<Vec<u32>, ModelError> {
    let max_len = model.decoder().max_len();
    match strategy {
        DecodeStrategy::Greedy => greedy(model, bind, visual, max_len),
        DecodeStrategy::Beam(k) => {
            if !(1..=5).contains(&k) {
                return Err(ModelError::InvalidInput(format!(
                    "beam width {k} outside 1..=5"
                )));
            }
            beam(model, bind, visual, max_len, k)
        }
    }
}

fn greedy<F: Real>(
    model: &ChangeCaptionModel<F>,
    bind: &Binding<F>,
    visual: &Tensor<F>,
    max_len: usize,
) -> Result<Vec<u32>, ModelError> {
    let mut tokens = vec![START];
    while tokens.len() < max_len {
        let logits = model.decode_tokens(bind, visual, &tokens)?;
        let next = argmax(&last_row_log_probs(&logits)) as u32;
        tokens.push(next);
        if next == END {
            break;
        }
    }
    Ok(tokens)
}

#[derive(Clone)]
struct BeamItem {
    tokens: Vec<u32>,
    log_prob: f64,
    finished: bool,
}

fn beam<F: Real>(
    model: &ChangeCaptionModel<F>,
    bind: &Binding<F>,
    visual: &Tensor<F>,
    max_len: usize,
    width: usize,
) -> Result<Vec<u32>, ModelError> {
    let mut items = vec![BeamItem {
        tokens: vec![START],
        log_prob: 0.0,
        finished: false,
    }];
    while items.iter().any(|b| !b.finished) && items.iter().all(|b| b.tokens.len() < max_len || b.finished) {
        let mut candidates: Vec<BeamItem> = Vec::new();
        for item in &items {
            if item.finished {
                candidates.push(item.clone());
                continue;
            }
            let logits = model.decode_tokens(bind, visual, &item.tokens)?;
            for (id, lp) in last_row_log_probs(&logits).into_iter().enumerate() {
                let mut tokens = item.tokens.clone();
                tokens.push(id as u32);
                candidates.push(BeamItem {
                    tokens,
                    log_prob: item.log_prob + lp,
                    finished: id as u32 == END,
                });
            }
        }
        // Stable sort keeps (parent order, token id) as the tie break, so
        // equal-probability paths resolve exactly like greedy argmax.
        candidates.sort_by(|a, b| b.log_prob.partial_cmp(&a.log_prob).unwrap_or(std::cmp::Ordering::Equal));
        candidates.truncate(width);
        items = candidates;
    }
    let best = items
        .into_iter()
        .max_by(|a, b| a.log_prob.partial_cmp(&b.log_prob).unwrap_or(std::cmp::Ordering::Equal))
        .expect("beam never empties");
    Ok(best.tokens)
}

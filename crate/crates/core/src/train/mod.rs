//! Joint training of both branches, evaluation over dataset splits, and
//! experiment records.

mod adam;
mod generate;

pub use adam::Adam;
pub use generate::{decode_visual, generate_caption, DecodeStrategy, GeneratedCaption};

use crate::checkpoint::CheckpointMeta;
use crate::data::{BiTemporalSample, MaskBuffer, Split};
use crate::metrics::{score_corpus, EvalPair, MetricReport};
use crate::model::vocab::{END, START};
use crate::model::{
    caption_loss, detection_loss, image_to_tensor, logits_to_mask, ChangeCaptionModel, Mode,
    ModelConfig, ModelError, Vocabulary,
};
use crate::num::Real;
use crate::params::ParamStore;
use crate::rng::Rng;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// (w_det, w_cap); the detection weight is ignored in baseline mode.
    pub loss_weights: (f64, f64),
    /// Fixed reference-caption index, or `None` to rotate through all five
    /// across epochs.
    pub caption_index: Option<usize>,
    /// Validation cadence in epochs (the final epoch always evaluates).
    pub eval_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 8,
            epochs: 10,
            seed: 0,
            loss_weights: (1.0, 1.0),
            caption_index: None,
            eval_every: 1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        // learning_rate = 0 is allowed as an explicit null update.
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(TrainError::InvalidConfig(format!(
                "learning_rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.eval_every == 0 {
            return Err(TrainError::InvalidConfig(
                "batch_size, epochs, and eval_every must be >= 1".into(),
            ));
        }
        if let Some(i) = self.caption_index {
            if i >= 5 {
                return Err(TrainError::InvalidConfig(format!(
                    "caption_index {i} out of range 0..5"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("train split is empty")]
    EmptyTrainSplit,
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Weighted total loss; the detection term exists only in full mode.
pub fn total_loss<F: Real>(l_det: Option<&Tensor<F>>, l_cap: &Tensor<F>, weights: (f64, f64)) -> Tensor<F> {
    let cap_term = l_cap.scale(F::from_f64(weights.1));
    match l_det {
        Some(det) => det.scale(F::from_f64(weights.0)).add(&cap_term),
        None => cap_term,
    }
}

/// Validation metrics plus branch diagnostics for one split.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalSummary {
    pub bleu4: f64,
    pub meteor: f64,
    pub rouge_l: f64,
    pub cider: f64,
    pub s_star_m: f64,
    pub token_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pixel_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_iou: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_det: Option<f64>,
    pub l_cap: f64,
    pub l_total: f64,
    /// Teacher-forced accuracy accumulated over the epoch's training
    /// batches.
    pub token_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pixel_accuracy: Option<f64>,
    #[serde(rename = "val_metrics", skip_serializing_if = "Option::is_none")]
    pub val: Option<EvalSummary>,
}

pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    /// Parameters of the best validation epoch (last epoch when no
    /// validation split exists).
    pub store: ParamStore<f32>,
    pub meta: CheckpointMeta,
    pub best_epoch: usize,
    pub vocab: Vocabulary,
    pub config: ModelConfig,
}

/// Token streams for teacher forcing: input `[<start>, w1..wk]`, target
/// `[w1..wk, <end>]`, truncated to the decoder length cap.
pub fn teacher_tokens(vocab: &Vocabulary, caption: &str, max_len: usize) -> (Vec<u32>, Vec<u32>) {
    let mut ids = vocab.encode(caption);
    ids.truncate(max_len - 1);
    let mut input = Vec::with_capacity(ids.len() + 1);
    input.push(START);
    input.extend_from_slice(&ids);
    let mut target = ids;
    target.push(END);
    (input, target)
}

fn count_token_matches<F: Real>(logits: &Tensor<F>, targets: &[u32]) -> (usize, usize) {
    let shape = logits.shape();
    let (rows, vocab) = (shape[0], shape[1]);
    let v = logits.values();
    let mut hits = 0;
    let mut total = 0;
    for (row, &target) in targets.iter().enumerate().take(rows) {
        if target == crate::model::vocab::PAD {
            continue;
        }
        let slice = &v[row * vocab..(row + 1) * vocab];
        let mut best = 0;
        for (i, &x) in slice.iter().enumerate() {
            if x > slice[best] {
                best = i;
            }
        }
        total += 1;
        if best as u32 == target {
            hits += 1;
        }
    }
    (hits, total)
}

fn mask_agreement(predicted: &MaskBuffer, reference: &MaskBuffer) -> (usize, usize) {
    let hits = predicted
        .data
        .iter()
        .zip(&reference.data)
        .filter(|(a, b)| a == b)
        .count();
    (hits, reference.data.len())
}

fn mask_iou(predicted: &MaskBuffer, reference: &MaskBuffer) -> f64 {
    let mut intersection = 0usize;
    let mut union = 0usize;
    for (&p, &r) in predicted.data.iter().zip(&reference.data) {
        if p == 1 && r == 1 {
            intersection += 1;
        }
        if p == 1 || r == 1 {
            union += 1;
        }
    }
    if union == 0 {
        1.0
    } else {
        intersection as f64 / union as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Prediction {
    pub id: String,
    pub caption: String,
}

pub struct Evaluation {
    pub report: MetricReport,
    pub token_accuracy: f64,
    pub pixel_accuracy: Option<f64>,
    pub mean_iou: Option<f64>,
    pub predictions: Vec<Prediction>,
}

impl Evaluation {
    pub fn summary(&self) -> EvalSummary {
        EvalSummary {
            bleu4: self.report.bleu4,
            meteor: self.report.meteor,
            rouge_l: self.report.rouge_l,
            cider: self.report.cider,
            s_star_m: self.report.s_star_m,
            token_accuracy: self.token_accuracy,
            pixel_accuracy: self.pixel_accuracy,
            mean_iou: self.mean_iou,
        }
    }
}

/// Greedy-decodes every sample, scores the corpus, and reports
/// teacher-forced token accuracy (against `caption_index`, or caption 0
/// when rotating) plus detection diagnostics in full mode.
pub fn evaluate<F: Real>(
    model: &ChangeCaptionModel<F>,
    samples: &[&BiTemporalSample],
    caption_index: Option<usize>,
) -> Result<Evaluation, ModelError> {
    assert!(!samples.is_empty(), "cannot evaluate an empty split");
    let bind = model.bind(false);
    let max_len = model.decoder().max_len();
    let mut pairs = Vec::with_capacity(samples.len());
    let mut predictions = Vec::with_capacity(samples.len());
    let (mut token_hits, mut token_total) = (0usize, 0usize);
    let (mut pixel_hits, mut pixel_total) = (0usize, 0usize);
    let mut iou_sum = 0.0f64;
    let mut has_cd = false;
    for sample in samples {
        let pre = image_to_tensor::<F>(&sample.pre_image);
        let post = image_to_tensor::<F>(&sample.post_image);
        let encoded = model.encode_pair(&bind, &pre, &post)?;
        let tokens = decode_visual(model, &bind, &encoded.visual, DecodeStrategy::Greedy)?;
        let text = model.vocab.decode(&tokens);
        pairs.push(EvalPair::from_raw(&text, &sample.captions));
        predictions.push(Prediction {
            id: sample.id.clone(),
            caption: text,
        });
        if let Some(logits) = &encoded.cd_logits {
            has_cd = true;
            let mask = logits_to_mask(logits);
            let (hits, total) = mask_agreement(&mask, &sample.pseudo_mask);
            pixel_hits += hits;
            pixel_total += total;
            iou_sum += mask_iou(&mask, &sample.gt_mask);
        }
        let caption = &sample.captions[caption_index.unwrap_or(0).min(sample.captions.len() - 1)];
        let (input, target) = teacher_tokens(&model.vocab, caption, max_len);
        let logits = model.decode_tokens(&bind, &encoded.visual, &input)?;
        let (hits, total) = count_token_matches(&logits, &target);
        token_hits += hits;
        token_total += total;
    }
    let report = score_corpus(&pairs);
    Ok(Evaluation {
        report,
        token_accuracy: token_hits as f64 / token_total.max(1) as f64,
        pixel_accuracy: has_cd.then(|| pixel_hits as f64 / pixel_total.max(1) as f64),
        mean_iou: has_cd.then(|| iou_sum / samples.len() as f64),
        predictions,
    })
}

/// Trains on the dataset's train split, validating on the val split when
/// present. Deterministic for a fixed config: initialization, shuffling,
/// and caption rotation all derive from `config.seed`. Returns the
/// best-validation-composite parameters (last epoch without validation).
pub fn train(
    dataset: &[BiTemporalSample],
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    model_config.validate()?;
    let train_set: Vec<&BiTemporalSample> = dataset.iter().filter(|s| s.split == Split::Train).collect();
    let val_set: Vec<&BiTemporalSample> = dataset.iter().filter(|s| s.split == Split::Val).collect();
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainSplit);
    }
    let vocab = Vocabulary::from_corpus(
        train_set
            .iter()
            .flat_map(|s| s.captions.iter().map(|c| c.as_str())),
    );
    let mut model: ChangeCaptionModel<f32> =
        ChangeCaptionModel::new(model_config.clone(), vocab.clone(), config.seed)?;
    let full_mode = model_config.mode == Mode::Full;
    let mut optimizer = Adam::new(
        &model.store,
        config.learning_rate,
        config.beta1,
        config.beta2,
        config.epsilon,
    );
    let max_len = model.decoder().max_len();

    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ParamStore<f32>)> = None;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        Rng::derive(config.seed, &format!("shuffle_epoch{epoch}")).shuffle(&mut order);

        let mut det_sum = 0.0f64;
        let mut cap_sum = 0.0f64;
        let mut total_sum = 0.0f64;
        let mut sample_count = 0usize;
        let (mut token_hits, mut token_total) = (0usize, 0usize);
        let (mut pixel_hits, mut pixel_total) = (0usize, 0usize);

        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let bind = model.bind(true);
            let mut det_terms: Vec<Tensor<f32>> = Vec::new();
            let mut cap_terms: Vec<Tensor<f32>> = Vec::new();
            for &idx in batch {
                let sample = train_set[idx];
                let pre = image_to_tensor::<f32>(&sample.pre_image);
                let post = image_to_tensor::<f32>(&sample.post_image);
                let encoded = model.encode_pair(&bind, &pre, &post)?;
                if let Some(logits) = &encoded.cd_logits {
                    det_terms.push(detection_loss(logits, &sample.pseudo_mask)?);
                    let predicted = logits_to_mask(logits);
                    let (hits, total) = mask_agreement(&predicted, &sample.pseudo_mask);
                    pixel_hits += hits;
                    pixel_total += total;
                }
                let caption_idx = config.caption_index.unwrap_or((epoch + idx) % 5);
                let caption = &sample.captions[caption_idx];
                let (input, target) = teacher_tokens(&model.vocab, caption, max_len);
                let logits = model.decode_tokens(&bind, &encoded.visual, &input)?;
                let (hits, total) = count_token_matches(&logits, &target);
                token_hits += hits;
                token_total += total;
                cap_terms.push(caption_loss(&logits, &target)?);
            }
            let inv = 1.0 / batch.len() as f32;
            let cap_mean = sum_tensors(&cap_terms).scale(inv);
            let det_mean = if full_mode {
                Some(sum_tensors(&det_terms).scale(inv))
            } else {
                None
            };
            let loss = total_loss(det_mean.as_ref(), &cap_mean, config.loss_weights);
            let loss_value = loss.item() as f64;
            if !loss_value.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    batch: batch_idx,
                    loss: loss_value,
                });
            }
            loss.backward();
            optimizer.step(&mut model.store, &bind);

            sample_count += batch.len();
            cap_sum += cap_mean.item() as f64 * batch.len() as f64;
            if let Some(det) = &det_mean {
                det_sum += det.item() as f64 * batch.len() as f64;
            }
            total_sum += loss_value * batch.len() as f64;
        }

        let n = sample_count as f64;
        let mut record = EpochRecord {
            epoch,
            l_det: full_mode.then_some(det_sum / n),
            l_cap: cap_sum / n,
            l_total: total_sum / n,
            token_accuracy: token_hits as f64 / token_total.max(1) as f64,
            pixel_accuracy: (pixel_total > 0).then(|| pixel_hits as f64 / pixel_total as f64),
            val: None,
        };

        let is_last = epoch + 1 == config.epochs;
        if !val_set.is_empty() && (epoch % config.eval_every == config.eval_every - 1 || is_last) {
            let evaluation = evaluate(&model, &val_set, config.caption_index)?;
            let summary = evaluation.summary();
            let better = best
                .as_ref()
                .map(|(score, _, _)| summary.s_star_m > *score)
                .unwrap_or(true);
            if better {
                best = Some((summary.s_star_m, epoch, model.store.clone()));
            }
            record.val = Some(summary);
        }
        records.push(record);
    }

    let (best_epoch, store) = match best {
        Some((_, epoch, store)) => (epoch, store),
        None => (config.epochs - 1, model.store.clone()),
    };
    let meta = CheckpointMeta {
        model: model_config.clone(),
        vocab_words: vocab.words().to_vec(),
        best_epoch: Some(best_epoch),
    };
    Ok(TrainOutcome {
        records,
        store,
        meta,
        best_epoch,
        vocab,
        config: model_config.clone(),
    })
}

fn sum_tensors(terms: &[Tensor<f32>]) -> Tensor<f32> {
    assert!(!terms.is_empty());
    let mut acc = terms[0].clone();
    for t in &terms[1..] {
        acc = acc.add(t);
    }
    acc
}

//! Corpus-level caption evaluation: BLEU-1..4, ROUGE-L, METEOR-lite,
//! CIDEr, and their arithmetic-mean composite.
//!
//! All reported values are on the x100 scale (CIDEr can reach 1000 under
//! its x10 convention). Every metric reduces over references with
//! order-insensitive operations, so reference permutations never change a
//! score.

mod bleu;
mod cider;
mod meteor;
pub mod reference;
mod rouge;
pub mod tokenize;

pub use bleu::bleu_corpus;
pub use cider::{cider, CiderOutcome};
pub use meteor::meteor_lite;
pub use rouge::rouge_l;

use serde::{Deserialize, Serialize};

/// One scored sample: a tokenized candidate against its reference set.
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl EvalPair {
    pub fn from_raw(candidate: &str, references: &[String]) -> Self {
        EvalPair {
            candidate: tokenize::tokenize(candidate),
            references: references.iter().map(|r| tokenize::tokenize(r)).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricReport {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub meteor: f64,
    pub rouge_l: f64,
    pub cider: f64,
    pub s_star_m: f64,
    /// Set when the corpus had a single pair and CIDEr fell back to
    /// smoothed document frequencies.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub cider_idf_smoothed: bool,
}

/// Composite caption score: the arithmetic mean of BLEU-4, METEOR,
/// ROUGE-L, and CIDEr on their x100 scales.
pub fn s_star_m(bleu4: f64, meteor: f64, rouge_l: f64, cider: f64) -> f64 {
    (bleu4 + meteor + rouge_l + cider) / 4.0
}

/// Scores a whole corpus. BLEU and CIDEr are corpus-level; ROUGE-L and
/// METEOR-lite average per-pair scores.
pub fn score_corpus(pairs: &[EvalPair]) -> MetricReport {
    assert!(!pairs.is_empty(), "cannot score an empty corpus");
    let bleu = bleu_corpus(pairs, 4, false);
    let rouge = pairs.iter().map(rouge_l).sum::<f64>() / pairs.len() as f64;
    let meteor = pairs.iter().map(meteor_lite).sum::<f64>() / pairs.len() as f64;
    let cider_outcome = cider(pairs);
    let composite = s_star_m(bleu[3], meteor, rouge, cider_outcome.score);
    MetricReport {
        bleu1: bleu[0],
        bleu2: bleu[1],
        bleu3: bleu[2],
        bleu4: bleu[3],
        meteor,
        rouge_l: rouge,
        cider: cider_outcome.score,
        s_star_m: composite,
        cider_idf_smoothed: cider_outcome.idf_smoothed,
    }
}

impl MetricReport {
    /// Fixed-width table in the conventional benchmark column order.
    pub fn render_table(&self, label: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:>7} {:>7} {:>7} {:>7} {:>7} {:>8} {:>8} {:>7}\n",
            "Method", "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "METEOR", "ROUGE_L", "CIDEr", "S*_m"
        ));
        out.push_str(&format!(
            "{:<24} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>8.2} {:>8.2} {:>7.2}\n",
            label,
            self.bleu1,
            self.bleu2,
            self.bleu3,
            self.bleu4,
            self.meteor,
            self.rouge_l,
            self.cider,
            self.s_star_m
        ));
        out
    }
}

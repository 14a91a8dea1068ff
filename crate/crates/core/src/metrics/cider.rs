//! CIDEr: consensus-based caption evaluation via TF-IDF n-gram vectors.
//!
//! Canonical constants: n = 1..4, length Gaussian sigma = 6, the x10
//! convention, count clipping against each reference. Document frequencies
//! come from the reference sides of the whole corpus, so this metric only
//! makes sense at corpus level. A single-pair corpus has degenerate IDF
//! (every n-gram appears in "all" documents); for that case the document
//! count is smoothed upward by one and the outcome is flagged.

use super::EvalPair;
use std::collections::{BTreeMap, BTreeSet};

const MAX_N: usize = 4;
const SIGMA: f64 = 6.0;

type Counts = BTreeMap<Vec<String>, f64>;

fn ngram_counts(tokens: &[String], n: usize) -> Counts {
    let mut counts = Counts::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window.to_vec()).or_insert(0.0) += 1.0;
        }
    }
    counts
}

pub struct CiderOutcome {
    /// Corpus score on the x100 scale (maximum 1000 under x10).
    pub score: f64,
    /// True when the degenerate single-pair IDF smoothing was applied.
    pub idf_smoothed: bool,
}

pub fn cider(corpus: &[EvalPair]) -> CiderOutcome {
    if corpus.is_empty() {
        return CiderOutcome {
            score: 0.0,
            idf_smoothed: false,
        };
    }
    let idf_smoothed = corpus.len() == 1;
    let doc_count = if idf_smoothed {
        corpus.len() as f64 + 1.0
    } else {
        corpus.len() as f64
    };
    let log_docs = doc_count.ln();

    // df[n][gram]: number of images whose reference set contains the
    // gram. Ordered maps keep every float reduction in a fixed order, so
    // repeated scoring is bit-identical.
    let mut df: Vec<BTreeMap<Vec<String>, f64>> = vec![BTreeMap::new(); MAX_N];
    for pair in corpus {
        for (n, df_n) in df.iter_mut().enumerate() {
            let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
            for reference in &pair.references {
                seen.extend(ngram_counts(reference, n + 1).into_keys());
            }
            for gram in seen {
                *df_n.entry(gram).or_insert(0.0) += 1.0;
            }
        }
    }

    let tfidf = |counts: &Counts, n: usize| -> (Counts, f64) {
        let mut vec = Counts::new();
        let mut norm2 = 0.0;
        for (gram, &count) in counts {
            let d = df[n].get(gram).copied().unwrap_or(0.0).max(1.0);
            let w = count * (log_docs - d.ln());
            norm2 += w * w;
            vec.insert(gram.clone(), w);
        }
        (vec, norm2.sqrt())
    };

    let mut total = 0.0;
    for pair in corpus {
        let mut pair_score = 0.0;
        for n in 0..MAX_N {
            let cand_counts = ngram_counts(&pair.candidate, n + 1);
            let (cand_vec, cand_norm) = tfidf(&cand_counts, n);
            let mut sim_sum = 0.0;
            for reference in &pair.references {
                let ref_counts = ngram_counts(reference, n + 1);
                let (ref_vec, ref_norm) = tfidf(&ref_counts, n);
                if cand_norm == 0.0 || ref_norm == 0.0 {
                    continue;
                }
                let mut dot = 0.0;
                for (gram, &cw) in &cand_vec {
                    if let Some(&rw) = ref_vec.get(gram) {
                        dot += cw.min(rw) * rw;
                    }
                }
                let delta = pair.candidate.len() as f64 - reference.len() as f64;
                let length_penalty = (-delta * delta / (2.0 * SIGMA * SIGMA)).exp();
                sim_sum += length_penalty * dot / (cand_norm * ref_norm);
            }
            pair_score += sim_sum / pair.references.len() as f64;
        }
        total += pair_score / MAX_N as f64 * 10.0;
    }
    CiderOutcome {
        score: total / corpus.len() as f64 * 100.0,
        idf_smoothed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tokenize::tokenize;

    fn pair(candidate: &str, refs: &[&str]) -> EvalPair {
        EvalPair {
            candidate: tokenize(candidate),
            references: refs.iter().map(|r| tokenize(r)).collect(),
        }
    }

    #[test]
    fn all_identical_corpus_attains_maximum() {
        // Distinct sentences of >= 4 tokens: every order has a nonzero
        // TF-IDF vector, and a candidate equal to all its references hits
        // cosine 1 at every order for every reference.
        let sentences = [
            "a building appears at the top left of the scene",
            "a road disappears at the bottom of the scene",
            "some vegetation appears at the center of the scene",
            "the scene is the same as before",
            "one building disappears at the right of the scene",
            "a new road shows up at the top of the scene",
            "the two scenes look exactly identical somehow today",
            "a building appears at the bottom right of the scene",
            "the vegetation has been removed at the left of the scene",
            "one road has appeared at the center of the scene",
        ];
        let corpus: Vec<EvalPair> = sentences.iter().map(|s| pair(s, &[s, s, s, s, s])).collect();
        let outcome = cider(&corpus);
        assert!(!outcome.idf_smoothed);
        assert!(
            (outcome.score - 1000.0).abs() < 1e-6,
            "expected max 1000, got {}",
            outcome.score
        );
    }

    #[test]
    fn single_pair_corpus_smooths_idf() {
        let corpus = vec![pair("a building appears", &["a building appears"])];
        let outcome = cider(&corpus);
        assert!(outcome.idf_smoothed);
        assert!(outcome.score.is_finite());
        assert!(outcome.score > 0.0);
    }

    #[test]
    fn disjoint_candidate_scores_zero() {
        // Reference sets must differ across images, otherwise every n-gram
        // has document frequency N and all IDF weights vanish (CIDEr is a
        // consensus metric; a uniform corpus carries no signal).
        let corpus = vec![
            pair(
                "a matching road appears at the top",
                &["a matching road appears at the top", "one road shows up here"],
            ),
            pair(
                "x y z q",
                &["some vegetation disappears at the bottom", "the vegetation is gone"],
            ),
        ];
        let outcome = cider(&corpus);
        assert!(outcome.score > 0.0, "matching pair must contribute: {}", outcome.score);
        let disjoint_only = vec![
            pair("x y z q", &["a building appears at the top", "a new building shows up"]),
            pair("w u v t", &["some vegetation disappears now", "the vegetation is gone"]),
        ];
        assert_eq!(cider(&disjoint_only).score, 0.0);
    }

    #[test]
    fn longer_candidates_are_length_penalized() {
        let refs = ["a building appears at the top", "a building appears at the top"];
        let exact = vec![
            pair("a building appears at the top", &refs),
            pair("a road disappears", &["a road disappears", "a road disappears"]),
        ];
        let padded = vec![
            pair(
                "a building appears at the top and the scene stays the same otherwise today",
                &refs,
            ),
            pair("a road disappears", &["a road disappears", "a road disappears"]),
        ];
        // References are identical in both corpora, so document frequencies
        // match and the comparison isolates the candidate length effect.
        assert!(cider(&padded).score < cider(&exact).score);
    }
}

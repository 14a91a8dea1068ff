//! Corpus-level BLEU with modified n-gram precision.

use super::EvalPair;
use std::collections::HashMap;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Effective reference length: the reference whose length is closest to
/// the candidate's; ties resolve to the shorter reference, so the brevity
/// penalty is independent of reference order.
fn closest_ref_len(cand_len: usize, refs: &[Vec<String>]) -> usize {
    refs.iter()
        .map(|r| r.len())
        .min_by_key(|&rl| (rl.abs_diff(cand_len), rl))
        .unwrap_or(0)
}

/// Corpus BLEU-1..BLEU-max_n, each on the x100 scale.
///
/// Clipped n-gram counts are pooled over the corpus per order; BLEU-N is
/// the brevity-penalized geometric mean of orders 1..N. Any zero precision
/// makes the affected orders score 0 unless `smooth` is set, which adds
/// one to numerator and denominator for orders >= 2 (a sentence-level
/// diagnostic mode, not used for corpus reporting). Empty candidates
/// contribute zero counts everywhere and a lone empty corpus scores 0.
pub fn bleu_corpus(pairs: &[EvalPair], max_n: usize, smooth: bool) -> Vec<f64> {
    assert!((1..=4).contains(&max_n), "BLEU order must be in 1..=4");
    let mut clipped = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let mut cand_len_sum = 0usize;
    let mut ref_len_sum = 0usize;
    for pair in pairs {
        cand_len_sum += pair.candidate.len();
        ref_len_sum += closest_ref_len(pair.candidate.len(), &pair.references);
        for n in 1..=max_n {
            let cand = ngram_counts(&pair.candidate, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in &pair.references {
                for (gram, count) in ngram_counts(r, n) {
                    let slot = max_ref.entry(gram).or_insert(0);
                    *slot = (*slot).max(count);
                }
            }
            for (gram, count) in cand {
                clipped[n - 1] += count.min(max_ref.get(gram).copied().unwrap_or(0));
                total[n - 1] += count;
            }
        }
    }

    let bp = if cand_len_sum == 0 {
        0.0
    } else if cand_len_sum < ref_len_sum {
        (1.0 - ref_len_sum as f64 / cand_len_sum as f64).exp()
    } else {
        1.0
    };

    let precision = |n: usize| -> f64 {
        let (mut num, mut den) = (clipped[n - 1] as f64, total[n - 1] as f64);
        if smooth && n >= 2 {
            num += 1.0;
            den += 1.0;
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    };

    (1..=max_n)
        .map(|order| {
            let mut log_sum = 0.0;
            for n in 1..=order {
                let p = precision(n);
                if p == 0.0 {
                    return 0.0;
                }
                log_sum += p.ln();
            }
            bp * (log_sum / order as f64).exp() * 100.0
        })
        .collect()
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
    fn perfect_match_scores_100_at_every_order() {
        let pairs = vec![pair("a building appears at the top", &["a building appears at the top"])];
        for score in bleu_corpus(&pairs, 4, false) {
            assert!((score - 100.0).abs() < 1e-9, "{score}");
        }
    }

    #[test]
    fn clipping_counts_each_reference_token_once() {
        // "the the the the" vs "the cat sat down": one "the" in the
        // reference clips the four candidate "the"s to 1/4; equal lengths
        // keep the brevity penalty at 1.
        let pairs = vec![pair("the the the the", &["the cat sat down"])];
        let scores = bleu_corpus(&pairs, 1, false);
        assert!((scores[0] - 25.0).abs() < 1e-9, "{}", scores[0]);
    }

    #[test]
    fn disjoint_vocabulary_scores_zero() {
        let pairs = vec![pair("x y z", &["a building appears", "a road appears"])];
        for score in bleu_corpus(&pairs, 4, false) {
            assert_eq!(score, 0.0);
        }
    }

    #[test]
    fn empty_candidate_scores_zero_not_panic() {
        let pairs = vec![pair("", &["a building appears"])];
        assert_eq!(bleu_corpus(&pairs, 4, false), vec![0.0; 4]);
    }

    #[test]
    fn brevity_penalty_uses_closest_reference() {
        // candidate of length 3, references of lengths 3 and 7: closest is
        // 3, so no penalty applies and BLEU-1 is pure precision.
        let pairs = vec![pair(
            "a building appears",
            &["a building appears", "a building appears at the top left"],
        )];
        let scores = bleu_corpus(&pairs, 1, false);
        assert!((scores[0] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn smoothing_rescues_zero_higher_orders() {
        let pairs = vec![pair("a road", &["a building"])];
        let plain = bleu_corpus(&pairs, 2, false);
        let smoothed = bleu_corpus(&pairs, 2, true);
        assert_eq!(plain[1], 0.0);
        assert!(smoothed[1] > 0.0);
    }
}

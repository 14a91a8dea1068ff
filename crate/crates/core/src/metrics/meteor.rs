//! METEOR-lite: unigram F-measure with a fragmentation penalty.
//!
//! This is a self-contained approximation of METEOR restricted to exact
//! and stem matches — there is no WordNet synonym or paraphrase stage, so
//! absolute values are not comparable with the reference METEOR tool.
//!
//! Alignment is deterministic: in two passes (exact, then stem), each
//! still-unmatched candidate token takes the closest still-unmatched
//! reference token with the same key (ties to the left). The fragmentation
//! penalty counts chunk transitions, gamma * ((chunks - 1) / matches)^theta,
//! so a perfectly contiguous alignment — in particular an identical
//! sentence — is unpenalized and scores exactly 100.

use super::tokenize::stem;
use super::EvalPair;

const ALPHA: f64 = 0.9;
const GAMMA: f64 = 0.5;
const THETA: f64 = 3.0;

fn align(candidate: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut cand_used = vec![false; candidate.len()];
    let mut ref_used = vec![false; reference.len()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for exact in [true, false] {
        let key = |w: &String| if exact { w.clone() } else { stem(w) };
        for (i, cw) in candidate.iter().enumerate() {
            if cand_used[i] {
                continue;
            }
            let ck = key(cw);
            let best = reference
                .iter()
                .enumerate()
                .filter(|(j, rw)| !ref_used[*j] && key(rw) == ck)
                .min_by_key(|(j, _)| (j.abs_diff(i), *j))
                .map(|(j, _)| j);
            if let Some(j) = best {
                cand_used[i] = true;
                ref_used[j] = true;
                pairs.push((i, j));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

fn chunks(pairs: &[(usize, usize)]) -> usize {
    let mut count = 0;
    let mut prev: Option<(usize, usize)> = None;
    for &(i, j) in pairs {
        match prev {
            Some((pi, pj)) if i == pi + 1 && j == pj + 1 => {}
            _ => count += 1,
        }
        prev = Some((i, j));
    }
    count
}

/// METEOR-lite on the x100 scale, taking the best reference.
pub fn meteor_lite(pair: &EvalPair) -> f64 {
    let mut best = 0.0f64;
    for reference in &pair.references {
        if pair.candidate.is_empty() || reference.is_empty() {
            continue;
        }
        let pairs = align(&pair.candidate, reference);
        let m = pairs.len() as f64;
        if m == 0.0 {
            continue;
        }
        let p = m / pair.candidate.len() as f64;
        let r = m / reference.len() as f64;
        let f_mean = (p * r) / (ALPHA * p + (1.0 - ALPHA) * r);
        let ch = chunks(&pairs) as f64;
        let penalty = GAMMA * ((ch - 1.0) / m).powf(THETA);
        best = best.max(f_mean * (1.0 - penalty));
    }
    best * 100.0
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
    fn identical_sentences_score_exactly_100() {
        let p = pair("a building appears at the top", &["a building appears at the top"]);
        assert_eq!(meteor_lite(&p), 100.0);
    }

    #[test]
    fn stem_matches_count() {
        let with_stem = pair("a building appeared", &["a building appears"]);
        let without = pair("a building vanished", &["a building appears"]);
        assert!(meteor_lite(&with_stem) > meteor_lite(&without));
    }

    #[test]
    fn fragmentation_is_penalized() {
        // Same unigrams, scrambled order: fewer contiguous chunks in the
        // reference order means a lower score.
        let contiguous = pair("a b c d", &["a b c d"]);
        let scrambled = pair("d c b a", &["a b c d"]);
        assert!(meteor_lite(&scrambled) < meteor_lite(&contiguous));
        assert!(meteor_lite(&scrambled) > 0.0);
    }

    #[test]
    fn no_match_scores_zero() {
        let p = pair("x y z", &["a b c"]);
        assert_eq!(meteor_lite(&p), 0.0);
    }

    #[test]
    fn empty_candidate_scores_zero() {
        assert_eq!(meteor_lite(&pair("", &["a b"])), 0.0);
    }
}

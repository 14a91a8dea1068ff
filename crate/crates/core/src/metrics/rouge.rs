//! ROUGE-L: longest-common-subsequence F-measure.

use super::EvalPair;

fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            curr[j + 1] = if ai == bj {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// ROUGE-L on the x100 scale: LCS-based F-measure with beta = 1.2, taking
/// the best reference.
pub fn rouge_l(pair: &EvalPair) -> f64 {
    const BETA: f64 = 1.2;
    let mut best = 0.0f64;
    for reference in &pair.references {
        let lcs = lcs_len(&pair.candidate, reference) as f64;
        if lcs == 0.0 {
            continue;
        }
        let p = lcs / pair.candidate.len() as f64;
        let r = lcs / reference.len() as f64;
        let beta2 = BETA * BETA;
        let f = ((1.0 + beta2) * r * p) / (r + beta2 * p);
        best = best.max(f);
    }
    best * 100.0
}

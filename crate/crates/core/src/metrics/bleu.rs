use std::collections::BTreeMap;

use super::MetricsError;
use crate::tokenize::tokenize;

pub const MAX_ORDER: usize = 4;

pub(crate) fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Corpus BLEU-4 in `[0, 100]`.
///
/// Clipped n-gram matches and totals are pooled over the corpus. For orders 2..=4 a
/// zero match count is smoothed to `1 / (total + 1)` so short answers do not zero the
/// geometric mean; a zero unigram precision gives a score of 0.
pub fn bleu4(candidates: &[String], references: &[String]) -> Result<f64, MetricsError> {
    if candidates.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    let mut matches = [0usize; MAX_ORDER];
    let mut totals = [0usize; MAX_ORDER];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        let c = tokenize(c);
        let r = tokenize(r);
        cand_len += c.len();
        ref_len += r.len();
        for n in 1..=MAX_ORDER {
            let cc = ngram_counts(&c, n);
            let rc = ngram_counts(&r, n);
            for (g, &count) in &cc {
                matches[n - 1] += count.min(rc.get(g).copied().unwrap_or(0));
                totals[n - 1] += count;
            }
        }
    }
    if cand_len == 0 || matches[0] == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..MAX_ORDER {
        let p = if matches[n] == 0 {
            1.0 / (totals[n] as f64 + 1.0)
        } else {
            matches[n] as f64 / totals[n] as f64
        };
        log_sum += p.ln() / MAX_ORDER as f64;
    }
    let bp = if cand_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok((100.0 * bp * log_sum.exp()).min(100.0))
}

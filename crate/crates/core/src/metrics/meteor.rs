use std::collections::HashMap;

use crate::tokenize::tokenize;

/// Search budget for the exact chunk-minimizing alignment; past it the best alignment
/// found so far is used.
const SEARCH_BUDGET: usize = 200_000;

struct AlignSearch<'a> {
    cand: &'a [String],
    positions: HashMap<&'a str, Vec<usize>>,
    quota: HashMap<&'a str, usize>,
    remaining: Vec<usize>,
    used: Vec<bool>,
    best: usize,
    visited: usize,
}

impl AlignSearch<'_> {
    /// `prev` is the reference position aligned to candidate position `i - 1`, if any.
    fn dfs(&mut self, i: usize, prev: Option<usize>, chunks: usize) {
        self.visited += 1;
        if chunks >= self.best {
            return;
        }
        if i == self.cand.len() {
            self.best = chunks;
            return;
        }
        if self.visited > SEARCH_BUDGET && self.best != usize::MAX {
            return;
        }
        let w = self.cand[i].as_str();
        let quota = self.quota.get(w).copied().unwrap_or(0);
        if quota > 0 {
            let mut options: Vec<usize> = self.positions[w].iter().copied().filter(|&j| !self.used[j]).collect();
            if let Some(p) = prev {
                if let Some(k) = options.iter().position(|&j| j == p + 1) {
                    options.swap(0, k);
                }
            }
            for j in options {
                let extra = usize::from(prev != Some(j.wrapping_sub(1)) || j == 0);
                self.used[j] = true;
                *self.quota.get_mut(w).unwrap() -= 1;
                self.dfs(i + 1, Some(j), chunks + extra);
                *self.quota.get_mut(w).unwrap() += 1;
                self.used[j] = false;
            }
        }
        // leaving this token unaligned must still allow the quota to be met
        let later = self.remaining[i] - 1;
        if quota <= later {
            self.dfs(i + 1, None, chunks);
        }
    }
}

/// Minimal chunk count over alignments with the maximum number of exact unigram matches.
pub(crate) fn align(cand: &[String], reference: &[String]) -> (usize, usize) {
    let mut positions: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, w) in reference.iter().enumerate() {
        positions.entry(w.as_str()).or_default().push(j);
    }
    let mut cand_counts: HashMap<&str, usize> = HashMap::new();
    for w in cand {
        *cand_counts.entry(w.as_str()).or_default() += 1;
    }
    let quota: HashMap<&str, usize> = cand_counts
        .iter()
        .map(|(w, &c)| (*w, c.min(positions.get(w).map_or(0, Vec::len))))
        .collect();
    let matches: usize = quota.values().sum();
    if matches == 0 {
        return (0, 0);
    }
    // occurrences of cand[i]'s word at positions >= i
    let mut remaining = vec![0; cand.len()];
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for i in (0..cand.len()).rev() {
        let c = seen.entry(cand[i].as_str()).or_default();
        *c += 1;
        remaining[i] = *c;
    }
    let mut search = AlignSearch {
        cand,
        positions,
        quota,
        remaining,
        used: vec![false; reference.len()],
        best: usize::MAX,
        visited: 0,
    };
    search.dfs(0, None, 0);
    (matches, search.best)
}

/// Exact-match METEOR: `F_mean * (1 - 0.5 (chunks / matches)^3)` with
/// `F_mean = 10PR / (R + 9P)`.
pub fn meteor_simplified(candidate: &str, reference: &str) -> f64 {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    let (matches, chunks) = align(&c, &r);
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let p = m / c.len() as f64;
    let rec = m / r.len() as f64;
    let f_mean = 10.0 * p * rec / (rec + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m).powi(3);
    f_mean * (1.0 - penalty)
}

pub fn corpus_meteor(candidates: &[String], references: &[String]) -> f64 {
    if candidates.is_empty() {
        return 0.0;
    }
    candidates
        .iter()
        .zip(references)
        .map(|(c, r)| meteor_simplified(c, r))
        .sum::<f64>()
        / candidates.len() as f64
}

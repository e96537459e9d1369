//! Table-aware generation metrics with a word-overlap entailment model.
//!
//! An n-gram is entailed by the table with probability equal to the fraction of its
//! tokens found among the table's header and value tokens. Precision credits candidate
//! n-grams that match the reference or are entailed by the table; recall combines
//! entailment-weighted reference recall with table-value recall.

use std::collections::HashSet;

use super::bleu::ngram_counts;
use super::selection::Prf;
use crate::tokenize::tokenize;

pub const MAX_ORDER: usize = 4;
/// Weight of table recall against reference recall.
pub const LAMBDA: f64 = 0.5;
/// Replacement for zero higher-order precision or recall terms.
pub const SMOOTHING: f64 = 1e-5;

/// `(header, value)` pairs after tokenization.
#[derive(Debug, Clone)]
pub struct TokenizedTable {
    entries: Vec<(Vec<String>, Vec<String>)>,
    all_tokens: HashSet<String>,
}

impl TokenizedTable {
    pub fn new<S: AsRef<str>>(entries: &[(S, S)]) -> Self {
        let entries: Vec<(Vec<String>, Vec<String>)> = entries
            .iter()
            .map(|(h, v)| (tokenize(h.as_ref()), tokenize(v.as_ref())))
            .collect();
        let all_tokens = entries
            .iter()
            .flat_map(|(h, v)| h.iter().chain(v.iter()).cloned())
            .collect();
        Self { entries, all_tokens }
    }

    fn entailment(&self, ngram: &[String]) -> f64 {
        let hits = ngram.iter().filter(|t| self.all_tokens.contains(*t)).count();
        hits as f64 / ngram.len() as f64
    }

    fn value_entries(&self) -> impl Iterator<Item = &Vec<String>> {
        self.entries.iter().map(|(_, v)| v).filter(|v| !v.is_empty())
    }
}

fn geometric_mean(values: &[f64]) -> f64 {
    (values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp()
}

/// Zeroes in orders 2..=4 are replaced by [`SMOOTHING`]; a zero unigram term zeroes the mean.
fn smoothed_mean(mut values: Vec<f64>, zero_value: f64) -> f64 {
    for v in values.iter_mut().skip(1) {
        if *v == 0.0 {
            *v = SMOOTHING;
        }
    }
    if values.contains(&0.0) {
        zero_value
    } else {
        geometric_mean(&values)
    }
}

fn entailed_precision(cand: &[String], reference: Option<&[String]>, table: &TokenizedTable) -> f64 {
    let mut orders = Vec::with_capacity(MAX_ORDER);
    for n in 1..=MAX_ORDER {
        let cc = ngram_counts(cand, n);
        let rc = reference.map(|r| ngram_counts(r, n)).unwrap_or_default();
        let (mut num, mut den) = (0.0, 0.0);
        for (g, &count) in &cc {
            let count = count as f64;
            let in_ref = (rc.get(g).copied().unwrap_or(0) as f64 / count).min(1.0);
            num += count * (in_ref + (1.0 - in_ref) * table.entailment(g));
            den += count;
        }
        orders.push(if den == 0.0 { 0.0 } else { num / den });
    }
    smoothed_mean(orders, 0.0)
}

fn prf(precision: f64, recall: f64) -> Prf {
    if precision == 0.0 && recall == 0.0 {
        return Prf::default();
    }
    Prf::new(precision, recall)
}

pub fn parent(candidate: &str, reference: &str, table: &TokenizedTable) -> Prf {
    let cand = tokenize(candidate);
    if cand.is_empty() {
        return Prf::default();
    }
    let reference = tokenize(reference);
    let precision = entailed_precision(&cand, Some(&reference), table);

    let mut ref_recalls = Vec::with_capacity(MAX_ORDER);
    for n in 1..=MAX_ORDER {
        let cc = ngram_counts(&cand, n);
        let rc = ngram_counts(&reference, n);
        let (mut num, mut den) = (0.0, 0.0);
        for (g, &count) in &rc {
            let w = table.entailment(g);
            den += count as f64 * w;
            num += count.min(cc.get(g).copied().unwrap_or(0)) as f64 * w;
        }
        ref_recalls.push(if den == 0.0 { 1.0 } else { num / den });
    }
    let ref_recall = smoothed_mean(ref_recalls, SMOOTHING);

    let cand_set: HashSet<&String> = cand.iter().collect();
    let entries: Vec<f64> = table
        .value_entries()
        .map(|v| v.iter().filter(|t| cand_set.contains(t)).count() as f64 / v.len() as f64)
        .collect();
    let mut table_recall = if entries.is_empty() {
        0.0
    } else {
        entries.iter().sum::<f64>() / entries.len() as f64
    };
    if table_recall == 0.0 {
        table_recall = SMOOTHING;
    }
    let recall = ((1.0 - LAMBDA) * ref_recall.ln() + LAMBDA * table_recall.ln()).exp();
    prf(precision, recall)
}

/// Table-only variant: precision against the table alone, recall over distinct value tokens.
pub fn parent_t(candidate: &str, table: &TokenizedTable) -> Prf {
    let cand = tokenize(candidate);
    if cand.is_empty() {
        return Prf::default();
    }
    let precision = entailed_precision(&cand, None, table);
    let values: HashSet<&String> = table.value_entries().flatten().collect();
    let cand_set: HashSet<&String> = cand.iter().collect();
    let recall = if values.is_empty() {
        0.0
    } else {
        values.iter().filter(|t| cand_set.contains(*t)).count() as f64 / values.len() as f64
    };
    prf(precision, recall)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(entries: &[(&str, &str)]) -> TokenizedTable {
        TokenizedTable::new(entries)
    }

    #[test]
    fn perfect_candidate() {
        let t = table(&[("rider", "steve hislop"), ("rank", "2")]);
        let text = "rider steve hislop rank 2";
        let p = parent(text, text, &t);
        assert!((p.precision - 1.0).abs() < 1e-12);
        assert!((p.recall - 1.0).abs() < 1e-12);
        assert!((p.f1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn foreign_token_lowers_precision() {
        let t = table(&[("rider", "steve hislop"), ("rank", "2")]);
        let reference = "steve hislop was rank 2";
        let base = parent("steve hislop finished rank 2", reference, &t);
        let worse = parent("steve hislop finished rank 2 zebra", reference, &t);
        assert!(worse.precision < base.precision);
    }

    #[test]
    fn empty_candidate_scores_zero() {
        let t = table(&[("a", "b")]);
        assert_eq!(parent("", "b", &t), Prf::default());
        assert_eq!(parent_t("", &t), Prf::default());
    }

    #[test]
    fn parent_t_recall_and_zero_case() {
        let t = table(&[("rank", "1"), ("rider", "robert dunlop"), ("team", "ireland")]);
        let p = parent_t("1 robert dunlop ireland", &t);
        assert_eq!(p.recall, 1.0);
        assert_eq!(parent_t("nothing here matches", &t), Prf::default());
    }
}

//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::Rng;

use tableqa::gnn::{gradients, PreparedExample, SelectorModel};
use tableqa::table::RowColLabels;
use tableqa::{tokenize, Table};

pub const WORDS: &[&str] = &[
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet", "kilo", "lima",
    "mike", "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango", "uniform", "victor", "whiskey",
    "xray", "yankee", "zulu", "1", "2", "3", "42",
];

pub fn random_text<R: Rng>(rng: &mut R, min: usize, max: usize) -> String {
    let n = rng.random_range(min..=max);
    (0..n)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn random_table<R: Rng>(rng: &mut R, n_rows: usize, n_cols: usize) -> Table {
    let rows = (0..n_rows)
        .map(|_| (0..n_cols).map(|_| random_text(rng, 1, 3)).collect())
        .collect();
    Table::from_rows(rows).unwrap()
}

fn choose2(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Node and undirected edge counts of the table graph, counted from the construction rules.
pub fn expected_graph_counts(n_rows: usize, n_cols: usize) -> (usize, usize) {
    let nodes = n_rows * n_cols + n_rows + 1;
    let edges = n_rows * choose2(n_cols + 1) + n_cols * choose2(n_rows) + n_rows * n_cols;
    (nodes, edges)
}

/// BM25 evaluated document by document straight from the ranking formula.
/// Returns every positive-scoring document sorted by score, then by id.
pub fn bm25_brute(docs: &[(String, String)], query: &[String], k1: f64, b: f64) -> Vec<(String, f64)> {
    let tokenized: Vec<Vec<String>> = docs.iter().map(|(_, t)| tokenize(t)).collect();
    let n = docs.len() as f64;
    let avgdl = tokenized.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    let mut out = Vec::new();
    for (i, (id, _)) in docs.iter().enumerate() {
        let d = &tokenized[i];
        let mut score = 0.0;
        for q in query {
            let df = tokenized.iter().filter(|t| t.contains(q)).count() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            let tf = d.iter().filter(|t| *t == q).count() as f64;
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avgdl));
        }
        if score > 0.0 {
            out.push((id.clone(), score));
        }
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    out
}

fn windows(tokens: &[String], n: usize) -> Vec<&[String]> {
    if tokens.len() < n {
        Vec::new()
    } else {
        tokens.windows(n).collect()
    }
}

fn occurrences(grams: &[&[String]], g: &[String]) -> usize {
    grams.iter().filter(|x| **x == g).count()
}

fn table_tokens(entries: &[(&str, &str)]) -> Vec<String> {
    entries
        .iter()
        .flat_map(|(h, v)| tokenize(h).into_iter().chain(tokenize(v)))
        .collect()
}

fn entail(g: &[String], table: &[String]) -> f64 {
    g.iter().filter(|t| table.contains(t)).count() as f64 / g.len() as f64
}

/// Zero orders above the first are replaced by `1e-5`; a zero first order yields `zero`.
fn smoothed_geo(values: &[f64], zero: f64) -> f64 {
    if values[0] == 0.0 {
        return zero;
    }
    let logs: f64 = values.iter().map(|&v| if v == 0.0 { 1e-5f64.ln() } else { v.ln() }).sum();
    (logs / values.len() as f64).exp()
}

/// Precision summed position by position: each candidate n-gram is credited with its
/// share of clipped reference matches plus table entailment for the rest.
fn precision(cand: &[String], reference: &[String], table: &[String]) -> f64 {
    let mut orders = Vec::new();
    for n in 1..=4 {
        let cg = windows(cand, n);
        let rg = windows(reference, n);
        let mut num = 0.0;
        for g in &cg {
            let c = occurrences(&cg, g) as f64;
            let r = occurrences(&rg, g) as f64;
            let share = (r / c).min(1.0);
            num += share + (1.0 - share) * entail(g, table);
        }
        orders.push(if cg.is_empty() { 0.0 } else { num / cg.len() as f64 });
    }
    smoothed_geo(&orders, 0.0)
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// (precision, recall, f1) of the table-aware metric with the word-overlap model, lambda = 0.5.
pub fn parent_oracle(candidate: &str, reference: &str, entries: &[(&str, &str)]) -> (f64, f64, f64) {
    let cand = tokenize(candidate);
    if cand.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let reference = tokenize(reference);
    let table = table_tokens(entries);
    let p = precision(&cand, &reference, &table);

    let mut recalls = Vec::new();
    for n in 1..=4 {
        let cg = windows(&cand, n);
        let rg = windows(&reference, n);
        let (mut num, mut den) = (0.0, 0.0);
        for g in &rg {
            let r = occurrences(&rg, g) as f64;
            let c = occurrences(&cg, g) as f64;
            let w = entail(g, &table);
            den += w;
            num += (c.min(r) / r) * w;
        }
        recalls.push(if den == 0.0 { 1.0 } else { num / den });
    }
    let ref_recall = smoothed_geo(&recalls, 1e-5);

    let mut per_entry = Vec::new();
    for (_, v) in entries {
        let v = tokenize(v);
        if !v.is_empty() {
            per_entry.push(v.iter().filter(|t| cand.contains(t)).count() as f64 / v.len() as f64);
        }
    }
    let mut table_recall = if per_entry.is_empty() {
        0.0
    } else {
        per_entry.iter().sum::<f64>() / per_entry.len() as f64
    };
    if table_recall == 0.0 {
        table_recall = 1e-5;
    }
    let r = ref_recall.sqrt() * table_recall.sqrt();
    if p == 0.0 && r == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    (p, r, f1(p, r))
}

/// (precision, recall, f1) of the table-only variant.
pub fn parent_t_oracle(candidate: &str, entries: &[(&str, &str)]) -> (f64, f64, f64) {
    let cand = tokenize(candidate);
    if cand.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let table = table_tokens(entries);
    let p = precision(&cand, &[], &table);
    let mut values: Vec<String> = entries.iter().flat_map(|(_, v)| tokenize(v)).collect();
    values.sort();
    values.dedup();
    let r = if values.is_empty() {
        0.0
    } else {
        values.iter().filter(|t| cand.contains(t)).count() as f64 / values.len() as f64
    };
    if p == 0.0 && r == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    (p, r, f1(p, r))
}

/// Worst relative error between analytic gradients and central differences over every
/// scalar parameter, with the number of scalars checked.
/// Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn gradient_check(
    model: &mut SelectorModel,
    prepared: &PreparedExample,
    labels: &RowColLabels,
    eps: f64,
    floor: f64,
) -> (f64, usize, String) {
    let (_, grads, _) = gradients(model, prepared, labels, None).unwrap();
    let grads: Vec<(String, Vec<f64>)> = grads
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.iter().copied().collect()))
        .collect();
    let mut worst = (0.0f64, String::new());
    let mut count = 0;
    for (t, (name, analytic)) in grads.iter().enumerate() {
        for (j, &a) in analytic.iter().enumerate() {
            let set = |model: &mut SelectorModel, value: f64| {
                let mut tensors = model.params.tensors_mut();
                let slot = &mut tensors[t].as_slice_mut().unwrap()[j];
                std::mem::replace(slot, value)
            };
            let orig = set(model, 0.0);
            set(model, orig + eps);
            let plus = gradients(model, prepared, labels, None).unwrap().0;
            set(model, orig - eps);
            let minus = gradients(model, prepared, labels, None).unwrap().0;
            set(model, orig);
            let numeric = (plus - minus) / (2.0 * eps);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{j}] analytic {a:e} numeric {numeric:e}"));
            }
            count += 1;
        }
    }
    (worst.0, count, worst.1)
}

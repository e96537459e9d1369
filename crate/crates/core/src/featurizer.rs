//! Trainable initial node features: a token embedding table with mean pooling.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::graph::TableGraph;
use crate::table::Dataset;
pub use crate::tokenize::tokenize;

/// Default per-node token budget.
pub const DEFAULT_MAX_TOKENS: usize = 35;

pub const UNK_TOKEN: &str = "[UNK]";

const INIT_SCALE: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum FeaturizerError {
    #[error("embedding width {got} does not match the configured node dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding table has {rows} rows but the vocabulary has {vocab} entries")]
    VocabMismatch { rows: usize, vocab: usize },
    #[error("vocab line {line}: {message}")]
    BadVocabLine { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token to id map. Id 0 is always the unknown token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::from_tokens(Vec::new())
    }
}

impl Vocab {
    /// Builds a vocab with UNK at id 0 followed by `tokens` in order.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let mut all = Vec::with_capacity(tokens.len() + 1);
        all.push(UNK_TOKEN.to_string());
        all.extend(tokens);
        let ids = all.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens: all, ids }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(0)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Writes one `token<TAB>id` line per entry.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (id, tok) in self.tokens.iter().enumerate() {
            writeln!(w, "{tok}\t{id}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, FeaturizerError> {
        let mut tokens = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let bad = |message: &str| FeaturizerError::BadVocabLine {
                line: idx + 1,
                message: message.to_string(),
            };
            let (tok, id) = line.rsplit_once('\t').ok_or_else(|| bad("missing tab"))?;
            let id: usize = id.parse().map_err(|_| bad("id is not an integer"))?;
            if id != tokens.len() {
                return Err(bad("ids must be dense and ascending"));
            }
            tokens.push(tok.to_string());
        }
        if tokens.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(FeaturizerError::BadVocabLine {
                line: 1,
                message: format!("id 0 must be {UNK_TOKEN}"),
            });
        }
        tokens.remove(0);
        Ok(Self::from_tokens(tokens))
    }
}

/// Counts tokens over every question, cell text and row header text (`row {i}`); keeps
/// those seen `min_count` times. Ids follow descending frequency, ties broken lexicographically.
pub fn build_vocab(dataset: &Dataset, min_count: usize) -> Vocab {
    let mut row_headers: Vec<String> = Vec::new();
    for ex in &dataset.examples {
        row_headers.extend((0..ex.table.n_rows()).map(|i| format!("row {i}")));
    }
    build_vocab_from_texts(
        dataset
            .examples
            .iter()
            .flat_map(|ex| {
                std::iter::once(ex.question.as_str())
                    .chain(ex.table.rows().iter().flatten().map(String::as_str))
            })
            .chain(row_headers.iter().map(String::as_str)),
        min_count,
    )
}

pub fn build_vocab_from_texts<'a, I>(texts: I, min_count: usize) -> Vocab
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in texts {
        for tok in tokenize(text) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, n)| *n >= min_count.max(1))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocab::from_tokens(kept.into_iter().map(|(t, _)| t).collect())
}

/// Embedding table of shape `V x D`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizerParams {
    pub embedding: Array2<f64>,
}

impl FeaturizerParams {
    /// Uniform init in `[-0.05, 0.05]`.
    pub fn init<R: Rng>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        let embedding =
            Array2::from_shape_fn((vocab_size, dim), |_| rng.random_range(-INIT_SCALE..=INIT_SCALE));
        Self { embedding }
    }

    pub fn dim(&self) -> usize {
        self.embedding.ncols()
    }
}

/// Token ids for every node, capped at `max_tokens`; OOV tokens map to UNK.
pub fn node_token_ids(graph: &TableGraph, vocab: &Vocab, max_tokens: usize) -> Vec<Vec<usize>> {
    graph
        .nodes()
        .iter()
        .map(|n| {
            tokenize(&n.text)
                .iter()
                .take(max_tokens)
                .map(|t| vocab.id(t))
                .collect()
        })
        .collect()
}

/// Mean of the embedding rows for each node's tokens; zero for token-less nodes.
pub fn pool(token_ids: &[Vec<usize>], embedding: ArrayView2<'_, f64>) -> Array2<f64> {
    let dim = embedding.ncols();
    let mut out = Array2::zeros((token_ids.len(), dim));
    for (i, ids) in token_ids.iter().enumerate() {
        if ids.is_empty() {
            continue;
        }
        let mut row = out.row_mut(i);
        for &id in ids {
            row += &embedding.row(id);
        }
        row /= ids.len() as f64;
    }
    out
}

/// Accumulates the embedding gradient for `pool`.
pub fn pool_backward(token_ids: &[Vec<usize>], d_features: ArrayView2<'_, f64>, d_embedding: &mut Array2<f64>) {
    for (i, ids) in token_ids.iter().enumerate() {
        if ids.is_empty() {
            continue;
        }
        let scale = 1.0 / ids.len() as f64;
        let grad = d_features.row(i);
        for &id in ids {
            d_embedding.row_mut(id).scaled_add(scale, &grad);
        }
    }
}

pub fn embed_nodes(
    graph: &TableGraph,
    params: &FeaturizerParams,
    vocab: &Vocab,
    max_tokens: usize,
    expected_dim: usize,
) -> Result<Array2<f64>, FeaturizerError> {
    if params.dim() != expected_dim {
        return Err(FeaturizerError::DimensionMismatch {
            expected: expected_dim,
            got: params.dim(),
        });
    }
    if params.embedding.nrows() != vocab.len() {
        return Err(FeaturizerError::VocabMismatch {
            rows: params.embedding.nrows(),
            vocab: vocab.len(),
        });
    }
    let ids = node_token_ids(graph, vocab, max_tokens);
    Ok(pool(&ids, params.embedding.view()))
}

//! The tokenization rule shared by the featurizer, retrieval and metrics.

/// Lowercases and splits on every non-alphanumeric character, dropping empties.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

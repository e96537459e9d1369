//! Selection and generation metrics.
//!
//! METEOR here is exact-match only (no stemming or synonym modules), and BLEU uses
//! add-one smoothing for empty higher-order matches.

mod bleu;
mod meteor;
mod parent;
mod report;
mod rouge;
mod selection;

pub use bleu::bleu4;
pub use meteor::{corpus_meteor, meteor_simplified};
pub use parent::{parent, parent_t, TokenizedTable, LAMBDA, SMOOTHING};
pub use report::{evaluate_run, highlighted_entries, EvalReport, Prediction};
pub use rouge::{corpus_rouge_l, rouge_l};
pub use selection::{selection_prf, Prf};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("{candidates} candidates but {references} references")]
    LengthMismatch { candidates: usize, references: usize },
    #[error("no predictions to evaluate")]
    NoPredictions,
    #[error("prediction id {0} is not in the dataset")]
    UnknownId(String),
    #[error("prediction id {0} appears more than once")]
    DuplicateId(String),
}

//! Graph attention cell selector: model, loss, optimizer, training and checkpointing.

mod checkpoint;
mod forward;
mod loss;
mod params;
mod radam;
mod select;
mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointError, TrainingMetadata};
pub use forward::{
    gat_backward, gat_forward, update_running_stats, DirectedEdge, ForwardOutput, LayerCache, MessageGraph,
    Mode, BN_EPS,
};
pub use loss::{bce_with_logits, selection_loss, selection_loss_grad};
pub use params::{GatBuffers, GatParams, LayerParams, RELATION_INPUT};
pub use radam::{RAdam, RAdamState};
pub use select::{select_cells, top_k_indices};
pub use train::{gradients, hit_rates, train, EpochLog, PreparedExample, SelectorModel, TrainConfig, TrainOutcome};

#[derive(Debug, thiserror::Error)]
pub enum GnnError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("feature matrix is {got:?}, expected {expected:?}")]
    FeatureShape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },
    #[error("logit count {logits} does not match label count {labels}")]
    LengthMismatch { logits: usize, labels: usize },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Featurizer(#[from] crate::featurizer::FeaturizerError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Table(#[from] crate::table::TableError),
}

/// Shape and regularization settings of the selector network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatConfig {
    pub layers: usize,
    pub node_dim: usize,
    pub msg_dim: usize,
    /// Relation feature width; node-kind features use half of it.
    pub type_dim: usize,
    pub dropout: f64,
    pub top_rows: usize,
    pub top_cols: usize,
}

impl Default for GatConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            node_dim: 200,
            msg_dim: 200,
            type_dim: 40,
            dropout: 0.2,
            top_rows: 3,
            top_cols: 3,
        }
    }
}

impl GatConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        let fail = |m: &str| Err(GnnError::Config(m.to_string()));
        if self.layers == 0 {
            return fail("layers must be at least 1");
        }
        if self.node_dim == 0 || self.msg_dim == 0 || self.type_dim == 0 {
            return fail("dimensions must be positive");
        }
        if !self.type_dim.is_multiple_of(2) {
            return fail("type_dim must be even");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if self.top_rows == 0 || self.top_cols == 0 {
            return fail("top-k sizes must be positive");
        }
        Ok(())
    }
}

//! Free-form question answering over tables.
//!
//! The pipeline converts a table and question into a typed graph, scores rows and
//! columns with a relational graph attention network, retrieves supporting text with
//! BM25, and fuses the selected cells with the retrieved passage into an answer.

pub mod featurizer;
pub mod fusion;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod pipeline;
pub mod retrieval;
pub mod synthetic;
pub mod table;
pub mod tokenize;

pub use graph::{build_graph, NodeKind, RelationKind, TableGraph};
pub use table::{CellCoord, Dataset, QaExample, Split, Table};
pub use tokenize::tokenize;

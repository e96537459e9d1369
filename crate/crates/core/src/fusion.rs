//! Fusion-in-decoder input assembly, the local template composer and the client for an
//! external generation service.
//!
//! Wire contract: `POST {endpoint}` with body
//! `{"blocks": [..], "beam_size": int, "length_penalty": float, "max_tokens": int}`;
//! a successful response carries `{"answer": string}`.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::table::{CellCoord, Table};

static REMOTE_REQUESTS: AtomicUsize = AtomicUsize::new(0);

/// Number of requests sent to a generation service by this process.
pub fn remote_request_count() -> usize {
    REMOTE_REQUESTS.load(Ordering::SeqCst)
}

#[derive(Debug, thiserror::Error)]
pub enum FusionError {
    #[error("no table cells and no retrieved text to build from")]
    NoSources,
    #[error("question is empty")]
    EmptyQuestion,
    #[error("nothing to compose an answer from")]
    NothingToSay,
    #[error("example {id}: generation service unreachable: {message}")]
    Unreachable { id: String, message: String },
    #[error("example {id}: generation request timed out")]
    Timeout { id: String },
    #[error("example {id}: generation service returned status {status}")]
    Status { id: String, status: u16 },
    #[error("example {id}: malformed generation response: {message}")]
    Malformed { id: String, message: String },
    #[error("could not build HTTP client: {0}")]
    Client(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Table,
    Passage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceBlock {
    pub kind: SourceKind,
    pub text: String,
}

/// Question plus its sources, table block first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionInput {
    pub question: String,
    pub blocks: Vec<SourceBlock>,
}

impl FusionInput {
    /// Each block rendered as `question: {q} context: {text}`.
    pub fn rendered(&self) -> Vec<String> {
        self.blocks
            .iter()
            .map(|b| format!("question: {} context: {}", self.question, b.text))
            .collect()
    }
}

pub fn assemble(question: &str, linearized_cells: &str, retrieved: &str) -> Result<FusionInput, FusionError> {
    if question.trim().is_empty() {
        return Err(FusionError::EmptyQuestion);
    }
    let mut blocks = Vec::with_capacity(2);
    if !linearized_cells.is_empty() {
        blocks.push(SourceBlock {
            kind: SourceKind::Table,
            text: linearized_cells.to_string(),
        });
    }
    if !retrieved.is_empty() {
        blocks.push(SourceBlock {
            kind: SourceKind::Passage,
            text: retrieved.to_string(),
        });
    }
    if blocks.is_empty() {
        return Err(FusionError::NoSources);
    }
    Ok(FusionInput {
        question: question.to_string(),
        blocks,
    })
}

/// A selected cell with the header of its column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadedCell {
    pub coord: CellCoord,
    pub header: String,
    pub value: String,
}

pub fn headed_cells(table: &Table, coords: &[CellCoord]) -> Vec<HeadedCell> {
    coords
        .iter()
        .filter(|c| table.contains(**c))
        .map(|&coord| HeadedCell {
            coord,
            header: table.header(coord.col).to_string(),
            value: table.cell(coord.row, coord.col).to_string(),
        })
        .collect()
}

/// Deterministic answer: the retrieved sentence (if any), then one clause per row made
/// of comma-joined `"{header} {value}"` phrases, clauses joined by `"; "`.
pub fn compose_template_answer(cells: &[HeadedCell], retrieved: &str) -> Result<String, FusionError> {
    let mut rows: BTreeMap<usize, Vec<(usize, String)>> = BTreeMap::new();
    for c in cells {
        let phrase = format!("{} {}", c.header.trim(), c.value.trim()).trim().to_string();
        if !phrase.is_empty() {
            rows.entry(c.coord.row).or_default().push((c.coord.col, phrase));
        }
    }
    let clauses: Vec<String> = rows
        .into_values()
        .map(|mut phrases| {
            phrases.sort();
            phrases.into_iter().map(|(_, p)| p).collect::<Vec<_>>().join(", ")
        })
        .collect();
    let retrieved = retrieved.trim();
    if clauses.is_empty() && retrieved.is_empty() {
        return Err(FusionError::NothingToSay);
    }
    let mut out = String::new();
    if !retrieved.is_empty() {
        out.push_str(retrieved);
    }
    if !clauses.is_empty() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&clauses.join("; "));
        out.push('.');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub beam_size: usize,
    pub length_penalty: f64,
    pub max_tokens: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            beam_size: 3,
            length_penalty: 1.0,
            max_tokens: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub blocks: Vec<String>,
    pub beam_size: usize,
    pub length_penalty: f64,
    pub max_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub answer: String,
}

/// Blocking client for the generation service. Each call sends exactly one request.
#[derive(Debug, Clone)]
pub struct RemoteGenerator {
    client: reqwest::blocking::Client,
    endpoint: String,
}

impl RemoteGenerator {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, FusionError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| FusionError::Client(e.to_string()))?;
        Ok(Self {
            client,
            endpoint: endpoint.to_string(),
        })
    }

    pub fn generate(&self, example_id: &str, input: &FusionInput, config: &GenerationConfig) -> Result<String, FusionError> {
        let request = GenerationRequest {
            blocks: input.rendered(),
            beam_size: config.beam_size,
            length_penalty: config.length_penalty,
            max_tokens: config.max_tokens,
        };
        let id = example_id.to_string();
        REMOTE_REQUESTS.fetch_add(1, Ordering::SeqCst);
        let transport = |e: reqwest::Error| {
            if e.is_timeout() {
                FusionError::Timeout { id: id.clone() }
            } else {
                FusionError::Unreachable {
                    id: id.clone(),
                    message: e.to_string(),
                }
            }
        };
        let response = self
            .client
            .post(&self.endpoint)
            .json(&request)
            .send()
            .map_err(transport)?;
        let status = response.status();
        if !status.is_success() {
            return Err(FusionError::Status {
                id,
                status: status.as_u16(),
            });
        }
        let body = response.text().map_err(transport)?;
        let parsed: GenerationResponse = serde_json::from_str(&body).map_err(|e| FusionError::Malformed {
            id: id.clone(),
            message: e.to_string(),
        })?;
        Ok(parsed.answer)
    }
}

pub fn generate_remote(
    example_id: &str,
    input: &FusionInput,
    config: &GenerationConfig,
    endpoint: &str,
    timeout: Duration,
) -> Result<String, FusionError> {
    RemoteGenerator::new(endpoint, timeout)?.generate(example_id, input, config)
}

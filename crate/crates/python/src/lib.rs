//! Python bindings: tables and graphs, BM25 retrieval, the trained cell selector,
//! template answers, metrics and the full pipeline.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use tqa::fusion::{compose_template_answer, headed_cells, FusionError};
use tqa::metrics::{self, TokenizedTable};
use tqa::pipeline::{load_checkpoint, run_pipeline, PipelineConfig};
use tqa::retrieval::{build_index as build_bm25, Bm25Params, Document, InvertedIndex};
use tqa::table::{linearize_cells, truncate_table, ExampleMetadata};
use tqa::{CellCoord, QaExample};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: std::io::Error) -> PyErr {
    PyIOError::new_err(e.to_string())
}

fn coords(cells: &[(usize, usize)]) -> Vec<CellCoord> {
    cells.iter().map(|&(r, c)| CellCoord::new(r, c)).collect()
}

fn pairs(cells: &[CellCoord]) -> Vec<(usize, usize)> {
    cells.iter().map(|c| (c.row, c.col)).collect()
}

/// A rectangular table; row 0 holds the column headers.
#[pyclass(name = "Table", module = "tableqa", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTable {
    inner: tqa::Table,
}

#[pymethods]
impl PyTable {
    #[new]
    fn new(rows: Vec<Vec<String>>) -> PyResult<Self> {
        Ok(Self {
            inner: tqa::Table::from_rows(rows).map_err(value_err)?,
        })
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_cols(&self) -> usize {
        self.inner.n_cols()
    }

    fn cell(&self, row: usize, col: usize) -> PyResult<String> {
        self.inner
            .get(CellCoord::new(row, col))
            .map(str::to_string)
            .ok_or_else(|| PyValueError::new_err(format!("cell ({row}, {col}) is out of range")))
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.inner.rows().to_vec()
    }

    /// `"{header} is {value}"` slots of the given data cells, row-major, joined by `[SEP]`.
    fn linearize(&self, cells: Vec<(usize, usize)>) -> PyResult<String> {
        linearize_cells(&self.inner, &coords(&cells)).map_err(value_err)
    }

    fn truncate(&self, cap: usize) -> PyResult<Self> {
        Ok(Self {
            inner: truncate_table(&self.inner, cap).map_err(value_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Table({} x {})", self.inner.n_rows(), self.inner.n_cols())
    }
}

#[pyclass(name = "TableGraph", module = "tableqa", frozen)]
struct PyTableGraph {
    inner: tqa::TableGraph,
}

#[pymethods]
impl PyTableGraph {
    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edges().len()
    }

    #[getter]
    fn row_header_ids(&self) -> Vec<usize> {
        self.inner.row_header_ids().to_vec()
    }

    #[getter]
    fn column_header_ids(&self) -> Vec<usize> {
        self.inner.column_header_ids().to_vec()
    }

    fn node_kind(&self, id: usize) -> PyResult<&'static str> {
        self.inner
            .nodes()
            .get(id)
            .map(|n| n.kind.name())
            .ok_or_else(|| PyValueError::new_err(format!("no node {id}")))
    }

    /// `(neighbor id, relation name)` pairs in ascending id order.
    fn neighborhood(&self, id: usize) -> PyResult<Vec<(usize, &'static str)>> {
        let hood = self.inner.neighborhood(id).map_err(value_err)?;
        Ok(hood.iter().map(|&(n, rel)| (n, rel.name())).collect())
    }

    fn dump(&self) -> String {
        self.inner.debug_dump()
    }
}

#[pyfunction]
fn build_graph(table: &PyTable, question: &str) -> PyResult<PyTableGraph> {
    Ok(PyTableGraph {
        inner: tqa::build_graph(&table.inner, question).map_err(value_err)?,
    })
}

/// BM25 inverted index over `(id, text)` documents.
#[pyclass(name = "Bm25Index", module = "tableqa", frozen)]
struct PyBm25Index {
    inner: InvertedIndex,
}

#[pymethods]
impl PyBm25Index {
    #[new]
    #[pyo3(signature = (docs, k1 = 0.9, b = 0.4))]
    fn new(docs: Vec<(String, String)>, k1: f64, b: f64) -> PyResult<Self> {
        let docs = docs.into_iter().map(|(id, text)| Document { id, text, title: None });
        Ok(Self {
            inner: build_bm25(docs, Bm25Params { k1, b }).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let file = File::open(&path).map_err(io_err)?;
        Ok(Self {
            inner: InvertedIndex::read_from(BufReader::new(file)).map_err(value_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let file = File::create(&path).map_err(io_err)?;
        self.inner.write_to(BufWriter::new(file)).map_err(io_err)
    }

    #[getter]
    fn doc_count(&self) -> usize {
        self.inner.doc_count()
    }

    #[pyo3(signature = (query, k = 10))]
    fn search(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        self.inner.search(query, k)
    }

    fn score(&self, query: &str, doc_id: &str) -> PyResult<f64> {
        self.inner.bm25_score(&tqa::tokenize(query), doc_id).map_err(value_err)
    }

    /// First sentence of the best-scoring document, or `""`.
    #[pyo3(signature = (question, drop_stopwords = false))]
    fn retrieve_context(&self, question: &str, drop_stopwords: bool) -> String {
        self.inner.retrieve_context(question, drop_stopwords)
    }
}

/// A trained cell selector loaded from a checkpoint.
#[pyclass(name = "Selector", module = "tableqa", frozen)]
struct PySelector {
    model: tqa::gnn::SelectorModel,
}

impl PySelector {
    fn example(question: &str, table: &PyTable) -> QaExample {
        QaExample {
            id: String::new(),
            question: question.to_string(),
            table: table.inner.clone(),
            gold_cells: Vec::new(),
            answer: String::new(),
            metadata: ExampleMetadata::default(),
        }
    }
}

#[pymethods]
impl PySelector {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            model: load_checkpoint(&path).map_err(value_err)?.model,
        })
    }

    /// Eval-mode `(row_logits, column_logits)`.
    fn logits(&self, question: &str, table: &PyTable) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let prepared = self.model.prepare(&Self::example(question, table)).map_err(value_err)?;
        self.model.logits(&prepared).map_err(value_err)
    }

    /// Data cells at the intersection of the top rows and top columns.
    fn select(&self, question: &str, table: &PyTable) -> PyResult<Vec<(usize, usize)>> {
        let cells = self
            .model
            .select_example(&Self::example(question, table))
            .map_err(value_err)?;
        Ok(pairs(&cells))
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.model.vocab.len()
    }
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    tqa::tokenize(text)
}

/// Rule-based answer from the selected cells and the retrieved sentence.
#[pyfunction]
#[pyo3(signature = (table, cells, retrieved = ""))]
fn template_answer(table: &PyTable, cells: Vec<(usize, usize)>, retrieved: &str) -> PyResult<String> {
    match compose_template_answer(&headed_cells(&table.inner, &coords(&cells)), retrieved) {
        Ok(answer) => Ok(answer),
        Err(FusionError::NothingToSay) => Ok(String::new()),
        Err(e) => Err(value_err(e)),
    }
}

#[pyfunction]
fn bleu4(candidates: Vec<String>, references: Vec<String>) -> PyResult<f64> {
    metrics::bleu4(&candidates, &references).map_err(value_err)
}

#[pyfunction]
fn rouge_l(candidate: &str, reference: &str) -> f64 {
    metrics::rouge_l(candidate, reference)
}

#[pyfunction]
fn meteor(candidate: &str, reference: &str) -> f64 {
    metrics::meteor_simplified(candidate, reference)
}

/// `(precision, recall, f1)` against the reference and `(header, value)` table entries.
#[pyfunction]
fn parent(candidate: &str, reference: &str, entries: Vec<(String, String)>) -> (f64, f64, f64) {
    let p = metrics::parent(candidate, reference, &TokenizedTable::new(&entries));
    (p.precision, p.recall, p.f1)
}

#[pyfunction]
fn parent_t(candidate: &str, entries: Vec<(String, String)>) -> (f64, f64, f64) {
    let p = metrics::parent_t(candidate, &TokenizedTable::new(&entries));
    (p.precision, p.recall, p.f1)
}

#[pyfunction]
fn selection_prf(predicted: Vec<(usize, usize)>, gold: Vec<(usize, usize)>) -> (f64, f64, f64) {
    let p = metrics::selection_prf(&coords(&predicted), &coords(&gold));
    (p.precision, p.recall, p.f1)
}

/// Runs every stage for a configuration file and returns the run manifest as JSON.
#[pyfunction]
fn run(config_path: PathBuf) -> PyResult<String> {
    let config = PipelineConfig::from_file(&config_path).map_err(value_err)?;
    let manifest = run_pipeline(&config).map_err(value_err)?;
    serde_json::to_string(&manifest).map_err(value_err)
}

#[pymodule]
fn tableqa(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTable>()?;
    m.add_class::<PyTableGraph>()?;
    m.add_class::<PyBm25Index>()?;
    m.add_class::<PySelector>()?;
    m.add_function(wrap_pyfunction!(build_graph, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(template_answer, m)?)?;
    m.add_function(wrap_pyfunction!(bleu4, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l, m)?)?;
    m.add_function(wrap_pyfunction!(meteor, m)?)?;
    m.add_function(wrap_pyfunction!(parent, m)?)?;
    m.add_function(wrap_pyfunction!(parent_t, m)?)?;
    m.add_function(wrap_pyfunction!(selection_prf, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}

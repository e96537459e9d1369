use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::bleu::bleu4;
use super::meteor::meteor_simplified;
use super::parent::{parent, parent_t, TokenizedTable};
use super::rouge::rouge_l;
use super::selection::{selection_prf, Prf};
use super::MetricsError;
use crate::table::{CellCoord, Dataset, QaExample};

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub selected_cells: Vec<[usize; 2]>,
    pub retrieved: String,
    pub answer: String,
}

impl Prediction {
    pub fn coords(&self) -> Vec<CellCoord> {
        self.selected_cells.iter().map(|&[r, c]| CellCoord::new(r, c)).collect()
    }
}

/// Aggregate scores of a run, every field on a 0-100 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu4: f64,
    pub meteor: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub parent_p: f64,
    pub parent_r: f64,
    pub parent_f: f64,
    pub parent_t_p: f64,
    pub parent_t_r: f64,
    pub parent_t_f: f64,
    pub sel_p: f64,
    pub sel_r: f64,
    pub sel_f: f64,
}

/// `(header, value)` pairs of the example's highlighted cells.
pub fn highlighted_entries(example: &QaExample) -> Vec<(String, String)> {
    example
        .gold_cells
        .iter()
        .map(|c| {
            (
                example.table.header(c.col).to_string(),
                example.table.cell(c.row, c.col).to_string(),
            )
        })
        .collect()
}

pub fn evaluate_run(predictions: &[Prediction], dataset: &Dataset) -> Result<EvalReport, MetricsError> {
    if predictions.is_empty() {
        return Err(MetricsError::NoPredictions);
    }
    let mut seen = HashSet::new();
    let mut selection = Vec::with_capacity(predictions.len());
    let mut parents = Vec::with_capacity(predictions.len());
    let mut parents_t = Vec::with_capacity(predictions.len());
    let mut candidates = Vec::with_capacity(predictions.len());
    let mut references = Vec::with_capacity(predictions.len());
    let (mut meteor, mut rouge) = (0.0, 0.0);
    for pred in predictions {
        if !seen.insert(pred.id.as_str()) {
            return Err(MetricsError::DuplicateId(pred.id.clone()));
        }
        let example = dataset
            .get(&pred.id)
            .ok_or_else(|| MetricsError::UnknownId(pred.id.clone()))?;
        selection.push(selection_prf(&pred.coords(), &example.gold_cells));
        let table = TokenizedTable::new(&highlighted_entries(example));
        parents.push(parent(&pred.answer, &example.answer, &table));
        parents_t.push(parent_t(&pred.answer, &table));
        meteor += meteor_simplified(&pred.answer, &example.answer);
        rouge += rouge_l(&pred.answer, &example.answer);
        candidates.push(pred.answer.clone());
        references.push(example.answer.clone());
    }
    let n = predictions.len() as f64;
    let sel = Prf::mean(&selection);
    let par = Prf::mean(&parents);
    let par_t = Prf::mean(&parents_t);
    Ok(EvalReport {
        bleu4: bleu4(&candidates, &references)?,
        meteor: 100.0 * meteor / n,
        rouge_l: 100.0 * rouge / n,
        parent_p: 100.0 * par.precision,
        parent_r: 100.0 * par.recall,
        parent_f: 100.0 * par.f1,
        parent_t_p: 100.0 * par_t.precision,
        parent_t_r: 100.0 * par_t.recall,
        parent_t_f: 100.0 * par_t.f1,
        sel_p: 100.0 * sel.precision,
        sel_r: 100.0 * sel.recall,
        sel_f: 100.0 * sel.f1,
    })
}

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::table::CellCoord;

/// Precision, recall and their harmonic mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }

    /// Component-wise mean; an empty slice yields zeros.
    pub fn mean(items: &[Prf]) -> Prf {
        if items.is_empty() {
            return Prf::default();
        }
        let n = items.len() as f64;
        Prf {
            precision: items.iter().map(|p| p.precision).sum::<f64>() / n,
            recall: items.iter().map(|p| p.recall).sum::<f64>() / n,
            f1: items.iter().map(|p| p.f1).sum::<f64>() / n,
        }
    }
}

pub fn selection_prf(predicted: &[CellCoord], gold: &[CellCoord]) -> Prf {
    let pred: HashSet<&CellCoord> = predicted.iter().collect();
    let gold: HashSet<&CellCoord> = gold.iter().collect();
    let overlap = pred.intersection(&gold).count() as f64;
    let p = if pred.is_empty() { 0.0 } else { overlap / pred.len() as f64 };
    let r = if gold.is_empty() { 0.0 } else { overlap / gold.len() as f64 };
    Prf::new(p, r)
}

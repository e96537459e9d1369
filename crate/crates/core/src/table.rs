//! Table data model, dataset ingestion and cell linearization.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

/// Default cap on the number of cells kept per table.
pub const DEFAULT_CELL_CAP: usize = 200;

/// Separator placed between linearized cell slots.
pub const SLOT_SEPARATOR: &str = " [SEP] ";

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("example {id}: highlighted cell ({row}, {col}) outside a {n_rows}x{n_cols} table")]
    CoordOutOfRange {
        id: String,
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("line {line}: duplicate example id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("table has no cells")]
    Empty,
    #[error("cell cap {cap} is smaller than the column count {n_cols}")]
    CapTooSmall { cap: usize, n_cols: usize },
    #[error("example {0} has no gold cells")]
    NoGoldCells(String),
    #[error("cell ({row}, {col}) is outside the table")]
    OutOfRange { row: usize, col: usize },
    #[error("cell ({row}, {col}) is in the header row")]
    HeaderCell { row: usize, col: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Zero-based position of a cell; row 0 is the column-header row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellCoord {
    pub row: usize,
    pub col: usize,
}

impl CellCoord {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Rectangular grid of cell texts. Row 0 holds the column headers.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    cells: Vec<Vec<String>>,
    n_cols: usize,
    truncated: bool,
}

impl Table {
    /// Builds a table from possibly ragged rows, padding short rows with empty cells.
    pub fn from_rows(rows: Vec<Vec<String>>) -> Result<Self, TableError> {
        let n_cols = rows.iter().map(Vec::len).max().unwrap_or(0);
        if rows.is_empty() || n_cols == 0 {
            return Err(TableError::Empty);
        }
        let cells = rows
            .into_iter()
            .map(|mut row| {
                row.resize(n_cols, String::new());
                row
            })
            .collect();
        Ok(Self {
            cells,
            n_cols,
            truncated: false,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.cells.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_cells(&self) -> usize {
        self.n_rows() * self.n_cols
    }

    pub fn cell(&self, row: usize, col: usize) -> &str {
        &self.cells[row][col]
    }

    pub fn get(&self, coord: CellCoord) -> Option<&str> {
        self.cells
            .get(coord.row)
            .and_then(|r| r.get(coord.col))
            .map(String::as_str)
    }

    pub fn header(&self, col: usize) -> &str {
        &self.cells[0][col]
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.cells
    }

    /// Whether rows were dropped to respect the cell cap.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn contains(&self, coord: CellCoord) -> bool {
        coord.row < self.n_rows() && coord.col < self.n_cols
    }
}

/// Keeps the header row and the longest prefix of data rows that fits in `cap` cells.
pub fn truncate_table(table: &Table, cap: usize) -> Result<Table, TableError> {
    let n_cols = table.n_cols();
    if cap < n_cols {
        return Err(TableError::CapTooSmall { cap, n_cols });
    }
    let keep = (cap / n_cols).min(table.n_rows());
    let mut out = table.clone();
    if keep < table.n_rows() {
        out.cells.truncate(keep);
        out.truncated = true;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExampleMetadata {
    pub page_title: Option<String>,
    pub section_title: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaExample {
    pub id: String,
    pub question: String,
    pub table: Table,
    pub gold_cells: Vec<CellCoord>,
    pub answer: String,
    pub metadata: ExampleMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub examples: Vec<QaExample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&QaExample> {
        self.examples.iter().find(|e| e.id == id)
    }

    /// Number of examples whose table was cut down to the cell cap.
    pub fn truncated_count(&self) -> usize {
        self.examples.iter().filter(|e| e.table.is_truncated()).count()
    }
}

/// On-disk record layout, one JSON object per line.
#[derive(Debug, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub question: String,
    pub table: Vec<Vec<String>>,
    pub highlighted_cells: Vec<[usize; 2]>,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section_title: Option<String>,
}

impl From<&QaExample> for ExampleRecord {
    fn from(ex: &QaExample) -> Self {
        ExampleRecord {
            id: ex.id.clone(),
            question: ex.question.clone(),
            table: ex.table.rows().to_vec(),
            highlighted_cells: ex.gold_cells.iter().map(|c| [c.row, c.col]).collect(),
            answer: ex.answer.clone(),
            page_title: ex.metadata.page_title.clone(),
            section_title: ex.metadata.section_title.clone(),
        }
    }
}

/// Parses line-delimited example records. Blank lines are skipped.
///
/// Highlighted cells are validated against the table before truncation; cells
/// that fall in dropped rows are removed together with those rows.
pub fn parse_dataset<R: BufRead>(reader: R, split: Split, cap: usize) -> Result<Dataset, TableError> {
    let mut examples = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ExampleRecord = serde_json::from_str(&line).map_err(|e| TableError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let table = Table::from_rows(record.table).map_err(|e| TableError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let mut gold_cells = Vec::with_capacity(record.highlighted_cells.len());
        for [row, col] in record.highlighted_cells {
            let coord = CellCoord::new(row, col);
            if !table.contains(coord) {
                return Err(TableError::CoordOutOfRange {
                    id: record.id,
                    row,
                    col,
                    n_rows: table.n_rows(),
                    n_cols: table.n_cols(),
                });
            }
            gold_cells.push(coord);
        }
        let table = truncate_table(&table, cap).map_err(|e| TableError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        gold_cells.retain(|c| table.contains(*c));
        if !seen.insert(record.id.clone()) {
            return Err(TableError::DuplicateId {
                line: line_no,
                id: record.id,
            });
        }
        examples.push(QaExample {
            id: record.id,
            question: record.question,
            table,
            gold_cells,
            answer: record.answer,
            metadata: ExampleMetadata {
                page_title: record.page_title,
                section_title: record.section_title,
            },
        });
    }
    Ok(Dataset { split, examples })
}

pub fn write_dataset<W: Write>(dataset: &Dataset, mut writer: W) -> std::io::Result<()> {
    for ex in &dataset.examples {
        let line = serde_json::to_string(&ExampleRecord::from(ex))?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Row and column relevance labels projected from the gold cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowColLabels {
    pub rows: Vec<bool>,
    pub cols: Vec<bool>,
}

pub fn derive_row_col_labels(example: &QaExample) -> Result<RowColLabels, TableError> {
    if example.gold_cells.is_empty() {
        return Err(TableError::NoGoldCells(example.id.clone()));
    }
    let mut rows = vec![false; example.table.n_rows()];
    let mut cols = vec![false; example.table.n_cols()];
    for c in &example.gold_cells {
        rows[c.row] = true;
        cols[c.col] = true;
    }
    Ok(RowColLabels { rows, cols })
}

/// Renders data cells as `"{header} is {value}"` slots joined by `" [SEP] "`, row-major.
pub fn linearize_cells(table: &Table, coords: &[CellCoord]) -> Result<String, TableError> {
    let mut sorted = coords.to_vec();
    for c in &sorted {
        if !table.contains(*c) {
            return Err(TableError::OutOfRange { row: c.row, col: c.col });
        }
        if c.row == 0 {
            return Err(TableError::HeaderCell { row: c.row, col: c.col });
        }
    }
    sorted.sort();
    let slots: Vec<String> = sorted
        .iter()
        .map(|c| format!("{} is {}", table.header(c.col), table.cell(c.row, c.col)))
        .collect();
    Ok(slots.join(SLOT_SEPARATOR))
}

//! Typed graph view of a (question, table) pair.
//!
//! Node ids are assigned deterministically: the question is node 0, row headers
//! `rh_0..rh_{R-1}` follow, then every cell in row-major order.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::table::{CellCoord, Table};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("cannot build a graph from an empty table")]
    EmptyTable,
    #[error("unknown node id {0}")]
    UnknownNode(usize),
    #[error("permutation has length {got}, graph has {expected} nodes")]
    BadPermutation { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Question,
    RowHeader,
    ColumnHeader,
    DataCell,
}

impl NodeKind {
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Question => "question",
            NodeKind::RowHeader => "row_header",
            NodeKind::ColumnHeader => "column_header",
            NodeKind::DataCell => "data_cell",
        }
    }
}

/// Edge relation. `SelfLoop` is never stored in a graph; the attention layer adds it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationKind {
    SameRow,
    SameColumn,
    QuestionToCell,
    SelfLoop,
}

impl RelationKind {
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationKind::SameRow => "same_row",
            RelationKind::SameColumn => "same_column",
            RelationKind::QuestionToCell => "question_to_cell",
            RelationKind::SelfLoop => "self_loop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    pub text: String,
    pub coord: Option<CellCoord>,
}

/// Undirected edge; message passing treats it as two directed edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub relation: RelationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, RelationKind)>>,
    n_rows: usize,
    n_cols: usize,
    question_id: usize,
    row_header_ids: Vec<usize>,
    column_header_ids: Vec<usize>,
    cell_ids: Vec<usize>,
}

impl TableGraph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Undirected edges, each listed once.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn question_id(&self) -> usize {
        self.question_id
    }

    pub fn row_header_ids(&self) -> &[usize] {
        &self.row_header_ids
    }

    pub fn column_header_ids(&self) -> &[usize] {
        &self.column_header_ids
    }

    pub fn cell_id(&self, coord: CellCoord) -> Option<usize> {
        if coord.row < self.n_rows && coord.col < self.n_cols {
            Some(self.cell_ids[coord.row * self.n_cols + coord.col])
        } else {
            None
        }
    }

    pub fn kinds(&self) -> Vec<NodeKind> {
        self.nodes.iter().map(|n| n.kind).collect()
    }

    /// Neighbors of `id` in ascending id order.
    pub fn neighborhood(&self, id: usize) -> Result<&[(usize, RelationKind)], GraphError> {
        self.adjacency
            .get(id)
            .map(Vec::as_slice)
            .ok_or(GraphError::UnknownNode(id))
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<TableGraph, GraphError> {
        let n = self.nodes.len();
        let distinct: BTreeSet<usize> = perm.iter().copied().collect();
        if perm.len() != n || distinct.len() != n || perm.iter().any(|&p| p >= n) {
            return Err(GraphError::BadPermutation {
                expected: n,
                got: perm.len(),
            });
        }
        let mut nodes = self.nodes.clone();
        for node in &self.nodes {
            let mut moved = node.clone();
            moved.id = perm[node.id];
            let slot = moved.id;
            nodes[slot] = moved;
        }
        let edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| {
                let (a, b) = (perm[e.a], perm[e.b]);
                Edge {
                    a: a.min(b),
                    b: a.max(b),
                    relation: e.relation,
                }
            })
            .collect();
        let map = |ids: &[usize]| ids.iter().map(|&i| perm[i]).collect::<Vec<_>>();
        Ok(TableGraph {
            adjacency: build_adjacency(n, &edges),
            nodes,
            edges,
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            question_id: perm[self.question_id],
            row_header_ids: map(&self.row_header_ids),
            column_header_ids: map(&self.column_header_ids),
            cell_ids: map(&self.cell_ids),
        })
    }

    /// Line-oriented dump: `node id kind row col text` then `edge src dst relation`.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            let (r, c) = match n.coord {
                Some(c) => (c.row.to_string(), c.col.to_string()),
                None => ("-".into(), "-".into()),
            };
            let _ = writeln!(out, "node {} {} {} {} {}", n.id, n.kind.name(), r, c, n.text);
        }
        for e in &self.edges {
            let _ = writeln!(out, "edge {} {} {}", e.a, e.b, e.relation.name());
        }
        out
    }
}

fn build_adjacency(n: usize, edges: &[Edge]) -> Vec<Vec<(usize, RelationKind)>> {
    let mut adjacency = vec![Vec::new(); n];
    for e in edges {
        adjacency[e.a].push((e.b, e.relation));
        adjacency[e.b].push((e.a, e.relation));
    }
    for list in &mut adjacency {
        list.sort();
    }
    adjacency
}

pub fn build_graph(table: &Table, question: &str) -> Result<TableGraph, GraphError> {
    let (n_rows, n_cols) = (table.n_rows(), table.n_cols());
    if n_rows == 0 || n_cols == 0 {
        return Err(GraphError::EmptyTable);
    }
    let mut nodes = Vec::with_capacity(n_rows * n_cols + n_rows + 1);
    nodes.push(Node {
        id: 0,
        kind: NodeKind::Question,
        text: question.to_string(),
        coord: None,
    });
    let row_header_ids: Vec<usize> = (0..n_rows)
        .map(|i| {
            let id = nodes.len();
            nodes.push(Node {
                id,
                kind: NodeKind::RowHeader,
                text: format!("row {i}"),
                coord: None,
            });
            id
        })
        .collect();
    let mut cell_ids = Vec::with_capacity(n_rows * n_cols);
    for r in 0..n_rows {
        for c in 0..n_cols {
            let id = nodes.len();
            nodes.push(Node {
                id,
                kind: if r == 0 {
                    NodeKind::ColumnHeader
                } else {
                    NodeKind::DataCell
                },
                text: table.cell(r, c).to_string(),
                coord: Some(CellCoord::new(r, c)),
            });
            cell_ids.push(id);
        }
    }

    let mut edges = Vec::new();
    let clique = |members: &[usize], relation: RelationKind, edges: &mut Vec<Edge>| {
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                edges.push(Edge { a, b, relation });
            }
        }
    };
    for r in 0..n_rows {
        let mut members = vec![row_header_ids[r]];
        members.extend_from_slice(&cell_ids[r * n_cols..(r + 1) * n_cols]);
        clique(&members, RelationKind::SameRow, &mut edges);
    }
    for c in 0..n_cols {
        let members: Vec<usize> = (0..n_rows).map(|r| cell_ids[r * n_cols + c]).collect();
        clique(&members, RelationKind::SameColumn, &mut edges);
    }
    for &cell in &cell_ids {
        edges.push(Edge {
            a: 0,
            b: cell,
            relation: RelationKind::QuestionToCell,
        });
    }

    let column_header_ids = cell_ids[..n_cols].to_vec();
    Ok(TableGraph {
        adjacency: build_adjacency(nodes.len(), &edges),
        nodes,
        edges,
        n_rows,
        n_cols,
        question_id: 0,
        row_header_ids,
        column_header_ids,
        cell_ids,
    })
}

use crate::table::{CellCoord, Table};

/// Indices of the `k` largest scores; ties go to the lower index.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Cells at the intersection of the top rows and top columns, excluding the header row,
/// in row-major order.
pub fn select_cells(row_logits: &[f64], col_logits: &[f64], table: &Table, k_rows: usize, k_cols: usize) -> Vec<CellCoord> {
    let n_rows = row_logits.len().min(table.n_rows());
    let n_cols = col_logits.len().min(table.n_cols());
    let mut rows = top_k_indices(&row_logits[..n_rows], k_rows);
    let mut cols = top_k_indices(&col_logits[..n_cols], k_cols);
    rows.sort_unstable();
    cols.sort_unstable();
    rows.iter()
        .filter(|&&r| r != 0)
        .flat_map(|&r| cols.iter().map(move |&c| CellCoord::new(r, c)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n_rows: usize, n_cols: usize) -> Table {
        Table::from_rows(vec![vec!["x".to_string(); n_cols]; n_rows]).unwrap()
    }

    #[test]
    fn header_row_is_never_returned() {
        let cells = select_cells(&[5.0, 1.0], &[0.2, 0.1], &grid(2, 2), 3, 3);
        assert_eq!(cells, vec![CellCoord::new(1, 0), CellCoord::new(1, 1)]);
    }

    #[test]
    fn intersection_of_top_rows_and_columns() {
        // top-3 rows of [0.1, 0.9, 0.8, 0.2] are 1, 2, 3; row 0 is the lowest.
        let cells = select_cells(&[0.1, 0.9, 0.8, 0.2], &[0.9, 0.1], &grid(4, 2), 3, 3);
        let expected: Vec<CellCoord> = [(1, 0), (1, 1), (2, 0), (2, 1), (3, 0), (3, 1)]
            .iter()
            .map(|&(r, c)| CellCoord::new(r, c))
            .collect();
        assert_eq!(cells, expected);

        // a high-scoring header row takes a slot but contributes no cells
        let cells = select_cells(&[0.95, 0.9, 0.8, 0.2], &[0.9, 0.1], &grid(4, 2), 3, 3);
        assert_eq!(cells.len(), 4);
        assert!(cells.iter().all(|c| c.row == 1 || c.row == 2));
    }

    #[test]
    fn ties_prefer_lower_indices() {
        assert_eq!(top_k_indices(&[1.0; 6], 3), vec![0, 1, 2]);
        let cells = select_cells(&[0.0; 6], &[0.0; 5], &grid(6, 5), 3, 3);
        let rows: std::collections::BTreeSet<_> = cells.iter().map(|c| c.row).collect();
        let cols: std::collections::BTreeSet<_> = cells.iter().map(|c| c.col).collect();
        assert_eq!(rows.into_iter().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(cols.into_iter().collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}

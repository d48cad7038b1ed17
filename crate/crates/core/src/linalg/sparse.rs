use crate::error::{NmfError, Result};

use super::DenseMatrix;

/// Compressed sparse row storage with strictly increasing column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Validates and wraps raw CSR arrays.
    pub fn new(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(NmfError::InvalidMatrix(msg));
        if row_offsets.len() != rows + 1 {
            return bad(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                rows + 1
            ));
        }
        if row_offsets[0] != 0 {
            return bad("row_offsets must start at 0".into());
        }
        if col_indices.len() != values.len() || row_offsets[rows] != values.len() {
            return bad(format!(
                "nnz mismatch: row_offsets ends at {}, {} indices, {} values",
                row_offsets[rows],
                col_indices.len(),
                values.len()
            ));
        }
        for i in 0..rows {
            let (start, end) = (row_offsets[i], row_offsets[i + 1]);
            if end < start {
                return bad(format!("row_offsets decreases at row {i}"));
            }
            let idx = &col_indices[start..end];
            if let Some(&j) = idx.iter().find(|&&j| j >= cols) {
                return bad(format!("column index {j} out of range in row {i}"));
            }
            if idx.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("column indices not strictly increasing in row {i}"));
            }
            if let Some(k) = values[start..end].iter().position(|&v| !(v >= 0.0)) {
                return bad(format!(
                    "negative entry {} at ({i}, {})",
                    values[start + k],
                    idx[k]
                ));
            }
        }
        Ok(Self {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds a CSR matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        if let Some(&(i, j, _)) = entries.iter().find(|&&(i, j, _)| i >= rows || j >= cols) {
            return Err(NmfError::InvalidMatrix(format!(
                "triplet ({i}, {j}) outside {rows}x{cols}"
            )));
        }
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));

        let mut row_offsets = vec![0usize; rows + 1];
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((i, j));
            row_offsets[i + 1] += 1;
            col_indices.push(j);
            values.push(v);
        }
        for i in 0..rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self::new(rows, cols, row_offsets, col_indices, values)
    }

    /// Keeps the nonzero entries of a dense matrix.
    pub fn from_dense(dense: &DenseMatrix) -> Result<Self> {
        let triplets = (0..dense.rows()).flat_map(|i| {
            dense
                .row(i)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(move |(j, &v)| (i, j, v))
        });
        Self::from_triplets(dense.rows(), dense.cols(), triplets)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_offsets: vec![0; rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (idx, vals) = self.row(i);
            for (&j, &v) in idx.iter().zip(vals) {
                out[(i, j)] = v;
            }
        }
        out
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (start, end) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[start..end], &self.values[start..end])
    }
}

//! Compressed sparse row storage for binary matrices.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// An `rows × cols` matrix whose stored entries are all exactly one.
///
/// Row `r` owns `col_idx[row_ptr[r]..row_ptr[r + 1]]`, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseBinary {
    cols: usize,
    row_ptr: Vec<u64>,
    col_idx: Vec<u32>,
}

impl SparseBinary {
    pub fn empty(cols: usize) -> Self {
        SparseBinary { cols, row_ptr: vec![0], col_idx: Vec::new() }
    }

    /// Builds from raw CSR arrays, checking every structural invariant.
    pub fn from_csr(cols: usize, row_ptr: Vec<u64>, col_idx: Vec<u32>) -> Result<Self> {
        if row_ptr.first() != Some(&0) {
            return Err(Error::Format("row pointer must start at 0".into()));
        }
        if *row_ptr.last().unwrap() as usize != col_idx.len() {
            return Err(Error::Format("row pointer does not end at nnz".into()));
        }
        for (r, w) in row_ptr.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(Error::Format(format!("row pointer decreases at row {r}")));
            }
            let row = &col_idx[w[0] as usize..w[1] as usize];
            if row.windows(2).any(|p| p[1] <= p[0]) {
                return Err(Error::Format(format!("row {r} indices not strictly increasing")));
            }
            if row.last().is_some_and(|&c| c as usize >= cols) {
                return Err(Error::Format(format!("row {r} has column index out of range")));
            }
        }
        Ok(SparseBinary { cols, row_ptr, col_idx })
    }

    /// Builds from per-row index lists; each list is sorted and deduplicated.
    pub fn from_rows<I>(cols: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<u32>>,
    {
        let mut m = SparseBinary::empty(cols);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            m.push_row(&row)?;
        }
        Ok(m)
    }

    /// Thresholds a dense matrix: entries `> 0.5` become ones.
    pub fn from_dense(x: &Array2<f64>) -> Self {
        let mut m = SparseBinary::empty(x.ncols());
        for row in x.rows() {
            m.col_idx.extend(row.iter().enumerate().filter(|(_, &v)| v > 0.5).map(|(j, _)| j as u32));
            m.row_ptr.push(m.col_idx.len() as u64);
        }
        m
    }

    /// Appends a row given as strictly increasing column indices.
    pub fn push_row(&mut self, row: &[u32]) -> Result<()> {
        if row.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::Contract("row indices must be strictly increasing".into()));
        }
        if row.last().is_some_and(|&c| c as usize >= self.cols) {
            return Err(Error::Dimension(format!("column index out of range for {} columns", self.cols)));
        }
        self.col_idx.extend_from_slice(row);
        self.row_ptr.push(self.col_idx.len() as u64);
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[r] as usize..self.row_ptr[r + 1] as usize]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        (0..self.rows()).map(move |r| self.row(r))
    }

    pub fn row_ptr(&self) -> &[u64] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    /// Whether entry `(r, c)` is one.
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.row(r).binary_search(&(c as u32)).is_ok()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        self.dense_rows(0..self.rows())
    }

    /// Densifies the given rows, in order.
    pub fn dense_rows<I>(&self, rows: I) -> Array2<f64>
    where
        I: IntoIterator<Item = usize>,
        I::IntoIter: ExactSizeIterator,
    {
        let rows = rows.into_iter();
        let mut out = Array2::zeros((rows.len(), self.cols));
        for (i, r) in rows.enumerate() {
            for &c in self.row(r) {
                out[[i, c as usize]] = 1.0;
            }
        }
        out
    }

    /// Dense `rows × columns.len()` matrix restricted to the chosen columns.
    pub fn dense_columns(&self, columns: &[usize]) -> Array2<f64> {
        let mut lookup = vec![usize::MAX; self.cols];
        for (k, &c) in columns.iter().enumerate() {
            lookup[c] = k;
        }
        let mut out = Array2::zeros((self.rows(), columns.len()));
        for r in 0..self.rows() {
            for &c in self.row(r) {
                let k = lookup[c as usize];
                if k != usize::MAX {
                    out[[r, k]] = 1.0;
                }
            }
        }
        out
    }

    /// Number of ones in each column.
    pub fn column_counts(&self) -> Array1<u64> {
        let mut counts = Array1::zeros(self.cols);
        for &c in &self.col_idx {
            counts[c as usize] += 1;
        }
        counts
    }

    /// Sub-matrix holding the selected rows.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut m = SparseBinary::empty(self.cols);
        for &r in rows {
            m.col_idx.extend_from_slice(self.row(r));
            m.row_ptr.push(m.col_idx.len() as u64);
        }
        m
    }
}

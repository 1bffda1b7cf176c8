//! Compressed sparse row matrices.
//!
//! Column indices are strictly increasing within each row, no explicit
//! zeros are stored, and all values are finite.

use std::io::{Read, Write};

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Assembles a matrix from raw CSR arrays, checking every invariant.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != rows + 1 || indptr[0] != 0 {
            return Err(Error::Format("row pointer array has wrong shape".into()));
        }
        if indices.len() != values.len() || *indptr.last().unwrap() != indices.len() {
            return Err(Error::Format("index/value arrays disagree with row pointers".into()));
        }
        for r in 0..rows {
            let (lo, hi) = (indptr[r], indptr[r + 1]);
            if lo > hi {
                return Err(Error::Format(format!("row pointers decrease at row {r}")));
            }
            let row = &indices[lo..hi];
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Format(format!("column indices not increasing in row {r}")));
            }
            if row.last().is_some_and(|&c| c >= cols) {
                return Err(Error::Format(format!("column index out of range in row {r}")));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v == 0.0) {
            return Err(Error::Format(format!("stored value {v} is zero or non-finite")));
        }
        Ok(Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Builds from per-row `(col, value)` lists sorted by column. Zeros are
    /// skipped.
    pub fn from_sorted_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        indptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for row in rows {
            for (c, v) in row {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self::from_parts(n, cols, indptr, indices, values)
    }

    pub fn from_dense(dense: &Array2<f64>) -> Self {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for row in dense.rows() {
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows: dense.nrows(),
            cols: dense.ncols(),
            indptr,
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out[[r, c]] = v;
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates the stored `(col, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }

    /// Keeps the listed rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for &r in rows {
            let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
            indices.extend_from_slice(&self.indices[lo..hi]);
            values.extend_from_slice(&self.values[lo..hi]);
            indptr.push(indices.len());
        }
        Self {
            rows: rows.len(),
            cols: self.cols,
            indptr,
            indices,
            values,
        }
    }

    /// Applies `f(row, col, value)` to every stored entry, keeping the
    /// sparsity pattern; results equal to zero are dropped.
    pub fn map_entries(&self, f: impl Fn(usize, usize, f64) -> f64) -> Self {
        let mut indptr = vec![0];
        let mut indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                let nv = f(r, c, v);
                if nv != 0.0 {
                    indices.push(c);
                    values.push(nv);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for (&c, &v) in self.indices.iter().zip(&self.values) {
            sums[c] += v;
        }
        sums
    }

    /// Number of stored entries per column.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.cols];
        for &c in &self.indices {
            counts[c] += 1;
        }
        counts
    }

    /// Product `self · rhs` with a dense right-hand side.
    pub fn dot_dense(&self, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        if rhs.nrows() != self.cols {
            return Err(Error::Dimension(format!(
                "sparse {}x{} times dense {}x{}",
                self.rows,
                self.cols,
                rhs.nrows(),
                rhs.ncols()
            )));
        }
        let mut out = Array2::zeros((self.rows, rhs.ncols()));
        for r in 0..self.rows {
            let mut out_row = out.row_mut(r);
            for (c, v) in self.row(r) {
                out_row.scaled_add(v, &rhs.row(c));
            }
        }
        Ok(out)
    }

    /// Product `selfᵀ · other` of two sparse matrices sharing rows,
    /// returned dense (`self.cols × other.cols`).
    pub fn transpose_dot(&self, other: &CsrMatrix) -> Result<Array2<f64>> {
        if self.rows != other.rows {
            return Err(Error::Dimension(format!(
                "transpose product needs equal row counts, got {} and {}",
                self.rows, other.rows
            )));
        }
        let mut out = Array2::zeros((self.cols, other.cols));
        for k in 0..self.rows {
            for (j, y) in other.row(k) {
                for (i, x) in self.row(k) {
                    out[[i, j]] += x * y;
                }
            }
        }
        Ok(out)
    }

    /// Little-endian dump: `rows, cols, nnz` as u64, then `rows + 1` row
    /// pointers (u64), `nnz` column indices (u64) and `nnz` values (f64).
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        for x in [self.rows, self.cols, self.nnz()] {
            w.write_all(&(x as u64).to_le_bytes())?;
        }
        for &p in &self.indptr {
            w.write_all(&(p as u64).to_le_bytes())?;
        }
        for &c in &self.indices {
            w.write_all(&(c as u64).to_le_bytes())?;
        }
        for &v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let rows = next(&mut r)? as usize;
        let cols = next(&mut r)? as usize;
        let nnz = next(&mut r)? as usize;
        let indptr = (0..=rows)
            .map(|_| next(&mut r).map(|x| x as usize))
            .collect::<Result<Vec<_>>>()?;
        let indices = (0..nnz)
            .map(|_| next(&mut r).map(|x| x as usize))
            .collect::<Result<Vec<_>>>()?;
        let values = (0..nnz)
            .map(|_| next(&mut r).map(f64::from_bits))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(rows, cols, indptr, indices, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn dense_roundtrip_drops_zeros() {
        let d = array![[0.0, 1.5, 0.0], [2.0, 0.0, -1.0]];
        let s = CsrMatrix::from_dense(&d);
        assert_eq!(s.nnz(), 3);
        assert_eq!(s.to_dense(), d);
    }

    #[test]
    fn rejects_bad_parts() {
        assert!(CsrMatrix::from_parts(1, 2, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(CsrMatrix::from_parts(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
        assert!(CsrMatrix::from_parts(1, 2, vec![0, 1], vec![0], vec![f64::NAN]).is_err());
        assert!(CsrMatrix::from_parts(1, 2, vec![0, 1], vec![0], vec![0.0]).is_err());
    }

    #[test]
    fn binary_roundtrip_is_exact() {
        let d = array![[0.1, 0.0], [0.0, 1.0 / 3.0], [0.0, 0.0]];
        let s = CsrMatrix::from_dense(&d);
        let mut buf = Vec::new();
        s.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 * (3 + 4 + 2 + 2));
        assert_eq!(CsrMatrix::read_binary(&buf[..]).unwrap(), s);
    }

    #[test]
    fn products_match_dense() {
        let x = array![[1.0, 0.0, 2.0], [0.0, 3.0, 0.0]];
        let e = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let s = CsrMatrix::from_dense(&x);
        assert_eq!(s.dot_dense(&e).unwrap(), x.dot(&e));
        let y = CsrMatrix::from_dense(&array![[1.0, 0.0], [1.0, 1.0]]);
        assert_eq!(s.transpose_dot(&y).unwrap(), x.t().dot(&y.to_dense()));
        assert!(s.dot_dense(&array![[1.0]]).is_err());
    }
}

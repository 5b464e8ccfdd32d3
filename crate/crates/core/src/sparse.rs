//! Compressed sparse row storage and the matrix-free products the sampler
//! needs: `X b`, `Xᵀ r` and `(XᵀX + diag(s)) x`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major compressed sparse matrix. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SparseMatrix<T> {
    /// Builds a CSR matrix from `(row, col, value)` entries. Duplicates are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        entries: &[(usize, usize, T)],
    ) -> Result<Self> {
        for &(row, col, _) in entries {
            if row >= n_rows || col >= n_cols {
                return Err(Error::Index {
                    row,
                    col,
                    n_rows,
                    n_cols,
                });
            }
        }
        let mut sorted: Vec<(usize, usize, T)> = entries.to_vec();
        sorted.sort_by_key(|e| (e.0, e.1));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<T> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (row, col, value) in sorted {
            if last == Some((row, col)) {
                *values.last_mut().unwrap() += value;
            } else {
                col_indices.push(col);
                values.push(value);
                row_offsets[row + 1] += 1;
                last = Some((row, col));
            }
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Assembles a matrix from raw CSR arrays, checking every invariant.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::dim("row_offsets", n_rows + 1, row_offsets.len()));
        }
        if col_indices.len() != values.len() {
            return Err(Error::dim("col_indices", values.len(), col_indices.len()));
        }
        if row_offsets[0] != 0 || row_offsets[n_rows] != values.len() {
            return Err(Error::Domain("row_offsets must span [0, nnz]".into()));
        }
        for r in 0..n_rows {
            let (start, end) = (row_offsets[r], row_offsets[r + 1]);
            if start > end {
                return Err(Error::Domain(format!("row_offsets decrease at row {r}")));
            }
            let cols = &col_indices[start..end];
            if let Some(&c) = cols.iter().find(|&&c| c >= n_cols) {
                return Err(Error::Index {
                    row: r,
                    col: c,
                    n_rows,
                    n_cols,
                });
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Domain(format!(
                    "column indices of row {r} not strictly increasing"
                )));
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn from_dense(rows: &[Vec<T>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::dim("dense row width", n_cols, row.len()));
            }
            for (c, &v) in row.iter().enumerate() {
                if v != T::zero() {
                    entries.push((r, c, v));
                }
            }
        }
        Self::from_triplets(n_rows, n_cols, &entries)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Column indices and values of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        (&self.col_indices[range.clone()], &self.values[range])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut dense = vec![vec![T::zero(); self.n_cols]; self.n_rows];
        for (r, c, v) in self.triplets() {
            dense[r][c] = v;
        }
        dense
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for &r in rows {
            if r >= self.n_rows {
                return Err(Error::Index {
                    row: r,
                    col: 0,
                    n_rows: self.n_rows,
                    n_cols: self.n_cols,
                });
            }
            let (cols, vals) = self.row(r);
            col_indices.extend_from_slice(cols);
            values.extend_from_slice(vals);
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Converts the stored values to another real type.
    pub fn cast<U: Real>(&self) -> SparseMatrix<U> {
        SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets: self.row_offsets.clone(),
            col_indices: self.col_indices.clone(),
            values: self.values.iter().map(|v| U::narrow(v.widen())).collect(),
        }
    }

    /// Column-major copy as `(row indices, values)` per column, rows ascending.
    pub fn columns(&self) -> Vec<(Vec<usize>, Vec<T>)> {
        let mut counts = vec![0usize; self.n_cols];
        for &c in &self.col_indices {
            counts[c] += 1;
        }
        let mut cols: Vec<(Vec<usize>, Vec<T>)> = counts
            .iter()
            .map(|&n| (Vec::with_capacity(n), Vec::with_capacity(n)))
            .collect();
        for (r, c, v) in self.triplets() {
            cols[c].0.push(r);
            cols[c].1.push(v);
        }
        cols
    }

    /// `out = A x`
    pub fn spmv_into(&self, x: &[T], out: &mut [T]) -> Result<()> {
        if x.len() != self.n_cols {
            return Err(Error::dim("spmv input", self.n_cols, x.len()));
        }
        if out.len() != self.n_rows {
            return Err(Error::dim("spmv output", self.n_rows, out.len()));
        }
        for (r, o) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            let acc: f64 = cols
                .iter()
                .zip(vals)
                .map(|(&c, &v)| v.widen() * x[c].widen())
                .sum();
            *o = T::narrow(acc);
        }
        Ok(())
    }

    pub fn spmv(&self, x: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.n_rows];
        self.spmv_into(x, &mut out)?;
        Ok(out)
    }

    /// `out = Aᵀ x`, scattering over rows so `Aᵀ` is never stored.
    pub fn spmv_t_into(&self, x: &[T], out: &mut [T]) -> Result<()> {
        if x.len() != self.n_rows {
            return Err(Error::dim("spmv_t input", self.n_rows, x.len()));
        }
        if out.len() != self.n_cols {
            return Err(Error::dim("spmv_t output", self.n_cols, out.len()));
        }
        let mut acc = vec![0.0f64; self.n_cols];
        for (r, &xr) in x.iter().enumerate() {
            let xr = xr.widen();
            if xr == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                acc[c] += v.widen() * xr;
            }
        }
        for (o, a) in out.iter_mut().zip(acc) {
            *o = T::narrow(a);
        }
        Ok(())
    }

    pub fn spmv_t(&self, x: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.n_cols];
        self.spmv_t_into(x, &mut out)?;
        Ok(out)
    }

    /// `(AᵀA + diag(shift)) x` without forming `AᵀA`.
    pub fn gram_apply(&self, shift: &[T], x: &[T]) -> Result<Vec<T>> {
        check_shift(shift, self.n_cols)?;
        let mut out = vec![T::zero(); self.n_cols];
        let mut tmp = vec![T::zero(); self.n_rows];
        self.gram_apply_into(shift, x, &mut tmp, &mut out)?;
        Ok(out)
    }

    /// Allocation-free Gram product; `scratch` must have length `n_rows`.
    /// The shift is not re-validated here.
    pub(crate) fn gram_apply_into(
        &self,
        shift: &[T],
        x: &[T],
        scratch: &mut [T],
        out: &mut [T],
    ) -> Result<()> {
        self.spmv_into(x, scratch)?;
        self.spmv_t_into(scratch, out)?;
        for ((o, &s), &xi) in out.iter_mut().zip(shift).zip(x) {
            *o += s * xi;
        }
        Ok(())
    }
}

pub(crate) fn check_shift<T: Real>(shift: &[T], n: usize) -> Result<()> {
    if shift.len() != n {
        return Err(Error::dim("diagonal shift", n, shift.len()));
    }
    if let Some((i, s)) = shift.iter().enumerate().find(|(_, s)| !(**s > T::zero())) {
        return Err(Error::Domain(format!(
            "diagonal shift entry {i} = {s} must be positive"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(rng: &mut ChaCha8Rng, n: usize, m: usize, fill: f64) -> SparseMatrix<f64> {
        let mut entries = Vec::new();
        for r in 0..n {
            for c in 0..m {
                if rng.random::<f64>() < fill {
                    entries.push((r, c, rng.random_range(-2.0..2.0)));
                }
            }
        }
        SparseMatrix::from_triplets(n, m, &entries).unwrap()
    }

    fn dense_mv(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn dense_tmv(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        let m = a.first().map_or(0, Vec::len);
        (0..m)
            .map(|c| a.iter().zip(x).map(|(row, xi)| row[c] * xi).sum())
            .collect()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn triplets_single_duplicate_and_layout() {
        let a = SparseMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]).unwrap();
        assert_eq!(a.to_dense(), vec![vec![1.0]]);

        let a = SparseMatrix::from_triplets(1, 1, &[(0, 0, 1.0), (0, 0, 2.0)]).unwrap();
        assert_eq!(a.to_dense(), vec![vec![3.0]]);
        assert_eq!(a.nnz(), 1);

        let a = SparseMatrix::from_triplets(2, 2, &[(1, 0, 2.0), (0, 1, 3.0)]).unwrap();
        assert_eq!(a.to_dense(), vec![vec![0.0, 3.0], vec![2.0, 0.0]]);
        assert_eq!(a.row_offsets(), &[0, 1, 2]);
    }

    #[test]
    fn triplets_out_of_range() {
        let err = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 5, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::Index { row: 0, col: 5, .. }));
    }

    #[test]
    fn from_csr_rejects_unsorted_columns() {
        let err = SparseMatrix::<f64>::from_csr(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0])
            .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn spmv_hand_examples() {
        let id = SparseMatrix::<f64>::identity(3);
        assert_eq!(id.spmv(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(id.spmv_t(&[4.0, 5.0, 6.0]).unwrap(), vec![4.0, 5.0, 6.0]);

        let a = SparseMatrix::from_triplets(2, 2, &[(1, 0, 2.0), (0, 1, 3.0)]).unwrap();
        assert_eq!(a.spmv(&[1.0, 1.0]).unwrap(), vec![3.0, 2.0]);
        assert_eq!(a.spmv_t(&[1.0, 1.0]).unwrap(), vec![2.0, 3.0]);
    }

    #[test]
    fn dimension_errors() {
        let a = SparseMatrix::<f64>::identity(3);
        assert!(matches!(a.spmv(&[1.0]), Err(Error::Dimension { .. })));
        assert!(matches!(a.spmv_t(&[1.0, 2.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn spmv_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_sparse(&mut rng, 5, 4, 0.5);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dense = a.to_dense();
        assert!(max_abs_diff(&a.spmv(&x).unwrap(), &dense_mv(&dense, &x)) <= 1e-14);

        let a = random_sparse(&mut rng, 6, 3, 0.5);
        let z: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dense = a.to_dense();
        assert!(max_abs_diff(&a.spmv_t(&z).unwrap(), &dense_tmv(&dense, &z)) <= 1e-14);
    }

    #[test]
    fn gram_apply_examples() {
        let id = SparseMatrix::<f64>::identity(2);
        assert_eq!(id.gram_apply(&[1.0, 1.0], &[1.0, 2.0]).unwrap(), vec![2.0, 4.0]);

        let a = SparseMatrix::from_dense(&[vec![1.0, 1.0]]).unwrap();
        assert_eq!(a.gram_apply(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), vec![1.5, 1.0]);

        let err = a.gram_apply(&[0.5, 0.0], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn gram_apply_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_sparse(&mut rng, 8, 5, 0.4);
        let (tau, lv, lu) = (2.0, 3.0, 0.5);
        let shift: Vec<f64> = (0..5).map(|i| if i < 2 { lv / tau } else { lu / tau }).collect();
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();

        let dense = a.to_dense();
        let mut gram = vec![vec![0.0; 5]; 5];
        for i in 0..5 {
            for j in 0..5 {
                gram[i][j] = (0..8).map(|r| dense[r][i] * dense[r][j]).sum::<f64>();
            }
            gram[i][i] += shift[i];
        }
        let expected = dense_mv(&gram, &x);
        assert!(max_abs_diff(&a.gram_apply(&shift, &x).unwrap(), &expected) <= 1e-12);
    }

    #[test]
    fn select_rows_and_columns() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 4.0]])
            .unwrap();
        let b = a.select_rows(&[2, 0]).unwrap();
        assert_eq!(b.to_dense(), vec![vec![3.0, 4.0], vec![1.0, 0.0]]);
        let cols = a.columns();
        assert_eq!(cols[0], (vec![0, 2], vec![1.0, 3.0]));
        assert_eq!(cols[1], (vec![1, 2], vec![2.0, 4.0]));
    }
}

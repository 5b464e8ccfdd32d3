use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sparse::SparseMatrix;

/// Cluster-averaging prolongation `P` (fine × coarse).
///
/// Column `j` of `P` holds `1/√n_j` on the `n_j` fine features of cluster `j`
/// and zeros elsewhere, so `PᵀP = I`. `P` is never stored densely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prolongator<T> {
    assignment: Vec<usize>,
    cluster_sizes: Vec<usize>,
    inv_sqrt_sizes: Vec<T>,
}

impl<T: Real> Prolongator<T> {
    /// Builds `P` from a fine → cluster map with contiguous ids `0..F_C`.
    pub fn from_assignment(assignment: Vec<usize>) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::InvalidAssignment("empty assignment".into()));
        }
        let coarse_dim = assignment.iter().max().unwrap() + 1;
        let mut cluster_sizes = vec![0usize; coarse_dim];
        for &a in &assignment {
            cluster_sizes[a] += 1;
        }
        if let Some(gap) = cluster_sizes.iter().position(|&n| n == 0) {
            return Err(Error::InvalidAssignment(format!(
                "cluster id {gap} is unused (ids must be contiguous 0..{coarse_dim})"
            )));
        }
        let inv_sqrt_sizes = cluster_sizes
            .iter()
            .map(|&n| T::one() / T::from_usize_lossy(n).sqrt())
            .collect();
        Ok(Self {
            assignment,
            cluster_sizes,
            inv_sqrt_sizes,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_assignment((0..n).collect()).expect("identity assignment is valid")
    }

    pub fn fine_dim(&self) -> usize {
        self.assignment.len()
    }

    pub fn coarse_dim(&self) -> usize {
        self.cluster_sizes.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_sizes(&self) -> &[usize] {
        &self.cluster_sizes
    }

    /// Entry `P[i, j]`.
    pub fn entry(&self, fine: usize, coarse: usize) -> T {
        if self.assignment[fine] == coarse {
            self.inv_sqrt_sizes[coarse]
        } else {
            T::zero()
        }
    }

    /// `P v`: fine entry `i` is `v[a(i)] / √n_a(i)`.
    pub fn prolong(&self, v_coarse: &[T]) -> Result<Vec<T>> {
        if v_coarse.len() != self.coarse_dim() {
            return Err(Error::dim("prolong", self.coarse_dim(), v_coarse.len()));
        }
        Ok(self
            .assignment
            .iter()
            .map(|&j| v_coarse[j] * self.inv_sqrt_sizes[j])
            .collect())
    }

    /// `P v` on an `f64` vector, independent of the scalar type.
    pub fn prolong_wide(&self, v_coarse: &[f64]) -> Result<Vec<f64>> {
        if v_coarse.len() != self.coarse_dim() {
            return Err(Error::dim("prolong", self.coarse_dim(), v_coarse.len()));
        }
        Ok(self
            .assignment
            .iter()
            .map(|&j| v_coarse[j] * (1.0 / (self.cluster_sizes[j] as f64).sqrt()))
            .collect())
    }

    /// `Pᵀ v`: coarse entry `j` is `Σ_{i∈j} v[i] / √n_j`.
    pub fn restrict(&self, v_fine: &[T]) -> Result<Vec<T>> {
        if v_fine.len() != self.fine_dim() {
            return Err(Error::dim("restrict", self.fine_dim(), v_fine.len()));
        }
        let mut acc = vec![0.0f64; self.coarse_dim()];
        for (&j, &v) in self.assignment.iter().zip(v_fine) {
            acc[j] += v.widen();
        }
        Ok(acc
            .into_iter()
            .zip(&self.inv_sqrt_sizes)
            .map(|(a, &s)| T::narrow(a) * s)
            .collect())
    }

    /// Diagonal of `Pᵀ diag(d) P`, i.e. the cluster means of `d`.
    pub fn restrict_diagonal(&self, d_fine: &[T]) -> Result<Vec<T>> {
        if d_fine.len() != self.fine_dim() {
            return Err(Error::dim("restrict_diagonal", self.fine_dim(), d_fine.len()));
        }
        let mut acc = vec![0.0f64; self.coarse_dim()];
        for (&j, &v) in self.assignment.iter().zip(d_fine) {
            acc[j] += v.widen();
        }
        Ok(acc
            .into_iter()
            .zip(&self.cluster_sizes)
            .map(|(a, &n)| T::narrow(a / n as f64))
            .collect())
    }

    /// `X P`: coarse column `j` is `(1/√n_j) Σ_{i∈j} X[:, i]`.
    pub fn coarsen(&self, x: &SparseMatrix<T>) -> Result<SparseMatrix<T>> {
        if x.n_cols() != self.fine_dim() {
            return Err(Error::dim("coarsen", self.fine_dim(), x.n_cols()));
        }
        let mut row_offsets = Vec::with_capacity(x.n_rows() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        let mut row_buf: Vec<(usize, f64)> = Vec::new();
        for r in 0..x.n_rows() {
            let (cols, vals) = x.row(r);
            row_buf.clear();
            row_buf.extend(
                cols.iter()
                    .zip(vals)
                    .map(|(&c, &v)| (self.assignment[c], v.widen())),
            );
            row_buf.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row_buf.len() {
                let j = row_buf[k].0;
                let mut sum = 0.0;
                while k < row_buf.len() && row_buf[k].0 == j {
                    sum += row_buf[k].1;
                    k += 1;
                }
                col_indices.push(j);
                values.push(T::narrow(sum) * self.inv_sqrt_sizes[j]);
            }
            row_offsets.push(col_indices.len());
        }
        SparseMatrix::from_csr(
            x.n_rows(),
            self.coarse_dim(),
            row_offsets,
            col_indices,
            values,
        )
    }

    /// Dense `P`, for tests and diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        (0..self.fine_dim())
            .map(|i| (0..self.coarse_dim()).map(|j| self.entry(i, j)).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cluster_example() {
        let p = Prolongator::<f64>::from_assignment(vec![0, 0, 1]).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert_eq!(p.to_dense(), vec![vec![s, 0.0], vec![s, 0.0], vec![0.0, 1.0]]);
        assert_eq!(p.cluster_sizes(), &[2, 1]);
    }

    #[test]
    fn singleton_clusters_are_identity() {
        let p = Prolongator::<f64>::from_assignment(vec![0, 1, 2]).unwrap();
        assert_eq!(
            p.to_dense(),
            vec![
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0]
            ]
        );
        let v = [0.3, -1.0, 7.0];
        assert_eq!(p.prolong(&v).unwrap(), v.to_vec());
        assert_eq!(p.restrict(&v).unwrap(), v.to_vec());
    }

    #[test]
    fn gap_in_ids_is_rejected() {
        assert!(matches!(
            Prolongator::<f64>::from_assignment(vec![0, 2, 2]),
            Err(Error::InvalidAssignment(_))
        ));
        assert!(Prolongator::<f64>::from_assignment(vec![]).is_err());
    }

    #[test]
    fn prolong_and_restrict_by_hand() {
        let p = Prolongator::<f64>::from_assignment(vec![0, 0, 1]).unwrap();
        let fine = p.prolong(&[2f64.sqrt(), 5.0]).unwrap();
        for (a, b) in fine.iter().zip([1.0, 1.0, 5.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let coarse = p.restrict(&[1.0, 1.0, 5.0]).unwrap();
        assert!((coarse[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(coarse[1], 5.0);
        assert!(matches!(p.prolong(&[1.0]), Err(Error::Dimension { .. })));
        assert!(matches!(p.restrict(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn coarsen_by_hand() {
        let x = SparseMatrix::from_dense(&[vec![1.0, 1.0, 2.0], vec![0.0, 2.0, 0.0]]).unwrap();
        let p = Prolongator::<f64>::from_assignment(vec![0, 0, 1]).unwrap();
        let xc = p.coarsen(&x).unwrap().to_dense();
        let s = 2.0 / 2f64.sqrt();
        assert!((xc[0][0] - s).abs() < 1e-15);
        assert_eq!(xc[0][1], 2.0);
        assert!((xc[1][0] - s).abs() < 1e-15);
        assert_eq!(xc[1][1], 0.0);

        let id = Prolongator::<f64>::identity(3);
        assert_eq!(id.coarsen(&x).unwrap(), x);
        assert!(matches!(
            Prolongator::<f64>::identity(2).coarsen(&x),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn restricted_diagonal_is_cluster_mean() {
        let p = Prolongator::<f64>::from_assignment(vec![0, 1, 0, 1, 1]).unwrap();
        let d = p.restrict_diagonal(&[1.0, 2.0, 3.0, 4.0, 6.0]).unwrap();
        assert_eq!(d, vec![2.0, 4.0]);
    }
}

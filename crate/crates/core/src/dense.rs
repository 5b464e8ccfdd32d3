//! Small dense symmetric matrices and their Cholesky factorization, used for
//! coarse-space solves and for exact reference solves.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sparse::SparseMatrix;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymmetric<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> DenseSymmetric<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    /// `AᵀA` accumulated row by row from the sparse structure.
    pub fn gram(a: &SparseMatrix<T>) -> Self {
        let n = a.n_cols();
        let mut acc = vec![0.0f64; n * n];
        for r in 0..a.n_rows() {
            let (cols, vals) = a.row(r);
            for (i, (&ci, &vi)) in cols.iter().zip(vals).enumerate() {
                let vi = vi.widen();
                for (&cj, &vj) in cols[..=i].iter().zip(&vals[..=i]) {
                    acc[ci * n + cj] += vi * vj.widen();
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                acc[j * n + i] = acc[i * n + j];
            }
        }
        Self {
            n,
            data: acc.into_iter().map(T::narrow).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    pub fn add_diagonal(&mut self, diag: &[T]) {
        for (i, &d) in diag.iter().enumerate() {
            self.data[i * self.n + i] += d;
        }
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| crate::scalar::dot(&self.data[i * self.n..(i + 1) * self.n], x))
            .collect()
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    n: usize,
    lower: Vec<T>,
    /// Diagonal jitter that had to be added for the factorization to succeed.
    pub jitter: T,
}

impl<T: Real> Cholesky<T> {
    /// Factorizes `a`; on failure retries once with `1e-12 · trace / n` added
    /// to the diagonal.
    pub fn factor(a: &DenseSymmetric<T>) -> Result<Self> {
        match Self::try_factor(a, 0.0) {
            Some(lower) => Ok(Self {
                n: a.n,
                lower,
                jitter: T::zero(),
            }),
            None => {
                let jitter = 1e-12 * a.trace().widen().abs() / a.n.max(1) as f64;
                let lower = Self::try_factor(a, jitter).ok_or_else(|| {
                    Error::Numerical("dense matrix is not positive definite".into())
                })?;
                log::warn!("cholesky needed diagonal jitter {jitter:e}");
                Ok(Self {
                    n: a.n,
                    lower,
                    jitter: T::narrow(jitter),
                })
            }
        }
    }

    fn try_factor(a: &DenseSymmetric<T>, jitter: f64) -> Option<Vec<T>> {
        let n = a.n;
        let mut l = vec![0.0f64; n * n];
        for j in 0..n {
            let mut d = a.get(j, j).widen() + jitter;
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = a.get(i, j).widen();
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                s -= ri.iter().zip(rj).map(|(x, y)| x * y).sum::<f64>();
                l[i * n + j] = s / d;
            }
        }
        Some(l.into_iter().map(T::narrow).collect())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `L Lᵀ x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y: Vec<f64> = b.iter().map(|v| v.widen()).collect();
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i];
            let s: f64 = row.iter().zip(&y[..i]).map(|(l, v)| l.widen() * v).sum();
            y[i] = (y[i] - s) / self.lower[i * n + i].widen();
        }
        for i in (0..n).rev() {
            let s = ((i + 1)..n).fold(y[i], |s, k| s - self.lower[k * n + i].widen() * y[k]);
            y[i] = s / self.lower[i * n + i].widen();
        }
        y.into_iter().map(T::narrow).collect()
    }
}

//! Synthetic design matrices and targets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::scalar::Real;
use crate::sparse::SparseMatrix;

/// `b_true ~ N(0, coef_variance·I)`, `y = X b_true + e` with
/// `e ~ N(0, noise_variance·I)`. Returns `(b_true, y)`.
pub fn synthesize_targets<T: Real>(
    x: &SparseMatrix<T>,
    stream: &mut RandomStream,
    coef_variance: f64,
    noise_variance: f64,
) -> Result<(Vec<T>, Vec<T>)> {
    let b = stream.normal_vector(x.n_cols(), T::zero(), T::narrow(coef_variance))?;
    let e = stream.normal_vector(x.n_rows(), T::zero(), T::narrow(noise_variance))?;
    let mut y = x.spmv(&b)?;
    for (yi, ei) in y.iter_mut().zip(e) {
        *yi += ei;
    }
    Ok((b, y))
}

/// Sparse matrix whose columns come in near-collinear groups: column `j`
/// copies the support of prototype `j mod n_groups`, with values scaled by
/// `1 + jitter·N(0,1)`. Prototype values are `scale·N(0,1)` on a random
/// support of `max(1, round(fill·n_rows))` rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ClusteredSparse {
    pub n_rows: usize,
    pub n_cols: usize,
    pub n_groups: usize,
    pub fill: f64,
    pub jitter: f64,
    pub scale: f64,
}

impl ClusteredSparse {
    pub fn generate<T: Real>(&self, stream: &mut RandomStream) -> Result<SparseMatrix<T>> {
        if self.n_groups == 0 || self.n_rows == 0 {
            return Err(Error::Config("clustered generator needs rows and groups".into()));
        }
        if !(0.0..=1.0).contains(&self.fill) {
            return Err(Error::Config(format!("fill {} outside [0, 1]", self.fill)));
        }
        let support = ((self.fill * self.n_rows as f64).round() as usize).clamp(1, self.n_rows);
        let prototypes: Vec<Vec<(usize, f64)>> = (0..self.n_groups)
            .map(|_| {
                let mut rows = stream.permutation(self.n_rows);
                rows.truncate(support);
                rows.sort_unstable();
                rows.into_iter()
                    .map(|r| (r, self.scale * stream.standard_normal::<f64>()))
                    .collect()
            })
            .collect();
        let mut triplets = Vec::with_capacity(self.n_cols * support);
        for c in 0..self.n_cols {
            for &(r, v) in &prototypes[c % self.n_groups] {
                let w = 1.0 + self.jitter * stream.standard_normal::<f64>();
                triplets.push((r, c, T::narrow(v * w)));
            }
        }
        SparseMatrix::from_triplets(self.n_rows, self.n_cols, &triplets)
    }
}

/// Uniformly random sparsity pattern with `N(0, 1)` values; each entry is
/// present with probability `fill`.
pub fn random_sparse<T: Real>(
    n_rows: usize,
    n_cols: usize,
    fill: f64,
    stream: &mut RandomStream,
) -> Result<SparseMatrix<T>> {
    use rand::Rng;
    let mut triplets = Vec::new();
    for r in 0..n_rows {
        for c in 0..n_cols {
            if stream.rng().random::<f64>() < fill {
                triplets.push((r, c, stream.standard_normal::<T>()));
            }
        }
    }
    SparseMatrix::from_triplets(n_rows, n_cols, &triplets)
}

/// `count` distinct rows of `x` with at least one nonzero, in random order.
pub fn choose_probes<T: Real>(x: &SparseMatrix<T>, count: usize, stream: &mut RandomStream) -> Vec<usize> {
    let offsets = x.row_offsets();
    stream
        .permutation(x.n_rows())
        .into_iter()
        .filter(|&r| offsets[r + 1] > offsets[r])
        .take(count)
        .collect()
}

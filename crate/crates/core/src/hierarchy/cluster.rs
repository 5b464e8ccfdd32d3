//! One-pass leader-follower clustering of matrix columns.
//!
//! Columns are visited in index order. A column joins the first leader (in
//! creation order) within `threshold` cosine distance, otherwise it becomes a
//! leader itself. Leaders are never updated. Distance is `1 − cos`, clamped
//! to `[0, 1]`, so anti-correlated columns count as orthogonal and
//! `threshold = 1` merges every nonzero column. Zero columns form singleton
//! clusters and are never leaders.

use std::ops::Range;

use crate::scalar::Real;
use crate::sparse::SparseMatrix;

/// Slack on the distance comparison so exactly collinear columns merge at
/// `threshold = 0` despite rounding in the cosine.
const DISTANCE_SLACK: f64 = 1e-12;

/// Column-major view of a matrix with cached norms, reused across the many
/// clustering passes of threshold tuning.
#[derive(Debug, Clone)]
pub struct ColumnSet {
    n_rows: usize,
    columns: Vec<(Vec<usize>, Vec<f64>)>,
    norms: Vec<f64>,
}

impl ColumnSet {
    pub fn new<T: Real>(x: &SparseMatrix<T>) -> Self {
        let columns: Vec<(Vec<usize>, Vec<f64>)> = x
            .columns()
            .into_iter()
            .map(|(rows, vals)| (rows, vals.into_iter().map(Real::widen).collect()))
            .collect();
        let norms = columns
            .iter()
            .map(|(_, v)| v.iter().map(|a| a * a).sum::<f64>().sqrt())
            .collect();
        Self {
            n_rows: x.n_rows(),
            columns,
            norms,
        }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Clusters the columns in `range`; ids are local to the range, starting
    /// at zero, in order of creation.
    pub fn leader_follower(&self, range: Range<usize>, threshold: f64) -> Vec<usize> {
        let mut assignment = Vec::with_capacity(range.len());
        let mut n_clusters = 0usize;
        // leader index -> cluster id, and per-row lists of (leader, value)
        let mut leader_cluster: Vec<usize> = Vec::new();
        let mut leader_norm: Vec<f64> = Vec::new();
        let mut row_leaders: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n_rows];
        let mut acc: Vec<f64> = Vec::new();
        let mut seen: Vec<bool> = Vec::new();
        let mut touched: Vec<usize> = Vec::new();

        for c in range {
            let norm = self.norms[c];
            if norm == 0.0 {
                assignment.push(n_clusters);
                n_clusters += 1;
                continue;
            }
            let (rows, vals) = &self.columns[c];

            let chosen = if threshold >= 1.0 - DISTANCE_SLACK && !leader_cluster.is_empty() {
                Some(0)
            } else {
                for (&r, &v) in rows.iter().zip(vals) {
                    for &(leader, lv) in &row_leaders[r] {
                        if !seen[leader] {
                            seen[leader] = true;
                            touched.push(leader);
                        }
                        acc[leader] += v * lv;
                    }
                }
                let mut best: Option<usize> = None;
                for &leader in &touched {
                    let cos = acc[leader] / (norm * leader_norm[leader]);
                    let dist = (1.0 - cos).clamp(0.0, 1.0);
                    if dist <= threshold + DISTANCE_SLACK && best.is_none_or(|b| leader < b) {
                        best = Some(leader);
                    }
                }
                for &leader in &touched {
                    acc[leader] = 0.0;
                    seen[leader] = false;
                }
                touched.clear();
                best
            };

            match chosen {
                Some(leader) => assignment.push(leader_cluster[leader]),
                None => {
                    let leader = leader_cluster.len();
                    leader_cluster.push(n_clusters);
                    leader_norm.push(norm);
                    acc.push(0.0);
                    seen.push(false);
                    for (&r, &v) in rows.iter().zip(vals) {
                        row_leaders[r].push((leader, v));
                    }
                    assignment.push(n_clusters);
                    n_clusters += 1;
                }
            }
        }
        assignment
    }

    /// Clusters `[0, boundary)` and `[boundary, n)` independently and returns
    /// the joint assignment (first group's clusters first) plus the number of
    /// clusters in the first group.
    pub fn grouped_leader_follower(&self, boundary: usize, threshold: f64) -> (Vec<usize>, usize) {
        let mut first = self.leader_follower(0..boundary, threshold);
        let n_first = first.iter().max().map_or(0, |m| m + 1);
        let second = self.leader_follower(boundary..self.len(), threshold);
        first.extend(second.into_iter().map(|id| id + n_first));
        (first, n_first)
    }
}

/// Leader-follower clustering of the columns of `x` at the given cosine
/// distance threshold (`0 ≤ threshold ≤ 1`).
pub fn leader_follower<T: Real>(x: &SparseMatrix<T>, threshold: f64) -> Vec<usize> {
    let set = ColumnSet::new(x);
    set.leader_follower(0..set.len(), threshold)
}

//! Level hierarchy `X_0 … X_L` built by recursive column clustering.
//!
//! Level `L` is the input matrix; level `l − 1` is `X_l P_l` where `P_l`
//! averages the columns of each cluster. Fixed-effect and random-effect
//! columns are clustered separately so every level keeps a well-defined
//! split between the two precision groups.

mod cluster;
mod prolongator;

pub use cluster::{leader_follower, ColumnSet};
pub use prolongator::Prolongator;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sparse::SparseMatrix;

const MAX_BISECTION_STEPS: usize = 20;

/// Parameters for [`LevelHierarchy::build`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierarchyConfig {
    /// Index separating fixed-effect columns `[0, b)` from random-effect columns.
    pub group_boundary: usize,
    /// Accepted width range `(min, max)` of the coarsest level.
    pub coarse_size_range: (usize, usize),
    /// Upper bound on the number of levels, input level included.
    pub max_levels: usize,
}

#[derive(Debug, Clone)]
pub struct LevelHierarchy<T> {
    matrices: Vec<SparseMatrix<T>>,
    prolongators: Vec<Prolongator<T>>,
    group_boundaries: Vec<usize>,
    thresholds: Vec<f64>,
}

/// Serializable summary of a hierarchy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchySummary {
    pub widths: Vec<usize>,
    pub nnz: Vec<usize>,
    pub group_boundaries: Vec<usize>,
    pub thresholds: Vec<f64>,
}

impl<T: Real> LevelHierarchy<T> {
    /// One-level hierarchy holding just `x`.
    pub fn single(x: SparseMatrix<T>, group_boundary: usize) -> Result<Self> {
        if group_boundary > x.n_cols() {
            return Err(Error::dim("group boundary", x.n_cols(), group_boundary));
        }
        Ok(Self {
            matrices: vec![x],
            prolongators: Vec::new(),
            group_boundaries: vec![group_boundary],
            thresholds: Vec::new(),
        })
    }

    /// Assembles a hierarchy from the finest matrix and an explicit list of
    /// prolongators ordered fine to coarse (`P_L, P_{L−1}, …, P_1`).
    ///
    /// Each assignment must keep the group split: all clusters of the first
    /// `boundary` columns precede all other clusters and none straddles it.
    pub fn from_prolongators(
        x: SparseMatrix<T>,
        group_boundary: usize,
        fine_to_coarse: Vec<Prolongator<T>>,
    ) -> Result<Self> {
        let mut h = Self::single(x, group_boundary)?;
        for p in fine_to_coarse {
            let boundary = *h.group_boundaries.last().unwrap();
            let new_boundary = check_group_split(p.assignment(), boundary)?;
            let coarse = p.coarsen(h.matrices.last().unwrap())?;
            h.matrices.push(coarse);
            h.prolongators.push(p);
            h.group_boundaries.push(new_boundary);
            h.thresholds.push(f64::NAN);
        }
        h.matrices.reverse();
        h.prolongators.reverse();
        h.group_boundaries.reverse();
        h.thresholds.reverse();
        Ok(h)
    }

    /// Clusters and coarsens `x` until the coarsest width lies in the
    /// configured range or `max_levels` is reached.
    ///
    /// The per-level clustering threshold is found by bisection so that the
    /// coarse width hits a target band; targets are spaced geometrically
    /// between the input width and the centre of `coarse_size_range`.
    pub fn build(x: SparseMatrix<T>, config: &HierarchyConfig) -> Result<Self> {
        let (lo, hi) = config.coarse_size_range;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!(
                "coarse size range ({lo}, {hi}) must satisfy 1 <= min <= max"
            )));
        }
        if config.max_levels == 0 {
            return Err(Error::Config("max_levels must be at least 1".into()));
        }
        let mut h = Self::single(x, config.group_boundary)?;
        let fine_width = h.matrices[0].n_cols() as f64;
        let coarsenings = config.max_levels - 1;
        let final_target = ((lo * hi) as f64).sqrt();
        let half_ratio = (hi as f64 / lo as f64).sqrt();

        for step in 1..=coarsenings {
            let current = h.matrices.last().unwrap();
            if current.n_cols() <= hi {
                break;
            }
            let band = if step == coarsenings {
                (lo, hi)
            } else {
                let t = fine_width * (final_target / fine_width).powf(step as f64 / coarsenings as f64);
                (
                    ((t / half_ratio).floor() as usize).max(1),
                    ((t * half_ratio).ceil() as usize).max(1),
                )
            };
            let boundary = *h.group_boundaries.last().unwrap();
            let columns = ColumnSet::new(current);
            let (assignment, new_boundary, threshold) =
                tune_threshold(&columns, boundary, band)?;
            let p = Prolongator::from_assignment(assignment)?;
            let coarse = p.coarsen(current)?;
            log::debug!(
                "coarsened {} -> {} columns at threshold {threshold:.6}",
                current.n_cols(),
                coarse.n_cols()
            );
            let width = coarse.n_cols();
            h.matrices.push(coarse);
            h.prolongators.push(p);
            h.group_boundaries.push(new_boundary);
            h.thresholds.push(threshold);
            if (lo..=hi).contains(&width) {
                break;
            }
        }
        h.matrices.reverse();
        h.prolongators.reverse();
        h.group_boundaries.reverse();
        h.thresholds.reverse();
        Ok(h)
    }

    /// Number of levels `L + 1`.
    pub fn n_levels(&self) -> usize {
        self.matrices.len()
    }

    pub fn finest(&self) -> usize {
        self.matrices.len() - 1
    }

    pub fn matrix(&self, level: usize) -> &SparseMatrix<T> {
        &self.matrices[level]
    }

    pub fn matrices(&self) -> &[SparseMatrix<T>] {
        &self.matrices
    }

    /// `P_l`, mapping level `l − 1` to level `l` (`1 ≤ l ≤ L`).
    pub fn prolongator(&self, level: usize) -> &Prolongator<T> {
        assert!(level >= 1, "level 0 has no prolongator");
        &self.prolongators[level - 1]
    }

    pub fn group_boundary(&self, level: usize) -> usize {
        self.group_boundaries[level]
    }

    pub fn width(&self, level: usize) -> usize {
        self.matrices[level].n_cols()
    }

    /// Moves a coefficient vector from level `from` to level `to` by
    /// successive prolongations or restrictions.
    pub fn transfer(&self, v: &[T], from: usize, to: usize) -> Result<Vec<T>> {
        let mut out = v.to_vec();
        if from < to {
            for l in (from + 1)..=to {
                out = self.prolongator(l).prolong(&out)?;
            }
        } else {
            for l in ((to + 1)..=from).rev() {
                out = self.prolongator(l).restrict(&out)?;
            }
        }
        Ok(out)
    }

    /// Restricts a diagonal from level `from` down to level `to`
    /// (`diag(Pᵀ D P)` at each step).
    pub fn restrict_diagonal(&self, d: &[T], from: usize, to: usize) -> Result<Vec<T>> {
        let mut out = d.to_vec();
        for l in ((to + 1)..=from).rev() {
            out = self.prolongator(l).restrict_diagonal(&out)?;
        }
        Ok(out)
    }

    /// Replaces the finest matrix's rows, recomputing all coarse levels with
    /// the same prolongators. Used to map evaluation rows through a
    /// hierarchy built on training rows.
    pub fn coarsen_rows(&self, x_fine: &SparseMatrix<T>) -> Result<Vec<SparseMatrix<T>>> {
        let mut out = vec![x_fine.clone()];
        for l in (1..self.n_levels()).rev() {
            let next = self.prolongator(l).coarsen(out.last().unwrap())?;
            out.push(next);
        }
        out.reverse();
        Ok(out)
    }

    pub fn summary(&self) -> HierarchySummary {
        HierarchySummary {
            widths: self.matrices.iter().map(SparseMatrix::n_cols).collect(),
            nnz: self.matrices.iter().map(SparseMatrix::nnz).collect(),
            group_boundaries: self.group_boundaries.clone(),
            thresholds: self.thresholds.clone(),
        }
    }
}

fn check_group_split(assignment: &[usize], boundary: usize) -> Result<usize> {
    let n_first = assignment[..boundary].iter().max().map_or(0, |m| m + 1);
    if let Some(i) = assignment[boundary..].iter().position(|&a| a < n_first) {
        return Err(Error::InvalidAssignment(format!(
            "column {} is clustered across the fixed/random boundary",
            boundary + i
        )));
    }
    Ok(n_first)
}

/// Bisection on the clustering threshold until the coarse width falls in
/// `band`. Returns the closest result found when the band cannot be hit.
fn tune_threshold(
    columns: &ColumnSet,
    boundary: usize,
    band: (usize, usize),
) -> Result<(Vec<usize>, usize, f64)> {
    let fine = columns.len();
    let width_of = |a: &[usize]| a.iter().max().map_or(0, |m| m + 1);
    let miss = |w: usize| {
        if w < band.0 {
            band.0 - w
        } else {
            w.saturating_sub(band.1)
        }
    };

    let (a_max, b_max) = columns.grouped_leader_follower(boundary, 1.0);
    let w_max = width_of(&a_max);
    if w_max >= fine {
        return Err(Error::Hierarchy(format!(
            "clustering stagnates: {fine} columns remain {w_max} clusters at threshold 1"
        )));
    }
    let mut best = (miss(w_max), a_max, b_max, 1.0);
    if w_max >= band.0 {
        // even the loosest threshold is not coarse enough (or exactly in band)
        return Ok((best.1, best.2, best.3));
    }

    let (mut t_lo, mut t_hi) = (0.0f64, 1.0f64);
    for _ in 0..MAX_BISECTION_STEPS {
        let t = 0.5 * (t_lo + t_hi);
        let (a, b) = columns.grouped_leader_follower(boundary, t);
        let w = width_of(&a);
        let m = miss(w);
        if m < best.0 {
            best = (m, a, b, t);
        }
        if m == 0 {
            break;
        }
        if w > band.1 {
            t_lo = t;
        } else {
            t_hi = t;
        }
    }
    Ok((best.1, best.2, best.3))
}

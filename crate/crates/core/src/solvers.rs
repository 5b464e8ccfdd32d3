//! Matrix-free conjugate gradient for `(XᵀX + diag(s)) b = rhs`, with an
//! optional two-level preconditioner built from the level hierarchy.
//!
//! The preconditioner smooths with a fixed number of inner CG steps, which
//! makes it a nonlinear operator; the outer iteration therefore switches to
//! flexible CG (Polak-Ribière `β`) whenever a preconditioner is supplied.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::dense::{Cholesky, DenseSymmetric};
use crate::error::{Error, Result};
use crate::hierarchy::{LevelHierarchy, Prolongator};
use crate::scalar::{axpy, dot_wide, Real};
use crate::sparse::{check_shift, SparseMatrix};

/// Default cap on the coarse width that may be densified.
pub const DEFAULT_DENSE_CAP: usize = 10_000;

pub trait LinearOperator<T: Real> {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[T], out: &mut [T]) -> Result<()>;
}

pub trait Preconditioner<T: Real> {
    /// `z ≈ A⁻¹ r`. May depend nonlinearly on `r`.
    fn apply(&mut self, op: &dyn LinearOperator<T>, r: &[T], z: &mut [T]) -> Result<()>;
}

/// `x ↦ (XᵀX + diag(shift)) x`.
pub struct GramOperator<'a, T> {
    matrix: &'a SparseMatrix<T>,
    shift: &'a [T],
    scratch: RefCell<Vec<T>>,
}

impl<'a, T: Real> GramOperator<'a, T> {
    pub fn new(matrix: &'a SparseMatrix<T>, shift: &'a [T]) -> Result<Self> {
        check_shift(shift, matrix.n_cols())?;
        Ok(Self {
            matrix,
            shift,
            scratch: RefCell::new(vec![T::zero(); matrix.n_rows()]),
        })
    }
}

impl<T: Real> LinearOperator<T> for GramOperator<'_, T> {
    fn dim(&self) -> usize {
        self.matrix.n_cols()
    }

    fn apply(&self, x: &[T], out: &mut [T]) -> Result<()> {
        let mut scratch = self.scratch.borrow_mut();
        self.matrix.gram_apply_into(self.shift, x, &mut scratch, out)
    }
}

/// Dense operator, mostly for tests.
impl<T: Real> LinearOperator<T> for DenseSymmetric<T> {
    fn dim(&self) -> usize {
        DenseSymmetric::dim(self)
    }

    fn apply(&self, x: &[T], out: &mut [T]) -> Result<()> {
        out.copy_from_slice(&self.matvec(x));
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual_norm: f64,
    pub converged: bool,
}

/// Conjugate gradient from `x0`, stopping when `‖rhs − A x‖ ≤ tol ‖rhs‖`.
///
/// Without a preconditioner this is textbook CG; with one, flexible CG. If
/// `max_iter` is exhausted the iterate with the smallest residual is returned
/// with `converged = false`.
pub fn cg_solve<T: Real>(
    op: &dyn LinearOperator<T>,
    rhs: &[T],
    x0: &[T],
    tol: f64,
    max_iter: usize,
    precond: Option<&mut dyn Preconditioner<T>>,
) -> Result<(Vec<T>, SolveReport)> {
    cg_solve_traced(op, rhs, x0, tol, max_iter, precond, None)
}

/// [`cg_solve`] that also records the residual norm after every iteration
/// (entry 0 is the initial residual).
pub fn cg_solve_traced<T: Real>(
    op: &dyn LinearOperator<T>,
    rhs: &[T],
    x0: &[T],
    tol: f64,
    max_iter: usize,
    mut precond: Option<&mut dyn Preconditioner<T>>,
    mut history: Option<&mut Vec<f64>>,
) -> Result<(Vec<T>, SolveReport)> {
    let n = op.dim();
    if rhs.len() != n {
        return Err(Error::dim("cg rhs", n, rhs.len()));
    }
    if x0.len() != n {
        return Err(Error::dim("cg start vector", n, x0.len()));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("cg tolerance must be positive, got {tol}")));
    }

    let rhs_norm = dot_wide(rhs, rhs).sqrt();
    if rhs_norm == 0.0 {
        return Ok((
            vec![T::zero(); n],
            SolveReport {
                iterations: 0,
                final_residual_norm: 0.0,
                converged: true,
            },
        ));
    }
    let target = tol * rhs_norm;

    let mut x = x0.to_vec();
    let mut q = vec![T::zero(); n];
    op.apply(&x, &mut q)?;
    let mut r: Vec<T> = rhs.iter().zip(&q).map(|(&b, &ax)| b - ax).collect();
    let mut r_norm = dot_wide(&r, &r).sqrt();
    if let Some(h) = history.as_deref_mut() {
        h.push(r_norm);
    }
    if !r_norm.is_finite() {
        return Err(Error::Numerical("non-finite initial residual".into()));
    }
    if r_norm <= target {
        return Ok((
            x,
            SolveReport {
                iterations: 0,
                final_residual_norm: r_norm,
                converged: true,
            },
        ));
    }

    let flexible = precond.is_some();
    let mut z = vec![T::zero(); n];
    match precond.as_deref_mut() {
        Some(m) => m.apply(op, &r, &mut z)?,
        None => z.copy_from_slice(&r),
    }
    let mut p = z.clone();
    let mut rz = dot_wide(&r, &z);
    let mut r_prev = if flexible { r.clone() } else { Vec::new() };

    let mut best_x = x.clone();
    let mut best_norm = r_norm;

    for it in 1..=max_iter {
        op.apply(&p, &mut q)?;
        let pq = dot_wide(&p, &q);
        if !(pq > 0.0) || !pq.is_finite() {
            return Err(Error::Numerical(format!(
                "cg breakdown at iteration {it}: pᵀAp = {pq:e} (operator not positive definite?)"
            )));
        }
        let alpha = rz / pq;
        axpy(T::narrow(alpha), &p, &mut x);
        if flexible {
            r_prev.copy_from_slice(&r);
        }
        axpy(T::narrow(-alpha), &q, &mut r);
        r_norm = dot_wide(&r, &r).sqrt();
        if let Some(h) = history.as_deref_mut() {
            h.push(r_norm);
        }
        if !r_norm.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite residual at iteration {it}"
            )));
        }
        if r_norm <= target {
            return Ok((
                x,
                SolveReport {
                    iterations: it,
                    final_residual_norm: r_norm,
                    converged: true,
                },
            ));
        }
        if r_norm < best_norm {
            best_norm = r_norm;
            best_x.copy_from_slice(&x);
        }

        let beta = match precond.as_deref_mut() {
            Some(m) => {
                m.apply(op, &r, &mut z)?;
                let num: f64 = z
                    .iter()
                    .zip(r.iter().zip(&r_prev))
                    .map(|(&zi, (&ri, &rpi))| zi.widen() * (ri.widen() - rpi.widen()))
                    .sum();
                num / rz
            }
            None => {
                z.copy_from_slice(&r);
                r_norm * r_norm / rz
            }
        };
        rz = dot_wide(&r, &z);
        let beta = T::narrow(beta);
        for (pi, &zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }

    Ok((
        best_x,
        SolveReport {
            iterations: max_iter,
            final_residual_norm: best_norm,
            converged: false,
        },
    ))
}

/// Two-level preconditioner: a few CG smoothing steps on the fine system,
/// then an exact correction in the coarsest space of the hierarchy.
#[derive(Debug, Clone)]
pub struct TwoLevelPreconditioner<T> {
    level: usize,
    /// `P_1 … P_level`, coarse to fine.
    transfers: Vec<Prolongator<T>>,
    coarse_gram: DenseSymmetric<T>,
    factor: Cholesky<T>,
    smoothing_steps: usize,
}

impl<T: Real> TwoLevelPreconditioner<T> {
    /// Builds the preconditioner for `level` with coarse space level 0.
    pub fn build(
        hierarchy: &LevelHierarchy<T>,
        level: usize,
        shift_diag: &[T],
        dense_cap: usize,
    ) -> Result<Self> {
        if level == 0 || level >= hierarchy.n_levels() {
            return Err(Error::Setup(format!(
                "two-level preconditioner needs 1 <= level < {} (got {level})",
                hierarchy.n_levels()
            )));
        }
        let coarse = hierarchy.matrix(0);
        if coarse.n_cols() > dense_cap {
            return Err(Error::Setup(format!(
                "coarse width {} exceeds the dense cap {dense_cap}",
                coarse.n_cols()
            )));
        }
        let transfers: Vec<Prolongator<T>> = (1..=level)
            .map(|l| hierarchy.prolongator(l).clone())
            .collect();
        let coarse_gram = DenseSymmetric::gram(coarse);
        let factor = factor_coarse(&coarse_gram, &transfers, shift_diag)?;
        Ok(Self {
            level,
            transfers,
            coarse_gram,
            factor,
            smoothing_steps: 2,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn with_smoothing_steps(mut self, steps: usize) -> Self {
        self.smoothing_steps = steps;
        self
    }

    pub fn fine_dim(&self) -> usize {
        self.transfers.last().map_or(0, Prolongator::fine_dim)
    }

    pub fn coarse_dim(&self) -> usize {
        self.coarse_gram.dim()
    }

    /// Refactorizes the coarse operator `X_0ᵀX_0 + diag(Pᵀ diag(s) P)` for a
    /// new fine-level shift `s`.
    pub fn update_shift(&mut self, shift_fine: &[T]) -> Result<()> {
        self.factor = factor_coarse(&self.coarse_gram, &self.transfers, shift_fine)?;
        Ok(())
    }

    fn restrict_to_coarse(&self, v: &[T]) -> Result<Vec<T>> {
        let mut out = v.to_vec();
        for p in self.transfers.iter().rev() {
            out = p.restrict(&out)?;
        }
        Ok(out)
    }

    fn prolong_from_coarse(&self, v: &[T]) -> Result<Vec<T>> {
        let mut out = v.to_vec();
        for p in &self.transfers {
            out = p.prolong(&out)?;
        }
        Ok(out)
    }
}

fn factor_coarse<T: Real>(
    coarse_gram: &DenseSymmetric<T>,
    transfers: &[Prolongator<T>],
    shift_fine: &[T],
) -> Result<Cholesky<T>> {
    let fine_dim = transfers.last().map_or(0, Prolongator::fine_dim);
    check_shift(shift_fine, fine_dim)?;
    let mut d = shift_fine.to_vec();
    for p in transfers.iter().rev() {
        d = p.restrict_diagonal(&d)?;
    }
    let mut m = coarse_gram.clone();
    m.add_diagonal(&d);
    Cholesky::factor(&m).map_err(|e| Error::Setup(e.to_string()))
}

impl<T: Real> Preconditioner<T> for TwoLevelPreconditioner<T> {
    fn apply(&mut self, op: &dyn LinearOperator<T>, r: &[T], z: &mut [T]) -> Result<()> {
        let n = self.fine_dim();
        if r.len() != n || z.len() != n {
            return Err(Error::dim("preconditioner input", n, r.len()));
        }
        z.fill(T::zero());
        // smoothing: plain CG steps on A z = r from z = 0; `res` tracks r − A z
        let mut res = r.to_vec();
        let mut p = r.to_vec();
        let mut q = vec![T::zero(); n];
        let mut rr = dot_wide(&res, &res);
        for _ in 0..self.smoothing_steps {
            if rr == 0.0 {
                break;
            }
            op.apply(&p, &mut q)?;
            let pq = dot_wide(&p, &q);
            if !(pq > 0.0) {
                return Err(Error::Numerical(format!(
                    "smoother breakdown: pᵀAp = {pq:e}"
                )));
            }
            let alpha = rr / pq;
            axpy(T::narrow(alpha), &p, z);
            axpy(T::narrow(-alpha), &q, &mut res);
            let rr_new = dot_wide(&res, &res);
            let beta = T::narrow(rr_new / rr);
            for (pi, &ri) in p.iter_mut().zip(&res) {
                *pi = ri + beta * *pi;
            }
            rr = rr_new;
        }
        if rr == 0.0 {
            return Ok(());
        }
        let coarse_res = self.restrict_to_coarse(&res)?;
        let correction = self.prolong_from_coarse(&self.factor.solve(&coarse_res))?;
        for (zi, ci) in z.iter_mut().zip(correction) {
            *zi += ci;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    /// Conjugate gradient (flexible CG when preconditioned).
    Cg,
    /// Dense Cholesky of the full system; exact, for small problems.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: SolverMethod,
    /// Overrides `method` on level 0 of a hierarchy.
    pub coarsest_method: Option<SolverMethod>,
    /// Relative residual tolerance.
    pub tol: f64,
    /// Iteration cap; `None` means twice the system width.
    pub max_iter: Option<usize>,
    /// Start each solve from the previous chain sample instead of zero.
    pub warm_start: bool,
    pub smoothing_steps: usize,
    pub dense_cap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolverMethod::Cg,
            coarsest_method: None,
            tol: 1e-8,
            max_iter: None,
            warm_start: true,
            smoothing_steps: 2,
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }
}

impl SolverConfig {
    pub fn exact() -> Self {
        Self {
            method: SolverMethod::Direct,
            ..Self::default()
        }
    }

    pub fn method_for_level(&self, level: usize) -> SolverMethod {
        match (level, self.coarsest_method) {
            (0, Some(m)) => m,
            _ => self.method,
        }
    }

    pub fn max_iter_for(&self, n: usize) -> usize {
        self.max_iter.unwrap_or(2 * n.max(1))
    }
}

/// Solves `(XᵀX + diag(shift)) b = rhs` with the method configured for `level`.
pub fn solve_gram<T: Real>(
    x: &SparseMatrix<T>,
    shift: &[T],
    rhs: &[T],
    x0: &[T],
    config: &SolverConfig,
    level: usize,
    precond: Option<&mut TwoLevelPreconditioner<T>>,
) -> Result<(Vec<T>, SolveReport)> {
    match config.method_for_level(level) {
        SolverMethod::Direct => {
            check_shift(shift, x.n_cols())?;
            let mut g = DenseSymmetric::gram(x);
            g.add_diagonal(shift);
            let b = Cholesky::factor(&g)?.solve(rhs);
            let ab = x.gram_apply(shift, &b)?;
            let res: f64 = ab
                .iter()
                .zip(rhs)
                .map(|(a, r)| (r.widen() - a.widen()).powi(2))
                .sum::<f64>()
                .sqrt();
            Ok((
                b,
                SolveReport {
                    iterations: 0,
                    final_residual_norm: res,
                    converged: true,
                },
            ))
        }
        SolverMethod::Cg => {
            let op = GramOperator::new(x, shift)?;
            let max_iter = config.max_iter_for(x.n_cols());
            match precond {
                Some(pc) => {
                    pc.update_shift(shift)?;
                    cg_solve(
                        &op,
                        rhs,
                        x0,
                        config.tol,
                        max_iter,
                        Some(pc as &mut dyn Preconditioner<T>),
                    )
                }
                None => cg_solve(&op, rhs, x0, config.tol, max_iter, None),
            }
        }
    }
}

//! Multilevel Gibbs sampling for Bayesian linear mixed models.
//!
//! The model is `y = W v + Z u + e` with gamma priors on the noise precision
//! `τ` and on the fixed- and random-effect precisions `λ_v`, `λ_u`. Samples of
//! the coefficients `b = [v; u]` are drawn by noise injection: one perturbed
//! ridge solve per draw. The multilevel samplers run the same chain on a
//! hierarchy of column-clustered copies of `X` and combine the levels either
//! by pooling or by a telescoping sum of coupled differences.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar type.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dense;
pub mod error;
pub mod gibbs;
pub mod harness;
pub mod hierarchy;
pub mod multilevel;
pub mod rng;
pub mod scalar;
pub mod solvers;
pub mod sparse;

pub use error::{Error, Result};
pub use gibbs::{
    assemble_lambda, draw_coefficient, predict_mean, run_chain, sample_hyperparams, ChainOptions,
    ChainResult, GibbsState, MixedModelSpec, Priors,
};
pub use hierarchy::{leader_follower, HierarchyConfig, LevelHierarchy, Prolongator};
pub use multilevel::{
    allocate_cost, allocate_variance, finalize_estimate, make_schedule, run_ml_cs, run_ml_gibbs,
    Coupling, EstimatorAccumulator, LevelCost, MultilevelOptions, SampleSchedule, ScheduleKind,
};
pub use rng::RandomStream;
pub use scalar::Real;
pub use solvers::{cg_solve, SolveReport, SolverConfig, SolverMethod, TwoLevelPreconditioner};
pub use sparse::SparseMatrix;

pub type SparseMatrixF64 = SparseMatrix<f64>;
pub type SparseMatrixF32 = SparseMatrix<f32>;
pub type LevelHierarchyF64 = LevelHierarchy<f64>;
pub type LevelHierarchyF32 = LevelHierarchy<f32>;
pub type ProlongatorF64 = Prolongator<f64>;
pub type ProlongatorF32 = Prolongator<f32>;
pub type GibbsStateF64 = GibbsState<f64>;
pub type GibbsStateF32 = GibbsState<f32>;
pub type ChainResultF64 = ChainResult<f64>;
pub type ChainResultF32 = ChainResult<f32>;

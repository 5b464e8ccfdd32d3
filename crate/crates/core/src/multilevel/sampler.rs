//! Multilevel noise-injection Gibbs samplers.
//!
//! The pooled sampler runs one chain that moves between levels, prolonging
//! or restricting `b` on every level change, and averages all samples in the
//! finest space. The telescoping sampler estimates
//! `E[y_L] = E[y_0] + Σ_l E[y_l − y_{l−1}]`, drawing each difference from a
//! coupled pair: either a second solve on level `l − 1` that reuses the
//! precisions and noise of the fine draw, or the projection `b − P Pᵀ b`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{
    assemble_lambda, solve_noise_system, Chain, ChainOptions, LevelSystem, MixedModelSpec,
    NoiseDraw, TraceRow,
};
use crate::hierarchy::{LevelHierarchy, Prolongator};
use crate::rng::RandomStream;
use crate::scalar::Real;
use crate::solvers::{SolverConfig, SolverMethod, TwoLevelPreconditioner};
use crate::sparse::SparseMatrix;

use super::schedule::SampleSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    Pooled,
    Telescoping,
}

/// How the coarse partner of a fine sample is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coupling {
    /// Re-solve on level `l − 1` with the same precisions, `e₁` and `Pᵀe₂`.
    Solves,
    /// `P Pᵀ b`.
    Projection,
}

impl std::str::FromStr for Coupling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "solves" => Ok(Self::Solves),
            "projection" => Ok(Self::Projection),
            _ => Err(Error::Config(format!("unknown coupling `{s}` (solves|projection)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MultilevelOptions {
    /// Use the two-level preconditioner on levels `l ≥ 1`.
    pub preconditioned: bool,
    pub chain: ChainOptions,
}

/// Per-level sums produced by a multilevel run.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorAccumulator {
    pub mode: EstimatorMode,
    /// Pooled: `Σ_h b_l`. Telescoping: `Σ_h b_0` on level 0 and `Σ_h d_l`
    /// on levels `l ≥ 1`. Each in the coefficient space of its level.
    pub sums: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
    /// Largest `|d_l|` entry seen per level (telescoping only).
    pub max_abs_difference: Vec<f64>,
    pub solve_iterations: Vec<usize>,
    pub solves: Vec<usize>,
    pub trace: Vec<TraceRow>,
}

impl EstimatorAccumulator {
    fn new<T: Real>(mode: EstimatorMode, hierarchy: &LevelHierarchy<T>) -> Self {
        let n = hierarchy.n_levels();
        Self {
            mode,
            sums: (0..n).map(|l| vec![0.0; hierarchy.width(l)]).collect(),
            counts: vec![0; n],
            max_abs_difference: vec![0.0; n],
            solve_iterations: vec![0; n],
            solves: vec![0; n],
            trace: Vec::new(),
        }
    }

    fn add<T: Real>(&mut self, level: usize, v: &[T]) {
        for (s, x) in self.sums[level].iter_mut().zip(v) {
            *s += x.widen();
        }
        self.counts[level] += 1;
    }

    fn record_solve(&mut self, level: usize, iterations: usize) {
        self.solve_iterations[level] += iterations;
        self.solves[level] += 1;
    }

    /// Mean solver iterations per level (`NaN` where nothing was solved).
    pub fn mean_solve_iterations(&self) -> Vec<f64> {
        self.solve_iterations
            .iter()
            .zip(&self.solves)
            .map(|(&i, &n)| if n == 0 { f64::NAN } else { i as f64 / n as f64 })
            .collect()
    }
}

/// The model widths of `level`, derived from the hierarchy's group split.
pub fn level_spec<T: Real>(
    hierarchy: &LevelHierarchy<T>,
    spec: &MixedModelSpec,
    level: usize,
) -> MixedModelSpec {
    let fixed = hierarchy.group_boundary(level);
    spec.with_widths(fixed, hierarchy.width(level) - fixed)
}

fn check_spec<T: Real>(hierarchy: &LevelHierarchy<T>, spec: &MixedModelSpec) -> Result<()> {
    let finest = hierarchy.finest();
    if spec.width() != hierarchy.width(finest) {
        return Err(Error::dim("model width F + S", hierarchy.width(finest), spec.width()));
    }
    if spec.fixed != hierarchy.group_boundary(finest) {
        return Err(Error::dim("fixed-effect count F", hierarchy.group_boundary(finest), spec.fixed));
    }
    Ok(())
}

/// The linear system of one level, with its preconditioner when requested.
pub fn prepare_level<'a, T: Real>(
    hierarchy: &'a LevelHierarchy<T>,
    spec: &MixedModelSpec,
    level: usize,
    config: &SolverConfig,
    preconditioned: bool,
) -> Result<LevelSystem<'a, T>> {
    let mut sys = LevelSystem::new(level, hierarchy.matrix(level), level_spec(hierarchy, spec, level))?;
    if preconditioned && level >= 1 && config.method_for_level(level) == SolverMethod::Cg {
        let ones = vec![T::one(); hierarchy.width(level)];
        sys.precond = Some(
            TwoLevelPreconditioner::build(hierarchy, level, &ones, config.dense_cap)?
                .with_smoothing_steps(config.smoothing_steps),
        );
    }
    Ok(sys)
}

/// Systems for every level, coarsest first. This is the setup phase:
/// preconditioners are built and factorized here.
pub fn prepare_levels<'a, T: Real>(
    hierarchy: &'a LevelHierarchy<T>,
    spec: &MixedModelSpec,
    config: &SolverConfig,
    preconditioned: bool,
) -> Result<Vec<LevelSystem<'a, T>>> {
    check_spec(hierarchy, spec)?;
    (0..hierarchy.n_levels())
        .map(|l| prepare_level(hierarchy, spec, l, config, preconditioned))
        .collect()
}

fn check_schedule<T: Real>(hierarchy: &LevelHierarchy<T>, schedule: &SampleSchedule) -> Result<()> {
    if let Some(&(l, _)) = schedule.visits.iter().find(|(l, _)| *l >= hierarchy.n_levels()) {
        return Err(Error::Config(format!(
            "schedule visits level {l} but the hierarchy has {} levels",
            hierarchy.n_levels()
        )));
    }
    Ok(())
}

fn check_solver_family(schedule: &SampleSchedule, config: &SolverConfig) -> Result<()> {
    for &(l, _) in &schedule.visits {
        if l >= 1 && config.method_for_level(l) != config.method_for_level(l - 1) {
            return Err(Error::Config(format!(
                "coupled solves need the same solver on levels {} and {l}",
                l - 1
            )));
        }
    }
    Ok(())
}

fn step_into<T: Real>(
    chain: &mut Chain<T>,
    sys: &mut LevelSystem<'_, T>,
    y: &[T],
    config: &SolverConfig,
    stream: &mut RandomStream,
    acc: &mut EstimatorAccumulator,
) -> Result<crate::gibbs::StepOutput<T>> {
    let out = chain.step(sys, y, config, stream)?;
    acc.record_solve(sys.level, out.report.iterations);
    Ok(out)
}

/// Pooled multilevel sampler.
pub fn run_ml_gibbs<T: Real>(
    hierarchy: &LevelHierarchy<T>,
    y: &[T],
    spec: &MixedModelSpec,
    schedule: &SampleSchedule,
    config: &SolverConfig,
    stream: &mut RandomStream,
    options: MultilevelOptions,
) -> Result<EstimatorAccumulator> {
    let mut levels = prepare_levels(hierarchy, spec, config, options.preconditioned)?;
    run_ml_gibbs_with(&mut levels, hierarchy, y, schedule, config, stream, options.chain)
}

/// [`run_ml_gibbs`] on already prepared level systems.
pub fn run_ml_gibbs_with<T: Real>(
    levels: &mut [LevelSystem<'_, T>],
    hierarchy: &LevelHierarchy<T>,
    y: &[T],
    schedule: &SampleSchedule,
    config: &SolverConfig,
    stream: &mut RandomStream,
    chain_options: ChainOptions,
) -> Result<EstimatorAccumulator> {
    check_schedule(hierarchy, schedule)?;
    let mut acc = EstimatorAccumulator::new(EstimatorMode::Pooled, hierarchy);
    let mut chain = Chain::new(chain_options);
    for _ in 0..schedule.burn_in {
        step_into(&mut chain, &mut levels[0], y, config, stream, &mut acc)?;
    }
    let mut current = 0;
    for &(level, chunk) in &schedule.visits {
        if level != current {
            chain.transfer(hierarchy, current, level)?;
            current = level;
            for _ in 0..schedule.level_change_burn {
                step_into(&mut chain, &mut levels[level], y, config, stream, &mut acc)?;
            }
        }
        for _ in 0..chunk {
            step_into(&mut chain, &mut levels[level], y, config, stream, &mut acc)?;
            acc.add(level, &chain.state.b);
        }
    }
    acc.trace = chain.trace().to_vec();
    Ok(acc)
}

/// One fine draw on `fine.level` and its coarse partner; returns
/// `d = b_l − P b_{l−1}` (in the fine space).
#[allow(clippy::too_many_arguments)]
fn coupled_step<T: Real>(
    chain: &mut Chain<T>,
    fine: &mut LevelSystem<'_, T>,
    coarse: &mut LevelSystem<'_, T>,
    p: &Prolongator<T>,
    y: &[T],
    config: &SolverConfig,
    stream: &mut RandomStream,
    coupling: Coupling,
    acc: &mut EstimatorAccumulator,
) -> Result<Vec<T>> {
    let previous = chain.state.b.clone();
    let it = chain.iteration();
    let out = step_into(chain, fine, y, config, stream, acc)?;
    let b = &chain.state.b;
    let partner = match coupling {
        Coupling::Projection => p.restrict(b)?,
        Coupling::Solves => {
            let state = &chain.state;
            let lambda = assemble_lambda(&coarse.spec, state.lambda_v, state.lambda_u);
            let noise = NoiseDraw {
                e2: p.restrict(&out.noise.e2)?,
                e1: out.noise.e1,
            };
            let x0 = if config.warm_start && previous.len() == p.fine_dim() {
                p.restrict(&previous)?
            } else {
                vec![T::zero(); p.coarse_dim()]
            };
            let (bc, report) = solve_noise_system(
                coarse.matrix,
                y,
                &noise,
                state.tau,
                &lambda,
                &x0,
                config,
                coarse.level,
                coarse.precond.as_mut(),
            )
            .map_err(|e| e.at(coarse.level, it))?;
            acc.record_solve(coarse.level, report.iterations);
            bc
        }
    };
    let back = p.prolong(&partner)?;
    Ok(b.iter().zip(&back).map(|(&f, &c)| f - c).collect())
}

/// Telescoping multilevel sampler. Visits to level 0 advance a plain chain;
/// visits to level `l ≥ 1` draw coupled differences `d_l`.
#[allow(clippy::too_many_arguments)]
pub fn run_ml_cs<T: Real>(
    hierarchy: &LevelHierarchy<T>,
    y: &[T],
    spec: &MixedModelSpec,
    schedule: &SampleSchedule,
    config: &SolverConfig,
    stream: &mut RandomStream,
    coupling: Coupling,
    options: MultilevelOptions,
) -> Result<EstimatorAccumulator> {
    let mut levels = prepare_levels(hierarchy, spec, config, options.preconditioned)?;
    run_ml_cs_with(&mut levels, hierarchy, y, schedule, config, stream, coupling, options.chain)
}

/// [`run_ml_cs`] on already prepared level systems.
#[allow(clippy::too_many_arguments)]
pub fn run_ml_cs_with<T: Real>(
    levels: &mut [LevelSystem<'_, T>],
    hierarchy: &LevelHierarchy<T>,
    y: &[T],
    schedule: &SampleSchedule,
    config: &SolverConfig,
    stream: &mut RandomStream,
    coupling: Coupling,
    chain_options: ChainOptions,
) -> Result<EstimatorAccumulator> {
    check_schedule(hierarchy, schedule)?;
    if coupling == Coupling::Solves {
        check_solver_family(schedule, config)?;
    }
    let mut acc = EstimatorAccumulator::new(EstimatorMode::Telescoping, hierarchy);
    let mut chain = Chain::new(chain_options);
    for _ in 0..schedule.burn_in {
        step_into(&mut chain, &mut levels[0], y, config, stream, &mut acc)?;
    }
    let mut current = 0;
    for &(level, chunk) in &schedule.visits {
        if level != current {
            chain.transfer(hierarchy, current, level)?;
            current = level;
            for _ in 0..schedule.level_change_burn {
                step_into(&mut chain, &mut levels[level], y, config, stream, &mut acc)?;
            }
        }
        if level == 0 {
            for _ in 0..chunk {
                step_into(&mut chain, &mut levels[0], y, config, stream, &mut acc)?;
                acc.add(0, &chain.state.b);
            }
            continue;
        }
        let (lower, upper) = levels.split_at_mut(level);
        let (coarse, fine) = (&mut lower[level - 1], &mut upper[0]);
        let p = hierarchy.prolongator(level);
        for _ in 0..chunk {
            let d = coupled_step(&mut chain, fine, coarse, p, y, config, stream, coupling, &mut acc)?;
            let m = d.iter().fold(0.0f64, |m, v| m.max(v.widen().abs()));
            acc.max_abs_difference[level] = acc.max_abs_difference[level].max(m);
            acc.add(level, &d);
        }
    }
    acc.trace = chain.trace().to_vec();
    Ok(acc)
}

/// Posterior-mean coefficient estimate in the finest space.
pub fn finest_mean<T: Real>(acc: &EstimatorAccumulator, hierarchy: &LevelHierarchy<T>) -> Result<Vec<T>> {
    if acc.sums.len() != hierarchy.n_levels() {
        return Err(Error::dim("accumulator levels", hierarchy.n_levels(), acc.sums.len()));
    }
    let wide = match acc.mode {
        EstimatorMode::Pooled => {
            let total: usize = acc.counts.iter().sum();
            if total == 0 {
                return Err(Error::Estimator("no kept samples on any level".into()));
            }
            let mut v = acc.sums[0].clone();
            for l in 1..hierarchy.n_levels() {
                v = hierarchy.prolongator(l).prolong_wide(&v)?;
                for (a, s) in v.iter_mut().zip(&acc.sums[l]) {
                    *a += s;
                }
            }
            let n = total as f64;
            return Ok(v.iter().map(|s| T::narrow(s / n)).collect());
        }
        EstimatorMode::Telescoping => {
            if let Some(l) = acc.counts.iter().position(|&c| c == 0) {
                return Err(Error::Estimator(format!("no kept samples on level {l}")));
            }
            let mean = |l: usize| {
                let n = acc.counts[l] as f64;
                acc.sums[l].iter().map(move |s| s / n)
            };
            if hierarchy.n_levels() == 1 {
                return Ok(mean(0).map(T::narrow).collect());
            }
            let mut v: Vec<f64> = mean(0).collect();
            for l in 1..hierarchy.n_levels() {
                v = hierarchy.prolongator(l).prolong_wide(&v)?;
                for (a, d) in v.iter_mut().zip(mean(l)) {
                    *a += d;
                }
            }
            v
        }
    };
    Ok(wide.into_iter().map(T::narrow).collect())
}

/// `X_eval` times the finest-space estimate.
pub fn finalize_estimate<T: Real>(
    acc: &EstimatorAccumulator,
    hierarchy: &LevelHierarchy<T>,
    x_eval: &SparseMatrix<T>,
) -> Result<Vec<T>> {
    x_eval.spmv(&finest_mean(acc, hierarchy)?)
}

fn row_dot<T: Real>(x: &SparseMatrix<T>, r: usize, v: &[T]) -> f64 {
    let (cols, vals) = x.row(r);
    cols.iter().zip(vals).map(|(&c, &a)| a.widen() * v[c].widen()).sum()
}

/// Runs a fresh chain on `level` for `burn_in` discarded and `n` kept draws,
/// handing each kept fine sample (and its coupled difference for `l ≥ 1`)
/// to `visit`.
#[allow(clippy::too_many_arguments)]
fn sample_level<T: Real>(
    hierarchy: &LevelHierarchy<T>,
    y: &[T],
    spec: &MixedModelSpec,
    level: usize,
    coupling: Option<Coupling>,
    n: usize,
    burn_in: usize,
    config: &SolverConfig,
    stream: &mut RandomStream,
    preconditioned: bool,
    mut visit: impl FnMut(&[T], Option<&[T]>),
) -> Result<()> {
    check_spec(hierarchy, spec)?;
    if level >= hierarchy.n_levels() {
        return Err(Error::Config(format!("level {level} is not in the hierarchy")));
    }
    let coupling = coupling.filter(|_| level >= 1);
    if coupling == Some(Coupling::Solves) && config.method_for_level(level) != config.method_for_level(level - 1) {
        return Err(Error::Config(format!(
            "coupled solves need the same solver on levels {} and {level}",
            level - 1
        )));
    }
    let mut fine = prepare_level(hierarchy, spec, level, config, preconditioned)?;
    let mut coarse = match coupling {
        Some(_) => Some(prepare_level(hierarchy, spec, level - 1, config, preconditioned)?),
        None => None,
    };
    let mut acc = EstimatorAccumulator::new(EstimatorMode::Telescoping, hierarchy);
    let mut chain = Chain::new(ChainOptions::default());
    for _ in 0..burn_in {
        step_into(&mut chain, &mut fine, y, config, stream, &mut acc)?;
    }
    for _ in 0..n {
        match (coupling, coarse.as_mut()) {
            (Some(c), Some(coarse)) => {
                let p = hierarchy.prolongator(level);
                let d = coupled_step(&mut chain, &mut fine, coarse, p, y, config, stream, c, &mut acc)?;
                visit(&chain.state.b, Some(&d));
            }
            _ => {
                step_into(&mut chain, &mut fine, y, config, stream, &mut acc)?;
                visit(&chain.state.b, None);
            }
        }
    }
    Ok(())
}

/// Predicted observations at `probes` from coupled draws on one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledSamples {
    pub level: usize,
    /// `[sample][probe]` values of `y_l`.
    pub fine: Vec<Vec<f64>>,
    /// `[sample][probe]` values of `y_l − y_{l−1}`; empty on level 0.
    pub difference: Vec<Vec<f64>>,
}

/// Draws `n` coupled samples on `level` (after `burn_in`) and records the
/// predicted observations `X_l b_l` and differences `X_l d_l` at `probes`.
#[allow(clippy::too_many_arguments)]
pub fn coupled_samples<T: Real>(
    hierarchy: &LevelHierarchy<T>,
    y: &[T],
    spec: &MixedModelSpec,
    level: usize,
    coupling: Coupling,
    n: usize,
    burn_in: usize,
    config: &SolverConfig,
    stream: &mut RandomStream,
    probes: &[usize],
    preconditioned: bool,
) -> Result<CoupledSamples> {
    let x = hierarchy.matrix(level);
    if let Some(&r) = probes.iter().find(|&&r| r >= x.n_rows()) {
        return Err(Error::Index {
            row: r,
            col: 0,
            n_rows: x.n_rows(),
            n_cols: x.n_cols(),
        });
    }
    let mut out = CoupledSamples {
        level,
        fine: Vec::with_capacity(n),
        difference: Vec::new(),
    };
    sample_level(
        hierarchy,
        y,
        spec,
        level,
        Some(coupling),
        n,
        burn_in,
        config,
        stream,
        preconditioned,
        |b, d| {
            out.fine.push(probes.iter().map(|&r| row_dot(x, r, b)).collect());
            if let Some(d) = d {
                out.difference.push(probes.iter().map(|&r| row_dot(x, r, d)).collect());
            }
        },
    )?;
    Ok(out)
}

/// Unbiased sample variance.
pub fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return f64::NAN;
    }
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Pilot estimate of `s²_l`: the sample variance over `pilot` draws of the
/// mean predicted observation on each level. For a telescoping sampler
/// (`coupling` set) levels `l ≥ 1` use the coupled difference instead.
/// Levels run in parallel on streams split from `stream`.
#[allow(clippy::too_many_arguments)]
pub fn pilot_variances<T: Real>(
    hierarchy: &LevelHierarchy<T>,
    y: &[T],
    spec: &MixedModelSpec,
    config: &SolverConfig,
    stream: &RandomStream,
    coupling: Option<Coupling>,
    pilot: usize,
    burn_in: usize,
    preconditioned: bool,
) -> Result<Vec<f64>> {
    (0..hierarchy.n_levels())
        .into_par_iter()
        .map(|level| {
            let mut s = stream.split(level as u64);
            let x = hierarchy.matrix(level);
            let n_rows = x.n_rows().max(1) as f64;
            let mut values = Vec::with_capacity(pilot);
            sample_level(
                hierarchy,
                y,
                spec,
                level,
                coupling,
                pilot,
                burn_in,
                config,
                &mut s,
                preconditioned,
                |b, d| {
                    let v = d.unwrap_or(b);
                    let pred = x.spmv(v).expect("widths checked");
                    values.push(pred.iter().map(|p| p.widen()).sum::<f64>() / n_rows);
                },
            )?;
            Ok(sample_variance(&values))
        })
        .collect()
}

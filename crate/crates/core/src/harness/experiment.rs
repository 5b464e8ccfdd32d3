//! Cross-validated experiments over the single-level and multilevel samplers.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{run_chain, ChainOptions, MixedModelSpec, Priors};
use crate::hierarchy::{HierarchyConfig, LevelHierarchy};
use crate::multilevel::{
    allocate_cost, allocate_variance, finalize_estimate, make_schedule, pilot_variances,
    prepare_levels, run_ml_cs_with, run_ml_gibbs_with, Coupling, LevelCost, SampleSchedule,
    ScheduleKind,
};
use crate::rng::RandomStream;
use crate::scalar::Real;
use crate::solvers::{SolverConfig, SolverMethod};
use crate::sparse::SparseMatrix;

use super::cv::kfold_split;
use super::io::{load_matrix, load_targets, MatrixFormat};
use super::metrics::{mean_std, metrics, Metrics};
use super::synth::synthesize_targets;

const SYNTH_KEY: u64 = 0x5359_4e54;
const SPLIT_KEY: u64 = 0x4356;
const FOLD_KEY: u64 = 0x464f_4c44_0000;
const PILOT_KEY: u64 = 0x5049_4c54_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Gibbs,
    Ml,
    Mlcss,
    Mlcsp,
}

impl SamplerKind {
    pub fn label(self, preconditioned: bool) -> &'static str {
        match (self, preconditioned) {
            (Self::Gibbs, _) => "Gibbs",
            (Self::Ml, false) => "ML-G",
            (Self::Ml, true) => "MLMLP-G",
            (Self::Mlcss, false) => "MLCSS-G",
            (Self::Mlcss, true) => "MLMLPCSS-G",
            (Self::Mlcsp, false) => "MLCSP-G",
            (Self::Mlcsp, true) => "MLMLPCSP-G",
        }
    }

    fn coupling(self) -> Option<Coupling> {
        match self {
            Self::Mlcss => Some(Coupling::Solves),
            Self::Mlcsp => Some(Coupling::Projection),
            _ => None,
        }
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gibbs" => Ok(Self::Gibbs),
            "ml" => Ok(Self::Ml),
            "mlcss" => Ok(Self::Mlcss),
            "mlcsp" => Ok(Self::Mlcsp),
            _ => Err(Error::Config(format!("unknown sampler `{s}` (gibbs|ml|mlcss|mlcsp)"))),
        }
    }
}

/// How kept samples are spread over levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocationRule {
    /// As produced by the configured schedule.
    Equal,
    /// Inversely proportional to the nonzeros of each level.
    Cost,
    /// From pilot variances and nonzeros.
    Var,
}

impl FromStr for AllocationRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal" => Ok(Self::Equal),
            "cost" => Ok(Self::Cost),
            "var" => Ok(Self::Var),
            _ => Err(Error::Config(format!("unknown allocation `{s}` (equal|cost|var)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    /// Number of leading fixed-effect columns.
    pub fixed: usize,
    pub priors: Priors,
    pub sampler: SamplerKind,
    pub precond: bool,
    pub levels: usize,
    pub coarse_range: (usize, usize),
    pub samples: usize,
    pub burnin: usize,
    pub schedule: ScheduleKind,
    pub alloc: AllocationRule,
    pub level_change_burn: usize,
    pub pilot: usize,
    pub folds: usize,
    pub seed: u64,
    pub cg_tol: f64,
    pub solver: SolverMethod,
    pub coarsest_solver: Option<SolverMethod>,
    pub coef_variance: f64,
    pub noise_variance: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: None,
            targets: None,
            fixed: 0,
            priors: Priors::default(),
            sampler: SamplerKind::Gibbs,
            precond: false,
            levels: 3,
            coarse_range: (100, 1000),
            samples: 2200,
            burnin: 200,
            schedule: ScheduleKind::Consecutive,
            alloc: AllocationRule::Equal,
            level_change_burn: 0,
            pilot: 50,
            folds: 5,
            seed: 0,
            cg_tol: 1e-8,
            solver: SolverMethod::Cg,
            coarsest_solver: None,
            coef_variance: 10.0,
            noise_variance: 1000.0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.priors.validate()?;
        if self.folds < 2 {
            return Err(Error::Config(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.samples <= self.burnin {
            return Err(Error::Config(format!(
                "samples {} must exceed burn-in {}",
                self.samples, self.burnin
            )));
        }
        if self.levels == 0 {
            return Err(Error::Config("levels must be at least 1".into()));
        }
        if !(self.cg_tol > 0.0) {
            return Err(Error::Config(format!("cg tolerance {} must be positive", self.cg_tol)));
        }
        for p in self.data.iter().chain(&self.targets) {
            if !p.exists() {
                return Err(Error::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            method: self.solver,
            coarsest_method: self.coarsest_solver,
            tol: self.cg_tol,
            ..SolverConfig::default()
        }
    }

    pub fn label(&self) -> &'static str {
        self.sampler.label(self.precond)
    }
}

/// Where the evaluation targets come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets<T> {
    /// Measured observations; test rows are scored against them.
    Observed(Vec<T>),
    /// `y = X b + e` is synthesized; test rows are scored against `X b`.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Option<Metrics>,
    pub error: Option<String>,
    pub setup_seconds: f64,
    pub execution_seconds: f64,
    pub pilot_seconds: f64,
    pub level_widths: Vec<usize>,
    pub level_nnz: Vec<usize>,
    pub samples_per_level: Vec<usize>,
    pub mean_solve_iterations: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub sampler: String,
    pub config: ExperimentConfig,
    pub folds: Vec<FoldReport>,
    pub pearson: MeanStd,
    pub rmse: MeanStd,
    pub mae: MeanStd,
    pub setup_seconds: f64,
    pub execution_seconds: f64,
    pub pilot_seconds: f64,
}

impl MetricsReport {
    fn from_folds(config: &ExperimentConfig, folds: Vec<FoldReport>) -> Self {
        let ok: Vec<&Metrics> = folds.iter().filter_map(|f| f.metrics.as_ref()).collect();
        let col = |g: fn(&Metrics) -> f64| ok.iter().map(|m| g(m)).collect::<Vec<_>>();
        let avg = |g: fn(&FoldReport) -> f64| {
            let n = folds.len().max(1) as f64;
            folds.iter().map(g).sum::<f64>() / n
        };
        Self {
            sampler: config.label().to_string(),
            pearson: MeanStd::of(&col(|m| m.pearson)),
            rmse: MeanStd::of(&col(|m| m.rmse)),
            mae: MeanStd::of(&col(|m| m.mae)),
            setup_seconds: avg(|f| f.setup_seconds),
            execution_seconds: avg(|f| f.execution_seconds),
            pilot_seconds: avg(|f| f.pilot_seconds),
            config: config.clone(),
            folds,
        }
    }

    /// Copy with every wall-clock field zeroed.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.setup_seconds = 0.0;
        r.execution_seconds = 0.0;
        r.pilot_seconds = 0.0;
        for f in &mut r.folds {
            f.setup_seconds = 0.0;
            f.execution_seconds = 0.0;
            f.pilot_seconds = 0.0;
        }
        r
    }

    /// Equality of everything but timings, with `NaN` equal to itself.
    pub fn same_results(&self, other: &Self) -> bool {
        let a = serde_json::to_string(&self.without_timings());
        let b = serde_json::to_string(&other.without_timings());
        matches!((a, b), (Ok(a), Ok(b)) if a == b)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned-text summary: one line per fold and a mean (std) line.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let header = format!(
            "{:<12} {:>10} {:>12} {:>12} {:>10} {:>10}  {}",
            "fold", "pearson", "rmse", "mae", "setup(s)", "exec(s)", "samples per level"
        );
        let _ = writeln!(s, "{}", self.sampler);
        let _ = writeln!(s, "{header}");
        for f in &self.folds {
            match (&f.metrics, &f.error) {
                (Some(m), _) => {
                    let _ = writeln!(
                        s,
                        "{:<12} {:>10.4} {:>12.4e} {:>12.4e} {:>10.3} {:>10.3}  {:?}",
                        f.fold, m.pearson, m.rmse, m.mae, f.setup_seconds, f.execution_seconds, f.samples_per_level
                    );
                }
                (None, e) => {
                    let _ = writeln!(s, "{:<12} error: {}", f.fold, e.as_deref().unwrap_or("unknown"));
                }
            }
        }
        let _ = writeln!(
            s,
            "{:<12} {:>10} {:>12} {:>12} {:>10.3} {:>10.3}",
            "mean (std)",
            format!("{:.4}", self.pearson.mean),
            format!("{:.3e}", self.rmse.mean),
            format!("{:.3e}", self.mae.mean),
            self.setup_seconds,
            self.execution_seconds
        );
        let _ = writeln!(
            s,
            "{:<12} {:>10} {:>12} {:>12}",
            "",
            format!("({:.4})", self.pearson.std),
            format!("({:.2e})", self.rmse.std),
            format!("({:.2e})", self.mae.std)
        );
        s
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_table())
    }
}

/// Loads the configured data and runs the experiment in precision `T`.
pub fn run_experiment<T: Real>(config: &ExperimentConfig) -> Result<MetricsReport> {
    config.validate()?;
    let path = config
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("no data file given".into()))?;
    let x: SparseMatrix<T> = load_matrix(path, MatrixFormat::from_path(path))?;
    let targets = match &config.targets {
        Some(p) => Targets::Observed(load_targets(p)?),
        None => Targets::Synthetic,
    };
    run_experiment_on(&x, targets, config)
}

/// Runs the cross-validated experiment on an in-memory matrix. Folds run in
/// parallel; a failing fold is reported and the others continue.
pub fn run_experiment_on<T: Real>(
    x: &SparseMatrix<T>,
    targets: Targets<T>,
    config: &ExperimentConfig,
) -> Result<MetricsReport> {
    config.validate()?;
    if config.fixed > x.n_cols() {
        return Err(Error::dim("fixed-effect count", x.n_cols(), config.fixed));
    }
    let root = RandomStream::new(config.seed);
    let (y, truth) = match targets {
        Targets::Observed(y) => {
            if y.len() != x.n_rows() {
                return Err(Error::dim("targets", x.n_rows(), y.len()));
            }
            (y.clone(), y)
        }
        Targets::Synthetic => {
            let (b, y) = synthesize_targets(
                x,
                &mut root.split(SYNTH_KEY),
                config.coef_variance,
                config.noise_variance,
            )?;
            (y, x.spmv(&b)?)
        }
    };
    let folds = kfold_split(x.n_rows(), config.folds, &mut root.split(SPLIT_KEY))?;
    let reports: Vec<FoldReport> = folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| {
            let mut report = FoldReport {
                fold: i,
                n_train: fold.train.len(),
                n_test: fold.test.len(),
                metrics: None,
                error: None,
                setup_seconds: 0.0,
                execution_seconds: 0.0,
                pilot_seconds: 0.0,
                level_widths: Vec::new(),
                level_nnz: Vec::new(),
                samples_per_level: Vec::new(),
                mean_solve_iterations: Vec::new(),
            };
            let result = run_fold(x, &y, &truth, &fold.train, &fold.test, config, &root, i, &mut report);
            if let Err(e) = result {
                log::error!("fold {i} failed: {e}");
                report.error = Some(e.to_string());
            }
            report
        })
        .collect();
    Ok(MetricsReport::from_folds(config, reports))
}

fn gather<T: Copy>(v: &[T], rows: &[usize]) -> Vec<T> {
    rows.iter().map(|&r| v[r]).collect()
}

#[allow(clippy::too_many_arguments)]
fn run_fold<T: Real>(
    x: &SparseMatrix<T>,
    y: &[T],
    truth: &[T],
    train: &[usize],
    test: &[usize],
    config: &ExperimentConfig,
    root: &RandomStream,
    fold: usize,
    report: &mut FoldReport,
) -> Result<()> {
    let x_train = x.select_rows(train)?;
    let x_test = x.select_rows(test)?;
    let y_train = gather(y, train);
    let truth_test = gather(truth, test);
    let spec = MixedModelSpec::new(config.fixed, x.n_cols() - config.fixed, config.priors)?;
    let solver = config.solver_config();
    let mut stream = root.split(FOLD_KEY + fold as u64);

    let pred = if config.sampler == SamplerKind::Gibbs {
        report.level_widths = vec![x_train.n_cols()];
        report.level_nnz = vec![x_train.nnz()];
        let start = Instant::now();
        let res = run_chain(
            &x_train,
            &y_train,
            &spec,
            config.samples,
            config.burnin,
            &solver,
            &mut stream,
            ChainOptions::default(),
        )?;
        report.execution_seconds = start.elapsed().as_secs_f64();
        report.samples_per_level = vec![res.kept_count];
        report.mean_solve_iterations = vec![res.mean_solve_iterations];
        x_test.spmv(&res.posterior_mean())?
    } else {
        let start = Instant::now();
        let hierarchy = if config.levels == 1 {
            LevelHierarchy::single(x_train, config.fixed)?
        } else {
            LevelHierarchy::build(
                x_train,
                &HierarchyConfig {
                    group_boundary: config.fixed,
                    coarse_size_range: config.coarse_range,
                    max_levels: config.levels,
                },
            )?
        };
        let mut levels = prepare_levels(&hierarchy, &spec, &solver, config.precond)?;
        report.setup_seconds = start.elapsed().as_secs_f64();
        let summary = hierarchy.summary();
        report.level_widths = summary.widths;
        report.level_nnz = summary.nnz.clone();

        let n_levels = hierarchy.n_levels();
        let kept = config.samples - config.burnin;
        let schedule = match config.alloc {
            AllocationRule::Equal => make_schedule(config.schedule, n_levels, config.samples, config.burnin)?,
            AllocationRule::Cost => SampleSchedule::from_totals(
                allocate_cost(&LevelCost::new(summary.nnz.clone()), kept)?,
                config.burnin,
            ),
            AllocationRule::Var => {
                let start = Instant::now();
                let s2 = pilot_variances(
                    &hierarchy,
                    &y_train,
                    &spec,
                    &solver,
                    &root.split(PILOT_KEY + fold as u64),
                    config.sampler.coupling(),
                    config.pilot,
                    config.burnin,
                    config.precond,
                )?;
                report.pilot_seconds = start.elapsed().as_secs_f64();
                let costs = LevelCost::new(summary.nnz.clone()).with_variances(s2);
                SampleSchedule::from_totals(allocate_variance(&costs, kept)?, config.burnin)
            }
        }
        .with_level_change_burn(config.level_change_burn);
        report.samples_per_level = schedule.totals.clone();

        let start = Instant::now();
        let acc = match config.sampler.coupling() {
            None => run_ml_gibbs_with(
                &mut levels,
                &hierarchy,
                &y_train,
                &schedule,
                &solver,
                &mut stream,
                ChainOptions::default(),
            )?,
            Some(c) => run_ml_cs_with(
                &mut levels,
                &hierarchy,
                &y_train,
                &schedule,
                &solver,
                &mut stream,
                c,
                ChainOptions::default(),
            )?,
        };
        report.execution_seconds = start.elapsed().as_secs_f64();
        report.mean_solve_iterations = acc.mean_solve_iterations();
        finalize_estimate(&acc, &hierarchy, &x_test)?
    };
    report.metrics = Some(metrics(&pred, &truth_test)?);
    Ok(())
}

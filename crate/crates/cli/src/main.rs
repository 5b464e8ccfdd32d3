use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mlgibbs::harness::{
    level_variance_report, load_matrix, load_targets, run_experiment, save_matrix_market,
    synthesize_targets, write_targets, AllocationRule, ClusteredSparse, ExperimentConfig,
    LevelVarianceConfig, MatrixFormat, SamplerKind,
};
use mlgibbs::{
    Coupling, HierarchyConfig, LevelHierarchy, MixedModelSpec, RandomStream, Real, ScheduleKind,
    SolverMethod, SparseMatrix,
};

const THREADS_VAR: &str = "MLGIBBS_THREADS";

#[derive(Parser)]
#[command(name = "mlgibbs", version, about = "Single- and multilevel Gibbs samplers for sparse Bayesian regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Cross-validated sampler run.
    Run(RunArgs),
    /// Write a synthetic clustered sparse matrix and targets.
    Synth(SynthArgs),
    /// Build the level hierarchy and print its summary as JSON.
    Hierarchy(HierarchyArgs),
    /// Per-level variances of predicted observations and coupled differences (CSV).
    LevelVariance(LevelVarianceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

fn parse_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected `min,max`")?;
    let a = a.trim().parse().map_err(|_| format!("bad minimum `{a}`"))?;
    let b = b.trim().parse().map_err(|_| format!("bad maximum `{b}`"))?;
    Ok((a, b))
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Observed targets (first CSV column); synthetic targets when absent.
    #[arg(long)]
    targets: Option<PathBuf>,
    /// Number of leading fixed-effect columns.
    #[arg(long)]
    fixed: Option<usize>,
    /// gibbs, ml, mlcss or mlcsp.
    #[arg(long)]
    sampler: Option<SamplerKind>,
    #[arg(long)]
    precond: bool,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long, value_parser = parse_range)]
    coarse_range: Option<(usize, usize)>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    /// consecutive, vcycle:k or wcycle:k.
    #[arg(long)]
    schedule: Option<ScheduleKind>,
    /// equal, cost or var.
    #[arg(long)]
    alloc: Option<AllocationRule>,
    #[arg(long)]
    level_change_burn: Option<usize>,
    #[arg(long)]
    pilot: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cg_tol: Option<f64>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    #[arg(long, value_enum)]
    coarsest_solver: Option<SolverArg>,
    #[arg(long)]
    alpha_e: Option<f64>,
    #[arg(long)]
    beta_e: Option<f64>,
    #[arg(long)]
    alpha_v: Option<f64>,
    #[arg(long)]
    beta_v: Option<f64>,
    #[arg(long)]
    alpha_u: Option<f64>,
    #[arg(long)]
    beta_u: Option<f64>,
    #[arg(long)]
    coef_variance: Option<f64>,
    #[arg(long)]
    noise_variance: Option<f64>,
    #[arg(long, value_enum, default_value = "f64")]
    precision: Precision,
    /// JSON report path; the table always goes to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Cg,
    Direct,
}

impl From<SolverArg> for SolverMethod {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Cg => SolverMethod::Cg,
            SolverArg::Direct => SolverMethod::Direct,
        }
    }
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c: ExperimentConfig = match &self.config {
            Some(p) => serde_json::from_str(
                &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            )
            .with_context(|| format!("parsing {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    c.$field = v;
                }
            )*};
        }
        set!(fixed, sampler, levels, coarse_range, samples, burnin, schedule, alloc);
        set!(level_change_burn, pilot, folds, seed, cg_tol, coef_variance, noise_variance);
        if self.data.is_some() {
            c.data = self.data.clone();
        }
        if self.targets.is_some() {
            c.targets = self.targets.clone();
        }
        if self.precond {
            c.precond = true;
        }
        if let Some(s) = self.solver {
            c.solver = s.into();
        }
        if let Some(s) = self.coarsest_solver {
            c.coarsest_solver = Some(s.into());
        }
        let p = &mut c.priors;
        for (flag, slot) in [
            (self.alpha_e, &mut p.alpha_e),
            (self.beta_e, &mut p.beta_e),
            (self.alpha_v, &mut p.alpha_v),
            (self.beta_v, &mut p.beta_v),
            (self.alpha_u, &mut p.alpha_u),
            (self.beta_u, &mut p.beta_u),
        ] {
            if let Some(v) = flag {
                *slot = v;
            }
        }
        Ok(c)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    rows: usize,
    #[arg(long, default_value_t = 2000)]
    cols: usize,
    /// Number of near-collinear column groups.
    #[arg(long, default_value_t = 200)]
    groups: usize,
    #[arg(long, default_value_t = 0.01)]
    fill: f64,
    #[arg(long, default_value_t = 0.1)]
    jitter: f64,
    #[arg(long, default_value_t = 10.0)]
    scale: f64,
    #[arg(long, default_value_t = 10.0)]
    coef_variance: f64,
    #[arg(long, default_value_t = 1000.0)]
    noise_variance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// MatrixMarket output.
    #[arg(long)]
    out: PathBuf,
    /// Targets CSV output.
    #[arg(long)]
    targets_out: Option<PathBuf>,
}

#[derive(Args)]
struct HierarchyArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    fixed: usize,
    #[arg(long, default_value_t = 3)]
    levels: usize,
    #[arg(long, value_parser = parse_range, default_value = "100,1000")]
    coarse_range: (usize, usize),
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct LevelVarianceArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    targets: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    fixed: usize,
    #[arg(long, default_value_t = 3)]
    levels: usize,
    #[arg(long, value_parser = parse_range, default_value = "100,1000")]
    coarse_range: (usize, usize),
    #[arg(long, default_value_t = 500)]
    samples: usize,
    #[arg(long, default_value_t = 200)]
    burnin: usize,
    /// Number of observations to probe.
    #[arg(long, default_value_t = 20)]
    probes: usize,
    #[arg(long, value_delimiter = ',', default_value = "solves,projection")]
    coupling: Vec<Coupling>,
    #[arg(long)]
    precond: bool,
    #[arg(long, default_value_t = 1e-8)]
    cg_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn warn_small_chunk(schedule: ScheduleKind) {
    if let ScheduleKind::VCycle(k) | ScheduleKind::WCycle(k) = schedule {
        if k < 10 {
            log::warn!("chunk size {k} < 10: frequent level switches, little work per visit");
        }
    }
}

fn run(args: &RunArgs) -> Result<()> {
    let config = args.config()?;
    warn_small_chunk(config.schedule);
    let report = match args.precision {
        Precision::F64 => run_experiment::<f64>(&config)?,
        Precision::F32 => run_experiment::<f32>(&config)?,
    };
    print!("{}", report.to_table());
    if let Some(p) = &args.report {
        fs::write(p, report.to_json()?).with_context(|| format!("writing {}", p.display()))?;
    }
    if report.folds.iter().all(|f| f.error.is_some()) {
        bail!("every fold failed");
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let root = RandomStream::new(args.seed);
    let generator = ClusteredSparse {
        n_rows: args.rows,
        n_cols: args.cols,
        n_groups: args.groups,
        fill: args.fill,
        jitter: args.jitter,
        scale: args.scale,
    };
    let x: SparseMatrix<f64> = generator.generate(&mut root.split(1))?;
    save_matrix_market(&x, &args.out)?;
    if let Some(p) = &args.targets_out {
        let (_, y) = synthesize_targets(&x, &mut root.split(2), args.coef_variance, args.noise_variance)?;
        let mut f = std::io::BufWriter::new(fs::File::create(p)?);
        write_targets(&y, &mut f)?;
        f.flush()?;
    }
    Ok(())
}

fn load(path: &Path) -> Result<SparseMatrix<f64>> {
    load_matrix(path, MatrixFormat::from_path(path)).with_context(|| format!("loading {}", path.display()))
}

fn build_hierarchy<T: Real>(
    x: SparseMatrix<T>,
    fixed: usize,
    levels: usize,
    range: (usize, usize),
) -> Result<LevelHierarchy<T>> {
    Ok(LevelHierarchy::build(
        x,
        &HierarchyConfig {
            group_boundary: fixed,
            coarse_size_range: range,
            max_levels: levels,
        },
    )?)
}

fn hierarchy(args: &HierarchyArgs) -> Result<()> {
    let h = build_hierarchy(load(&args.data)?, args.fixed, args.levels, args.coarse_range)?;
    let json = serde_json::to_string_pretty(&h.summary())? + "\n";
    write_output(args.report.as_deref(), &json)
}

fn level_variance(args: &LevelVarianceArgs) -> Result<()> {
    let x = load(&args.data)?;
    let root = RandomStream::new(args.seed);
    let y = match &args.targets {
        Some(p) => load_targets(p)?,
        None => synthesize_targets(&x, &mut root.split(1), 10.0, 1000.0)?.1,
    };
    let probes = mlgibbs::harness::choose_probes(&x, args.probes, &mut root.split(2));
    let spec = MixedModelSpec::new(args.fixed, x.n_cols() - args.fixed.min(x.n_cols()), Default::default())?;
    let h = build_hierarchy(x, args.fixed, args.levels, args.coarse_range)?;
    let config = LevelVarianceConfig {
        samples: args.samples,
        burnin: args.burnin,
        probes,
        couplings: args.coupling.clone(),
        solver: mlgibbs::SolverConfig {
            tol: args.cg_tol,
            ..Default::default()
        },
        preconditioned: args.precond,
        seed: args.seed,
    };
    let report = level_variance_report(&h, &y, &spec, &config)?;
    write_output(args.out.as_deref(), &report.to_csv())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_VAR}=`{v}` is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    configure_threads()?;
    match Cli::parse().command {
        Command::Run(a) => run(&a),
        Command::Synth(a) => synth(&a),
        Command::Hierarchy(a) => hierarchy(&a),
        Command::LevelVariance(a) => level_variance(&a),
    }
}

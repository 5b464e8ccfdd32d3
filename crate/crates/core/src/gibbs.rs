//! Noise-injection Gibbs sampler for the linear mixed model
//! `y = W v + Z u + e = X b + e` with `X = [W Z]`.
//!
//! Each iteration draws the precisions `τ, λ_v, λ_u` from their gamma
//! conditionals, then a coefficient sample by solving
//!
//! ```text
//! (XᵀX + Λ/τ) b = Xᵀ(y + e₁) + e₂/τ,   e₁ ~ N(0, τ⁻¹ I),  e₂ ~ N(0, Λ)
//! ```
//!
//! which yields an exact draw from `N((XᵀX + Λ/τ)⁻¹Xᵀy, (τ(XᵀX + Λ/τ))⁻¹)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::scalar::Real;
use crate::solvers::{solve_gram, SolveReport, SolverConfig, TwoLevelPreconditioner};
use crate::sparse::SparseMatrix;

/// Shape-rate gamma hyperpriors for the three precisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct Priors {
    pub alpha_e: f64,
    pub beta_e: f64,
    pub alpha_v: f64,
    pub beta_v: f64,
    pub alpha_u: f64,
    pub beta_u: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            alpha_e: 1.0,
            beta_e: 1.0,
            alpha_v: 1.0,
            beta_v: 1e-3,
            alpha_u: 1.0,
            beta_u: 1e-3,
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha_e,
            self.beta_e,
            self.alpha_v,
            self.beta_v,
            self.alpha_u,
            self.beta_u,
        ];
        if all.iter().all(|p| *p > 0.0 && p.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("all prior parameters must be positive: {self:?}")))
        }
    }
}

/// Column layout of `X = [W Z]`: `fixed` columns of `W` followed by `random`
/// columns of `Z`. `fixed = 0` is ordinary Bayesian ridge regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedModelSpec {
    pub fixed: usize,
    pub random: usize,
    pub priors: Priors,
}

impl MixedModelSpec {
    pub fn new(fixed: usize, random: usize, priors: Priors) -> Result<Self> {
        priors.validate()?;
        Ok(Self {
            fixed,
            random,
            priors,
        })
    }

    pub fn width(&self) -> usize {
        self.fixed + self.random
    }

    /// Same priors, different column split (coarse levels).
    pub fn with_widths(&self, fixed: usize, random: usize) -> Self {
        Self {
            fixed,
            random,
            priors: self.priors,
        }
    }

    pub(crate) fn check_matrix<T: Real>(&self, x: &SparseMatrix<T>) -> Result<()> {
        if x.n_cols() != self.width() {
            return Err(Error::dim("model width F + S", self.width(), x.n_cols()));
        }
        Ok(())
    }
}

/// Diagonal of `Λ`: `fixed` copies of `λ_v` then `random` copies of `λ_u`.
pub fn assemble_lambda<T: Real>(spec: &MixedModelSpec, lambda_v: T, lambda_u: T) -> Vec<T> {
    let mut d = Vec::with_capacity(spec.width());
    d.resize(spec.fixed, lambda_v);
    d.resize(spec.width(), lambda_u);
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState<T> {
    pub b: Vec<T>,
    pub tau: T,
    pub lambda_v: T,
    pub lambda_u: T,
}

impl<T: Real> GibbsState<T> {
    /// Precisions drawn from their priors (in the order τ, λ_v, λ_u), `b = 0`.
    pub fn from_priors(width: usize, priors: &Priors, stream: &mut RandomStream) -> Result<Self> {
        let tau = stream.gamma_sample(T::narrow(priors.alpha_e), T::narrow(priors.beta_e))?;
        let lambda_v = stream.gamma_sample(T::narrow(priors.alpha_v), T::narrow(priors.beta_v))?;
        let lambda_u = stream.gamma_sample(T::narrow(priors.alpha_u), T::narrow(priors.beta_u))?;
        Ok(Self {
            b: vec![T::zero(); width],
            tau,
            lambda_v,
            lambda_u,
        })
    }

    pub fn precisions(&self) -> (T, T, T) {
        (self.tau, self.lambda_v, self.lambda_u)
    }
}

/// Gamma shape and rate of the three precision conditionals given `b`.
pub fn hyperparameter_posteriors<T: Real>(
    b: &[T],
    x: &SparseMatrix<T>,
    y: &[T],
    spec: &MixedModelSpec,
) -> Result<[(f64, f64); 3]> {
    spec.check_matrix(x)?;
    if b.len() != spec.width() {
        return Err(Error::dim("coefficient vector", spec.width(), b.len()));
    }
    if y.len() != x.n_rows() {
        return Err(Error::dim("observations", x.n_rows(), y.len()));
    }
    let p = &spec.priors;
    let fitted = x.spmv(b)?;
    let sse: f64 = y
        .iter()
        .zip(&fitted)
        .map(|(yi, fi)| (yi.widen() - fi.widen()).powi(2))
        .sum();
    let ss = |s: &[T]| s.iter().map(|v| v.widen() * v.widen()).sum::<f64>();
    let n = y.len() as f64;
    let tau = (p.alpha_e + 0.5 * n, p.beta_e + 0.5 * sse);
    // an empty group carries no information: the update is the prior itself
    let lambda_v = (
        p.alpha_v + 0.5 * spec.fixed as f64,
        p.beta_v + 0.5 * ss(&b[..spec.fixed]),
    );
    let lambda_u = (
        p.alpha_u + 0.5 * spec.random as f64,
        p.beta_u + 0.5 * ss(&b[spec.fixed..]),
    );
    Ok([tau, lambda_v, lambda_u])
}

/// Draws `(τ, λ_v, λ_u)` from their gamma conditionals given `state.b`.
pub fn sample_hyperparams<T: Real>(
    state: &GibbsState<T>,
    x: &SparseMatrix<T>,
    y: &[T],
    spec: &MixedModelSpec,
    stream: &mut RandomStream,
) -> Result<(T, T, T)> {
    let [tau, lv, lu] = hyperparameter_posteriors(&state.b, x, y, spec)?;
    let draw = |s: &mut RandomStream, (shape, rate): (f64, f64)| {
        s.gamma_sample(T::narrow(shape), T::narrow(rate))
    };
    let tau = draw(stream, tau)?;
    let lv = draw(stream, lv)?;
    let lu = draw(stream, lu)?;
    Ok((tau, lv, lu))
}

/// The two noise vectors of one noise-injection draw.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw<T> {
    /// `e₁ ~ N(0, τ⁻¹ I_N)`
    pub e1: Vec<T>,
    /// `e₂ ~ N(0, Λ)`
    pub e2: Vec<T>,
}

impl<T: Real> NoiseDraw<T> {
    pub fn zeros(n_rows: usize, width: usize) -> Self {
        Self {
            e1: vec![T::zero(); n_rows],
            e2: vec![T::zero(); width],
        }
    }

    pub fn sample(
        n_rows: usize,
        lambda: &[T],
        tau: T,
        stream: &mut RandomStream,
    ) -> Result<Self> {
        let e1 = stream.normal_vector(n_rows, T::zero(), T::one() / tau)?;
        let mut e2 = vec![T::zero(); lambda.len()];
        stream.normal_heteroscedastic(lambda, &mut e2);
        Ok(Self { e1, e2 })
    }
}

/// Solves `(XᵀX + Λ/τ) b = Xᵀ(y + e₁) + e₂/τ`.
#[allow(clippy::too_many_arguments)]
pub fn solve_noise_system<T: Real>(
    x: &SparseMatrix<T>,
    y: &[T],
    noise: &NoiseDraw<T>,
    tau: T,
    lambda: &[T],
    x0: &[T],
    config: &SolverConfig,
    level: usize,
    precond: Option<&mut TwoLevelPreconditioner<T>>,
) -> Result<(Vec<T>, SolveReport)> {
    if y.len() != x.n_rows() {
        return Err(Error::dim("observations", x.n_rows(), y.len()));
    }
    let perturbed: Vec<T> = y.iter().zip(&noise.e1).map(|(&a, &e)| a + e).collect();
    let mut rhs = x.spmv_t(&perturbed)?;
    for (r, &e) in rhs.iter_mut().zip(&noise.e2) {
        *r += e / tau;
    }
    let shift: Vec<T> = lambda.iter().map(|&l| l / tau).collect();
    solve_gram(x, &shift, &rhs, x0, config, level, precond)
}

/// One coefficient draw at the current precisions.
pub fn draw_coefficient<T: Real>(
    x: &SparseMatrix<T>,
    y: &[T],
    state: &GibbsState<T>,
    spec: &MixedModelSpec,
    config: &SolverConfig,
    stream: &mut RandomStream,
) -> Result<Vec<T>> {
    spec.check_matrix(x)?;
    let lambda = assemble_lambda(spec, state.lambda_v, state.lambda_u);
    let noise = NoiseDraw::sample(x.n_rows(), &lambda, state.tau, stream)?;
    let x0 = start_vector(state, spec.width(), config);
    Ok(solve_noise_system(x, y, &noise, state.tau, &lambda, &x0, config, 0, None)?.0)
}

fn start_vector<T: Real>(state: &GibbsState<T>, width: usize, config: &SolverConfig) -> Vec<T> {
    if config.warm_start && state.b.len() == width {
        state.b.clone()
    } else {
        vec![T::zero(); width]
    }
}

/// Diagnostic switches; production sampling uses the defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainOptions {
    /// Set `e₁ = e₂ = 0`, turning every draw into the ridge solution.
    pub noise_suppressed: bool,
    /// Hold `(τ, λ_v, λ_u)` fixed instead of sampling them.
    pub fixed_hyperparams: Option<(f64, f64, f64)>,
    /// Record `(τ, λ_v, λ_u)` after every iteration.
    pub trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub level: usize,
    pub tau: f64,
    pub lambda_v: f64,
    pub lambda_u: f64,
}

/// Running sum of vectors kept in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct WideSum {
    pub sum: Vec<f64>,
    pub count: usize,
}

impl WideSum {
    pub fn new(width: usize) -> Self {
        Self {
            sum: vec![0.0; width],
            count: 0,
        }
    }

    pub fn add<T: Real>(&mut self, v: &[T]) {
        for (s, x) in self.sum.iter_mut().zip(v) {
            *s += x.widen();
        }
        self.count += 1;
    }

    pub fn mean<T: Real>(&self) -> Vec<T> {
        let n = self.count as f64;
        self.sum.iter().map(|s| T::narrow(s / n)).collect()
    }
}

/// One linear system the chain can draw coefficients on.
pub struct LevelSystem<'a, T> {
    pub level: usize,
    pub matrix: &'a SparseMatrix<T>,
    pub spec: MixedModelSpec,
    pub precond: Option<TwoLevelPreconditioner<T>>,
}

impl<'a, T: Real> LevelSystem<'a, T> {
    pub fn new(level: usize, matrix: &'a SparseMatrix<T>, spec: MixedModelSpec) -> Result<Self> {
        spec.check_matrix(matrix)?;
        Ok(Self {
            level,
            matrix,
            spec,
            precond: None,
        })
    }
}

/// Output of one Gibbs iteration.
#[derive(Debug, Clone)]
pub struct StepOutput<T> {
    pub noise: NoiseDraw<T>,
    pub report: SolveReport,
}

/// A single Markov chain. The first step draws the precisions from their
/// priors; later steps draw them from their conditionals.
pub struct Chain<T> {
    pub state: GibbsState<T>,
    pub options: ChainOptions,
    started: bool,
    iteration: usize,
    trace: Vec<TraceRow>,
    pub solve_iterations: usize,
    pub solves: usize,
}

impl<T: Real> Chain<T> {
    pub fn new(options: ChainOptions) -> Self {
        Self {
            state: GibbsState {
                b: Vec::new(),
                tau: T::one(),
                lambda_v: T::one(),
                lambda_u: T::one(),
            },
            options,
            started: false,
            iteration: 0,
            trace: Vec::new(),
            solve_iterations: 0,
            solves: 0,
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    /// Moves the current coefficients to another level of `hierarchy`.
    pub fn transfer(
        &mut self,
        hierarchy: &crate::hierarchy::LevelHierarchy<T>,
        from: usize,
        to: usize,
    ) -> Result<()> {
        if self.started && from != to {
            self.state.b = hierarchy.transfer(&self.state.b, from, to)?;
        }
        Ok(())
    }

    /// Precision update (or prior initialization on the first call).
    pub fn update_precisions(
        &mut self,
        sys: &LevelSystem<'_, T>,
        y: &[T],
        stream: &mut RandomStream,
    ) -> Result<()> {
        if let Some((tau, lv, lu)) = self.options.fixed_hyperparams {
            let width = sys.spec.width();
            if self.state.b.len() != width {
                self.state.b = vec![T::zero(); width];
            }
            self.state.tau = T::narrow(tau);
            self.state.lambda_v = T::narrow(lv);
            self.state.lambda_u = T::narrow(lu);
        } else if !self.started {
            self.state = GibbsState::from_priors(sys.spec.width(), &sys.spec.priors, stream)?;
        } else {
            let (tau, lv, lu) = sample_hyperparams(&self.state, sys.matrix, y, &sys.spec, stream)?;
            self.state.tau = tau;
            self.state.lambda_v = lv;
            self.state.lambda_u = lu;
        }
        Ok(())
    }

    /// One full Gibbs iteration on `sys`: precisions, noise, solve.
    pub fn step(
        &mut self,
        sys: &mut LevelSystem<'_, T>,
        y: &[T],
        config: &SolverConfig,
        stream: &mut RandomStream,
    ) -> Result<StepOutput<T>> {
        let it = self.iteration;
        self.update_precisions(sys, y, stream)
            .map_err(|e| e.at(sys.level, it))?;
        let lambda = assemble_lambda(&sys.spec, self.state.lambda_v, self.state.lambda_u);
        let noise = if self.options.noise_suppressed {
            NoiseDraw::zeros(sys.matrix.n_rows(), sys.spec.width())
        } else {
            NoiseDraw::sample(sys.matrix.n_rows(), &lambda, self.state.tau, stream)
                .map_err(|e| e.at(sys.level, it))?
        };
        let x0 = start_vector(&self.state, sys.spec.width(), config);
        let (b, report) = solve_noise_system(
            sys.matrix,
            y,
            &noise,
            self.state.tau,
            &lambda,
            &x0,
            config,
            sys.level,
            sys.precond.as_mut(),
        )
        .map_err(|e| e.at(sys.level, it))?;
        if !crate::scalar::all_finite(&b) {
            return Err(Error::Numerical("non-finite coefficient sample".into()).at(sys.level, it));
        }
        self.state.b = b;
        self.started = true;
        self.iteration += 1;
        self.solve_iterations += report.iterations;
        self.solves += 1;
        if self.options.trace {
            self.trace.push(TraceRow {
                iteration: it,
                level: sys.level,
                tau: self.state.tau.widen(),
                lambda_v: self.state.lambda_v.widen(),
                lambda_u: self.state.lambda_u.widen(),
            });
        }
        Ok(StepOutput { noise, report })
    }
}

/// Result of a single-level chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult<T> {
    /// Sum of the kept coefficient samples (accumulated in `f64`).
    pub sum_b: Vec<f64>,
    pub kept_count: usize,
    pub trace: Vec<TraceRow>,
    pub mean_solve_iterations: f64,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Real> ChainResult<T> {
    pub fn posterior_mean(&self) -> Vec<T> {
        WideSum {
            sum: self.sum_b.clone(),
            count: self.kept_count,
        }
        .mean()
    }
}

/// Runs `total` Gibbs iterations on `x`, discarding the first `burn_in`.
#[allow(clippy::too_many_arguments)]
pub fn run_chain<T: Real>(
    x: &SparseMatrix<T>,
    y: &[T],
    spec: &MixedModelSpec,
    total: usize,
    burn_in: usize,
    config: &SolverConfig,
    stream: &mut RandomStream,
    options: ChainOptions,
) -> Result<ChainResult<T>> {
    if total <= burn_in {
        return Err(Error::Config(format!(
            "chain length {total} must exceed burn-in {burn_in}"
        )));
    }
    let mut sys = LevelSystem::new(0, x, *spec)?;
    let mut chain = Chain::new(options);
    let mut acc = WideSum::new(spec.width());
    for h in 0..total {
        chain.step(&mut sys, y, config, stream)?;
        if h >= burn_in {
            acc.add(&chain.state.b);
        }
    }
    Ok(ChainResult {
        sum_b: acc.sum,
        kept_count: acc.count,
        mean_solve_iterations: chain.solve_iterations as f64 / chain.solves as f64,
        trace: chain.trace,
        _marker: std::marker::PhantomData,
    })
}

/// `X_eval · (sum_b / kept_count)`.
pub fn predict_mean<T: Real>(result: &ChainResult<T>, x_eval: &SparseMatrix<T>) -> Result<Vec<T>> {
    if result.kept_count == 0 {
        return Err(Error::Estimator("no kept samples".into()));
    }
    x_eval.spmv(&result.posterior_mean())
}

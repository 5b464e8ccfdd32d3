//! Cross-checks against dense nalgebra computations.

use mlgibbs::dense::{Cholesky, DenseSymmetric};
use mlgibbs::gibbs::{hyperparameter_posteriors, solve_noise_system, NoiseDraw};
use mlgibbs::harness::{random_sparse, ClusteredSparse};
use mlgibbs::solvers::{cg_solve_traced, solve_gram, GramOperator};
use mlgibbs::{
    run_chain, ChainOptions, HierarchyConfig, LevelHierarchy, MixedModelSpec, Priors, RandomStream,
    SolverConfig, SparseMatrix, TwoLevelPreconditioner,
};
use nalgebra::{DMatrix, DVector};

fn to_na(x: &SparseMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(x.n_rows(), x.n_cols());
    for (r, c, v) in x.triplets() {
        m[(r, c)] = v;
    }
    m
}

fn shifted_gram(x: &SparseMatrix<f64>, shift: &[f64]) -> DMatrix<f64> {
    let d = to_na(x);
    d.transpose() * &d + DMatrix::from_diagonal(&DVector::from_column_slice(shift))
}

fn rel_err(a: &[f64], b: &DVector<f64>) -> f64 {
    let diff: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    diff / b.norm()
}

fn clustered(seed: u64) -> SparseMatrix<f64> {
    ClusteredSparse {
        n_rows: 120,
        n_cols: 300,
        n_groups: 30,
        fill: 0.05,
        jitter: 0.1,
        scale: 10.0,
    }
    .generate(&mut RandomStream::new(seed))
    .unwrap()
}

#[test]
fn dense_gram_and_cholesky() {
    let x = random_sparse::<f64>(30, 12, 0.3, &mut RandomStream::new(1)).unwrap();
    let shift = vec![0.7; 12];
    let mut g = DenseSymmetric::gram(&x);
    g.add_diagonal(&shift);
    let oracle = shifted_gram(&x, &shift);
    for i in 0..12 {
        for j in 0..12 {
            assert!((g.get(i, j) - oracle[(i, j)]).abs() < 1e-12);
        }
    }
    let rhs: Vec<f64> = (0..12).map(|i| i as f64 - 4.0).collect();
    let b = Cholesky::factor(&g).unwrap().solve(&rhs);
    let want = oracle.cholesky().unwrap().solve(&DVector::from_column_slice(&rhs));
    assert!(rel_err(&b, &want) < 1e-12);
}

#[test]
fn direct_and_cg_match_dense_solve() {
    let x = random_sparse::<f64>(60, 40, 0.1, &mut RandomStream::new(2)).unwrap();
    let shift: Vec<f64> = (0..40).map(|i| 0.1 + 0.01 * i as f64).collect();
    let rhs: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
    let want = shifted_gram(&x, &shift)
        .cholesky()
        .unwrap()
        .solve(&DVector::from_column_slice(&rhs));
    let x0 = vec![0.0; 40];
    let (b, rep) = solve_gram(&x, &shift, &rhs, &x0, &SolverConfig::exact(), 0, None).unwrap();
    assert!(rep.converged && rel_err(&b, &want) < 1e-12);
    let cg = SolverConfig {
        tol: 1e-12,
        ..SolverConfig::default()
    };
    let (b, rep) = solve_gram(&x, &shift, &rhs, &x0, &cg, 0, None).unwrap();
    assert!(rep.converged, "{rep:?}");
    assert!(rel_err(&b, &want) < 1e-8);
}

#[test]
fn preconditioned_cg_matches_dense_solve() {
    let x = clustered(3);
    let h = LevelHierarchy::build(
        x.clone(),
        &HierarchyConfig {
            group_boundary: 0,
            coarse_size_range: (20, 80),
            max_levels: 3,
        },
    )
    .unwrap();
    let level = h.finest();
    assert!(level >= 1);
    let shift = vec![1e-2; x.n_cols()];
    let rhs = x.spmv_t(&vec![1.0; x.n_rows()]).unwrap();
    let want = shifted_gram(&x, &shift)
        .cholesky()
        .unwrap()
        .solve(&DVector::from_column_slice(&rhs));
    let mut pre = TwoLevelPreconditioner::build(&h, level, &shift, 10_000).unwrap();
    let op = GramOperator::new(&x, &shift).unwrap();
    let mut history = Vec::new();
    let (b, rep) = cg_solve_traced(
        &op,
        &rhs,
        &vec![0.0; x.n_cols()],
        1e-10,
        10_000,
        Some(&mut pre),
        Some(&mut history),
    )
    .unwrap();
    assert!(rep.converged, "{rep:?}");
    assert_eq!(history.len(), rep.iterations + 1);
    let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(*history.last().unwrap() <= 1e-10 * rhs_norm);
    assert!(rel_err(&b, &want) < 1e-6, "{}", rel_err(&b, &want));
}

#[test]
fn noise_system_matches_dense_formula() {
    let x = random_sparse::<f64>(25, 8, 0.4, &mut RandomStream::new(4)).unwrap();
    let mut s = RandomStream::new(5);
    let y: Vec<f64> = (0..25).map(|_| s.standard_normal()).collect();
    let lambda = vec![2.0, 2.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5];
    let tau = 3.0;
    let noise = NoiseDraw::sample(25, &lambda, tau, &mut s).unwrap();
    let (b, _) = solve_noise_system(
        &x,
        &y,
        &noise,
        tau,
        &lambda,
        &[0.0; 8],
        &SolverConfig::exact(),
        0,
        None,
    )
    .unwrap();
    let d = to_na(&x);
    let a = d.transpose() * &d + DMatrix::from_diagonal(&DVector::from_iterator(8, lambda.iter().map(|l| l / tau)));
    let ye = DVector::from_iterator(25, y.iter().zip(&noise.e1).map(|(a, b)| a + b));
    let rhs = d.transpose() * ye + DVector::from_iterator(8, noise.e2.iter().map(|e| e / tau));
    let want = a.cholesky().unwrap().solve(&rhs);
    assert!(rel_err(&b, &want) < 1e-12);
}

#[test]
fn gamma_conditionals_by_hand() {
    let x = SparseMatrix::from_dense(&[vec![1.0, 0.0, 2.0], vec![0.0, 1.0, 1.0]]).unwrap();
    let y = [3.0, 1.0];
    let b = [1.0, 2.0, -1.0];
    let spec = MixedModelSpec::new(1, 2, Priors::default()).unwrap();
    let [tau, lv, lu] = hyperparameter_posteriors(&b, &x, &y, &spec).unwrap();
    // fitted = [-1, 1], residuals = [4, 0]
    assert_eq!(tau, (1.0 + 1.0, 1.0 + 8.0));
    assert_eq!(lv, (1.0 + 0.5, 1e-3 + 0.5));
    assert_eq!(lu, (1.0 + 1.0, 1e-3 + 2.5));
    let fixed_only = MixedModelSpec::new(3, 0, Priors::default()).unwrap();
    let [_, _, lu] = hyperparameter_posteriors(&b, &x, &y, &fixed_only).unwrap();
    assert_eq!(lu, (1.0, 1e-3));
}

#[test]
fn multilevel_transfers_compose() {
    let x = clustered(6);
    let h = LevelHierarchy::build(
        x.clone(),
        &HierarchyConfig {
            group_boundary: 0,
            coarse_size_range: (20, 40),
            max_levels: 3,
        },
    )
    .unwrap();
    assert_eq!(h.n_levels(), 3);
    let mut s = RandomStream::new(7);
    let coarse: Vec<f64> = (0..h.width(0)).map(|_| s.standard_normal()).collect();
    let fine = h.transfer(&coarse, 0, h.finest()).unwrap();
    let back = h.transfer(&fine, h.finest(), 0).unwrap();
    assert!(back.iter().zip(&coarse).all(|(a, b)| (a - b).abs() < 1e-13));
    let direct = h.matrix(0).spmv(&coarse).unwrap();
    let via_fine = x.spmv(&fine).unwrap();
    let scale = direct.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    assert!(direct.iter().zip(&via_fine).all(|(a, b)| (a - b).abs() < 1e-12 * scale));
}

#[test]
fn chains_replay_under_a_seed() {
    let x = random_sparse::<f64>(40, 10, 0.3, &mut RandomStream::new(8)).unwrap();
    let y: Vec<f64> = (0..40).map(|i| (i % 7) as f64).collect();
    let spec = MixedModelSpec::new(2, 8, Priors::default()).unwrap();
    let run = |seed| {
        run_chain(
            &x,
            &y,
            &spec,
            60,
            10,
            &SolverConfig::default(),
            &mut RandomStream::new(seed),
            ChainOptions::default(),
        )
        .unwrap()
        .posterior_mean()
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
    let x32 = x.cast::<f32>();
    let y32: Vec<f32> = y.iter().map(|&v| v as f32).collect();
    let r32 = run_chain(
        &x32,
        &y32,
        &spec,
        60,
        10,
        &SolverConfig::default(),
        &mut RandomStream::new(1),
        ChainOptions::default(),
    )
    .unwrap();
    assert!(r32.posterior_mean().iter().all(|v| v.is_finite()));
}

use mlgibbs::harness::{kfold_split, mean_std, metrics};
use mlgibbs::multilevel::{make_schedule, w_cycle_period};
use mlgibbs::solvers::{GramOperator, LinearOperator};
use mlgibbs::{
    allocate_cost, allocate_variance, leader_follower, LevelCost, Prolongator, RandomStream,
    ScheduleKind, SparseMatrix,
};
use proptest::prelude::*;

fn sparse() -> impl Strategy<Value = SparseMatrix<f64>> {
    (1usize..15, 1usize..15).prop_flat_map(|(r, c)| {
        prop::collection::vec((0..r, 0..c, -5.0f64..5.0), 0..(r * c).min(60))
            .prop_map(move |t| SparseMatrix::from_triplets(r, c, &t).unwrap())
    })
}

fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

/// Random onto map of `n` fine columns to `k ≤ n` clusters.
fn onto(n: usize) -> impl Strategy<Value = Vec<usize>> {
    (1..=n).prop_flat_map(move |k| {
        prop::collection::vec(0..k, n - k)
            .prop_map(move |extra| (0..k).chain(extra).collect::<Vec<_>>())
            .prop_shuffle()
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn transpose_is_adjoint((x, v, w) in sparse().prop_flat_map(|x| {
        let (r, c) = (x.n_rows(), x.n_cols());
        (Just(x), vector(c), vector(r))
    })) {
        let lhs = dot(&x.spmv(&v).unwrap(), &w);
        let rhs = dot(&v, &x.spmv_t(&w).unwrap());
        prop_assert!(close(lhs, rhs, 1e-12), "{lhs} vs {rhs}");
    }

    #[test]
    fn shifted_gram_is_symmetric_positive((x, u, v, s) in sparse().prop_flat_map(|x| {
        let c = x.n_cols();
        (Just(x), vector(c), vector(c), prop::collection::vec(0.01f64..2.0, c))
    })) {
        let gu = x.gram_apply(&s, &u).unwrap();
        let gv = x.gram_apply(&s, &v).unwrap();
        prop_assert!(close(dot(&gu, &v), dot(&u, &gv), 1e-12));
        if u.iter().any(|&a| a != 0.0) {
            prop_assert!(dot(&gu, &u) > 0.0);
        }
        let op = GramOperator::new(&x, &s).unwrap();
        let mut out = vec![0.0; op.dim()];
        op.apply(&u, &mut out).unwrap();
        prop_assert_eq!(out, gu);
    }

    #[test]
    fn prolongator_columns_are_orthonormal(a in (1usize..25).prop_flat_map(onto)) {
        let p = Prolongator::<f64>::from_assignment(a).unwrap();
        for j in 0..p.coarse_dim() {
            let mut e = vec![0.0; p.coarse_dim()];
            e[j] = 1.0;
            let back = p.restrict(&p.prolong(&e).unwrap()).unwrap();
            for (i, v) in back.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((v - want).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn galerkin_identity((x, a, beta) in sparse().prop_flat_map(|x| {
        let a = onto(x.n_cols());
        (Just(x), a, prop_oneof![Just(0.0), Just(0.5), Just(10.0)])
    }), seed in any::<u64>()) {
        let p = Prolongator::from_assignment(a).unwrap();
        let xc = p.coarsen(&x).unwrap();
        let mut s = RandomStream::new(seed);
        let v: Vec<f64> = (0..p.coarse_dim()).map(|_| s.standard_normal()).collect();
        let shifted_gram = |m: &SparseMatrix<f64>, u: &[f64]| -> Vec<f64> {
            let g = m.spmv_t(&m.spmv(u).unwrap()).unwrap();
            g.iter().zip(u).map(|(a, b)| a + beta * b).collect()
        };
        let lhs = p.restrict(&shifted_gram(&x, &p.prolong(&v).unwrap())).unwrap();
        let rhs = shifted_gram(&xc, &v);
        for (l, r) in lhs.iter().zip(&rhs) {
            prop_assert!(close(*l, *r, 1e-10), "{l} vs {r}");
        }
    }

    /// Coarse predictions equal fine predictions of the prolonged coefficients.
    #[test]
    fn prediction_paths_agree((x, a) in sparse().prop_flat_map(|x| {
        let a = onto(x.n_cols());
        (Just(x), a)
    }), seed in any::<u64>()) {
        let p = Prolongator::from_assignment(a).unwrap();
        let xc = p.coarsen(&x).unwrap();
        let mut s = RandomStream::new(seed);
        let b: Vec<f64> = (0..p.coarse_dim()).map(|_| s.standard_normal()).collect();
        let coarse = xc.spmv(&b).unwrap();
        let fine = x.spmv(&p.prolong(&b).unwrap()).unwrap();
        for (c, f) in coarse.iter().zip(&fine) {
            prop_assert!(close(*c, *f, 1e-12));
        }
    }

    #[test]
    fn clustering_is_a_partition(x in sparse(), threshold in 0.0f64..1.0) {
        let labels = leader_follower(&x, threshold);
        prop_assert_eq!(labels.len(), x.n_cols());
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; k];
        for &l in &labels {
            seen[l] = true;
        }
        prop_assert!(seen.into_iter().all(|s| s));
        prop_assert!(Prolongator::<f64>::from_assignment(labels).is_ok());
    }

    #[test]
    fn cv_folds_partition_rows(n in 2usize..200, folds in 2usize..12, seed in any::<u64>()) {
        prop_assume!(folds <= n);
        let split = kfold_split(n, folds, &mut RandomStream::new(seed)).unwrap();
        let mut hits = vec![0usize; n];
        for f in &split {
            prop_assert_eq!(f.train.len() + f.test.len(), n);
            for &i in &f.test {
                hits[i] += 1;
            }
            let mut all: Vec<usize> = f.train.iter().chain(&f.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
        prop_assert!(hits.into_iter().all(|h| h == 1));
        let sizes: Vec<usize> = split.iter().map(|f| f.test.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn metrics_match_two_pass_oracle(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..100)) {
        let (pred, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = metrics(&pred, &truth).unwrap();
        let n = pred.len() as f64;
        let mp = pred.iter().sum::<f64>() / n;
        let mt = truth.iter().sum::<f64>() / n;
        let cov: f64 = pred.iter().zip(&truth).map(|(p, t)| (p - mp) * (t - mt)).sum();
        let sp = pred.iter().map(|p| (p - mp).powi(2)).sum::<f64>().sqrt();
        let st = truth.iter().map(|t| (t - mt).powi(2)).sum::<f64>().sqrt();
        let rmse = (pred.iter().zip(&truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n).sqrt();
        let mae = pred.iter().zip(&truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
        prop_assert!((m.pearson - cov / (sp * st)).abs() <= 1e-12);
        prop_assert!((m.rmse - rmse).abs() <= 1e-12 * (1.0 + rmse));
        prop_assert!((m.mae - mae).abs() <= 1e-12 * (1.0 + mae));
        let (_, s) = mean_std(&pred);
        prop_assert!((s - sp / (n - 1.0).sqrt()).abs() <= 1e-9 * (1.0 + s));
    }

    #[test]
    fn allocations_stay_within_budget(
        nnz in prop::collection::vec(1usize..100_000, 1..7),
        s2 in prop::collection::vec(0.0f64..100.0, 7),
        h in 0usize..100_000,
    ) {
        let levels = nnz.len();
        let costs = LevelCost::new(nnz).with_variances(s2[..levels].to_vec());
        for alloc in [allocate_cost(&costs, h).unwrap(), allocate_variance(&costs, h).unwrap()] {
            let total: usize = alloc.iter().sum();
            prop_assert!(total <= h && total + levels >= h, "{alloc:?} for {h}");
        }
    }

    #[test]
    fn schedule_budget(levels in 1usize..7, k in 1usize..60, h in 200usize..3000, cycle in any::<bool>()) {
        let kind = if cycle { ScheduleKind::WCycle(k) } else { ScheduleKind::VCycle(k) };
        let s = make_schedule(kind, levels, h, 0).unwrap();
        let kept: usize = s.totals.iter().sum();
        prop_assert!(kept <= h && h - kept < k);
        let mut per_level = vec![0; levels];
        for &(l, n) in &s.visits {
            per_level[l] += n;
        }
        prop_assert_eq!(&per_level, &s.totals);
        prop_assert!(s.visits.windows(2).all(|w| w[0].0 != w[1].0));
        let c = make_schedule(ScheduleKind::Consecutive, levels, h, 0).unwrap();
        prop_assert_eq!(c.totals.iter().sum::<usize>(), h);
        prop_assert!(c.visits.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn w_period_moves_one_level_at_a_time(levels in 2usize..8) {
        let p = w_cycle_period(levels);
        prop_assert_eq!(p[0], 0);
        for w in p.windows(2).chain(std::iter::once(&[*p.last().unwrap(), p[0]][..])) {
            prop_assert_eq!(w[0].abs_diff(w[1]), 1);
        }
    }

    #[test]
    fn streams_replay_and_split(seed in any::<u64>(), key in 1u64..1000) {
        let draw = |mut s: RandomStream| (0..8).map(|_| s.next_u64()).collect::<Vec<_>>();
        let root = RandomStream::new(seed);
        prop_assert_eq!(draw(root.clone()), draw(RandomStream::new(seed)));
        prop_assert_eq!(draw(root.split(key)), draw(root.split(key)));
        prop_assert_ne!(draw(root.split(key)), draw(root.split(key + 1)));
    }

    #[test]
    fn gamma_draws_are_positive(shape in 0.05f64..50.0, rate in 1e-3f64..1e3, seed in any::<u64>()) {
        let mut s = RandomStream::new(seed);
        for _ in 0..20 {
            let g: f64 = s.gamma_sample(shape, rate).unwrap();
            prop_assert!(g > 0.0 && g.is_finite());
        }
    }
}

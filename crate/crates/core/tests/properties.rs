mod common;

use mimal::data::{default_schema, read_multisource_csv, split_kfolds, write_multisource_csv, MultiSourceDataset, SourceDataset};
use mimal::inference::{confidence_interval, inflate_variance, normal_quantile, standard_error_independent};
use mimal::oracle::{linear_l2_saddle_oracle, QuadraticReward};
use mimal::rewards::{empirical_reward, LossKind};
use mimal::saddle::project_simplex;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn moments(m: usize, d: usize, entries: &[f64]) -> QuadraticReward {
    let mut it = entries.iter().copied().cycle();
    let mut a = Vec::new();
    let mut c = Vec::new();
    for _ in 0..m {
        let b = DMatrix::from_fn(d, d, |_, _| it.next().unwrap());
        a.push(&b * b.transpose() + DMatrix::identity(d, d));
        c.push(DVector::from_fn(d, |_, _| 2.0 * it.next().unwrap()));
    }
    QuadraticReward::new(a, c).unwrap()
}

fn weights(raw: &[f64]) -> Vec<f64> {
    project_simplex(raw).unwrap().into_vec()
}

fn dataset(sizes: &[usize], values: &[f64]) -> MultiSourceDataset {
    let mut it = values.iter().copied().cycle();
    let sources = sizes
        .iter()
        .enumerate()
        .map(|(m, &n)| {
            let y = DVector::from_fn(n, |_, _| it.next().unwrap());
            let x = DMatrix::from_fn(n, 2, |_, _| it.next().unwrap());
            let z = DMatrix::from_fn(n, 1, |_, _| it.next().unwrap());
            SourceDataset::new(m, format!("s{m}"), y, x, z).unwrap()
        })
        .collect();
    MultiSourceDataset::new(sources, vec!["a".into(), "b".into()], vec!["c".into()], false).unwrap()
}

proptest! {
    #[test]
    fn oracle_value_is_bracketed_by_both_players(
        m in 2usize..4,
        d in 1usize..4,
        entries in prop::collection::vec(-1.0f64..1.0, 40),
        raw_q in prop::collection::vec(-1.0f64..1.0, 3),
        theta in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        let mom = moments(m, d, &entries);
        let sol = linear_l2_saddle_oracle(&mom).unwrap();
        let scale = 1.0 + sol.value.abs();
        // the weight player cannot push the value lower
        let q = weights(&raw_q[..m]);
        prop_assert!(mom.outer_value(&q).unwrap() >= sol.value - 1e-6 * scale);
        // the learner cannot guarantee more than the value
        let th = DVector::from_column_slice(&theta[..d]);
        let worst = mom.rewards(&th).into_iter().fold(f64::INFINITY, f64::min);
        prop_assert!(worst <= sol.value + 1e-6 * scale);
    }

    #[test]
    fn mixture_solution_solves_the_weighted_normal_equations(
        m in 2usize..4,
        d in 1usize..5,
        entries in prop::collection::vec(-1.0f64..1.0, 60),
        raw_q in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let mom = moments(m, d, &entries);
        let q = weights(&raw_q[..m]);
        let theta = mom.mixture_solution(&q).unwrap();
        let mut a = DMatrix::zeros(d, d);
        let mut c = DVector::zeros(d);
        for (w, (am, cm)) in q.iter().zip(mom.a.iter().zip(&mom.c)) {
            a += am * *w;
            c += cm * *w;
        }
        let direct = a.lu().solve(&c).unwrap();
        prop_assert!((theta - direct).amax() < 1e-10);
    }

    #[test]
    fn folds_partition_every_source(
        sizes in prop::collection::vec(5usize..40, 2..4),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let data = dataset(&sizes, &[0.5, -1.0, 2.0]);
        let folds = split_kfolds(&data, k, seed).unwrap();
        for (m, &n) in sizes.iter().enumerate() {
            let mut seen: Vec<usize> = (0..k).flat_map(|f| folds.test_rows(f)[m].clone()).collect();
            seen.sort_unstable();
            prop_assert_eq!(&seen, &(0..n).collect::<Vec<_>>());
            let lens: Vec<usize> = (0..k).map(|f| folds.test_rows(f)[m].len()).collect();
            prop_assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
            for f in 0..k {
                prop_assert_eq!(folds.train_rows(f)[m].len() + folds.test_rows(f)[m].len(), n);
            }
        }
    }

    #[test]
    fn csv_round_trip_is_exact(
        sizes in prop::collection::vec(1usize..8, 2..4),
        values in prop::collection::vec(-1e6f64..1e6, 1..50),
    ) {
        let data = dataset(&sizes, &values);
        let mut buf = Vec::new();
        write_multisource_csv(&data, &mut buf).unwrap();
        let back = read_multisource_csv(buf.as_slice(), &default_schema(&data)).unwrap();
        prop_assert_eq!(back.sizes(), data.sizes());
        for (a, b) in back.sources.iter().zip(&data.sources) {
            prop_assert_eq!(&a.y, &b.y);
            prop_assert_eq!(&a.x, &b.x);
            prop_assert_eq!(&a.z, &b.z);
        }
    }

    #[test]
    fn standard_error_is_nonnegative_and_scale_equivariant(
        q_raw in prop::collection::vec(-1.0f64..1.0, 2),
        a in prop::collection::vec(-5.0f64..5.0, 2..10),
        b in prop::collection::vec(-5.0f64..5.0, 2..10),
        c in -4.0f64..4.0,
    ) {
        let q = weights(&q_raw);
        let n = [a.len() * 3, b.len() * 3];
        let se = standard_error_independent(&[common::fold(q.clone(), vec![a.clone(), b.clone()])], &n).unwrap();
        let scaled = vec![a.iter().map(|v| c * v).collect(), b.iter().map(|v| c * v).collect()];
        let se_c = standard_error_independent(&[common::fold(q, scaled)], &n).unwrap();
        prop_assert!(se >= 0.0);
        prop_assert!((se_c - c.abs() * se).abs() <= 1e-9 * (1.0 + se_c));
    }

    #[test]
    fn inflation_only_widens(se in 0.0f64..2.0, t1 in 0.0f64..1.0, t2 in 0.0f64..1.0, n in 1usize..5000) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = inflate_variance(se, lo, n).unwrap();
        let b = inflate_variance(se, hi, n).unwrap();
        prop_assert!(a >= se && b >= a);
    }

    #[test]
    fn intervals_are_centred_and_nested(i in -10.0f64..10.0, se in 0.0f64..3.0, a1 in 0.01f64..0.5, a2 in 0.01f64..0.5) {
        let (small, large) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let (lo_w, hi_w) = confidence_interval(i, se, small).unwrap();
        let (lo_n, hi_n) = confidence_interval(i, se, large).unwrap();
        prop_assert!(((hi_w - i) - (i - lo_w)).abs() < 1e-12 * (1.0 + i.abs()));
        prop_assert!(lo_w <= lo_n && lo_n <= i && i <= hi_n && hi_n <= hi_w);
        prop_assert!(normal_quantile(1.0 - small / 2.0) >= normal_quantile(1.0 - large / 2.0));
    }

    #[test]
    fn reward_is_linear_in_the_weights(
        raw1 in prop::collection::vec(-1.0f64..1.0, 3),
        raw2 in prop::collection::vec(-1.0f64..1.0, 3),
        t in 0.0f64..1.0,
        seed in 0u64..1000,
    ) {
        let data = common::three_sources(seed, LossKind::Logistic, 0, 20);
        let u_full: Vec<DVector<f64>> = data.sources.iter().map(|s| s.x.column(0) * 0.7).collect();
        let u_base: Vec<DVector<f64>> = data.sources.iter().map(|s| DVector::zeros(s.n())).collect();
        let ys: Vec<&DVector<f64>> = data.sources.iter().map(|s| &s.y).collect();
        let (q1, q2) = (weights(&raw1), weights(&raw2));
        let mix: Vec<f64> = q1.iter().zip(&q2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let value = |q: &[f64]| {
            let w = mimal::saddle::SimplexWeights::new(q.to_vec()).unwrap();
            empirical_reward(LossKind::Logistic, &w, &u_full, &u_base, &ys).unwrap().0
        };
        let expected = t * value(&q1) + (1.0 - t) * value(&q2);
        prop_assert!((value(&mix) - expected).abs() < 1e-12);
    }
}

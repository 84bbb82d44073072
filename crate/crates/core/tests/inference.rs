mod common;

use mimal::data::{read_multisource_csv, ColumnSchema};
use mimal::inference::{
    estimate_importance, exposure_blocks, loco_scan, normal_quantile, source_specific_importance, write_estimates_csv, Design,
};
use mimal::problem::ProblemSpec;
use mimal::rewards::LossKind;
use mimal::MimalError;

#[test]
fn cross_fitted_estimate_is_well_formed() {
    let data = common::three_sources(1, LossKind::SquaredError, 1, 200);
    let spec = ProblemSpec::linear(LossKind::SquaredError);
    let est = estimate_importance(&data, &spec, 3).unwrap();
    assert_eq!(est.folds.len(), spec.k);
    assert_eq!(est.design, Design::Independent);
    for f in &est.folds {
        let q = f.q_hat();
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12 && q.iter().all(|v| *v >= 0.0));
        // every row is held out exactly once across folds
        assert_eq!(f.holdout_samples.len(), 3);
    }
    let held: usize = est.folds.iter().map(|f| f.holdout_samples[0].len()).sum();
    assert_eq!(held, 200);
    let z = normal_quantile(1.0 - spec.alpha / 2.0);
    assert!(est.se > 0.0 && est.se_inflated >= est.se);
    assert!((est.ci_hi - est.ci_lo - 2.0 * z * est.se_inflated).abs() < 1e-12);
    assert!(est.ci_lo <= est.i_hat && est.i_hat <= est.ci_hi);
    let (lo, hi) = est.ci_uninflated;
    assert!((hi - lo - 2.0 * z * est.se).abs() < 1e-12);
    // the mean of fold values is the point estimate
    let mean = est.folds.iter().map(|f| f.holdout_reward_value).sum::<f64>() / est.folds.len() as f64;
    assert!((mean - est.i_hat).abs() < 1e-14);
}

#[test]
fn estimates_are_deterministic_and_serialize() {
    let data = common::three_sources(2, LossKind::Logistic, 1, 150);
    let spec = ProblemSpec::linear(LossKind::Logistic);
    let a = estimate_importance(&data, &spec, 17).unwrap();
    let b = estimate_importance(&data, &spec, 17).unwrap();
    assert_eq!(a, b);
    let v = serde_json::to_value(a.summary()).unwrap();
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(
        keys,
        ["alpha", "ci", "converged_flags", "design", "i_hat", "q_hat_per_fold", "se", "se_inflated", "target"]
    );
    let mut buf = Vec::new();
    write_estimates_csv(&[a], &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
}

#[test]
fn without_cross_fitting_there_is_one_in_sample_fold() {
    let data = common::three_sources(4, LossKind::SquaredError, 1, 120);
    let mut spec = ProblemSpec::linear(LossKind::SquaredError);
    spec.cross_fit = false;
    let est = estimate_importance(&data, &spec, 0).unwrap();
    assert_eq!(est.folds.len(), 1);
    assert_eq!(est.folds[0].holdout_samples[0].len(), 120);
    assert!((est.i_hat - est.folds[0].saddle.reward_at_solution).abs() < 1e-10);
}

#[test]
fn single_source_importance_is_the_same_pipeline() {
    let data = common::glm_data(6, LossKind::SquaredError, &[vec![0.7, 0.2]], 1, 150);
    let spec = ProblemSpec::linear(LossKind::SquaredError);
    let pooled = estimate_importance(&data, &spec, 8).unwrap();
    let mut own = source_specific_importance(&data, 0, &spec, 8).unwrap();
    own.target = pooled.target.clone();
    assert_eq!(own, pooled);
    assert!(pooled.folds.iter().all(|f| f.q_hat() == [1.0]));
}

#[test]
fn too_many_folds_is_a_fold_error() {
    let data = common::three_sources(1, LossKind::SquaredError, 0, 4);
    let spec = ProblemSpec::linear(LossKind::SquaredError);
    assert!(matches!(estimate_importance(&data, &spec, 0), Err(MimalError::Fold(_))));
}

fn paired_csv(rows: usize) -> String {
    let mut s = String::from("site,t,y,a,b\n");
    for site in ["north", "south"] {
        for t in 0..rows {
            let a = ((t * 37 % 101) as f64) / 50.0 - 1.0;
            let b = ((t * 53 % 97) as f64) / 48.0 - 1.0;
            let shift = if site == "north" { 1.0 } else { 0.6 };
            let noise = ((t * 71 % 89) as f64) / 89.0 - 0.5;
            s.push_str(&format!("{site},{t},{},{a},{b}\n", shift * a + 0.3 * b + noise));
        }
    }
    s
}

#[test]
fn time_aligned_sources_use_the_paired_variance() {
    let schema = ColumnSchema {
        source: "site".into(),
        outcome: "y".into(),
        exposure: vec!["a".into()],
        adjust: vec!["b".into()],
        time: Some("t".into()),
    };
    let data = read_multisource_csv(paired_csv(100).as_bytes(), &schema).unwrap();
    let spec = ProblemSpec::linear(LossKind::SquaredError);
    let est = estimate_importance(&data, &spec, 1).unwrap();
    assert_eq!(est.design, Design::Paired);
    assert!(est.se > 0.0);
    for f in &est.folds {
        assert_eq!(f.holdout_samples[0].len(), f.holdout_samples[1].len());
    }
}

#[test]
fn loco_scan_covers_every_block_once() {
    let data = common::three_sources(3, LossKind::SquaredError, 2, 120);
    let groups = vec![("zs".to_string(), vec!["z2".to_string(), "z1".to_string()])];
    let blocks = exposure_blocks(&data, &groups).unwrap();
    let names: Vec<&str> = blocks.iter().map(|b| b.name.as_str()).collect();
    assert_eq!(names, ["x1", "x2", "zs"]);
    assert_eq!(blocks[2].columns, [2, 3]);
    let spec = ProblemSpec::linear(LossKind::SquaredError);
    let entries = loco_scan(&data, &blocks, &spec, 5).unwrap();
    assert_eq!(entries.len(), 3);
    for (e, b) in entries.iter().zip(&blocks) {
        assert_eq!(e.target, b.name);
        assert!(e.errors.is_empty(), "{:?}", e.errors);
        assert_eq!(e.estimate.as_ref().unwrap().target, b.name);
        assert_eq!(e.source_estimates.len(), 3);
    }
    // the first exposure has a positive effect in every source
    assert!(entries[0].estimate.as_ref().unwrap().i_hat > 0.0);
}

#[test]
fn bad_groups_are_rejected() {
    let data = common::three_sources(3, LossKind::SquaredError, 1, 30);
    let unknown = vec![("g".to_string(), vec!["nope".to_string()])];
    assert!(exposure_blocks(&data, &unknown).is_err());
    let twice = vec![
        ("g".to_string(), vec!["x1".to_string()]),
        ("h".to_string(), vec!["x1".to_string(), "x2".to_string()]),
    ];
    assert!(exposure_blocks(&data, &twice).is_err());
}

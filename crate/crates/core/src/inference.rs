//! Cross-fitted estimation of the maximin importance, its standard error and
//! confidence intervals, plus per-source and per-covariate variants.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split_kfolds, MultiSourceDataset};
use crate::error::{MimalError, Result};
use crate::learners::{fit_baseline, FittedModel};
use crate::problem::ProblemSpec;
use crate::rewards::reward_differences;
use crate::rng::derive_seed;
use crate::saddle::{solve_saddle, SaddlePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    Independent,
    Paired,
}

/// Everything produced for one fold: nuisance fits on the complement and the
/// reward differences on the held-out rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldArtifacts {
    pub fold: usize,
    pub baselines: Vec<FittedModel>,
    pub saddle: SaddlePoint,
    /// `Σ_m q̂_m · mean(holdout_samples[m])`.
    pub holdout_reward_value: f64,
    /// `ℓ(y, f̂ + ĝ_m) - ℓ(y, b̂_m)` on the held-out rows of each source.
    pub holdout_samples: Vec<Vec<f64>>,
}

impl FoldArtifacts {
    pub fn q_hat(&self) -> &[f64] {
        self.saddle.q_hat.as_slice()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEstimate {
    pub target: String,
    pub i_hat: f64,
    pub se: f64,
    pub se_inflated: f64,
    /// Interval built from `se_inflated` (equal to the plain one when `τ = 0`).
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Interval built from `se`.
    pub ci_uninflated: (f64, f64),
    pub alpha: f64,
    pub tau: f64,
    pub n_min: usize,
    pub design: Design,
    pub cross_fit: bool,
    pub folds: Vec<FoldArtifacts>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// The compact JSON form of an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub target: String,
    pub i_hat: f64,
    pub se: f64,
    pub se_inflated: f64,
    pub ci: [f64; 2],
    pub alpha: f64,
    pub q_hat_per_fold: Vec<Vec<f64>>,
    pub converged_flags: Vec<bool>,
    pub design: Design,
}

impl ImportanceEstimate {
    pub fn converged(&self) -> bool {
        self.folds.iter().all(|f| f.saddle.converged)
    }

    /// Mean of `q̂` over folds.
    pub fn mean_q_hat(&self) -> Vec<f64> {
        let m = self.folds.first().map_or(0, |f| f.q_hat().len());
        let mut q = vec![0.0; m];
        for f in &self.folds {
            for (acc, v) in q.iter_mut().zip(f.q_hat()) {
                *acc += v / self.folds.len() as f64;
            }
        }
        q
    }

    pub fn summary(&self) -> EstimateSummary {
        EstimateSummary {
            target: self.target.clone(),
            i_hat: self.i_hat,
            se: self.se,
            se_inflated: self.se_inflated,
            ci: [self.ci_lo, self.ci_hi],
            alpha: self.alpha,
            q_hat_per_fold: self.folds.iter().map(|f| f.q_hat().to_vec()).collect(),
            converged_flags: self.folds.iter().map(|f| f.saddle.converged).collect(),
            design: self.design,
        }
    }

    /// Interval with a different inflation constant, reusing the fitted folds.
    pub fn interval_with_tau(&self, tau: f64) -> Result<(f64, f64)> {
        confidence_interval(self.i_hat, inflate_variance(self.se, tau, self.n_min)?, self.alpha)
    }
}

/// Writes one CSV row per estimate.
pub fn write_estimates_csv<W: Write>(estimates: &[ImportanceEstimate], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| MimalError::Input(format!("csv export: {e}"));
    w.write_record(["target", "i_hat", "se", "se_inflated", "ci_lo", "ci_hi", "alpha", "design", "converged"])
        .map_err(err)?;
    for e in estimates {
        w.write_record([
            e.target.clone(),
            format!("{:?}", e.i_hat),
            format!("{:?}", e.se),
            format!("{:?}", e.se_inflated),
            format!("{:?}", e.ci_lo),
            format!("{:?}", e.ci_hi),
            format!("{:?}", e.alpha),
            serde_json::to_value(e.design).map(|v| v.as_str().unwrap_or_default().to_string()).unwrap_or_default(),
            e.converged().to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| MimalError::io("csv export", e))
}

/// Cross-fitted estimate: per-fold baselines and saddle solves on the complement,
/// held-out evaluation, averaging, standard error and interval.
pub fn estimate_importance(data: &MultiSourceDataset, spec: &ProblemSpec, seed: u64) -> Result<ImportanceEstimate> {
    spec.validate()?;
    let m_src = data.num_sources();
    let folds: Vec<(Vec<Vec<usize>>, Vec<Vec<usize>>)> = if spec.cross_fit {
        let assignment = split_kfolds(data, spec.k, derive_seed(seed, "kfold", 0))?;
        (0..spec.k)
            .map(|k| (assignment.train_rows(k), assignment.test_rows(k)))
            .collect()
    } else {
        let all: Vec<Vec<usize>> = data.sizes().iter().map(|&n| (0..n).collect()).collect();
        vec![(all.clone(), all)]
    };
    let artifacts = folds
        .par_iter()
        .enumerate()
        .map(|(k, (train, test))| run_fold(data, spec, k, train, test, derive_seed(seed, "fold", k as u64)))
        .collect::<Result<Vec<_>>>()?;

    let i_hat = artifacts.iter().map(|f| f.holdout_reward_value).sum::<f64>() / artifacts.len() as f64;
    let design = if data.paired && m_src > 1 { Design::Paired } else { Design::Independent };
    let se = match design {
        Design::Independent => standard_error_independent(&artifacts, &data.sizes())?,
        Design::Paired => standard_error_paired(&artifacts, data.n(0))?,
    };
    let se_inflated = inflate_variance(se, spec.inflation_tau, data.n_min())?;
    let (ci_lo, ci_hi) = confidence_interval(i_hat, se_inflated, spec.alpha)?;
    let ci_uninflated = confidence_interval(i_hat, se, spec.alpha)?;
    let warnings = artifacts
        .iter()
        .filter(|f| !f.saddle.converged)
        .map(|f| format!("fold {}: saddle solve did not converge in {} iterations", f.fold, f.saddle.iterations_used))
        .collect();
    Ok(ImportanceEstimate {
        target: data.exposure_names.join("+"),
        i_hat,
        se,
        se_inflated,
        ci_lo,
        ci_hi,
        ci_uninflated,
        alpha: spec.alpha,
        tau: spec.inflation_tau,
        n_min: data.n_min(),
        design,
        cross_fit: spec.cross_fit,
        folds: artifacts,
        warnings,
    })
}

fn run_fold(
    data: &MultiSourceDataset,
    spec: &ProblemSpec,
    k: usize,
    train_rows: &[Vec<usize>],
    test_rows: &[Vec<usize>],
    seed: u64,
) -> Result<FoldArtifacts> {
    let train = data.subset(train_rows);
    let test = data.subset(test_rows);
    let baselines = train
        .sources
        .iter()
        .map(|s| fit_baseline(&spec.learner_b, spec.loss_kind, s))
        .collect::<Result<Vec<_>>>()?;
    let saddle = solve_saddle(
        spec.loss_kind,
        &train,
        &spec.learner_f,
        &spec.learner_g,
        &spec.schedule(),
        &baselines,
        seed,
    )?;
    let mut holdout_samples = Vec::with_capacity(test.num_sources());
    for (m, s) in test.sources.iter().enumerate() {
        let full = saddle.bundle.linear_predictor(m, &s.x, &s.z)?;
        let base = baselines[m].linear_predictor(&s.x, &s.z)?;
        holdout_samples.push(reward_differences(spec.loss_kind, &s.y, &full, &base));
    }
    let holdout_reward_value = saddle
        .q_hat
        .as_slice()
        .iter()
        .zip(&holdout_samples)
        .map(|(q, v)| q * v.iter().sum::<f64>() / v.len() as f64)
        .sum();
    Ok(FoldArtifacts {
        fold: k,
        baselines,
        saddle,
        holdout_reward_value,
        holdout_samples,
    })
}

fn sample_variance(v: &[f64]) -> Result<f64> {
    if v.len() < 2 {
        return Err(MimalError::Variance(format!("need at least 2 held-out rows per source, got {}", v.len())));
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    Ok(v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

/// `ŜE² = K⁻¹ Σ_k Σ_m q̂²_{k,m} V̂_{k,m} / n_m`, where `V̂_{k,m}` is the sample
/// variance of the fold-`k` reward differences on source `m` and `n_m` the
/// full source size.
pub fn standard_error_independent(folds: &[FoldArtifacts], n: &[usize]) -> Result<f64> {
    if folds.is_empty() {
        return Err(MimalError::Variance("no folds".into()));
    }
    let mut total = 0.0;
    for f in folds {
        if f.holdout_samples.len() != n.len() || f.q_hat().len() != n.len() {
            return Err(MimalError::Shape(format!(
                "fold {} has {} sources, expected {}",
                f.fold,
                f.holdout_samples.len(),
                n.len()
            )));
        }
        for (m, samples) in f.holdout_samples.iter().enumerate() {
            let q = f.q_hat()[m];
            total += q * q * sample_variance(samples)? / n[m] as f64;
        }
    }
    Ok((total / folds.len() as f64).sqrt())
}

/// Paired design: `ŜE² = (n₁ K)⁻¹ Σ_k q̂_kᵀ Ĉ_k q̂_k`, with `Ĉ_k` the `M × M`
/// sample covariance of the time-aligned reward differences in fold `k`.
pub fn standard_error_paired(folds: &[FoldArtifacts], n1: usize) -> Result<f64> {
    if folds.is_empty() {
        return Err(MimalError::Variance("no folds".into()));
    }
    let mut total = 0.0;
    for f in folds {
        let m_src = f.holdout_samples.len();
        let rows = f.holdout_samples.first().map_or(0, Vec::len);
        if f.holdout_samples.iter().any(|s| s.len() != rows) {
            return Err(MimalError::Pairing(format!("fold {}: held-out rows are not aligned across sources", f.fold)));
        }
        if rows < 2 {
            return Err(MimalError::Variance(format!("need at least 2 held-out rows per source, got {rows}")));
        }
        let mat = DMatrix::from_fn(rows, m_src, |i, m| f.holdout_samples[m][i]);
        let means = DVector::from_fn(m_src, |m, _| mat.column(m).mean());
        let mut centered = mat;
        for (m, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-means[m]);
        }
        let cov = centered.tr_mul(&centered) / (rows as f64 - 1.0);
        let q = DVector::from_column_slice(f.q_hat());
        total += q.dot(&(&cov * &q));
    }
    Ok((total / (n1 as f64 * folds.len() as f64)).sqrt())
}

/// `√(se² + τ / n_min)`.
pub fn inflate_variance(se: f64, tau: f64, n_min: usize) -> Result<f64> {
    if !(tau >= 0.0) || n_min == 0 {
        return Err(MimalError::Config(format!("inflation needs tau >= 0 and n_min >= 1, got {tau} and {n_min}")));
    }
    Ok((se * se + tau / n_min as f64).sqrt())
}

/// `i_hat ± Φ⁻¹(1 - α/2) · se`.
pub fn confidence_interval(i_hat: f64, se: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MimalError::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(se >= 0.0) {
        return Err(MimalError::Config(format!("standard error must be non-negative, got {se}")));
    }
    let z = normal_quantile(1.0 - alpha / 2.0);
    Ok((i_hat - z * se, i_hat + z * se))
}

/// Standard normal quantile, Wichura's AS 241 (PPND16), accurate to about 1e-16.
pub fn normal_quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

fn poly(coef: &[f64; 8], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    133.141_667_891_784_38,
    1_971.590_950_306_551_3,
    13_731.693_765_509_461,
    45_921.953_931_549_87,
    67_265.770_927_008_7,
    33_430.575_583_588_13,
    2_509.080_928_730_122_7,
];
const B: [f64; 8] = [
    1.0,
    42.313_330_701_600_91,
    687.187_007_492_057_9,
    5_394.196_021_424_751,
    21_213.794_301_586_597,
    39_307.895_800_092_71,
    28_729.085_735_721_943,
    5_226.495_278_852_545,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    0.241_780_725_177_450_6,
    0.022_723_844_989_269_184,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    0.689_767_334_985_1,
    0.148_103_976_427_480_08,
    0.015_198_666_563_616_457,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    0.296_560_571_828_504_9,
    0.026_532_189_526_576_124,
    0.001_242_660_947_388_078_4,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    0.599_832_206_555_888,
    0.136_929_880_922_735_8,
    0.014_875_361_290_850_615,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_7e-15,
];

/// `I^(m)_X`: the same pipeline on source `m` alone, where `q̂ ≡ [1]`.
pub fn source_specific_importance(
    data: &MultiSourceDataset,
    m: usize,
    spec: &ProblemSpec,
    seed: u64,
) -> Result<ImportanceEstimate> {
    let single = data.source_only(m)?;
    let mut est = estimate_importance(&single, spec, seed)?;
    est.target = format!("{}@{}", est.target, data.sources[m].label);
    Ok(est)
}

/// A set of predictor columns treated jointly as the exposure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureBlock {
    pub name: String,
    /// Indices into [`MultiSourceDataset::predictor_names`].
    pub columns: Vec<usize>,
}

/// One block per predictor column, except that the columns of each group are
/// merged into a single block placed at the group's first column.
pub fn exposure_blocks(data: &MultiSourceDataset, groups: &[(String, Vec<String>)]) -> Result<Vec<ExposureBlock>> {
    let names = data.predictor_names();
    let index = |c: &String| {
        names
            .iter()
            .position(|n| n == c)
            .ok_or_else(|| MimalError::Input(format!("unknown predictor column '{c}'")))
    };
    let mut owner: Vec<Option<usize>> = vec![None; names.len()];
    for (g, (_, cols)) in groups.iter().enumerate() {
        for c in cols {
            let j = index(c)?;
            if owner[j].replace(g).is_some() {
                return Err(MimalError::Input(format!("column '{c}' belongs to two groups")));
            }
        }
    }
    let mut blocks = Vec::new();
    let mut emitted = vec![false; groups.len()];
    for (j, name) in names.iter().enumerate() {
        match owner[j] {
            None => blocks.push(ExposureBlock {
                name: name.clone(),
                columns: vec![j],
            }),
            Some(g) if !emitted[g] => {
                emitted[g] = true;
                let mut columns = groups[g].1.iter().map(index).collect::<Result<Vec<_>>>()?;
                columns.sort_unstable();
                blocks.push(ExposureBlock {
                    name: groups[g].0.clone(),
                    columns,
                });
            }
            Some(_) => {}
        }
    }
    if blocks.len() < 2 {
        return Err(MimalError::Input("a scan needs at least two exposure blocks".into()));
    }
    Ok(blocks)
}

/// Scan results for one exposure block. Failures are recorded, not raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocoEntry {
    pub target: String,
    pub columns: Vec<String>,
    pub estimate: Option<ImportanceEstimate>,
    pub source_estimates: Vec<Option<ImportanceEstimate>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

/// Leave-one-covariate-out scan: each block in turn is the exposure and all
/// other predictors are adjusted for.
pub fn loco_scan(
    data: &MultiSourceDataset,
    blocks: &[ExposureBlock],
    spec: &ProblemSpec,
    seed: u64,
) -> Result<Vec<LocoEntry>> {
    let names = data.predictor_names();
    let total = names.len();
    blocks
        .par_iter()
        .enumerate()
        .map(|(b, block)| {
            let adjust: Vec<usize> = (0..total).filter(|c| !block.columns.contains(c)).collect();
            let view = data.regroup(&block.columns, &adjust)?;
            let target_seed = derive_seed(seed, "loco", b as u64);
            let mut errors = Vec::new();
            let mut keep = |r: Result<ImportanceEstimate>, what: &str| match r {
                Ok(mut e) => {
                    e.target = if what.is_empty() { block.name.clone() } else { format!("{}@{what}", block.name) };
                    Some(e)
                }
                Err(e) => {
                    errors.push(format!("{}{}: {e}", block.name, if what.is_empty() { String::new() } else { format!("@{what}") }));
                    None
                }
            };
            let estimate = keep(estimate_importance(&view, spec, target_seed), "");
            let source_estimates = (0..view.num_sources())
                .map(|m| {
                    let label = view.sources[m].label.clone();
                    keep(source_specific_importance(&view, m, spec, derive_seed(target_seed, "source", m as u64)), &label)
                })
                .collect();
            Ok(LocoEntry {
                target: block.name.clone(),
                columns: block.columns.iter().map(|&c| names[c].clone()).collect(),
                estimate,
                source_estimates,
                errors,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{Inputs, LearnerSpec, ModelBundle};
    use crate::saddle::{SimplexWeights, TrajectorySummary};

    fn fold(q: Vec<f64>, samples: Vec<Vec<f64>>) -> FoldArtifacts {
        let m = q.len();
        let g = FittedModel::new(LearnerSpec::intercept_only(), vec![0.0], None, [1, 0]).unwrap();
        let f = FittedModel::new(LearnerSpec::linear(Inputs::X, false), vec![0.0], None, [1, 0]).unwrap();
        FoldArtifacts {
            fold: 0,
            baselines: vec![g.clone(); m],
            saddle: SaddlePoint {
                q_hat: SimplexWeights::new(q).unwrap(),
                bundle: ModelBundle::new(f, vec![g; m]).unwrap(),
                reward_at_solution: 0.0,
                per_source_reward: vec![0.0; m],
                iterations_used: 1,
                converged: true,
                trajectory_summary: TrajectorySummary::default(),
            },
            holdout_reward_value: 0.0,
            holdout_samples: samples,
        }
    }

    #[test]
    fn independent_se_hand_fixture() {
        let f = fold(vec![0.5, 0.5], vec![vec![0.0, 2.0], vec![1.0, 3.0]]);
        let se = standard_error_independent(&[f], &[2, 2]).unwrap();
        assert!((se * se - 0.5).abs() < 1e-12);
    }

    #[test]
    fn independent_se_ignores_zero_weight_source() {
        let a = fold(vec![1.0, 0.0], vec![vec![0.0, 2.0], vec![1.0, 30.0]]);
        let b = fold(vec![1.0, 0.0], vec![vec![0.0, 2.0], vec![-5.0, 3.0]]);
        let sa = standard_error_independent(&[a], &[2, 2]).unwrap();
        let sb = standard_error_independent(&[b], &[2, 2]).unwrap();
        assert_eq!(sa, sb);
        assert!((sa * sa - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_case_is_mean_variance_over_n() {
        let folds = vec![fold(vec![1.0], vec![vec![1.0, 2.0, 3.0]]), fold(vec![1.0], vec![vec![0.0, 4.0, 8.0]])];
        let se = standard_error_independent(&folds, &[6]).unwrap();
        assert!((se * se - (1.0 + 16.0) / 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_rows_is_a_variance_error() {
        let f = fold(vec![1.0], vec![vec![1.0]]);
        assert!(matches!(standard_error_independent(&[f], &[1]), Err(MimalError::Variance(_))));
    }

    #[test]
    fn paired_se_examples() {
        // perfectly correlated sources behave like a single source
        let s = vec![0.0, 2.0, 7.0];
        let paired = standard_error_paired(&[fold(vec![0.5, 0.5], vec![s.clone(), s.clone()])], 3).unwrap();
        let single = standard_error_independent(&[fold(vec![1.0], vec![s.clone()])], &[3]).unwrap();
        assert!((paired - single).abs() < 1e-12);
        // a zero weight removes the other source entirely
        let p = standard_error_paired(&[fold(vec![1.0, 0.0], vec![s.clone(), vec![5.0, -1.0, 0.0]])], 3).unwrap();
        assert!((p - single).abs() < 1e-12);
        // uncorrelated columns: the diagonal terms match the independent formula
        let a = vec![1.0, -1.0, 1.0, -1.0];
        let b = vec![1.0, 1.0, -1.0, -1.0];
        let f = fold(vec![0.3, 0.7], vec![a, b]);
        let p = standard_error_paired(std::slice::from_ref(&f), 4).unwrap();
        let i = standard_error_independent(&[f], &[4, 4]).unwrap();
        assert!((p - i).abs() < 1e-12);
    }

    #[test]
    fn misaligned_paired_rows_are_rejected() {
        let f = fold(vec![0.5, 0.5], vec![vec![0.0, 1.0], vec![0.0, 1.0, 2.0]]);
        assert!(matches!(standard_error_paired(&[f], 2), Err(MimalError::Pairing(_))));
    }

    #[test]
    fn inflation_examples() {
        assert_eq!(inflate_variance(0.3, 0.0, 10).unwrap(), 0.3);
        assert!((inflate_variance(0.0, 0.1, 1000).unwrap() - 0.01).abs() < 1e-12);
        assert!((inflate_variance(0.02, 0.1, 2000).unwrap() - 4.5e-4f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn interval_examples() {
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert_eq!(confidence_interval(1.5, 0.0, 0.05).unwrap(), (1.5, 1.5));
        let (lo, hi) = confidence_interval(2.0, 0.5, 0.05).unwrap();
        assert!((lo - 1.020_018_007_729_973).abs() < 1e-12 && (hi - 2.979_981_992_270_027).abs() < 1e-12);
        assert!(confidence_interval(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn quantile_is_odd_and_monotone() {
        for p in [1e-3, 0.01, 0.2, 0.4] {
            assert!((normal_quantile(p) + normal_quantile(1.0 - p)).abs() < 1e-9 * normal_quantile(p).abs().max(1.0));
        }
        assert!((normal_quantile(0.5)).abs() < 1e-15);
        assert!((normal_quantile(1e-10) + 6.361_340_902_404_056).abs() < 1e-9);
    }
}

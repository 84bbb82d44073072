#![allow(dead_code)]

use mimal::data::{MultiSourceDataset, SourceDataset};
use mimal::inference::FoldArtifacts;
use mimal::learners::{FittedModel, Inputs, LearnerSpec, ModelBundle};
use mimal::rewards::{sigmoid, LossKind};
use mimal::rng::rng_from_seed;
use mimal::saddle::{SaddlePoint, SimplexWeights, TrajectorySummary};
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};

/// `M` sources with `p` exposures and `k` adjustment columns drawn from
/// `N(0, 1)`; the linear index `Xθ_m + Zγ_m` is turned into an outcome of the
/// given loss family.
pub fn glm_data(seed: u64, kind: LossKind, thetas: &[Vec<f64>], k: usize, n: usize) -> MultiSourceDataset {
    let mut rng = rng_from_seed(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let p = thetas[0].len();
    let sources = thetas
        .iter()
        .enumerate()
        .map(|(m, th)| {
            let x = DMatrix::from_fn(n, p, |_, _| unit.sample(&mut rng));
            let z = DMatrix::from_fn(n, k, |_, _| unit.sample(&mut rng));
            let gamma: Vec<f64> = (0..k).map(|j| 0.3 * (j as f64 + 1.0) * if m % 2 == 0 { 1.0 } else { -1.0 }).collect();
            let y = DVector::from_fn(n, |i, _| {
                let eta: f64 = (0..p).map(|j| x[(i, j)] * th[j]).sum::<f64>() + (0..k).map(|j| z[(i, j)] * gamma[j]).sum::<f64>();
                match kind {
                    LossKind::SquaredError => eta + unit.sample(&mut rng),
                    LossKind::Logistic => f64::from(u8::from(rng.random::<f64>() < sigmoid(eta))),
                    LossKind::Poisson => Poisson::new((0.3 * eta).exp()).unwrap().sample(&mut rng),
                }
            });
            SourceDataset::new(m, format!("source{}", m + 1), y, x, z).unwrap()
        })
        .collect::<Vec<_>>();
    let xs = (1..=p).map(|j| format!("x{j}")).collect();
    let zs = (1..=k).map(|j| format!("z{j}")).collect();
    if sources.len() == 1 {
        MultiSourceDataset::single(sources.into_iter().next().unwrap(), xs, zs).unwrap()
    } else {
        MultiSourceDataset::new(sources, xs, zs, false).unwrap()
    }
}

/// Three heterogeneous sources with two exposures.
pub fn three_sources(seed: u64, kind: LossKind, k: usize, n: usize) -> MultiSourceDataset {
    glm_data(seed, kind, &[vec![1.0, 0.5], vec![0.3, 1.1], vec![1.2, -0.4]], k, n)
}

/// Fold artifacts carrying only weights and held-out reward differences, for
/// checking the standard error algebra.
pub fn fold(q: Vec<f64>, samples: Vec<Vec<f64>>) -> FoldArtifacts {
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

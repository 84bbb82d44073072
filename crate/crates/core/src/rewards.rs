//! Per-observation objectives `ℓ(y, u)` and the weighted empirical reward.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{MimalError, Result};
use crate::saddle::SimplexWeights;

/// Goodness-of-fit objective `ℓ(y, u)`; larger is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `-(y - u)^2`
    SquaredError,
    /// `y u - log(1 + e^u)`, labels in {0, 1}
    Logistic,
    /// `y u - e^u` (log link, the `log y!` term dropped)
    Poisson,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::SquaredError => "squared_error",
            LossKind::Logistic => "logistic",
            LossKind::Poisson => "poisson",
        })
    }
}

impl std::str::FromStr for LossKind {
    type Err = MimalError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared_error" => Ok(LossKind::SquaredError),
            "logistic" => Ok(LossKind::Logistic),
            "poisson" => Ok(LossKind::Poisson),
            other => Err(MimalError::Config(format!("unknown loss `{other}`"))),
        }
    }
}

/// `log(1 + e^u)` without overflow.
#[inline]
pub fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

impl LossKind {
    pub fn check_outcome(self, y: f64) -> Result<()> {
        let ok = match self {
            LossKind::SquaredError => y.is_finite(),
            LossKind::Logistic => y == 0.0 || y == 1.0,
            LossKind::Poisson => y >= 0.0 && y.is_finite() && y.fract() == 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(MimalError::Input(format!("outcome {y} is outside the domain of the {self} loss")))
        }
    }

    pub fn check_outcomes(self, y: &DVector<f64>) -> Result<()> {
        y.iter().try_for_each(|&v| self.check_outcome(v))
    }

    /// `ℓ(y, u)` without domain checks.
    #[inline]
    pub fn value(self, y: f64, u: f64) -> f64 {
        match self {
            LossKind::SquaredError => -(y - u) * (y - u),
            LossKind::Logistic => y * u - softplus(u),
            LossKind::Poisson => y * u - u.exp(),
        }
    }

    /// `∂ℓ/∂u` without domain checks.
    #[inline]
    pub fn grad(self, y: f64, u: f64) -> f64 {
        match self {
            LossKind::SquaredError => 2.0 * (y - u),
            LossKind::Logistic => y - sigmoid(u),
            LossKind::Poisson => y - u.exp(),
        }
    }

    /// `-∂²ℓ/∂u²`, non-negative for all three objectives.
    #[inline]
    pub fn curvature(self, u: f64) -> f64 {
        match self {
            LossKind::SquaredError => 2.0,
            LossKind::Logistic => {
                let p = sigmoid(u);
                p * (1.0 - p)
            }
            LossKind::Poisson => u.exp(),
        }
    }

    /// Upper bound on the curvature, when one exists.
    pub fn curvature_bound(self) -> Option<f64> {
        match self {
            LossKind::SquaredError => Some(2.0),
            LossKind::Logistic => Some(0.25),
            LossKind::Poisson => None,
        }
    }
}

pub fn loss_value(kind: LossKind, y: f64, u: f64) -> Result<f64> {
    kind.check_outcome(y)?;
    if !u.is_finite() {
        return Err(MimalError::Input(format!("non-finite prediction {u}")));
    }
    Ok(kind.value(y, u))
}

pub fn loss_grad_u(kind: LossKind, y: f64, u: f64) -> Result<f64> {
    kind.check_outcome(y)?;
    if !u.is_finite() {
        return Err(MimalError::Input(format!("non-finite prediction {u}")));
    }
    Ok(kind.grad(y, u))
}

/// Per-source mean reward differences of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub per_source_reward: Vec<f64>,
    pub per_source_n: Vec<usize>,
}

/// `ℓ(y_i, u_full_i) - ℓ(y_i, u_base_i)` for every row.
pub fn reward_differences(kind: LossKind, y: &DVector<f64>, u_full: &DVector<f64>, u_base: &DVector<f64>) -> Vec<f64> {
    y.iter()
        .zip(u_full.iter())
        .zip(u_base.iter())
        .map(|((&yi, &f), &b)| kind.value(yi, f) - kind.value(yi, b))
        .collect()
}

/// `Σ_m q_m · mean_m[ℓ(y, u_full) - ℓ(y, u_base)]` with its per-source breakdown.
pub fn empirical_reward(
    kind: LossKind,
    q: &SimplexWeights,
    u_full: &[DVector<f64>],
    u_base: &[DVector<f64>],
    outcomes: &[&DVector<f64>],
) -> Result<(f64, RewardBreakdown)> {
    let m = q.len();
    if u_full.len() != m || u_base.len() != m || outcomes.len() != m {
        return Err(MimalError::Shape(format!(
            "{m} weights but {} / {} / {} prediction, baseline and outcome vectors",
            u_full.len(),
            u_base.len(),
            outcomes.len()
        )));
    }
    let mut per_source_reward = Vec::with_capacity(m);
    let mut per_source_n = Vec::with_capacity(m);
    for s in 0..m {
        let (y, f, b) = (outcomes[s], &u_full[s], &u_base[s]);
        if f.len() != y.len() || b.len() != y.len() {
            return Err(MimalError::Shape(format!(
                "source {s}: {} outcomes, {} predictions, {} baseline predictions",
                y.len(),
                f.len(),
                b.len()
            )));
        }
        if y.is_empty() {
            return Err(MimalError::Shape(format!("source {s} has no evaluation rows")));
        }
        let diffs = reward_differences(kind, y, f, b);
        per_source_reward.push(diffs.iter().sum::<f64>() / y.len() as f64);
        per_source_n.push(y.len());
    }
    let total = q.as_slice().iter().zip(&per_source_reward).map(|(w, r)| w * r).sum();
    Ok((
        total,
        RewardBreakdown {
            per_source_reward,
            per_source_n,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const KINDS: [LossKind; 3] = [LossKind::SquaredError, LossKind::Logistic, LossKind::Poisson];

    #[test]
    fn loss_examples() {
        assert_eq!(loss_value(LossKind::SquaredError, 3.0, 3.0).unwrap(), 0.0);
        let l = loss_value(LossKind::Logistic, 1.0, 0.0).unwrap();
        assert!((l + std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(loss_value(LossKind::Poisson, 2.0, 0.0).unwrap(), -1.0);
        assert_eq!(loss_grad_u(LossKind::SquaredError, 3.0, 1.0).unwrap(), 4.0);
        assert_eq!(loss_grad_u(LossKind::Logistic, 1.0, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn domain_violations_are_rejected() {
        assert!(loss_value(LossKind::Logistic, 0.5, 0.0).is_err());
        assert!(loss_value(LossKind::Poisson, -1.0, 0.0).is_err());
        assert!(loss_value(LossKind::Poisson, 1.5, 0.0).is_err());
        assert!(loss_grad_u(LossKind::Logistic, 2.0, 0.0).is_err());
    }

    #[test]
    fn logistic_is_stable_for_large_predictions() {
        for &u in &[-700.0, -50.0, 50.0, 700.0] {
            let v = LossKind::Logistic.value(1.0, u);
            assert!(v.is_finite());
        }
        assert!((LossKind::Logistic.value(1.0, 700.0)).abs() < 1e-300);
        assert!((LossKind::Logistic.value(0.0, 700.0) + 700.0).abs() < 1e-9);
    }

    #[test]
    fn reward_examples() {
        let y = DVector::from_vec(vec![0.0, 0.0]);
        let q = SimplexWeights::new(vec![1.0, 0.0]).unwrap();
        // squared error: ℓ(0, u) - ℓ(0, b) = b² - u²
        let uf = vec![DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![0.0, 0.0])];
        let ub = vec![
            DVector::from_vec(vec![1.0, 2.0]),
            DVector::from_vec(vec![3.0, 3.0]),
        ];
        let (v, b) = empirical_reward(LossKind::SquaredError, &q, &uf, &ub, &[&y, &y]).unwrap();
        assert_eq!(v, 2.5);
        assert_eq!(b.per_source_reward, vec![2.5, 9.0]);
        assert_eq!(b.per_source_n, vec![2, 2]);

        let q = SimplexWeights::new(vec![0.5, 0.5]).unwrap();
        let ub = vec![
            DVector::from_vec(vec![(2.0f64).sqrt(), (2.0f64).sqrt()]),
            DVector::from_vec(vec![2.0, 2.0]),
        ];
        let (v, _) = empirical_reward(LossKind::SquaredError, &q, &uf, &ub, &[&y, &y]).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn three_source_hand_computation() {
        // rows (y, u_full, u_base):
        // s1: (1, 0.5, 0), (2, 2, 1)    diffs: -0.25+1=0.75, 0+1=1     mean 0.875
        // s2: (0, 1, 0), (3, 1, 2)      diffs: -1+0=-1, -4+1=-3        mean -2
        // s3: (-1, -1, 1), (1, 0, 0)    diffs: 0+4=4, -1+1=0           mean 2
        let ys = [
            DVector::from_vec(vec![1.0, 2.0]),
            DVector::from_vec(vec![0.0, 3.0]),
            DVector::from_vec(vec![-1.0, 1.0]),
        ];
        let uf = vec![
            DVector::from_vec(vec![0.5, 2.0]),
            DVector::from_vec(vec![1.0, 1.0]),
            DVector::from_vec(vec![-1.0, 0.0]),
        ];
        let ub = vec![
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::from_vec(vec![0.0, 2.0]),
            DVector::from_vec(vec![1.0, 0.0]),
        ];
        let q = SimplexWeights::new(vec![0.2, 0.3, 0.5]).unwrap();
        let (v, b) = empirical_reward(LossKind::SquaredError, &q, &uf, &ub, &[&ys[0], &ys[1], &ys[2]]).unwrap();
        assert_eq!(b.per_source_reward, vec![0.875, -2.0, 2.0]);
        assert!((v - (0.2 * 0.875 - 0.6 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_a_shape_error() {
        let y = DVector::from_vec(vec![0.0, 0.0]);
        let q = SimplexWeights::uniform(2);
        let short = vec![DVector::from_vec(vec![0.0]), DVector::from_vec(vec![0.0, 0.0])];
        let ok = vec![DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![0.0, 0.0])];
        assert!(matches!(
            empirical_reward(LossKind::SquaredError, &q, &short, &ok, &[&y, &y]),
            Err(MimalError::Shape(_))
        ));
    }

    fn valid_y(kind: LossKind, raw: f64) -> f64 {
        match kind {
            LossKind::SquaredError => raw,
            LossKind::Logistic => (raw > 0.0) as u8 as f64,
            LossKind::Poisson => raw.abs().floor(),
        }
    }

    proptest! {
        #[test]
        fn nested_predictions_give_zero_reward(
            vals in proptest::collection::vec(-5.0f64..5.0, 6),
            w in 0.0f64..1.0,
        ) {
            let q = SimplexWeights::new(vec![w, 1.0 - w]).unwrap();
            for kind in KINDS {
                let y: Vec<DVector<f64>> = (0..2).map(|s| DVector::from_iterator(3, vals[3*s..3*s+3].iter().map(|&v| valid_y(kind, v)))).collect();
                let u: Vec<DVector<f64>> = (0..2).map(|s| DVector::from_iterator(3, vals[3*s..3*s+3].iter().map(|v| v * 0.3))).collect();
                let (v, _) = empirical_reward(kind, &q, &u, &u, &[&y[0], &y[1]]).unwrap();
                prop_assert_eq!(v, 0.0);
            }
        }

        #[test]
        fn losses_are_concave(yr in -5.0f64..5.0, u1 in -10.0f64..10.0, u2 in -10.0f64..10.0, t in 0.0f64..1.0) {
            for kind in KINDS {
                let y = valid_y(kind, yr);
                let lhs = kind.value(y, t * u1 + (1.0 - t) * u2);
                let rhs = t * kind.value(y, u1) + (1.0 - t) * kind.value(y, u2);
                prop_assert!(lhs >= rhs - 1e-12 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn gradient_matches_central_differences(yr in -5.0f64..5.0, u in -6.0f64..6.0) {
            for kind in KINDS {
                let y = valid_y(kind, yr);
                let h = 1e-5;
                let fd = (kind.value(y, u + h) - kind.value(y, u - h)) / (2.0 * h);
                let g = kind.grad(y, u);
                let denom = g.abs().max(1.0);
                prop_assert!(((fd - g) / denom).abs() < 1e-6, "{kind}: fd {fd} vs {g}");
            }
        }
    }
}

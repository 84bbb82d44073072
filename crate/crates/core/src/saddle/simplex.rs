use serde::{Deserialize, Serialize};

use crate::error::{MimalError, Result};

/// A point `q` of the probability simplex `Δ^M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    /// Validates non-negativity and `Σ q = 1` (to 1e-9), then renormalizes.
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(MimalError::Input("empty weight vector".into()));
        }
        if q.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(MimalError::Input(format!("weights must be finite and non-negative: {q:?}")));
        }
        let s: f64 = q.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(MimalError::Input(format!("weights sum to {s}, not 1")));
        }
        Ok(SimplexWeights(q.into_iter().map(|v| v / s).collect()))
    }

    pub fn uniform(m: usize) -> Self {
        SimplexWeights(vec![1.0 / m as f64; m])
    }

    pub fn vertex(m: usize, i: usize) -> Self {
        let mut q = vec![0.0; m];
        q[i] = 1.0;
        SimplexWeights(q)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }
}

impl std::ops::Index<usize> for SimplexWeights {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Euclidean projection onto the simplex by the sort-and-threshold rule.
pub fn project_simplex(v: &[f64]) -> Result<SimplexWeights> {
    if v.is_empty() {
        return Err(MimalError::Input("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(MimalError::Input(format!("non-finite input to simplex projection: {v:?}")));
    }
    Ok(SimplexWeights(project_unchecked(v)))
}

pub(crate) fn project_unchecked(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut threshold = 0.0;
    for (j, &vj) in sorted.iter().enumerate() {
        cumsum += vj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if vj - t > 0.0 {
            threshold = t;
        } else {
            break;
        }
    }
    let mut q: Vec<f64> = v.iter().map(|&x| (x - threshold).max(0.0)).collect();
    // absorb rounding so that Σ q = 1 to machine precision
    let s: f64 = q.iter().sum();
    if s > 0.0 {
        q.iter_mut().for_each(|x| *x /= s);
    }
    q
}

use serde::{Deserialize, Serialize};

use crate::error::{MimalError, Result};

/// Diminishing step size `η(t) = scale · (1 + t / offset)^(-power)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRule {
    pub scale: f64,
    pub offset: f64,
    pub power: f64,
}

impl StepRule {
    pub fn at(&self, t: usize) -> f64 {
        self.scale * (1.0 + t as f64 / self.offset).powf(-self.power)
    }
}

/// Step sizes and stopping rule of the two-timescale solver.
///
/// The learner step is applied to a preconditioned gradient, so `η_fg = 1`
/// is a full Newton-type step; the weight step is applied to the reward
/// gradient divided by a running curvature estimate of the outer objective.
/// Both scales are therefore dimensionless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSchedule {
    #[serde(rename = "T")]
    pub max_iter: usize,
    pub eta_q: StepRule,
    pub eta_fg: StepRule,
    pub grad_tol: f64,
    #[serde(default)]
    pub ridge_delta: f64,
    /// Uniform when absent.
    #[serde(default)]
    pub q_init: Option<Vec<f64>>,
    /// Consecutive iterations below tolerance required to stop.
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Minibatch size for neural-network learners; full batch when absent.
    #[serde(default)]
    pub minibatch: Option<usize>,
    #[serde(default)]
    pub record_trajectory: bool,
}

fn default_patience() -> usize {
    25
}

pub const DEFAULT_STEP_OFFSET: f64 = 500.0;

impl OptimizerSchedule {
    /// `η_q(t) = a (1 + t/t0)^(-1/2)`, `η_fg(t) = a³ (1 + t/t0)^(-3/2)` with `a = 1`.
    pub fn with_tolerance(grad_tol: f64) -> Self {
        let a = 1.0;
        OptimizerSchedule {
            max_iter: 5000,
            eta_q: StepRule {
                scale: a,
                offset: DEFAULT_STEP_OFFSET,
                power: 0.5,
            },
            eta_fg: StepRule {
                scale: a * a * a,
                offset: DEFAULT_STEP_OFFSET,
                power: 1.5,
            },
            grad_tol,
            ridge_delta: 0.0,
            q_init: None,
            patience: default_patience(),
            minibatch: None,
            record_trajectory: false,
        }
    }

    pub fn parametric() -> Self {
        Self::with_tolerance(1e-6)
    }

    pub fn nonparametric() -> Self {
        Self::with_tolerance(1e-4)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(MimalError::Config("T must be at least 1".into()));
        }
        for (name, r) in [("eta_q", &self.eta_q), ("eta_fg", &self.eta_fg)] {
            if !(r.scale > 0.0 && r.offset > 0.0 && r.power >= 0.0) {
                return Err(MimalError::Config(format!("{name}: invalid step rule {r:?}")));
            }
        }
        if let Some(t) = (1..=self.max_iter).find(|&t| self.eta_q.at(t) < self.eta_fg.at(t)) {
            return Err(MimalError::Config(format!(
                "eta_q({t}) = {} is smaller than eta_fg({t}) = {}",
                self.eta_q.at(t),
                self.eta_fg.at(t)
            )));
        }
        if !(self.grad_tol > 0.0) {
            return Err(MimalError::Config("grad_tol must be positive".into()));
        }
        if !(self.ridge_delta >= 0.0) {
            return Err(MimalError::Config("ridge_delta must be non-negative".into()));
        }
        if self.patience == 0 {
            return Err(MimalError::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for OptimizerSchedule {
    fn default() -> Self {
        Self::parametric()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedules_separate_timescales_cubically() {
        let s = OptimizerSchedule::parametric();
        s.validate().unwrap();
        for t in [1, 10, 100, 1000, 5000] {
            let q = s.eta_q.at(t);
            let fg = s.eta_fg.at(t);
            assert!(q >= fg);
            assert!((fg - q.powi(3)).abs() < 1e-12 * q.powi(3).max(1e-300));
        }
    }

    #[test]
    fn inverted_timescales_are_rejected() {
        let mut s = OptimizerSchedule::parametric();
        std::mem::swap(&mut s.eta_q, &mut s.eta_fg);
        assert!(s.validate().is_err());
    }
}

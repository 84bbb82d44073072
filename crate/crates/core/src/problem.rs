use serde::{Deserialize, Serialize};

use crate::error::{MimalError, Result};
use crate::learners::{Family, Inputs, LearnerSpec};
use crate::rewards::LossKind;
use crate::saddle::OptimizerSchedule;

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_TAU: f64 = 0.1;

/// Everything that defines one importance analysis apart from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub loss_kind: LossKind,
    pub learner_f: LearnerSpec,
    pub learner_g: LearnerSpec,
    pub learner_b: LearnerSpec,
    #[serde(rename = "K")]
    pub k: usize,
    pub ridge_delta: f64,
    pub inflation_tau: f64,
    pub alpha: f64,
    pub cross_fit: bool,
    pub optimizer: OptimizerSchedule,
}

impl ProblemSpec {
    /// Linear exposure model on `X`, linear adjustment and baseline models on
    /// `Z` with intercepts.
    pub fn linear(loss_kind: LossKind) -> Self {
        let g = LearnerSpec::linear(Inputs::Z, true);
        ProblemSpec {
            loss_kind,
            learner_f: LearnerSpec::linear(Inputs::X, false),
            learner_g: g.clone(),
            learner_b: g,
            k: DEFAULT_FOLDS,
            ridge_delta: 0.0,
            inflation_tau: DEFAULT_TAU,
            alpha: 0.05,
            cross_fit: true,
            optimizer: OptimizerSchedule::parametric(),
        }
    }

    /// Replaces the exposure model and picks the matching default tolerance.
    pub fn with_exposure_model(mut self, f: LearnerSpec) -> Self {
        let tol = if f.family.is_parametric() { 1e-6 } else { 1e-4 };
        self.optimizer.grad_tol = tol;
        self.learner_f = f;
        self
    }

    /// Replaces both the adjustment and the baseline family.
    pub fn with_adjustment_model(mut self, g: LearnerSpec) -> Self {
        self.learner_b = g.clone();
        self.learner_g = g;
        self
    }

    /// The schedule actually handed to the solver: the problem-level ridge
    /// coefficient wins over the schedule's copy.
    pub fn schedule(&self) -> OptimizerSchedule {
        let mut s = self.optimizer.clone();
        s.ridge_delta = self.ridge_delta;
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MimalError::Config(m));
        if self.learner_g.family != self.learner_b.family
            || self.learner_g.basis != self.learner_b.basis
            || self.learner_g.inputs != self.learner_b.inputs
            || self.learner_g.include_intercept != self.learner_b.include_intercept
        {
            return bad("learner_g and learner_b must describe the same function family".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.k < 2 && self.cross_fit {
            return bad(format!("cross-fitting needs K >= 2, got {}", self.k));
        }
        if !(self.ridge_delta >= 0.0) || !(self.inflation_tau >= 0.0) {
            return bad("ridge_delta and inflation_tau must be non-negative".into());
        }
        if !self.cross_fit && self.learner_f.family == Family::Mlp {
            return bad("neural-network learners always cross-fit".into());
        }
        if !matches!(self.learner_b.inputs, Inputs::Z | Inputs::None) {
            return bad("baseline models read the adjustment block only".into());
        }
        self.learner_f.validate()?;
        self.learner_g.validate()?;
        self.schedule().validate()
    }
}

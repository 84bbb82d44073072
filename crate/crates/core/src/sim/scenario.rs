use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Bernoulli, Distribution, Normal, Poisson, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{MultiSourceDataset, SourceDataset};
use crate::error::{MimalError, Result};
use crate::learners::{Activation, Basis, Inputs, LearnerSpec};
use crate::oracle::QuadraticReward;
use crate::problem::ProblemSpec;
use crate::rewards::{sigmoid, LossKind};
use crate::rng::{derive_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    Sim1Lasso,
    Sim2Krr,
    Sim3Mlp,
    Sim4Null,
    Sim5LogisticGlm,
    Sim6PoissonSpline,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 6] = [
        ScenarioId::Sim1Lasso,
        ScenarioId::Sim2Krr,
        ScenarioId::Sim3Mlp,
        ScenarioId::Sim4Null,
        ScenarioId::Sim5LogisticGlm,
        ScenarioId::Sim6PoissonSpline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Sim1Lasso => "sim1_lasso",
            ScenarioId::Sim2Krr => "sim2_krr",
            ScenarioId::Sim3Mlp => "sim3_mlp",
            ScenarioId::Sim4Null => "sim4_null",
            ScenarioId::Sim5LogisticGlm => "sim5_logistic_glm",
            ScenarioId::Sim6PoissonSpline => "sim6_poisson_spline",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = MimalError;

    /// Accepts the full name or its `simN` prefix.
    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s || id.name().split('_').next() == Some(s))
            .ok_or_else(|| MimalError::Config(format!("unknown scenario '{s}'")))
    }
}

/// How outcomes are drawn given the linear index of each source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeLaw {
    /// `y = Xθ + Zγ + intercept + N(0, sd²)`.
    Gaussian { sd: f64 },
    /// `y ~ Bernoulli(σ(Σ_j x_j³ θ_j))`.
    CubicLogistic,
    /// `y ~ Bernoulli(σ(intercept + Xθ + Zγ))`.
    Logistic,
    /// `y ~ Poisson(exp(intercept + θ_1 sin(1.5 x) + θ_2 x² / 4))` on one exposure.
    PoissonSmooth,
}

/// Published (or analytically known) population quantities.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub i_star: Option<f64>,
    pub q_bar: Option<Vec<f64>>,
    pub theta_bar: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub id: ScenarioId,
    pub num_sources: usize,
    pub n: usize,
    pub loss_kind: LossKind,
    pub num_exposures: usize,
    pub num_adjust: usize,
    /// Covariates are independent `U[-h, h]` with this half-width.
    pub covariate_half_width: f64,
    pub outcome_law: OutcomeLaw,
    /// `θ^(m)` per source.
    pub exposure_coefs: Vec<Vec<f64>>,
    /// `γ^(m)` per source.
    pub adjust_coefs: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub truth: ScenarioTruth,
    /// False for the scenarios whose parameters are our own choice.
    pub published_parameters: bool,
}

/// Fixed initialization seed of the sim3 network, shared by all replications.
pub const SIM3_INIT_SEED: u64 = 20_240_101;
/// Master seed of the cached large-sample truth for the MLP scenario.
pub const SIM3_TRUTH_SEED: u64 = 5_400;

fn pad(head: &[f64], len: usize) -> Vec<f64> {
    let mut v = head.to_vec();
    v.resize(len, 0.0);
    v
}

impl SimulationScenario {
    pub fn new(id: ScenarioId) -> Self {
        match id {
            ScenarioId::Sim1Lasso => SimulationScenario {
                id,
                num_sources: 3,
                n: 800,
                loss_kind: LossKind::SquaredError,
                num_exposures: 50,
                num_adjust: 0,
                covariate_half_width: 3.0,
                outcome_law: OutcomeLaw::Gaussian { sd: 1.0 },
                exposure_coefs: vec![
                    pad(&[5.78, -4.45, 1.26, 1.58, -1.14], 50),
                    pad(&[2.26, -1.05, 5.78, 6.43, -1.26], 50),
                    pad(&[1.83, -2.35, 1.34, 2.59, -6.45], 50),
                ],
                adjust_coefs: vec![vec![]; 3],
                intercepts: vec![0.0; 3],
                truth: ScenarioTruth {
                    i_star: Some(135.243),
                    q_bar: Some(vec![0.43, 0.16, 0.41]),
                    theta_bar: Some(pad(&[3.60, -3.04, 2.03, 2.78, -3.32], 50)),
                },
                published_parameters: true,
            },
            ScenarioId::Sim2Krr => SimulationScenario {
                id,
                num_sources: 3,
                n: 600,
                loss_kind: LossKind::SquaredError,
                num_exposures: 3,
                num_adjust: 2,
                covariate_half_width: 3.0,
                // N(0, 0.25) read as variance 0.25
                outcome_law: OutcomeLaw::Gaussian { sd: 0.5 },
                exposure_coefs: vec![vec![0.9, 0.3, 0.3], vec![0.3, 0.9, 0.3], vec![0.3, 0.3, 0.9]],
                adjust_coefs: vec![vec![0.4, 0.3], vec![-0.3, 0.2], vec![0.0, 0.0]],
                intercepts: vec![0.0; 3],
                truth: ScenarioTruth {
                    i_star: Some(2.238),
                    q_bar: None,
                    theta_bar: Some(vec![0.5, 0.5, 0.5]),
                },
                published_parameters: true,
            },
            ScenarioId::Sim3Mlp => SimulationScenario {
                id,
                num_sources: 3,
                n: 700,
                loss_kind: LossKind::Logistic,
                num_exposures: 3,
                num_adjust: 0,
                covariate_half_width: 2.0,
                outcome_law: OutcomeLaw::CubicLogistic,
                exposure_coefs: vec![vec![0.2, 0.6, 0.6], vec![0.6, 0.2, 0.6], vec![0.6, 0.6, 0.2]],
                adjust_coefs: vec![vec![]; 3],
                intercepts: vec![0.0; 3],
                truth: ScenarioTruth::default(),
                published_parameters: true,
            },
            ScenarioId::Sim4Null => {
                let t1 = vec![1.0, 1.0, 1.0, 1.0];
                SimulationScenario {
                    id,
                    num_sources: 2,
                    n: 2000,
                    loss_kind: LossKind::SquaredError,
                    num_exposures: 4,
                    num_adjust: 2,
                    covariate_half_width: 3.0,
                    outcome_law: OutcomeLaw::Gaussian { sd: 1.0 },
                    exposure_coefs: vec![t1.clone(), t1.iter().map(|v| -v).collect()],
                    adjust_coefs: vec![vec![0.4, 0.3], vec![-0.3, 0.2]],
                    intercepts: vec![0.0; 2],
                    truth: ScenarioTruth {
                        i_star: Some(0.0),
                        q_bar: None,
                        theta_bar: Some(vec![0.0; 4]),
                    },
                    published_parameters: true,
                }
            }
            ScenarioId::Sim5LogisticGlm => SimulationScenario {
                id,
                num_sources: 3,
                n: 1000,
                loss_kind: LossKind::Logistic,
                num_exposures: 2,
                num_adjust: 2,
                covariate_half_width: 2.0,
                outcome_law: OutcomeLaw::Logistic,
                exposure_coefs: vec![vec![1.0, 0.4], vec![0.4, 1.0], vec![0.8, 0.8]],
                adjust_coefs: vec![vec![0.5, -0.3], vec![-0.2, 0.4], vec![0.3, 0.3]],
                intercepts: vec![-0.2, 0.1, 0.3],
                truth: ScenarioTruth::default(),
                published_parameters: false,
            },
            ScenarioId::Sim6PoissonSpline => SimulationScenario {
                id,
                num_sources: 3,
                n: 1000,
                loss_kind: LossKind::Poisson,
                num_exposures: 1,
                num_adjust: 0,
                covariate_half_width: 2.0,
                outcome_law: OutcomeLaw::PoissonSmooth,
                exposure_coefs: vec![vec![0.8, 0.5], vec![0.5, 0.9], vec![0.7, 0.2]],
                adjust_coefs: vec![vec![]; 3],
                intercepts: vec![0.5, 0.3, 0.7],
                truth: ScenarioTruth::default(),
                published_parameters: false,
            },
        }
    }

    /// The analysis configuration the scenario is meant to be estimated with.
    pub fn problem(&self) -> ProblemSpec {
        let base = ProblemSpec::linear(self.loss_kind);
        match self.id {
            ScenarioId::Sim1Lasso => base
                .with_exposure_model(LearnerSpec::lasso(Inputs::X, None, false))
                .with_adjustment_model(LearnerSpec::intercept_only()),
            ScenarioId::Sim2Krr => base.with_exposure_model(LearnerSpec::krr(Inputs::X, 0.1, None)),
            ScenarioId::Sim3Mlp => base
                .with_exposure_model(LearnerSpec::mlp(Inputs::X, vec![6, 4], Activation::Sigmoid, SIM3_INIT_SEED))
                .with_adjustment_model(LearnerSpec::intercept_only()),
            ScenarioId::Sim4Null | ScenarioId::Sim5LogisticGlm => base,
            ScenarioId::Sim6PoissonSpline => base
                .with_exposure_model(LearnerSpec::linear(Inputs::X, false).with_basis(Basis::CubicBspline {
                    num_knots: 20,
                    range: [-2.0, 2.0],
                }))
                .with_adjustment_model(LearnerSpec::intercept_only()),
        }
    }

    /// Configuration for the large-sample truth: the analysis model, except
    /// that kernel exposure models are replaced by the correctly specified
    /// linear family, which contains the population saddle point.
    pub fn truth_problem(&self) -> ProblemSpec {
        let mut spec = self.problem();
        if self.id == ScenarioId::Sim2Krr {
            spec = spec.with_exposure_model(LearnerSpec::linear(Inputs::X, false));
        }
        spec.cross_fit = false;
        spec
    }

    /// Population moments of the exposure block for the Gaussian linear
    /// scenarios, where the adjustment part separates from the reward.
    pub fn population_moments(&self) -> Option<QuadraticReward> {
        if !matches!(self.outcome_law, OutcomeLaw::Gaussian { .. }) {
            return None;
        }
        let p = self.num_exposures;
        let var = self.covariate_half_width.powi(2) / 3.0;
        let a = vec![DMatrix::identity(p, p) * var; self.num_sources];
        let c = self.exposure_coefs.iter().map(|t| DVector::from_row_slice(t) * var).collect();
        QuadraticReward::new(a, c).ok()
    }

    pub fn generate(&self, seed: u64) -> Result<MultiSourceDataset> {
        self.generate_with_size(self.n, seed)
    }

    /// Draws `n` rows per source; source `m` uses its own derived stream.
    pub fn generate_with_size(&self, n: usize, seed: u64) -> Result<MultiSourceDataset> {
        if n == 0 {
            return Err(MimalError::Config("scenario size must be positive".into()));
        }
        let sources = (0..self.num_sources)
            .map(|m| self.draw_source(m, n, &mut rng_from_seed(derive_seed(seed, self.id.name(), m as u64))))
            .collect::<Result<Vec<_>>>()?;
        let xs = (1..=self.num_exposures).map(|j| format!("x{j}")).collect();
        let zs = (1..=self.num_adjust).map(|j| format!("z{j}")).collect();
        MultiSourceDataset::new(sources, xs, zs, false)
    }

    fn draw_source(&self, m: usize, n: usize, rng: &mut Rng) -> Result<SourceDataset> {
        let h = self.covariate_half_width;
        let unif = Uniform::new_inclusive(-h, h).map_err(|e| MimalError::Config(e.to_string()))?;
        let x = DMatrix::from_fn(n, self.num_exposures, |_, _| unif.sample(rng));
        let z = DMatrix::from_fn(n, self.num_adjust, |_, _| unif.sample(rng));
        let theta = DVector::from_row_slice(&self.exposure_coefs[m]);
        let gamma = DVector::from_row_slice(&self.adjust_coefs[m]);
        let b0 = self.intercepts[m];
        let y = match self.outcome_law {
            OutcomeLaw::Gaussian { sd } => {
                let noise = Normal::new(0.0, sd).map_err(|e| MimalError::Config(e.to_string()))?;
                let mean = &x * &theta + &z * &gamma;
                mean.map(|v| v + b0 + noise.sample(rng))
            }
            OutcomeLaw::CubicLogistic => {
                let index = x.map(|v| v * v * v) * &theta;
                index.map(|v| bernoulli(sigmoid(v), rng))
            }
            OutcomeLaw::Logistic => {
                let index = &x * &theta + &z * &gamma;
                index.map(|v| bernoulli(sigmoid(v + b0), rng))
            }
            OutcomeLaw::PoissonSmooth => DVector::from_fn(n, |i, _| {
                let v = x[(i, 0)];
                let rate = (b0 + theta[0] * (1.5 * v).sin() + theta[1] * v * v / 4.0).exp();
                Poisson::new(rate).expect("positive rate").sample(rng)
            }),
        };
        SourceDataset::new(m, format!("source{}", m + 1), y, x, z)
    }
}

fn bernoulli(p: f64, rng: &mut Rng) -> f64 {
    if Bernoulli::new(p).expect("probability in [0, 1]").sample(rng) {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_follow_the_scenarios() {
        let d = SimulationScenario::new(ScenarioId::Sim1Lasso).generate(1).unwrap();
        assert_eq!(d.num_sources(), 3);
        assert_eq!(d.sizes(), vec![800; 3]);
        assert_eq!(d.num_exposures(), 50);
        let d = SimulationScenario::new(ScenarioId::Sim4Null).generate(1).unwrap();
        assert_eq!((d.num_sources(), d.n(0), d.num_exposures(), d.num_adjust()), (2, 2000, 4, 2));
    }

    #[test]
    fn generation_is_deterministic() {
        let s = SimulationScenario::new(ScenarioId::Sim3Mlp);
        assert_eq!(s.generate(9).unwrap(), s.generate(9).unwrap());
        assert_ne!(s.generate(9).unwrap(), s.generate(10).unwrap());
        let y = &s.generate(3).unwrap().sources[0].y;
        assert!(y.iter().all(|v| *v == 0.0 || *v == 1.0));
    }

    #[test]
    fn ids_parse_short_and_long() {
        assert_eq!("sim2".parse::<ScenarioId>().unwrap(), ScenarioId::Sim2Krr);
        assert_eq!("sim6_poisson_spline".parse::<ScenarioId>().unwrap(), ScenarioId::Sim6PoissonSpline);
        assert!("sim7".parse::<ScenarioId>().is_err());
    }

    #[test]
    fn every_default_problem_validates() {
        for id in ScenarioId::ALL {
            let s = SimulationScenario::new(id);
            s.problem().validate().unwrap();
        }
    }
}

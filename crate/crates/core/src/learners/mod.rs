//! Model families for the exposure model `f(X, Z)`, the per-source adjustment
//! models `g_m(Z)` and the baselines `b_m(Z)`.

mod baseline;
mod basis;
mod grad;
pub(crate) mod kernel;
pub(crate) mod mlp;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MimalError, Result};

pub use baseline::fit_baseline;
pub use basis::{bspline_basis, column_labels, design_matrix, DesignMatrix};
pub use grad::{reward_param_grad, split_param_grad, weighted_mean_loss};
pub use kernel::{kernel_matrix, rbf};

pub(crate) use basis::basis_features;
pub(crate) use grad::Evaluator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    LinearBasis,
    Lasso,
    Krr,
    Mlp,
}

impl Family {
    /// Families with a finite, fixed parameter count independent of `n`.
    pub fn is_parametric(self) -> bool {
        matches!(self, Family::LinearBasis | Family::Lasso)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Basis {
    Identity,
    /// `[X, X·Z_1, ..., X·Z_k]`; requires `inputs = xz`.
    Interactions,
    /// Order-4 B-splines on `num_knots` equally spaced interior knots, one block
    /// per input column.
    CubicBspline { num_knots: usize, range: [f64; 2] },
}

/// Which covariate blocks a learner reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Inputs {
    None,
    X,
    Z,
    Xz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub(crate) fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => crate::rewards::sigmoid(v),
        }
    }

    /// Derivative expressed through the pre-activation `v`.
    pub(crate) fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - v.tanh().powi(2),
            Activation::Sigmoid => {
                let s = crate::rewards::sigmoid(v);
                s * (1.0 - s)
            }
        }
    }
}

/// Tuning parameters. Unset values fall back to the documented defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Hyper {
    /// Lasso `λ`; default `1 / n_1` of the fitting sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lasso_penalty: Option<f64>,
    /// RBF bandwidth in `exp(-σ ‖a - b‖²)`; default 0.1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub krr_sigma: Option<f64>,
    /// Kernel ridge coefficient; default `1 / (10 n)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub krr_ridge: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mlp_hidden: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp_activation: Option<Activation>,
    /// Output nonlinearity used by `predict`; training works on the link scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp_output: Option<Activation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp_init_seed: Option<u64>,
    /// Adam step size multiplying the learner schedule; default 0.01.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp_learning_rate: Option<f64>,
}

pub const DEFAULT_KRR_SIGMA: f64 = 0.1;
pub const DEFAULT_MLP_LEARNING_RATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub family: Family,
    #[serde(default = "default_basis")]
    pub basis: Basis,
    pub inputs: Inputs,
    #[serde(default)]
    pub hyper: Hyper,
    #[serde(default)]
    pub include_intercept: bool,
}

fn default_basis() -> Basis {
    Basis::Identity
}

impl LearnerSpec {
    pub fn linear(inputs: Inputs, include_intercept: bool) -> Self {
        LearnerSpec {
            family: Family::LinearBasis,
            basis: Basis::Identity,
            inputs,
            hyper: Hyper::default(),
            include_intercept,
        }
    }

    pub fn intercept_only() -> Self {
        Self::linear(Inputs::None, true)
    }

    pub fn lasso(inputs: Inputs, penalty: Option<f64>, include_intercept: bool) -> Self {
        LearnerSpec {
            family: Family::Lasso,
            basis: Basis::Identity,
            inputs,
            hyper: Hyper {
                lasso_penalty: penalty,
                ..Hyper::default()
            },
            include_intercept,
        }
    }

    pub fn krr(inputs: Inputs, sigma: f64, ridge: Option<f64>) -> Self {
        LearnerSpec {
            family: Family::Krr,
            basis: Basis::Identity,
            inputs,
            hyper: Hyper {
                krr_sigma: Some(sigma),
                krr_ridge: ridge,
                ..Hyper::default()
            },
            include_intercept: false,
        }
    }

    pub fn mlp(inputs: Inputs, hidden: Vec<usize>, output: Activation, seed: u64) -> Self {
        LearnerSpec {
            family: Family::Mlp,
            basis: Basis::Identity,
            inputs,
            hyper: Hyper {
                mlp_hidden: hidden,
                mlp_activation: Some(Activation::Relu),
                mlp_output: Some(output),
                mlp_init_seed: Some(seed),
                ..Hyper::default()
            },
            include_intercept: false,
        }
    }

    pub fn with_basis(mut self, basis: Basis) -> Self {
        self.basis = basis;
        self
    }

    pub fn krr_sigma(&self) -> f64 {
        self.hyper.krr_sigma.unwrap_or(DEFAULT_KRR_SIGMA)
    }

    pub fn krr_ridge(&self, n: usize) -> f64 {
        self.hyper.krr_ridge.unwrap_or(1.0 / (10.0 * n as f64))
    }

    pub fn lasso_penalty(&self, n1: usize) -> f64 {
        self.hyper.lasso_penalty.unwrap_or(1.0 / n1 as f64)
    }

    pub fn mlp_activation(&self) -> Activation {
        self.hyper.mlp_activation.unwrap_or(Activation::Relu)
    }

    pub fn mlp_output(&self) -> Activation {
        self.hyper.mlp_output.unwrap_or(Activation::Identity)
    }

    pub fn mlp_learning_rate(&self) -> f64 {
        self.hyper.mlp_learning_rate.unwrap_or(DEFAULT_MLP_LEARNING_RATE)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MimalError::Config(m));
        if let Basis::CubicBspline { num_knots, range } = &self.basis {
            if *num_knots == 0 || !(range[0] < range[1]) || !range.iter().all(|v| v.is_finite()) {
                return bad(format!("invalid cubic_bspline basis: {num_knots} knots on {range:?}"));
            }
        }
        if self.basis == Basis::Interactions && self.inputs != Inputs::Xz {
            return bad("interactions basis needs inputs = xz".into());
        }
        for (name, v) in [
            ("lasso_penalty", self.hyper.lasso_penalty),
            ("krr_sigma", self.hyper.krr_sigma),
            ("krr_ridge", self.hyper.krr_ridge),
            ("mlp_learning_rate", self.hyper.mlp_learning_rate),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if self.family == Family::Mlp {
            if self.hyper.mlp_hidden.iter().any(|&w| w == 0) {
                return bad("mlp widths must be at least 1".into());
            }
            if matches!(self.mlp_output(), Activation::Relu | Activation::Tanh) {
                return bad("mlp output must be identity or sigmoid".into());
            }
        }
        if self.family == Family::Krr && self.basis != Basis::Identity {
            return bad("krr uses the identity feature map".into());
        }
        Ok(())
    }

    /// Number of feature columns produced by the basis, before any intercept.
    pub fn feature_count(&self, p: usize, k: usize) -> usize {
        let raw = match self.inputs {
            Inputs::None => 0,
            Inputs::X => p,
            Inputs::Z => k,
            Inputs::Xz => p + k,
        };
        match &self.basis {
            Basis::Identity => raw,
            Basis::Interactions => p + p * k,
            Basis::CubicBspline { num_knots, .. } => raw * (num_knots + 4),
        }
    }

    /// Parameter count given the covariate widths and, for kernels, the number
    /// of anchors.
    pub fn param_count(&self, p: usize, k: usize, anchors: usize) -> usize {
        let icpt = usize::from(self.include_intercept);
        let d = self.feature_count(p, k);
        match self.family {
            Family::LinearBasis | Family::Lasso => d + icpt,
            Family::Krr => anchors + icpt,
            Family::Mlp => mlp::param_count(&mlp::layer_sizes(d, &self.hyper.mlp_hidden)),
        }
    }

    /// Labels of the function-space directions this learner spans; two models
    /// are separable when their footprints are disjoint.
    pub fn footprint(&self, p: usize, k: usize) -> Vec<String> {
        match self.family {
            Family::LinearBasis | Family::Lasso => column_labels(self, p, k),
            Family::Krr | Family::Mlp => {
                let mut v = Vec::new();
                if matches!(self.inputs, Inputs::X | Inputs::Xz) {
                    v.extend((1..=p).map(|j| format!("x{j}")));
                }
                if matches!(self.inputs, Inputs::Z | Inputs::Xz) {
                    v.extend((1..=k).map(|j| format!("z{j}")));
                }
                // network output biases are not tracked: the constant direction
                // they share with an intercept-only g is harmless for the reward
                if self.include_intercept {
                    v.push("(intercept)".into());
                }
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Inputs clamped into the B-spline range while building the design.
    #[serde(default)]
    pub clamped: usize,
    #[serde(default)]
    pub iterations: usize,
}

/// A parametrized member of a learner family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: LearnerSpec,
    pub params: Vec<f64>,
    /// Kernel anchors in feature space (one row per anchor).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchors: Option<DMatrix<f64>>,
    /// Exposure and adjustment widths seen at construction.
    pub input_dims: [usize; 2],
    #[serde(default)]
    pub diagnostics: FitDiagnostics,
}

impl FittedModel {
    /// A model with explicit parameters.
    pub fn new(
        spec: LearnerSpec,
        params: Vec<f64>,
        anchors: Option<DMatrix<f64>>,
        input_dims: [usize; 2],
    ) -> Result<Self> {
        spec.validate()?;
        let [p, k] = input_dims;
        if spec.family == Family::Krr && anchors.is_none() {
            return Err(MimalError::Input("krr model needs anchors".into()));
        }
        if let Some(a) = &anchors {
            if a.ncols() != spec.feature_count(p, k) {
                return Err(MimalError::Shape(format!(
                    "anchors have {} columns, features have {}",
                    a.ncols(),
                    spec.feature_count(p, k)
                )));
            }
        }
        let expected = spec.param_count(p, k, anchors.as_ref().map_or(0, |a| a.nrows()));
        if params.len() != expected {
            return Err(MimalError::Shape(format!(
                "{:?} model expects {expected} parameters, got {}",
                spec.family,
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(MimalError::Input("non-finite model parameter".into()));
        }
        Ok(FittedModel {
            spec,
            params,
            anchors,
            input_dims,
            diagnostics: FitDiagnostics::default(),
        })
    }

    /// Starting point: zeros for linear and kernel families, the seeded
    /// uniform scheme for networks. Kernel anchors are the feature rows of
    /// `(x, z)`.
    pub fn initial(spec: &LearnerSpec, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<Self> {
        spec.validate()?;
        let (p, k) = (x.ncols(), z.ncols());
        match spec.family {
            Family::LinearBasis | Family::Lasso => {
                Self::new(spec.clone(), vec![0.0; spec.param_count(p, k, 0)], None, [p, k])
            }
            Family::Krr => {
                let (feats, _) = basis_features(spec, x, z)?;
                let np = spec.param_count(p, k, feats.nrows());
                Self::new(spec.clone(), vec![0.0; np], Some(feats), [p, k])
            }
            Family::Mlp => {
                let sizes = mlp::layer_sizes(spec.feature_count(p, k), &spec.hyper.mlp_hidden);
                let params = mlp::init_params(&sizes, spec.hyper.mlp_init_seed.unwrap_or(0));
                Self::new(spec.clone(), params, None, [p, k])
            }
        }
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn check_inputs(&self, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<()> {
        let [p, k] = self.input_dims;
        let needs_x = matches!(self.spec.inputs, Inputs::X | Inputs::Xz);
        let needs_z = matches!(self.spec.inputs, Inputs::Z | Inputs::Xz);
        if (needs_x && x.ncols() != p) || (needs_z && z.ncols() != k) {
            return Err(MimalError::Shape(format!(
                "model trained on {p} exposure / {k} adjustment columns, got {} / {}",
                x.ncols(),
                z.ncols()
            )));
        }
        if needs_x && needs_z && x.nrows() != z.nrows() {
            return Err(MimalError::Shape("X and Z row counts differ".into()));
        }
        Ok(())
    }

    /// Prediction on the link scale `u`, the argument of the loss.
    pub fn linear_predictor(&self, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.check_inputs(x, z)?;
        let eval = grad::Evaluator::new(self, x, z)?;
        Ok(eval.link(&self.params))
    }

    /// Prediction on the response scale (applies the network output
    /// nonlinearity; identical to the link for other families).
    pub fn predict(&self, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DVector<f64>> {
        let mut u = self.linear_predictor(x, z)?;
        if self.spec.family == Family::Mlp {
            let act = self.spec.mlp_output();
            u.iter_mut().for_each(|v| *v = act.apply(*v));
        }
        Ok(u)
    }
}

/// The exposure model and one adjustment model per source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub f: FittedModel,
    pub g: Vec<FittedModel>,
}

impl ModelBundle {
    /// Rejects bundles in which `f` and `g` span a common basis direction.
    pub fn new(f: FittedModel, g: Vec<FittedModel>) -> Result<Self> {
        for gm in &g {
            check_separation(&f.spec, &gm.spec, f.input_dims[0], f.input_dims[1])?;
        }
        Ok(ModelBundle { f, g })
    }

    pub fn num_params(&self) -> usize {
        self.f.num_params() + self.g.iter().map(|m| m.num_params()).sum::<usize>()
    }

    /// Link-scale prediction `f(X, Z) + g_m(Z)` for source `m`.
    pub fn linear_predictor(&self, m: usize, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(self.f.linear_predictor(x, z)? + self.g[m].linear_predictor(x, z)?)
    }

    pub fn params(&self) -> DVector<f64> {
        let mut v = self.f.params.clone();
        for gm in &self.g {
            v.extend_from_slice(&gm.params);
        }
        DVector::from_vec(v)
    }

    /// Overwrites all parameters from a concatenated `(θ_f, θ_g1, ..., θ_gM)`.
    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(MimalError::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                theta.len()
            )));
        }
        let mut off = self.f.num_params();
        self.f.params.copy_from_slice(&theta[..off]);
        for gm in &mut self.g {
            let np = gm.num_params();
            gm.params.copy_from_slice(&theta[off..off + np]);
            off += np;
        }
        Ok(())
    }
}

/// Errors when the two specs share a footprint label.
pub fn check_separation(f: &LearnerSpec, g: &LearnerSpec, p: usize, k: usize) -> Result<()> {
    let gf = g.footprint(p, k);
    if let Some(shared) = f.footprint(p, k).into_iter().find(|c| gf.contains(c)) {
        return Err(MimalError::Config(format!(
            "f and g share the basis direction `{shared}`; drop it from one of them"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_prediction_is_a_dot_product() {
        let spec = LearnerSpec::linear(Inputs::X, false);
        let m = FittedModel::new(spec, vec![1.0, -1.0], None, [2, 0]).unwrap();
        let x = DMatrix::from_row_slice(1, 2, &[2.0, 3.0]);
        let out = m.predict(&x, &DMatrix::zeros(1, 0)).unwrap();
        assert_eq!(out[0], -1.0);
    }

    #[test]
    fn krr_at_its_anchor_returns_the_coefficient() {
        let spec = LearnerSpec::krr(Inputs::X, 0.1, None);
        let anchor = DMatrix::from_row_slice(1, 2, &[0.3, -1.2]);
        let m = FittedModel::new(spec, vec![1.0], Some(anchor.clone()), [2, 0]).unwrap();
        let out = m.predict(&anchor, &DMatrix::zeros(1, 0)).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_network_with_sigmoid_output_predicts_one_half() {
        let spec = LearnerSpec::mlp(Inputs::X, vec![6, 4], Activation::Sigmoid, 0);
        let n = spec.param_count(3, 0, 0);
        assert_eq!(n, 57);
        let m = FittedModel::new(spec, vec![0.0; n], None, [3, 0]).unwrap();
        let x = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 9.0, 3.0, -7.0]);
        let out = m.predict(&x, &DMatrix::zeros(2, 0)).unwrap();
        assert!(out.iter().all(|v| *v == 0.5));
    }

    #[test]
    fn shared_columns_are_rejected() {
        let f = LearnerSpec::linear(Inputs::X, true);
        let g = LearnerSpec::linear(Inputs::Z, true);
        assert!(check_separation(&f, &g, 2, 1).is_err());
        let f = LearnerSpec::linear(Inputs::X, false);
        assert!(check_separation(&f, &g, 2, 1).is_ok());
        let f = LearnerSpec::krr(Inputs::Xz, 0.1, None);
        assert!(check_separation(&f, &g, 2, 1).is_err());
    }

    #[test]
    fn wrong_parameter_count_is_a_shape_error() {
        let spec = LearnerSpec::linear(Inputs::X, true);
        assert!(matches!(
            FittedModel::new(spec, vec![1.0], None, [2, 0]),
            Err(MimalError::Shape(_))
        ));
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = LearnerSpec::lasso(Inputs::X, Some(0.01), false).with_basis(Basis::CubicBspline {
            num_knots: 20,
            range: [-2.0, 2.0],
        });
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<LearnerSpec>(&s).unwrap(), spec);
    }
}

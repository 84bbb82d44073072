use nalgebra::{DMatrix, DVector};

use super::{basis_features, design_matrix, kernel_matrix, mlp, Activation, Family, FittedModel, ModelBundle};
use crate::data::MultiSourceDataset;
use crate::error::{MimalError, Result};
use crate::rewards::LossKind;
use crate::saddle::SimplexWeights;

/// A model's link function evaluated on a fixed set of rows, as a function of
/// its parameters.
pub(crate) enum Evaluator {
    /// Linear in the parameters: `u = D θ`.
    Dense(DMatrix<f64>),
    Mlp {
        input: DMatrix<f64>,
        sizes: Vec<usize>,
        act: Activation,
    },
}

impl Evaluator {
    pub(crate) fn new(model: &FittedModel, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<Self> {
        let spec = &model.spec;
        Ok(match spec.family {
            Family::LinearBasis | Family::Lasso => Evaluator::Dense(design_matrix(spec, x, z)?.values),
            Family::Krr => {
                let (feats, _) = basis_features(spec, x, z)?;
                let anchors = model
                    .anchors
                    .as_ref()
                    .ok_or_else(|| MimalError::Input("krr model without anchors".into()))?;
                let k = kernel_matrix(&feats, anchors, spec.krr_sigma());
                if spec.include_intercept {
                    let at = k.ncols();
                    Evaluator::Dense(k.insert_column(at, 1.0))
                } else {
                    Evaluator::Dense(k)
                }
            }
            Family::Mlp => {
                let (input, _) = basis_features(spec, x, z)?;
                Evaluator::Mlp {
                    sizes: mlp::layer_sizes(input.ncols(), &spec.hyper.mlp_hidden),
                    input,
                    act: spec.mlp_activation(),
                }
            }
        })
    }

    pub(crate) fn link(&self, params: &[f64]) -> DVector<f64> {
        match self {
            Evaluator::Dense(d) => d * DVector::from_column_slice(params),
            Evaluator::Mlp { input, sizes, act } => {
                DVector::from_vec(mlp::forward(sizes, *act, params, input).output())
            }
        }
    }

    /// `Jᵀ s` where `J` is the Jacobian of the link with respect to the parameters.
    pub(crate) fn vjp(&self, params: &[f64], s: &DVector<f64>) -> DVector<f64> {
        match self {
            Evaluator::Dense(d) => d.tr_mul(s),
            Evaluator::Mlp { input, sizes, act } => {
                let fwd = mlp::forward(sizes, *act, params, input);
                DVector::from_vec(mlp::backward(sizes, *act, params, &fwd, s.as_slice()))
            }
        }
    }
}

fn check_q(q: &SimplexWeights, data: &MultiSourceDataset, bundle: &ModelBundle) -> Result<()> {
    if q.len() != data.num_sources() || bundle.g.len() != data.num_sources() {
        return Err(MimalError::Shape(format!(
            "{} weights and {} adjustment models for {} sources",
            q.len(),
            bundle.g.len(),
            data.num_sources()
        )));
    }
    Ok(())
}

/// `Σ_m q_m · mean_m ℓ(y, f + g_m)`, the parameter-dependent part of the reward.
pub fn weighted_mean_loss(
    bundle: &ModelBundle,
    kind: LossKind,
    q: &SimplexWeights,
    data: &MultiSourceDataset,
) -> Result<f64> {
    check_q(q, data, bundle)?;
    let mut total = 0.0;
    for (m, src) in data.sources.iter().enumerate() {
        kind.check_outcomes(&src.y)?;
        let u = bundle.linear_predictor(m, &src.x, &src.z)?;
        let mean = src.y.iter().zip(u.iter()).map(|(y, u)| kind.value(*y, *u)).sum::<f64>() / src.n() as f64;
        total += q[m] * mean;
    }
    Ok(total)
}

/// Gradient of `Σ_m q_m · mean_m ℓ(y, f(X, Z) + g_m(Z))` with respect to the
/// concatenated parameters `(θ_f, θ_g1, ..., θ_gM)`. Penalty terms (the lasso
/// `ℓ1` norm, the kernel ridge norm) are not included.
pub fn reward_param_grad(
    bundle: &ModelBundle,
    kind: LossKind,
    q: &SimplexWeights,
    data: &MultiSourceDataset,
) -> Result<DVector<f64>> {
    check_q(q, data, bundle)?;
    let nf = bundle.f.num_params();
    let mut grad = DVector::zeros(bundle.num_params());
    let mut off = nf;
    for (m, src) in data.sources.iter().enumerate() {
        kind.check_outcomes(&src.y)?;
        let fe = Evaluator::new(&bundle.f, &src.x, &src.z)?;
        let ge = Evaluator::new(&bundle.g[m], &src.x, &src.z)?;
        let u = fe.link(&bundle.f.params) + ge.link(&bundle.g[m].params);
        let w = q[m] / src.n() as f64;
        let s = DVector::from_iterator(
            src.n(),
            src.y.iter().zip(u.iter()).map(|(y, u)| w * kind.grad(*y, *u)),
        );
        if s.iter().any(|v| !v.is_finite()) {
            return Err(MimalError::Numeric {
                iteration: 0,
                message: format!("non-finite loss derivative on source {m}"),
            });
        }
        let ng = bundle.g[m].num_params();
        if q[m] != 0.0 {
            let gf = fe.vjp(&bundle.f.params, &s);
            let mut head = grad.rows_mut(0, nf);
            head += gf;
            grad.rows_mut(off, ng).copy_from(&ge.vjp(&bundle.g[m].params, &s));
        }
        off += ng;
    }
    Ok(grad)
}

/// Splits a concatenated gradient into its `f` and per-source `g` parts.
pub fn split_param_grad(bundle: &ModelBundle, grad: &DVector<f64>) -> (DVector<f64>, Vec<DVector<f64>>) {
    let nf = bundle.f.num_params();
    let mut off = nf;
    let g = bundle
        .g
        .iter()
        .map(|m| {
            let part = grad.rows(off, m.num_params()).into_owned();
            off += m.num_params();
            part
        })
        .collect();
    (grad.rows(0, nf).into_owned(), g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SourceDataset;
    use crate::learners::{Inputs, LearnerSpec};

    fn one_row(y: f64, x: f64) -> SourceDataset {
        SourceDataset::new(
            0,
            "s",
            DVector::from_vec(vec![y]),
            DMatrix::from_row_slice(1, 1, &[x]),
            DMatrix::zeros(1, 0),
        )
        .unwrap()
    }

    #[test]
    fn single_row_chain_rule() {
        let data = MultiSourceDataset::single(one_row(1.0, 1.0), vec!["x".into()], vec![]).unwrap();
        let f = FittedModel::new(LearnerSpec::linear(Inputs::X, false), vec![0.0], None, [1, 0]).unwrap();
        let g = FittedModel::new(LearnerSpec::linear(Inputs::Z, false), vec![], None, [1, 0]).unwrap();
        let bundle = ModelBundle::new(f, vec![g]).unwrap();
        let grad = reward_param_grad(&bundle, LossKind::SquaredError, &SimplexWeights::uniform(1), &data).unwrap();
        assert_eq!(grad.as_slice(), &[2.0]);
    }

    #[test]
    fn zero_weight_masks_a_source() {
        let data = MultiSourceDataset::new(
            vec![one_row(1.0, 1.0), one_row(3.0, 2.0)],
            vec!["x".into()],
            vec![],
            false,
        )
        .unwrap();
        let f = FittedModel::new(LearnerSpec::linear(Inputs::X, false), vec![0.5], None, [1, 0]).unwrap();
        let g = FittedModel::new(LearnerSpec::intercept_only(), vec![0.0], None, [1, 0]).unwrap();
        let bundle = ModelBundle::new(f, vec![g.clone(), g]).unwrap();
        let q = SimplexWeights::new(vec![0.0, 1.0]).unwrap();
        let grad = reward_param_grad(&bundle, LossKind::SquaredError, &q, &data).unwrap();
        // only source 2: residual 3 - 1 = 2, so dθ = 2·2·2 = 8 and dg2 = 4
        assert_eq!(grad.as_slice(), &[8.0, 0.0, 4.0]);
    }
}

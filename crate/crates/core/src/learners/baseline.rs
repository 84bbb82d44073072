use nalgebra::DVector;

use super::{basis_features, design_matrix, kernel_matrix, Family, FittedModel, Inputs, LearnerSpec};
use crate::data::SourceDataset;
use crate::error::{MimalError, Result};
use crate::linalg::{cholesky_with_retry, soft_threshold};
use crate::rewards::LossKind;

const GRAD_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 500;
const MAX_PROX: usize = 200_000;

fn mean_loss(kind: LossKind, y: &DVector<f64>, u: &DVector<f64>) -> f64 {
    y.iter().zip(u.iter()).map(|(y, u)| kind.value(*y, *u)).sum::<f64>() / y.len() as f64
}

fn fail(message: String) -> MimalError {
    MimalError::Numeric { iteration: 0, message }
}

/// Fits `b(Z)` on one source by maximizing `mean ℓ(y, b(Z))` (minus the
/// family's penalty) over the family.
pub fn fit_baseline(spec: &LearnerSpec, kind: LossKind, source: &SourceDataset) -> Result<FittedModel> {
    spec.validate()?;
    if !matches!(spec.inputs, Inputs::Z | Inputs::None) {
        return Err(MimalError::Config("baseline models read the adjustment block only".into()));
    }
    kind.check_outcomes(&source.y)?;
    let mut model = FittedModel::initial(spec, &source.x, &source.z)?;
    match spec.family {
        Family::LinearBasis => fit_linear(&mut model, kind, source)?,
        Family::Lasso => fit_lasso(&mut model, kind, source)?,
        Family::Krr => fit_krr(&mut model, kind, source)?,
        Family::Mlp => return Err(MimalError::Unsupported("mlp baseline models".into())),
    }
    Ok(model)
}

fn fit_linear(model: &mut FittedModel, kind: LossKind, src: &SourceDataset) -> Result<()> {
    let design = design_matrix(&model.spec, &src.x, &src.z)?;
    model.diagnostics.clamped = design.clamped;
    let d = design.values;
    if d.ncols() == 0 {
        return Ok(());
    }
    let n = src.n() as f64;
    if kind == LossKind::SquaredError {
        let gram = d.tr_mul(&d);
        let (chol, retried) = cholesky_with_retry(&gram, 1e-8)
            .ok_or_else(|| fail("singular baseline normal equations".into()))?;
        if retried {
            model.diagnostics.warnings.push("singular normal equations; solved with ridge 1e-8".into());
        }
        let theta = chol.solve(&d.tr_mul(&src.y));
        model.params = theta.iter().copied().collect();
        model.diagnostics.iterations = 1;
        return Ok(());
    }
    let mut theta = DVector::zeros(d.ncols());
    let mut u = &d * &theta;
    let mut obj = mean_loss(kind, &src.y, &u);
    let rounding = 64.0 * f64::EPSILON * n.sqrt();
    for it in 1..=MAX_NEWTON {
        let lp = DVector::from_iterator(src.n(), src.y.iter().zip(u.iter()).map(|(y, u)| kind.grad(*y, *u)));
        let grad = d.tr_mul(&lp) / n;
        if grad.amax() < GRAD_TOL {
            model.params = theta.iter().copied().collect();
            model.diagnostics.iterations = it;
            return Ok(());
        }
        let mut wd = d.clone();
        for (i, mut row) in wd.row_iter_mut().enumerate() {
            row *= kind.curvature(u[i]);
        }
        let hess = d.tr_mul(&wd) / n;
        let (chol, _) = cholesky_with_retry(&hess, 1e-10).ok_or_else(|| fail("baseline Newton system".into()))?;
        let step = chol.solve(&grad);
        let slope = grad.dot(&step);
        let mut t = 1.0;
        loop {
            let cand = &theta + &step * t;
            let cu = &d * &cand;
            let cobj = mean_loss(kind, &src.y, &cu);
            // slack at the rounding level of an n-term mean, so that steps
            // below it are accepted
            if cobj.is_finite() && cobj >= obj + 1e-4 * t * slope - rounding * obj.abs().max(1.0) {
                theta = cand;
                u = cu;
                obj = cobj;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                model.params = theta.iter().copied().collect();
                model.diagnostics.iterations = it;
                if grad.amax() < 1e-8 {
                    return Ok(());
                }
                return Err(fail(format!("baseline line search stalled at gradient norm {:e}", grad.amax())));
            }
        }
    }
    Err(fail(format!(
        "baseline Newton iterations did not converge in {MAX_NEWTON} steps (separated or degenerate outcomes?)"
    )))
}

fn fit_lasso(model: &mut FittedModel, kind: LossKind, src: &SourceDataset) -> Result<()> {
    let design = design_matrix(&model.spec, &src.x, &src.z)?;
    model.diagnostics.clamped = design.clamped;
    let d = design.values;
    let p = d.ncols();
    if p == 0 {
        return Ok(());
    }
    let n = src.n() as f64;
    let lambda = model.spec.lasso_penalty(src.n());
    let penalized: Vec<bool> = (0..p).map(|j| !(model.spec.include_intercept && j == p - 1)).collect();
    let prox = |v: &DVector<f64>, t: f64| -> DVector<f64> {
        DVector::from_iterator(p, v.iter().enumerate().map(|(j, x)| if penalized[j] { soft_threshold(*x, t) } else { *x }))
    };
    let grad_at = |theta: &DVector<f64>| -> (f64, DVector<f64>) {
        let u = &d * theta;
        let lp = DVector::from_iterator(src.n(), src.y.iter().zip(u.iter()).map(|(y, u)| kind.grad(*y, *u)));
        (mean_loss(kind, &src.y, &u), d.tr_mul(&lp) / n)
    };
    let mut theta = DVector::zeros(p);
    let mut big_l = 1.0;
    let (mut obj, mut grad) = grad_at(&theta);
    for it in 1..=MAX_PROX {
        // backtracking on the quadratic upper model of -mean ℓ
        let (cand, cobj, cgrad) = loop {
            let cand = prox(&(&theta + &grad / big_l), lambda / big_l);
            let (cobj, cgrad) = grad_at(&cand);
            let diff = &cand - &theta;
            if cobj.is_finite() && cobj >= obj + grad.dot(&diff) - 0.5 * big_l * diff.norm_squared() - 1e-15 {
                break (cand, cobj, cgrad);
            }
            big_l *= 2.0;
            if big_l > 1e30 {
                return Err(fail("lasso baseline step size underflow".into()));
            }
        };
        let residual = (&cand - &theta).amax() * big_l;
        theta = cand;
        obj = cobj;
        grad = cgrad;
        if residual < 1e-9 {
            model.params = theta.iter().copied().collect();
            model.diagnostics.iterations = it;
            return Ok(());
        }
        big_l *= 0.9;
    }
    Err(fail("lasso baseline did not reach the optimality tolerance".into()))
}

fn fit_krr(model: &mut FittedModel, kind: LossKind, src: &SourceDataset) -> Result<()> {
    let (feats, _) = basis_features(&model.spec, &src.x, &src.z)?;
    let n = src.n();
    let nf = n as f64;
    let lambda = model.spec.krr_ridge(n);
    let k = kernel_matrix(&feats, &feats, model.spec.krr_sigma());
    let icpt = model.spec.include_intercept;
    let y = &src.y;
    match kind {
        LossKind::SquaredError => {
            let mut a = k.clone();
            for i in 0..n {
                a[(i, i)] += nf * lambda;
            }
            let (chol, _) = cholesky_with_retry(&a, 1e-10).ok_or_else(|| fail("kernel ridge system".into()))?;
            let ay = chol.solve(y);
            let (alpha, b) = if icpt {
                let a1 = chol.solve(&DVector::from_element(n, 1.0));
                let b = ay.sum() / a1.sum();
                (ay - a1 * b, b)
            } else {
                (ay, 0.0)
            };
            model.params = alpha.iter().copied().collect();
            if icpt {
                model.params.push(b);
            }
            model.diagnostics.iterations = 1;
            Ok(())
        }
        LossKind::Logistic => {
            let cbar = kind.curvature_bound().expect("logistic curvature is bounded");
            let mut s = &k * cbar;
            for i in 0..n {
                s[(i, i)] += 2.0 * nf * lambda;
            }
            let (chol, _) = cholesky_with_retry(&s, 1e-10).ok_or_else(|| fail("kernel system".into()))?;
            let mut alpha = DVector::zeros(n);
            let mut b = 0.0;
            for it in 1..=MAX_PROX {
                let u = &k * &alpha + DVector::from_element(n, b);
                let lp = DVector::from_iterator(n, y.iter().zip(u.iter()).map(|(y, u)| kind.grad(*y, *u)));
                let r = &lp - &alpha * (2.0 * nf * lambda);
                let rb = lp.mean();
                if r.lp_norm(1) / nf < 1e-9 && (!icpt || rb.abs() < 1e-9) {
                    model.params = alpha.iter().copied().collect();
                    if icpt {
                        model.params.push(b);
                    }
                    model.diagnostics.iterations = it;
                    return Ok(());
                }
                alpha += chol.solve(&r);
                if icpt {
                    b += rb / cbar;
                }
            }
            Err(fail("kernel logistic baseline did not converge".into()))
        }
        LossKind::Poisson => Err(MimalError::Unsupported("kernel ridge with the poisson loss".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn source(y: Vec<f64>, z: DMatrix<f64>) -> SourceDataset {
        let n = y.len();
        SourceDataset::new(0, "s", DVector::from_vec(y), DMatrix::zeros(n, 1), z).unwrap()
    }

    #[test]
    fn intercept_only_squared_error_is_the_mean() {
        let s = source(vec![1.0, 2.0, 6.0], DMatrix::zeros(3, 0));
        let b = fit_baseline(&LearnerSpec::intercept_only(), LossKind::SquaredError, &s).unwrap();
        assert!((b.params[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_intercept_solves_the_score_equation() {
        let s = source(vec![1.0, 1.0, 1.0, 0.0], DMatrix::zeros(4, 0));
        let b = fit_baseline(&LearnerSpec::intercept_only(), LossKind::Logistic, &s).unwrap();
        assert!((b.params[0] - 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn poisson_intercept_is_log_mean() {
        let s = source(vec![0.0, 2.0, 3.0, 7.0], DMatrix::zeros(4, 0));
        let b = fit_baseline(&LearnerSpec::intercept_only(), LossKind::Poisson, &s).unwrap();
        assert!((b.params[0] - 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn exposure_inputs_are_rejected() {
        let s = source(vec![1.0, 2.0], DMatrix::zeros(2, 0));
        assert!(fit_baseline(&LearnerSpec::linear(Inputs::X, true), LossKind::SquaredError, &s).is_err());
    }

    #[test]
    fn collinear_design_falls_back_to_ridge_with_warning() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let s = source(vec![1.0, 2.0, 3.0], z);
        let b = fit_baseline(&LearnerSpec::linear(Inputs::Z, false), LossKind::SquaredError, &s).unwrap();
        assert_eq!(b.diagnostics.warnings.len(), 1);
    }
}

use nalgebra::DMatrix;

use super::{Basis, Family, Inputs, LearnerSpec};
use crate::error::{MimalError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    /// Number of inputs clamped into the B-spline range.
    pub clamped: usize,
}

fn raw_inputs(spec: &LearnerSpec, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(match spec.inputs {
        Inputs::None => DMatrix::zeros(x.nrows().max(z.nrows()), 0),
        Inputs::X => x.clone(),
        Inputs::Z => z.clone(),
        Inputs::Xz => {
            if x.nrows() != z.nrows() {
                return Err(MimalError::Shape(format!(
                    "X has {} rows but Z has {}",
                    x.nrows(),
                    z.nrows()
                )));
            }
            crate::data::hcat(x, z)
        }
    })
}

/// Feature map without the intercept column.
pub(crate) fn basis_features(
    spec: &LearnerSpec,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, usize)> {
    match &spec.basis {
        Basis::Identity => Ok((raw_inputs(spec, x, z)?, 0)),
        Basis::Interactions => {
            if x.nrows() != z.nrows() {
                return Err(MimalError::Shape("X and Z row counts differ".into()));
            }
            let (n, p, k) = (x.nrows(), x.ncols(), z.ncols());
            let mut out = DMatrix::zeros(n, p + p * k);
            out.columns_mut(0, p).copy_from(x);
            for l in 0..k {
                for j in 0..p {
                    let col = x.column(j).component_mul(&z.column(l));
                    out.set_column(p + l * p + j, &col);
                }
            }
            Ok((out, 0))
        }
        Basis::CubicBspline { num_knots, range } => {
            let raw = raw_inputs(spec, x, z)?;
            let nb = num_knots + 4;
            let mut out = DMatrix::zeros(raw.nrows(), raw.ncols() * nb);
            let mut clamped = 0;
            for j in 0..raw.ncols() {
                let vals: Vec<f64> = raw.column(j).iter().copied().collect();
                let (b, c) = bspline_basis(&vals, *num_knots, *range);
                out.columns_mut(j * nb, nb).copy_from(&b);
                clamped += c;
            }
            Ok((out, clamped))
        }
    }
}

/// The design `[features | 1]` of a linear-in-parameters learner.
pub fn design_matrix(spec: &LearnerSpec, x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DesignMatrix> {
    spec.validate()?;
    let (feats, clamped) = basis_features(spec, x, z)?;
    let values = if spec.include_intercept && spec.family != Family::Mlp {
        let at = feats.ncols();
        feats.insert_column(at, 1.0)
    } else {
        feats
    };
    Ok(DesignMatrix { values, clamped })
}

/// Names of the design columns, built from positional covariate names
/// `x1..xp`, `z1..zk`.
pub fn column_labels(spec: &LearnerSpec, p: usize, k: usize) -> Vec<String> {
    let xs: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    let zs: Vec<String> = (1..=k).map(|j| format!("z{j}")).collect();
    let raw: Vec<String> = match spec.inputs {
        Inputs::None => vec![],
        Inputs::X => xs.clone(),
        Inputs::Z => zs.clone(),
        Inputs::Xz => xs.iter().chain(&zs).cloned().collect(),
    };
    let mut out: Vec<String> = match &spec.basis {
        Basis::Identity => raw,
        Basis::Interactions => {
            let mut v = xs.clone();
            for zl in &zs {
                v.extend(xs.iter().map(|xj| format!("{xj}*{zl}")));
            }
            v
        }
        Basis::CubicBspline { num_knots, .. } => raw
            .iter()
            .flat_map(|c| (0..num_knots + 4).map(move |b| format!("bs({c})[{b}]")))
            .collect(),
    };
    if spec.include_intercept {
        out.push("(intercept)".into());
    }
    out
}

/// Cubic (order-4) B-spline basis on `num_knots` equally spaced interior
/// knots over `range`, with clamped boundary knots. Returns the
/// `len × (num_knots + 4)` basis and the number of clamped inputs.
pub fn bspline_basis(values: &[f64], num_knots: usize, range: [f64; 2]) -> (DMatrix<f64>, usize) {
    const DEG: usize = 3;
    let [a, b] = range;
    let nb = num_knots + DEG + 1;
    let h = (b - a) / (num_knots + 1) as f64;
    let mut knots = vec![a; DEG + 1];
    knots.extend((1..=num_knots).map(|j| a + j as f64 * h));
    knots.extend(std::iter::repeat_n(b, DEG + 1));

    let mut out = DMatrix::zeros(values.len(), nb);
    let mut clamped = 0;
    let mut left = [0.0; DEG + 1];
    let mut right = [0.0; DEG + 1];
    for (row, &v) in values.iter().enumerate() {
        let x = if v < a || v > b {
            clamped += 1;
            v.clamp(a, b)
        } else {
            v
        };
        let span = (DEG + ((x - a) / h).floor() as usize).min(nb - 1);
        let mut n = [0.0; DEG + 1];
        n[0] = 1.0;
        for j in 1..=DEG {
            left[j] = x - knots[span + 1 - j];
            right[j] = knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        for (r, val) in n.iter().enumerate() {
            out[(row, span - DEG + r)] = *val;
        }
    }
    (out, clamped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::LearnerSpec;

    #[test]
    fn identity_and_interactions() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let spec = LearnerSpec::linear(Inputs::X, false);
        let d = design_matrix(&spec, &x, &DMatrix::zeros(2, 0)).unwrap();
        assert_eq!(d.values, x);

        let spec = LearnerSpec::linear(Inputs::Xz, false).with_basis(Basis::Interactions);
        let x = DMatrix::from_row_slice(1, 1, &[2.0]);
        let z = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let d = design_matrix(&spec, &x, &z).unwrap();
        assert_eq!(d.values.row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 6.0, 8.0]);
        assert_eq!(column_labels(&spec, 1, 2), vec!["x1", "x1*z1", "x1*z2"]);
    }

    #[test]
    fn intercept_is_appended_last() {
        let spec = LearnerSpec::linear(Inputs::X, true);
        let x = DMatrix::from_row_slice(2, 1, &[5.0, 6.0]);
        let d = design_matrix(&spec, &x, &DMatrix::zeros(2, 0)).unwrap();
        assert_eq!(d.values, DMatrix::from_row_slice(2, 2, &[5.0, 1.0, 6.0, 1.0]));
    }

    #[test]
    fn twenty_knots_give_twenty_four_columns() {
        let spec = LearnerSpec::linear(Inputs::X, false).with_basis(Basis::CubicBspline {
            num_knots: 20,
            range: [-2.0, 2.0],
        });
        let x = DMatrix::from_row_slice(3, 1, &[-1.0, 0.3, 2.5]);
        let d = design_matrix(&spec, &x, &DMatrix::zeros(3, 0)).unwrap();
        assert_eq!(d.values.ncols(), 24);
        assert_eq!(d.clamped, 1);
    }

    #[test]
    fn bsplines_partition_unity_and_are_nonnegative() {
        let vals: Vec<f64> = (0..=400).map(|i| -2.0 + i as f64 * 0.01).collect();
        let (b, clamped) = bspline_basis(&vals, 20, [-2.0, 2.0]);
        assert_eq!(clamped, 0);
        for r in 0..b.nrows() {
            let row = b.row(r);
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|v| *v >= -1e-15));
        }
        // clamped endpoints select the first and last basis function
        assert!((b[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((b[(400, 23)] - 1.0).abs() < 1e-12);
    }
}

//! Small dense linear-algebra helpers.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Cholesky factor of `a`, retrying with `jitter · (1 + mean diagonal)` added
/// to the diagonal when `a` is not numerically positive definite. The flag
/// reports whether the retry was needed.
pub(crate) fn cholesky_with_retry(a: &DMatrix<f64>, jitter: f64) -> Option<(Cholesky<f64, Dyn>, bool)> {
    if let Some(c) = Cholesky::new(a.clone()) {
        return Some((c, false));
    }
    let n = a.nrows();
    let scale = if n == 0 { 1.0 } else { 1.0 + a.trace() / n as f64 };
    let mut b = a.clone();
    for i in 0..n {
        b[(i, i)] += jitter * scale;
    }
    Cholesky::new(b).map(|c| (c, true))
}

pub(crate) fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration,
/// warm-started from `v`, which is updated in place.
pub(crate) fn top_eigenvalue(a: &DMatrix<f64>, v: &mut DVector<f64>, iters: usize) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    if v.len() != n || v.norm() == 0.0 {
        *v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    }
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = a * &*v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        let new_lambda = next.dot(&(a * &next));
        *v = next;
        if (new_lambda - lambda).abs() <= 1e-10 * new_lambda.abs() {
            return new_lambda;
        }
        lambda = new_lambda;
    }
    lambda
}

/// Stacks matrices with equal column counts on top of each other.
pub(crate) fn vstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = parts.first().map_or(0, |p| p.ncols());
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        out.rows_mut(r, p.nrows()).copy_from(*p);
        r += p.nrows();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_iteration_finds_the_top_eigenvalue() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let want = a.clone().symmetric_eigenvalues().max();
        let mut v = DVector::zeros(0);
        let got = top_eigenvalue(&a, &mut v, 500);
        assert!((got - want).abs() < 1e-8);
    }

    #[test]
    fn singular_matrix_gets_a_jittered_factor() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (_, retried) = cholesky_with_retry(&a, 1e-8).unwrap();
        assert!(retried);
    }
}

use nalgebra::DMatrix;

/// Gaussian kernel `exp(-σ ‖a - b‖²)`.
pub fn rbf(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-sigma * d2).exp()
}

/// `K[i, j] = exp(-σ ‖a_i - b_j‖²)` over the rows of `a` and `b`.
pub fn kernel_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.ncols(), "kernel inputs must have equal widths");
    let na: Vec<f64> = a.row_iter().map(|r| r.norm_squared()).collect();
    let nb: Vec<f64> = b.row_iter().map(|r| r.norm_squared()).collect();
    let mut k = a * b.transpose();
    for j in 0..k.ncols() {
        for i in 0..k.nrows() {
            let d2 = (na[i] + nb[j] - 2.0 * k[(i, j)]).max(0.0);
            k[(i, j)] = (-sigma * d2).exp();
        }
    }
    k
}

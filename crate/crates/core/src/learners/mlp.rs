//! Fully connected networks with manual backpropagation.
//!
//! Parameters are stored layer by layer: the `out × in` weight matrix in
//! row-major order followed by the `out` biases. The network returns the
//! pre-activation of its single output unit; the output nonlinearity is
//! applied only by `FittedModel::predict`.

use nalgebra::DMatrix;
use rand::Rng as _;

use super::Activation;
use crate::rng::rng_from_seed;

pub(crate) fn layer_sizes(input: usize, hidden: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(hidden.len() + 2);
    s.push(input);
    s.extend_from_slice(hidden);
    s.push(1);
    s
}

pub(crate) fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Glorot-uniform weights, zero biases.
pub(crate) fn init_params(sizes: &[usize], seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(param_count(sizes));
    for w in sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            out.push(rng.random_range(-bound..bound));
        }
        out.extend(std::iter::repeat_n(0.0, fan_out));
    }
    out
}

/// Pre- and post-activations of every layer, kept for the backward pass.
pub(crate) struct Forward {
    /// `post[0]` is the input; `post[l]` the activated output of layer `l`.
    post: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
}

impl Forward {
    pub(crate) fn output(&self) -> Vec<f64> {
        self.pre.last().expect("network has an output layer").iter().copied().collect()
    }
}

fn layer<'p>(sizes: &[usize], params: &'p [f64], l: usize) -> (DMatrix<f64>, &'p [f64], usize) {
    let off: usize = sizes.windows(2).take(l).map(|w| w[0] * w[1] + w[1]).sum();
    let (fi, fo) = (sizes[l], sizes[l + 1]);
    let w = DMatrix::from_row_slice(fo, fi, &params[off..off + fi * fo]);
    (w, &params[off + fi * fo..off + fi * fo + fo], off)
}

pub(crate) fn forward(sizes: &[usize], act: Activation, params: &[f64], input: &DMatrix<f64>) -> Forward {
    let layers = sizes.len() - 1;
    let mut post = vec![input.clone()];
    let mut pre = Vec::with_capacity(layers);
    for l in 0..layers {
        let (w, b, _) = layer(sizes, params, l);
        let mut z = &post[l] * w.transpose();
        for (j, bj) in b.iter().enumerate() {
            z.column_mut(j).add_scalar_mut(*bj);
        }
        if l + 1 < layers {
            post.push(z.map(|v| act.apply(v)));
        }
        pre.push(z);
    }
    Forward { post, pre }
}

/// `Jᵀ s`: gradient of `Σ_i s_i · out_i` with respect to the parameters.
pub(crate) fn backward(sizes: &[usize], act: Activation, params: &[f64], fwd: &Forward, s: &[f64]) -> Vec<f64> {
    let layers = sizes.len() - 1;
    let mut grad = vec![0.0; param_count(sizes)];
    let mut delta = DMatrix::from_column_slice(s.len(), 1, s);
    for l in (0..layers).rev() {
        let (w, _, off) = layer(sizes, params, l);
        let (fi, fo) = (sizes[l], sizes[l + 1]);
        // dW = δᵀ A_l (fo × fi), stored row-major
        let dw = delta.transpose() * &fwd.post[l];
        for r in 0..fo {
            for c in 0..fi {
                grad[off + r * fi + c] = dw[(r, c)];
            }
            grad[off + fi * fo + r] = delta.column(r).sum();
        }
        if l > 0 {
            let mut back = &delta * &w;
            back.zip_apply(&fwd.pre[l - 1], |d, z| *d *= act.derivative(z));
            delta = back;
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_six_four_one_network_has_57_parameters() {
        assert_eq!(param_count(&layer_sizes(3, &[6, 4])), 57);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let sizes = layer_sizes(3, &[6, 4]);
        let a = init_params(&sizes, 11);
        assert_eq!(a, init_params(&sizes, 11));
        assert_ne!(a, init_params(&sizes, 12));
        let bound = (6.0f64 / 9.0).sqrt();
        assert!(a[..18].iter().all(|v| v.abs() <= bound));
        assert!(a[18..24].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let sizes = layer_sizes(2, &[3, 2]);
        let params = init_params(&sizes, 3);
        let x = DMatrix::from_row_slice(4, 2, &[0.3, -1.0, 1.2, 0.4, -0.7, 0.9, 2.0, -0.2]);
        let s = [0.5, -1.0, 0.25, 2.0];
        let f = |p: &[f64]| -> f64 {
            let o = forward(&sizes, Activation::Tanh, p, &x).output();
            o.iter().zip(&s).map(|(a, b)| a * b).sum()
        };
        let fwd = forward(&sizes, Activation::Tanh, &params, &x);
        let g = backward(&sizes, Activation::Tanh, &params, &fwd, &s);
        for i in 0..params.len() {
            let mut pp = params.clone();
            let mut pm = params.clone();
            pp[i] += 1e-6;
            pm[i] -= 1e-6;
            let fd = (f(&pp) - f(&pm)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-7 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", g[i]);
        }
    }
}

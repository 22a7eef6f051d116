use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Softmax along `axis`, computed with max-subtraction.
pub fn softmax_axis(input: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= input.ndim() {
        return Err(Error::invalid(
            "softmax_axis",
            format!("axis {axis} out of range for shape {:?}", input.shape()),
        ));
    }
    let shape = input.shape();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let x = input.data();
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let max = (0..len).map(|k| x[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..len {
                let e = (x[at(k)] - max).exp();
                out[at(k)] = e;
                total += e;
            }
            for k in 0..len {
                out[at(k)] /= total;
            }
        }
    }
    Tensor::new(shape, out)
}

/// `elu(x) + 1`: `x + 1` for positive inputs, `exp(x)` otherwise.
#[inline]
pub fn phi_scalar(x: f64) -> f64 {
    if x > 0.0 {
        x + 1.0
    } else {
        x.exp()
    }
}

/// Elementwise [`phi_scalar`]. Strictly positive for finite input.
pub fn phi(x: &Tensor) -> Tensor {
    x.map(phi_scalar)
}

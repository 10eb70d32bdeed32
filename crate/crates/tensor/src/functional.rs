//! Compositions of primitive ops used by the network layers.

use crate::error::Result;
use crate::tensor::Tensor;

/// `x * sigmoid(x)`; smooth, with `silu(0) == 0`.
pub fn silu(x: &Tensor) -> Result<Tensor> {
    x.mul(&x.sigmoid()?)
}

/// Normalizes over the last axis to zero mean and unit variance.
pub fn layer_norm(x: &Tensor, eps: f64) -> Result<Tensor> {
    let last = x.rank() - 1;
    let mu = x.mean(&[last], true)?;
    let centered = x.sub(&mu)?;
    let var = centered.square()?.mean(&[last], true)?;
    centered.div(&var.add_scalar(eps)?.sqrt()?)
}

/// Mean squared difference.
pub fn mse(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.sub(b)?.square()?.mean_all()
}

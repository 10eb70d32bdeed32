//! Parameterized layers and the parameter-visiting protocol shared by every
//! network in the crate.

use dimlight_tensor::functional::layer_norm;
use dimlight_tensor::Tensor;
use rand::Rng;

use crate::error::{Error, Result};

/// Anything that owns trainable tensors. Visiting order is fixed and defines
/// the parameter order used by the optimizer and checkpoints.
pub trait Module {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor));

    fn parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t| out.push((name.to_string(), t.clone())));
        out
    }

    fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.numel());
        n
    }

    /// Replaces every parameter, in visiting order.
    fn load_parameters(&mut self, values: &[Tensor]) -> Result<()> {
        let mut it = values.iter();
        let mut err = None;
        self.visit_mut("", &mut |name, slot| {
            match it.next() {
                Some(v) if v.shape() == slot.shape() => *slot = v.clone(),
                Some(v) => {
                    err.get_or_insert(Error::Shape(format!(
                        "parameter {name}: expected {:?}, got {:?}",
                        slot.shape(),
                        v.shape()
                    )));
                }
                None => {
                    err.get_or_insert(Error::Shape(format!("missing value for parameter {name}")));
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if it.next().is_some() {
            return Err(Error::Shape("more values than parameters".into()));
        }
        Ok(())
    }

    fn zero_grad(&self) {
        self.visit("", &mut |_, t| t.zero_grad());
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::parameter(data, shape).expect("valid parameter shape")
}

/// 3×3 (or any odd) same-padded convolution with bias.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((in_ch * kernel * kernel) as f64).sqrt();
        Conv2d {
            weight: uniform(&[out_ch, in_ch, kernel, kernel], bound, rng),
            bias: uniform(&[out_ch], bound, rng),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let k = self.weight.shape()[2];
        let out_ch = self.weight.shape()[0];
        let y = x.conv2d(&self.weight, 1, k / 2)?;
        Ok(y.add(&self.bias.reshape(&[1, out_ch, 1, 1])?)?)
    }
}

impl Module for Conv2d {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

/// `y = x · W + b` over the last axis; `W` is stored `(in, out)`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Linear {
            weight: uniform(&[input, output], bound, rng),
            bias: uniform(&[output], bound, rng),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.weight)?.add(&self.bias)?)
    }
}

impl Module for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "weight"), &self.weight);
        f(&join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: Tensor,
    pub shift: Tensor,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gain: Tensor::ones(&[dim]).into_parameter(),
            shift: Tensor::zeros(&[dim]).into_parameter(),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(layer_norm(x, Self::EPS)?.mul(&self.gain)?.add(&self.shift)?)
    }
}

impl Module for LayerNorm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "gain"), &self.gain);
        f(&join(prefix, "shift"), &self.shift);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "gain"), &mut self.gain);
        f(&join(prefix, "shift"), &mut self.shift);
    }
}

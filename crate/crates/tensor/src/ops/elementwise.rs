use crate::error::{Result, TensorError};
use crate::shape::{broadcast_shape, broadcast_strides, offsets, sum_to_shape};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Max,
    Min,
}

impl BinaryKind {
    fn name(self) -> &'static str {
        match self {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
            BinaryKind::Pow => "pow",
            BinaryKind::Max => "max",
            BinaryKind::Min => "min",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryKind {
    Neg,
    Exp,
    Log,
    Abs,
    Sqrt,
    Sigmoid,
    Tanh,
}

impl UnaryKind {
    fn name(self) -> &'static str {
        match self {
            UnaryKind::Neg => "neg",
            UnaryKind::Exp => "exp",
            UnaryKind::Log => "log",
            UnaryKind::Abs => "abs",
            UnaryKind::Sqrt => "sqrt",
            UnaryKind::Sigmoid => "sigmoid",
            UnaryKind::Tanh => "tanh",
        }
    }
}

fn domain(op: &'static str, detail: String) -> TensorError {
    TensorError::Domain { op, detail }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-element offsets into `a` and `b` for the broadcast output shape.
fn pair_offsets(a: &[usize], b: &[usize], out: &[usize]) -> (Vec<usize>, Vec<usize>) {
    (
        offsets(out, &broadcast_strides(a, out)),
        offsets(out, &broadcast_strides(b, out)),
    )
}

pub fn binary(kind: BinaryKind, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let op = kind.name();
    let shape = broadcast_shape(op, a.shape(), b.shape())?;
    let (oa, ob) = pair_offsets(a.shape(), b.shape(), &shape);
    let (ad, bd) = (a.data(), b.data());
    let mut out = Vec::with_capacity(oa.len());
    for (&i, &j) in oa.iter().zip(&ob) {
        let (x, y) = (ad[i], bd[j]);
        let v = match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
            BinaryKind::Div => {
                if y == 0.0 {
                    return Err(domain(op, format!("division of {x} by zero")));
                }
                x / y
            }
            BinaryKind::Pow => {
                if x < 0.0 && y.fract() != 0.0 {
                    return Err(domain(op, format!("fractional power {y} of negative {x}")));
                }
                if x == 0.0 && y < 0.0 {
                    return Err(domain(op, format!("negative power {y} of zero")));
                }
                x.powf(y)
            }
            BinaryKind::Max => x.max(y),
            BinaryKind::Min => x.min(y),
        };
        out.push(v);
    }
    let (sa, sb, so) = (a.shape().to_vec(), b.shape().to_vec(), shape.clone());
    Tensor::from_op(
        op,
        out,
        shape,
        vec![a.clone(), b.clone()],
        Box::new(move |g, out, inputs| {
            let (ad, bd) = (inputs[0].data(), inputs[1].data());
            let (oa, ob) = pair_offsets(&sa, &sb, &so);
            let need_a = inputs[0].requires_grad();
            let need_b = inputs[1].requires_grad();
            let mut ga = vec![0.0; if need_a { g.len() } else { 0 }];
            let mut gb = vec![0.0; if need_b { g.len() } else { 0 }];
            for k in 0..g.len() {
                let (x, y) = (ad[oa[k]], bd[ob[k]]);
                let (da, db) = match kind {
                    BinaryKind::Add => (1.0, 1.0),
                    BinaryKind::Sub => (1.0, -1.0),
                    BinaryKind::Mul => (y, x),
                    BinaryKind::Div => (1.0 / y, -x / (y * y)),
                    BinaryKind::Pow => {
                        let da = if need_a {
                            if y == 0.0 {
                                0.0
                            } else {
                                y * x.powf(y - 1.0)
                            }
                        } else {
                            0.0
                        };
                        let db = if need_b && x > 0.0 { out[k] * x.ln() } else { 0.0 };
                        (da, db)
                    }
                    BinaryKind::Max => {
                        if x >= y {
                            (1.0, 0.0)
                        } else {
                            (0.0, 1.0)
                        }
                    }
                    BinaryKind::Min => {
                        if x <= y {
                            (1.0, 0.0)
                        } else {
                            (0.0, 1.0)
                        }
                    }
                };
                if need_a {
                    ga[k] = g[k] * da;
                }
                if need_b {
                    gb[k] = g[k] * db;
                }
            }
            Ok(vec![
                need_a.then(|| sum_to_shape(&ga, &so, &sa)),
                need_b.then(|| sum_to_shape(&gb, &so, &sb)),
            ])
        }),
    )
}

pub fn unary(kind: UnaryKind, a: &Tensor) -> Result<Tensor> {
    let op = kind.name();
    let mut out = Vec::with_capacity(a.numel());
    for &x in a.data() {
        let v = match kind {
            UnaryKind::Neg => -x,
            UnaryKind::Exp => x.exp(),
            UnaryKind::Log => {
                if x <= 0.0 {
                    return Err(domain(op, format!("log of non-positive {x}")));
                }
                x.ln()
            }
            UnaryKind::Abs => x.abs(),
            UnaryKind::Sqrt => {
                if x < 0.0 {
                    return Err(domain(op, format!("sqrt of negative {x}")));
                }
                x.sqrt()
            }
            UnaryKind::Sigmoid => sigmoid(x),
            UnaryKind::Tanh => x.tanh(),
        };
        out.push(v);
    }
    Tensor::from_op(
        op,
        out,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g, out, inputs| {
            let x = inputs[0].data();
            let mut gi = Vec::with_capacity(g.len());
            for k in 0..g.len() {
                let d = match kind {
                    UnaryKind::Neg => -1.0,
                    UnaryKind::Exp => out[k],
                    UnaryKind::Log => 1.0 / x[k],
                    UnaryKind::Abs => {
                        if x[k] > 0.0 {
                            1.0
                        } else if x[k] < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    UnaryKind::Sqrt => 0.5 / out[k],
                    UnaryKind::Sigmoid => out[k] * (1.0 - out[k]),
                    UnaryKind::Tanh => 1.0 - out[k] * out[k],
                };
                gi.push(g[k] * d);
            }
            Ok(vec![Some(gi)])
        }),
    )
}

/// Clamp into `[lo, hi]`; gradient passes only where the input was inside.
pub fn clamp(a: &Tensor, lo: f64, hi: f64) -> Result<Tensor> {
    if lo > hi {
        return Err(domain("clamp", format!("empty interval [{lo}, {hi}]")));
    }
    let out = a.data().iter().map(|x| x.clamp(lo, hi)).collect();
    Tensor::from_op(
        "clamp",
        out,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g, _, inputs| {
            let x = inputs[0].data();
            Ok(vec![Some(
                g.iter()
                    .zip(x)
                    .map(|(g, &x)| if (lo..=hi).contains(&x) { *g } else { 0.0 })
                    .collect(),
            )])
        }),
    )
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        binary(BinaryKind::Add, self, other)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        binary(BinaryKind::Sub, self, other)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        binary(BinaryKind::Mul, self, other)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        binary(BinaryKind::Div, self, other)
    }

    pub fn pow(&self, exponent: &Tensor) -> Result<Tensor> {
        binary(BinaryKind::Pow, self, exponent)
    }

    pub fn maximum(&self, other: &Tensor) -> Result<Tensor> {
        binary(BinaryKind::Max, self, other)
    }

    pub fn minimum(&self, other: &Tensor) -> Result<Tensor> {
        binary(BinaryKind::Min, self, other)
    }

    pub fn add_scalar(&self, s: f64) -> Result<Tensor> {
        self.add(&Tensor::scalar(s))
    }

    pub fn mul_scalar(&self, s: f64) -> Result<Tensor> {
        self.mul(&Tensor::scalar(s))
    }

    pub fn powf(&self, e: f64) -> Result<Tensor> {
        self.pow(&Tensor::scalar(e))
    }

    pub fn neg(&self) -> Result<Tensor> {
        unary(UnaryKind::Neg, self)
    }

    pub fn exp(&self) -> Result<Tensor> {
        unary(UnaryKind::Exp, self)
    }

    pub fn log(&self) -> Result<Tensor> {
        unary(UnaryKind::Log, self)
    }

    pub fn abs(&self) -> Result<Tensor> {
        unary(UnaryKind::Abs, self)
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        unary(UnaryKind::Sqrt, self)
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        unary(UnaryKind::Sigmoid, self)
    }

    pub fn tanh(&self) -> Result<Tensor> {
        unary(UnaryKind::Tanh, self)
    }

    pub fn square(&self) -> Result<Tensor> {
        self.mul(self)
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Tensor> {
        clamp(self, lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64], s: &[usize]) -> Tensor {
        Tensor::new(v.to_vec(), s).unwrap()
    }

    #[test]
    fn mul_and_pow_values() {
        assert_eq!(t(&[2.0, 3.0], &[2]).mul(&t(&[4.0, 5.0], &[2])).unwrap().data(), &[8.0, 15.0]);
        assert_eq!(t(&[0.25], &[1]).powf(0.5).unwrap().data(), &[0.5]);
    }

    #[test]
    fn broadcast_add_shape() {
        let a = t(&[1.0, 2.0], &[2, 1]);
        let b = t(&[10.0, 20.0, 30.0], &[1, 3]);
        let c = a.add(&b).unwrap();
        assert_eq!(c.shape(), &[2, 3]);
        assert_eq!(c.data(), &[11.0, 21.0, 31.0, 12.0, 22.0, 32.0]);
    }

    #[test]
    fn domain_violations() {
        assert!(matches!(
            t(&[1.0], &[1]).div(&t(&[0.0], &[1])),
            Err(TensorError::Domain { .. })
        ));
        assert!(matches!(t(&[0.0], &[1]).log(), Err(TensorError::Domain { .. })));
        assert!(matches!(t(&[-1.0], &[1]).powf(0.5), Err(TensorError::Domain { .. })));
        assert!(t(&[-2.0], &[1]).powf(2.0).is_ok());
        assert!(t(&[1.0, 2.0], &[2]).add(&t(&[1.0, 2.0, 3.0], &[3])).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        assert!(matches!(t(&[1000.0], &[1]).exp(), Err(TensorError::NonFinite { .. })));
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        let s = t(&[-800.0, 0.0, 800.0], &[3]).sigmoid().unwrap();
        assert_eq!(s.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn stop_gradient_blocks_product_factor() {
        let x = Tensor::parameter(vec![3.0], &[1]).unwrap();
        let y = x.mul(&x.stop_gradient()).unwrap().sum_all().unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![3.0]);
    }

    #[test]
    fn broadcast_gradient_is_summed() {
        let a = Tensor::parameter(vec![1.0, 2.0], &[2, 1]).unwrap();
        let b = Tensor::parameter(vec![1.0, 1.0, 1.0], &[1, 3]).unwrap();
        a.mul(&b).unwrap().sum_all().unwrap().backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![3.0, 3.0]);
        assert_eq!(b.grad().unwrap(), vec![3.0, 3.0, 3.0]);
    }
}

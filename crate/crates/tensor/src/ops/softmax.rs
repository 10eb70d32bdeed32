use crate::error::Result;
use crate::shape::check_axis;
use crate::tensor::Tensor;

/// Numerically stable softmax along `axis` (max-subtracted).
pub fn softmax(a: &Tensor, axis: usize) -> Result<Tensor> {
    check_axis("softmax", axis, a.rank())?;
    let len = a.shape()[axis];
    let inner: usize = a.shape()[axis + 1..].iter().product();
    let outer = a.numel() / (len * inner);
    let x = a.data();
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let m = (0..len).map(|k| x[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for k in 0..len {
                let e = (x[at(k)] - m).exp();
                out[at(k)] = e;
                z += e;
            }
            for k in 0..len {
                out[at(k)] /= z;
            }
        }
    }
    Tensor::from_op(
        "softmax",
        out,
        a.shape().to_vec(),
        vec![a.clone()],
        Box::new(move |g, y, _| {
            let mut gi = vec![0.0; g.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| (o * len + k) * inner + i;
                    let dot: f64 = (0..len).map(|k| g[at(k)] * y[at(k)]).sum();
                    for k in 0..len {
                        gi[at(k)] = y[at(k)] * (g[at(k)] - dot);
                    }
                }
            }
            Ok(vec![Some(gi)])
        }),
    )
}

impl Tensor {
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        softmax(self, axis)
    }
}

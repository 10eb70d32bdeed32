use crate::error::Result;
use crate::shape::{broadcast_strides, check_axis, numel, offsets};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    Max,
}

/// Reduce over `axes`. An empty axis list returns the input unchanged.
pub fn reduce(kind: ReduceKind, a: &Tensor, axes: &[usize], keepdim: bool) -> Result<Tensor> {
    let op = match kind {
        ReduceKind::Sum => "sum",
        ReduceKind::Mean => "mean",
        ReduceKind::Max => "max",
    };
    let rank = a.rank();
    let mut reduced = vec![false; rank];
    for &ax in axes {
        check_axis(op, ax, rank)?;
        reduced[ax] = true;
    }
    if !reduced.iter().any(|&r| r) {
        return Ok(a.clone());
    }
    let kept: Vec<usize> = a
        .shape()
        .iter()
        .zip(&reduced)
        .map(|(&d, &r)| if r { 1 } else { d })
        .collect();
    let out_shape: Vec<usize> = if keepdim {
        kept.clone()
    } else {
        a.shape()
            .iter()
            .zip(&reduced)
            .filter(|(_, &r)| !r)
            .map(|(&d, _)| d)
            .collect()
    };
    let count = (a.numel() / numel(&kept)) as f64;
    let map = offsets(a.shape(), &broadcast_strides(&kept, a.shape()));
    let n_out = numel(&kept);

    let (out, argmax) = match kind {
        ReduceKind::Sum | ReduceKind::Mean => {
            let mut out = vec![0.0; n_out];
            for (x, &o) in a.data().iter().zip(&map) {
                out[o] += x;
            }
            if kind == ReduceKind::Mean {
                out.iter_mut().for_each(|v| *v /= count);
            }
            (out, Vec::new())
        }
        ReduceKind::Max => {
            let mut out = vec![f64::NEG_INFINITY; n_out];
            let mut arg = vec![0usize; n_out];
            for (i, (&x, &o)) in a.data().iter().zip(&map).enumerate() {
                if x > out[o] {
                    out[o] = x;
                    arg[o] = i;
                }
            }
            (out, arg)
        }
    };

    let in_shape = a.shape().to_vec();
    Tensor::from_op(
        op,
        out,
        out_shape,
        vec![a.clone()],
        Box::new(move |g, _, _| {
            let mut gi = vec![0.0; numel(&in_shape)];
            match kind {
                ReduceKind::Sum | ReduceKind::Mean => {
                    let scale = if kind == ReduceKind::Mean { 1.0 / count } else { 1.0 };
                    for (v, &o) in gi.iter_mut().zip(&map) {
                        *v = g[o] * scale;
                    }
                }
                ReduceKind::Max => {
                    for (o, &i) in argmax.iter().enumerate() {
                        gi[i] += g[o];
                    }
                }
            }
            Ok(vec![Some(gi)])
        }),
    )
}

impl Tensor {
    pub fn sum(&self, axes: &[usize], keepdim: bool) -> Result<Tensor> {
        reduce(ReduceKind::Sum, self, axes, keepdim)
    }

    pub fn mean(&self, axes: &[usize], keepdim: bool) -> Result<Tensor> {
        reduce(ReduceKind::Mean, self, axes, keepdim)
    }

    pub fn max(&self, axes: &[usize], keepdim: bool) -> Result<Tensor> {
        reduce(ReduceKind::Max, self, axes, keepdim)
    }

    fn all_axes(&self) -> Vec<usize> {
        (0..self.rank()).collect()
    }

    /// Sum of every element as a rank-0 tensor.
    pub fn sum_all(&self) -> Result<Tensor> {
        if self.rank() == 0 {
            return Ok(self.clone());
        }
        self.sum(&self.all_axes(), false)
    }

    pub fn mean_all(&self) -> Result<Tensor> {
        if self.rank() == 0 {
            return Ok(self.clone());
        }
        self.mean(&self.all_axes(), false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_over_everything() {
        let t = Tensor::new(vec![1.0, 2.0, 3.0, 6.0], &[4]).unwrap();
        assert_eq!(t.mean_all().unwrap().item().unwrap(), 3.0);
    }

    #[test]
    fn channel_max_per_pixel() {
        // (2, 2, 3): two rows, two pixels, three channels
        let v = vec![0.1, 0.5, 0.3, 0.9, 0.2, 0.0, 0.4, 0.4, 0.7, 0.0, 0.0, 0.05];
        let t = Tensor::new(v, &[2, 2, 3]).unwrap();
        let m = t.max(&[2], false).unwrap();
        assert_eq!(m.shape(), &[2, 2]);
        assert_eq!(m.data(), &[0.5, 0.9, 0.7, 0.05]);
    }

    #[test]
    fn empty_axes_is_identity() {
        let t = Tensor::new(vec![1.0, 2.0], &[2]).unwrap();
        let s = t.sum(&[], false).unwrap();
        assert_eq!(s.data(), t.data());
        assert_eq!(s.shape(), t.shape());
    }

    #[test]
    fn invalid_axis() {
        let t = Tensor::new(vec![1.0, 2.0], &[2]).unwrap();
        assert!(t.sum(&[1], false).is_err());
    }

    #[test]
    fn keepdim_shapes_and_middle_axis() {
        let t = Tensor::new((0..24).map(f64::from).collect(), &[2, 3, 4]).unwrap();
        let s = t.sum(&[1], true).unwrap();
        assert_eq!(s.shape(), &[2, 1, 4]);
        assert_eq!(&s.data()[..4], &[12.0, 15.0, 18.0, 21.0]);
    }

    #[test]
    fn max_gradient_routes_to_argmax() {
        let x = Tensor::parameter(vec![1.0, 5.0, 2.0], &[3]).unwrap();
        x.max(&[0], false).unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 1.0, 0.0]);
    }
}

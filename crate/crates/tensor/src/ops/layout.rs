//! Shape-only ops: reshape, permute, slice and gather along the last axis.

use crate::error::{invalid, Result, TensorError};
use crate::shape::{check_axis, numel, offsets, strides};
use crate::tensor::Tensor;

pub fn reshape(a: &Tensor, shape: &[usize]) -> Result<Tensor> {
    if numel(shape) != a.numel() || shape.iter().any(|&d| d == 0) {
        return Err(TensorError::ShapeMismatch {
            op: "reshape",
            lhs: a.shape().to_vec(),
            rhs: shape.to_vec(),
        });
    }
    Tensor::from_op(
        "reshape",
        a.to_vec(),
        shape.to_vec(),
        vec![a.clone()],
        Box::new(|g, _, _| Ok(vec![Some(g.to_vec())])),
    )
}

/// Output axis `i` is input axis `perm[i]`.
pub fn permute(a: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let rank = a.rank();
    let mut seen = vec![false; rank];
    if perm.len() != rank {
        return Err(invalid("permute", format!("{perm:?} for rank {rank}")));
    }
    for &p in perm {
        check_axis("permute", p, rank)?;
        if std::mem::replace(&mut seen[p], true) {
            return Err(invalid("permute", format!("repeated axis in {perm:?}")));
        }
    }
    let in_strides = strides(a.shape());
    let out_shape: Vec<usize> = perm.iter().map(|&p| a.shape()[p]).collect();
    let gather_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let src = offsets(&out_shape, &gather_strides);
    let out = src.iter().map(|&i| a.data()[i]).collect();
    Tensor::from_op(
        "permute",
        out,
        out_shape,
        vec![a.clone()],
        Box::new(move |g, _, _| {
            let mut gi = vec![0.0; g.len()];
            for (k, &i) in src.iter().enumerate() {
                gi[i] = g[k];
            }
            Ok(vec![Some(gi)])
        }),
    )
}

/// `len` entries starting at `start` along `axis`.
pub fn slice(a: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    check_axis("slice", axis, a.rank())?;
    let extent = a.shape()[axis];
    if len == 0 || start + len > extent {
        return Err(invalid(
            "slice",
            format!("range {start}..{} on axis of extent {extent}", start + len),
        ));
    }
    let outer: usize = a.shape()[..axis].iter().product();
    let inner: usize = a.shape()[axis + 1..].iter().product();
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * extent + start) * inner;
        out.extend_from_slice(&a.data()[base..base + len * inner]);
    }
    let mut shape = a.shape().to_vec();
    shape[axis] = len;
    let in_len = a.numel();
    Tensor::from_op(
        "slice",
        out,
        shape,
        vec![a.clone()],
        Box::new(move |g, _, _| {
            let mut gi = vec![0.0; in_len];
            for o in 0..outer {
                let base = (o * extent + start) * inner;
                gi[base..base + len * inner]
                    .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            Ok(vec![Some(gi)])
        }),
    )
}

/// Gathers `indices` from the last axis; repeated indices are allowed and
/// their gradients add up.
pub fn take_last(a: &Tensor, indices: &[usize]) -> Result<Tensor> {
    let rank = a.rank();
    if rank == 0 {
        return Err(invalid("take", "rank-0 input"));
    }
    let extent = a.shape()[rank - 1];
    if indices.is_empty() {
        return Err(invalid("take", "empty index list"));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= extent) {
        return Err(invalid("take", format!("index {bad} out of range {extent}")));
    }
    let outer = a.numel() / extent;
    let m = indices.len();
    let mut out = Vec::with_capacity(outer * m);
    for o in 0..outer {
        let row = &a.data()[o * extent..(o + 1) * extent];
        out.extend(indices.iter().map(|&i| row[i]));
    }
    let mut shape = a.shape().to_vec();
    shape[rank - 1] = m;
    let idx = indices.to_vec();
    Tensor::from_op(
        "take",
        out,
        shape,
        vec![a.clone()],
        Box::new(move |g, _, _| {
            let mut gi = vec![0.0; outer * extent];
            for o in 0..outer {
                for (k, &i) in idx.iter().enumerate() {
                    gi[o * extent + i] += g[o * m + k];
                }
            }
            Ok(vec![Some(gi)])
        }),
    )
}

/// Concatenation along `axis`; all other extents must agree.
pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| invalid("concat", "no inputs"))?;
    check_axis("concat", axis, first.rank())?;
    for p in parts {
        let same = p.rank() == first.rank()
            && p.shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(d, (a, b))| d == axis || a == b);
        if !same {
            return Err(TensorError::ShapeMismatch {
                op: "concat",
                lhs: first.shape().to_vec(),
                rhs: p.shape().to_vec(),
            });
        }
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let widths: Vec<usize> = parts.iter().map(|p| p.shape()[axis] * inner).collect();
    let total: usize = widths.iter().sum();
    let mut out = Vec::with_capacity(outer * total);
    for o in 0..outer {
        for (p, &w) in parts.iter().zip(&widths) {
            out.extend_from_slice(&p.data()[o * w..(o + 1) * w]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total / inner;
    Tensor::from_op(
        "concat",
        out,
        shape,
        parts.to_vec(),
        Box::new(move |g, _, inputs| {
            let mut grads: Vec<Vec<f64>> = widths.iter().map(|w| Vec::with_capacity(outer * w)).collect();
            for o in 0..outer {
                let mut at = o * total;
                for (gp, &w) in grads.iter_mut().zip(&widths) {
                    gp.extend_from_slice(&g[at..at + w]);
                    at += w;
                }
            }
            Ok(grads
                .into_iter()
                .zip(inputs)
                .map(|(g, t)| t.requires_grad().then_some(g))
                .collect())
        }),
    )
}

impl Tensor {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        reshape(self, shape)
    }

    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        permute(self, perm)
    }

    /// Swap the last two axes.
    pub fn transpose_last(&self) -> Result<Tensor> {
        let r = self.rank();
        if r < 2 {
            return Err(invalid("transpose", "rank below 2"));
        }
        let mut perm: Vec<usize> = (0..r).collect();
        perm.swap(r - 1, r - 2);
        self.permute(&perm)
    }

    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        slice(self, axis, start, len)
    }

    pub fn take_last(&self, indices: &[usize]) -> Result<Tensor> {
        take_last(self, indices)
    }
}

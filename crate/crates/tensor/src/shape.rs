//! Shape arithmetic shared by the element-wise and reduction kernels.

use crate::error::{Result, TensorError};

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Standard trailing-dimension broadcasting.
pub fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(TensorError::ShapeMismatch {
                    op,
                    lhs: a.to_vec(),
                    rhs: b.to_vec(),
                })
            }
        };
    }
    Ok(out)
}

/// Strides that read `src` (right-aligned against `target`) with zero stride on
/// broadcast axes. `src` must be broadcast-compatible with `target`.
pub fn broadcast_strides(src: &[usize], target: &[usize]) -> Vec<usize> {
    let own = strides(src);
    let offset = target.len() - src.len();
    (0..target.len())
        .map(|i| {
            if i < offset || src[i - offset] == 1 {
                0
            } else {
                own[i - offset]
            }
        })
        .collect()
}

/// Maps every linear index of `target` to the offset given by `strides`.
/// Walks the index space with an odometer instead of dividing per element.
pub fn offsets(target: &[usize], strides: &[usize]) -> Vec<usize> {
    let n = numel(target);
    let mut out = Vec::with_capacity(n);
    if target.is_empty() {
        out.push(0);
        return out;
    }
    let rank = target.len();
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        out.push(off);
        let mut d = rank;
        while d > 0 {
            d -= 1;
            idx[d] += 1;
            off += strides[d];
            if idx[d] < target[d] {
                break;
            }
            off -= strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    out
}

/// Sum a gradient laid out in `from` down to the (broadcast-compatible) shape `to`.
pub fn sum_to_shape(grad: &[f64], from: &[usize], to: &[usize]) -> Vec<f64> {
    if from == to {
        return grad.to_vec();
    }
    let st = broadcast_strides(to, from);
    let mut out = vec![0.0; numel(to)];
    for (g, o) in grad.iter().zip(offsets(from, &st)) {
        out[o] += g;
    }
    out
}

pub fn check_axis(op: &'static str, axis: usize, rank: usize) -> Result<()> {
    if axis >= rank {
        Err(TensorError::InvalidAxis { op, axis, rank })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shape("t", &[2, 1], &[1, 3]).unwrap(), vec![2, 3]);
        assert_eq!(broadcast_shape("t", &[4, 2, 3], &[3]).unwrap(), vec![4, 2, 3]);
        assert_eq!(broadcast_shape("t", &[], &[5]).unwrap(), vec![5]);
        assert!(broadcast_shape("t", &[2, 3], &[3, 2]).is_err());
    }

    #[test]
    fn offsets_follow_row_major_order() {
        let st = broadcast_strides(&[2, 1], &[2, 3]);
        assert_eq!(offsets(&[2, 3], &st), vec![0, 0, 0, 1, 1, 1]);
        let st = broadcast_strides(&[3], &[2, 3]);
        assert_eq!(offsets(&[2, 3], &st), vec![0, 1, 2, 0, 1, 2]);
    }

    #[test]
    fn sum_to_shape_collapses_broadcast_axes() {
        let g = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(sum_to_shape(&g, &[2, 3], &[1, 3]), vec![5.0, 7.0, 9.0]);
        assert_eq!(sum_to_shape(&g, &[2, 3], &[2, 1]), vec![6.0, 15.0]);
        assert_eq!(sum_to_shape(&g, &[2, 3], &[]), vec![21.0]);
    }
}

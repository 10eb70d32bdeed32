use crate::error::{invalid, Result, TensorError};
use crate::tensor::Tensor;

#[derive(Clone, Copy)]
struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    /// Output positions `lo..hi` along one axis for which `out*stride + tap - pad`
    /// lands inside `0..extent`.
    fn valid(&self, tap: usize, extent: usize, out_extent: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let shift = tap as isize - self.pad as isize;
        let lo = if shift >= 0 { 0 } else { ((-shift) + s - 1) / s };
        let last = extent as isize - 1 - shift;
        let hi = if last < 0 { 0 } else { (last / s + 1).min(out_extent as isize) };
        (lo as usize, hi.max(lo) as usize)
    }

    /// Visits every (input offset, weight offset, output offset) triple.
    fn for_each(&self, mut f: impl FnMut(usize, usize, usize)) {
        let g = *self;
        for n in 0..g.n {
            for o in 0..g.o {
                for c in 0..g.c {
                    for ky in 0..g.k {
                        let (ylo, yhi) = g.valid(ky, g.h, g.ho);
                        for kx in 0..g.k {
                            let (xlo, xhi) = g.valid(kx, g.w, g.wo);
                            let wi = ((o * g.c + c) * g.k + ky) * g.k + kx;
                            for oy in ylo..yhi {
                                let iy = oy * g.stride + ky - g.pad;
                                let in_row = ((n * g.c + c) * g.h + iy) * g.w;
                                let out_row = ((n * g.o + o) * g.ho + oy) * g.wo;
                                for ox in xlo..xhi {
                                    let ix = ox * g.stride + kx - g.pad;
                                    f(in_row + ix, wi, out_row + ox);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation of `x` (N, C, H, W) with `w` (O, C, K, K), odd K,
/// zero padding.
pub fn conv2d(x: &Tensor, w: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let mismatch = || TensorError::ShapeMismatch {
        op: "conv2d",
        lhs: x.shape().to_vec(),
        rhs: w.shape().to_vec(),
    };
    if x.rank() != 4 || w.rank() != 4 {
        return Err(mismatch());
    }
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, ci, k, k2) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    if ci != c || k != k2 {
        return Err(mismatch());
    }
    if k % 2 == 0 {
        return Err(invalid("conv2d", format!("even kernel size {k}")));
    }
    if stride == 0 {
        return Err(invalid("conv2d", "stride must be positive"));
    }
    if k > h + 2 * padding || k > wd + 2 * padding {
        return Err(invalid(
            "conv2d",
            format!("kernel {k} larger than padded input {h}x{wd} (+{padding})"),
        ));
    }
    let ho = (h + 2 * padding - k) / stride + 1;
    let wo = (wd + 2 * padding - k) / stride + 1;
    let geo = Geometry {
        n,
        c,
        h,
        w: wd,
        o,
        k,
        stride,
        pad: padding,
        ho,
        wo,
    };
    let mut out = vec![0.0; n * o * ho * wo];
    {
        let (xd, wdat) = (x.data(), w.data());
        geo.for_each(|xi, wi, oi| out[oi] += wdat[wi] * xd[xi]);
    }
    Tensor::from_op(
        "conv2d",
        out,
        vec![n, o, ho, wo],
        vec![x.clone(), w.clone()],
        Box::new(move |g, _, inputs| {
            let (x, w) = (&inputs[0], &inputs[1]);
            let gx = x.requires_grad().then(|| {
                let mut gx = vec![0.0; x.numel()];
                let wd = w.data();
                geo.for_each(|xi, wi, oi| gx[xi] += wd[wi] * g[oi]);
                gx
            });
            let gw = w.requires_grad().then(|| {
                let mut gw = vec![0.0; w.numel()];
                let xd = x.data();
                geo.for_each(|xi, wi, oi| gw[wi] += xd[xi] * g[oi]);
                gw
            });
            Ok(vec![gx, gw])
        }),
    )
}

impl Tensor {
    pub fn conv2d(&self, weight: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
        conv2d(self, weight, stride, padding)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_kernel_is_identity() {
        let x = Tensor::new((0..25).map(|v| v as f64 * 0.1).collect(), &[1, 1, 5, 5]).unwrap();
        let w = Tensor::ones(&[1, 1, 1, 1]);
        let y = x.conv2d(&w, 1, 0).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn averaging_kernel_keeps_constant_interior() {
        let x = Tensor::full(&[1, 1, 6, 6], 0.7);
        let w = Tensor::full(&[1, 1, 3, 3], 1.0 / 9.0);
        let y = x.conv2d(&w, 1, 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, 6, 6]);
        for r in 1..5 {
            for c in 1..5 {
                assert!((y.data()[r * 6 + c] - 0.7).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn output_size_with_stride() {
        let x = Tensor::zeros(&[1, 2, 7, 9]);
        let w = Tensor::zeros(&[4, 2, 3, 3]);
        let y = x.conv2d(&w, 2, 1).unwrap();
        assert_eq!(y.shape(), &[1, 4, 4, 5]);
    }

    #[test]
    fn rejects_oversized_and_even_kernels() {
        let x = Tensor::zeros(&[1, 1, 2, 2]);
        assert!(x.conv2d(&Tensor::zeros(&[1, 1, 5, 5]), 1, 0).is_err());
        assert!(x.conv2d(&Tensor::zeros(&[1, 1, 2, 2]), 1, 0).is_err());
        assert!(x.conv2d(&Tensor::zeros(&[1, 2, 1, 1]), 1, 0).is_err());
    }
}

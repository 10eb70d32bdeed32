//! Training objectives. Every squared norm is mean-reduced so the weights do
//! not depend on crop size. Image tensors are `(1, 3, H, W)`.

use dimlight_tensor::functional::mse;
use dimlight_tensor::Tensor;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub w_r: f64,
    pub w_l: f64,
    pub w_con: f64,
    pub w_enh: f64,
    pub w_reg: f64,
    pub w_exp: f64,
    pub w_col: f64,
    /// Exposure standard `E`.
    pub e_target: f64,
    /// Side of the square patches used by the consistency and exposure terms.
    pub patch_size: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_r: 1.0,
            w_l: 1.0,
            w_con: 0.1,
            w_enh: 1.0,
            w_reg: 1.0,
            w_exp: 1.0,
            w_col: 0.5,
            e_target: 0.6,
            patch_size: 16,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_r, self.w_l, self.w_con, self.w_enh, self.w_reg, self.w_exp, self.w_col];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be finite and nonnegative: {self:?}")));
        }
        if !(self.e_target > 0.0 && self.e_target < 1.0) {
            return Err(Error::Config(format!("exposure target {} outside (0, 1)", self.e_target)));
        }
        if self.patch_size == 0 {
            return Err(Error::Config("patch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Scalar values of each term, for logging.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_r: f64,
    pub l_reg: f64,
    pub l_l: f64,
    pub l_con: f64,
    pub l_enh: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// `w_r·l_r + w_l·l_l + w_con·l_con + w_enh·l_enh`.
    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.w_r * self.l_r + w.w_l * self.l_l + w.w_con * self.l_con + w.w_enh * self.l_enh
    }
}

/// Differentiable terms before weighting. `l_r` already contains
/// `w_reg · l_reg`.
#[derive(Debug, Clone)]
pub struct LossTerms {
    pub l_r: Tensor,
    pub l_reg: Tensor,
    pub l_l: Tensor,
    pub l_con: Tensor,
    pub l_enh: Tensor,
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{op}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn image_dims(op: &str, t: &Tensor) -> Result<(usize, usize, usize)> {
    match t.shape() {
        &[1, c, h, w] => Ok((c, h, w)),
        s => Err(Error::Shape(format!("{op}: expected (1, C, H, W), got {s:?}"))),
    }
}

/// `mean((r1 − r2)²) + w_reg · reg`.
pub fn loss_r(r1: &Tensor, r2: &Tensor, reg: &Tensor, w_reg: f64) -> Result<Tensor> {
    same_shape("loss_r", r1, r2)?;
    Ok(mse(r1, r2)?.add(&reg.mul_scalar(w_reg)?)?)
}

/// `mean(((r1 − r2) − (m1 − m2))²)`, where `m1`, `m2` are the two masked
/// views of the reflectance computed on the full crop.
pub fn loss_reg(r1: &Tensor, r2: &Tensor, m1: &Tensor, m2: &Tensor) -> Result<Tensor> {
    for t in [r2, m1, m2] {
        same_shape("loss_reg", r1, t)?;
    }
    Ok(r1.sub(r2)?.sub(&m1.sub(m2)?)?.square()?.mean_all()?)
}

/// Mean absolute forward difference along the two spatial axes, with the
/// replicated edge contributing zero: `Σ|Δx l| / n + Σ|Δy l| / n`.
pub fn total_variation(l: &Tensor) -> Result<Tensor> {
    let (_, h, w) = image_dims("total_variation", l)?;
    let n = l.numel() as f64;
    let mut tv = Tensor::scalar(0.0);
    if w > 1 {
        let dx = l.slice(3, 1, w - 1)?.sub(&l.slice(3, 0, w - 1)?)?;
        tv = tv.add(&dx.abs()?.sum_all()?.mul_scalar(1.0 / n)?)?;
    }
    if h > 1 {
        let dy = l.slice(2, 1, h - 1)?.sub(&l.slice(2, 0, h - 1)?)?;
        tv = tv.add(&dy.abs()?.sum_all()?.mul_scalar(1.0 / n)?)?;
    }
    Ok(tv)
}

/// Per-pixel channel maximum, `(1, 1, H, W)`.
pub fn initial_illumination(d1: &Tensor) -> Result<Tensor> {
    image_dims("initial_illumination", d1)?;
    Ok(d1.max(&[1], true)?)
}

/// The four illumination terms, in order: reconstruction, closeness to the
/// channel-max illumination, reflectance consistency against `d1 / l1`, and
/// total variation. With `stop` set the third term sees `l1` as a constant.
pub fn loss_l_terms(r1: &Tensor, l1: &Tensor, d1: &Tensor, stop: bool) -> Result<[Tensor; 4]> {
    same_shape("loss_l", r1, l1)?;
    same_shape("loss_l", r1, d1)?;
    if l1.data().iter().any(|&v| v <= 0.0) {
        return Err(Error::Shape("loss_l: illumination must be strictly positive".into()));
    }
    let d1 = d1.stop_gradient();
    let l0 = initial_illumination(&d1)?;
    let recon = mse(&r1.mul(l1)?, &d1)?;
    let prior = l1.sub(&l0)?.square()?.mean_all()?;
    let denom = if stop { l1.stop_gradient() } else { l1.clone() };
    let consist = mse(r1, &d1.div(&denom)?)?;
    Ok([recon, prior, consist, total_variation(l1)?])
}

pub fn loss_l(r1: &Tensor, l1: &Tensor, d1: &Tensor) -> Result<Tensor> {
    let [a, b, c, d] = loss_l_terms(r1, l1, d1, true)?;
    Ok(a.add(&b)?.add(&c)?.add(&d)?)
}

/// Channel-mean intensity averaged over `patch`×`patch` tiles: `(gh, gw)`.
pub fn patch_intensity(img: &Tensor, patch: usize) -> Result<Tensor> {
    let (c, h, w) = image_dims("patch_intensity", img)?;
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::Shape(format!("{h}x{w} is not tiled by {patch}-pixel patches")));
    }
    let (gh, gw) = (h / patch, w / patch);
    Ok(img.reshape(&[c, gh, patch, gw, patch])?.mean(&[0, 2, 4], false)?)
}

/// `mean_i Σ_{j ∈ N4(i)} (|Ē_i − Ē_j| − |D̄_i − D̄_j|)` over the patch grid.
/// Not bounded below by zero.
pub fn loss_con(i_en: &Tensor, d1: &Tensor, patch: usize) -> Result<Tensor> {
    same_shape("loss_con", i_en, d1)?;
    let e = patch_intensity(i_en, patch)?;
    let d = patch_intensity(&d1.stop_gradient(), patch)?;
    let (gh, gw) = (e.shape()[0], e.shape()[1]);
    let k = (gh * gw) as f64;
    let edge_sum = |axis: usize, len: usize| -> Result<Tensor> {
        let de = e.slice(axis, 1, len - 1)?.sub(&e.slice(axis, 0, len - 1)?)?.abs()?;
        let dd = d.slice(axis, 1, len - 1)?.sub(&d.slice(axis, 0, len - 1)?)?.abs()?;
        Ok(de.sub(&dd)?.sum_all()?)
    };
    let mut total = Tensor::scalar(0.0);
    if gw > 1 {
        total = total.add(&edge_sum(1, gw)?)?;
    }
    if gh > 1 {
        total = total.add(&edge_sum(0, gh)?)?;
    }
    // each unordered edge appears once from either end
    Ok(total.mul_scalar(2.0 / k)?)
}

/// `w_exp · mean_K |Ȳ_k − E| + w_col · Σ_{(p,q)} (V_p − V_q)²`.
pub fn loss_enh(i_en: &Tensor, weights: &LossWeights) -> Result<Tensor> {
    let (c, _, _) = image_dims("loss_enh", i_en)?;
    if c != 3 {
        return Err(Error::Shape(format!("loss_enh: expected 3 channels, got {c}")));
    }
    // shifting before pooling keeps an image that sits exactly at E at zero
    let exposure = patch_intensity(&i_en.add_scalar(-weights.e_target)?, weights.patch_size)?
        .abs()?
        .mean_all()?;
    let v = i_en.mean(&[0, 2, 3], false)?;
    let ch = |i: usize| v.slice(0, i, 1);
    let mut color = Tensor::scalar(0.0);
    for (p, q) in [(0, 1), (0, 2), (1, 2)] {
        color = color.add(&ch(p)?.sub(&ch(q)?)?.square()?.sum_all()?)?;
    }
    Ok(exposure.mul_scalar(weights.w_exp)?.add(&color.mul_scalar(weights.w_col)?)?)
}

/// Weighted sum of the terms plus the scalar breakdown.
pub fn total_loss(terms: &LossTerms, weights: &LossWeights) -> Result<(Tensor, LossBreakdown)> {
    let total = terms
        .l_r
        .mul_scalar(weights.w_r)?
        .add(&terms.l_l.mul_scalar(weights.w_l)?)?
        .add(&terms.l_con.mul_scalar(weights.w_con)?)?
        .add(&terms.l_enh.mul_scalar(weights.w_enh)?)?;
    let breakdown = LossBreakdown {
        l_r: terms.l_r.item()?,
        l_reg: terms.l_reg.item()?,
        l_l: terms.l_l.item()?,
        l_con: terms.l_con.item()?,
        l_enh: terms.l_enh.item()?,
        total: total.item()?,
    };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(h: usize, w: usize, rgb: [f64; 3]) -> Tensor {
        let data = rgb.iter().flat_map(|&v| std::iter::repeat(v).take(h * w)).collect();
        Tensor::new(data, &[1, 3, h, w]).unwrap()
    }

    #[test]
    fn loss_r_constant_offset() {
        let a = constant(4, 4, [0.5; 3]);
        let b = constant(4, 4, [0.4; 3]);
        let zero = Tensor::scalar(0.0);
        let v = loss_r(&a, &b, &zero, 1.0).unwrap().item().unwrap();
        assert!((v - 0.01).abs() < 1e-15);
        assert_eq!(v, loss_r(&b, &a, &zero, 1.0).unwrap().item().unwrap());
        assert_eq!(loss_r(&a, &a, &zero, 1.0).unwrap().item().unwrap(), 0.0);
    }

    #[test]
    fn loss_reg_zero_when_differences_agree() {
        let a = constant(2, 2, [0.3, 0.2, 0.1]);
        let b = constant(2, 2, [0.1, 0.1, 0.1]);
        assert_eq!(loss_reg(&a, &b, &a, &b).unwrap().item().unwrap(), 0.0);
        let m = constant(2, 2, [0.7; 3]);
        assert_eq!(loss_reg(&a, &a, &m, &m).unwrap().item().unwrap(), 0.0);
    }

    #[test]
    fn constant_decomposition_is_exact() {
        let d1 = constant(4, 4, [0.2, 0.4, 0.1]);
        let l1 = constant(4, 4, [0.4; 3]);
        let r1 = constant(4, 4, [0.5, 1.0, 0.25]);
        let v = loss_l(&r1, &l1, &d1).unwrap().item().unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(total_variation(&l1).unwrap().item().unwrap(), 0.0);
        assert!(loss_l(&r1, &constant(4, 4, [0.0; 3]), &d1).is_err());
    }

    #[test]
    fn tv_of_a_ramp() {
        let data: Vec<f64> = (0..3).flat_map(|_| (0..4).flat_map(|_| (0..4).map(|x| x as f64 * 0.1))).collect();
        let l = Tensor::new(data, &[1, 3, 4, 4]).unwrap();
        // 3 steps of 0.1 per row, 12 rows, 48 elements
        let v = total_variation(&l).unwrap().item().unwrap();
        assert!((v - 3.6 / 48.0).abs() < 1e-15);
    }

    #[test]
    fn consistency_zero_cases() {
        let a = Tensor::new((0..48).map(|i| (i % 7) as f64 / 7.0).collect(), &[1, 3, 4, 4]).unwrap();
        assert_eq!(loss_con(&a, &a, 2).unwrap().item().unwrap(), 0.0);
        let c1 = constant(4, 4, [0.3; 3]);
        let c2 = constant(4, 4, [0.8; 3]);
        assert_eq!(loss_con(&c1, &c2, 2).unwrap().item().unwrap(), 0.0);
        assert!(loss_con(&a, &a, 3).is_err());
    }

    #[test]
    fn exposure_cases() {
        let w = LossWeights {
            patch_size: 2,
            ..LossWeights::default()
        };
        assert_eq!(loss_enh(&constant(4, 4, [0.6; 3]), &w).unwrap().item().unwrap(), 0.0);
        let v = loss_enh(&constant(4, 4, [0.7; 3]), &w).unwrap().item().unwrap();
        assert!((v - w.w_exp * 0.1).abs() < 1e-12);
        let colored = loss_enh(&constant(4, 4, [0.6, 0.8, 0.4]), &w).unwrap().item().unwrap();
        assert!((colored - 0.5 * (0.04 + 0.04 + 0.16)).abs() < 1e-12);
    }

    #[test]
    fn weighted_total_ratio() {
        let parts = LossBreakdown {
            l_r: 1.0,
            l_l: 1.0,
            l_con: 1.0,
            l_enh: 1.0,
            ..LossBreakdown::default()
        };
        let w = LossWeights::default();
        assert!((parts.weighted_total(&w) - 3.1).abs() < 1e-15);
        let doubled = LossWeights { w_con: 0.2, ..w };
        assert!((parts.weighted_total(&doubled) - parts.weighted_total(&w) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn total_matches_breakdown() {
        let s = |v: f64| Tensor::scalar(v);
        let terms = LossTerms {
            l_r: s(0.5),
            l_reg: s(0.1),
            l_l: s(0.25),
            l_con: s(-0.2),
            l_enh: s(0.3),
        };
        let w = LossWeights::default();
        let (t, b) = total_loss(&terms, &w).unwrap();
        assert_eq!(t.item().unwrap(), b.total);
        assert!((b.total - b.weighted_total(&w)).abs() < 1e-15);
    }
}

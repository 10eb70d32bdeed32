//! Brute-force reference implementations, which never call the code they
//! check, plus fixtures shared by the integration tests.

#![allow(dead_code)]

use std::f64::consts::PI;

use dimlight_core::image::ImageRGB;
use dimlight_core::losses::{loss_con, loss_enh, loss_r, loss_reg, total_loss, total_variation, LossTerms, LossWeights};
use dimlight_core::nets::DeNet;
use dimlight_core::pairgen::SubImagePair;
use dimlight_tensor::functional::mse;
use dimlight_tensor::{Tensor, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook O(h²w²) orthonormal DCT-II.
pub fn brute_dct2(x: &[f64], h: usize, w: usize) -> Vec<f64> {
    let scale = |k: usize, n: usize| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
    let mut out = vec![0.0; h * w];
    for u in 0..h {
        for v in 0..w {
            let mut s = 0.0;
            for y in 0..h {
                for xx in 0..w {
                    s += x[y * w + xx]
                        * ((2 * y + 1) as f64 * u as f64 * PI / (2 * h) as f64).cos()
                        * ((2 * xx + 1) as f64 * v as f64 * PI / (2 * w) as f64).cos();
                }
            }
            out[u * w + v] = scale(u, h) * scale(v, w) * s;
        }
    }
    out
}

/// Patch-mean intensity grid of a planar `3`×`h`×`w` buffer.
fn patch_grid(img: &[f64], h: usize, w: usize, patch: usize) -> Vec<Vec<f64>> {
    let (gh, gw) = (h / patch, w / patch);
    let mut g = vec![vec![0.0; gw]; gh];
    for (i, row) in g.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for c in 0..3 {
                for y in i * patch..(i + 1) * patch {
                    for x in j * patch..(j + 1) * patch {
                        s += img[c * h * w + y * w + x];
                    }
                }
            }
            *cell = s / (3 * patch * patch) as f64;
        }
    }
    g
}

/// Mean over patches of the signed neighbor-contrast difference, as a
/// double loop over every patch and each of its 4-neighbors.
pub fn brute_loss_con(e: &[f64], d: &[f64], h: usize, w: usize, patch: usize) -> f64 {
    let ge = patch_grid(e, h, w, patch);
    let gd = patch_grid(d, h, w, patch);
    let (gh, gw) = (h / patch, w / patch);
    let mut total = 0.0;
    for i in 0..gh as isize {
        for j in 0..gw as isize {
            for (di, dj) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                let (ni, nj) = (i + di, j + dj);
                if ni < 0 || nj < 0 || ni >= gh as isize || nj >= gw as isize {
                    continue;
                }
                let (a, b) = ((i as usize, j as usize), (ni as usize, nj as usize));
                total += (ge[a.0][a.1] - ge[b.0][b.1]).abs() - (gd[a.0][a.1] - gd[b.0][b.1]).abs();
            }
        }
    }
    total / (gh * gw) as f64
}

pub fn brute_loss_reg(r1: &[f64], r2: &[f64], m1: &[f64], m2: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..r1.len() {
        let v = (r1[i] - r2[i]) - (m1[i] - m2[i]);
        s += v * v;
    }
    s / r1.len() as f64
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.gen_range(lo..hi)).collect(), shape).unwrap()
}

pub fn random_image(h: usize, w: usize, rng: &mut ChaCha8Rng) -> ImageRGB {
    ImageRGB::new(h, w, (0..h * w * 3).map(|_| rng.gen_range(0.02..0.6)).collect()).unwrap()
}

pub fn to_tensor_err(e: dimlight_core::Error) -> TensorError {
    match e {
        dimlight_core::Error::Tensor(t) => t,
        other => TensorError::InvalidArgument {
            op: "core",
            detail: other.to_string(),
        },
    }
}

/// The training objective for one pair with the stopped illumination in the
/// retinex-consistency term replaced by the fixed tensor `frozen_l`. At the
/// point where `frozen_l` was taken this has the same value and the same
/// gradient the stop-gradient objective should have, and it is an ordinary
/// differentiable function for finite differences.
pub fn frozen_objective(
    net: &DeNet,
    crop: &ImageRGB,
    pair: &SubImagePair,
    weights: &LossWeights,
    frozen_l: &Tensor,
) -> dimlight_core::Result<Tensor> {
    let d1 = pair.d1.to_tensor();
    let dec = net.decompose(&pair.d1, None)?;
    let r2 = net.reflectance(&pair.d2_enhanced, None)?;
    let full = net.reflectance(crop, None)?;
    let (m1, m2) = pair.mask.apply_tensor(&full)?;
    let l0 = d1.max(&[1], true)?;
    let l_l = mse(&dec.r.mul(&dec.l)?, &d1)?
        .add(&dec.l.sub(&l0)?.square()?.mean_all()?)?
        .add(&mse(&dec.r, &d1.div(frozen_l)?)?)?
        .add(&total_variation(&dec.l)?)?;
    let l_reg = loss_reg(&dec.r, &r2, &m1, &m2)?;
    let terms = LossTerms {
        l_r: loss_r(&dec.r, &r2, &l_reg, weights.w_reg)?,
        l_l,
        l_con: loss_con(&dec.i_en, &d1, weights.patch_size)?,
        l_enh: loss_enh(&dec.i_en, weights)?,
        l_reg,
    };
    Ok(total_loss(&terms, weights)?.0)
}

//! Full-reference quality metrics on `[0, 1]` RGB images.

use crate::error::{Error, Result};
use crate::image::ImageRGB;

/// PSNR ceiling, reported when the MSE falls below [`MSE_FLOOR`].
pub const PSNR_CAP: f64 = 100.0;
pub const MSE_FLOOR: f64 = 1e-10;

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn same_size(a: &ImageRGB, b: &ImageRGB) -> Result<()> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(Error::Shape(format!(
            "{}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

pub fn mse(a: &ImageRGB, b: &ImageRGB) -> Result<f64> {
    same_size(a, b)?;
    let n = a.pixels().len() as f64;
    Ok(a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n)
}

/// `10 · log10(1 / MSE)` in dB.
pub fn psnr(a: &ImageRGB, b: &ImageRGB) -> Result<f64> {
    let e = mse(a, b)?;
    if e < MSE_FLOOR {
        return Ok(PSNR_CAP);
    }
    Ok(10.0 * (1.0 / e).log10())
}

fn gaussian_window() -> [f64; WINDOW] {
    let mut g = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Separable valid-mode Gaussian filter of an `h`×`w` plane.
fn filter(plane: &[f64], h: usize, w: usize, g: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|k| g[k] * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|k| g[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, g: &[f64; WINDOW]) -> f64 {
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };
    let mu_a = filter(a, h, w, g);
    let mu_b = filter(b, h, w, g);
    let aa = filter(&prod(a, a), h, w, g);
    let bb = filter(&prod(b, b), h, w, g);
    let ab = filter(&prod(a, b), h, w, g);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    total / n as f64
}

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), averaged over
/// valid positions and then over channels.
pub fn ssim(a: &ImageRGB, b: &ImageRGB) -> Result<f64> {
    same_size(a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < WINDOW || w < WINDOW {
        return Err(Error::InvalidImage(format!(
            "ssim needs at least {WINDOW}x{WINDOW}, got {h}x{w}"
        )));
    }
    let g = gaussian_window();
    let per_channel: f64 = (0..3).map(|c| ssim_plane(&a.channel(c), &b.channel(c), h, w, &g)).sum();
    Ok(per_channel / 3.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn push(&mut self, name: impl Into<String>, a: &ImageRGB, b: &ImageRGB) -> Result<()> {
        self.rows.push(MetricRow {
            name: name.into(),
            psnr: psnr(a, b)?,
            ssim: ssim(a, b)?,
        });
        Ok(())
    }

    /// Corpus means `(psnr, ssim)`; `None` when empty.
    pub fn means(&self) -> Option<(f64, f64)> {
        if self.rows.is_empty() {
            return None;
        }
        let n = self.rows.len() as f64;
        let p = self.rows.iter().map(|r| r.psnr).sum::<f64>() / n;
        let s = self.rows.iter().map(|r| r.ssim).sum::<f64>() / n;
        Some((p, s))
    }

    /// `name,psnr,ssim` rows followed by a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,psnr,ssim\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:.6},{:.6}\n", r.name, r.psnr, r.ssim));
        }
        if let Some((p, s)) = self.means() {
            out.push_str(&format!("mean,{p:.6},{s:.6}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> ImageRGB {
        let px = (0..h * w * 3).map(|i| (i % 97) as f64 / 200.0).collect();
        ImageRGB::new(h, w, px).unwrap()
    }

    #[test]
    fn psnr_offset_and_cap() {
        let a = ramp(8, 8);
        let b = a.map(|v| v + 0.1).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&b, &a).unwrap(), psnr(&a, &b).unwrap());
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
    }

    #[test]
    fn ssim_extremes() {
        let a = ramp(16, 16);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let zero = ImageRGB::filled(12, 12, [0.0; 3]).unwrap();
        let one = ImageRGB::filled(12, 12, [1.0; 3]).unwrap();
        assert!(ssim(&zero, &one).unwrap() < 0.01);
        assert!(ssim(&ramp(8, 8), &ramp(8, 8)).is_err());
    }

    #[test]
    fn window_sums_to_one() {
        assert!((gaussian_window().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn report_csv() {
        let mut r = MetricReport::default();
        let a = ramp(12, 12);
        r.push("x.png", &a, &a).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("name,psnr,ssim\nx.png,100.000000,1.000000\nmean,"));
    }
}

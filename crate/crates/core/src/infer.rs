//! Full-resolution inference with a trained network.

use crate::error::Result;
use crate::image::ImageRGB;
use crate::nets::{DeNet, MAX_SIDE};

#[derive(Debug, Clone, PartialEq)]
pub struct Enhanced {
    pub image: ImageRGB,
    pub reflectance: ImageRGB,
    pub illumination: ImageRGB,
    /// Correction exponent; the mean over tiles for tiled inputs.
    pub alpha: f64,
}

/// Tile boundaries covering `0..len` with pieces no longer than `max`.
fn spans(len: usize, max: usize) -> Vec<(usize, usize)> {
    let count = len.div_ceil(max);
    let base = len.div_ceil(count);
    (0..count)
        .map(|i| (i * base, ((i + 1) * base).min(len) - i * base))
        .collect()
}

fn paste(dst: &mut [f64], width: usize, tile: &ImageRGB, top: usize, left: usize) {
    for y in 0..tile.height() {
        let src = &tile.pixels()[y * tile.width() * 3..(y + 1) * tile.width() * 3];
        let at = ((top + y) * width + left) * 3;
        dst[at..at + src.len()].copy_from_slice(src);
    }
}

/// Enhances `img` at its own resolution. Sides above the attention cap are
/// split into independent tiles.
pub fn enhance(net: &DeNet, img: &ImageRGB, bandwidth: Option<usize>) -> Result<Enhanced> {
    let (h, w) = (img.height(), img.width());
    let rows = spans(h, MAX_SIDE);
    let cols = spans(w, MAX_SIDE);
    let mut out = [vec![0.0; h * w * 3], vec![0.0; h * w * 3], vec![0.0; h * w * 3]];
    let mut alpha = 0.0;
    for &(top, th) in &rows {
        for &(left, tw) in &cols {
            let tile = img.crop(top, left, th, tw)?;
            let d = net.decompose_any(&tile, bandwidth)?;
            for (buf, t) in out.iter_mut().zip([&d.i_en, &d.r, &d.l]) {
                paste(buf, w, &ImageRGB::from_tensor(t)?, top, left);
            }
            alpha += d.alpha_value();
        }
    }
    let [image, reflectance, illumination] = out;
    Ok(Enhanced {
        image: ImageRGB::new(h, w, image)?,
        reflectance: ImageRGB::new(h, w, reflectance)?,
        illumination: ImageRGB::new(h, w, illumination)?,
        alpha: alpha / (rows.len() * cols.len()) as f64,
    })
}

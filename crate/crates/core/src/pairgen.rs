//! Training-pair construction: two sub-images of the same scene with
//! independent noise, the second brightened by a random gamma.

use std::fmt;
use std::str::FromStr;

use dimlight_tensor::Tensor;
use rand::Rng;

use crate::error::{Error, Result};
use crate::image::ImageRGB;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskStrategy {
    /// Random edge-adjacent pixel pair from each 2×2 patch.
    #[default]
    Neighbor,
    /// Top/bottom pixel of each vertical 2×1 patch.
    Noise2FastH,
    /// Left/right pixel of each horizontal 1×2 patch.
    Noise2FastW,
    /// The two diagonal averages of each 2×2 patch.
    Mean,
}

impl MaskStrategy {
    pub const ALL: [MaskStrategy; 4] = [
        MaskStrategy::Neighbor,
        MaskStrategy::Noise2FastH,
        MaskStrategy::Noise2FastW,
        MaskStrategy::Mean,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MaskStrategy::Neighbor => "neighbor",
            MaskStrategy::Noise2FastH => "noise2fast_h",
            MaskStrategy::Noise2FastW => "noise2fast_w",
            MaskStrategy::Mean => "mean",
        }
    }

    /// Sub-image size for an `h`×`w` source.
    pub fn output_size(self, h: usize, w: usize) -> (usize, usize) {
        match self {
            MaskStrategy::Neighbor | MaskStrategy::Mean => (h / 2, w / 2),
            MaskStrategy::Noise2FastH => (h / 2, w),
            MaskStrategy::Noise2FastW => (h, w / 2),
        }
    }

    fn check_dims(self, h: usize, w: usize) -> Result<()> {
        let (need_h, need_w) = match self {
            MaskStrategy::Neighbor | MaskStrategy::Mean => (true, true),
            MaskStrategy::Noise2FastH => (true, false),
            MaskStrategy::Noise2FastW => (false, true),
        };
        if (need_h && h % 2 != 0) || (need_w && w % 2 != 0) {
            return Err(Error::InvalidImage(format!(
                "{} masking needs even dimensions, got {h}x{w}",
                self.as_str()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for MaskStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MaskStrategy::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mask strategy `{s}`")))
    }
}

/// Ordered edge-adjacent pairs within a 2×2 patch, positions numbered
/// row-major: 0 = top-left, 1 = top-right, 2 = bottom-left, 3 = bottom-right.
pub const ADJACENT_PAIRS: [(usize, usize); 8] = [
    (0, 1),
    (1, 0),
    (0, 2),
    (2, 0),
    (1, 3),
    (3, 1),
    (2, 3),
    (3, 2),
];

/// A concrete subsampling of an `source_h`×`source_w` image into two
/// sub-images. Each output pixel averages `taps` source pixels, listed as flat
/// `y * source_w + x` indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsampleMask {
    pub source_h: usize,
    pub source_w: usize,
    pub height: usize,
    pub width: usize,
    pub taps: usize,
    pub first: Vec<usize>,
    pub second: Vec<usize>,
}

impl SubsampleMask {
    /// Draws a neighbor mask: one of the eight adjacent ordered pairs per patch.
    pub fn neighbor<R: Rng + ?Sized>(h: usize, w: usize, rng: &mut R) -> Result<Self> {
        MaskStrategy::Neighbor.check_dims(h, w)?;
        let (oh, ow) = (h / 2, w / 2);
        let mut first = Vec::with_capacity(oh * ow);
        let mut second = Vec::with_capacity(oh * ow);
        for py in 0..oh {
            for px in 0..ow {
                let (a, b) = ADJACENT_PAIRS[rng.gen_range(0..ADJACENT_PAIRS.len())];
                let at = |pos: usize| (2 * py + pos / 2) * w + 2 * px + pos % 2;
                first.push(at(a));
                second.push(at(b));
            }
        }
        Ok(SubsampleMask {
            source_h: h,
            source_w: w,
            height: oh,
            width: ow,
            taps: 1,
            first,
            second,
        })
    }

    /// The fixed mask of a deterministic strategy.
    pub fn deterministic(strategy: MaskStrategy, h: usize, w: usize) -> Result<Self> {
        strategy.check_dims(h, w)?;
        let (oh, ow) = strategy.output_size(h, w);
        let mut first = Vec::new();
        let mut second = Vec::new();
        let taps = if strategy == MaskStrategy::Mean { 2 } else { 1 };
        for y in 0..oh {
            for x in 0..ow {
                match strategy {
                    MaskStrategy::Noise2FastH => {
                        first.push(2 * y * w + x);
                        second.push((2 * y + 1) * w + x);
                    }
                    MaskStrategy::Noise2FastW => {
                        first.push(y * w + 2 * x);
                        second.push(y * w + 2 * x + 1);
                    }
                    MaskStrategy::Mean => {
                        let tl = 2 * y * w + 2 * x;
                        let bl = tl + w;
                        first.extend([tl, bl + 1]);
                        second.extend([tl + 1, bl]);
                    }
                    MaskStrategy::Neighbor => {
                        return Err(Error::Config("neighbor masking is random; use SubsampleMask::neighbor".into()))
                    }
                }
            }
        }
        Ok(SubsampleMask {
            source_h: h,
            source_w: w,
            height: oh,
            width: ow,
            taps,
            first,
            second,
        })
    }

    pub fn for_strategy<R: Rng + ?Sized>(strategy: MaskStrategy, h: usize, w: usize, rng: &mut R) -> Result<Self> {
        match strategy {
            MaskStrategy::Neighbor => Self::neighbor(h, w, rng),
            s => Self::deterministic(s, h, w),
        }
    }

    fn check_source(&self, h: usize, w: usize) -> Result<()> {
        if (h, w) != (self.source_h, self.source_w) {
            return Err(Error::Shape(format!(
                "mask built for {}x{}, applied to {h}x{w}",
                self.source_h, self.source_w
            )));
        }
        Ok(())
    }

    fn gather_image(&self, img: &ImageRGB, indices: &[usize]) -> Result<ImageRGB> {
        self.check_source(img.height(), img.width())?;
        let src = img.pixels();
        let mut px = Vec::with_capacity(self.height * self.width * 3);
        for group in indices.chunks_exact(self.taps) {
            for c in 0..3 {
                let s: f64 = group.iter().map(|&i| src[i * 3 + c]).sum();
                px.push(s / self.taps as f64);
            }
        }
        ImageRGB::new(self.height, self.width, px)
    }

    pub fn apply(&self, img: &ImageRGB) -> Result<(ImageRGB, ImageRGB)> {
        Ok((
            self.gather_image(img, &self.first)?,
            self.gather_image(img, &self.second)?,
        ))
    }

    fn gather_tensor(&self, t: &Tensor, indices: &[usize]) -> Result<Tensor> {
        let &[n, c, h, w] = t.shape() else {
            return Err(Error::Shape(format!("expected NCHW, got {:?}", t.shape())));
        };
        self.check_source(h, w)?;
        let flat = t.reshape(&[n, c, h * w])?.take_last(indices)?;
        let out = if self.taps > 1 {
            flat.reshape(&[n, c, self.height * self.width, self.taps])?.mean(&[3], false)?
        } else {
            flat
        };
        Ok(out.reshape(&[n, c, self.height, self.width])?)
    }

    /// Differentiable application to an `(N, C, H, W)` tensor.
    pub fn apply_tensor(&self, t: &Tensor) -> Result<(Tensor, Tensor)> {
        Ok((
            self.gather_tensor(t, &self.first)?,
            self.gather_tensor(t, &self.second)?,
        ))
    }
}

pub fn neighbor_mask<R: Rng + ?Sized>(img: &ImageRGB, rng: &mut R) -> Result<(ImageRGB, ImageRGB)> {
    SubsampleMask::neighbor(img.height(), img.width(), rng)?.apply(img)
}

/// Deterministic alternatives to neighbor masking.
pub fn alt_mask(img: &ImageRGB, strategy: MaskStrategy) -> Result<(ImageRGB, ImageRGB)> {
    SubsampleMask::deterministic(strategy, img.height(), img.width())?.apply(img)
}

/// Elementwise `x^(1/sigma)`.
pub fn gamma_enhance(img: &ImageRGB, sigma: f64) -> Result<ImageRGB> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("gamma control factor must be positive, got {sigma}")));
    }
    let lambda = 1.0 / sigma;
    img.map(|v| v.powf(lambda))
}

/// Error of the first-order expansion of `(r + n)^λ` around `r`.
pub fn taylor_residual(r: f64, n: f64, lambda: f64) -> Result<f64> {
    if r + n <= 0.0 {
        return Err(Error::Config(format!("r + n must be positive, got {}", r + n)));
    }
    let exact = (r + n).powf(lambda);
    let linear = r.powf(lambda) + lambda * r.powf(lambda - 1.0) * n;
    Ok((exact - linear).abs())
}

/// Open interval for the gamma control factor σ (λ = 1/σ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaInterval {
    pub low: f64,
    pub high: f64,
}

impl Default for SigmaInterval {
    fn default() -> Self {
        SigmaInterval { low: 1.3, high: 1.7 }
    }
}

impl SigmaInterval {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low > 1.0 && high > low && high.is_finite()) {
            return Err(Error::Config(format!(
                "sigma interval ({low}, {high}) must satisfy 1 < low < high"
            )));
        }
        Ok(SigmaInterval { low, high })
    }

    /// Uniform draw strictly inside the interval.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let s = rng.gen_range(self.low..self.high);
            if s > self.low {
                return s;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubImagePair {
    pub d1: ImageRGB,
    pub d2_enhanced: ImageRGB,
    pub lambda: f64,
    pub sigma: f64,
    /// The mask that produced `d1` and the pre-gamma `d2`; reused on
    /// full-resolution network outputs.
    pub mask: SubsampleMask,
}

pub fn make_pair<R: Rng + ?Sized>(
    img: &ImageRGB,
    interval: SigmaInterval,
    strategy: MaskStrategy,
    rng: &mut R,
) -> Result<SubImagePair> {
    let interval = SigmaInterval::new(interval.low, interval.high)?;
    let mask = SubsampleMask::for_strategy(strategy, img.height(), img.width(), rng)?;
    let (d1, d2) = mask.apply(img)?;
    let sigma = interval.sample(rng);
    let d2_enhanced = gamma_enhance(&d2, sigma)?;
    Ok(SubImagePair {
        d1,
        d2_enhanced,
        lambda: 1.0 / sigma,
        sigma,
        mask,
    })
}

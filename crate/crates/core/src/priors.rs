//! Illumination and DCT band priors, and the convolutional encoder that turns
//! them into the degradation representation fed to the reflectance network.

use dimlight_tensor::functional::silu;
use dimlight_tensor::Tensor;
use rand::Rng;

use crate::dct::{dct2, idct2};
use crate::error::{Error, Result};
use crate::image::ImageRGB;
use crate::nn::{join, Conv2d, Module};

/// Planar `channels`×H×W map with unbounded values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    /// View as an image for inspection: values clamped, a single channel
    /// replicated to gray.
    pub fn to_image(&self) -> Result<ImageRGB> {
        let n = self.height * self.width;
        let pick = |c: usize, i: usize| self.data[c.min(self.channels - 1) * n + i];
        let px = (0..n).flat_map(|i| [pick(0, i), pick(1, i), pick(2, i)]).collect();
        ImageRGB::from_clamped(self.height, self.width, px)
    }
}

/// Per-channel DCT coefficients of an image.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumMap(pub FeatureMap);

pub fn spectrum(img: &ImageRGB) -> SpectrumMap {
    let (h, w) = (img.height(), img.width());
    let data = (0..3).flat_map(|c| dct2(&img.channel(c), h, w)).collect();
    SpectrumMap(FeatureMap {
        channels: 3,
        height: h,
        width: w,
        data,
    })
}

/// Binary selectors on DCT coefficients by anti-diagonal index `u + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMasks {
    pub low1: Vec<f64>,
    pub low2: Vec<f64>,
    pub high1: Vec<f64>,
    pub high2: Vec<f64>,
}

impl BandMasks {
    pub fn all(&self) -> [&[f64]; 4] {
        [&self.low1, &self.low2, &self.high1, &self.high2]
    }
}

/// `low1: u+v ≤ t`, `low2: u+v ≤ 3t`, `high1: 2t < u+v ≤ 4t`, `high2: u+v ≥ 5t`.
pub fn band_masks(h: usize, w: usize, t: usize) -> Result<BandMasks> {
    if t == 0 {
        return Err(Error::Config("bandwidth must be at least 1".into()));
    }
    if 5 * t > (h + w).saturating_sub(2) {
        return Err(Error::Config(format!(
            "bandwidth {t} leaves the top band empty for {h}x{w}"
        )));
    }
    let make = |keep: &dyn Fn(usize) -> bool| -> Vec<f64> {
        (0..h)
            .flat_map(|u| (0..w).map(move |v| u + v))
            .map(|s| if keep(s) { 1.0 } else { 0.0 })
            .collect()
    };
    Ok(BandMasks {
        low1: make(&|s| s <= t),
        low2: make(&|s| s <= 3 * t),
        high1: make(&|s| 2 * t < s && s <= 4 * t),
        high2: make(&|s| s >= 5 * t),
    })
}

/// `round((h + w) / 16)`, kept within `[1, (h + w − 2) / 5]`.
pub fn default_bandwidth(h: usize, w: usize) -> Result<usize> {
    let max_t = (h + w).saturating_sub(2) / 5;
    if max_t == 0 {
        return Err(Error::Config(format!("{h}x{w} is too small for band priors")));
    }
    let t = ((h + w) as f64 / 16.0).round() as usize;
    Ok(t.clamp(1, max_t))
}

/// Per channel `idct2(dct2(x) ⊙ mask)`, without clamping.
pub fn apply_band(img: &ImageRGB, mask: &[f64]) -> Result<FeatureMap> {
    let (h, w) = (img.height(), img.width());
    if mask.len() != h * w {
        return Err(Error::Shape(format!("mask of {} for {h}x{w}", mask.len())));
    }
    Ok(filter_spectrum(&spectrum(img), mask))
}

fn filter_spectrum(spec: &SpectrumMap, mask: &[f64]) -> FeatureMap {
    let f = &spec.0;
    let (h, w) = (f.height, f.width);
    let data = (0..3)
        .flat_map(|c| {
            let masked: Vec<f64> = f.plane(c).iter().zip(mask).map(|(a, m)| a * m).collect();
            idct2(&masked, h, w)
        })
        .collect();
    FeatureMap {
        channels: 3,
        height: h,
        width: w,
        data,
    }
}

/// Per-pixel channel mean.
pub fn illumination_prior(img: &ImageRGB) -> FeatureMap {
    let data = img.pixels().chunks_exact(3).map(|p| (p[0] + p[1] + p[2]) / 3.0).collect();
    FeatureMap {
        channels: 1,
        height: img.height(),
        width: img.width(),
        data,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorStack {
    pub i_lu: FeatureMap,
    pub c_low1: FeatureMap,
    pub c_low2: FeatureMap,
    pub c_high1: FeatureMap,
    pub c_high2: FeatureMap,
    pub bandwidth: usize,
}

/// Input channels of the encoder: luminance plus four RGB band maps.
pub const PRIOR_CHANNELS: usize = 13;

impl PriorStack {
    pub fn compute(img: &ImageRGB, bandwidth: usize) -> Result<Self> {
        let masks = band_masks(img.height(), img.width(), bandwidth)?;
        let spec = spectrum(img);
        Ok(PriorStack {
            i_lu: illumination_prior(img),
            c_low1: filter_spectrum(&spec, &masks.low1),
            c_low2: filter_spectrum(&spec, &masks.low2),
            c_high1: filter_spectrum(&spec, &masks.high1),
            c_high2: filter_spectrum(&spec, &masks.high2),
            bandwidth,
        })
    }

    pub fn maps(&self) -> [&FeatureMap; 5] {
        [&self.i_lu, &self.c_low1, &self.c_low2, &self.c_high1, &self.c_high2]
    }

    /// `(1, 13, H, W)` constant tensor in the order of [`PriorStack::maps`].
    pub fn to_tensor(&self) -> Result<Tensor> {
        let (h, w) = (self.i_lu.height, self.i_lu.width);
        let mut data = Vec::with_capacity(PRIOR_CHANNELS * h * w);
        for m in self.maps() {
            if (m.height, m.width) != (h, w) {
                return Err(Error::Shape("prior maps differ in size".into()));
            }
            data.extend_from_slice(&m.data);
        }
        Ok(Tensor::new(data, &[1, PRIOR_CHANNELS, h, w])?)
    }
}

/// Implicit degradation representation, `(1, C, H, W)`.
#[derive(Debug, Clone)]
pub struct DegradationRepr(pub Tensor);

/// conv3×3 (13→C) → SiLU → conv3×3 (C→C) → SiLU.
#[derive(Debug, Clone)]
pub struct PriorEncoder {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
}

impl PriorEncoder {
    pub fn new<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Self {
        PriorEncoder {
            conv1: Conv2d::new(PRIOR_CHANNELS, channels, 3, rng),
            conv2: Conv2d::new(channels, channels, 3, rng),
        }
    }

    pub fn channels(&self) -> usize {
        self.conv2.weight.shape()[0]
    }

    pub fn forward(&self, priors: &Tensor) -> Result<DegradationRepr> {
        if priors.rank() != 4 || priors.shape()[1] != PRIOR_CHANNELS {
            return Err(Error::Shape(format!(
                "encoder expects (N, {PRIOR_CHANNELS}, H, W), got {:?}",
                priors.shape()
            )));
        }
        let h = silu(&self.conv1.forward(priors)?)?;
        Ok(DegradationRepr(silu(&self.conv2.forward(&h)?)?))
    }
}

impl Module for PriorEncoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.conv1.visit_mut(&join(prefix, "conv1"), f);
        self.conv2.visit_mut(&join(prefix, "conv2"), f);
    }
}

/// Priors of `stack` passed through `encoder`.
pub fn encode_priors(stack: &PriorStack, encoder: &PriorEncoder) -> Result<DegradationRepr> {
    encoder.forward(&stack.to_tensor()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noisy(h: usize, w: usize, seed: u64) -> ImageRGB {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageRGB::new(h, w, (0..h * w * 3).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn low1_at_unit_bandwidth() {
        let m = band_masks(8, 8, 1).unwrap();
        assert_eq!(m.low1.iter().sum::<f64>(), 3.0);
        assert_eq!(m.low1[0], 1.0);
        assert_eq!(m.low1[1], 1.0);
        assert_eq!(m.low1[8], 1.0);
    }

    #[test]
    fn mask_nesting_and_disjointness() {
        for t in 1..=2 {
            let m = band_masks(8, 8, t).unwrap();
            for i in 0..64 {
                assert!(m.low1[i] <= m.low2[i]);
                assert_eq!(m.low1[i] * m.high2[i], 0.0);
            }
        }
        assert!(band_masks(8, 8, 2).is_ok());
        assert!(band_masks(8, 8, 3).is_err());
        assert!(band_masks(8, 8, 0).is_err());
    }

    #[test]
    fn apply_band_trivial_masks() {
        let img = noisy(6, 6, 1);
        let id = apply_band(&img, &[1.0; 36]).unwrap();
        let zero = apply_band(&img, &[0.0; 36]).unwrap();
        for c in 0..3 {
            for (a, b) in id.plane(c).iter().zip(img.channel(c)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        assert!(zero.data.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn illumination_is_channel_mean() {
        let img = ImageRGB::filled(2, 2, [0.2, 0.4, 0.6]).unwrap();
        let lu = illumination_prior(&img);
        assert!(lu.data.iter().all(|v| (v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn default_bandwidth_scales() {
        assert_eq!(default_bandwidth(256, 256).unwrap(), 32);
        assert_eq!(default_bandwidth(32, 32).unwrap(), 4);
        assert_eq!(default_bandwidth(8, 8).unwrap(), 1);
        assert!(default_bandwidth(2, 2).is_err());
        for s in [4usize, 6, 16, 64, 128] {
            let t = default_bandwidth(s, s).unwrap();
            assert!(5 * t <= 2 * s - 2);
        }
    }

    #[test]
    fn encoder_shape_and_zero_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut enc = PriorEncoder::new(5, &mut rng);
        let stack = PriorStack::compute(&noisy(8, 10, 2), 1).unwrap();
        let p = encode_priors(&stack, &enc).unwrap();
        assert_eq!(p.0.shape(), &[1, 5, 8, 10]);

        enc.conv1.bias = Tensor::zeros(&[5]);
        enc.conv2.bias = Tensor::zeros(&[5]);
        let z = enc.forward(&Tensor::zeros(&[1, PRIOR_CHANNELS, 4, 4])).unwrap();
        assert!(z.0.data().iter().all(|&v| v == 0.0));
        assert!(enc.forward(&Tensor::zeros(&[1, 3, 4, 4])).is_err());
    }
}

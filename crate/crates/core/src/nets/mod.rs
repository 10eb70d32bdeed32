//! Retinex decomposition networks.
//!
//! `DeNet` composes four parts: the prior encoder (degradation representation
//! `P`), a reflectance branch conditioned on `P` through cross-attention, an
//! illumination branch with self-attention, and a correction head that maps
//! the illumination to one exponent `α`. The enhanced image is `R ⊙ L^α`.

pub mod blocks;

use dimlight_tensor::functional::silu;
use dimlight_tensor::Tensor;
use rand::Rng;

use crate::error::{Error, Result};
use crate::image::ImageRGB;
use crate::nn::{join, Conv2d, Linear, Module};
use crate::priors::{default_bandwidth, DegradationRepr, PriorEncoder, PriorStack};
use blocks::{patchify, pool_tokens, unpatchify, TransformerBlock};

/// Illumination floor: `L ∈ (ILLUMINATION_FLOOR, 1]`.
pub const ILLUMINATION_FLOOR: f64 = 1e-4;
/// Correction exponent floor: `α ∈ (ALPHA_FLOOR, 1]`.
pub const ALPHA_FLOOR: f64 = 0.05;
/// Longest side processed in one pass; larger inputs are tiled.
pub const MAX_SIDE: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchConfig {
    /// Width of the convolutional stem and head.
    pub feature_channels: usize,
    pub token_dim: usize,
    pub heads: usize,
    /// Transformer blocks in each branch.
    pub blocks: usize,
    /// Side of the square patch that becomes one token.
    pub patch: usize,
    /// Hidden width of the gated feed-forward, as a multiple of `token_dim`.
    pub gate_mult: usize,
    /// Channels of the degradation representation.
    pub prior_channels: usize,
    /// Hidden width of the correction head.
    pub lc_hidden: usize,
}

impl ArchConfig {
    /// Small enough to train on a laptop CPU in minutes.
    pub fn desk() -> Self {
        ArchConfig {
            feature_channels: 8,
            token_dim: 32,
            heads: 2,
            blocks: 2,
            patch: 4,
            gate_mult: 2,
            prior_channels: 16,
            lc_hidden: 16,
        }
    }

    /// Sized to roughly the published model (about 0.36M parameters).
    pub fn paper() -> Self {
        ArchConfig {
            feature_channels: 16,
            token_dim: 48,
            heads: 4,
            blocks: 4,
            patch: 4,
            gate_mult: 2,
            prior_channels: 32,
            lc_hidden: 32,
        }
    }

    /// Minimal widths, used for exhaustive finite-difference checks.
    pub fn tiny() -> Self {
        ArchConfig {
            feature_channels: 2,
            token_dim: 4,
            heads: 2,
            blocks: 1,
            patch: 2,
            gate_mult: 1,
            prior_channels: 2,
            lc_hidden: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.feature_channels,
            self.token_dim,
            self.heads,
            self.blocks,
            self.patch,
            self.gate_mult,
            self.prior_channels,
            self.lc_hidden,
        ];
        if positive.contains(&0) {
            return Err(Error::Config(format!("architecture fields must be positive: {self:?}")));
        }
        if self.token_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "token_dim {} not divisible by heads {}",
                self.token_dim, self.heads
            )));
        }
        Ok(())
    }

    /// Closed-form parameter count of a [`DeNet`] with this configuration.
    pub fn parameter_count(&self) -> usize {
        let conv = |i: usize, o: usize| o * i * 9 + o;
        let lin = |i: usize, o: usize| i * o + o;
        let (f, d, c, p) = (self.feature_channels, self.token_dim, self.prior_channels, self.patch);
        let hidden = d * self.gate_mult;
        let tok = f * p * p;
        let gate = 2 * lin(d, hidden) + lin(hidden, d);
        let self_block = 2 * (2 * d) + 2 * lin(d, d) + 2 * lin(d, d) + gate;
        let cross_block = 2 * (2 * d) + 2 * c + 2 * lin(d, d) + 2 * lin(c, d) + gate;
        let encoder = conv(13, c) + conv(c, c);
        let stem_head = conv(3, f) + lin(tok, d) + lin(d, tok) + conv(f, 3);
        let refnet = stem_head + self.blocks * cross_block;
        let lumnet = stem_head + self.blocks * self_block;
        let lcnet = conv(3, f) + lin(tok, d) + self.blocks * self_block + lin(d, self.lc_hidden) + lin(self.lc_hidden, 1);
        encoder + refnet + lumnet + lcnet
    }
}

/// Stem conv → tokens → blocks → tokens back to a map (+ stem skip) → head conv.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub stem: Conv2d,
    pub embed: Linear,
    pub blocks: Vec<TransformerBlock>,
    pub unembed: Linear,
    pub head: Conv2d,
    pub patch: usize,
}

impl Backbone {
    fn new<R: Rng + ?Sized>(cfg: &ArchConfig, cross: bool, rng: &mut R) -> Self {
        let tok = cfg.feature_channels * cfg.patch * cfg.patch;
        let hidden = cfg.token_dim * cfg.gate_mult;
        let stem = Conv2d::new(3, cfg.feature_channels, 3, rng);
        let embed = Linear::new(tok, cfg.token_dim, rng);
        let blocks = (0..cfg.blocks)
            .map(|_| {
                if cross {
                    TransformerBlock::cross_attention(cfg.token_dim, cfg.prior_channels, cfg.heads, hidden, rng)
                } else {
                    TransformerBlock::self_attention(cfg.token_dim, cfg.heads, hidden, rng)
                }
            })
            .collect();
        Backbone {
            stem,
            embed,
            blocks,
            unembed: Linear::new(cfg.token_dim, tok, rng),
            head: Conv2d::new(cfg.feature_channels, 3, 3, rng),
            patch: cfg.patch,
        }
    }

    /// Unsquashed `(1, 3, H, W)` output.
    fn forward(&self, img: &Tensor, context: Option<&Tensor>) -> Result<Tensor> {
        let (h, w) = (img.shape()[2], img.shape()[3]);
        let features = silu(&self.stem.forward(img)?)?;
        let f = features.shape()[1];
        let mut tokens = self.embed.forward(&patchify(&features, self.patch)?)?;
        for block in &self.blocks {
            tokens = block.forward(&tokens, context)?;
        }
        let back = unpatchify(&self.unembed.forward(&tokens)?, f, h, w, self.patch)?;
        self.head.forward(&silu(&back.add(&features)?)?)
    }
}

impl Module for Backbone {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.stem.visit(&join(prefix, "stem"), f);
        self.embed.visit(&join(prefix, "embed"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.unembed.visit(&join(prefix, "unembed"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.stem.visit_mut(&join(prefix, "stem"), f);
        self.embed.visit_mut(&join(prefix, "embed"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.unembed.visit_mut(&join(prefix, "unembed"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

fn check_image_tensor(img: &Tensor, patch: usize) -> Result<()> {
    match img.shape() {
        &[1, 3, h, w] if h % patch == 0 && w % patch == 0 => Ok(()),
        s => Err(Error::Shape(format!(
            "expected (1, 3, H, W) with sides divisible by {patch}, got {s:?}"
        ))),
    }
}

/// Rescales an image to mean `0.5`, treating it as a constant.
fn normalize_exposure(img: &Tensor) -> Result<Tensor> {
    let mean = img.data().iter().sum::<f64>() / img.numel() as f64;
    Ok(img.stop_gradient().mul_scalar(0.5 / mean.max(1e-3))?)
}

/// Logit of the mean per-pixel channel maximum: the level a flat
/// illumination map would start from.
fn exposure_logit(img: &Tensor) -> Result<f64> {
    let level = img.max(&[1], false)?.data().iter().sum::<f64>() / (img.numel() / img.shape()[1]) as f64;
    let p = level.clamp(0.01, 0.99);
    Ok((p / (1.0 - p)).ln())
}

/// Reflectance branch; cross-attends to the degradation representation.
#[derive(Debug, Clone)]
pub struct RefNet(pub Backbone);

impl RefNet {
    pub fn forward(&self, img: &Tensor, p: &DegradationRepr) -> Result<Tensor> {
        check_image_tensor(img, self.0.patch)?;
        if p.0.shape()[2..] != img.shape()[2..] {
            return Err(Error::Shape(format!(
                "prior map {:?} does not match image {:?}",
                p.0.shape(),
                img.shape()
            )));
        }
        let context = pool_tokens(&p.0, self.0.patch)?;
        Ok(self.0.forward(&normalize_exposure(img)?, Some(&context))?.sigmoid()?)
    }
}

/// Illumination branch; output squashed into `(ILLUMINATION_FLOOR, 1]`.
#[derive(Debug, Clone)]
pub struct LumNet(pub Backbone);

impl LumNet {
    pub fn forward(&self, img: &Tensor) -> Result<Tensor> {
        check_image_tensor(img, self.0.patch)?;
        let s = self.0.forward(img, None)?.add_scalar(exposure_logit(img)?)?.sigmoid()?;
        Ok(s.mul_scalar(1.0 - ILLUMINATION_FLOOR)?.add_scalar(ILLUMINATION_FLOOR)?)
    }
}

/// Correction head: one self-attention stack over the illumination, global
/// average pool, two linear layers, squash into `(ALPHA_FLOOR, 1]`.
#[derive(Debug, Clone)]
pub struct LcNet {
    pub stem: Conv2d,
    pub embed: Linear,
    pub blocks: Vec<TransformerBlock>,
    pub fc1: Linear,
    pub fc2: Linear,
    pub patch: usize,
}

impl LcNet {
    fn new<R: Rng + ?Sized>(cfg: &ArchConfig, rng: &mut R) -> Self {
        let tok = cfg.feature_channels * cfg.patch * cfg.patch;
        LcNet {
            stem: Conv2d::new(3, cfg.feature_channels, 3, rng),
            embed: Linear::new(tok, cfg.token_dim, rng),
            blocks: (0..cfg.blocks)
                .map(|_| TransformerBlock::self_attention(cfg.token_dim, cfg.heads, cfg.token_dim * cfg.gate_mult, rng))
                .collect(),
            fc1: Linear::new(cfg.token_dim, cfg.lc_hidden, rng),
            fc2: Linear::new(cfg.lc_hidden, 1, rng),
            patch: cfg.patch,
        }
    }

    /// `α` as a `(1, 1, 1, 1)` tensor.
    pub fn forward(&self, illumination: &Tensor) -> Result<Tensor> {
        check_image_tensor(illumination, self.patch)?;
        let features = silu(&self.stem.forward(illumination)?)?;
        let mut tokens = self.embed.forward(&patchify(&features, self.patch)?)?;
        for block in &self.blocks {
            tokens = block.forward(&tokens, None)?;
        }
        let pooled = tokens.mean(&[0], true)?;
        let z = self.fc2.forward(&silu(&self.fc1.forward(&pooled)?)?)?;
        let alpha = z.sigmoid()?.mul_scalar(1.0 - ALPHA_FLOOR)?.add_scalar(ALPHA_FLOOR)?;
        Ok(alpha.reshape(&[1, 1, 1, 1])?)
    }
}

impl Module for LcNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.stem.visit(&join(prefix, "stem"), f);
        self.embed.visit(&join(prefix, "embed"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.stem.visit_mut(&join(prefix, "stem"), f);
        self.embed.visit_mut(&join(prefix, "embed"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
    }
}

/// Result of one decomposition; all tensors `(1, ·, H, W)` except `alpha`.
#[derive(Debug, Clone)]
pub struct RetinexDecomp {
    pub r: Tensor,
    pub l: Tensor,
    pub alpha: Tensor,
    pub i_en: Tensor,
}

impl RetinexDecomp {
    /// `i_en = r ⊙ l^alpha`.
    pub fn compose(r: Tensor, l: Tensor, alpha: Tensor) -> Result<Self> {
        let i_en = r.mul(&l.pow(&alpha)?)?;
        Ok(RetinexDecomp { r, l, alpha, i_en })
    }

    pub fn alpha_value(&self) -> f64 {
        self.alpha.data()[0]
    }
}

#[derive(Debug, Clone)]
pub struct DeNet {
    pub config: ArchConfig,
    pub encoder: PriorEncoder,
    pub refnet: RefNet,
    pub lumnet: LumNet,
    pub lcnet: LcNet,
}

impl DeNet {
    pub fn new<R: Rng + ?Sized>(config: ArchConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        Ok(DeNet {
            encoder: PriorEncoder::new(config.prior_channels, rng),
            refnet: RefNet(Backbone::new(&config, true, rng)),
            lumnet: LumNet(Backbone::new(&config, false, rng)),
            lcnet: LcNet::new(&config, rng),
            config,
        })
    }

    fn bandwidth(&self, img: &ImageRGB, t: Option<usize>) -> Result<usize> {
        match t {
            Some(t) => Ok(t),
            None => default_bandwidth(img.height(), img.width()),
        }
    }

    pub fn degradation(&self, img: &ImageRGB, t: Option<usize>) -> Result<DegradationRepr> {
        let stack = PriorStack::compute(img, self.bandwidth(img, t)?)?;
        self.encoder.forward(&stack.to_tensor()?)
    }

    /// Reflectance of an image whose sides are multiples of the patch size.
    pub fn reflectance(&self, img: &ImageRGB, t: Option<usize>) -> Result<Tensor> {
        let p = self.degradation(img, t)?;
        self.refnet.forward(&img.to_tensor(), &p)
    }

    /// Full decomposition of an image whose sides are multiples of the patch
    /// size (`None` picks the default bandwidth for its size).
    pub fn decompose(&self, img: &ImageRGB, t: Option<usize>) -> Result<RetinexDecomp> {
        let x = img.to_tensor();
        let p = self.degradation(img, t)?;
        let r = self.refnet.forward(&x, &p)?;
        let l = self.lumnet.forward(&x)?;
        let alpha = self.lcnet.forward(&l)?;
        RetinexDecomp::compose(r, l, alpha)
    }

    /// Decomposition of an arbitrary-size image: sides are edge-padded up to
    /// a multiple of the patch size and the outputs cropped back.
    pub fn decompose_any(&self, img: &ImageRGB, t: Option<usize>) -> Result<RetinexDecomp> {
        let p = self.config.patch;
        let (h, w) = (img.height(), img.width());
        let (ph, pw) = (h.div_ceil(p) * p, w.div_ceil(p) * p);
        if (ph, pw) == (h, w) {
            return self.decompose(img, t);
        }
        let padded = pad_edge(img, ph, pw)?;
        let d = self.decompose(&padded, t)?;
        let crop = |x: &Tensor| -> Result<Tensor> { Ok(x.slice(2, 0, h)?.slice(3, 0, w)?) };
        Ok(RetinexDecomp {
            r: crop(&d.r)?,
            l: crop(&d.l)?,
            i_en: crop(&d.i_en)?,
            alpha: d.alpha,
        })
    }
}

/// Replicates the last row/column out to `h`×`w`.
pub fn pad_edge(img: &ImageRGB, h: usize, w: usize) -> Result<ImageRGB> {
    let mut px = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            px.extend(img.pixel(y.min(img.height() - 1), x.min(img.width() - 1)));
        }
    }
    ImageRGB::new(h, w, px)
}

impl Module for DeNet {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.encoder.visit(&join(prefix, "ficoder"), f);
        self.refnet.0.visit(&join(prefix, "refnet"), f);
        self.lumnet.0.visit(&join(prefix, "lumnet"), f);
        self.lcnet.visit(&join(prefix, "lcnet"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.encoder.visit_mut(&join(prefix, "ficoder"), f);
        self.refnet.0.visit_mut(&join(prefix, "refnet"), f);
        self.lumnet.0.visit_mut(&join(prefix, "lumnet"), f);
        self.lcnet.visit_mut(&join(prefix, "lcnet"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noisy(h: usize, w: usize, seed: u64) -> ImageRGB {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageRGB::new(h, w, (0..h * w * 3).map(|_| rng.gen_range(0.0..0.4)).collect()).unwrap()
    }

    fn model(cfg: ArchConfig) -> DeNet {
        DeNet::new(cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap()
    }

    #[test]
    fn counted_parameters_match_formula() {
        for cfg in [ArchConfig::desk(), ArchConfig::paper(), ArchConfig::tiny()] {
            assert_eq!(model(cfg).parameter_count(), cfg.parameter_count(), "{cfg:?}");
        }
    }

    #[test]
    fn decomposition_ranges_and_shapes() {
        let net = model(ArchConfig::desk());
        let img = noisy(16, 24, 1);
        let d = net.decompose(&img, None).unwrap();
        assert_eq!(d.r.shape(), &[1, 3, 16, 24]);
        assert_eq!(d.i_en.shape(), &[1, 3, 16, 24]);
        assert!(d.r.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(d.l.data().iter().all(|&v| v > 0.0 && v <= 1.0));
        let a = d.alpha_value();
        assert!(a > 0.0 && a <= 1.0);
        assert_eq!(d.alpha.numel(), 1);
        for (l, e) in d.l.data().iter().zip(d.l.pow(&d.alpha).unwrap().data()) {
            assert!(e >= l);
        }
    }

    #[test]
    fn unit_exponent_reconstructs_product() {
        let net = model(ArchConfig::desk());
        let d = net.decompose(&noisy(8, 8, 2), None).unwrap();
        let plain = RetinexDecomp::compose(d.r.clone(), d.l.clone(), Tensor::ones(&[1, 1, 1, 1])).unwrap();
        assert_eq!(plain.i_en.data(), d.r.mul(&d.l).unwrap().data());
    }

    #[test]
    fn prior_changes_reflectance() {
        let net = model(ArchConfig::desk());
        let img = noisy(16, 16, 3);
        let x = img.to_tensor();
        let p1 = net.degradation(&img, None).unwrap();
        let p2 = net.degradation(&noisy(16, 16, 4), None).unwrap();
        let a = net.refnet.forward(&x, &p1).unwrap();
        let b = net.refnet.forward(&x, &p2).unwrap();
        let diff = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(diff > 0.0);
    }

    #[test]
    fn arbitrary_sizes_are_padded_and_cropped() {
        let net = model(ArchConfig::desk());
        let d = net.decompose_any(&noisy(10, 13, 5), None).unwrap();
        assert_eq!(d.i_en.shape(), &[1, 3, 10, 13]);
        assert!(net.decompose(&noisy(10, 13, 5), None).is_err());
    }

    #[test]
    fn inference_is_deterministic() {
        let net = model(ArchConfig::desk());
        let img = noisy(8, 12, 6);
        let a = net.decompose(&img, None).unwrap();
        let b = net.decompose(&img, None).unwrap();
        assert_eq!(a.i_en.data(), b.i_en.data());
    }

    #[test]
    fn paper_scale_count() {
        let n = ArchConfig::paper().parameter_count();
        assert!((324_000..=396_000).contains(&n), "{n}");
    }

    #[test]
    fn heads_must_divide_token_dim() {
        let cfg = ArchConfig {
            heads: 3,
            ..ArchConfig::desk()
        };
        assert!(cfg.validate().is_err());
    }
}

//! Training configuration and its flat `key = value` text form.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::nets::ArchConfig;
use crate::pairgen::{MaskStrategy, SigmaInterval};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: u64,
    pub batch_size: usize,
    pub crop_size: usize,
    pub sigma: SigmaInterval,
    pub mask_strategy: MaskStrategy,
    /// Fixed band-mask bandwidth; `None` derives it from each image size.
    pub bandwidth: Option<usize>,
    pub weights: LossWeights,
    pub arch: ArchConfig,
    pub dataset: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Iterations between checkpoints; 0 writes only the final one.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 123,
            learning_rate: 1e-5,
            epochs: 100,
            batch_size: 1,
            crop_size: 128,
            sigma: SigmaInterval::default(),
            mask_strategy: MaskStrategy::Neighbor,
            bandwidth: None,
            weights: LossWeights::default(),
            arch: ArchConfig::desk(),
            dataset: None,
            out_dir: PathBuf::from("runs"),
            checkpoint_every: 0,
        }
    }
}

/// Every key accepted by [`TrainConfig::set`], in file order.
pub const KEYS: &[&str] = &[
    "seed",
    "learning_rate",
    "epochs",
    "batch_size",
    "crop_size",
    "sigma_low",
    "sigma_high",
    "mask_strategy",
    "bandwidth",
    "w_r",
    "w_l",
    "w_con",
    "w_enh",
    "w_reg",
    "w_exp",
    "w_col",
    "e_target",
    "patch_size",
    "feature_channels",
    "token_dim",
    "heads",
    "blocks",
    "patch",
    "gate_mult",
    "prior_channels",
    "lc_hidden",
    "dataset",
    "out_dir",
    "checkpoint_every",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let a = &mut self.arch;
        let w = &mut self.weights;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "crop_size" => self.crop_size = parse(key, v)?,
            "sigma_low" => self.sigma.low = parse(key, v)?,
            "sigma_high" => self.sigma.high = parse(key, v)?,
            "mask_strategy" => self.mask_strategy = v.parse()?,
            "bandwidth" => {
                self.bandwidth = match v {
                    "auto" => None,
                    _ => Some(parse(key, v)?),
                }
            }
            "w_r" => w.w_r = parse(key, v)?,
            "w_l" => w.w_l = parse(key, v)?,
            "w_con" => w.w_con = parse(key, v)?,
            "w_enh" => w.w_enh = parse(key, v)?,
            "w_reg" => w.w_reg = parse(key, v)?,
            "w_exp" => w.w_exp = parse(key, v)?,
            "w_col" => w.w_col = parse(key, v)?,
            "e_target" => w.e_target = parse(key, v)?,
            "patch_size" => w.patch_size = parse(key, v)?,
            "feature_channels" => a.feature_channels = parse(key, v)?,
            "token_dim" => a.token_dim = parse(key, v)?,
            "heads" => a.heads = parse(key, v)?,
            "blocks" => a.blocks = parse(key, v)?,
            "patch" => a.patch = parse(key, v)?,
            "gate_mult" => a.gate_mult = parse(key, v)?,
            "prior_channels" => a.prior_channels = parse(key, v)?,
            "lc_hidden" => a.lc_hidden = parse(key, v)?,
            "dataset" => self.dataset = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "out_dir" => self.out_dir = PathBuf::from(v),
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Value of `key` as written to a config file.
    pub fn get(&self, key: &str) -> Result<String> {
        let a = &self.arch;
        let w = &self.weights;
        Ok(match key {
            "seed" => self.seed.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "crop_size" => self.crop_size.to_string(),
            "sigma_low" => self.sigma.low.to_string(),
            "sigma_high" => self.sigma.high.to_string(),
            "mask_strategy" => self.mask_strategy.to_string(),
            "bandwidth" => self.bandwidth.map_or_else(|| "auto".to_string(), |t| t.to_string()),
            "w_r" => w.w_r.to_string(),
            "w_l" => w.w_l.to_string(),
            "w_con" => w.w_con.to_string(),
            "w_enh" => w.w_enh.to_string(),
            "w_reg" => w.w_reg.to_string(),
            "w_exp" => w.w_exp.to_string(),
            "w_col" => w.w_col.to_string(),
            "e_target" => w.e_target.to_string(),
            "patch_size" => w.patch_size.to_string(),
            "feature_channels" => a.feature_channels.to_string(),
            "token_dim" => a.token_dim.to_string(),
            "heads" => a.heads.to_string(),
            "blocks" => a.blocks.to_string(),
            "patch" => a.patch.to_string(),
            "gate_mult" => a.gate_mult.to_string(),
            "prior_channels" => a.prior_channels.to_string(),
            "lc_hidden" => a.lc_hidden.to_string(),
            "dataset" => self.dataset.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "out_dir" => self.out_dir.display().to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        })
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning_rate {} must be finite and nonnegative", self.learning_rate));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.crop_size == 0 {
            return bad("epochs, batch_size and crop_size must be positive".into());
        }
        SigmaInterval::new(self.sigma.low, self.sigma.high)?;
        self.weights.validate()?;
        self.arch.validate()?;
        if self.bandwidth == Some(0) {
            return bad("bandwidth must be positive or `auto`".into());
        }
        let (sh, sw) = self.mask_strategy.output_size(self.crop_size, self.crop_size);
        if self.crop_size % 2 != 0 {
            return bad(format!("crop_size {} must be even", self.crop_size));
        }
        for side in [sh, sw] {
            if side % self.arch.patch != 0 || side % self.weights.patch_size != 0 {
                return bad(format!(
                    "sub-image side {side} must be a multiple of the token patch {} and the loss patch {}",
                    self.arch.patch, self.weights.patch_size
                ));
            }
        }
        Ok(())
    }
}

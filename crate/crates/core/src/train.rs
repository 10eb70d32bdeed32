//! Training state, the per-crop step and the epoch loop.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use dimlight_tensor::{Adam, AdamConfig, Tensor, TensorError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::data::{epoch_order, Dataset};
use crate::error::{Error, Result};
use crate::image::{augment, random_crop, ImageRGB};
use crate::losses::{loss_con, loss_enh, loss_l, loss_r, loss_reg, total_loss, LossBreakdown, LossTerms, LossWeights};
use crate::nets::{DeNet, RetinexDecomp};
use crate::nn::Module;
use crate::pairgen::{make_pair, SubImagePair};

pub const LOG_HEADER: &str = "iter,l_r,l_reg,l_l,l_con,l_enh,total,alpha,sigma";
pub const LOG_FILE: &str = "train_log.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: TrainConfig,
    pub net: DeNet,
    pub optimizer: Adam,
    /// Drives initialization, crops, augmentation, masks and σ draws.
    pub rng: ChaCha8Rng,
    pub iteration: u64,
    pub epoch: u64,
    /// Next index into the current epoch's order.
    pub position: usize,
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let net = DeNet::new(config.arch, &mut rng)?;
        let sizes: Vec<usize> = net.parameters().iter().map(|(_, t)| t.numel()).collect();
        let optimizer = Adam::new(
            AdamConfig {
                learning_rate: config.learning_rate,
                ..AdamConfig::default()
            },
            sizes,
        );
        Ok(TrainState {
            config,
            net,
            optimizer,
            rng,
            iteration: 0,
            epoch: 0,
            position: 0,
        })
    }
}

/// One logged step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub iteration: u64,
    pub losses: LossBreakdown,
    pub alpha: f64,
    pub sigma: f64,
}

impl StepRecord {
    pub fn csv_row(&self) -> String {
        let l = &self.losses;
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.iteration, l.l_r, l.l_reg, l.l_l, l.l_con, l.l_enh, l.total, self.alpha, self.sigma
        )
    }
}

/// Forward pass of every loss for one crop and its sub-image pair.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub total: Tensor,
    pub losses: LossBreakdown,
    pub decomp: RetinexDecomp,
}

/// Decomposes `d1`, runs the reflectance branch on the brightened twin and
/// on the full crop, and assembles the weighted objective.
pub fn forward_losses(
    net: &DeNet,
    crop: &ImageRGB,
    pair: &SubImagePair,
    weights: &LossWeights,
    bandwidth: Option<usize>,
) -> Result<ForwardPass> {
    let x1 = pair.d1.to_tensor();
    let decomp = net.decompose(&pair.d1, bandwidth)?;
    let r2 = net.reflectance(&pair.d2_enhanced, bandwidth)?;
    let full = net.reflectance(crop, bandwidth)?;
    let (m1, m2) = pair.mask.apply_tensor(&full)?;

    let l_reg = loss_reg(&decomp.r, &r2, &m1, &m2)?;
    let terms = LossTerms {
        l_r: loss_r(&decomp.r, &r2, &l_reg, weights.w_reg)?,
        l_l: loss_l(&decomp.r, &decomp.l, &x1)?,
        l_con: loss_con(&decomp.i_en, &x1, weights.patch_size)?,
        l_enh: loss_enh(&decomp.i_en, weights)?,
        l_reg,
    };
    let (total, losses) = total_loss(&terms, weights)?;
    Ok(ForwardPass { total, losses, decomp })
}

fn non_finite(iteration: u64, e: Error) -> Error {
    match e {
        Error::Tensor(TensorError::NonFinite { op }) => Error::NonFiniteLoss {
            iteration,
            detail: format!("`{op}` produced a non-finite value"),
        },
        other => other,
    }
}

/// One optimizer update over `crops` (a batch; losses are averaged).
pub fn train_step(state: &mut TrainState, crops: &[ImageRGB]) -> Result<StepRecord> {
    if crops.is_empty() {
        return Err(Error::Dataset("empty batch".into()));
    }
    let iteration = state.iteration + 1;
    let cfg = &state.config;
    let scale = 1.0 / crops.len() as f64;
    let mut objective = Tensor::scalar(0.0);
    let mut sum = LossBreakdown::default();
    let (mut alpha, mut sigma) = (0.0, 0.0);
    for crop in crops {
        let pair = make_pair(crop, cfg.sigma, cfg.mask_strategy, &mut state.rng)?;
        let pass = forward_losses(&state.net, crop, &pair, &cfg.weights, cfg.bandwidth)
            .map_err(|e| non_finite(iteration, e))?;
        objective = objective.add(&pass.total.mul_scalar(scale)?)?;
        let l = pass.losses;
        sum.l_r += l.l_r * scale;
        sum.l_reg += l.l_reg * scale;
        sum.l_l += l.l_l * scale;
        sum.l_con += l.l_con * scale;
        sum.l_enh += l.l_enh * scale;
        sum.total += l.total * scale;
        alpha += pass.decomp.alpha_value() * scale;
        sigma += pair.sigma * scale;
    }
    if !sum.total.is_finite() {
        return Err(Error::NonFiniteLoss {
            iteration,
            detail: format!("{sum:?}"),
        });
    }
    objective.backward().map_err(|e| non_finite(iteration, e.into()))?;
    let mut params: Vec<Tensor> = state.net.parameters().into_iter().map(|(_, t)| t).collect();
    state.optimizer.step(&mut params).map_err(|e| non_finite(iteration, e.into()))?;
    state.net.load_parameters(&params)?;
    state.iteration = iteration;
    Ok(StepRecord {
        iteration,
        losses: sum,
        alpha,
        sigma,
    })
}

/// Fails unless every parameter is finite.
fn check_parameters(net: &DeNet, iteration: u64) -> Result<()> {
    for (name, t) in net.parameters() {
        if t.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss {
                iteration,
                detail: format!("parameter {name} is non-finite"),
            });
        }
    }
    Ok(())
}

/// Writes a plain-text summary of the state at the point a run failed.
pub fn write_diagnostic(state: &TrainState, err: &Error, path: &Path) -> Result<()> {
    let mut text = format!("error: {err}\niteration: {}\nepoch: {}\nposition: {}\n", state.iteration, state.epoch, state.position);
    for (name, t) in state.net.parameters() {
        let max = t.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        text.push_str(&format!("{name}: max|w| = {max}\n"));
    }
    text.push_str("\n");
    text.push_str(&state.config.to_text());
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Where a run writes its artifacts.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub log: PathBuf,
    pub final_checkpoint: PathBuf,
    pub checkpoints: Vec<PathBuf>,
}

/// Opens the log for a run at `iteration`: a fresh file with a header at 0,
/// otherwise the existing file cut back to its first `iteration` rows.
fn open_log(path: &Path, iteration: u64) -> Result<File> {
    let mut text = format!("{LOG_HEADER}\n");
    if iteration > 0 {
        let old = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rows: Vec<&str> = old.lines().skip(1).take(iteration as usize).collect();
        if rows.len() as u64 != iteration {
            return Err(Error::Checkpoint(format!(
                "{} has {} rows, checkpoint is at iteration {iteration}",
                path.display(),
                rows.len()
            )));
        }
        for row in rows {
            text.push_str(row);
            text.push('\n');
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))
}

/// Runs (or continues) the epoch loop until `stop_at` iterations or the end
/// of the configured epochs, logging every step and checkpointing on the
/// configured cadence. The final checkpoint is written only when all epochs
/// have completed.
pub fn run_until(state: &mut TrainState, dataset: &Dataset, stop_at: Option<u64>) -> Result<RunPaths> {
    if dataset.is_empty() {
        return Err(Error::Dataset("dataset is empty".into()));
    }
    let out = state.config.out_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let log_path = out.join(LOG_FILE);
    let mut log = open_log(&log_path, state.iteration)?;
    let mut paths = RunPaths {
        log: log_path.clone(),
        final_checkpoint: out.join(FINAL_CHECKPOINT),
        checkpoints: Vec::new(),
    };
    let n = dataset.len();
    while state.epoch < state.config.epochs {
        let order = epoch_order(n, state.config.seed, state.epoch);
        while state.position < n {
            if stop_at.is_some_and(|s| state.iteration >= s) {
                return Ok(paths);
            }
            let end = (state.position + state.config.batch_size).min(n);
            let mut crops = Vec::with_capacity(end - state.position);
            for &idx in &order[state.position..end] {
                let img = dataset.get(idx)?;
                let crop = random_crop(&img, state.config.crop_size, &mut state.rng)?;
                crops.push(augment(&crop, &mut state.rng));
            }
            let record = match train_step(state, &crops).and_then(|r| {
                check_parameters(&state.net, r.iteration)?;
                Ok(r)
            }) {
                Ok(r) => r,
                Err(e) => {
                    let _ = write_diagnostic(state, &e, &out.join("diagnostic.txt"));
                    return Err(e);
                }
            };
            state.position = end;
            writeln!(log, "{}", record.csv_row()).map_err(|e| Error::io(&log_path, e))?;
            let every = state.config.checkpoint_every;
            if every > 0 && state.iteration % every == 0 {
                let p = out.join(format!("checkpoint-{:08}.ckpt", state.iteration));
                crate::checkpoint::save(state, &p)?;
                paths.checkpoints.push(p);
            }
        }
        state.epoch += 1;
        state.position = 0;
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    crate::checkpoint::save(state, &paths.final_checkpoint)?;
    Ok(paths)
}

/// Images in the smoke corpus and their side length.
pub const SMOKE_IMAGES: usize = 8;
pub const SMOKE_SIZE: usize = 64;
pub const SMOKE_ITERATIONS: u64 = 200;

/// Desk-scale run used for quick end-to-end checks: 25 epochs over eight
/// 64×64 synthetic images, whole-image crops.
pub fn smoke_config(out_dir: &Path) -> TrainConfig {
    TrainConfig {
        learning_rate: 5e-4,
        epochs: SMOKE_ITERATIONS / SMOKE_IMAGES as u64,
        crop_size: SMOKE_SIZE,
        out_dir: out_dir.to_path_buf(),
        ..TrainConfig::default()
    }
}

pub fn smoke_dataset(seed: u64) -> Result<Dataset> {
    Ok(Dataset::Memory(crate::data::synthetic_low_light(SMOKE_IMAGES, SMOKE_SIZE, seed)?))
}

/// Fresh run from `config` over all epochs.
pub fn run_training(config: &TrainConfig, dataset: &Dataset) -> Result<(TrainState, RunPaths)> {
    let mut state = TrainState::new(config.clone())?;
    let paths = run_until(&mut state, dataset, None)?;
    Ok((state, paths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_low_light;
    use crate::nets::ArchConfig;

    fn small_config(dir: &Path) -> TrainConfig {
        TrainConfig {
            epochs: 2,
            crop_size: 16,
            learning_rate: 1e-3,
            arch: ArchConfig::tiny(),
            weights: LossWeights {
                patch_size: 4,
                ..LossWeights::default()
            },
            out_dir: dir.to_path_buf(),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..small_config(dir.path())
        };
        let mut state = TrainState::new(cfg).unwrap();
        let before: Vec<Vec<f64>> = state.net.parameters().iter().map(|(_, t)| t.to_vec()).collect();
        let img = synthetic_low_light(1, 16, 0).unwrap().remove(0);
        train_step(&mut state, &[img]).unwrap();
        let after: Vec<Vec<f64>> = state.net.parameters().iter().map(|(_, t)| t.to_vec()).collect();
        assert_eq!(before, after);
        assert_eq!(state.iteration, 1);
    }

    #[test]
    fn log_has_one_row_per_image_and_epoch() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let data = Dataset::Memory(synthetic_low_light(3, 16, 1).unwrap());
        let (state, paths) = run_training(&cfg, &data).unwrap();
        assert_eq!(state.iteration, 6);
        let log = fs::read_to_string(&paths.log).unwrap();
        let rows: Vec<&str> = log.lines().skip(1).collect();
        assert_eq!(rows.len(), 6);
        for row in rows {
            let sigma: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
            assert!(sigma > 1.3 && sigma < 1.7);
        }
        assert!(paths.final_checkpoint.exists());
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut state = TrainState::new(small_config(dir.path())).unwrap();
        assert!(run_until(&mut state, &Dataset::Memory(Vec::new()), None).is_err());
    }
}

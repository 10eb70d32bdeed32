use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Arg, ArgAction, ArgMatches, Args, Command, FromArgMatches};
use dimlight_core::config::KEYS;

/// Flags for `train`: a config file, one override per config key, and the
/// resume/synthetic switches.
#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub config: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub synthetic: Option<usize>,
    /// `(key, value)` in config-file order.
    pub overrides: Vec<(&'static str, String)>,
}

pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn key_help(key: &str) -> &'static str {
    match key {
        "seed" => "Seed for initialization, crops, masks and epoch order",
        "learning_rate" => "Adam step size",
        "epochs" => "Passes over the dataset",
        "batch_size" => "Crops per optimizer step",
        "crop_size" => "Side of the square training crop (even)",
        "sigma_low" => "Lower end of the gamma control interval (> 1)",
        "sigma_high" => "Upper end of the gamma control interval",
        "mask_strategy" => "Sub-image sampler: neighbor, noise2fast_h, noise2fast_w or mean",
        "bandwidth" => "DCT band width, or `auto` to derive it from the image size",
        "w_r" => "Weight of the reflectance loss",
        "w_l" => "Weight of the illumination loss",
        "w_con" => "Weight of the contrast consistency loss",
        "w_enh" => "Weight of the enhancement loss",
        "w_reg" => "Weight of the full-resolution reflectance regularizer",
        "w_exp" => "Exposure weight inside the enhancement loss",
        "w_col" => "Color-balance weight inside the enhancement loss",
        "e_target" => "Target patch brightness E",
        "patch_size" => "Patch side for the contrast and exposure statistics",
        "feature_channels" => "Convolutional feature width",
        "token_dim" => "Transformer token width",
        "heads" => "Attention heads (must divide token-dim)",
        "blocks" => "Transformer blocks per branch",
        "patch" => "Pixels per token side",
        "gate_mult" => "Hidden width multiplier of the gated feed-forward",
        "prior_channels" => "Width of the degradation representation",
        "lc_hidden" => "Hidden width of the exponent head",
        "dataset" => "Directory of low-light training images",
        "out_dir" => "Directory for the log and checkpoints",
        "checkpoint_every" => "Iterations between checkpoints (0: final only)",
        _ => "",
    }
}

impl Args for TrainArgs {
    fn augment_args(cmd: Command) -> Command {
        let mut cmd = cmd
            .arg(
                Arg::new("config")
                    .long("config")
                    .value_name("FILE")
                    .value_parser(clap::value_parser!(PathBuf))
                    .help("Config file of `key = value` lines; flags override it"),
            )
            .arg(
                Arg::new("resume")
                    .long("resume")
                    .value_name("CHECKPOINT")
                    .value_parser(clap::value_parser!(PathBuf))
                    .conflicts_with("config")
                    .help("Continue a run from a checkpoint, with the configuration stored in it"),
            )
            .arg(
                Arg::new("synthetic")
                    .long("synthetic")
                    .value_name("COUNT")
                    .value_parser(clap::value_parser!(usize))
                    .help("Train on COUNT synthetic 64x64 low-light images instead of a dataset"),
            );
        for key in KEYS {
            let mut arg = Arg::new(*key)
                .long(flag_name(key))
                .value_name("VALUE")
                .action(ArgAction::Set)
                .help(key_help(key));
            if key.contains('_') {
                arg = arg.alias(*key);
            }
            if *key == "out_dir" {
                arg = arg.visible_alias("out");
            }
            cmd = cmd.arg(arg);
        }
        cmd
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

impl FromArgMatches for TrainArgs {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let overrides: Vec<(&'static str, String)> = KEYS
            .iter()
            .filter_map(|k| m.get_one::<String>(k).map(|v| (*k, v.clone())))
            .collect();
        let resume = m.get_one::<PathBuf>("resume").cloned();
        if resume.is_some() {
            if let Some((k, _)) = overrides.iter().find(|(k, _)| *k != "dataset") {
                return Err(clap::Error::raw(
                    ErrorKind::ArgumentConflict,
                    format!("--{} cannot change a resumed run; only --dataset may be given with --resume\n", flag_name(k)),
                ));
            }
        }
        Ok(TrainArgs {
            config: m.get_one::<PathBuf>("config").cloned(),
            resume,
            synthetic: m.get_one::<usize>("synthetic").copied(),
            overrides,
        })
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

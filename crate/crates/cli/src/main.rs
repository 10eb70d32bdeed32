mod train_args;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use dimlight_core::checkpoint;
use dimlight_core::config::TrainConfig;
use dimlight_core::data::{synthetic_low_light, Dataset};
use dimlight_core::image::{list_images, load_image, save_image, ImageRGB};
use dimlight_core::infer::enhance;
use dimlight_core::metrics::MetricReport;
use dimlight_core::pairgen::{make_pair, MaskStrategy, SigmaInterval};
use dimlight_core::priors::{default_bandwidth, PriorStack};
use dimlight_core::train::{run_until, TrainState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use train_args::TrainArgs;

#[derive(Parser, Debug)]
#[command(name = "dimlight", version, about = "Zero-reference low-light enhancement and denoising")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Train a network on low-light images only
    Train(TrainArgs),
    /// Enhance an image or every image in a directory
    Enhance {
        /// Trained checkpoint
        #[arg(long, value_name = "CHECKPOINT")]
        checkpoint: PathBuf,
        /// Input image or directory
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Output directory
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Write the reflectance, illumination, exponent and enhanced images for one input
    Decompose {
        #[arg(long, value_name = "CHECKPOINT")]
        checkpoint: PathBuf,
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Write the illumination prior and the four DCT band maps of an image
    Priors {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Band width; derived from the image size when omitted
        #[arg(long, value_name = "T")]
        t: Option<usize>,
    },
    /// Write the two sub-images of one training pair and the sampled gamma factor
    Pair {
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 123)]
        seed: u64,
        /// neighbor, noise2fast_h, noise2fast_w or mean
        #[arg(long = "mask-strategy", alias = "mask_strategy", default_value = "neighbor")]
        mask_strategy: MaskStrategy,
        #[arg(long = "sigma-low", alias = "sigma_low", default_value_t = 1.3)]
        sigma_low: f64,
        #[arg(long = "sigma-high", alias = "sigma_high", default_value_t = 1.7)]
        sigma_high: f64,
    },
    /// Score enhanced images against references with the same file stem
    Eval {
        #[arg(long, value_name = "DIR")]
        enhanced: PathBuf,
        #[arg(long, value_name = "DIR")]
        reference: PathBuf,
        /// Directory for metrics.csv
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Run the built-in invariant checks
    Selftest,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .with_context(|| format!("{} has no usable file name", path.display()))
}

fn inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let files = list_images(path)?;
        if files.is_empty() {
            bail!("no PNG or PPM images in {}", path.display());
        }
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let mut state = match &args.resume {
        Some(ckpt) => {
            let mut s = checkpoint::load(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            for (k, v) in &args.overrides {
                s.config.set(k, v)?;
            }
            s
        }
        None => {
            let mut cfg = match &args.config {
                Some(p) => TrainConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
                None => TrainConfig::default(),
            };
            for (k, v) in &args.overrides {
                cfg.set(k, v)?;
            }
            TrainState::new(cfg)?
        }
    };
    let dataset = match (args.synthetic, &state.config.dataset) {
        (Some(n), _) => Dataset::Memory(synthetic_low_light(n, 64, state.config.seed)?),
        (None, Some(dir)) => Dataset::open(dir)?,
        (None, None) => bail!("no training data: give --dataset DIR or --synthetic COUNT"),
    };
    let paths = run_until(&mut state, &dataset, None)?;
    println!(
        "trained {} iterations; log {}, checkpoint {}",
        state.iteration,
        paths.log.display(),
        paths.final_checkpoint.display()
    );
    Ok(())
}

fn load_state(path: &Path) -> Result<TrainState> {
    checkpoint::load(path).with_context(|| format!("loading {}", path.display()))
}

fn run_enhance(ckpt: &Path, input: &Path, out: &Path) -> Result<()> {
    let state = load_state(ckpt)?;
    create_dir(out)?;
    for file in inputs(input)? {
        let img = load_image(&file)?;
        let result = enhance(&state.net, &img, state.config.bandwidth)?;
        let dest = out.join(format!("{}.png", stem(&file)?));
        save_image(&result.image, &dest)?;
        println!("{} -> {} (alpha {:.4})", file.display(), dest.display(), result.alpha);
    }
    Ok(())
}

fn run_decompose(ckpt: &Path, input: &Path, out: &Path) -> Result<()> {
    let state = load_state(ckpt)?;
    let img = load_image(input)?;
    let result = enhance(&state.net, &img, state.config.bandwidth)?;
    create_dir(out)?;
    let alpha = ImageRGB::filled(img.height(), img.width(), [result.alpha; 3])?;
    for (name, im) in [
        ("reflectance", &result.reflectance),
        ("illumination", &result.illumination),
        ("alpha", &alpha),
        ("enhanced", &result.image),
    ] {
        save_image(im, &out.join(format!("{name}.png")))?;
    }
    fs::write(out.join("alpha.txt"), format!("{}\n", result.alpha))?;
    println!("alpha {}", result.alpha);
    Ok(())
}

fn run_priors(input: &Path, out: &Path, t: Option<usize>) -> Result<()> {
    let img = load_image(input)?;
    let t = match t {
        Some(t) => t,
        None => default_bandwidth(img.height(), img.width())?,
    };
    let stack = PriorStack::compute(&img, t)?;
    create_dir(out)?;
    for (name, map) in ["i_lu", "c_low1", "c_low2", "c_high1", "c_high2"].iter().zip(stack.maps()) {
        save_image(&map.to_image()?, &out.join(format!("{name}.png")))?;
    }
    println!("wrote 5 prior maps with bandwidth {t} to {}", out.display());
    Ok(())
}

fn run_pair(input: &Path, out: &Path, seed: u64, strategy: MaskStrategy, low: f64, high: f64) -> Result<()> {
    let img = load_image(input)?;
    let interval = SigmaInterval::new(low, high)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pair = make_pair(&img, interval, strategy, &mut rng)?;
    create_dir(out)?;
    save_image(&pair.d1, &out.join("d1.png"))?;
    save_image(&pair.d2_enhanced, &out.join("d2_enhanced.png"))?;
    fs::write(out.join("sigma.txt"), format!("sigma = {}\nlambda = {}\n", pair.sigma, pair.lambda))?;
    println!("sigma {} (lambda {})", pair.sigma, pair.lambda);
    Ok(())
}

fn run_eval(enhanced: &Path, reference: &Path, out: &Path) -> Result<()> {
    let mut report = MetricReport::default();
    for file in inputs(enhanced)? {
        let name = stem(&file)?;
        let refs: Vec<PathBuf> = list_images(reference)?
            .into_iter()
            .filter(|p| p.file_stem().and_then(|s| s.to_str()) == Some(name.as_str()))
            .collect();
        let Some(ref_path) = refs.first() else {
            bail!("no reference image named {name} in {}", reference.display());
        };
        report.push(&name, &load_image(&file)?, &load_image(ref_path)?)?;
    }
    create_dir(out)?;
    fs::write(out.join("metrics.csv"), report.to_csv())?;
    if let Some((p, s)) = report.means() {
        println!("{} images: mean PSNR {p:.4} dB, mean SSIM {s:.4}", report.rows.len());
    }
    Ok(())
}

fn run_selftest() -> Result<()> {
    let checks = dimlight_core::selftest::run()?;
    let mut failed = 0;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        bail!("{failed} of {} checks failed", checks.len());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Train(args) => train(args),
        Cmd::Enhance { checkpoint, input, out } => run_enhance(&checkpoint, &input, &out),
        Cmd::Decompose { checkpoint, input, out } => run_decompose(&checkpoint, &input, &out),
        Cmd::Priors { input, out, t } => run_priors(&input, &out, t),
        Cmd::Pair {
            input,
            out,
            seed,
            mask_strategy,
            sigma_low,
            sigma_high,
        } => run_pair(&input, &out, seed, mask_strategy, sigma_low, sigma_high),
        Cmd::Eval { enhanced, reference, out } => run_eval(&enhanced, &reference, &out),
        Cmd::Selftest => run_selftest(),
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors and 0 for --help/--version
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dimlight_core::config::KEYS;
use dimlight_core::data::synthetic_low_light;
use dimlight_core::image::{list_images, save_image};

fn dimlight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dimlight")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_images(dir: &Path, count: usize, size: usize) {
    fs::create_dir_all(dir).unwrap();
    for (i, img) in synthetic_low_light(count, size, 5).unwrap().iter().enumerate() {
        save_image(img, &dir.join(format!("img{i}.png"))).unwrap();
    }
}

const TINY: &[&str] = &[
    "--feature-channels", "2", "--token-dim", "4", "--heads", "2", "--blocks", "1", "--patch", "2",
    "--gate-mult", "1", "--prior-channels", "2", "--lc-hidden", "2", "--crop-size", "16", "--patch-size", "4",
    "--learning-rate", "0.001",
];

#[test]
fn help_lists_every_flag() {
    let train = stdout(&dimlight(&["train", "--help"]));
    for key in KEYS {
        assert!(train.contains(&format!("--{}", key.replace('_', "-"))), "train --help lacks {key}");
    }
    for flag in ["--config", "--resume", "--synthetic"] {
        assert!(train.contains(flag));
    }
    let expected: &[(&str, &[&str])] = &[
        ("enhance", &["--checkpoint", "--in", "--out"]),
        ("decompose", &["--checkpoint", "--in", "--out"]),
        ("priors", &["--in", "--out", "--t"]),
        ("pair", &["--in", "--out", "--seed", "--mask-strategy", "--sigma-low", "--sigma-high"]),
        ("eval", &["--enhanced", "--reference", "--out"]),
        ("selftest", &["--help"]),
    ];
    for (sub, flags) in expected {
        let o = dimlight(&[sub, "--help"]);
        assert_eq!(code(&o), 0);
        for f in *flags {
            assert!(stdout(&o).contains(f), "{sub} --help lacks {f}");
        }
    }
}

#[test]
fn usage_errors_exit_2_and_runtime_errors_exit_1() {
    assert_eq!(code(&dimlight(&["train", "--no-such-flag", "1"])), 2);
    assert_eq!(code(&dimlight(&["frobnicate"])), 2);
    assert_eq!(code(&dimlight(&["priors", "--out", "x"])), 2);
    assert_eq!(code(&dimlight(&["train", "--resume", "a.ckpt", "--epochs", "3"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let missing = dir.path().join("missing.png");
    assert_eq!(code(&dimlight(&["priors", "--in", missing.to_str().unwrap(), "--out", out.to_str().unwrap()])), 1);
    let o = dimlight(&["train", "--learning-rate", "fast", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));
    assert_eq!(code(&dimlight(&["train", "--out-dir", out.to_str().unwrap()])), 1);
}

#[test]
fn priors_writes_exactly_five_images() {
    let dir = tempfile::tempdir().unwrap();
    write_images(&dir.path().join("in"), 1, 32);
    let img = dir.path().join("in/img0.png");
    let out = dir.path().join("priors");
    let o = dimlight(&["priors", "--t", "2", "--in", img.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(list_images(&out).unwrap().len(), 5);
    assert_eq!(fs::read_dir(&out).unwrap().count(), 5);
}

#[test]
fn pair_is_deterministic_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    write_images(&dir.path().join("in"), 1, 16);
    let img = dir.path().join("in/img0.png");
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = dimlight(&["pair", "--in", img.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed]);
        assert_eq!(code(&o), 0);
        ["d1.png", "d2_enhanced.png", "sigma.txt"].map(|f| fs::read(out.join(f)).unwrap())
    };
    assert_eq!(run("a", "9"), run("b", "9"));
    assert_ne!(run("a", "9")[2], run("c", "10")[2]);
}

#[test]
fn train_enhance_decompose_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let low = dir.path().join("low");
    write_images(&low, 2, 24);
    let run_dir = dir.path().join("run");
    let mut args = vec!["train", "--dataset", low.to_str().unwrap(), "--epochs", "2", "--out", run_dir.to_str().unwrap(), "--checkpoint-every", "2"];
    args.extend_from_slice(TINY);
    let o = dimlight(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(run_dir.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 5);
    let ckpt = run_dir.join("final.ckpt");

    // resume from the midpoint rewrites the same tail
    let o = dimlight(&["train", "--resume", run_dir.join("checkpoint-00000002.ckpt").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(run_dir.join("train_log.csv")).unwrap(), log);

    let enhanced = dir.path().join("enhanced");
    let o = dimlight(&["enhance", "--checkpoint", ckpt.to_str().unwrap(), "--in", low.to_str().unwrap(), "--out", enhanced.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(list_images(&enhanced).unwrap().len(), 2);

    let parts = dir.path().join("parts");
    let one = low.join("img0.png");
    let o = dimlight(&["decompose", "--checkpoint", ckpt.to_str().unwrap(), "--in", one.to_str().unwrap(), "--out", parts.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    for f in ["reflectance.png", "illumination.png", "alpha.png", "enhanced.png", "alpha.txt"] {
        assert!(parts.join(f).exists(), "{f}");
    }

    let scores = dir.path().join("scores");
    let o = dimlight(&["eval", "--enhanced", enhanced.to_str().unwrap(), "--reference", low.to_str().unwrap(), "--out", scores.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(scores.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "name,psnr,ssim");
    assert_eq!(lines.len(), 4);
    assert!(lines[3].starts_with("mean,"));
    assert!(stdout(&o).contains("mean PSNR"));
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    let mut text = String::from("epochs = 1\nseed = 4\n");
    for pair in TINY.chunks(2) {
        text.push_str(&format!("{} = {}\n", pair[0].trim_start_matches("--").replace('-', "_"), pair[1]));
    }
    fs::write(&conf, text).unwrap();
    let out = dir.path().join("run");
    let o = dimlight(&["train", "--config", conf.to_str().unwrap(), "--synthetic", "3", "--epochs", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("train_log.csv")).unwrap().lines().count(), 7);
}

#[test]
fn selftest_passes() {
    let o = dimlight(&["selftest"]);
    assert_eq!(code(&o), 0);
    assert!(!stdout(&o).contains("FAIL"));
    assert!(stdout(&o).lines().all(|l| l.starts_with("PASS")));
}

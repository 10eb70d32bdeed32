//! Quick invariant suite run by `dimlight selftest`.

use dimlight_tensor::functional::{layer_norm, silu};
use dimlight_tensor::gradcheck::check_gradients;
use dimlight_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dct::{dct2, idct2};
use crate::error::Result;
use crate::image::ImageRGB;
use crate::losses::{loss_con, loss_enh, loss_l_terms, LossWeights};
use crate::pairgen::{taylor_residual, SubsampleMask, ADJACENT_PAIRS};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn dct_round_trip(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    let mut parseval = 0.0f64;
    for _ in 0..20 {
        let (h, w) = (rng.gen_range(1..=32), rng.gen_range(1..=32));
        let x: Vec<f64> = (0..h * w).map(|_| rng.gen()).collect();
        let f = dct2(&x, h, w);
        let back = idct2(&f, h, w);
        worst = x.iter().zip(&back).fold(worst, |m, (a, b)| m.max((a - b).abs()));
        let ex: f64 = x.iter().map(|v| v * v).sum();
        let ef: f64 = f.iter().map(|v| v * v).sum();
        parseval = parseval.max((ex - ef).abs());
    }
    check(
        "dct round trip",
        worst < 1e-9 && parseval < 1e-10,
        format!("max error {worst:.2e}, energy gap {parseval:.2e}"),
    )
}

fn gradients(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut rand = |shape: &[usize], lo: f64, hi: f64| {
        let n = shape.iter().product();
        Tensor::new((0..n).map(|_| rng.gen_range(lo..hi)).collect(), shape).expect("shape")
    };
    let x = rand(&[1, 2, 5, 5], -1.0, 1.0);
    let k = rand(&[3, 2, 3, 3], -1.0, 1.0);
    let a = rand(&[3, 4], -1.0, 1.0);
    let b = rand(&[4, 2], -1.0, 1.0);
    let img = rand(&[1, 3, 8, 8], 0.05, 0.95);
    let l = rand(&[1, 3, 8, 8], 0.2, 0.9);
    let weights = LossWeights {
        patch_size: 4,
        ..LossWeights::default()
    };
    let cases: Vec<(&str, Box<dyn Fn(&[Tensor]) -> dimlight_tensor::Result<Tensor>>, Vec<Tensor>)> = vec![
        ("conv2d", Box::new(|t| t[0].conv2d(&t[1], 1, 1)?.square()?.sum_all()), vec![x, k]),
        ("matmul", Box::new(|t| t[0].matmul(&t[1])?.tanh()?.sum_all()), vec![a.clone(), b]),
        ("softmax", Box::new(|t| t[0].softmax(1)?.square()?.sum_all()), vec![a.clone()]),
        ("layer_norm", Box::new(|t| layer_norm(&t[0], 1e-5)?.powf(3.0)?.sum_all()), vec![a.clone()]),
        ("silu", Box::new(|t| silu(&t[0])?.sum_all()), vec![a]),
    ];
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    for (name, f, inputs) in &cases {
        let report = check_gradients(f, inputs, 1e-6)?;
        worst = worst.max(report.max_rel_err);
        if !report.passes(1e-5) {
            failed.push(*name);
        }
    }
    let loss_cases: Vec<(&str, Box<dyn Fn(&[Tensor]) -> Result<Tensor>>)> = vec![
        // the stop-gradient in the retinex term hides a dependence that central
        // differences would see, so check the unstopped form
        ("loss_l", Box::new(|t: &[Tensor]| {
            let [a, b, c, d] = loss_l_terms(&t[0], &t[1], &img, false)?;
            Ok(a.add(&b)?.add(&c)?.add(&d)?)
        })),
        ("loss_con", Box::new(|t: &[Tensor]| loss_con(&t[0].mul(&t[1])?, &img, 4))),
        ("loss_enh", Box::new(|t: &[Tensor]| loss_enh(&t[0].mul(&t[1])?, &weights))),
    ];
    for (name, f) in &loss_cases {
        let report = check_gradients(
            |t| f(t).map_err(|e| dimlight_tensor::TensorError::InvalidArgument { op: "loss", detail: e.to_string() }),
            &[img.clone(), l.clone()],
            1e-6,
        )?;
        worst = worst.max(report.max_rel_err);
        if !report.passes(1e-4) {
            failed.push(*name);
        }
    }
    Ok(check(
        "gradient checks",
        failed.is_empty(),
        if failed.is_empty() {
            format!("worst relative error {worst:.2e}")
        } else {
            format!("failed: {}", failed.join(", "))
        },
    ))
}

fn masking(rng: &mut ChaCha8Rng) -> Result<Check> {
    let draws = 8000;
    let mut counts = [0usize; 8];
    let mut diagonal = 0;
    for _ in 0..draws {
        let m = SubsampleMask::neighbor(2, 2, rng)?;
        match ADJACENT_PAIRS.iter().position(|&p| p == (m.first[0], m.second[0])) {
            Some(i) => counts[i] += 1,
            None => diagonal += 1,
        }
    }
    let expected = draws as f64 / 8.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(7.0).expect("dof").cdf(chi2);
    Ok(check(
        "neighbor masking",
        diagonal == 0 && counts.iter().all(|&c| c > 0) && p > 1e-3,
        format!("counts {counts:?}, chi2 {chi2:.2}, p {p:.3}"),
    ))
}

fn taylor() -> Result<Check> {
    let lambda = 1.0 / 1.5;
    let mut slopes = Vec::new();
    for r in [0.2, 0.5, 0.8] {
        let hi = taylor_residual(r, 1e-2, lambda)?;
        let lo = taylor_residual(r, 1e-3, lambda)?;
        slopes.push((hi / lo).log10());
    }
    Ok(check(
        "taylor residual order",
        slopes.iter().all(|s| (s - 2.0).abs() < 0.05),
        format!("slopes {slopes:.3?}"),
    ))
}

fn image_codec() -> Result<Check> {
    let img = ImageRGB::new(1, 2, vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.1])?;
    let q = img.map(|v| (v * 255.0).round() / 255.0)?;
    let dir = std::env::temp_dir().join(format!("dimlight-selftest-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| crate::error::Error::io(&dir, e))?;
    let mut ok = true;
    for name in ["a.png", "a.ppm"] {
        let path = dir.join(name);
        crate::image::save_image(&img, &path)?;
        ok &= crate::image::load_image(&path)? == q;
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(check("png/ppm round trip", ok, "8-bit quantized".into()))
}

/// Runs every check with a fixed seed.
pub fn run() -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    Ok(vec![
        dct_round_trip(&mut rng),
        gradients(&mut rng)?,
        masking(&mut rng)?,
        taylor()?,
        image_codec()?,
    ])
}

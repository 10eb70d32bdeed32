//! Training image sources and the synthetic low-light corpus.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::{list_images, load_image, ImageRGB};

/// Directory names that suggest normal-light or ground-truth content.
pub const REFERENCE_NAMES: &[&str] = &["reference", "ref", "gt", "ground_truth", "groundtruth", "normal", "high"];

/// Fails when any component of `path` names a reference directory.
pub fn reject_reference_path(path: &Path) -> Result<()> {
    for comp in path.components() {
        let name = comp.as_os_str().to_string_lossy().to_lowercase();
        if REFERENCE_NAMES.contains(&name.as_str()) {
            return Err(Error::Dataset(format!(
                "{} looks like a reference directory (`{name}`); training only reads low-light input",
                path.display()
            )));
        }
    }
    Ok(())
}

/// Ordered collection of training images. Directory images are decoded on
/// access.
#[derive(Debug, Clone)]
pub enum Dataset {
    Memory(Vec<ImageRGB>),
    Directory(Vec<PathBuf>),
}

impl Dataset {
    /// Lists a training directory, refusing reference-looking paths.
    pub fn open(dir: &Path) -> Result<Self> {
        reject_reference_path(dir)?;
        let files = list_images(dir)?;
        if files.is_empty() {
            return Err(Error::Dataset(format!("no images in {}", dir.display())));
        }
        Ok(Dataset::Directory(files))
    }

    pub fn len(&self) -> usize {
        match self {
            Dataset::Memory(v) => v.len(),
            Dataset::Directory(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, index: usize) -> Result<ImageRGB> {
        let missing = || Error::Dataset(format!("index {index} out of {}", self.len()));
        match self {
            Dataset::Memory(v) => v.get(index).cloned().ok_or_else(missing),
            Dataset::Directory(v) => load_image(v.get(index).ok_or_else(missing)?),
        }
    }
}

/// Seeded permutation of `0..n` for one epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch + 1);
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    order
}

/// Smooth colored scenes darkened by a random illumination field, with
/// signal-dependent noise of variance `gain · v`.
pub fn synthetic_low_light(count: usize, size: usize, seed: u64) -> Result<Vec<ImageRGB>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| synthetic_image(size, &mut rng)).collect()
}

fn synthetic_image<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Result<ImageRGB> {
    let s = size as f64;
    let freq: [f64; 3] = std::array::from_fn(|_| rng.gen_range(1.0..3.0) * std::f64::consts::PI / s);
    let phase: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..std::f64::consts::TAU));
    let tilt: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let (cy, cx) = (rng.gen_range(0.0..s), rng.gen_range(0.0..s));
    let radius = rng.gen_range(0.3..0.8) * s;
    let base = rng.gen_range(0.08..0.2);
    let gain = 0.002;
    let mut px = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let (yf, xf) = (y as f64, x as f64);
            let d2 = (yf - cy).powi(2) + (xf - cx).powi(2);
            let light = base * (0.5 + (-d2 / (2.0 * radius * radius)).exp());
            let along = xf * tilt.cos() + yf * tilt.sin();
            for c in 0..3 {
                let reflect = 0.55 + 0.35 * (freq[c] * along + phase[c]).sin();
                let clean = reflect * light;
                let n: f64 = StandardNormal.sample(rng);
                px.push((clean + (gain * clean).sqrt() * n).clamp(0.0, 1.0));
            }
        }
    }
    ImageRGB::new(size, size, px)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_paths_are_refused() {
        for p in ["data/GT/x", "set/high", "a/Reference"] {
            assert!(reject_reference_path(Path::new(p)).is_err(), "{p}");
        }
        for p in ["data/low", "highway/low", "refs"] {
            assert!(reject_reference_path(Path::new(p)).is_ok(), "{p}");
        }
    }

    #[test]
    fn epoch_order_is_seeded_permutation() {
        let a = epoch_order(10, 123, 0);
        assert_eq!(a, epoch_order(10, 123, 0));
        assert_ne!(a, epoch_order(10, 123, 1));
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn synthetic_corpus_is_dark_and_deterministic() {
        let a = synthetic_low_light(4, 32, 9).unwrap();
        let b = synthetic_low_light(4, 32, 9).unwrap();
        assert_eq!(a, b);
        for img in &a {
            assert!(img.mean() < 0.3, "{}", img.mean());
            assert!(img.mean() > 0.01);
        }
    }

    #[test]
    fn memory_dataset_bounds() {
        let d = Dataset::Memory(synthetic_low_light(2, 8, 1).unwrap());
        assert_eq!(d.len(), 2);
        assert!(d.get(2).is_err());
    }
}

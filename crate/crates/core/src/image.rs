//! RGB images in `[0, 1]`, PNG/PPM I/O, cropping and augmentation.

use std::fs::{self, File};
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};

use dimlight_tensor::Tensor;
use rand::Rng;

use crate::error::{Error, Result};

/// Interleaved H×W×3 image, row-major, channel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRGB {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl ImageRGB {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage(format!("zero dimension {height}x{width}")));
        }
        if pixels.len() != height * width * 3 {
            return Err(Error::InvalidImage(format!(
                "{} values for {height}x{width}x3",
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("value {v} outside [0, 1]")));
        }
        Ok(ImageRGB {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        let pixels = (0..height * width).flat_map(|_| rgb).collect();
        Self::new(height, width, pixels)
    }

    /// Builds an image from unbounded values, clamping into `[0, 1]`.
    pub fn from_clamped(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(height, width, values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// One channel as an H×W plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.pixels.iter().skip(c).step_by(3).copied().collect()
    }

    /// `(1, 3, H, W)` constant tensor.
    pub fn to_tensor(&self) -> Tensor {
        let mut planar = Vec::with_capacity(self.pixels.len());
        for c in 0..3 {
            planar.extend(self.channel(c));
        }
        Tensor::new(planar, &[1, 3, self.height, self.width]).expect("image dims are positive")
    }

    /// Inverse of [`ImageRGB::to_tensor`]; values are clamped into `[0, 1]`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.shape() {
            &[1, 3, h, w] => {
                let d = t.data();
                let plane = h * w;
                let values = (0..plane)
                    .flat_map(|i| [d[i], d[plane + i], d[2 * plane + i]])
                    .collect();
                Self::from_clamped(h, w, values)
            }
            s => Err(Error::Shape(format!("expected (1, 3, H, W), got {s:?}"))),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.height, self.width, self.pixels.iter().map(|&v| f(v)).collect())
    }

    /// Sub-rectangle starting at `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::InvalidImage(format!(
                "crop {height}x{width}+{top}+{left} exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut px = Vec::with_capacity(height * width * 3);
        for y in top..top + height {
            let start = (y * self.width + left) * 3;
            px.extend_from_slice(&self.pixels[start..start + width * 3]);
        }
        Self::new(height, width, px)
    }

    /// Rebuild with `(y, x) <- source(y, x)` over an output of the given size.
    fn remap(&self, height: usize, width: usize, source: impl Fn(usize, usize) -> (usize, usize)) -> Self {
        let mut px = Vec::with_capacity(self.pixels.len());
        for y in 0..height {
            for x in 0..width {
                let (sy, sx) = source(y, x);
                px.extend(self.pixel(sy, sx));
            }
        }
        ImageRGB {
            height,
            width,
            pixels: px,
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        let w = self.width;
        self.remap(self.height, w, |y, x| (y, w - 1 - x))
    }

    pub fn flip_vertical(&self) -> Self {
        let h = self.height;
        self.remap(h, self.width, |y, x| (h - 1 - y, x))
    }

    /// Quarter turn clockwise.
    pub fn rotate90(&self) -> Self {
        let h = self.height;
        self.remap(self.width, h, |y, x| (h - 1 - x, y))
    }
}

fn decode_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
}

pub fn is_supported(path: &Path) -> bool {
    matches!(extension(path).as_deref(), Some("png" | "ppm"))
}

/// Loads an 8-bit PNG (gray, gray+alpha, RGB, RGBA, palette) or a binary PPM.
/// Values are `raw / 255`; gray is replicated to three channels and alpha dropped.
pub fn load_image(path: &Path) -> Result<ImageRGB> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P6") {
        decode_ppm(path, &bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(path, &bytes)
    } else {
        Err(Error::UnsupportedFormat(path.display().to_string()))
    }
}

fn from_bytes(path: &Path, height: usize, width: usize, rgb: &[u8]) -> Result<ImageRGB> {
    if height == 0 || width == 0 {
        return Err(decode_err(path, "zero dimension"));
    }
    ImageRGB::new(height, width, rgb.iter().map(|&b| f64::from(b) / 255.0).collect())
}

fn decode_ppm(path: &Path, bytes: &[u8]) -> Result<ImageRGB> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(decode_err(path, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| decode_err(path, "malformed header"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: PPM maxval {maxval} (only 8-bit)",
            path.display()
        )));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(decode_err(path, "missing separator after header"));
    }
    pos += 1;
    let need = width * height * 3;
    let body = &bytes[pos..];
    if body.len() < need {
        return Err(decode_err(path, format!("truncated: {} of {need} bytes", body.len())));
    }
    from_bytes(path, height, width, &body[..need])
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<ImageRGB> {
    let mut decoder = png::Decoder::new(bytes);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| decode_err(path, e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| decode_err(path, e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!(
            "{}: {:?}-bit PNG (only 8-bit)",
            path.display(),
            info.bit_depth
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let rgb: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => data.to_vec(),
        png::ColorType::Rgba => data.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => data.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => data.chunks_exact(2).flat_map(|p| [p[0]; 3]).collect(),
        png::ColorType::Indexed => {
            return Err(decode_err(path, "palette was not expanded"));
        }
    };
    from_bytes(path, h, w, &rgb)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes 8-bit PNG, or binary PPM when the extension is `.ppm`.
/// Values are clamped to `[0, 1]` before quantization.
pub fn save_image(img: &ImageRGB, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = img.pixels.iter().map(|&v| quantize(v)).collect();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    match extension(path).as_deref() {
        Some("ppm") => {
            let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
            out.extend(bytes);
            fs::write(path, out).map_err(|e| Error::io(path, e))
        }
        Some("png") => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().map_err(|e| decode_err(path, e.to_string()))?;
            writer
                .write_image_data(&bytes)
                .map_err(|e| decode_err(path, e.to_string()))
        }
        _ => Err(Error::UnsupportedFormat(path.display().to_string())),
    }
}

/// Every PNG/PPM file directly inside `dir`, sorted lexicographically.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_supported(p))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Uniformly placed `size`×`size` crop. `size` must be even and fit the image.
pub fn random_crop<R: Rng + ?Sized>(img: &ImageRGB, size: usize, rng: &mut R) -> Result<ImageRGB> {
    if size == 0 || size % 2 != 0 {
        return Err(Error::InvalidImage(format!("crop size {size} must be even and positive")));
    }
    if size > img.height.min(img.width) {
        return Err(Error::InvalidImage(format!(
            "crop size {size} exceeds {}x{}",
            img.height, img.width
        )));
    }
    let top = rng.gen_range(0..=img.height - size);
    let left = rng.gen_range(0..=img.width - size);
    img.crop(top, left, size, size)
}

/// Subset of flips and a quarter turn, applied in that order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Augmentation {
    pub flip_h: bool,
    pub flip_v: bool,
    pub rotate: bool,
}

impl Augmentation {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Augmentation {
            flip_h: rng.gen_bool(0.5),
            flip_v: rng.gen_bool(0.5),
            rotate: rng.gen_bool(0.5),
        }
    }

    pub fn apply(&self, img: &ImageRGB) -> ImageRGB {
        let mut out = img.clone();
        if self.flip_h {
            out = out.flip_horizontal();
        }
        if self.flip_v {
            out = out.flip_vertical();
        }
        if self.rotate {
            out = out.rotate90();
        }
        out
    }
}

pub fn augment<R: Rng + ?Sized>(img: &ImageRGB, rng: &mut R) -> ImageRGB {
    Augmentation::sample(rng).apply(img)
}

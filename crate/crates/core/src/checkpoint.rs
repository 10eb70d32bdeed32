//! Binary checkpoint container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic "DIMLCKPT" | version u32
//! config text: len u64 | UTF-8 bytes
//! iteration u64 | epoch u64 | position u64
//! rng: seed [u8; 32] | stream u64 | word_pos u128
//! params: count u64 | { name_len u32 | name | rank u32 | dims u64.. | values f64.. }
//! adam: lr f64 | beta1 f64 | beta2 f64 | eps f64 | steps u64 | count u64 |
//!       { len u64 | first f64.. | second f64.. }
//! ```

use std::fs;
use std::path::Path;

use dimlight_tensor::{Adam, AdamConfig, Tensor};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::nets::DeNet;
use crate::nn::Module;
use crate::train::TrainState;

pub const MAGIC: &[u8; 8] = b"DIMLCKPT";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn f64s(&mut self, v: &[f64]) {
        for &x in v {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.at)))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&n| n <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("implausible length {v}")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n > self.buf.len() / 8 {
            return Err(Error::Checkpoint(format!("implausible length {n}")));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn encode(state: &TrainState) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.bytes(MAGIC);
    w.u32(VERSION);
    let text = state.config.to_text();
    w.u64(text.len() as u64);
    w.bytes(text.as_bytes());
    w.u64(state.iteration);
    w.u64(state.epoch);
    w.u64(state.position as u64);
    w.bytes(&state.rng.get_seed());
    w.u64(state.rng.get_stream());
    w.bytes(&state.rng.get_word_pos().to_le_bytes());

    let params = state.net.parameters();
    w.u64(params.len() as u64);
    for (name, t) in &params {
        w.u32(name.len() as u32);
        w.bytes(name.as_bytes());
        w.u32(t.rank() as u32);
        for &d in t.shape() {
            w.u64(d as u64);
        }
        w.f64s(t.data());
    }

    let adam = &state.optimizer;
    w.f64(adam.config.learning_rate);
    w.f64(adam.config.beta1);
    w.f64(adam.config.beta2);
    w.f64(adam.config.eps);
    w.u64(adam.steps);
    w.u64(adam.first_moment.len() as u64);
    for (m, v) in adam.first_moment.iter().zip(&adam.second_moment) {
        w.u64(m.len() as u64);
        w.f64s(m);
        w.f64s(v);
    }
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<TrainState> {
    let mut r = Reader { buf: bytes, at: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = r.len()?;
    let text = std::str::from_utf8(r.take(n)?).map_err(|_| Error::Checkpoint("config is not UTF-8".into()))?;
    let config = TrainConfig::from_text(text)?;
    let iteration = r.u64()?;
    let epoch = r.u64()?;
    let position = r.len()?;
    let seed: [u8; 32] = r.array()?;
    let stream = r.u64()?;
    let word_pos = u128::from_le_bytes(r.array()?);
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);

    // structure comes from the config; values are overwritten below
    let mut net = DeNet::new(config.arch, &mut ChaCha8Rng::seed_from_u64(0))?;
    let expected = net.parameters();
    let count = r.len()?;
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "{count} parameters stored, architecture has {}",
            expected.len()
        )));
    }
    let mut values = Vec::with_capacity(count);
    for (want, _) in &expected {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8_lossy(r.take(name_len)?).into_owned();
        if &name != want {
            return Err(Error::Checkpoint(format!("expected parameter {want}, found {name}")));
        }
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let numel = numel.ok_or_else(|| Error::Checkpoint(format!("{name}: shape overflow")))?;
        let data = r.f64s(numel)?;
        let t = Tensor::parameter(data, &shape).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
        values.push(t);
    }
    net.load_parameters(&values)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;

    let adam_config = AdamConfig {
        learning_rate: r.f64()?,
        beta1: r.f64()?,
        beta2: r.f64()?,
        eps: r.f64()?,
    };
    let steps = r.u64()?;
    let slots = r.len()?;
    if slots != count {
        return Err(Error::Checkpoint(format!("{slots} optimizer slots for {count} parameters")));
    }
    let mut optimizer = Adam::new(adam_config, std::iter::empty::<usize>());
    optimizer.steps = steps;
    for t in &values {
        let len = r.len()?;
        if len != t.numel() {
            return Err(Error::Checkpoint("optimizer moment size mismatch".into()));
        }
        optimizer.first_moment.push(r.f64s(len)?);
        optimizer.second_moment.push(r.f64s(len)?);
    }
    if r.at != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.at)));
    }
    Ok(TrainState {
        config,
        net,
        optimizer,
        rng,
        iteration,
        epoch,
        position,
    })
}

pub fn save(state: &TrainState, path: &Path) -> Result<()> {
    fs::write(path, encode(state)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<TrainState> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::ArchConfig;
    use rand::RngCore;

    fn state() -> TrainState {
        let cfg = TrainConfig {
            arch: ArchConfig::tiny(),
            crop_size: 32,
            ..TrainConfig::default()
        };
        let mut s = TrainState::new(cfg).unwrap();
        s.rng.next_u64();
        s.iteration = 5;
        s.optimizer.steps = 5;
        s.optimizer.first_moment[0][0] = 0.25;
        s
    }

    #[test]
    fn encode_decode_encode_is_identical() {
        let s = state();
        let a = encode(&s);
        let mut back = decode(&a).unwrap();
        assert_eq!(encode(&back), a);
        assert_eq!(back.rng.next_u64(), s.rng.clone().next_u64());
        assert_eq!(back.optimizer, s.optimizer);
    }

    #[test]
    fn corruption_is_reported() {
        let a = encode(&state());
        assert!(decode(&a[..a.len() - 3]).is_err());
        let mut bad = a.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut extra = a;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GLVPARM1";

/// Word and context vectors with their biases and AdaGrad accumulators.
///
/// Layout follows the reference trainer: `2 * vocab_size` rows of `dim + 1`
/// values. Row `i` holds word vector `w_i` followed by bias `b_i`; row
/// `vocab_size + j` holds context vector `w~_j` followed by `b~_j`.
/// `gradsq` has the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    vocab_size: usize,
    dim: usize,
    pub(crate) values: Vec<f64>,
    pub(crate) gradsq: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        let n = 2 * vocab_size * (dim + 1);
        ModelParams {
            vocab_size,
            dim,
            values: vec![0.0; n],
            gradsq: vec![1.0; n],
        }
    }

    /// Every vector coordinate and bias uniform in `[-0.5/dim, 0.5/dim)`,
    /// accumulators at 1.
    pub fn init(vocab_size: usize, dim: usize, seed: u64) -> Self {
        let mut p = Self::zeros(vocab_size, dim);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let scale = 1.0 / dim as f64;
        for v in &mut p.values {
            *v = (rng.random::<f64>() - 0.5) * scale;
        }
        p
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub(crate) fn word_offset(&self, i: usize) -> usize {
        i * (self.dim + 1)
    }

    #[inline]
    pub(crate) fn context_offset(&self, j: usize) -> usize {
        (self.vocab_size + j) * (self.dim + 1)
    }

    pub fn word(&self, i: usize) -> &[f64] {
        let o = self.word_offset(i);
        &self.values[o..o + self.dim]
    }

    pub fn word_mut(&mut self, i: usize) -> &mut [f64] {
        let o = self.word_offset(i);
        &mut self.values[o..o + self.dim]
    }

    pub fn context(&self, j: usize) -> &[f64] {
        let o = self.context_offset(j);
        &self.values[o..o + self.dim]
    }

    pub fn context_mut(&mut self, j: usize) -> &mut [f64] {
        let o = self.context_offset(j);
        &mut self.values[o..o + self.dim]
    }

    pub fn word_bias(&self, i: usize) -> f64 {
        self.values[self.word_offset(i) + self.dim]
    }

    pub fn set_word_bias(&mut self, i: usize, v: f64) {
        let o = self.word_offset(i) + self.dim;
        self.values[o] = v;
    }

    pub fn context_bias(&self, j: usize) -> f64 {
        self.values[self.context_offset(j) + self.dim]
    }

    pub fn set_context_bias(&mut self, j: usize, v: f64) {
        let o = self.context_offset(j) + self.dim;
        self.values[o] = v;
    }

    pub fn word_gradsq(&self, i: usize) -> &[f64] {
        let o = self.word_offset(i);
        &self.gradsq[o..=o + self.dim]
    }

    pub fn context_gradsq(&self, j: usize) -> &[f64] {
        let o = self.context_offset(j);
        &self.gradsq[o..=o + self.dim]
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().chain(&self.gradsq).all(|v| v.is_finite())
    }

    /// Swaps the word and context halves (vectors, biases and accumulators).
    pub fn swapped(&self) -> Self {
        let half = self.vocab_size * (self.dim + 1);
        let mut out = self.clone();
        out.values[..half].copy_from_slice(&self.values[half..]);
        out.values[half..].copy_from_slice(&self.values[..half]);
        out.gradsq[..half].copy_from_slice(&self.gradsq[half..]);
        out.gradsq[half..].copy_from_slice(&self.gradsq[..half]);
        out
    }

    /// Full-precision binary dump: magic, `u64` vocab size, `u64` dim, then
    /// values and accumulators as little-endian `f64`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(Error::file(path))?;
        let mut w = BufWriter::with_capacity(1 << 20, f);
        w.write_all(MAGIC)?;
        w.write_all(&(self.vocab_size as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        for v in self.values.iter().chain(&self.gradsq) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(Error::file(path))?;
        let mut r = BufReader::with_capacity(1 << 20, f);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::parse(path, 0, "not a parameter file"));
        }
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let vocab_size = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let dim = u64::from_le_bytes(word) as usize;
        let mut p = ModelParams::zeros(vocab_size, dim);
        for v in p.values.iter_mut().chain(p.gradsq.iter_mut()) {
            r.read_exact(&mut word)
                .map_err(|_| Error::parse(path, 0, "truncated parameter file"))?;
            *v = f64::from_le_bytes(word);
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_range_and_determinism() {
        let a = ModelParams::init(20, 8, 123);
        let b = ModelParams::init(20, 8, 123);
        let c = ModelParams::init(20, 8, 2024);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.values.iter().all(|v| v.abs() <= 0.5 / 8.0));
        assert!(a.gradsq.iter().all(|&g| g == 1.0));
    }

    #[test]
    fn accessors_and_swap() {
        let mut p = ModelParams::zeros(3, 2);
        p.word_mut(1).copy_from_slice(&[1.0, 2.0]);
        p.set_word_bias(1, 3.0);
        p.context_mut(2).copy_from_slice(&[4.0, 5.0]);
        p.set_context_bias(2, 6.0);
        let s = p.swapped();
        assert_eq!(s.context(1), &[1.0, 2.0]);
        assert_eq!(s.context_bias(1), 3.0);
        assert_eq!(s.word(2), &[4.0, 5.0]);
        assert_eq!(s.word_bias(2), 6.0);
        assert_eq!(s.swapped(), p);
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let p = ModelParams::init(5, 3, 9);
        p.save(&path).unwrap();
        assert_eq!(ModelParams::load(&path).unwrap(), p);
        std::fs::write(&path, b"nope").unwrap();
        assert!(ModelParams::load(&path).is_err());
    }
}

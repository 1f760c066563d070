//! Word → vector tables and their file formats.
//!
//! Text format: one line per word, `word v1 v2 ... vd`, single spaces, no
//! header. Values are written with six significant digits in the style of
//! C's `%g`, so a written file reloads and rewrites byte for byte.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TEXT_SIGNIFICANT_DIGITS: usize = 6;
const BINARY_MAGIC: &[u8; 8] = b"GLVEMB01";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSource {
    pub config_sha256: Option<String>,
    pub corpus_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    words: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    data: Vec<f64>,
    pub source: EmbeddingSource,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Self {
        EmbeddingSet {
            words: Vec::new(),
            index: HashMap::new(),
            dim,
            data: Vec::new(),
            source: EmbeddingSource::default(),
        }
    }

    pub fn from_rows<I, S>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut e = EmbeddingSet::new(dim);
        for (w, v) in rows {
            e.push(w.into(), &v)?;
        }
        Ok(e)
    }

    pub fn push(&mut self, word: String, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::validation(
                "vector",
                format!("{word:?} has {} components, expected {}", vector.len(), self.dim),
            ));
        }
        if word.is_empty() || word.contains(char::is_whitespace) {
            return Err(Error::validation("word", format!("bad word {word:?}")));
        }
        if self.index.contains_key(&word) {
            return Err(Error::validation("word", format!("duplicate word {word:?}")));
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index_of(word).map(|i| self.vector(i))
    }

    /// Copy with every vector multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Copy whose words are lowercased; on collisions the earlier (more
    /// frequent) word wins.
    pub fn lowercased(&self) -> Self {
        let mut out = EmbeddingSet::new(self.dim);
        out.source = self.source.clone();
        for (i, w) in self.words.iter().enumerate() {
            let lower = w.to_lowercase();
            if !out.index.contains_key(&lower) {
                out.push(lower, self.vector(i)).expect("dimension already checked");
            }
        }
        out
    }

    /// Copy with every vector scaled to unit length (zero vectors stay zero).
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        for row in out.data.chunks_mut(self.dim.max(1)) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, w) in self.words.iter().enumerate() {
            s.push_str(w);
            for v in self.vector(i) {
                s.push(' ');
                s.push_str(&format_significant(*v, TEXT_SIGNIFICANT_DIGITS));
            }
            s.push('\n');
        }
        s
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(Error::file(path))?;
        let mut w = BufWriter::with_capacity(1 << 20, f);
        let mut line = String::new();
        for (i, word) in self.words.iter().enumerate() {
            line.clear();
            line.push_str(word);
            for v in self.vector(i) {
                line.push(' ');
                line.push_str(&format_significant(*v, TEXT_SIGNIFICANT_DIGITS));
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the text format. The dimension comes from the first line.
    pub fn read_text(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(Error::file(path))?;
        let mut out: Option<EmbeddingSet> = None;
        let mut values = Vec::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(Error::file(path))?;
            let line = line.trim_end_matches(['\r', ' ']);
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            let word = parts.next().unwrap_or_default().to_string();
            values.clear();
            for p in parts {
                let v: f64 = p
                    .parse()
                    .map_err(|_| Error::parse(path, n + 1, format!("bad number {p:?}")))?;
                values.push(v);
            }
            let set = out.get_or_insert_with(|| EmbeddingSet::new(values.len()));
            if set.dim == 0 {
                return Err(Error::parse(path, n + 1, "line has no vector components"));
            }
            set.push(word, &values)
                .map_err(|e| Error::parse(path, n + 1, e.to_string()))?;
        }
        Ok(out.unwrap_or_else(|| EmbeddingSet::new(0)))
    }

    /// Full-precision binary form: magic, `u64` count, `u64` dim, then per
    /// word a `u32` byte length and the UTF-8 bytes, then all vectors as
    /// little-endian `f64`.
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(Error::file(path))?;
        let mut w = BufWriter::with_capacity(1 << 20, f);
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        for word in &self.words {
            w.write_all(&(word.len() as u32).to_le_bytes())?;
            w.write_all(word.as_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(Error::file(path))?;
        let mut r = BufReader::with_capacity(1 << 20, f);
        let bad = |m: &str| Error::parse(path, 0, m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != BINARY_MAGIC {
            return Err(bad("not a binary embedding file"));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(|_| bad("truncated header"))?;
        let count = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8).map_err(|_| bad("truncated header"))?;
        let dim = u64::from_le_bytes(b8) as usize;
        let mut words = Vec::with_capacity(count);
        for _ in 0..count {
            let mut b4 = [0u8; 4];
            r.read_exact(&mut b4).map_err(|_| bad("truncated word table"))?;
            let mut buf = vec![0u8; u32::from_le_bytes(b4) as usize];
            r.read_exact(&mut buf).map_err(|_| bad("truncated word table"))?;
            words.push(String::from_utf8(buf).map_err(|_| bad("word is not UTF-8"))?);
        }
        let mut out = EmbeddingSet::new(dim);
        let mut row = vec![0.0; dim];
        for word in words {
            for v in row.iter_mut() {
                r.read_exact(&mut b8).map_err(|_| bad("truncated vectors"))?;
                *v = f64::from_le_bytes(b8);
            }
            out.push(word, &row)?;
        }
        Ok(out)
    }
}

/// Formats like C's `%.{digits}g`.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Cosine similarity; `None` when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some((dot / (na * nb)).clamp(-1.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn percent_g_style() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (-0.5, "-0.5"),
            (0.123456789, "0.123457"),
            (123456.7, "123457"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (9.9999996, "10"),
            (-3.14159265, "-3.14159"),
        ];
        for (v, want) in cases {
            assert_eq!(format_significant(v, 6), want, "{v}");
        }
    }

    #[test]
    fn lookup_and_errors() {
        let mut e = EmbeddingSet::new(2);
        e.push("a".into(), &[1.0, 0.0]).unwrap();
        assert!(e.push("a".into(), &[1.0, 0.0]).is_err());
        assert!(e.push("b".into(), &[1.0]).is_err());
        assert_eq!(e.get("a"), Some(&[1.0, 0.0][..]));
        assert_eq!(e.get("zz"), None);
    }

    #[test]
    fn lowercase_keeps_first() {
        let e = EmbeddingSet::from_rows(1, [("The", vec![1.0]), ("the", vec![2.0]), ("Cat", vec![3.0])]).unwrap();
        let l = e.lowercased();
        assert_eq!(l.words(), &["the", "cat"]);
        assert_eq!(l.get("the"), Some(&[1.0][..]));
    }

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&[1.0, 0.0], &[2.0, 0.0]), Some(1.0));
        assert_eq!(cosine(&[1.0, 0.0], &[-1.0, 0.0]), Some(-1.0));
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), None);
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.bin");
        let e = EmbeddingSet::from_rows(3, [("α", vec![0.1, -2.0, 1e-300]), ("b", vec![1.0 / 3.0, 0.0, -0.0])]).unwrap();
        e.write_binary(&p).unwrap();
        let back = EmbeddingSet::read_binary(&p).unwrap();
        assert_eq!(back.words(), e.words());
        for i in 0..2 {
            let a: Vec<u64> = back.vector(i).iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = e.vector(i).iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn malformed_text() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.txt");
        std::fs::write(&p, "a 1 2\nb 1\n").unwrap();
        assert!(matches!(EmbeddingSet::read_text(&p), Err(Error::Parse { line: 2, .. })));
        std::fs::write(&p, "a 1 x\n").unwrap();
        assert!(matches!(EmbeddingSet::read_text(&p), Err(Error::Parse { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn text_format_is_a_fixed_point(vals in prop::collection::vec(-1e7f64..1e7, 1..40),
                                         tiny in prop::collection::vec(-1e-6f64..1e-6, 1..10)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("v.txt");
            let dim = 2;
            let all: Vec<f64> = vals.into_iter().chain(tiny).collect();
            let rows: Vec<(String, Vec<f64>)> = all.chunks(dim).filter(|c| c.len() == dim)
                .enumerate().map(|(i, c)| (format!("w{i}"), c.to_vec())).collect();
            let e = EmbeddingSet::from_rows(dim, rows).unwrap();
            e.write_text(&p).unwrap();
            let first = std::fs::read(&p).unwrap();
            let loaded = EmbeddingSet::read_text(&p).unwrap();
            prop_assert_eq!(loaded.words(), e.words());
            for i in 0..e.len() {
                for (a, b) in loaded.vector(i).iter().zip(e.vector(i)) {
                    let tol = 5e-6 * b.abs().max(1e-300);
                    prop_assert!((a - b).abs() <= tol, "{} vs {}", a, b);
                }
            }
            loaded.write_text(&p).unwrap();
            prop_assert_eq!(std::fs::read(&p).unwrap(), first);
        }
    }
}

//! Benchmark file loaders.
//!
//! Analogy files use the Google analogy layout: `: section` header lines and
//! four whitespace-separated words per question line. Similarity files hold
//! `word1 word2 score` triples with a configurable delimiter.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnalogyQuestion, SimilarityPair};
use crate::error::{Error, Result};

pub fn load_analogy_questions(path: impl AsRef<Path>, lowercase: bool) -> Result<Vec<AnalogyQuestion>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(Error::file(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(Error::file(path))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with(':') {
            continue;
        }
        let line = if lowercase { line.to_lowercase() } else { line.to_string() };
        let words: Vec<&str> = line.split_whitespace().collect();
        let [a, b, c, d] = words[..] else {
            return Err(Error::parse(path, n + 1, format!("expected 4 words, found {}", words.len())));
        };
        out.push(AnalogyQuestion::new(a, b, c, d));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityFormat {
    /// Field separator; `None` splits on any whitespace.
    pub delimiter: Option<char>,
    pub skip_header: bool,
    /// Human score range, recorded for reports only.
    pub scale: Option<(f64, f64)>,
}

impl Default for SimilarityFormat {
    fn default() -> Self {
        SimilarityFormat {
            delimiter: None,
            skip_header: false,
            scale: None,
        }
    }
}

pub fn load_similarity_pairs(
    path: impl AsRef<Path>,
    format: &SimilarityFormat,
    lowercase: bool,
) -> Result<Vec<SimilarityPair>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(Error::file(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(Error::file(path))?;
        if n == 0 && format.skip_header {
            continue;
        }
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = match format.delimiter {
            Some(d) => line.split(d).map(str::trim).collect(),
            None => line.split_whitespace().collect(),
        };
        if fields.len() < 3 {
            return Err(Error::parse(path, n + 1, format!("expected 3 fields, found {}", fields.len())));
        }
        let score: f64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(path, n + 1, format!("bad score {:?}", fields[2])))?;
        let norm = |w: &str| if lowercase { w.to_lowercase() } else { w.to_string() };
        out.push(SimilarityPair {
            w1: norm(fields[0]),
            w2: norm(fields[1]),
            human_score: score,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn google_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.txt");
        std::fs::write(&p, ": capital-common-countries\nAthens Greece Baghdad Iraq\n\n: family\nboy girl brother sister\n").unwrap();
        let qs = load_analogy_questions(&p, true).unwrap();
        assert_eq!(qs, vec![
            AnalogyQuestion::new("athens", "greece", "baghdad", "iraq"),
            AnalogyQuestion::new("boy", "girl", "brother", "sister"),
        ]);
        std::fs::write(&p, "a b c\n").unwrap();
        assert!(matches!(load_analogy_questions(&p, true), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn delimited_similarity() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "Word 1,Word 2,Human (mean)\nLove,sex,6.77\ntiger,cat,7.35\n").unwrap();
        let fmt = SimilarityFormat { delimiter: Some(','), skip_header: true, scale: Some((0.0, 10.0)) };
        let pairs = load_similarity_pairs(&p, &fmt, true).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].w1, "love");
        assert_eq!(pairs[1].human_score, 7.35);
        let bad = SimilarityFormat { skip_header: false, ..fmt };
        assert!(matches!(load_similarity_pairs(&p, &bad, true), Err(Error::Parse { line: 1, .. })));
    }
}

//! Weighted least-squares (WLS) word vectors and MFT selection.
//!
//! For word `i`, holding context vectors and both biases fixed, the WLS vector
//! is the exact minimiser of
//! `sum_j f(X_ij) * (w·w~_j + b_i + b~_j - ln X_ij)^2`.
//! It solves the `d × d` normal equations
//! `(sum_j f_j w~_j w~_j^T) w = sum_j f_j (ln X_ij - b_i - b~_j) w~_j`.
//! The cosine between the trained vector and its WLS vector measures how well
//! training converged for that word; averaged over words it ranks candidate
//! minimum-frequency thresholds.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cooccur::{build_cooccurrence_vec, shuffle_in_memory, CoocRecord, CooccurOptions};
use crate::corpus::DocumentSource;
use crate::embedding::cosine;
use crate::error::{Error, Result};
use crate::trainer::{train, weight, ModelParams, TrainConfig};
use crate::vocab::{build_vocab, TokenCounter};

#[derive(Debug, Clone, PartialEq)]
pub struct WlsResult {
    pub index: usize,
    pub vector: Vec<f64>,
    /// `None` when either the trained or the WLS vector is zero.
    pub cosine: Option<f64>,
    pub support: usize,
    /// The normal matrix was singular; `vector` is the minimum-norm solution.
    pub rank_deficient: bool,
}

/// Row objective for word `i` evaluated at an arbitrary vector `w`.
pub fn row_objective(w: &[f64], i: usize, params: &ModelParams, row: &[CoocRecord], cfg: &TrainConfig) -> f64 {
    let bi = params.word_bias(i);
    row.iter()
        .map(|r| {
            let j = r.col as usize;
            let dot: f64 = w.iter().zip(params.context(j)).map(|(a, b)| a * b).sum();
            let res = dot + bi + params.context_bias(j) - r.value.ln();
            weight(r.value, cfg.alpha, cfg.xmax) * res * res
        })
        .sum()
}

/// In-place Cholesky factorisation of a symmetric matrix stored row-major.
/// Returns false if a pivot falls below `tol`.
fn cholesky(a: &mut [f64], n: usize, tol: f64) -> bool {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if diag <= tol {
            return false;
        }
        let l = diag.sqrt();
        a[j * n + j] = l;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / l;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// WLS vector of word `i` given its aggregated row (records with `row == i`).
pub fn wls_vector(i: usize, params: &ModelParams, row: &[CoocRecord], cfg: &TrainConfig) -> Result<WlsResult> {
    if row.is_empty() {
        return Err(Error::NoSupport { index: i });
    }
    if i >= params.vocab_size() {
        return Err(Error::validation("index", format!("{i} out of range")));
    }
    let d = params.dim();
    let bi = params.word_bias(i);
    let mut normal = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    for r in row {
        if r.row as usize != i || r.col as usize >= params.vocab_size() {
            return Err(Error::validation(
                "row",
                format!("record ({}, {}) does not belong to row {i}", r.row, r.col),
            ));
        }
        let c = params.context(r.col as usize);
        let f = weight(r.value, cfg.alpha, cfg.xmax);
        let target = r.value.ln() - bi - params.context_bias(r.col as usize);
        for p in 0..d {
            let fc = f * c[p];
            rhs[p] += fc * target;
            for q in 0..=p {
                normal[p * d + q] += fc * c[q];
            }
        }
    }
    for p in 0..d {
        for q in 0..p {
            normal[q * d + p] = normal[p * d + q];
        }
    }
    let scale = (0..d).map(|p| normal[p * d + p]).fold(0.0, f64::max);
    let tol = scale * 1e-12;

    let mut factor = normal.clone();
    let (vector, rank_deficient) = if scale > 0.0 && cholesky(&mut factor, d, tol) {
        let mut x = rhs.clone();
        cholesky_solve(&factor, d, &mut x);
        (x, false)
    } else {
        let a = DMatrix::from_row_slice(d, d, &normal);
        let b = DVector::from_column_slice(&rhs);
        let svd = a.svd(true, true);
        let max_sv = svd.singular_values.max();
        let eps = (max_sv * 1e-12).max(f64::MIN_POSITIVE);
        let x = svd
            .solve(&b, eps)
            .map_err(|e| Error::Undefined(format!("minimum-norm solve failed: {e}")))?;
        (x.iter().copied().collect(), true)
    };
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(Error::Undefined(format!("non-finite WLS solution for word {i}")));
    }
    Ok(WlsResult {
        index: i,
        cosine: cosine(params.word(i), &vector),
        vector,
        support: row.len(),
        rank_deficient,
    })
}

/// Splits an aggregated (row-sorted) stream into per-row slices.
pub fn rows_of(records: &[CoocRecord]) -> Vec<(usize, &[CoocRecord])> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let r = records[start].row;
        let mut end = start;
        while end < records.len() && records[end].row == r {
            end += 1;
        }
        out.push((r as usize, &records[start..end]));
        start = end;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WlsSampling {
    /// Only words with at least this many nonzero cooccurrences; defaults to
    /// the vector dimension.
    pub min_support: Option<usize>,
    /// Cap on the number of words scored; a seeded random subset is used
    /// when more qualify.
    pub max_words: Option<usize>,
    pub seed: u64,
}

impl Default for WlsSampling {
    fn default() -> Self {
        WlsSampling {
            min_support: None,
            max_words: None,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WlsSummary {
    pub results: Vec<WlsResult>,
    /// Mean over results whose cosine is defined.
    pub mean_cosine: Option<f64>,
    pub undefined: usize,
}

/// Scores the sampled words of an aggregated stream.
pub fn wls_summary(
    params: &ModelParams,
    aggregated: &[CoocRecord],
    cfg: &TrainConfig,
    sampling: &WlsSampling,
) -> Result<WlsSummary> {
    let min_support = sampling.min_support.unwrap_or(params.dim()).max(1);
    let mut eligible: Vec<(usize, &[CoocRecord])> = rows_of(aggregated)
        .into_iter()
        .filter(|(_, r)| r.len() >= min_support)
        .collect();
    if let Some(cap) = sampling.max_words {
        if eligible.len() > cap {
            shuffle_in_memory(&mut eligible, sampling.seed);
            eligible.truncate(cap);
            eligible.sort_by_key(|(i, _)| *i);
        }
    }
    let mut results = Vec::with_capacity(eligible.len());
    for (i, row) in eligible {
        results.push(wls_vector(i, params, row, cfg)?);
    }
    let defined: Vec<f64> = results.iter().filter_map(|r| r.cosine).collect();
    let mean_cosine = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(WlsSummary {
        undefined: results.len() - defined.len(),
        results,
        mean_cosine,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MftSettings {
    pub cooccur: CooccurOptions,
    pub train: TrainConfig,
    pub shuffle_seed: u64,
    pub max_vocab: Option<usize>,
    pub sampling: WlsSampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MftScore {
    pub mft: u64,
    pub vocab_size: usize,
    pub mean_cosine: Option<f64>,
    pub sample_size: usize,
    /// Why this candidate could not be scored.
    pub excluded: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MftSelection {
    pub chosen: u64,
    pub table: Vec<MftScore>,
}

/// Runs vocabulary, cooccurrence, shuffle, training and WLS scoring for every
/// candidate threshold and picks the highest mean cosine (ties go to the
/// smaller threshold).
pub fn mft_selection(corpus: &dyn DocumentSource, candidates: &[u64], settings: &MftSettings) -> Result<MftSelection> {
    if candidates.len() < 2 {
        return Err(Error::validation("candidates", "at least two thresholds are required"));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != candidates.len() || sorted[0] == 0 {
        return Err(Error::validation("candidates", "thresholds must be distinct and >= 1"));
    }
    settings.cooccur.validate()?;
    settings.train.validate()?;

    let mut counter = TokenCounter::default();
    for doc in corpus.documents()? {
        counter.add_document(&doc?)?;
    }
    let counts = counter.finish()?;

    let mut table = Vec::with_capacity(candidates.len());
    for &mft in candidates {
        let vocab = build_vocab(&counts, mft, settings.max_vocab)?;
        let mut score = MftScore {
            mft,
            vocab_size: vocab.len(),
            mean_cosine: None,
            sample_size: 0,
            excluded: None,
        };
        if vocab.is_empty() {
            score.excluded = Some("empty vocabulary".into());
            log::warn!("MFT {mft}: empty vocabulary, excluded");
            table.push(score);
            continue;
        }
        let aggregated = build_cooccurrence_vec(corpus.documents()?, &vocab, &settings.cooccur)?;
        if aggregated.is_empty() {
            score.excluded = Some("no cooccurrences".into());
            table.push(score);
            continue;
        }
        let mut shuffled = aggregated.clone();
        shuffle_in_memory(&mut shuffled, settings.shuffle_seed);
        let outcome = train(&shuffled, &vocab, &settings.train)?;
        let summary = wls_summary(&outcome.params, &aggregated, &settings.train, &settings.sampling)?;
        score.sample_size = summary.results.len() - summary.undefined;
        score.mean_cosine = summary.mean_cosine;
        if score.mean_cosine.is_none() {
            score.excluded = Some("no word with enough support".into());
        }
        log::info!("MFT {mft}: vocab {} mean cosine {:?}", score.vocab_size, score.mean_cosine);
        table.push(score);
    }

    let chosen = table
        .iter()
        .filter_map(|s| s.mean_cosine.map(|c| (s.mft, c)))
        .fold(None::<(u64, f64)>, |best, (mft, c)| match best {
            Some((bm, bc)) if bc > c || (bc == c && bm < mft) => Some((bm, bc)),
            _ => Some((mft, c)),
        })
        .map(|(m, _)| m)
        .ok_or_else(|| Error::Undefined("no candidate threshold could be scored".into()))?;
    Ok(MftSelection { chosen, table })
}

/// Tab-separated `mft, vocab_size, mean_cosine, sample_size` table.
pub fn write_score_table(table: &[MftScore], out: &mut dyn Write) -> Result<()> {
    writeln!(out, "mft\tvocab_size\tmean_cosine\tsample_size")?;
    for s in table {
        let mean = s.mean_cosine.map_or_else(|| "NA".to_string(), |c| format!("{c:.9}"));
        writeln!(out, "{}\t{}\t{}\t{}", s.mft, s.vocab_size, mean, s.sample_size)?;
    }
    Ok(())
}

pub fn write_score_table_file(table: &[MftScore], path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(Error::file(path))?;
    write_score_table(table, &mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(v: usize, d: usize, seed: u64) -> ModelParams {
        let mut p = ModelParams::zeros(v, d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..v {
            for x in p.word_mut(i) {
                *x = rng.random_range(-1.0..1.0);
            }
            for x in p.context_mut(i) {
                *x = rng.random_range(-1.0..1.0);
            }
            p.set_word_bias(i, rng.random_range(-0.5..0.5));
            p.set_context_bias(i, rng.random_range(-0.5..0.5));
        }
        p
    }

    #[test]
    fn consistent_system_is_solved_exactly() {
        let d = 3;
        let mut p = random_params(6, d, 1);
        let target = [0.3, -0.7, 1.1];
        let cfg = TrainConfig::for_dim(d);
        // targets realizable: ln x = target·c_j + b_0 + b~_j
        let row: Vec<CoocRecord> = (1..=4)
            .map(|j| {
                let dot: f64 = target.iter().zip(p.context(j)).map(|(a, b)| a * b).sum();
                CoocRecord::new(0, j as u32, (dot + p.word_bias(0) + p.context_bias(j)).exp())
            })
            .collect();
        let r = wls_vector(0, &p, &row, &cfg).unwrap();
        assert!(!r.rank_deficient);
        for (a, b) in r.vector.iter().zip(target) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(row_objective(&r.vector, 0, &p, &row, &cfg) < 1e-20);
        p.word_mut(0).copy_from_slice(&r.vector);
        let again = wls_vector(0, &p, &row, &cfg).unwrap();
        assert!((again.cosine.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn perturbations_increase_objective() {
        let d = 4;
        let p = random_params(20, d, 2);
        let cfg = TrainConfig::for_dim(d);
        let row: Vec<CoocRecord> = (0..12).map(|j| CoocRecord::new(3, j, 1.0 + j as f64 * 3.7)).collect();
        let r = wls_vector(3, &p, &row, &cfg).unwrap();
        let best = row_objective(&r.vector, 3, &p, &row, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let w: Vec<f64> = r.vector.iter().map(|v| v + rng.random_range(-1e-3..1e-3)).collect();
            assert!(row_objective(&w, 3, &p, &row, &cfg) > best);
        }
    }

    #[test]
    fn rank_deficient_row_uses_minimum_norm() {
        let d = 3;
        let p = random_params(5, d, 4);
        let cfg = TrainConfig::for_dim(d);
        let row = vec![CoocRecord::new(0, 1, 5.0)];
        let r = wls_vector(0, &p, &row, &cfg).unwrap();
        assert!(r.rank_deficient);
        // the minimum-norm solution is parallel to the single context vector
        let c = p.context(1);
        assert!((cosine(&r.vector, c).unwrap().abs() - 1.0).abs() < 1e-9);
        assert!(row_objective(&r.vector, 0, &p, &row, &cfg) < 1e-20);
    }

    #[test]
    fn empty_row_has_no_support() {
        let p = random_params(2, 2, 0);
        assert!(matches!(
            wls_vector(0, &p, &[], &TrainConfig::for_dim(2)),
            Err(Error::NoSupport { index: 0 })
        ));
    }

    #[test]
    fn zero_trained_vector_flags_cosine() {
        let mut p = random_params(3, 2, 5);
        p.word_mut(0).fill(0.0);
        let row = vec![CoocRecord::new(0, 1, 5.0), CoocRecord::new(0, 2, 2.0)];
        let r = wls_vector(0, &p, &row, &TrainConfig::for_dim(2)).unwrap();
        assert_eq!(r.cosine, None);
    }

    #[test]
    fn rows_split() {
        let recs = vec![
            CoocRecord::new(0, 1, 1.0),
            CoocRecord::new(0, 2, 1.0),
            CoocRecord::new(2, 0, 1.0),
        ];
        let rows = rows_of(&recs);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].0, 0);
        assert_eq!(rows[0].1.len(), 2);
        assert_eq!(rows[1].0, 2);
    }

    fn settings() -> MftSettings {
        MftSettings {
            cooccur: CooccurOptions::default(),
            train: TrainConfig {
                epochs: 5,
                ..TrainConfig::for_dim(2)
            },
            shuffle_seed: 123,
            max_vocab: None,
            sampling: WlsSampling::default(),
        }
    }

    #[test]
    fn needs_two_candidates() {
        let docs: Vec<Vec<String>> = vec![vec!["a".into(), "b".into()]];
        assert!(matches!(mft_selection(&docs, &[20], &settings()), Err(Error::Validation { .. })));
    }

    #[test]
    fn identical_vocabularies_tie_to_smaller() {
        // every word occurs 4 or 10 times: thresholds 2 and 3 give the same vocabulary
        let mut docs = Vec::new();
        for k in 0..4 {
            docs.push(format!("a b c d a{k} b c").split(' ').map(str::to_string).collect::<Vec<_>>());
        }
        for _ in 0..6 {
            docs.push(vec!["b".into(), "c".into(), "d".into()]);
        }
        let sel = mft_selection(&docs, &[3, 2], &settings()).unwrap();
        assert_eq!(sel.table[0].mean_cosine, sel.table[1].mean_cosine);
        assert_eq!(sel.table[0].vocab_size, sel.table[1].vocab_size);
        assert_eq!(sel.chosen, 2);
    }

    #[test]
    fn empty_vocabulary_candidate_is_excluded() {
        let docs: Vec<Vec<String>> = (0..5).map(|_| "x y z x".split(' ').map(str::to_string).collect()).collect();
        let sel = mft_selection(&docs, &[1, 1000], &settings()).unwrap();
        assert_eq!(sel.chosen, 1);
        assert_eq!(sel.table[1].excluded.as_deref(), Some("empty vocabulary"));
        let mut out = Vec::new();
        write_score_table(&sel.table, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("mft\tvocab_size\tmean_cosine\tsample_size\n"));
        assert!(text.contains("1000\t0\tNA\t0"));
    }
}

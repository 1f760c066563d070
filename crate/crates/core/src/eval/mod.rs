//! Intrinsic evaluation of embedding sets.
//!
//! Analogy questions are answered with 3CosAdd over unit-normalised vectors,
//! excluding the three query words. Similarity datasets are scored with
//! Spearman's rank correlation using average ranks for ties. Items that
//! touch an out-of-vocabulary word are skipped and counted, never scored as
//! wrong.

pub mod datasets;
mod tasks;

use std::cmp::Ordering;
use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use datasets::{load_analogy_questions, load_similarity_pairs, SimilarityFormat};
pub use tasks::{AnalogyTask, DatasetSpec, EvalTask, SimilarityTask, TaskRegistry};

use crate::embedding::{cosine, EmbeddingSet};
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalogyQuestion {
    pub a: String,
    pub b: String,
    pub c: String,
    pub gold: String,
}

impl AnalogyQuestion {
    pub fn new(a: &str, b: &str, c: &str, gold: &str) -> Self {
        AnalogyQuestion {
            a: a.into(),
            b: b.into(),
            c: c.into(),
            gold: gold.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityPair {
    pub w1: String,
    pub w2: String,
    pub human_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Spearman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemOutcome {
    pub item: String,
    pub answered: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub human_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub metric: Metric,
    pub value: f64,
    pub answered: usize,
    pub skipped: usize,
    /// OOV and casing conventions the numbers were produced under.
    pub policy: String,
    #[serde(skip)]
    pub items: Vec<ItemOutcome>,
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.answered + self.skipped
    }

    /// Tab-separated per-item outcomes.
    pub fn write_items(&self, out: &mut dyn Write) -> Result<()> {
        writeln!(out, "item\tanswered\tprediction\tcorrect\tmodel_score\thuman_score")?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.9}"));
        for it in &self.items {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                it.item,
                it.answered,
                it.prediction.as_deref().unwrap_or(""),
                it.correct.map_or(String::new(), |c| c.to_string()),
                opt(it.model_score),
                opt(it.human_score),
            )?;
        }
        Ok(())
    }

    /// Writes `<stem>.tsv` (items) and `<stem>.json` (summary).
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        let tsv = dir.join(format!("{}.tsv", self.dataset));
        let mut f = std::fs::File::create(&tsv).map_err(Error::file(&tsv))?;
        self.write_items(&mut f)?;
        let json = dir.join(format!("{}.json", self.dataset));
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(&json, text + "\n").map_err(Error::file(&json))?;
        Ok(())
    }
}

pub const OOV_POLICY: &str = "oov items skipped; exact-match lookup";

fn require_nonempty(emb: &EmbeddingSet) -> Result<()> {
    if emb.is_empty() || emb.dim() == 0 {
        return Err(Error::validation("embedding", "embedding set is empty"));
    }
    Ok(())
}

/// Lexicographic tie-break between two candidate indices.
fn better(emb: &EmbeddingSet, score: f64, idx: usize, best: Option<(f64, usize)>) -> bool {
    match best {
        None => true,
        Some((bs, bi)) => match score.partial_cmp(&bs) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Equal) => emb.word(idx) < emb.word(bi),
            _ => false,
        },
    }
}

fn answer(norm: &EmbeddingSet, a: usize, b: usize, c: usize) -> Option<usize> {
    let d = norm.dim();
    let mut q = vec![0.0; d];
    for k in 0..d {
        q[k] = norm.vector(b)[k] - norm.vector(a)[k] + norm.vector(c)[k];
    }
    let mut best: Option<(f64, usize)> = None;
    for v in 0..norm.len() {
        if v == a || v == b || v == c {
            continue;
        }
        let s: f64 = norm.vector(v).iter().zip(&q).map(|(x, y)| x * y).sum();
        if better(norm, s, v, best) {
            best = Some((s, v));
        }
    }
    best.map(|(_, v)| v)
}

/// 3CosAdd accuracy over questions whose four words are all in vocabulary.
pub fn analogy_eval(emb: &EmbeddingSet, questions: &[AnalogyQuestion], dataset: &str) -> Result<EvalReport> {
    require_nonempty(emb)?;
    let norm = emb.normalized();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(questions.len().max(1));
    let per = questions.len().div_ceil(threads.max(1)).max(1);
    let items: Vec<ItemOutcome> = std::thread::scope(|scope| {
        let handles: Vec<_> = questions
            .chunks(per)
            .map(|chunk| {
                let norm = &norm;
                scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|q| {
                            let item = format!("{} {} {} {}", q.a, q.b, q.c, q.gold);
                            let ids = (
                                norm.index_of(&q.a),
                                norm.index_of(&q.b),
                                norm.index_of(&q.c),
                                norm.index_of(&q.gold),
                            );
                            let (Some(a), Some(b), Some(c), Some(g)) = ids else {
                                return ItemOutcome {
                                    item,
                                    answered: false,
                                    prediction: None,
                                    correct: None,
                                    model_score: None,
                                    human_score: None,
                                };
                            };
                            let pred = answer(norm, a, b, c);
                            ItemOutcome {
                                item,
                                answered: true,
                                prediction: pred.map(|p| norm.word(p).to_string()),
                                correct: Some(pred == Some(g)),
                                model_score: None,
                                human_score: None,
                            }
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("analogy worker panicked")).collect()
    });
    let answered = items.iter().filter(|i| i.answered).count();
    let correct = items.iter().filter(|i| i.correct == Some(true)).count();
    Ok(EvalReport {
        dataset: dataset.into(),
        metric: Metric::Accuracy,
        value: if answered > 0 { correct as f64 / answered as f64 } else { 0.0 },
        answered,
        skipped: items.len() - answered,
        policy: format!("3CosAdd excluding query words; {OOV_POLICY}"),
        items,
    })
}

/// Average (fractional) ranks, 1-based; tied values share the mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let mean = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = mean;
        }
        start = end;
    }
    ranks
}

/// Spearman's rho as the Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Undefined("spearman correlation needs at least two paired values".into()));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Undefined("spearman correlation undefined for constant scores".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

/// Spearman's rho between cosine similarities and human scores.
pub fn similarity_eval(emb: &EmbeddingSet, pairs: &[SimilarityPair], dataset: &str) -> Result<EvalReport> {
    require_nonempty(emb)?;
    let mut items = Vec::with_capacity(pairs.len());
    let mut model = Vec::new();
    let mut human = Vec::new();
    for p in pairs {
        let score = match (emb.get(&p.w1), emb.get(&p.w2)) {
            (Some(u), Some(v)) => cosine(u, v),
            _ => None,
        };
        if let Some(s) = score {
            model.push(s);
            human.push(p.human_score);
        }
        items.push(ItemOutcome {
            item: format!("{} {}", p.w1, p.w2),
            answered: score.is_some(),
            prediction: None,
            correct: None,
            model_score: score,
            human_score: Some(p.human_score),
        });
    }
    if model.len() < 2 {
        return Err(Error::Undefined(format!(
            "{dataset}: only {} pair(s) answerable, spearman undefined",
            model.len()
        )));
    }
    let value = spearman(&model, &human)?;
    Ok(EvalReport {
        dataset: dataset.into(),
        metric: Metric::Spearman,
        value,
        answered: model.len(),
        skipped: pairs.len() - model.len(),
        policy: format!("cosine similarity, average ranks for ties; {OOV_POLICY}"),
        items,
    })
}

/// Which words [`lexicon_diff`] drops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffFilter {
    /// Drop words containing any numeric character.
    pub exclude_numbers: bool,
    /// Drop words containing an alphabetic character outside A-Z / a-z.
    pub exclude_non_latin: bool,
}

impl Default for DiffFilter {
    fn default() -> Self {
        DiffFilter {
            exclude_numbers: true,
            exclude_non_latin: true,
        }
    }
}

impl DiffFilter {
    pub fn keeps(&self, word: &str) -> bool {
        !word.chars().any(|c| {
            (self.exclude_numbers && c.is_numeric())
                || (self.exclude_non_latin && c.is_alphabetic() && !c.is_ascii_alphabetic())
        })
    }
}

/// Words of `new` absent from `old`, filtered, sorted by byte order.
pub fn lexicon_diff<'a>(
    new: impl IntoIterator<Item = &'a str>,
    old: impl IntoIterator<Item = &'a str>,
    filter: &DiffFilter,
) -> Vec<String> {
    let old: HashSet<&str> = old.into_iter().collect();
    let mut out: Vec<String> = new
        .into_iter()
        .filter(|w| !old.contains(w) && filter.keeps(w))
        .map(str::to_string)
        .collect();
    out.sort();
    out.dedup();
    out
}

pub fn lexicon_diff_vocabs(new: &Vocabulary, old: &Vocabulary, filter: &DiffFilter) -> Vec<String> {
    lexicon_diff(new.words(), old.words(), filter)
}

/// Top-`k` words by cosine to `word`, excluding itself; ties in byte order.
pub fn nearest_neighbors(emb: &EmbeddingSet, word: &str, k: usize) -> Result<Vec<(String, f64)>> {
    if k == 0 {
        return Err(Error::validation("k", "must be >= 1"));
    }
    let q = emb.index_of(word).ok_or_else(|| Error::OutOfVocabulary(word.into()))?;
    let qv = emb.vector(q);
    let mut scored: Vec<(usize, f64)> = (0..emb.len())
        .filter(|&i| i != q)
        .filter_map(|i| cosine(qv, emb.vector(i)).map(|c| (i, c)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| emb.word(a.0).cmp(emb.word(b.0))));
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(i, c)| (emb.word(i).to_string(), c))
        .collect())
}

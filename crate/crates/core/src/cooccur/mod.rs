//! Global cooccurrence statistics.
//!
//! [`build_cooccurrence`] slides a symmetric window over each document and
//! accumulates distance-weighted counts into a sparse matrix whose entries
//! come out sorted by `(row, col)` and duplicate-free. Shard matrices built on
//! their own vocabularies can be combined with [`merge_cooccurrences`], and
//! [`shuffle`] produces the seeded training order.

mod accumulator;
pub mod format;
pub mod shuffle;
pub mod weighting;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use accumulator::Accumulator;
pub use format::{read_records, record_count, write_records, CoocMetadata, RecordReader, RecordWriter};
pub use shuffle::{shuffle_cooccurrences, shuffle_in_memory, ShuffleSummary};
pub use weighting::{weighting, DistanceWeighting, Harmonic, Uniform, WeightingRegistry, MAX_WINDOW};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

/// One entry `X[row, col] = value` of the cooccurrence matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoocRecord {
    pub row: u32,
    pub col: u32,
    pub value: f64,
}

impl CoocRecord {
    pub fn new(row: u32, col: u32, value: f64) -> Self {
        CoocRecord { row, col, value }
    }

    pub fn transposed(self) -> Self {
        CoocRecord {
            row: self.col,
            col: self.row,
            value: self.value,
        }
    }
}

pub const DEFAULT_MEMORY_BUDGET: usize = 512 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CooccurOptions {
    pub window: usize,
    pub weighting: String,
    /// Accumulator budget in bytes.
    pub memory_budget: usize,
    #[serde(skip)]
    pub temp_dir: Option<PathBuf>,
}

impl Default for CooccurOptions {
    fn default() -> Self {
        CooccurOptions {
            window: 10,
            weighting: "harmonic".into(),
            memory_budget: DEFAULT_MEMORY_BUDGET,
            temp_dir: None,
        }
    }
}

impl CooccurOptions {
    pub fn validate(&self) -> Result<()> {
        weighting::validate_window(self.window)?;
        weighting(&self.weighting)?;
        if self.memory_budget == 0 {
            return Err(Error::validation("memory_budget", "must be positive"));
        }
        Ok(())
    }

    pub fn denominator(&self) -> Result<u64> {
        Ok(weighting(&self.weighting)?.denominator(self.window))
    }
}

#[inline]
fn units_to_value(units: u64, denominator: u64) -> f64 {
    units as f64 / denominator as f64
}

fn value_to_units(rec: &CoocRecord, denominator: u64) -> Result<u64> {
    let scaled = rec.value * denominator as f64;
    let units = scaled.round();
    if !(rec.value > 0.0) || !scaled.is_finite() || (scaled - units).abs() > 1e-6 * units.max(1.0) {
        return Err(Error::NonFinite {
            row: rec.row,
            col: rec.col,
            value: rec.value,
            message: format!("value is not a positive multiple of 1/{denominator}"),
        });
    }
    Ok(units as u64)
}

/// Accumulates the windowed cooccurrences of `docs` and emits the aggregated
/// matrix in `(row, col)` order. Out-of-vocabulary tokens are skipped but
/// keep their positions. Returns the number of records emitted.
pub fn build_cooccurrence<I>(
    docs: I,
    vocab: &Vocabulary,
    opts: &CooccurOptions,
    mut sink: impl FnMut(CoocRecord) -> Result<()>,
) -> Result<u64>
where
    I: IntoIterator<Item = Result<Document>>,
{
    opts.validate()?;
    let scheme = weighting(&opts.weighting)?;
    let window = opts.window;
    let denominator = scheme.denominator(window);
    let units: Vec<u64> = (0..=window)
        .map(|d| if d == 0 { 0 } else { scheme.units(d, window) })
        .collect();

    let mut acc = Accumulator::new(vocab.len(), opts.memory_budget, opts.temp_dir.clone());
    let mut ids = Vec::new();
    for doc in docs {
        let doc = doc?;
        ids.clear();
        ids.extend(doc.iter().map(|t| vocab.index_of(t)));
        for p in 0..ids.len() {
            let Some(focus) = ids[p] else { continue };
            for d in 1..=window.min(p) {
                if let Some(ctx) = ids[p - d] {
                    acc.add(focus, ctx, units[d])?;
                    acc.add(ctx, focus, units[d])?;
                }
            }
        }
    }
    let mut emitted = 0u64;
    acc.finish(|r, c, u| {
        emitted += 1;
        sink(CoocRecord::new(r, c, units_to_value(u, denominator)))
    })?;
    Ok(emitted)
}

pub fn build_cooccurrence_vec<I>(docs: I, vocab: &Vocabulary, opts: &CooccurOptions) -> Result<Vec<CoocRecord>>
where
    I: IntoIterator<Item = Result<Document>>,
{
    let mut out = Vec::new();
    build_cooccurrence(docs, vocab, opts, |r| {
        out.push(r);
        Ok(())
    })?;
    Ok(out)
}

/// Builds the aggregated matrix straight to a record file and writes its
/// sidecar metadata.
pub fn build_cooccurrence_file<I>(
    docs: I,
    vocab: &Vocabulary,
    opts: &CooccurOptions,
    out: &Path,
) -> Result<CoocMetadata>
where
    I: IntoIterator<Item = Result<Document>>,
{
    let mut writer = RecordWriter::create(out)?;
    let result = build_cooccurrence(docs, vocab, opts, |r| Ok(writer.write(&r)?));
    let records = match result.and_then(|n| {
        writer.finish()?;
        Ok(n)
    }) {
        Ok(n) => n,
        Err(e) => {
            let _ = std::fs::remove_file(out);
            return Err(e);
        }
    };
    let meta = CoocMetadata {
        format: format::FORMAT_NAME.into(),
        aggregated: true,
        records,
        vocab_size: vocab.len(),
        vocab_sha256: vocab.digest(),
        window: opts.window,
        weighting: opts.weighting.clone(),
        denominator: opts.denominator()?,
        shuffle_seed: None,
        shuffle_budget_bytes: None,
        generator: None,
    };
    meta.write_for(out)?;
    Ok(meta)
}

#[derive(Debug, Clone)]
pub struct MergeOptions {
    /// Lattice denominator shared by every part (see [`DistanceWeighting`]).
    pub denominator: u64,
    pub memory_budget: usize,
    pub temp_dir: Option<PathBuf>,
}

pub type RecordIter<'a> = Box<dyn Iterator<Item = Result<CoocRecord>> + 'a>;

fn check_remap(n: usize, remap: &[Option<u32>], merged_size: usize) -> Result<()> {
    let mut seen = HashSet::new();
    for (old, new) in remap.iter().enumerate() {
        if let Some(new) = new {
            if *new as usize >= merged_size {
                return Err(Error::validation(
                    format!("remap[{n}][{old}]"),
                    format!("index {new} out of range for merged vocabulary of {merged_size}"),
                ));
            }
            if !seen.insert(*new) {
                return Err(Error::validation(
                    format!("remap[{n}][{old}]"),
                    format!("merged index {new} is targeted twice"),
                ));
            }
        }
    }
    Ok(())
}

/// Sums shard matrices after translating their indices into the merged
/// vocabulary. Records whose words map to `None` are dropped. Values are
/// combined exactly on the shared weight lattice.
pub fn merge_cooccurrences(
    parts: Vec<RecordIter<'_>>,
    remaps: &[Vec<Option<u32>>],
    merged_size: usize,
    opts: &MergeOptions,
    mut sink: impl FnMut(CoocRecord) -> Result<()>,
) -> Result<u64> {
    if parts.len() != remaps.len() {
        return Err(Error::validation(
            "remaps",
            format!("{} parts but {} remaps", parts.len(), remaps.len()),
        ));
    }
    if opts.denominator == 0 {
        return Err(Error::validation("denominator", "must be positive"));
    }
    for (n, remap) in remaps.iter().enumerate() {
        check_remap(n, remap, merged_size)?;
    }
    let mut acc = Accumulator::new(merged_size, opts.memory_budget, opts.temp_dir.clone());
    for (n, (part, remap)) in parts.into_iter().zip(remaps).enumerate() {
        for rec in part {
            let rec = rec?;
            let lookup = |i: u32| -> Result<Option<u32>> {
                remap.get(i as usize).copied().ok_or_else(|| {
                    Error::validation(
                        format!("remap[{n}]"),
                        format!("no entry for part index {i}"),
                    )
                })
            };
            let (Some(r), Some(c)) = (lookup(rec.row)?, lookup(rec.col)?) else {
                continue;
            };
            acc.add(r, c, value_to_units(&rec, opts.denominator)?)?;
        }
    }
    let mut emitted = 0u64;
    acc.finish(|r, c, u| {
        emitted += 1;
        sink(CoocRecord::new(r, c, units_to_value(u, opts.denominator)))
    })?;
    Ok(emitted)
}

/// File-level merge: each part is a record file with its sidecar and the
/// vocabulary it was built on. All parts must share window and weighting.
pub fn merge_cooccurrence_files(
    parts: &[(PathBuf, Vocabulary)],
    merged: &Vocabulary,
    memory_budget: usize,
    out: &Path,
) -> Result<CoocMetadata> {
    if parts.is_empty() {
        return Err(Error::validation("parts", "at least one part is required"));
    }
    let metas = parts
        .iter()
        .map(|(p, _)| CoocMetadata::read_for(p))
        .collect::<Result<Vec<_>>>()?;
    let first = &metas[0];
    for (meta, (path, vocab)) in metas.iter().zip(parts) {
        if meta.window != first.window || meta.weighting != first.weighting || meta.denominator != first.denominator {
            return Err(Error::validation(
                "parts",
                format!("{} was built with different window or weighting", path.display()),
            ));
        }
        if !meta.aggregated {
            return Err(Error::validation("parts", format!("{} is not aggregated", path.display())));
        }
        if meta.vocab_sha256 != vocab.digest() {
            return Err(Error::validation(
                "parts",
                format!("{} does not match the supplied vocabulary", path.display()),
            ));
        }
    }
    let readers = parts
        .iter()
        .map(|(p, _)| RecordReader::open(p).map(|r| Box::new(r) as RecordIter<'_>))
        .collect::<Result<Vec<_>>>()?;
    let remaps: Vec<Vec<Option<u32>>> = parts.iter().map(|(_, v)| v.remap_to(merged)).collect();
    let opts = MergeOptions {
        denominator: first.denominator,
        memory_budget,
        temp_dir: None,
    };
    let mut writer = RecordWriter::create(out)?;
    let records = merge_cooccurrences(readers, &remaps, merged.len(), &opts, |r| Ok(writer.write(&r)?))
        .and_then(|n| {
            writer.finish()?;
            Ok(n)
        });
    let records = match records {
        Ok(n) => n,
        Err(e) => {
            let _ = std::fs::remove_file(out);
            return Err(e);
        }
    };
    let meta = CoocMetadata {
        records,
        vocab_size: merged.len(),
        vocab_sha256: merged.digest(),
        ..first.clone()
    };
    meta.write_for(out)?;
    Ok(meta)
}

//! AdaGrad optimisation of the GloVe weighted least-squares objective.
//!
//! Each record `(i, j, x)` contributes `f(x) * (w_i·w~_j + b_i + b~_j - ln x)^2`
//! with `f(x) = (x / xmax)^alpha` below `xmax` and 1 above it.
//!
//! The single-thread path is bit-reproducible for a fixed seed. With more
//! threads the stream is cut into contiguous ranges and every thread updates
//! the shared parameters without locks (hogwild). Parameters live in relaxed
//! atomics during that phase and updates are compare-and-swap adds, so reads
//! may be stale but no update is lost.

mod export;
mod params;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

pub use export::{export_embeddings, CombinerRegistry, Concat, FocusOnly, Sum, VectorCombiner};
pub use params::ModelParams;

use crate::cooccur::{format, CoocRecord, RecordReader};
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub eta: f64,
    pub alpha: f64,
    pub xmax: f64,
    pub epochs: u32,
    pub seed: u64,
    pub threads: usize,
}

pub const DEFAULT_ETA: f64 = 0.05;
pub const DEFAULT_ALPHA: f64 = 0.75;
pub const DEFAULT_XMAX: f64 = 100.0;
pub const DEFAULT_SEED: u64 = 2024;

/// 50 epochs up to 100 dimensions, 100 epochs above.
pub fn default_epochs(dim: usize) -> u32 {
    if dim <= 100 {
        50
    } else {
        100
    }
}

impl TrainConfig {
    /// Standard hyperparameters for a given dimension.
    pub fn for_dim(dim: usize) -> Self {
        TrainConfig {
            dim,
            eta: DEFAULT_ETA,
            alpha: DEFAULT_ALPHA,
            xmax: DEFAULT_XMAX,
            epochs: default_epochs(dim),
            seed: DEFAULT_SEED,
            threads: 1,
        }
    }

    /// Wikipedia/Gigaword profile: identical to [`for_dim`](Self::for_dim)
    /// except that 50-dimensional runs use learning rate 0.075 and seed 123.
    pub fn wiki_giga(dim: usize) -> Self {
        let mut cfg = Self::for_dim(dim);
        if dim == 50 {
            cfg.eta = 0.075;
            cfg.seed = 123;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::validation("dim", "must be positive"));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::validation("eta", format!("must be a positive number, got {}", self.eta)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::validation("alpha", format!("must be in (0, 1], got {}", self.alpha)));
        }
        if !(self.xmax.is_finite() && self.xmax > 0.0) {
            return Err(Error::validation("xmax", format!("must be positive, got {}", self.xmax)));
        }
        if self.epochs == 0 {
            return Err(Error::validation("epochs", "must be positive"));
        }
        if self.threads == 0 {
            return Err(Error::validation("threads", "must be positive"));
        }
        Ok(())
    }
}

/// GloVe weighting `f(x)`.
#[inline]
pub fn weight(x: f64, alpha: f64, xmax: f64) -> f64 {
    if x < xmax {
        (x / xmax).powf(alpha)
    } else {
        1.0
    }
}

fn check_indices(params: &ModelParams, rec: &CoocRecord) -> Result<()> {
    let v = params.vocab_size();
    if rec.row as usize >= v || rec.col as usize >= v {
        return Err(Error::validation(
            "record",
            format!("index ({}, {}) out of range for vocabulary of {v}", rec.row, rec.col),
        ));
    }
    Ok(())
}

fn non_finite(rec: &CoocRecord, message: &str) -> Error {
    Error::NonFinite {
        row: rec.row,
        col: rec.col,
        value: rec.value,
        message: message.into(),
    }
}

/// `w_i·w~_j + b_i + b~_j - ln x`.
pub fn residual(params: &ModelParams, rec: &CoocRecord) -> Result<f64> {
    check_indices(params, rec)?;
    if !(rec.value > 0.0) {
        return Err(non_finite(rec, "cooccurrence value must be positive"));
    }
    let (i, j) = (rec.row as usize, rec.col as usize);
    let dot: f64 = params.word(i).iter().zip(params.context(j)).map(|(a, b)| a * b).sum();
    let r = dot + params.word_bias(i) + params.context_bias(j) - rec.value.ln();
    if !r.is_finite() {
        return Err(non_finite(rec, "non-finite residual"));
    }
    Ok(r)
}

/// Weighted squared residual of one record.
pub fn example_cost(params: &ModelParams, rec: &CoocRecord, cfg: &TrainConfig) -> Result<f64> {
    let r = residual(params, rec)?;
    let cost = weight(rec.value, cfg.alpha, cfg.xmax) * r * r;
    if !cost.is_finite() {
        return Err(non_finite(rec, "non-finite cost"));
    }
    Ok(cost)
}

/// Exact gradient of [`example_cost`] with respect to the four parameter
/// blocks touched by a record.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleGradient {
    pub word: Vec<f64>,
    pub context: Vec<f64>,
    pub word_bias: f64,
    pub context_bias: f64,
}

pub fn example_gradient(params: &ModelParams, rec: &CoocRecord, cfg: &TrainConfig) -> Result<ExampleGradient> {
    let r = residual(params, rec)?;
    let s = 2.0 * weight(rec.value, cfg.alpha, cfg.xmax) * r;
    let (i, j) = (rec.row as usize, rec.col as usize);
    Ok(ExampleGradient {
        word: params.context(j).iter().map(|c| s * c).collect(),
        context: params.word(i).iter().map(|w| s * w).collect(),
        word_bias: s,
        context_bias: s,
    })
}

/// Uniform access to plain or shared parameter storage.
trait Store {
    fn load(&self, k: usize) -> f64;
    fn store(&mut self, k: usize, v: f64);

    #[inline]
    fn add(&mut self, k: usize, delta: f64) {
        let v = self.load(k) + delta;
        self.store(k, v);
    }
}

struct Plain<'a>(&'a mut [f64]);

impl Store for Plain<'_> {
    #[inline]
    fn load(&self, k: usize) -> f64 {
        self.0[k]
    }
    #[inline]
    fn store(&mut self, k: usize, v: f64) {
        self.0[k] = v;
    }
}

#[derive(Clone, Copy)]
struct Shared<'a>(&'a [AtomicU64]);

impl Store for Shared<'_> {
    #[inline]
    fn load(&self, k: usize) -> f64 {
        f64::from_bits(self.0[k].load(Ordering::Relaxed))
    }
    #[inline]
    fn store(&mut self, k: usize, v: f64) {
        self.0[k].store(v.to_bits(), Ordering::Relaxed);
    }
    /// Compare-and-swap so concurrent updates to a hot row are not lost.
    #[inline]
    fn add(&mut self, k: usize, delta: f64) {
        let _ = self.0[k].fetch_update(Ordering::Relaxed, Ordering::Relaxed, |bits| {
            Some((f64::from_bits(bits) + delta).to_bits())
        });
    }
}

struct Layout {
    vocab_size: usize,
    dim: usize,
}

enum Step {
    Applied(f64),
    Skipped,
}

/// One AdaGrad update. The gradient scale is `g = f(x) * r` (the gradient of
/// half the record cost); every coordinate moves by `eta * grad / sqrt(G)`
/// and then `G += grad^2`. Both vectors are updated from their pre-step
/// values. Nothing is written when any update would be non-finite.
#[inline]
fn step<S: Store>(
    values: &mut S,
    gradsq: &mut S,
    layout: &Layout,
    rec: &CoocRecord,
    cfg: &TrainConfig,
    scratch: &mut [f64],
) -> Step {
    let d = layout.dim;
    let l1 = rec.row as usize * (d + 1);
    let l2 = (layout.vocab_size + rec.col as usize) * (d + 1);

    let mut dot = 0.0;
    for k in 0..d {
        dot += values.load(l1 + k) * values.load(l2 + k);
    }
    let r = dot + values.load(l1 + d) + values.load(l2 + d) - rec.value.ln();
    let f = weight(rec.value, cfg.alpha, cfg.xmax);
    let cost = f * r * r;
    let g = f * r;
    if !cost.is_finite() || !g.is_finite() {
        return Step::Skipped;
    }

    // scratch[..d+1]: word-row gradient, scratch[d+1..]: context-row gradient
    let (g1, g2) = scratch.split_at_mut(d + 1);
    for k in 0..d {
        g1[k] = g * values.load(l2 + k);
        g2[k] = g * values.load(l1 + k);
    }
    g1[d] = g;
    g2[d] = g;
    for k in 0..=d {
        let u1 = cfg.eta * g1[k] / gradsq.load(l1 + k).sqrt();
        let u2 = cfg.eta * g2[k] / gradsq.load(l2 + k).sqrt();
        let s1 = gradsq.load(l1 + k) + g1[k] * g1[k];
        let s2 = gradsq.load(l2 + k) + g2[k] * g2[k];
        if !(u1.is_finite() && u2.is_finite() && s1.is_finite() && s2.is_finite()) {
            return Step::Skipped;
        }
    }
    for k in 0..=d {
        let (a, b) = (l1 + k, l2 + k);
        let ga = gradsq.load(a);
        let gb = gradsq.load(b);
        values.add(a, -(cfg.eta * g1[k] / ga.sqrt()));
        values.add(b, -(cfg.eta * g2[k] / gb.sqrt()));
        gradsq.add(a, g1[k] * g1[k]);
        gradsq.add(b, g2[k] * g2[k]);
    }
    Step::Applied(cost)
}

/// Applies one AdaGrad step for `rec` and returns the record's pre-update
/// cost. A non-finite update leaves `params` untouched and returns
/// [`Error::NonFinite`].
pub fn adagrad_step(params: &mut ModelParams, rec: &CoocRecord, cfg: &TrainConfig) -> Result<f64> {
    check_indices(params, rec)?;
    let layout = Layout {
        vocab_size: params.vocab_size(),
        dim: params.dim(),
    };
    let mut scratch = vec![0.0; 2 * (layout.dim + 1)];
    let ModelParams { values, gradsq, .. } = params;
    match step(&mut Plain(values), &mut Plain(gradsq), &layout, rec, cfg, &mut scratch) {
        Step::Applied(cost) => Ok(cost),
        Step::Skipped => Err(non_finite(rec, "non-finite update skipped")),
    }
}

/// A record stream that can be read repeatedly, in whole or by range.
pub trait RecordSource: Sync {
    fn len(&self) -> u64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn visit(&self, start: u64, count: u64, f: &mut dyn FnMut(&CoocRecord) -> Result<()>) -> Result<()>;
}

impl RecordSource for [CoocRecord] {
    fn len(&self) -> u64 {
        <[CoocRecord]>::len(self) as u64
    }

    fn visit(&self, start: u64, count: u64, f: &mut dyn FnMut(&CoocRecord) -> Result<()>) -> Result<()> {
        let start = start as usize;
        self[start..start + count as usize].iter().try_for_each(f)
    }
}

impl RecordSource for Vec<CoocRecord> {
    fn len(&self) -> u64 {
        self.as_slice().len() as u64
    }

    fn visit(&self, start: u64, count: u64, f: &mut dyn FnMut(&CoocRecord) -> Result<()>) -> Result<()> {
        self.as_slice().visit(start, count, f)
    }
}

/// Record file read from disk on every pass.
pub struct RecordFile {
    path: PathBuf,
    len: u64,
}

impl RecordFile {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let len = format::record_count(&path)?;
        Ok(RecordFile { path, len })
    }
}

impl RecordSource for RecordFile {
    fn len(&self) -> u64 {
        self.len
    }

    fn visit(&self, start: u64, count: u64, f: &mut dyn FnMut(&CoocRecord) -> Result<()>) -> Result<()> {
        for rec in RecordReader::open_range(&self.path, start, count)? {
            f(&rec?)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Mean pre-update record cost per epoch.
    pub epoch_costs: Vec<f64>,
    pub skipped: u64,
    pub processed: u64,
}

#[derive(Default, Clone, Copy)]
struct EpochTally {
    cost: f64,
    applied: u64,
    skipped: u64,
}

impl EpochTally {
    fn merge(self, o: EpochTally) -> Self {
        EpochTally {
            cost: self.cost + o.cost,
            applied: self.applied + o.applied,
            skipped: self.skipped + o.skipped,
        }
    }
}

fn run_range<S: Store>(
    source: &dyn RecordSource,
    start: u64,
    count: u64,
    values: &mut S,
    gradsq: &mut S,
    layout: &Layout,
    cfg: &TrainConfig,
) -> Result<EpochTally> {
    let mut scratch = vec![0.0; 2 * (layout.dim + 1)];
    let mut tally = EpochTally::default();
    source.visit(start, count, &mut |rec| {
        if rec.row as usize >= layout.vocab_size || rec.col as usize >= layout.vocab_size {
            return Err(Error::validation(
                "record",
                format!("index ({}, {}) out of range for vocabulary of {}", rec.row, rec.col, layout.vocab_size),
            ));
        }
        match step(values, gradsq, layout, rec, cfg, &mut scratch) {
            Step::Applied(c) => {
                tally.cost += c;
                tally.applied += 1;
            }
            Step::Skipped => tally.skipped += 1,
        }
        Ok(())
    })?;
    Ok(tally)
}

/// Initialises parameters from `cfg.seed` and trains for `cfg.epochs` passes.
pub fn train(records: &dyn RecordSource, vocab: &Vocabulary, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let params = ModelParams::init(vocab.len(), cfg.dim, cfg.seed);
    train_from(params, records, cfg, |_, _| {})
}

/// Continues training from existing parameters. `on_epoch(epoch, mean_cost)`
/// fires after each pass.
pub fn train_from(
    mut params: ModelParams,
    records: &dyn RecordSource,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(u32, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if params.dim() != cfg.dim {
        return Err(Error::validation(
            "dim",
            format!("parameters have dimension {}, config says {}", params.dim(), cfg.dim),
        ));
    }
    let n = records.len();
    if n == 0 {
        return Err(Error::validation("records", "training stream is empty"));
    }
    let layout = Layout {
        vocab_size: params.vocab_size(),
        dim: params.dim(),
    };
    let threads = (cfg.threads as u64).min(n) as usize;
    let mut epoch_costs = Vec::with_capacity(cfg.epochs as usize);
    let mut processed = 0u64;
    let mut skipped = 0u64;

    let mut finish_epoch = |epoch: u32, tally: EpochTally| -> Result<()> {
        processed += tally.applied + tally.skipped;
        skipped += tally.skipped;
        let mean = if tally.applied > 0 {
            tally.cost / tally.applied as f64
        } else {
            f64::NAN
        };
        log::info!("epoch {}: mean cost {mean:.6}, skipped {}", epoch + 1, tally.skipped);
        epoch_costs.push(mean);
        on_epoch(epoch + 1, mean);
        if skipped * 1000 > processed {
            return Err(Error::TooManySkipped {
                skipped,
                processed,
                limit: processed / 1000,
            });
        }
        Ok(())
    };

    if threads <= 1 {
        let ModelParams { values, gradsq, .. } = &mut params;
        for epoch in 0..cfg.epochs {
            let tally = run_range(records, 0, n, &mut Plain(values), &mut Plain(gradsq), &layout, cfg)?;
            finish_epoch(epoch, tally)?;
        }
    } else {
        let shared_values: Vec<AtomicU64> = params.values.iter().map(|v| AtomicU64::new(v.to_bits())).collect();
        let shared_gradsq: Vec<AtomicU64> = params.gradsq.iter().map(|v| AtomicU64::new(v.to_bits())).collect();
        let per = n.div_ceil(threads as u64);
        for epoch in 0..cfg.epochs {
            let tallies: Vec<Result<EpochTally>> = std::thread::scope(|scope| {
                let handles: Vec<_> = (0..threads as u64)
                    .map(|t| {
                        let start = t * per;
                        let count = per.min(n.saturating_sub(start));
                        let (sv, sg, layout) = (&shared_values, &shared_gradsq, &layout);
                        scope.spawn(move || {
                            run_range(records, start, count, &mut Shared(sv), &mut Shared(sg), layout, cfg)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
            });
            let mut tally = EpochTally::default();
            for t in tallies {
                tally = tally.merge(t?);
            }
            finish_epoch(epoch, tally)?;
        }
        for (dst, src) in params.values.iter_mut().zip(&shared_values) {
            *dst = f64::from_bits(src.load(Ordering::Relaxed));
        }
        for (dst, src) in params.gradsq.iter_mut().zip(&shared_gradsq) {
            *dst = f64::from_bits(src.load(Ordering::Relaxed));
        }
    }

    Ok(TrainOutcome {
        params,
        epoch_costs,
        skipped,
        processed,
    })
}

/// Mean record cost over a whole stream, without updating anything.
pub fn mean_cost(params: &ModelParams, records: &dyn RecordSource, cfg: &TrainConfig) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0u64;
    records.visit(0, records.len(), &mut |r| {
        sum += example_cost(params, r, cfg)?;
        n += 1;
        Ok(())
    })?;
    Ok(sum / n.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dim: usize) -> TrainConfig {
        TrainConfig::for_dim(dim)
    }

    #[test]
    fn table_defaults() {
        let c = TrainConfig::for_dim(300);
        assert_eq!((c.eta, c.alpha, c.xmax, c.seed, c.epochs), (0.05, 0.75, 100.0, 2024, 100));
        assert_eq!(TrainConfig::for_dim(200).epochs, 100);
        assert_eq!(TrainConfig::for_dim(100).epochs, 50);
        assert_eq!(TrainConfig::for_dim(50).epochs, 50);
        let w = TrainConfig::wiki_giga(50);
        assert_eq!((w.eta, w.seed), (0.075, 123));
        assert_eq!(TrainConfig::wiki_giga(100), TrainConfig::for_dim(100));
    }

    #[test]
    fn validation() {
        let mut c = cfg(10);
        c.eta = -0.05;
        assert!(matches!(c.validate(), Err(Error::Validation { ref field, .. }) if field == "eta"));
        let mut c = cfg(10);
        c.alpha = 1.5;
        assert!(c.validate().is_err());
        let mut c = cfg(10);
        c.threads = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn weighting_function() {
        assert_eq!(weight(100.0, 0.75, 100.0), 1.0);
        assert_eq!(weight(200.0, 0.75, 100.0), 1.0);
        let expected = 0.5f64.powf(0.75);
        assert!((weight(50.0, 0.75, 100.0) - expected).abs() < 1e-15);
        assert!((expected - 0.594_603_557_501_360_5).abs() < 1e-15);
        let mut prev = 0.0;
        for k in 1..300 {
            let w = weight(k as f64 * 0.5, 0.75, 100.0);
            assert!(w >= prev && w <= 1.0);
            prev = w;
        }
    }

    #[test]
    fn cost_cases() {
        let c = cfg(2);
        let mut p = ModelParams::zeros(2, 2);
        assert_eq!(example_cost(&p, &CoocRecord::new(0, 1, 1.0), &c).unwrap(), 0.0);
        let e = std::f64::consts::E;
        let w = weight(e, c.alpha, c.xmax);
        let got = example_cost(&p, &CoocRecord::new(0, 1, e), &c).unwrap();
        assert!((got - w).abs() < 1e-15);

        p.word_mut(0).copy_from_slice(&[1.0, 2.0]);
        p.context_mut(1).copy_from_slice(&[0.5, 0.25]);
        p.set_word_bias(0, 0.1);
        p.set_context_bias(1, 0.2);
        // 0.5 + 0.5 + 0.3 = 1.3 = ln x
        let x = 1.3f64.exp();
        assert!(example_cost(&p, &CoocRecord::new(0, 1, x), &c).unwrap() < 1e-28);
        assert!(example_cost(&p, &CoocRecord::new(0, 5, x), &c).is_err());
        assert!(example_cost(&p, &CoocRecord::new(0, 1, 0.0), &c).is_err());
    }

    #[test]
    fn zero_residual_step_changes_nothing() {
        let c = cfg(2);
        let mut p = ModelParams::init(3, 2, 1);
        let r = residual(&p, &CoocRecord::new(1, 2, 1.0)).unwrap();
        let x = r.exp();
        let before = p.clone();
        let cost = adagrad_step(&mut p, &CoocRecord::new(1, 2, x), &c).unwrap();
        assert!(cost < 1e-25);
        for (a, b) in p.values.iter().zip(&before.values) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in p.gradsq.iter().zip(&before.gradsq) {
            assert!((a - b).abs() < 1e-25);
        }
    }

    #[test]
    fn one_dimensional_hand_step() {
        // w = 0.5, w~ = 0.2, b = 0.1, b~ = -0.1, x = e, G = 1
        let c = TrainConfig {
            eta: 0.1,
            ..cfg(1)
        };
        let mut p = ModelParams::zeros(1, 1);
        p.word_mut(0)[0] = 0.5;
        p.context_mut(0)[0] = 0.2;
        p.set_word_bias(0, 0.1);
        p.set_context_bias(0, -0.1);
        let x = std::f64::consts::E;
        let f = (x / 100.0).powf(0.75);
        let r = 0.5 * 0.2 + 0.1 - 0.1 - 1.0; // -0.9
        let g = f * r;
        let cost = adagrad_step(&mut p, &CoocRecord::new(0, 0, x), &c).unwrap();
        assert!((cost - f * r * r).abs() < 1e-15);
        assert!((p.word(0)[0] - (0.5 - 0.1 * g * 0.2)).abs() < 1e-15);
        assert!((p.context(0)[0] - (0.2 - 0.1 * g * 0.5)).abs() < 1e-15);
        assert!((p.word_bias(0) - (0.1 - 0.1 * g)).abs() < 1e-15);
        assert!((p.context_bias(0) - (-0.1 - 0.1 * g)).abs() < 1e-15);
        assert!((p.word_gradsq(0)[0] - (1.0 + (g * 0.2).powi(2))).abs() < 1e-15);
        assert!((p.context_gradsq(0)[0] - (1.0 + (g * 0.5).powi(2))).abs() < 1e-15);
        assert!((p.word_gradsq(0)[1] - (1.0 + g * g)).abs() < 1e-15);
    }

    #[test]
    fn accumulator_growth_shrinks_second_step() {
        let c = cfg(4);
        let mut p = ModelParams::init(2, 4, 5);
        let rec = CoocRecord::new(0, 1, 30.0);
        let b0 = p.word_bias(0);
        adagrad_step(&mut p, &rec, &c).unwrap();
        let b1 = p.word_bias(0);
        adagrad_step(&mut p, &rec, &c).unwrap();
        let b2 = p.word_bias(0);
        assert!((b2 - b1).abs() < (b1 - b0).abs());
    }

    #[test]
    fn non_finite_is_skipped() {
        let c = cfg(1);
        let mut p = ModelParams::zeros(1, 1);
        p.word_mut(0)[0] = 1e300;
        p.context_mut(0)[0] = 1e300;
        let before = p.clone();
        assert!(matches!(adagrad_step(&mut p, &CoocRecord::new(0, 0, 2.0), &c), Err(Error::NonFinite { .. })));
        assert_eq!(p, before);
    }

    #[test]
    fn too_many_skips_abort() {
        let c = TrainConfig { epochs: 1, ..cfg(1) };
        let mut p = ModelParams::zeros(2, 1);
        p.word_mut(0)[0] = 1e300;
        p.context_mut(1)[0] = 1e300;
        let recs = vec![CoocRecord::new(0, 1, 2.0), CoocRecord::new(1, 0, 2.0)];
        assert!(matches!(train_from(p, &recs, &c, |_, _| {}), Err(Error::TooManySkipped { .. })));
    }

    #[test]
    fn single_record_is_fitted() {
        let v = Vocabulary::from_entries(vec![("a".into(), 1), ("b".into(), 1)]).unwrap();
        let c = TrainConfig { epochs: 400, eta: 0.2, ..cfg(3) };
        let out = train(&vec![CoocRecord::new(0, 1, 20.0)], &v, &c).unwrap();
        assert!(out.epoch_costs[0] > 1.0);
        assert!(*out.epoch_costs.last().unwrap() < 1e-6);
    }

    #[test]
    fn single_thread_is_bit_reproducible() {
        let v = Vocabulary::from_entries((0..5).map(|i| (format!("w{i}"), 1)).collect()).unwrap();
        let recs: Vec<CoocRecord> = (0..25)
            .map(|k| CoocRecord::new(k / 5, k % 5, 1.0 + (k * 7 % 11) as f64))
            .collect();
        let c = TrainConfig { epochs: 5, ..cfg(4) };
        let a = train(&recs, &v, &c).unwrap();
        let b = train(&recs, &v, &c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_stream_rejected() {
        let v = Vocabulary::from_entries(vec![("a".into(), 1)]).unwrap();
        assert!(train(&Vec::new(), &v, &cfg(2)).is_err());
    }

    #[test]
    fn out_of_range_record_aborts() {
        let v = Vocabulary::from_entries(vec![("a".into(), 1)]).unwrap();
        assert!(matches!(
            train(&vec![CoocRecord::new(0, 3, 1.0)], &v, &cfg(2)),
            Err(Error::Validation { .. })
        ));
    }
}

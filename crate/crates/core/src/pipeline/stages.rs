use std::io::Write;
use std::path::PathBuf;

use serde_json::{json, Value};

use super::{Plan, Stage, StageContext};
use crate::cooccur::{build_cooccurrence_file, read_records, shuffle_cooccurrences, CoocMetadata};
use crate::corpus::stream_tokens;
use crate::diagnostics::wls_summary;
use crate::embedding::{EmbeddingSet, EmbeddingSource};
use crate::error::{Error, Result};
use crate::eval::TaskRegistry;
use crate::trainer::{export_embeddings, train, CombinerRegistry, ModelParams, RecordFile};
use crate::vocab::{build_vocab, TokenCounter, Vocabulary};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const COOC_FILE: &str = "cooccur.bin";
pub const SHUFFLED_FILE: &str = "cooccur.shuf.bin";
pub const PARAMS_FILE: &str = "params.bin";
pub const VECTORS_FILE: &str = "vectors.txt";
pub const WLS_FILE: &str = "wls.tsv";
pub const EVAL_DIR: &str = "eval";

fn with_sidecar(p: PathBuf) -> [PathBuf; 2] {
    let meta = CoocMetadata::sidecar_path(&p);
    [p, meta]
}

fn temp_dir(plan: &Plan) -> Result<PathBuf> {
    let dir = plan.artifact("tmp");
    std::fs::create_dir_all(&dir).map_err(Error::file(&dir))?;
    Ok(dir)
}

fn corpus_paths(plan: &Plan) -> Vec<PathBuf> {
    plan.corpus.sources.iter().map(|s| s.path.clone()).collect()
}

pub struct VocabStage;

impl Stage for VocabStage {
    fn name(&self) -> &'static str {
        "vocab"
    }

    fn settings(&self, plan: &Plan) -> Value {
        json!({ "corpus": plan.corpus, "min_count": plan.vocab.min_count, "max_size": plan.vocab.max_size })
    }

    fn inputs(&self, plan: &Plan) -> Vec<PathBuf> {
        corpus_paths(plan)
    }

    fn outputs(&self, plan: &Plan) -> Vec<PathBuf> {
        vec![plan.artifact(VOCAB_FILE)]
    }

    fn run(&self, ctx: &StageContext) -> Result<Value> {
        let plan = ctx.plan;
        let mut counter = TokenCounter::with_budget(plan.vocab.count_budget);
        for doc in stream_tokens(&plan.corpus) {
            counter.add_document(&doc?)?;
        }
        let counts = counter.finish()?;
        let vocab = build_vocab(&counts, plan.vocab.min_count, plan.vocab.max_size)?;
        if vocab.is_empty() {
            return Err(Error::validation(
                "vocab.min_count",
                format!("no word occurs at least {} times", plan.vocab.min_count),
            ));
        }
        vocab.write(plan.artifact(VOCAB_FILE))?;
        Ok(json!({
            "tokens": counts.total(),
            "distinct": counts.len(),
            "vocab_size": vocab.len(),
            "vocab_sha256": vocab.digest(),
        }))
    }
}

pub struct CooccurStage;

impl Stage for CooccurStage {
    fn name(&self) -> &'static str {
        "cooccur"
    }

    fn settings(&self, plan: &Plan) -> Value {
        // The memory budget changes spilling, not the result.
        json!({ "corpus": plan.corpus, "window": plan.cooccur.window, "weighting": plan.cooccur.weighting })
    }

    fn inputs(&self, plan: &Plan) -> Vec<PathBuf> {
        let mut v = corpus_paths(plan);
        v.push(plan.artifact(VOCAB_FILE));
        v
    }

    fn outputs(&self, plan: &Plan) -> Vec<PathBuf> {
        with_sidecar(plan.artifact(COOC_FILE)).to_vec()
    }

    fn run(&self, ctx: &StageContext) -> Result<Value> {
        let plan = ctx.plan;
        let vocab = Vocabulary::read(plan.artifact(VOCAB_FILE))?;
        let mut opts = plan.cooccur.clone();
        opts.temp_dir = Some(temp_dir(plan)?);
        let meta = build_cooccurrence_file(stream_tokens(&plan.corpus), &vocab, &opts, &plan.artifact(COOC_FILE))?;
        Ok(json!({ "records": meta.records, "denominator": meta.denominator }))
    }
}

pub struct ShuffleStage;

impl Stage for ShuffleStage {
    fn name(&self) -> &'static str {
        "shuffle"
    }

    fn settings(&self, plan: &Plan) -> Value {
        // The external path's bucket layout depends on the budget.
        json!({ "seed": plan.shuffle_seed, "memory_budget": plan.shuffle_memory_budget })
    }

    fn inputs(&self, plan: &Plan) -> Vec<PathBuf> {
        with_sidecar(plan.artifact(COOC_FILE)).to_vec()
    }

    fn outputs(&self, plan: &Plan) -> Vec<PathBuf> {
        with_sidecar(plan.artifact(SHUFFLED_FILE)).to_vec()
    }

    fn run(&self, ctx: &StageContext) -> Result<Value> {
        let plan = ctx.plan;
        let s = shuffle_cooccurrences(
            &plan.artifact(COOC_FILE),
            &plan.artifact(SHUFFLED_FILE),
            plan.shuffle_seed,
            plan.shuffle_memory_budget,
            Some(&temp_dir(plan)?),
        )?;
        Ok(json!({ "records": s.records, "buckets": s.buckets, "seed": plan.shuffle_seed }))
    }
}

pub struct TrainStage;

impl Stage for TrainStage {
    fn name(&self) -> &'static str {
        "train"
    }

    fn settings(&self, plan: &Plan) -> Value {
        json!({ "profile": plan.train_profile, "train": plan.train })
    }

    fn inputs(&self, plan: &Plan) -> Vec<PathBuf> {
        vec![plan.artifact(VOCAB_FILE), plan.artifact(SHUFFLED_FILE)]
    }

    fn outputs(&self, plan: &Plan) -> Vec<PathBuf> {
        vec![plan.artifact(PARAMS_FILE)]
    }

    fn run(&self, ctx: &StageContext) -> Result<Value> {
        let plan = ctx.plan;
        let vocab = Vocabulary::read(plan.artifact(VOCAB_FILE))?;
        let shuffled = plan.artifact(SHUFFLED_FILE);
        let meta = CoocMetadata::read_for(&shuffled)?;
        if meta.vocab_sha256 != vocab.digest() {
            return Err(Error::validation("cooccurrence", "record file was built on a different vocabulary"));
        }
        let records = RecordFile::open(&shuffled)?;
        let outcome = train(&records, &vocab, &plan.train)?;
        outcome.params.save(plan.artifact(PARAMS_FILE))?;
        Ok(json!({
            "epoch_costs": outcome.epoch_costs,
            "skipped": outcome.skipped,
            "processed": outcome.processed,
            "seed": plan.train.seed,
            "threads": plan.train.threads,
            "init": "vectors and biases uniform in [-0.5/d, 0.5/d); AdaGrad accumulators 1.0",
            "vocab_sha256": vocab.digest(),
        }))
    }
}

pub struct ExportStage;

impl Stage for ExportStage {
    fn name(&self) -> &'static str {
        "export"
    }

    fn settings(&self, plan: &Plan) -> Value {
        json!({ "mode": plan.export_mode })
    }

    fn inputs(&self, plan: &Plan) -> Vec<PathBuf> {
        vec![plan.artifact(VOCAB_FILE), plan.artifact(PARAMS_FILE)]
    }

    fn outputs(&self, plan: &Plan) -> Vec<PathBuf> {
        vec![plan.artifact(VECTORS_FILE)]
    }

    fn run(&self, ctx: &StageContext) -> Result<Value> {
        let plan = ctx.plan;
        let vocab = Vocabulary::read(plan.artifact(VOCAB_FILE))?;
        let params = ModelParams::load(plan.artifact(PARAMS_FILE))?;
        let mode = CombinerRegistry::default().get(&plan.export_mode)?;
        let mut emb = export_embeddings(&params, &vocab, mode.as_ref())?;
        emb.source = EmbeddingSource {
            config_sha256: Some(plan.digest()),
            corpus_sha256: Some(ctx.corpus_digest()?),
        };
        emb.write_text(plan.artifact(VECTORS_FILE))?;
        Ok(json!({ "words": emb.len(), "dim": emb.dim(), "source": emb.source }))
    }
}

pub struct EvalStage;

impl Stage for EvalStage {
    fn name(&self) -> &'static str {
        "eval"
    }

    fn enabled(&self, plan: &Plan) -> bool {
        !plan.eval.is_empty()
    }

    fn settings(&self, plan: &Plan) -> Value {
        json!({ "datasets": plan.eval })
    }

    fn inputs(&self, plan: &Plan) -> Vec<PathBuf> {
        let mut v = vec![plan.artifact(VECTORS_FILE)];
        v.extend(plan.eval.iter().map(|d| d.path.clone()));
        v
    }

    fn outputs(&self, plan: &Plan) -> Vec<PathBuf> {
        let dir = plan.artifact(EVAL_DIR);
        plan.eval
            .iter()
            .flat_map(|d| [dir.join(format!("{}.tsv", d.name)), dir.join(format!("{}.json", d.name))])
            .collect()
    }

    fn run(&self, ctx: &StageContext) -> Result<Value> {
        let plan = ctx.plan;
        let emb = EmbeddingSet::read_text(plan.artifact(VECTORS_FILE))?;
        let tasks = TaskRegistry::default();
        let dir = plan.artifact(EVAL_DIR);
        let mut summaries = Vec::new();
        for spec in &plan.eval {
            let report = tasks.run(&emb, spec)?;
            report.write_files(&dir)?;
            log::info!("{}: {:?} {:.4} ({} answered, {} skipped)", report.dataset, report.metric, report.value, report.answered, report.skipped);
            summaries.push(serde_json::to_value(&report).expect("report serializes"));
        }
        Ok(Value::Array(summaries))
    }
}

pub struct WlsStage;

impl Stage for WlsStage {
    fn name(&self) -> &'static str {
        "wls"
    }

    fn enabled(&self, plan: &Plan) -> bool {
        plan.wls.is_some()
    }

    fn settings(&self, plan: &Plan) -> Value {
        json!({ "sampling": plan.wls, "train": plan.train })
    }

    fn inputs(&self, plan: &Plan) -> Vec<PathBuf> {
        vec![plan.artifact(VOCAB_FILE), plan.artifact(COOC_FILE), plan.artifact(PARAMS_FILE)]
    }

    fn outputs(&self, plan: &Plan) -> Vec<PathBuf> {
        vec![plan.artifact(WLS_FILE)]
    }

    fn run(&self, ctx: &StageContext) -> Result<Value> {
        let plan = ctx.plan;
        let sampling = plan.wls.clone().unwrap_or_default();
        let vocab = Vocabulary::read(plan.artifact(VOCAB_FILE))?;
        let params = ModelParams::load(plan.artifact(PARAMS_FILE))?;
        let records = read_records(plan.artifact(COOC_FILE))?;
        let summary = wls_summary(&params, &records, &plan.train, &sampling)?;
        let path = plan.artifact(WLS_FILE);
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path).map_err(Error::file(&path))?);
        writeln!(out, "word\tsupport\tcosine\trank_deficient")?;
        for r in &summary.results {
            let cos = r.cosine.map_or_else(|| "NA".to_string(), |c| format!("{c:.9}"));
            writeln!(out, "{}\t{}\t{}\t{}", vocab.word(r.index), r.support, cos, r.rank_deficient)?;
        }
        out.flush()?;
        Ok(json!({
            "scored": summary.results.len(),
            "undefined": summary.undefined,
            "mean_cosine": summary.mean_cosine,
            "rank_deficient": summary.results.iter().filter(|r| r.rank_deficient).count(),
        }))
    }
}

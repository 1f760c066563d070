use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use glove_core::cooccur::{
    build_cooccurrence_file, merge_cooccurrence_files, read_records, shuffle_cooccurrences, CoocMetadata,
    CooccurOptions,
};
use glove_core::corpus::{load_manifest, stream_tokens, CorpusManifest, CorpusSource};
use glove_core::diagnostics::{mft_selection, wls_summary, write_score_table_file, MftSettings, WlsSampling};
use glove_core::embedding::EmbeddingSet;
use glove_core::eval::{lexicon_diff, nearest_neighbors, DatasetSpec, DiffFilter, SimilarityFormat, TaskRegistry};
use glove_core::pipeline::{file_sha256, run_pipeline, ExportSection, Overrides, PipelineConfig, ShuffleSection, TrainSection, VocabSection};
use glove_core::synth::{analogy_file_text, fixture_analogies, fixture_corpus, SynthOptions};
use glove_core::trainer::{export_embeddings, train, CombinerRegistry, ModelParams, RecordFile, TrainConfig};
use glove_core::vocab::{build_vocab, merge_vocabs, FrequencyTable, TokenCounter, Vocabulary};
use glove_core::{Error, Result};

use crate::{Cli, Command, CorpusArgs, TrainArgs};

/// Section defaults from `--config`, or built-in defaults without one.
struct Defaults {
    base: PathBuf,
    config: Option<PipelineConfig>,
}

impl Defaults {
    fn load(cli: &Cli) -> Result<Self> {
        match &cli.config {
            Some(path) => Ok(Defaults {
                base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
                config: Some(PipelineConfig::load(path)?),
            }),
            None => Ok(Defaults {
                base: PathBuf::new(),
                config: None,
            }),
        }
    }

    fn section<T: Clone + Default>(&self, pick: impl Fn(&PipelineConfig) -> &T) -> T {
        self.config.as_ref().map(|c| pick(c).clone()).unwrap_or_default()
    }

    fn corpus(&self, args: &CorpusArgs) -> Result<CorpusManifest> {
        let mut manifest = if let Some(path) = &args.manifest {
            load_manifest(path)?
        } else if !args.corpus.is_empty() {
            let mut m = CorpusManifest::single(&args.corpus[0]);
            m.sources.extend(args.corpus[1..].iter().map(|p| CorpusSource { path: p.clone(), repeat: 1 }));
            m
        } else if let Some(cfg) = &self.config {
            let mut m = cfg.corpus.clone();
            for s in &mut m.sources {
                if s.path.is_relative() {
                    s.path = self.base.join(&s.path);
                }
            }
            m
        } else {
            return Err(Error::validation("corpus", "give --manifest, --corpus or --config"));
        };
        manifest.lowercase |= args.lowercase;
        manifest.stop_tokens.extend(args.stop_tokens.iter().cloned());
        manifest.validate()?;
        Ok(manifest)
    }

    fn train(&self, cli: &Cli, args: &TrainArgs) -> Result<(TrainSection, TrainConfig)> {
        let mut s: TrainSection = self.section(|c| &c.train);
        if let Some(d) = args.dim {
            s.dim = d;
        }
        if let Some(p) = &args.profile {
            s.profile = p.clone();
        }
        s.eta = args.eta.or(s.eta);
        s.alpha = args.alpha.or(s.alpha);
        s.xmax = args.xmax.or(s.xmax);
        s.epochs = args.epochs.or(s.epochs);
        s.seed = cli.seed.or(s.seed);
        if let Some(t) = cli.threads {
            s.threads = t;
        }
        let cfg = s.resolve()?;
        cfg.validate()?;
        Ok((s, cfg))
    }

    fn cooccur(&self, window: Option<usize>, weighting: Option<&String>, memory_mb: Option<usize>) -> Result<CooccurOptions> {
        let mut o: CooccurOptions = self.section(|c| &c.cooccur);
        if let Some(w) = window {
            o.window = w;
        }
        if let Some(w) = weighting {
            o.weighting = w.clone();
        }
        if let Some(mb) = memory_mb {
            o.memory_budget = mb << 20;
        }
        o.validate()?;
        Ok(o)
    }
}

fn write_lines(out: Option<&Path>, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut sink: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p).map_err(|e| Error::File {
            path: p.to_path_buf(),
            source: e,
        })?)),
        None => Box::new(std::io::stdout().lock()),
    };
    for l in lines {
        writeln!(sink, "{l}")?;
    }
    sink.flush()?;
    Ok(())
}

/// First whitespace field of each non-empty line: reads vocabulary files and
/// plain word lists alike.
fn word_list(path: &Path) -> Result<Vec<String>> {
    let f = fs::File::open(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut words = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if let Some(w) = line.split_whitespace().next() {
            words.push(w.to_string());
        }
    }
    Ok(words)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json serializes") + "\n";
    fs::write(path, text).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    let defaults = Defaults::load(cli)?;
    match &cli.command {
        Command::Vocab {
            corpus,
            from_counts,
            min_count,
            max_size,
            counts_out,
            out,
        } => {
            let section: VocabSection = defaults.section(|c| &c.vocab);
            let min_count = min_count.unwrap_or(section.min_count);
            let max_size = max_size.or(section.max_size);
            let (vocab, counts) = if from_counts.is_empty() {
                let manifest = defaults.corpus(corpus)?;
                let mut counter = TokenCounter::with_budget(section.count_budget);
                for doc in stream_tokens(&manifest) {
                    counter.add_document(&doc?)?;
                }
                let counts = counter.finish()?;
                (build_vocab(&counts, min_count, max_size)?, Some(counts))
            } else {
                let parts = from_counts.iter().map(FrequencyTable::read).collect::<Result<Vec<_>>>()?;
                (merge_vocabs(&parts, min_count, max_size)?, None)
            };
            if let (Some(path), Some(counts)) = (counts_out, &counts) {
                counts.write(path)?;
            }
            vocab.write(out)?;
            log::info!("{} words (min count {min_count}) -> {}", vocab.len(), out.display());
        }
        Command::Cooccur {
            corpus,
            vocab,
            window,
            weighting,
            memory_mb,
            out,
            print,
        } => {
            let manifest = defaults.corpus(corpus)?;
            let vocab = Vocabulary::read(vocab)?;
            let opts = defaults.cooccur(*window, weighting.as_ref(), *memory_mb)?;
            let meta = build_cooccurrence_file(stream_tokens(&manifest), &vocab, &opts, out)?;
            log::info!("{} records -> {}", meta.records, out.display());
            if *print {
                let recs = read_records(out)?;
                write_lines(None, recs.iter().map(|r| format!("{} {} {}", vocab.word(r.row as usize), vocab.word(r.col as usize), r.value)))?;
            }
        }
        Command::Merge {
            parts,
            vocab,
            memory_mb,
            out,
        } => {
            let mut shards = Vec::new();
            for p in parts {
                let (records, vocab) = p.split_once('=').ok_or_else(|| {
                    Error::validation("part", format!("expected RECORDS=VOCAB, got {p:?}"))
                })?;
                shards.push((PathBuf::from(records), Vocabulary::read(vocab)?));
            }
            let merged = Vocabulary::read(vocab)?;
            let budget = memory_mb.map_or_else(|| defaults.cooccur(None, None, None).map(|o| o.memory_budget), |mb| Ok(mb << 20))?;
            let meta = merge_cooccurrence_files(&shards, &merged, budget, out)?;
            log::info!("{} merged records -> {}", meta.records, out.display());
        }
        Command::Shuffle { input, memory_mb, out } => {
            let section: ShuffleSection = defaults.section(|c| &c.shuffle);
            let (_, train_cfg) = defaults.train(cli, &TrainArgs::default())?;
            let seed = cli.seed.or(section.seed).unwrap_or(train_cfg.seed);
            let budget = memory_mb.map_or(section.memory_budget, |mb| mb << 20);
            let s = shuffle_cooccurrences(input, out, seed, budget, None)?;
            log::info!("{} records shuffled with seed {seed} ({} buckets)", s.records, s.buckets);
        }
        Command::Train {
            cooccur,
            vocab: vocab_path,
            hyper,
            out,
            manifest,
        } => {
            let (section, cfg) = defaults.train(cli, hyper)?;
            let vocab = Vocabulary::read(vocab_path)?;
            let meta = CoocMetadata::read_for(cooccur).ok();
            if let Some(m) = &meta {
                if m.vocab_sha256 != vocab.digest() {
                    return Err(Error::validation("cooccur", "record file was built on a different vocabulary"));
                }
            }
            let records = RecordFile::open(cooccur)?;
            log::info!("training d={} for {} epochs (eta {}, seed {})", cfg.dim, cfg.epochs, cfg.eta, cfg.seed);
            let outcome = train(&records, &vocab, &cfg)?;
            outcome.params.save(out)?;
            let manifest_path = manifest.clone().unwrap_or_else(|| {
                let mut s = out.as_os_str().to_owned();
                s.push(".manifest.json");
                PathBuf::from(s)
            });
            write_json(
                &manifest_path,
                &json!({
                    "tool": "glove",
                    "version": env!("CARGO_PKG_VERSION"),
                    "command": "train",
                    "profile": section.profile,
                    "config": cfg,
                    "seeds": { "train": cfg.seed, "shuffle": meta.as_ref().and_then(|m| m.shuffle_seed) },
                    "vocab": { "path": vocab_path, "sha256": vocab.digest(), "size": vocab.len() },
                    "cooccur": { "path": cooccur, "sha256": file_sha256(cooccur)?, "metadata": meta },
                    "init": "vectors and biases uniform in [-0.5/d, 0.5/d); AdaGrad accumulators 1.0",
                    "epoch_costs": outcome.epoch_costs,
                    "skipped": outcome.skipped,
                    "processed": outcome.processed,
                    "output": { "path": out, "sha256": file_sha256(out)? },
                }),
            )?;
        }
        Command::Export {
            params,
            vocab,
            mode,
            binary,
            out,
        } => {
            let section: ExportSection = defaults.section(|c| &c.export);
            let mode = CombinerRegistry::default().get(mode.as_deref().unwrap_or(&section.mode))?;
            let vocab = Vocabulary::read(vocab)?;
            let params = ModelParams::load(params)?;
            let emb = export_embeddings(&params, &vocab, mode.as_ref())?;
            if *binary {
                emb.write_binary(out)?;
            } else {
                emb.write_text(out)?;
            }
        }
        Command::Eval {
            vectors,
            analogy,
            similarity,
            delimiter,
            skip_header,
            keep_case,
            out_dir,
        } => {
            let emb = EmbeddingSet::read_text(vectors)?;
            let format = SimilarityFormat {
                delimiter: *delimiter,
                skip_header: *skip_header,
                scale: None,
            };
            let spec = |path: &PathBuf, kind: &str| DatasetSpec {
                name: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                kind: kind.into(),
                path: path.clone(),
                lowercase: !keep_case,
                format: format.clone(),
            };
            let mut specs: Vec<DatasetSpec> = analogy.iter().map(|p| spec(p, "analogy")).collect();
            specs.extend(similarity.iter().map(|p| spec(p, "similarity")));
            if specs.is_empty() {
                specs = defaults.section(|c| &c.eval);
                for s in &mut specs {
                    if s.path.is_relative() {
                        s.path = defaults.base.join(&s.path);
                    }
                }
            }
            if specs.is_empty() {
                return Err(Error::validation("eval", "no datasets given"));
            }
            if let Some(dir) = out_dir {
                fs::create_dir_all(dir).map_err(|e| Error::File {
                    path: dir.clone(),
                    source: e,
                })?;
            }
            let tasks = TaskRegistry::default();
            let mut lines = vec!["dataset\tmetric\tvalue\tanswered\tskipped".to_string()];
            for s in &specs {
                let r = tasks.run(&emb, s)?;
                if let Some(dir) = out_dir {
                    r.write_files(dir)?;
                }
                let metric = serde_json::to_value(r.metric).expect("metric serializes");
                lines.push(format!("{}\t{}\t{:.6}\t{}\t{}", r.dataset, metric.as_str().unwrap_or(""), r.value, r.answered, r.skipped));
            }
            write_lines(None, lines)?;
        }
        Command::Diff {
            new,
            old,
            keep_numbers,
            keep_non_latin,
            out,
        } => {
            let filter = DiffFilter {
                exclude_numbers: !keep_numbers,
                exclude_non_latin: !keep_non_latin,
            };
            let (new, old) = (word_list(new)?, word_list(old)?);
            let diff = lexicon_diff(new.iter().map(String::as_str), old.iter().map(String::as_str), &filter);
            write_lines(out.as_deref(), diff)?;
        }
        Command::Wls {
            params,
            cooccur,
            vocab,
            alpha,
            xmax,
            min_support,
            max_words,
            out,
        } => {
            let params = ModelParams::load(params)?;
            let vocab = Vocabulary::read(vocab)?;
            let (_, mut cfg) = defaults.train(
                cli,
                &TrainArgs {
                    dim: Some(params.dim()),
                    alpha: *alpha,
                    xmax: *xmax,
                    ..TrainArgs::default()
                },
            )?;
            cfg.dim = params.dim();
            let mut sampling: WlsSampling = defaults.config.as_ref().and_then(|c| c.wls.clone()).unwrap_or_default();
            sampling.min_support = min_support.or(sampling.min_support);
            sampling.max_words = max_words.or(sampling.max_words);
            if let Some(s) = cli.seed {
                sampling.seed = s;
            }
            if let Ok(meta) = CoocMetadata::read_for(cooccur) {
                if !meta.aggregated {
                    return Err(Error::validation("cooccur", "WLS needs the aggregated (unshuffled) record file"));
                }
            }
            let records = read_records(cooccur)?;
            let summary = wls_summary(&params, &records, &cfg, &sampling)?;
            let mut lines = vec!["word\tsupport\tcosine\trank_deficient".to_string()];
            for r in &summary.results {
                let cos = r.cosine.map_or_else(|| "NA".into(), |c| format!("{c:.9}"));
                lines.push(format!("{}\t{}\t{}\t{}", vocab.word(r.index), r.support, cos, r.rank_deficient));
            }
            write_lines(Some(out), lines)?;
            match summary.mean_cosine {
                Some(m) => println!("mean cosine {m:.6} over {} words", summary.results.len() - summary.undefined),
                None => println!("mean cosine undefined (no word with enough support)"),
            }
        }
        Command::Mft {
            corpus,
            candidates,
            hyper,
            max_size,
            window,
            min_support,
            max_words,
            out,
        } => {
            let manifest = defaults.corpus(corpus)?;
            let (_, train_cfg) = defaults.train(cli, hyper)?;
            let section: ShuffleSection = defaults.section(|c| &c.shuffle);
            let vocab_section: VocabSection = defaults.section(|c| &c.vocab);
            let mut sampling: WlsSampling = defaults.config.as_ref().and_then(|c| c.wls.clone()).unwrap_or_default();
            sampling.min_support = min_support.or(sampling.min_support);
            sampling.max_words = max_words.or(sampling.max_words);
            let settings = MftSettings {
                cooccur: defaults.cooccur(*window, None, None)?,
                shuffle_seed: cli.seed.or(section.seed).unwrap_or(train_cfg.seed),
                train: train_cfg,
                max_vocab: max_size.or(vocab_section.max_size),
                sampling,
            };
            let sel = mft_selection(&manifest, candidates, &settings)?;
            write_score_table_file(&sel.table, out)?;
            println!("chosen minimum frequency threshold: {}", sel.chosen);
        }
        Command::Neighbors { vectors, word, k } => {
            let emb = EmbeddingSet::read_text(vectors)?;
            let nn = nearest_neighbors(&emb, word, *k)?;
            write_lines(None, nn.into_iter().map(|(w, c)| format!("{w}\t{c:.6}")))?;
        }
        Command::Synth { bytes, analogies, out } => {
            let opts = SynthOptions {
                target_bytes: *bytes,
                seed: cli.seed.unwrap_or(SynthOptions::default().seed),
            };
            fs::write(out, fixture_corpus(&opts)).map_err(|e| Error::File {
                path: out.clone(),
                source: e,
            })?;
            if let Some(path) = analogies {
                fs::write(path, analogy_file_text(&fixture_analogies())).map_err(|e| Error::File {
                    path: path.clone(),
                    source: e,
                })?;
            }
        }
        Command::Run => {
            let config = cli
                .config
                .as_ref()
                .ok_or_else(|| Error::validation("config", "`run` needs --config"))?;
            let overrides = Overrides {
                workdir: cli.workdir.clone(),
                threads: cli.threads,
                seed: cli.seed,
            };
            let m = run_pipeline(config, &overrides)?;
            for s in &m.stages {
                println!("{:<8} {}", s.name, if s.cache_hit { "cached" } else { "done" });
            }
        }
    }
    Ok(())
}

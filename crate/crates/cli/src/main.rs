//! `glove`: command-line driver for the training pipeline.
//!
//! Exit codes: 0 success, 1 invalid input or config, 2 runtime failure,
//! 3 workdir conflict (lock held, or incomplete outputs from another config).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use glove_core::Error;

#[derive(Parser, Debug)]
#[command(name = "glove", version, about = "Reproducible GloVe embedding pipeline")]
pub struct Cli {
    /// Pipeline config; its sections supply defaults for every subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Working directory for `run` (overrides the config).
    #[arg(long, global = true)]
    pub workdir: Option<PathBuf>,
    /// Training threads (more than one gives up bitwise reproducibility).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for training initialisation and shuffling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CorpusArgs {
    /// Corpus manifest (TOML) listing sources, repeat counts and cleaning rules.
    #[arg(long, conflicts_with = "corpus")]
    pub manifest: Option<PathBuf>,
    /// Plain corpus files, one document per line.
    #[arg(long, num_args = 1..)]
    pub corpus: Vec<PathBuf>,
    #[arg(long)]
    pub lowercase: bool,
    #[arg(long = "stop-token")]
    pub stop_tokens: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Count tokens and select the vocabulary.
    Vocab {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Build from saved count tables instead of a corpus (shard merge).
        #[arg(long = "from-counts", num_args = 1.., conflicts_with_all = ["manifest", "corpus"])]
        from_counts: Vec<PathBuf>,
        #[arg(long)]
        min_count: Option<u64>,
        #[arg(long)]
        max_size: Option<usize>,
        /// Also write the full count table.
        #[arg(long)]
        counts_out: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Build the aggregated cooccurrence record file.
    Cooccur {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        weighting: Option<String>,
        #[arg(long)]
        memory_mb: Option<usize>,
        #[arg(short, long)]
        out: PathBuf,
        /// Print records as `row col value` text to stdout as well.
        #[arg(long)]
        print: bool,
    },
    /// Merge shard cooccurrence files onto a merged vocabulary.
    Merge {
        /// `records.bin=vocab.txt`, repeated per shard.
        #[arg(long = "part", required = true, num_args = 1..)]
        parts: Vec<String>,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        memory_mb: Option<usize>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Seeded shuffle of a record file.
    Shuffle {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        memory_mb: Option<usize>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Train vectors with AdaGrad.
    Train {
        /// Shuffled cooccurrence records.
        #[arg(long)]
        cooccur: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[command(flatten)]
        hyper: TrainArgs,
        #[arg(short, long)]
        out: PathBuf,
        /// Run manifest; defaults to `<out>.manifest.json`.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Write word vectors from trained parameters.
    Export {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// sum, focus or concat.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        binary: bool,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Analogy and similarity benchmarks.
    Eval {
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        analogy: Vec<PathBuf>,
        #[arg(long)]
        similarity: Vec<PathBuf>,
        /// Similarity field separator (default: whitespace).
        #[arg(long)]
        delimiter: Option<char>,
        #[arg(long)]
        skip_header: bool,
        /// Exact-case lookup instead of lowercasing both sides.
        #[arg(long)]
        keep_case: bool,
        /// Directory for per-dataset `.tsv`/`.json` reports.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Words in NEW but not in OLD, filtered.
    Diff {
        #[arg(long)]
        new: PathBuf,
        #[arg(long)]
        old: PathBuf,
        #[arg(long)]
        keep_numbers: bool,
        #[arg(long)]
        keep_non_latin: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// WLS vectors and their cosine to trained vectors.
    Wls {
        #[arg(long)]
        params: PathBuf,
        /// Aggregated (unshuffled) cooccurrence records.
        #[arg(long)]
        cooccur: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        xmax: Option<f64>,
        #[arg(long)]
        min_support: Option<usize>,
        #[arg(long)]
        max_words: Option<usize>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Pick a minimum frequency threshold by mean WLS cosine.
    Mft {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        candidates: Vec<u64>,
        #[command(flatten)]
        hyper: TrainArgs,
        #[arg(long)]
        max_size: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        min_support: Option<usize>,
        #[arg(long)]
        max_words: Option<usize>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Nearest neighbours by cosine.
    Neighbors {
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        word: String,
        #[arg(short, default_value_t = 10)]
        k: usize,
    },
    /// Write the synthetic fixture corpus and its analogy questions.
    Synth {
        #[arg(long, default_value_t = 1_000_000)]
        bytes: usize,
        #[arg(long)]
        analogies: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run every stage from `--config`, skipping up-to-date ones.
    Run,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    /// standard or wiki-giga.
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub xmax: Option<f64>,
    #[arg(long)]
    pub epochs: Option<u32>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation { .. } | Error::Parse { .. } | Error::OutOfVocabulary(_) => 1,
        Error::Conflict(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.quiet { "warn" } else { "info" }))
        .format_timestamp(None)
        .init();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

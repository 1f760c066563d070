//! End-to-end orchestration from one TOML config.
//!
//! A config is resolved into a [`Plan`] (all defaults filled in, paths made
//! absolute, overrides applied) and validated before anything runs. Stages
//! come from a [`StageRegistry`] and run in order. Each stage's fingerprint
//! hashes its settings and the digests of its inputs; a stage whose
//! fingerprint and output digests match the previous manifest is skipped.
//!
//! While a stage runs, each of its outputs has a `<file>.incomplete` marker
//! next to it. Markers are removed on success and left behind on failure.

mod stages;

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use stages::{CooccurStage, EvalStage, ExportStage, ShuffleStage, TrainStage, VocabStage, WlsStage};

use crate::cooccur::{shuffle, CooccurOptions, DEFAULT_MEMORY_BUDGET};
use crate::corpus::{line_of_offset, CorpusManifest};
use crate::diagnostics::WlsSampling;
use crate::error::{Error, Result};
use crate::eval::{DatasetSpec, TaskRegistry};
use crate::trainer::{CombinerRegistry, TrainConfig};

pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const LOCK_FILE: &str = "pipeline.lock";
pub const INCOMPLETE_SUFFIX: &str = ".incomplete";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSection {
    pub min_count: u64,
    pub max_size: Option<usize>,
    /// Distinct words held in memory before the counter spills to disk.
    pub count_budget: usize,
}

impl Default for VocabSection {
    fn default() -> Self {
        VocabSection {
            min_count: 5,
            max_size: None,
            count_budget: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShuffleSection {
    /// Defaults to the training seed.
    pub seed: Option<u64>,
    pub memory_budget: usize,
}

impl Default for ShuffleSection {
    fn default() -> Self {
        ShuffleSection {
            seed: None,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

/// Training settings as written in the config. Unset fields come from the
/// profile: `standard` or `wiki-giga`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub profile: String,
    pub dim: usize,
    pub eta: Option<f64>,
    pub alpha: Option<f64>,
    pub xmax: Option<f64>,
    pub epochs: Option<u32>,
    pub seed: Option<u64>,
    pub threads: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            profile: "standard".into(),
            dim: 50,
            eta: None,
            alpha: None,
            xmax: None,
            epochs: None,
            seed: None,
            threads: 1,
        }
    }
}

impl TrainSection {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match self.profile.as_str() {
            "standard" => TrainConfig::for_dim(self.dim),
            "wiki-giga" => TrainConfig::wiki_giga(self.dim),
            other => {
                return Err(Error::validation(
                    "train.profile",
                    format!("unknown profile {other:?} (known: standard, wiki-giga)"),
                ))
            }
        };
        cfg.eta = self.eta.unwrap_or(cfg.eta);
        cfg.alpha = self.alpha.unwrap_or(cfg.alpha);
        cfg.xmax = self.xmax.unwrap_or(cfg.xmax);
        cfg.epochs = self.epochs.unwrap_or(cfg.epochs);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.threads = self.threads;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSection {
    pub mode: String,
}

impl Default for ExportSection {
    fn default() -> Self {
        ExportSection { mode: "sum".into() }
    }
}

fn default_workdir() -> PathBuf {
    PathBuf::from("work")
}

/// The pipeline config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_workdir")]
    pub workdir: PathBuf,
    pub corpus: CorpusManifest,
    #[serde(default)]
    pub vocab: VocabSection,
    #[serde(default)]
    pub cooccur: CooccurOptions,
    #[serde(default)]
    pub shuffle: ShuffleSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub export: ExportSection,
    #[serde(default)]
    pub eval: Vec<DatasetSpec>,
    /// Present to enable the WLS diagnostic stage.
    #[serde(default)]
    pub wls: Option<WlsSampling>,
}

impl PipelineConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(text, s.start)).unwrap_or(0);
            Error::parse(origin, line, e.message().to_string())
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(Error::file(path))?;
        Self::parse(&text, path)
    }

    /// Fills defaults, applies overrides and makes every path absolute
    /// (relative paths are taken from `base`, normally the config's
    /// directory).
    pub fn resolve(&self, base: &Path, overrides: &Overrides) -> Result<Plan> {
        let absolute = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let mut train_section = self.train.clone();
        if let Some(t) = overrides.threads {
            train_section.threads = t;
        }
        if let Some(s) = overrides.seed {
            train_section.seed = Some(s);
        }
        let train = train_section.resolve()?;
        let shuffle_seed = overrides.seed.or(self.shuffle.seed).unwrap_or(train.seed);

        let mut corpus = self.corpus.clone();
        for s in &mut corpus.sources {
            s.path = absolute(&s.path);
        }
        let mut eval = self.eval.clone();
        for d in &mut eval {
            d.path = absolute(&d.path);
        }
        let workdir = match &overrides.workdir {
            Some(w) => w.clone(),
            None => absolute(&self.workdir),
        };
        let plan = Plan {
            workdir,
            corpus,
            vocab: self.vocab.clone(),
            cooccur: self.cooccur.clone(),
            shuffle_seed,
            shuffle_memory_budget: self.shuffle.memory_budget,
            train_profile: self.train.profile.clone(),
            train,
            export_mode: self.export.mode.clone(),
            eval,
            wls: self.wls.clone(),
        };
        plan.validate()?;
        Ok(plan)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub workdir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

/// Fully resolved settings. Stored verbatim in the run manifest, so a run
/// can be repeated from the manifest alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plan {
    pub workdir: PathBuf,
    pub corpus: CorpusManifest,
    pub vocab: VocabSection,
    pub cooccur: CooccurOptions,
    pub shuffle_seed: u64,
    pub shuffle_memory_budget: usize,
    pub train_profile: String,
    pub train: TrainConfig,
    pub export_mode: String,
    pub eval: Vec<DatasetSpec>,
    pub wls: Option<WlsSampling>,
}

impl Plan {
    /// Everything that can be checked without running a stage.
    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        if self.corpus.sources.is_empty() {
            return Err(Error::validation("corpus.source", "at least one source is required"));
        }
        for s in &self.corpus.sources {
            if !s.path.is_file() {
                return Err(Error::validation("corpus.source", format!("{} does not exist", s.path.display())));
            }
        }
        if self.vocab.min_count == 0 {
            return Err(Error::validation("vocab.min_count", "must be >= 1"));
        }
        if self.vocab.max_size == Some(0) {
            return Err(Error::validation("vocab.max_size", "must be >= 1 when set"));
        }
        if self.vocab.count_budget == 0 {
            return Err(Error::validation("vocab.count_budget", "must be positive"));
        }
        self.cooccur.validate()?;
        if self.shuffle_memory_budget == 0 {
            return Err(Error::validation("shuffle.memory_budget", "must be positive"));
        }
        self.train.validate()?;
        CombinerRegistry::default().get(&self.export_mode)?;
        let tasks = TaskRegistry::default();
        let mut names = std::collections::HashSet::new();
        for d in &self.eval {
            tasks.get(&d.kind)?;
            if d.name.is_empty() || d.name.contains(['/', '\\']) || !names.insert(&d.name) {
                return Err(Error::validation(
                    "eval.name",
                    format!("dataset names must be unique plain file names, got {:?}", d.name),
                ));
            }
            if !d.path.is_file() {
                return Err(Error::validation("eval.path", format!("{} does not exist", d.path.display())));
            }
        }
        Ok(())
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.workdir.join(name)
    }

    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("plan serializes"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let mut f = File::open(path).map_err(Error::file(path))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(Error::file(path))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// What a stage sees while running.
pub struct StageContext<'a> {
    pub plan: &'a Plan,
    digests: Mutex<HashMap<PathBuf, String>>,
}

impl<'a> StageContext<'a> {
    pub fn new(plan: &'a Plan) -> Self {
        StageContext {
            plan,
            digests: Mutex::new(HashMap::new()),
        }
    }

    /// File digest, memoised for the lifetime of the run.
    pub fn digest(&self, path: &Path) -> Result<String> {
        if let Some(d) = self.digests.lock().expect("digest cache").get(path) {
            return Ok(d.clone());
        }
        let d = file_sha256(path)?;
        self.digests.lock().expect("digest cache").insert(path.to_path_buf(), d.clone());
        Ok(d)
    }

    fn forget(&self, path: &Path) {
        self.digests.lock().expect("digest cache").remove(path);
    }

    /// Workdir-relative label for artifacts, absolute path otherwise.
    pub fn label(&self, path: &Path) -> String {
        path.strip_prefix(&self.plan.workdir)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned()
    }

    pub fn corpus_digest(&self) -> Result<String> {
        let mut parts = Vec::new();
        for s in &self.plan.corpus.sources {
            parts.push(format!("{}x{}", self.digest(&s.path)?, s.repeat));
        }
        Ok(sha256_hex(parts.join("\n").as_bytes()))
    }
}

pub trait Stage: Send + Sync {
    fn name(&self) -> &'static str;

    fn enabled(&self, _plan: &Plan) -> bool {
        true
    }

    /// Settings that influence the outputs; hashed into the fingerprint.
    fn settings(&self, plan: &Plan) -> serde_json::Value;

    fn inputs(&self, plan: &Plan) -> Vec<PathBuf>;

    fn outputs(&self, plan: &Plan) -> Vec<PathBuf>;

    /// Produces the outputs. The returned value is stored in the manifest.
    fn run(&self, ctx: &StageContext) -> Result<serde_json::Value>;
}

/// Stages in execution order.
pub struct StageRegistry {
    stages: Vec<Box<dyn Stage>>,
}

impl Default for StageRegistry {
    fn default() -> Self {
        let mut r = StageRegistry { stages: Vec::new() };
        r.register(Box::new(VocabStage));
        r.register(Box::new(CooccurStage));
        r.register(Box::new(ShuffleStage));
        r.register(Box::new(TrainStage));
        r.register(Box::new(ExportStage));
        r.register(Box::new(EvalStage));
        r.register(Box::new(WlsStage));
        r
    }
}

impl StageRegistry {
    pub fn empty() -> Self {
        StageRegistry { stages: Vec::new() }
    }

    /// Appends a stage; a stage with the same name is replaced in place.
    pub fn register(&mut self, stage: Box<dyn Stage>) {
        match self.stages.iter().position(|s| s.name() == stage.name()) {
            Some(i) => self.stages[i] = stage,
            None => self.stages.push(stage),
        }
    }

    pub fn get(&self, name: &str) -> Option<&dyn Stage> {
        self.stages.iter().find(|s| s.name() == name).map(|s| s.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.stages.iter().map(|s| s.name()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub fingerprint: String,
    pub status: Status,
    pub cache_hit: bool,
    pub seconds: f64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub notes: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub train: u64,
    pub shuffle: u64,
    pub wls_sample: Option<u64>,
    pub shuffle_generator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_path: Option<PathBuf>,
    pub config_sha256: String,
    pub config: Plan,
    pub seeds: Seeds,
    /// Digests of files read from outside the workdir.
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub status: Status,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
}

impl RunManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(Error::file(path))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }

    /// Writes through a temporary file and a rename.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        let mut f = File::create(&tmp).map_err(Error::file(&tmp))?;
        f.write_all(text.as_bytes()).map_err(Error::file(&tmp))?;
        f.sync_all().map_err(Error::file(&tmp))?;
        fs::rename(&tmp, path).map_err(Error::file(path))?;
        Ok(())
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

struct WorkdirLock(PathBuf);

impl WorkdirLock {
    fn acquire(workdir: &Path) -> Result<Self> {
        let path = workdir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(WorkdirLock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Conflict(format!(
                "{} exists: another pipeline is using this workdir (remove the file if that run is dead)",
                path.display()
            ))),
            Err(e) => Err(Error::file(&path)(e)),
        }
    }
}

impl Drop for WorkdirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn marker(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(INCOMPLETE_SUFFIX);
    PathBuf::from(s)
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn fingerprint(stage: &dyn Stage, plan: &Plan, inputs: &BTreeMap<String, String>) -> String {
    let doc = serde_json::json!({
        "stage": stage.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "settings": stage.settings(plan),
        "inputs": inputs,
    });
    sha256_hex(doc.to_string().as_bytes())
}

fn outputs_match(ctx: &StageContext, outputs: &[PathBuf], recorded: &BTreeMap<String, String>) -> bool {
    outputs.len() == recorded.len()
        && outputs.iter().all(|p| {
            !marker(p).exists()
                && recorded
                    .get(&ctx.label(p))
                    .is_some_and(|d| ctx.digest(p).is_ok_and(|now| &now == d))
        })
}

/// Loads, resolves and runs a config file.
pub fn run_pipeline(config_path: impl AsRef<Path>, overrides: &Overrides) -> Result<RunManifest> {
    let config_path = config_path.as_ref();
    let config = PipelineConfig::load(config_path)?;
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    let plan = config.resolve(base, overrides)?;
    run_plan(&plan, Some(config_path), &StageRegistry::default())
}

/// Runs every enabled stage of `registry`, skipping those that are up to date.
pub fn run_plan(plan: &Plan, config_path: Option<&Path>, registry: &StageRegistry) -> Result<RunManifest> {
    plan.validate()?;
    fs::create_dir_all(&plan.workdir).map_err(Error::file(&plan.workdir))?;
    let _lock = WorkdirLock::acquire(&plan.workdir)?;
    let manifest_path = plan.artifact(MANIFEST_FILE);
    let previous = if manifest_path.exists() {
        match RunManifest::read(&manifest_path) {
            Ok(m) => Some(m),
            Err(e) => {
                log::warn!("ignoring unreadable previous manifest: {e}");
                None
            }
        }
    } else {
        None
    };

    let config_sha256 = plan.digest();
    let enabled: Vec<&dyn Stage> = registry.stages.iter().map(|s| s.as_ref()).filter(|s| s.enabled(plan)).collect();
    let stranded: Vec<PathBuf> = enabled
        .iter()
        .flat_map(|s| s.outputs(plan))
        .map(|p| marker(&p))
        .filter(|m| m.exists())
        .collect();
    if !stranded.is_empty() && previous.as_ref().map(|m| &m.config_sha256) != Some(&config_sha256) {
        return Err(Error::Conflict(format!(
            "{} holds incomplete outputs from a run with a different config (first: {}); \
             rerun with the original config or clear the workdir",
            plan.workdir.display(),
            stranded[0].display()
        )));
    }

    let ctx = StageContext::new(plan);
    let mut inputs = BTreeMap::new();
    for s in &plan.corpus.sources {
        inputs.insert(s.path.to_string_lossy().into_owned(), ctx.digest(&s.path)?);
    }
    for d in &plan.eval {
        inputs.insert(d.path.to_string_lossy().into_owned(), ctx.digest(&d.path)?);
    }
    let mut manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_path: config_path.map(Path::to_path_buf),
        config_sha256,
        config: plan.clone(),
        seeds: Seeds {
            train: plan.train.seed,
            shuffle: plan.shuffle_seed,
            wls_sample: plan.wls.as_ref().map(|w| w.seed),
            shuffle_generator: shuffle::GENERATOR.into(),
        },
        inputs,
        stages: Vec::new(),
        status: Status::Running,
        started_unix: now_unix(),
        finished_unix: None,
        failed_stage: None,
    };
    manifest.write_atomic(&manifest_path)?;

    for stage in enabled {
        let started = Instant::now();
        let mut stage_inputs = BTreeMap::new();
        for p in stage.inputs(plan) {
            let d = ctx.digest(&p).map_err(|e| Error::Stage {
                stage: stage.name().into(),
                source: Box::new(e),
            })?;
            stage_inputs.insert(ctx.label(&p), d);
        }
        let fp = fingerprint(stage, plan, &stage_inputs);
        let outputs = stage.outputs(plan);

        let cached = previous
            .as_ref()
            .and_then(|m| m.stage(stage.name()))
            .filter(|r| r.status == Status::Complete && r.fingerprint == fp)
            .filter(|r| outputs_match(&ctx, &outputs, &r.outputs));
        if let Some(prev) = cached {
            log::info!("stage {}: up to date", stage.name());
            manifest.stages.push(StageRecord {
                cache_hit: true,
                seconds: started.elapsed().as_secs_f64(),
                inputs: stage_inputs,
                ..prev.clone()
            });
            manifest.write_atomic(&manifest_path)?;
            continue;
        }

        log::info!("stage {}: running", stage.name());
        for p in &outputs {
            if let Some(dir) = p.parent() {
                fs::create_dir_all(dir).map_err(Error::file(dir))?;
            }
            let m = marker(p);
            fs::write(&m, format!("{fp}\n")).map_err(Error::file(&m))?;
            ctx.forget(p);
        }
        let result = stage.run(&ctx).and_then(|notes| {
            let mut digests = BTreeMap::new();
            for p in &outputs {
                digests.insert(ctx.label(p), ctx.digest(p)?);
            }
            Ok((notes, digests))
        });
        match result {
            Ok((notes, digests)) => {
                for p in &outputs {
                    let m = marker(p);
                    fs::remove_file(&m).map_err(Error::file(&m))?;
                }
                manifest.stages.push(StageRecord {
                    name: stage.name().into(),
                    fingerprint: fp,
                    status: Status::Complete,
                    cache_hit: false,
                    seconds: started.elapsed().as_secs_f64(),
                    inputs: stage_inputs,
                    outputs: digests,
                    notes,
                    error: None,
                });
                manifest.write_atomic(&manifest_path)?;
            }
            Err(e) => {
                log::error!("stage {} failed: {e}", stage.name());
                manifest.stages.push(StageRecord {
                    name: stage.name().into(),
                    fingerprint: fp,
                    status: Status::Failed,
                    cache_hit: false,
                    seconds: started.elapsed().as_secs_f64(),
                    inputs: stage_inputs,
                    outputs: BTreeMap::new(),
                    notes: serde_json::Value::Null,
                    error: Some(e.to_string()),
                });
                manifest.status = Status::Failed;
                manifest.failed_stage = Some(stage.name().into());
                manifest.finished_unix = Some(now_unix());
                manifest.write_atomic(&manifest_path)?;
                return Err(Error::Stage {
                    stage: stage.name().into(),
                    source: Box::new(e),
                });
            }
        }
    }
    manifest.status = Status::Complete;
    manifest.finished_unix = Some(now_unix());
    manifest.write_atomic(&manifest_path)?;
    Ok(manifest)
}

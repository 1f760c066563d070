use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::datasets::{load_analogy_questions, load_similarity_pairs, SimilarityFormat};
use super::{analogy_eval, similarity_eval, EvalReport};
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};

/// One benchmark file and how to read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    /// Registered task name, e.g. `analogy` or `similarity`.
    pub kind: String,
    pub path: PathBuf,
    #[serde(default = "yes")]
    pub lowercase: bool,
    #[serde(default)]
    pub format: SimilarityFormat,
}

fn yes() -> bool {
    true
}

pub trait EvalTask: Send + Sync {
    fn kind(&self) -> &'static str;
    fn evaluate(&self, emb: &EmbeddingSet, spec: &DatasetSpec) -> Result<EvalReport>;
}

fn prepared(emb: &EmbeddingSet, spec: &DatasetSpec) -> Option<EmbeddingSet> {
    spec.lowercase.then(|| emb.lowercased())
}

fn note_case(mut report: EvalReport, spec: &DatasetSpec) -> EvalReport {
    if spec.lowercase {
        report.policy.push_str("; dataset and vocabulary lowercased");
    }
    report
}

pub struct AnalogyTask;

impl EvalTask for AnalogyTask {
    fn kind(&self) -> &'static str {
        "analogy"
    }

    fn evaluate(&self, emb: &EmbeddingSet, spec: &DatasetSpec) -> Result<EvalReport> {
        let questions = load_analogy_questions(&spec.path, spec.lowercase)?;
        let lowered = prepared(emb, spec);
        let report = analogy_eval(lowered.as_ref().unwrap_or(emb), &questions, &spec.name)?;
        Ok(note_case(report, spec))
    }
}

pub struct SimilarityTask;

impl EvalTask for SimilarityTask {
    fn kind(&self) -> &'static str {
        "similarity"
    }

    fn evaluate(&self, emb: &EmbeddingSet, spec: &DatasetSpec) -> Result<EvalReport> {
        let pairs = load_similarity_pairs(&spec.path, &spec.format, spec.lowercase)?;
        let lowered = prepared(emb, spec);
        let mut report = similarity_eval(lowered.as_ref().unwrap_or(emb), &pairs, &spec.name)?;
        if let Some((lo, hi)) = spec.format.scale {
            report.policy.push_str(&format!("; human scale [{lo}, {hi}]"));
        }
        Ok(note_case(report, spec))
    }
}

pub struct TaskRegistry {
    tasks: BTreeMap<&'static str, Arc<dyn EvalTask>>,
}

impl Default for TaskRegistry {
    fn default() -> Self {
        let mut r = TaskRegistry { tasks: BTreeMap::new() };
        r.register(Arc::new(AnalogyTask));
        r.register(Arc::new(SimilarityTask));
        r
    }
}

impl TaskRegistry {
    pub fn register(&mut self, task: Arc<dyn EvalTask>) {
        self.tasks.insert(task.kind(), task);
    }

    pub fn get(&self, kind: &str) -> Result<Arc<dyn EvalTask>> {
        self.tasks.get(kind).cloned().ok_or_else(|| {
            let known: Vec<_> = self.tasks.keys().copied().collect();
            Error::validation("kind", format!("unknown evaluation task {kind:?} (known: {})", known.join(", ")))
        })
    }

    pub fn run(&self, emb: &EmbeddingSet, spec: &DatasetSpec) -> Result<EvalReport> {
        self.get(&spec.kind)?.evaluate(emb, spec)
    }
}

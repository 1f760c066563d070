use std::collections::BTreeMap;
use std::sync::Arc;

use super::ModelParams;
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

/// How a word's exported vector is formed from its word and context rows.
pub trait VectorCombiner: Send + Sync {
    fn name(&self) -> &'static str;
    fn output_dim(&self, dim: usize) -> usize;
    fn combine(&self, word: &[f64], context: &[f64], out: &mut Vec<f64>);
}

/// `w_i + w~_i`, the usual GloVe output.
pub struct Sum;

impl VectorCombiner for Sum {
    fn name(&self) -> &'static str {
        "sum"
    }
    fn output_dim(&self, dim: usize) -> usize {
        dim
    }
    fn combine(&self, word: &[f64], context: &[f64], out: &mut Vec<f64>) {
        out.extend(word.iter().zip(context).map(|(a, b)| a + b));
    }
}

pub struct FocusOnly;

impl VectorCombiner for FocusOnly {
    fn name(&self) -> &'static str {
        "focus"
    }
    fn output_dim(&self, dim: usize) -> usize {
        dim
    }
    fn combine(&self, word: &[f64], _context: &[f64], out: &mut Vec<f64>) {
        out.extend_from_slice(word);
    }
}

/// `[w_i ; w~_i]`.
pub struct Concat;

impl VectorCombiner for Concat {
    fn name(&self) -> &'static str {
        "concat"
    }
    fn output_dim(&self, dim: usize) -> usize {
        2 * dim
    }
    fn combine(&self, word: &[f64], context: &[f64], out: &mut Vec<f64>) {
        out.extend_from_slice(word);
        out.extend_from_slice(context);
    }
}

pub struct CombinerRegistry {
    modes: BTreeMap<&'static str, Arc<dyn VectorCombiner>>,
}

impl Default for CombinerRegistry {
    fn default() -> Self {
        let mut r = CombinerRegistry { modes: BTreeMap::new() };
        r.register(Arc::new(Sum));
        r.register(Arc::new(FocusOnly));
        r.register(Arc::new(Concat));
        r
    }
}

impl CombinerRegistry {
    pub fn register(&mut self, mode: Arc<dyn VectorCombiner>) {
        self.modes.insert(mode.name(), mode);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn VectorCombiner>> {
        self.modes.get(name).cloned().ok_or_else(|| {
            let known: Vec<_> = self.modes.keys().copied().collect();
            Error::validation("export mode", format!("unknown mode {name:?} (known: {})", known.join(", ")))
        })
    }
}

pub fn export_embeddings(params: &ModelParams, vocab: &Vocabulary, mode: &dyn VectorCombiner) -> Result<EmbeddingSet> {
    if params.vocab_size() != vocab.len() {
        return Err(Error::validation(
            "vocabulary",
            format!("parameters cover {} words, vocabulary has {}", params.vocab_size(), vocab.len()),
        ));
    }
    let mut out = EmbeddingSet::new(mode.output_dim(params.dim()));
    let mut row = Vec::with_capacity(out.dim());
    for i in 0..vocab.len() {
        row.clear();
        mode.combine(params.word(i), params.context(i), &mut row);
        out.push(vocab.word(i).to_string(), &row)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(dim: usize) -> (ModelParams, Vocabulary) {
        let v = Vocabulary::from_entries(vec![("a".into(), 2), ("b".into(), 1)]).unwrap();
        (ModelParams::init(2, dim, 3), v)
    }

    #[test]
    fn sum_of_equal_rows_doubles() {
        let (mut p, v) = setup(3);
        p.word_mut(0).copy_from_slice(&[1.0, 2.0, 3.0]);
        p.context_mut(0).copy_from_slice(&[1.0, 2.0, 3.0]);
        let e = export_embeddings(&p, &v, &Sum).unwrap();
        assert_eq!(e.get("a").unwrap(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn focus_and_concat() {
        let (p, v) = setup(50);
        let f = export_embeddings(&p, &v, &FocusOnly).unwrap();
        assert_eq!(f.vector(1), p.word(1));
        let c = export_embeddings(&p, &v, CombinerRegistry::default().get("concat").unwrap().as_ref()).unwrap();
        assert_eq!(c.dim(), 100);
        assert_eq!(&c.vector(1)[50..], p.context(1));
        assert!(CombinerRegistry::default().get("mean").is_err());
    }
}

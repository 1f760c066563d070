//! Token counting and vocabulary selection.
//!
//! Vocabulary order is count descending, ties broken by ascending byte order
//! of the word. The on-disk format is one `word count` pair per line in that
//! order, the same layout the reference GloVe tooling writes.

use std::cmp::{Ordering, Reverse};
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::corpus::Document;
use crate::error::{Error, Result};

/// Raw word → count table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, word: &str, n: u64) {
        match self.counts.get_mut(word) {
            Some(c) => *c += n,
            None => {
                self.counts.insert(word.to_string(), n);
            }
        }
    }

    pub fn absorb(&mut self, other: &FrequencyTable) {
        for (w, &c) in &other.counts {
            self.add(w, c);
        }
    }

    pub fn get(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, &c)| (w.as_str(), c))
    }

    /// Entries in vocabulary order.
    pub fn sorted(&self) -> Vec<(String, u64)> {
        let mut entries: Vec<(String, u64)> =
            self.counts.iter().map(|(w, &c)| (w.clone(), c)).collect();
        entries.sort_by(vocab_order);
        entries
    }

    /// Writes the table in vocabulary-file format (vocabulary order).
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_entries(path.as_ref(), &self.sorted())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let mut table = FrequencyTable::new();
        for (word, count) in read_entries(path.as_ref())? {
            table.add(&word, count);
        }
        Ok(table)
    }
}

impl FromIterator<(String, u64)> for FrequencyTable {
    fn from_iter<I: IntoIterator<Item = (String, u64)>>(iter: I) -> Self {
        let mut table = FrequencyTable::new();
        for (w, c) in iter {
            table.add(&w, c);
        }
        table
    }
}

fn vocab_order(a: &(String, u64), b: &(String, u64)) -> Ordering {
    b.1.cmp(&a.1).then_with(|| a.0.as_bytes().cmp(b.0.as_bytes()))
}

/// Streaming counter that spills sorted partial tables to disk once it holds
/// more than `max_entries` distinct words, then merges them by summation.
pub struct TokenCounter {
    table: HashMap<String, u64>,
    max_entries: usize,
    runs: Vec<tempfile::NamedTempFile>,
}

impl Default for TokenCounter {
    fn default() -> Self {
        Self::with_budget(usize::MAX)
    }
}

impl TokenCounter {
    pub fn with_budget(max_entries: usize) -> Self {
        TokenCounter {
            table: HashMap::new(),
            max_entries: max_entries.max(1),
            runs: Vec::new(),
        }
    }

    pub fn add_document(&mut self, doc: &[String]) -> Result<()> {
        for token in doc {
            match self.table.entry(token.clone()) {
                Entry::Occupied(mut e) => *e.get_mut() += 1,
                Entry::Vacant(e) => {
                    e.insert(1);
                }
            }
        }
        if self.table.len() > self.max_entries {
            self.spill()?;
        }
        Ok(())
    }

    pub fn spilled_runs(&self) -> usize {
        self.runs.len()
    }

    fn spill(&mut self) -> Result<()> {
        let mut entries: Vec<(String, u64)> = self.table.drain().collect();
        entries.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let mut file = tempfile::NamedTempFile::new()?;
        {
            let mut w = BufWriter::new(file.as_file_mut());
            for (word, count) in &entries {
                writeln!(w, "{word} {count}")?;
            }
            w.flush()?;
        }
        log::debug!("spilled {} word counts to {}", entries.len(), file.path().display());
        self.runs.push(file);
        Ok(())
    }

    pub fn finish(self) -> Result<FrequencyTable> {
        self.finish_with_min_count(0)
    }

    /// Merges all partial tables, keeping only words whose total count reaches
    /// `min_count`. Only the kept words are ever held in memory at once
    /// beyond the in-memory partial table.
    pub fn finish_with_min_count(mut self, min_count: u64) -> Result<FrequencyTable> {
        if self.runs.is_empty() {
            let counts = self.table.into_iter().filter(|(_, c)| *c >= min_count).collect();
            return Ok(FrequencyTable { counts });
        }
        if !self.table.is_empty() {
            self.spill()?;
        }
        let mut readers = Vec::with_capacity(self.runs.len());
        for run in &self.runs {
            let f = File::open(run.path())?;
            readers.push(BufReader::new(f).lines());
        }
        let mut heap = BinaryHeap::new();
        for (i, r) in readers.iter_mut().enumerate() {
            if let Some(entry) = next_run_entry(r)? {
                heap.push(Reverse((entry, i)));
            }
        }
        let mut out = FrequencyTable::new();
        let mut current: Option<(String, u64)> = None;
        while let Some(Reverse(((word, count), i))) = heap.pop() {
            if let Some(entry) = next_run_entry(&mut readers[i])? {
                heap.push(Reverse((entry, i)));
            }
            match &mut current {
                Some((w, c)) if *w == word => *c += count,
                _ => {
                    if let Some((w, c)) = current.take() {
                        if c >= min_count {
                            out.counts.insert(w, c);
                        }
                    }
                    current = Some((word, count));
                }
            }
        }
        if let Some((w, c)) = current {
            if c >= min_count {
                out.counts.insert(w, c);
            }
        }
        Ok(out)
    }
}

fn next_run_entry(lines: &mut std::io::Lines<BufReader<File>>) -> Result<Option<(String, u64)>> {
    match lines.next() {
        None => Ok(None),
        Some(line) => {
            let line = line?;
            let (w, c) = line
                .rsplit_once(' ')
                .ok_or_else(|| Error::Undefined(format!("corrupt spill run line {line:?}")))?;
            let c = c
                .parse()
                .map_err(|_| Error::Undefined(format!("corrupt spill run line {line:?}")))?;
            Ok(Some((w.to_string(), c)))
        }
    }
}

/// Exact per-word occurrence counts of a document stream.
pub fn count_tokens<I>(stream: I) -> Result<FrequencyTable>
where
    I: IntoIterator<Item = Result<Document>>,
{
    let mut counter = TokenCounter::default();
    for doc in stream {
        counter.add_document(&doc?)?;
    }
    counter.finish()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<(String, u64)>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from entries that are already in the desired order.
    pub fn from_entries(entries: Vec<(String, u64)>) -> Result<Self> {
        if entries.len() > u32::MAX as usize {
            return Err(Error::validation("vocabulary", "more than 2^32 words"));
        }
        let mut index = HashMap::with_capacity(entries.len());
        for (i, (w, _)) in entries.iter().enumerate() {
            if w.is_empty() || w.contains(char::is_whitespace) {
                return Err(Error::validation("vocabulary", format!("bad word {w:?}")));
            }
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(Error::validation("vocabulary", format!("duplicate word {w:?}")));
            }
        }
        Ok(Vocabulary { entries, index })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, index: usize) -> &str {
        &self.entries[index].0
    }

    pub fn count(&self, index: usize) -> u64 {
        self.entries[index].1
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn entries(&self) -> &[(String, u64)] {
        &self.entries
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(w, _)| w.as_str())
    }

    pub fn total_count(&self) -> u64 {
        self.entries.iter().map(|(_, c)| c).sum()
    }

    /// Maps document tokens to indices, `None` for out-of-vocabulary tokens.
    pub fn encode(&self, doc: &[String]) -> Vec<Option<u32>> {
        doc.iter().map(|t| self.index_of(t)).collect()
    }

    /// For every word of `self`, its index in `target` (or `None` if absent).
    pub fn remap_to(&self, target: &Vocabulary) -> Vec<Option<u32>> {
        self.words().map(|w| target.index_of(w)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (w, c) in &self.entries {
            s.push_str(w);
            s.push(' ');
            s.push_str(&c.to_string());
            s.push('\n');
        }
        s
    }

    /// SHA-256 of the vocabulary-file serialization.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_entries(path.as_ref(), &self.entries)
    }

    /// Reads a vocabulary file, preserving line order.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let entries = read_entries(path)?;
        Vocabulary::from_entries(entries).map_err(|e| match e {
            Error::Validation { message, .. } => Error::parse(path, 0, message),
            other => other,
        })
    }
}

fn write_entries(path: &Path, entries: &[(String, u64)]) -> Result<()> {
    let file = File::create(path).map_err(Error::file(path))?;
    let mut w = BufWriter::new(file);
    for (word, count) in entries {
        writeln!(w, "{word} {count}")?;
    }
    w.flush()?;
    Ok(())
}

fn read_entries(path: &Path) -> Result<Vec<(String, u64)>> {
    let file = File::open(path).map_err(Error::file(path))?;
    let mut entries = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(Error::file(path))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let (word, count) = line
            .rsplit_once(' ')
            .ok_or_else(|| Error::parse(path, n + 1, "expected `word count`"))?;
        let count: u64 = count
            .parse()
            .map_err(|_| Error::parse(path, n + 1, format!("bad count {count:?}")))?;
        entries.push((word.to_string(), count));
    }
    Ok(entries)
}

/// Words with `count >= min_count`, in vocabulary order, truncated to
/// `max_size` entries when given.
pub fn build_vocab(counts: &FrequencyTable, min_count: u64, max_size: Option<usize>) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::validation("min_count", "must be >= 1"));
    }
    if max_size == Some(0) {
        return Err(Error::validation("max_size", "must be >= 1 when given"));
    }
    let mut entries: Vec<(String, u64)> = counts
        .iter()
        .filter(|&(_, c)| c >= min_count)
        .map(|(w, c)| (w.to_string(), c))
        .collect();
    entries.sort_by(vocab_order);
    if let Some(cap) = max_size {
        entries.truncate(cap);
    }
    Vocabulary::from_entries(entries)
}

/// Sums shard frequency tables, then thresholds and truncates as
/// [`build_vocab`] does.
pub fn merge_vocabs(parts: &[FrequencyTable], min_count: u64, max_size: Option<usize>) -> Result<Vocabulary> {
    if parts.is_empty() {
        return Err(Error::validation("parts", "at least one frequency table is required"));
    }
    let mut total = FrequencyTable::new();
    for part in parts {
        total.absorb(part);
    }
    build_vocab(&total, min_count, max_size)
}

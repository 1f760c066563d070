//! Sparse matrix accumulator with a bounded memory footprint.
//!
//! Entries are integer weight units. Pairs where both indices fall in the
//! top-`f` most frequent words go to a dense `f × f` block; everything else
//! lands in a hash map that is sorted and spilled to a temporary run file
//! whenever it grows past its budget. [`Accumulator::finish`] k-way merges
//! the dense block, the live map and all runs into one sorted, duplicate-free
//! stream.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::PathBuf;

use crate::error::{Error, Result};

const RUN_RECORD_BYTES: usize = 16;
/// Rough cost of one hash map entry, key plus value plus table overhead.
const TAIL_ENTRY_BYTES: usize = 48;

type Entry = (u32, u32, u64);
type Source<'a> = Box<dyn Iterator<Item = Result<Entry>> + 'a>;

pub struct Accumulator {
    dense_side: usize,
    dense: Vec<u64>,
    tail: HashMap<(u32, u32), u64>,
    tail_limit: usize,
    runs: Vec<tempfile::NamedTempFile>,
    temp_dir: Option<PathBuf>,
    overflow: bool,
}

impl Accumulator {
    /// `vocab_size` bounds the indices; `memory_budget` is in bytes and is
    /// split evenly between the dense block and the tail map.
    pub fn new(vocab_size: usize, memory_budget: usize, temp_dir: Option<PathBuf>) -> Self {
        let half = memory_budget / 2;
        let side = ((half / 8) as f64).sqrt() as usize;
        let dense_side = side.min(vocab_size);
        Accumulator {
            dense_side,
            dense: vec![0; dense_side * dense_side],
            tail: HashMap::new(),
            tail_limit: (half / TAIL_ENTRY_BYTES).max(1),
            runs: Vec::new(),
            temp_dir,
            overflow: false,
        }
    }

    pub fn dense_side(&self) -> usize {
        self.dense_side
    }

    pub fn spilled_runs(&self) -> usize {
        self.runs.len()
    }

    #[inline]
    pub fn add(&mut self, row: u32, col: u32, units: u64) -> Result<()> {
        let (r, c) = (row as usize, col as usize);
        if r < self.dense_side && c < self.dense_side {
            let slot = &mut self.dense[r * self.dense_side + c];
            match slot.checked_add(units) {
                Some(v) => *slot = v,
                None => self.overflow = true,
            }
            return Ok(());
        }
        let slot = self.tail.entry((row, col)).or_insert(0);
        match slot.checked_add(units) {
            Some(v) => *slot = v,
            None => self.overflow = true,
        }
        if self.tail.len() > self.tail_limit {
            self.spill()?;
        }
        Ok(())
    }

    fn spill(&mut self) -> Result<()> {
        let mut entries: Vec<Entry> = self.tail.drain().map(|((r, c), u)| (r, c, u)).collect();
        entries.sort_unstable();
        let mut file = match &self.temp_dir {
            Some(dir) => tempfile::NamedTempFile::new_in(dir)?,
            None => tempfile::NamedTempFile::new()?,
        };
        {
            let mut w = BufWriter::with_capacity(1 << 20, file.as_file_mut());
            for (r, c, u) in &entries {
                w.write_all(&r.to_le_bytes())?;
                w.write_all(&c.to_le_bytes())?;
                w.write_all(&u.to_le_bytes())?;
            }
            w.flush()?;
        }
        log::debug!("spilled run of {} entries", entries.len());
        self.runs.push(file);
        Ok(())
    }

    /// Emits every nonzero entry once, sorted by `(row, col)`.
    pub fn finish(mut self, mut emit: impl FnMut(u32, u32, u64) -> Result<()>) -> Result<()> {
        if self.overflow {
            return Err(Error::Undefined(
                "cooccurrence accumulator overflowed 64-bit weight units".into(),
            ));
        }
        let mut tail: Vec<Entry> = self.tail.drain().map(|((r, c), u)| (r, c, u)).collect();
        tail.sort_unstable();

        let side = self.dense_side;
        let dense = &self.dense;
        let mut sources: Vec<Source<'_>> = Vec::with_capacity(self.runs.len() + 2);
        sources.push(Box::new(dense.iter().enumerate().filter(|(_, &u)| u > 0).map(
            move |(k, &u)| Ok(((k / side) as u32, (k % side) as u32, u)),
        )));
        sources.push(Box::new(tail.into_iter().map(Ok)));
        for run in &self.runs {
            let f = File::open(run.path())?;
            sources.push(Box::new(RunReader(BufReader::with_capacity(1 << 16, f))));
        }

        let mut heap = BinaryHeap::with_capacity(sources.len());
        for (i, s) in sources.iter_mut().enumerate() {
            if let Some(e) = s.next() {
                let (r, c, u) = e?;
                heap.push(Reverse((r, c, i, u)));
            }
        }
        let mut current: Option<Entry> = None;
        while let Some(Reverse((r, c, i, u))) = heap.pop() {
            if let Some(e) = sources[i].next() {
                let (nr, nc, nu) = e?;
                heap.push(Reverse((nr, nc, i, nu)));
            }
            match &mut current {
                Some((cr, cc, cu)) if *cr == r && *cc == c => {
                    *cu = cu.checked_add(u).ok_or_else(|| {
                        Error::Undefined("cooccurrence weight units overflowed".into())
                    })?;
                }
                _ => {
                    if let Some((pr, pc, pu)) = current.take() {
                        emit(pr, pc, pu)?;
                    }
                    current = Some((r, c, u));
                }
            }
        }
        if let Some((pr, pc, pu)) = current {
            emit(pr, pc, pu)?;
        }
        Ok(())
    }
}

struct RunReader(BufReader<File>);

impl Iterator for RunReader {
    type Item = Result<Entry>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut b = [0u8; RUN_RECORD_BYTES];
        match self.0.read_exact(&mut b) {
            Ok(()) => Some(Ok((
                u32::from_le_bytes(b[0..4].try_into().unwrap()),
                u32::from_le_bytes(b[4..8].try_into().unwrap()),
                u64::from_le_bytes(b[8..16].try_into().unwrap()),
            ))),
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => None,
            Err(e) => Some(Err(e.into())),
        }
    }
}

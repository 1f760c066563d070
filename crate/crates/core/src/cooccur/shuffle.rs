//! Seeded external shuffle of record files.
//!
//! Generator: ChaCha20 (`rand_chacha::ChaCha20Rng::seed_from_u64(seed)`),
//! permutations by `rand::seq::SliceRandom::shuffle` (Fisher-Yates). Stream 0
//! drives the in-memory path and the chunk stage; bucket `b` of the second
//! stage uses stream `b + 1`.
//!
//! Inputs larger than the memory budget take two passes: memory-sized chunks
//! are shuffled and dealt round-robin into temporary buckets, then each bucket
//! is shuffled on its own and appended to the output. The result depends only
//! on `(seed, budget, input)`.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::format::{self, CoocMetadata, RecordReader, RecordWriter, RECORD_BYTES};
use super::CoocRecord;
use crate::error::{Error, Result};

pub const GENERATOR: &str = "chacha20/seed_from_u64+fisher-yates (rand 0.9); stream 0 chunks, stream b+1 bucket b";

fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Shuffles a slice in place with stream 0 of `seed`.
pub fn shuffle_in_memory<T>(items: &mut [T], seed: u64) {
    items.shuffle(&mut stream_rng(seed, 0));
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShuffleSummary {
    pub records: u64,
    pub buckets: usize,
}

/// Shuffles the records of `input` into `output`. On failure the partial
/// output and all temporary buckets are removed.
pub fn shuffle_cooccurrences(
    input: &Path,
    output: &Path,
    seed: u64,
    memory_budget: usize,
    temp_dir: Option<&Path>,
) -> Result<ShuffleSummary> {
    let result = shuffle_inner(input, output, seed, memory_budget, temp_dir);
    match result {
        Ok(summary) => {
            if let Ok(mut meta) = CoocMetadata::read_for(input) {
                meta.aggregated = false;
                meta.records = summary.records;
                meta.shuffle_seed = Some(seed);
                meta.shuffle_budget_bytes = Some(memory_budget);
                meta.generator = Some(GENERATOR.into());
                meta.write_for(output)?;
            }
            Ok(summary)
        }
        Err(e) => {
            let _ = std::fs::remove_file(output);
            Err(e)
        }
    }
}

fn shuffle_inner(
    input: &Path,
    output: &Path,
    seed: u64,
    memory_budget: usize,
    temp_dir: Option<&Path>,
) -> Result<ShuffleSummary> {
    let total = format::record_count(input)?;
    let chunk = (memory_budget / RECORD_BYTES).max(1) as u64;
    let mut writer = RecordWriter::create(output)?;

    if total <= chunk {
        let mut records = format::read_records(input)?;
        shuffle_in_memory(&mut records, seed);
        for r in &records {
            writer.write(r)?;
        }
        writer.finish()?;
        return Ok(ShuffleSummary {
            records: total,
            buckets: 0,
        });
    }

    let n_buckets = total.div_ceil(chunk) as usize;
    let mut buckets = Vec::with_capacity(n_buckets);
    for _ in 0..n_buckets {
        let file = match temp_dir {
            Some(dir) => tempfile::NamedTempFile::new_in(dir)?,
            None => tempfile::NamedTempFile::new()?,
        };
        buckets.push(file);
    }
    {
        let mut sinks: Vec<RecordWriter<std::io::BufWriter<&std::fs::File>>> = buckets
            .iter()
            .map(|b| RecordWriter::new(std::io::BufWriter::with_capacity(1 << 16, b.as_file())))
            .collect();
        let mut rng = stream_rng(seed, 0);
        let mut reader = RecordReader::open(input)?;
        let mut buf: Vec<CoocRecord> = Vec::with_capacity(chunk as usize);
        let mut dealt = 0usize;
        loop {
            buf.clear();
            for rec in reader.by_ref().take(chunk as usize) {
                buf.push(rec?);
            }
            if buf.is_empty() {
                break;
            }
            buf.shuffle(&mut rng);
            for rec in &buf {
                sinks[dealt % n_buckets].write(rec)?;
                dealt += 1;
            }
        }
        for s in sinks {
            s.finish()?.flush()?;
        }
    }
    for (b, bucket) in buckets.iter().enumerate() {
        let mut records = format::read_records(bucket.path())?;
        records.shuffle(&mut stream_rng(seed, b as u64 + 1));
        for r in &records {
            writer.write(r)?;
        }
    }
    if writer.written() != total {
        return Err(Error::Undefined(format!(
            "shuffle wrote {} of {total} records",
            writer.written()
        )));
    }
    writer.finish()?;
    Ok(ShuffleSummary {
        records: total,
        buckets: n_buckets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cooccur::format::{read_records, write_records};

    fn fixture(n: u32) -> Vec<CoocRecord> {
        (0..n).map(|i| CoocRecord::new(i, i % 7, 1.0 + i as f64 / 8.0)).collect()
    }

    fn sorted_bits(recs: &[CoocRecord]) -> Vec<(u32, u32, u64)> {
        let mut v: Vec<_> = recs.iter().map(|r| (r.row, r.col, r.value.to_bits())).collect();
        v.sort();
        v
    }

    fn run(input: &[CoocRecord], seed: u64, budget: usize) -> (Vec<u8>, ShuffleSummary) {
        let dir = tempfile::tempdir().unwrap();
        let i = dir.path().join("in.bin");
        let o = dir.path().join("out.bin");
        write_records(&i, input).unwrap();
        let s = shuffle_cooccurrences(&i, &o, seed, budget, Some(dir.path())).unwrap();
        (std::fs::read(&o).unwrap(), s)
    }

    #[test]
    fn permutation_and_determinism_in_memory() {
        let input = fixture(10);
        let (a, s) = run(&input, 123, 1 << 20);
        assert_eq!(s.buckets, 0);
        let (b, _) = run(&input, 123, 1 << 20);
        assert_eq!(a, b);
        let (c, _) = run(&input, 2024, 1 << 20);
        assert_ne!(a, c);
        let decoded: Vec<CoocRecord> = RecordReader::new(&a[..]).map(Result::unwrap).collect();
        assert_eq!(sorted_bits(&decoded), sorted_bits(&input));
    }

    #[test]
    fn external_path_is_a_permutation() {
        let input = fixture(1000);
        let (a, s) = run(&input, 7, 16 * 64);
        assert_eq!(s.buckets, 16);
        let decoded: Vec<CoocRecord> = RecordReader::new(&a[..]).map(Result::unwrap).collect();
        assert_eq!(sorted_bits(&decoded), sorted_bits(&input));
        assert_ne!(decoded, input);
        let (b, _) = run(&input, 7, 16 * 64);
        assert_eq!(a, b);
    }

    #[test]
    fn empty_input() {
        let (a, s) = run(&[], 1, 1024);
        assert!(a.is_empty());
        assert_eq!(s.records, 0);
    }

    #[test]
    fn failure_cleans_output() {
        let dir = tempfile::tempdir().unwrap();
        let i = dir.path().join("in.bin");
        std::fs::write(&i, [0u8; 17]).unwrap();
        let o = dir.path().join("out.bin");
        assert!(shuffle_cooccurrences(&i, &o, 1, 1024, None).is_err());
        assert!(!o.exists());
        assert!(read_records(&i).is_err());
    }
}

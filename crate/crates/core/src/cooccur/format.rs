//! Fixed-width binary record files.
//!
//! Each record is 16 bytes, little-endian: `u32` row index, `u32` column
//! index, `f64` value. Indices are 0-based vocabulary positions. A JSON
//! sidecar (`<file>.meta.json`) describes how the file was produced.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CoocRecord;
use crate::error::{Error, Result};

pub const RECORD_BYTES: usize = 16;
pub const FORMAT_NAME: &str = "cooc-u32le-u32le-f64le";

impl CoocRecord {
    pub fn to_bytes(&self) -> [u8; RECORD_BYTES] {
        let mut b = [0u8; RECORD_BYTES];
        b[0..4].copy_from_slice(&self.row.to_le_bytes());
        b[4..8].copy_from_slice(&self.col.to_le_bytes());
        b[8..16].copy_from_slice(&self.value.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; RECORD_BYTES]) -> Self {
        CoocRecord {
            row: u32::from_le_bytes(b[0..4].try_into().unwrap()),
            col: u32::from_le_bytes(b[4..8].try_into().unwrap()),
            value: f64::from_le_bytes(b[8..16].try_into().unwrap()),
        }
    }
}

pub struct RecordWriter<W: Write> {
    inner: W,
    written: u64,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(inner: W) -> Self {
        RecordWriter { inner, written: 0 }
    }

    pub fn write(&mut self, rec: &CoocRecord) -> io::Result<()> {
        self.written += 1;
        self.inner.write_all(&rec.to_bytes())
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

impl RecordWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::create(path).map_err(Error::file(path))?;
        Ok(RecordWriter::new(BufWriter::with_capacity(1 << 20, f)))
    }
}

pub struct RecordReader<R: Read> {
    inner: R,
    remaining: Option<u64>,
}

impl<R: Read> RecordReader<R> {
    pub fn new(inner: R) -> Self {
        RecordReader {
            inner,
            remaining: None,
        }
    }

    fn limited(inner: R, count: u64) -> Self {
        RecordReader {
            inner,
            remaining: Some(count),
        }
    }
}

impl RecordReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        record_count(path)?;
        let f = File::open(path).map_err(Error::file(path))?;
        Ok(RecordReader::new(BufReader::with_capacity(1 << 20, f)))
    }

    /// Reader over records `start..start + count` of a file.
    pub fn open_range(path: impl AsRef<Path>, start: u64, count: u64) -> Result<Self> {
        let path = path.as_ref();
        let mut f = File::open(path).map_err(Error::file(path))?;
        f.seek(SeekFrom::Start(start * RECORD_BYTES as u64))?;
        Ok(RecordReader::limited(BufReader::with_capacity(1 << 20, f), count))
    }
}

impl<R: Read> Iterator for RecordReader<R> {
    type Item = Result<CoocRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(rem) = &mut self.remaining {
            if *rem == 0 {
                return None;
            }
            *rem -= 1;
        }
        let mut buf = [0u8; RECORD_BYTES];
        let mut filled = 0;
        while filled < RECORD_BYTES {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) if filled == 0 => return None,
                Ok(0) => {
                    return Some(Err(Error::Undefined(format!(
                        "truncated record file: {filled} trailing bytes"
                    ))))
                }
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Some(Err(e.into())),
            }
        }
        Some(Ok(CoocRecord::from_bytes(&buf)))
    }
}

/// Number of records in a file; errors if its size is not a multiple of the
/// record width.
pub fn record_count(path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let len = std::fs::metadata(path).map_err(Error::file(path))?.len();
    if len % RECORD_BYTES as u64 != 0 {
        return Err(Error::parse(
            path,
            0,
            format!("size {len} is not a multiple of {RECORD_BYTES}"),
        ));
    }
    Ok(len / RECORD_BYTES as u64)
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<CoocRecord>> {
    RecordReader::open(path)?.collect()
}

pub fn write_records(path: impl AsRef<Path>, records: &[CoocRecord]) -> Result<()> {
    let mut w = RecordWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()?;
    Ok(())
}

/// Sidecar description of a record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoocMetadata {
    pub format: String,
    pub aggregated: bool,
    pub records: u64,
    pub vocab_size: usize,
    pub vocab_sha256: String,
    pub window: usize,
    pub weighting: String,
    /// Weights are multiples of `1 / denominator`.
    pub denominator: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuffle_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuffle_budget_bytes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
}

impl CoocMetadata {
    pub fn sidecar_path(records: &Path) -> PathBuf {
        let mut s = records.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    }

    pub fn write_for(&self, records: &Path) -> Result<()> {
        let path = Self::sidecar_path(records);
        let text = serde_json::to_string_pretty(self).expect("metadata serializes");
        std::fs::write(&path, text + "\n").map_err(Error::file(&path))?;
        Ok(())
    }

    pub fn read_for(records: &Path) -> Result<Self> {
        let path = Self::sidecar_path(records);
        let text = std::fs::read_to_string(&path).map_err(Error::file(&path))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.line(), e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_little_endian() {
        let r = CoocRecord {
            row: 1,
            col: 0x0102_0304,
            value: 0.5,
        };
        let b = r.to_bytes();
        assert_eq!(&b[0..4], &[1, 0, 0, 0]);
        assert_eq!(&b[4..8], &[4, 3, 2, 1]);
        assert_eq!(&b[8..16], &0.5f64.to_le_bytes());
        assert_eq!(CoocRecord::from_bytes(&b), r);
    }

    #[test]
    fn file_round_trip_and_ranges() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        let recs: Vec<CoocRecord> = (0..10)
            .map(|i| CoocRecord {
                row: i,
                col: 9 - i,
                value: i as f64 + 0.25,
            })
            .collect();
        write_records(&path, &recs).unwrap();
        assert_eq!(record_count(&path).unwrap(), 10);
        assert_eq!(read_records(&path).unwrap(), recs);
        let mid: Vec<_> = RecordReader::open_range(&path, 3, 4)
            .unwrap()
            .map(Result::unwrap)
            .collect();
        assert_eq!(mid, recs[3..7]);
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        std::fs::write(&path, [0u8; 20]).unwrap();
        assert!(record_count(&path).is_err());
        assert!(RecordReader::new(&[0u8; 20][..]).nth(1).unwrap().is_err());
    }
}

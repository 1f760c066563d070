//! Corpus ingestion.
//!
//! A [`CorpusManifest`] lists whitespace-tokenized text files, one document per
//! line, each with a repeat factor. [`stream_tokens`] walks the sources in
//! manifest order, emits every source `repeat` times and applies the cleaning
//! rules (stop-token removal, optional lowercasing) before any windowing
//! happens downstream.
//!
//! Manifest format (TOML):
//!
//! ```toml
//! lowercase = true
//! stop_tokens = ["<doc>", "</doc>", "<unk>"]
//!
//! [[source]]
//! path = "gigaword.txt"   # relative to the manifest's directory
//! repeat = 2
//!
//! [[source]]
//! path = "wikipedia.txt"
//! ```

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One document: an ordered list of tokens.
pub type Document = Vec<String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSource {
    pub path: PathBuf,
    #[serde(default = "default_repeat")]
    pub repeat: u32,
}

fn default_repeat() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    #[serde(default, rename = "source")]
    pub sources: Vec<CorpusSource>,
    #[serde(default)]
    pub stop_tokens: Vec<String>,
    #[serde(default)]
    pub lowercase: bool,
}

impl CorpusManifest {
    pub fn single(path: impl Into<PathBuf>) -> Self {
        CorpusManifest {
            sources: vec![CorpusSource {
                path: path.into(),
                repeat: 1,
            }],
            stop_tokens: Vec::new(),
            lowercase: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (n, source) in self.sources.iter().enumerate() {
            if source.repeat == 0 {
                return Err(Error::validation(
                    format!("source[{n}].repeat"),
                    format!("repeat count for {} must be >= 1", source.path.display()),
                ));
            }
            if !seen.insert(&source.path) {
                return Err(Error::validation(
                    format!("source[{n}].path"),
                    format!("duplicate source path {}", source.path.display()),
                ));
            }
        }
        for (n, token) in self.stop_tokens.iter().enumerate() {
            if token.is_empty() || token.chars().any(char::is_whitespace) {
                return Err(Error::validation(
                    format!("stop_tokens[{n}]"),
                    "stop tokens must be non-empty and contain no whitespace",
                ));
            }
        }
        Ok(())
    }

    pub fn cleaner(&self) -> TokenCleaner {
        TokenCleaner::new(self.stop_tokens.iter().cloned(), self.lowercase)
    }
}

/// Parses and validates a manifest. Relative source paths are resolved
/// against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<CorpusManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(Error::file(path))?;
    let mut manifest = parse_manifest(&text, path)?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    for source in &mut manifest.sources {
        if source.path.is_relative() {
            source.path = base.join(&source.path);
        }
    }
    manifest.validate()?;
    Ok(manifest)
}

/// Parses manifest text without touching the filesystem. `origin` is only
/// used in error messages.
pub fn parse_manifest(text: &str, origin: &Path) -> Result<CorpusManifest> {
    let manifest: CorpusManifest = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|span| line_of_offset(text, span.start))
            .unwrap_or(0);
        Error::parse(origin, line, e.message().to_string())
    })?;
    manifest.validate()?;
    Ok(manifest)
}

pub(crate) fn line_of_offset(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())]
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
        + 1
}

/// Stop-token removal and optional lowercasing for one line of text.
#[derive(Debug, Clone, Default)]
pub struct TokenCleaner {
    stop: HashSet<String>,
    lowercase: bool,
}

impl TokenCleaner {
    pub fn new(stop_tokens: impl IntoIterator<Item = String>, lowercase: bool) -> Self {
        TokenCleaner {
            stop: stop_tokens.into_iter().collect(),
            lowercase,
        }
    }

    pub fn clean_line(&self, line: &str) -> Document {
        line.split_ascii_whitespace()
            .filter(|token| !self.stop.contains(*token))
            .filter_map(|token| {
                if !self.lowercase {
                    return Some(token.to_string());
                }
                let lower = token.to_lowercase();
                // a lowercased token may collide with a stop token
                (!self.stop.contains(&lower)).then_some(lower)
            })
            .collect()
    }
}

/// Anything that can be walked as an ordered sequence of documents, possibly
/// more than once.
pub trait DocumentSource {
    fn documents(&self) -> Result<Box<dyn Iterator<Item = Result<Document>> + '_>>;
}

impl DocumentSource for CorpusManifest {
    fn documents(&self) -> Result<Box<dyn Iterator<Item = Result<Document>> + '_>> {
        Ok(Box::new(stream_tokens(self)))
    }
}

impl DocumentSource for [Document] {
    fn documents(&self) -> Result<Box<dyn Iterator<Item = Result<Document>> + '_>> {
        Ok(Box::new(self.iter().cloned().map(Ok)))
    }
}

impl DocumentSource for Vec<Document> {
    fn documents(&self) -> Result<Box<dyn Iterator<Item = Result<Document>> + '_>> {
        self.as_slice().documents()
    }
}

/// Streams the cleaned documents of every source, each repeated according to
/// its repeat count, in manifest order.
pub fn stream_tokens(manifest: &CorpusManifest) -> TokenStream<'_> {
    TokenStream {
        manifest,
        cleaner: manifest.cleaner(),
        source: 0,
        pass: 0,
        reader: None,
        line_no: 0,
        buf: String::new(),
        failed: false,
    }
}

pub struct TokenStream<'a> {
    manifest: &'a CorpusManifest,
    cleaner: TokenCleaner,
    source: usize,
    pass: u32,
    reader: Option<BufReader<File>>,
    line_no: usize,
    buf: String,
    failed: bool,
}

impl TokenStream<'_> {
    fn advance_source(&mut self) {
        self.reader = None;
        self.line_no = 0;
        self.pass += 1;
        if self.pass >= self.manifest.sources[self.source].repeat {
            self.pass = 0;
            self.source += 1;
        }
    }
}

impl Iterator for TokenStream<'_> {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let source = self.manifest.sources.get(self.source)?;
            if self.reader.is_none() {
                match File::open(&source.path) {
                    Ok(f) => self.reader = Some(BufReader::new(f)),
                    Err(e) => {
                        self.failed = true;
                        return Some(Err(Error::file(&source.path)(e)));
                    }
                }
            }
            self.buf.clear();
            let reader = self.reader.as_mut().expect("reader opened above");
            match reader.read_line(&mut self.buf) {
                Ok(0) => self.advance_source(),
                Ok(_) => {
                    self.line_no += 1;
                    return Some(Ok(self.cleaner.clean_line(&self.buf)));
                }
                Err(e) => {
                    self.failed = true;
                    let err = if e.kind() == std::io::ErrorKind::InvalidData {
                        Error::parse(&source.path, self.line_no + 1, "line is not valid UTF-8")
                    } else {
                        Error::file(&source.path)(e)
                    };
                    return Some(Err(err));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        path
    }

    #[test]
    fn manifest_with_repeats() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "giga.txt", "a b\n");
        write(dir.path(), "wiki.txt", "c\n");
        let m = write(
            dir.path(),
            "corpus.toml",
            "[[source]]\npath = \"giga.txt\"\nrepeat = 2\n\n[[source]]\npath = \"wiki.txt\"\nrepeat = 1\n",
        );
        let manifest = load_manifest(&m).unwrap();
        assert_eq!(manifest.sources.len(), 2);
        assert_eq!(manifest.sources[0].repeat, 2);
        assert_eq!(manifest.sources[0].path, dir.path().join("giga.txt"));
        let docs: Vec<Document> = stream_tokens(&manifest).map(|d| d.unwrap()).collect();
        assert_eq!(docs, vec![vec!["a", "b"], vec!["a", "b"], vec!["c"]]);
    }

    #[test]
    fn identity_configuration() {
        let m = parse_manifest("[[source]]\npath = \"x.txt\"\n", Path::new("m.toml")).unwrap();
        assert_eq!(m, CorpusManifest::single("x.txt"));
        let cleaner = m.cleaner();
        assert_eq!(cleaner.clean_line("The <unk> Cat\n"), vec!["The", "<unk>", "Cat"]);
    }

    #[test]
    fn repeat_zero_rejected() {
        let err = parse_manifest("[[source]]\npath = \"x.txt\"\nrepeat = 0\n", Path::new("m.toml"))
            .unwrap_err();
        match err {
            Error::Validation { field, .. } => assert_eq!(field, "source[0].repeat"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicate_paths_rejected() {
        let text = "[[source]]\npath = \"x.txt\"\n[[source]]\npath = \"x.txt\"\n";
        assert!(matches!(
            parse_manifest(text, Path::new("m.toml")),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn parse_error_has_line_number() {
        let text = "lowercase = true\n\n[[source]]\npath = \n";
        match parse_manifest(text, Path::new("m.toml")).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn cleaning_rules() {
        let cleaner = TokenCleaner::new(["<unk>".to_string()], true);
        assert_eq!(cleaner.clean_line("The <unk> cat"), vec!["the", "cat"]);
        assert_eq!(cleaner.clean_line("<UNK>"), Vec::<String>::new());
        assert_eq!(cleaner.clean_line("   "), Vec::<String>::new());
    }

    #[test]
    fn empty_file_gives_empty_stream() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "empty.txt", "");
        let m = CorpusManifest::single(p);
        assert_eq!(stream_tokens(&m).count(), 0);
    }

    #[test]
    fn repeat_doubles_token_count() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.txt", "a b c\nd e\n\nf\n");
        let mut m = CorpusManifest::single(p);
        let once: usize = stream_tokens(&m).map(|d| d.unwrap().len()).sum();
        m.sources[0].repeat = 2;
        let twice: usize = stream_tokens(&m).map(|d| d.unwrap().len()).sum();
        assert_eq!(once, 6);
        assert_eq!(twice, 2 * once);
        // blank line is kept as an empty document
        assert_eq!(stream_tokens(&m).count(), 8);
    }

    #[test]
    fn missing_file_is_io_error() {
        let m = CorpusManifest::single("/nonexistent/corpus.txt");
        let first = stream_tokens(&m).next().unwrap();
        assert!(matches!(first, Err(Error::File { .. })));
    }
}

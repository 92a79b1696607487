//! Obtaining AMR graphs for passages from an external parser, behind a
//! persistent per-passage cache.
//!
//! The backend protocol is a single exchange: passage text in, one Penman
//! graph out. Downstream stages only ever read the cache, so they do not
//! depend on which parser produced it.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amr::{parse_penman, AmrError, AmrGraph};
use crate::data::EventInstance;
use crate::text::tokenize;

#[derive(Debug, Error)]
pub enum ParserError {
    #[error("passage `{0}` is not cached and no parser backend is configured")]
    BackendUnavailable(String),
    #[error("parser returned invalid Penman for passage `{passage_id}`: {source}")]
    InvalidBackendOutput { passage_id: String, source: AmrError },
    #[error("passage `{0}` has empty text")]
    EmptyText(String),
    #[error("cached graph for passage `{passage_id}` is unreadable: {source}")]
    CorruptCache { passage_id: String, source: AmrError },
    #[error("parser backend failed for passage `{passage_id}`: {reason}")]
    Backend { passage_id: String, reason: String },
    #[error("bad backend descriptor: {0}")]
    Descriptor(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseRequest {
    pub passage_id: String,
    pub text: String,
}

impl ParseRequest {
    pub fn for_instance(inst: &EventInstance) -> Self {
        ParseRequest { passage_id: inst.doc_id.clone(), text: inst.passage_text() }
    }
}

/// Anything that turns passage text into Penman text.
pub trait ParserBackend: Send + Sync {
    fn parse(&self, text: &str) -> Result<String, String>;
}

/// Backend descriptor as written in run configs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendDescriptor {
    /// Runs `sh -c <command>` with the passage on stdin.
    Subprocess { command: String },
    /// POSTs `{"text": ...}` and reads Penman from the response body.
    Http { url: String },
    /// In-repo rule-based parser, optionally seeded with a JSON table
    /// mapping passage text to Penman.
    Stub {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        table: Option<PathBuf>,
    },
}

impl BackendDescriptor {
    pub fn build(&self) -> Result<Box<dyn ParserBackend>, ParserError> {
        Ok(match self {
            BackendDescriptor::Subprocess { command } => Box::new(SubprocessBackend { command: command.clone() }),
            BackendDescriptor::Http { url } => Box::new(HttpBackend { url: url.clone() }),
            BackendDescriptor::Stub { table: None } => Box::new(StubBackend::default()),
            BackendDescriptor::Stub { table: Some(path) } => {
                let text = fs::read_to_string(path)?;
                let table: BTreeMap<String, String> =
                    serde_json::from_str(&text).map_err(|e| ParserError::Descriptor(e.to_string()))?;
                Box::new(StubBackend::with_table(table))
            }
        })
    }
}

pub struct SubprocessBackend {
    pub command: String,
}

impl ParserBackend for SubprocessBackend {
    fn parse(&self, text: &str) -> Result<String, String> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| format!("spawn `{}`: {e}", self.command))?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            // A parser that ignores its input may close stdin early.
            let _ = stdin.write_all(text.as_bytes());
        }
        let out = child.wait_with_output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("exit {}: {}", out.status, String::from_utf8_lossy(&out.stderr).trim()));
        }
        String::from_utf8(out.stdout).map_err(|e| e.to_string())
    }
}

pub struct HttpBackend {
    pub url: String,
}

impl ParserBackend for HttpBackend {
    fn parse(&self, text: &str) -> Result<String, String> {
        let body = serde_json::json!({ "text": text }).to_string();
        let mut resp = ureq::post(&self.url)
            .header("Content-Type", "application/json")
            .send(body.as_str())
            .map_err(|e| e.to_string())?;
        let mut out = String::new();
        resp.body_mut().as_reader().read_to_string(&mut out).map_err(|e| e.to_string())?;
        Ok(out)
    }
}

/// Deterministic rule-based parser for tests and synthetic corpora.
///
/// Texts found in the table get their stored graph. Anything else becomes
/// a flat graph: a `passage` root with one `:mod` child per distinct word.
#[derive(Default)]
pub struct StubBackend {
    table: HashMap<String, String>,
    calls: AtomicUsize,
}

impl StubBackend {
    pub fn with_table(table: impl IntoIterator<Item = (String, String)>) -> Self {
        StubBackend {
            table: table.into_iter().map(|(k, v)| (normalize(&k), v)).collect(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn fallback(text: &str) -> String {
        let mut words: Vec<String> = Vec::new();
        for tok in tokenize(&text.to_lowercase()) {
            let w: String = tok.chars().filter(|c| c.is_ascii_alphanumeric() || *c == '-').collect();
            if !w.is_empty() && !words.contains(&w) {
                words.push(w);
            }
        }
        let mut out = String::from("(p / passage");
        for (i, w) in words.iter().take(32).enumerate() {
            out.push_str(&format!(" :mod (w{i} / {w})"));
        }
        out.push(')');
        out
    }
}

fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl ParserBackend for StubBackend {
    fn parse(&self, text: &str) -> Result<String, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.table.get(&normalize(text)).cloned().unwrap_or_else(|| Self::fallback(text)))
    }
}

/// Directory with one Penman file per passage id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmrCache {
    dir: PathBuf,
}

impl AmrCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, ParserError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(AmrCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// File for a passage id. Bytes outside `[A-Za-z0-9_-]` (and a leading
    /// `.`) are percent-encoded so every id maps to a distinct file name.
    pub fn path_for(&self, passage_id: &str) -> PathBuf {
        let mut name = String::new();
        for (i, b) in passage_id.bytes().enumerate() {
            if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' || (b == b'.' && i > 0) {
                name.push(b as char);
            } else {
                name.push_str(&format!("%{b:02X}"));
            }
        }
        self.dir.join(format!("{name}.amr"))
    }

    pub fn contains(&self, passage_id: &str) -> bool {
        self.path_for(passage_id).is_file()
    }

    pub fn read_text(&self, passage_id: &str) -> Result<Option<String>, ParserError> {
        match fs::read_to_string(self.path_for(passage_id)) {
            Ok(t) => Ok(Some(t)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn get(&self, passage_id: &str) -> Result<Option<AmrGraph>, ParserError> {
        match self.read_text(passage_id)? {
            None => Ok(None),
            Some(t) => parse_penman(&t)
                .map(Some)
                .map_err(|source| ParserError::CorruptCache { passage_id: passage_id.to_string(), source }),
        }
    }

    /// Writes through a temporary file and a no-clobber rename. When another
    /// writer got there first its entry is kept and this one is dropped.
    pub fn put(&self, passage_id: &str, graph: &AmrGraph) -> Result<(), ParserError> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(graph.to_penman().as_bytes())?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        match tmp.persist_noclobber(self.path_for(passage_id)) {
            Ok(_) => Ok(()),
            Err(e) if e.error.kind() == std::io::ErrorKind::AlreadyExists => Ok(()),
            Err(e) => Err(e.error.into()),
        }
    }
}

/// Cached graph for the passage, or a fresh parse stored before returning.
pub fn fetch_amr(
    req: &ParseRequest,
    cache: &AmrCache,
    backend: Option<&dyn ParserBackend>,
) -> Result<AmrGraph, ParserError> {
    if req.text.trim().is_empty() {
        return Err(ParserError::EmptyText(req.passage_id.clone()));
    }
    if let Some(g) = cache.get(&req.passage_id)? {
        return Ok(g);
    }
    let backend = backend.ok_or_else(|| ParserError::BackendUnavailable(req.passage_id.clone()))?;
    let penman = backend
        .parse(&req.text)
        .map_err(|reason| ParserError::Backend { passage_id: req.passage_id.clone(), reason })?;
    let graph = parse_penman(&penman)
        .map_err(|source| ParserError::InvalidBackendOutput { passage_id: req.passage_id.clone(), source })?;
    cache.put(&req.passage_id, &graph)?;
    Ok(graph)
}

/// Makes sure every passage in `dataset` has a cache entry. Returns how
/// many passages were parsed by this call.
pub fn precompute_corpus(
    dataset: &[EventInstance],
    cache: &AmrCache,
    backend: Option<&dyn ParserBackend>,
) -> Result<usize, ParserError> {
    let mut seen = std::collections::HashSet::new();
    let mut parsed = 0;
    for inst in dataset {
        if !seen.insert(inst.doc_id.as_str()) {
            continue;
        }
        let req = ParseRequest::for_instance(inst);
        if req.text.trim().is_empty() {
            return Err(ParserError::EmptyText(req.passage_id));
        }
        if cache.contains(&req.passage_id) {
            continue;
        }
        fetch_amr(&req, cache, backend)?;
        parsed += 1;
    }
    Ok(parsed)
}

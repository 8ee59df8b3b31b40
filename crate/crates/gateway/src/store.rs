//! Append-only persistence: one JSON object per line in `samples.jsonl`,
//! `payloads.jsonl`, `responses.jsonl` and `queries.jsonl`, plus one engine
//! checkpoint per subject under `checkpoints/`.
//!
//! Every event that changes engine state carries a sequence number drawn
//! from a single counter, so recovery can merge the logs back into arrival
//! order. A line cut short by a crash is dropped (and truncated away) when
//! the store is opened; any other unparsable line is an error.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use ppgema_core::model::{EmaQuery, ResponseRecord, SamplePayload, SampleRecord};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const PAYLOADS_FILE: &str = "payloads.jsonl";
pub const RESPONSES_FILE: &str = "responses.jsonl";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, StoreError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// A processed sample and the query it created, committed together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEvent {
    pub seq: u64,
    pub record: SampleRecord,
    pub query: Option<EmaQuery>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadEntry {
    pub sample_id: String,
    pub payload: SamplePayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseEvent {
    pub seq: u64,
    pub record: ResponseRecord,
}

/// Audit entry written when a query is found past its expiry unanswered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpiryEvent {
    pub seq: u64,
    pub ema_id: String,
    pub subject_id: String,
    pub expired_at_ms: i64,
}

/// Everything read back from a data directory.
#[derive(Debug, Default)]
pub struct StoreContents {
    pub samples: Vec<SampleEvent>,
    pub responses: Vec<ResponseEvent>,
    pub expiries: Vec<ExpiryEvent>,
    /// Lines dropped because the process died while writing them.
    pub torn_lines: usize,
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    samples: File,
    payloads: Option<File>,
    responses: File,
    queries: File,
    next_seq: u64,
}

impl Store {
    /// Opens (creating if needed) the store in `dir` and reads back its
    /// logs. Payloads are not loaded; `keep_payloads = false` stops writing
    /// them.
    pub fn open(dir: &Path, keep_payloads: bool) -> Result<(Self, StoreContents)> {
        fs::create_dir_all(dir.join(CHECKPOINT_DIR)).map_err(io_err(dir))?;
        let mut contents = StoreContents::default();
        let (samples, torn) = read_log::<SampleEvent>(&dir.join(SAMPLES_FILE))?;
        contents.samples = samples;
        contents.torn_lines += torn;
        let (responses, torn) = read_log::<ResponseEvent>(&dir.join(RESPONSES_FILE))?;
        contents.responses = responses;
        contents.torn_lines += torn;
        let (expiries, torn) = read_log::<ExpiryEvent>(&dir.join(QUERIES_FILE))?;
        contents.expiries = expiries;
        contents.torn_lines += torn;
        contents.torn_lines += repair_tail(&dir.join(PAYLOADS_FILE))?;

        let max_seq = contents
            .samples
            .iter()
            .map(|e| e.seq)
            .chain(contents.responses.iter().map(|e| e.seq))
            .chain(contents.expiries.iter().map(|e| e.seq))
            .max();
        let store = Store {
            dir: dir.to_path_buf(),
            samples: append(&dir.join(SAMPLES_FILE))?,
            payloads: if keep_payloads {
                Some(append(&dir.join(PAYLOADS_FILE))?)
            } else {
                None
            },
            responses: append(&dir.join(RESPONSES_FILE))?,
            queries: append(&dir.join(QUERIES_FILE))?,
            next_seq: max_seq.map_or(1, |s| s + 1),
        };
        Ok((store, contents))
    }

    /// Reads the logs without touching them; an unterminated final line is
    /// skipped rather than truncated. A missing directory reads as empty.
    pub fn read(dir: &Path) -> Result<StoreContents> {
        let mut contents = StoreContents::default();
        let (samples, torn) = read_lines::<SampleEvent>(&dir.join(SAMPLES_FILE))?;
        contents.samples = samples;
        contents.torn_lines += torn;
        let (responses, torn) = read_lines::<ResponseEvent>(&dir.join(RESPONSES_FILE))?;
        contents.responses = responses;
        contents.torn_lines += torn;
        let (expiries, torn) = read_lines::<ExpiryEvent>(&dir.join(QUERIES_FILE))?;
        contents.expiries = expiries;
        contents.torn_lines += torn;
        Ok(contents)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn take_seq(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    pub fn append_payload(&mut self, sample_id: &str, payload: &SamplePayload) -> Result<()> {
        let Some(file) = self.payloads.as_mut() else {
            return Ok(());
        };
        let entry = PayloadEntry {
            sample_id: sample_id.to_string(),
            payload: payload.clone(),
        };
        write_line(file, &self.dir.join(PAYLOADS_FILE), &entry)
    }

    /// Commits a processed sample; returns its sequence number.
    pub fn append_sample(&mut self, record: &SampleRecord, query: Option<&EmaQuery>) -> Result<u64> {
        let seq = self.take_seq();
        let event = SampleEvent {
            seq,
            record: record.clone(),
            query: query.cloned(),
        };
        write_line(&mut self.samples, &self.dir.join(SAMPLES_FILE), &event)?;
        Ok(seq)
    }

    pub fn append_response(&mut self, record: &ResponseRecord) -> Result<u64> {
        let seq = self.take_seq();
        let event = ResponseEvent {
            seq,
            record: record.clone(),
        };
        write_line(&mut self.responses, &self.dir.join(RESPONSES_FILE), &event)?;
        Ok(seq)
    }

    pub fn append_expiry(&mut self, ema_id: &str, subject_id: &str, expired_at_ms: i64) -> Result<u64> {
        let seq = self.take_seq();
        let event = ExpiryEvent {
            seq,
            ema_id: ema_id.to_string(),
            subject_id: subject_id.to_string(),
            expired_at_ms,
        };
        write_line(&mut self.queries, &self.dir.join(QUERIES_FILE), &event)?;
        Ok(seq)
    }
}

pub fn checkpoint_path(dir: &Path, subject_id: &str) -> PathBuf {
    dir.join(CHECKPOINT_DIR).join(format!("{subject_id}.json"))
}

/// Writes a checkpoint atomically (temporary file, then rename).
pub fn write_checkpoint(dir: &Path, subject_id: &str, text: &str) -> Result<()> {
    let path = checkpoint_path(dir, subject_id);
    let parent = dir.join(CHECKPOINT_DIR);
    fs::create_dir_all(&parent).map_err(io_err(&parent))?;
    let tmp = path.with_extension("json.tmp");
    let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(text.as_bytes()).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, &path).map_err(io_err(&path))
}

pub fn read_checkpoint(dir: &Path, subject_id: &str) -> Result<Option<String>> {
    let path = checkpoint_path(dir, subject_id);
    match fs::read_to_string(&path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(&path)(e)),
    }
}

/// Streams the stored payloads, last entry per sample id winning.
pub fn read_payloads(dir: &Path) -> Result<Vec<PayloadEntry>> {
    let (entries, _) = read_log::<PayloadEntry>(&dir.join(PAYLOADS_FILE))?;
    let mut seen = std::collections::HashMap::new();
    for (i, e) in entries.iter().enumerate() {
        seen.insert(e.sample_id.clone(), i);
    }
    Ok(entries
        .into_iter()
        .enumerate()
        .filter(|(i, e)| seen[&e.sample_id] == *i)
        .map(|(_, e)| e)
        .collect())
}

fn append(path: &Path) -> Result<File> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))
}

fn write_line<T: Serialize>(file: &mut File, path: &Path, value: &T) -> Result<()> {
    let mut line = serde_json::to_vec(value).expect("store records serialize");
    line.push(b'\n');
    file.write_all(&line).map_err(io_err(path))
}

/// Cuts an unterminated final line off `path`; returns 1 if it did.
fn repair_tail(path: &Path) -> Result<usize> {
    let len = match fs::metadata(path) {
        Ok(m) => m.len(),
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(0),
        Err(e) => return Err(io_err(path)(e)),
    };
    if len == 0 {
        return Ok(0);
    }
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.last() == Some(&b'\n') {
        return Ok(0);
    }
    let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    let f = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
    f.set_len(keep as u64).map_err(io_err(path))?;
    Ok(1)
}

fn read_log<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, usize)> {
    let torn = repair_tail(path)?;
    let (out, _) = read_lines(path)?;
    Ok((out, torn))
}

/// Parses every complete line; returns 1 as the second value when an
/// unterminated final line was skipped.
fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, usize)> {
    let mut text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut torn = 0;
    if !text.is_empty() && !text.ends_with('\n') {
        text.truncate(text.rfind('\n').map_or(0, |i| i + 1));
        torn = 1;
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok((out, torn))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torn_tail_is_dropped_and_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(QUERIES_FILE);
        fs::write(
            &path,
            "{\"seq\":3,\"ema_id\":\"e\",\"subject_id\":\"S01\",\"expired_at_ms\":5}\n{\"seq\":4,\"ema",
        )
        .unwrap();
        let (mut store, contents) = Store::open(dir.path(), true).unwrap();
        assert_eq!(contents.expiries.len(), 1);
        assert_eq!(contents.torn_lines, 1);
        assert_eq!(store.append_expiry("f", "S01", 9).unwrap(), 4);
        drop(store);
        let (_, contents) = Store::open(dir.path(), true).unwrap();
        assert_eq!(contents.expiries.len(), 2);
        assert_eq!(contents.torn_lines, 0);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(QUERIES_FILE), "not json\n").unwrap();
        assert!(matches!(
            Store::open(dir.path(), true),
            Err(StoreError::Corrupt { line: 1, .. })
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join(CHECKPOINT_DIR)).unwrap();
        assert_eq!(read_checkpoint(dir.path(), "S01").unwrap(), None);
        write_checkpoint(dir.path(), "S01", "{}").unwrap();
        write_checkpoint(dir.path(), "S01", "{\"a\":1}").unwrap();
        assert_eq!(read_checkpoint(dir.path(), "S01").unwrap().as_deref(), Some("{\"a\":1}"));
    }
}

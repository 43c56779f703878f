//! JSON Lines result files. One record per line, flushed as soon as it is
//! produced; failed entries carry an `error` field. The sidecar manifest is
//! rewritten with the record digest when the run completes.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use ecbench::fingerprint;
use ecbench::runner::{FailedEntry, Measurement, MeasurementKey, ResultSet, RunRecord};
use serde::Deserialize;
use thiserror::Error;

use crate::manifest::{manifest_path, RunManifest};

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    /// A fingerprint, digest or object id does not match the manifest.
    #[error("{0}")]
    Integrity(String),
    #[error("duplicate measurement key (ec {0}, occurrence {1})")]
    DuplicateKey(u128, u32),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PersistError + '_ {
    move |source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Failed lines are told apart by their `error` field. An untagged enum
/// cannot be used because serde's buffering does not carry `u128`.
#[derive(Deserialize)]
struct LineKind {
    #[serde(default)]
    error: Option<serde::de::IgnoredAny>,
}

fn parse_line(line: &str) -> Result<RunRecord, serde_json::Error> {
    let kind: LineKind = serde_json::from_str(line)?;
    Ok(if kind.error.is_some() {
        RunRecord::Failed(serde_json::from_str::<FailedEntry>(line)?)
    } else {
        RunRecord::Measured(serde_json::from_str::<Measurement>(line)?)
    })
}

fn canonical(record: &RunRecord) -> String {
    match record {
        RunRecord::Measured(m) => serde_json::to_string(m),
        RunRecord::Failed(f) => serde_json::to_string(f),
    }
    .expect("records serialize")
}

fn digest_of(lines: &[String]) -> String {
    let mut bytes = Vec::new();
    for l in lines {
        bytes.extend_from_slice(l.as_bytes());
        bytes.push(b'\n');
    }
    fingerprint::of_bytes(&bytes)
}

fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<(), PersistError> {
    let target = manifest_path(path);
    let mut tmp = target.clone().into_os_string();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&tmp, text).map_err(io_err(&tmp))?;
    fs::rename(&tmp, &target).map_err(io_err(&target))
}

fn read_manifest(path: &Path) -> Result<RunManifest, PersistError> {
    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    serde_json::from_str(&text).map_err(|e| PersistError::Parse {
        path: mpath,
        line: e.line(),
        message: e.to_string(),
    })
}

/// Records already on disk, as parsed lines plus their canonical forms.
struct Existing {
    records: Vec<RunRecord>,
    canonical: Vec<String>,
    /// Byte length of the complete lines; a torn final line lies beyond it.
    complete_len: u64,
}

fn read_records(path: &Path, manifest: &RunManifest) -> Result<Existing, PersistError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let complete_len = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let text = std::str::from_utf8(&bytes[..complete_len]).map_err(|e| PersistError::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut records = Vec::new();
    let mut canonical_lines = Vec::new();
    let mut keys = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_line(line).map_err(|e| PersistError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let (key, object) = match &record {
            RunRecord::Measured(m) => (m.key(), &m.object_id),
            RunRecord::Failed(f) => ((f.ec_index, f.occurrence), &f.object_id),
        };
        if object != &manifest.object.id {
            return Err(PersistError::Integrity(format!(
                "{}:{}: record for object `{object}` in a results file for `{}`",
                path.display(),
                i + 1,
                manifest.object.id
            )));
        }
        if !keys.insert(key) {
            return Err(PersistError::DuplicateKey(key.0, key.1));
        }
        canonical_lines.push(canonical(&record));
        records.push(record);
    }
    Ok(Existing {
        records,
        canonical: canonical_lines,
        complete_len: complete_len as u64,
    })
}

fn into_result_set(records: Vec<RunRecord>, manifest: &RunManifest) -> ResultSet {
    let mut rs = ResultSet::new(manifest.object.id.clone(), manifest.plan_fingerprint.clone());
    for r in records {
        match r {
            RunRecord::Measured(m) => rs.measurements.push(m),
            RunRecord::Failed(f) => rs.failures.push(f),
        }
    }
    rs
}

/// Incremental writer for one results file and its manifest.
pub struct ResultWriter {
    path: PathBuf,
    out: BufWriter<File>,
    manifest: RunManifest,
    lines: Vec<String>,
}

impl ResultWriter {
    /// Starts a fresh results file, replacing any existing one.
    pub fn create(path: &Path, mut manifest: RunManifest) -> Result<Self, PersistError> {
        manifest.completed = false;
        manifest.records = 0;
        manifest.results_digest = None;
        let file = File::create(path).map_err(io_err(path))?;
        write_manifest(path, &manifest)?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            manifest,
            lines: Vec::new(),
        })
    }

    /// Reopens an interrupted run. The stored manifest must describe the
    /// same inputs as `manifest`; a torn final line is discarded. Returns the
    /// writer and the records already on disk.
    pub fn resume(path: &Path, manifest: RunManifest) -> Result<(Self, ResultSet), PersistError> {
        let stored = read_manifest(path)?;
        if !stored.same_inputs(&manifest) {
            return Err(PersistError::Integrity(format!(
                "{} was produced from different inputs",
                path.display()
            )));
        }
        let existing = read_records(path, &stored)?;
        let file = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(io_err(path))?;
        file.set_len(existing.complete_len).map_err(io_err(path))?;
        let mut file = file;
        use std::io::Seek;
        file.seek(io::SeekFrom::End(0)).map_err(io_err(path))?;
        let mut manifest = manifest;
        manifest.started_unix = stored.started_unix.or(manifest.started_unix);
        manifest.completed = false;
        manifest.records = existing.records.len();
        manifest.results_digest = None;
        write_manifest(path, &manifest)?;
        let done = into_result_set(existing.records, &manifest);
        Ok((
            Self {
                path: path.to_path_buf(),
                out: BufWriter::new(file),
                manifest,
                lines: existing.canonical,
            },
            done,
        ))
    }

    pub fn append(&mut self, record: &RunRecord) -> Result<(), PersistError> {
        let line = canonical(record);
        let path = self.path.clone();
        self.out.write_all(line.as_bytes()).map_err(io_err(&path))?;
        self.out.write_all(b"\n").map_err(io_err(&path))?;
        self.out.flush().map_err(io_err(&path))?;
        self.lines.push(line);
        Ok(())
    }

    /// Seals the file: writes the digest and marks the manifest complete.
    pub fn finish(mut self, finished_unix: Option<u64>) -> Result<RunManifest, PersistError> {
        self.out.flush().map_err(io_err(&self.path))?;
        self.manifest.records = self.lines.len();
        self.manifest.results_digest = Some(digest_of(&self.lines));
        self.manifest.completed = true;
        self.manifest.finished_unix = finished_unix;
        write_manifest(&self.path, &self.manifest)?;
        Ok(self.manifest)
    }
}

/// Writes a complete result set and its sealed manifest.
pub fn persist_results(
    results: &ResultSet,
    manifest: &RunManifest,
    path: &Path,
) -> Result<RunManifest, PersistError> {
    if results.object_id != manifest.object.id {
        return Err(PersistError::Integrity(format!(
            "result set is for `{}` but the manifest names `{}`",
            results.object_id, manifest.object.id
        )));
    }
    if !results.plan_fingerprint.is_empty() && results.plan_fingerprint != manifest.plan_fingerprint
    {
        return Err(PersistError::Integrity(
            "result set and manifest name different plans".into(),
        ));
    }
    let finished = manifest.finished_unix;
    let mut writer = ResultWriter::create(path, manifest.clone())?;
    for m in &results.measurements {
        writer.append(&RunRecord::Measured(m.clone()))?;
    }
    for f in &results.failures {
        writer.append(&RunRecord::Failed(f.clone()))?;
    }
    writer.finish(finished)
}

/// Reads a sealed results file and checks it against its manifest.
pub fn load_results(path: &Path) -> Result<(ResultSet, RunManifest), PersistError> {
    let manifest = read_manifest(path)?;
    let existing = read_records(path, &manifest)?;
    if !manifest.completed {
        return Err(PersistError::Integrity(format!(
            "{} is an incomplete run; resume it first",
            path.display()
        )));
    }
    if existing.records.len() != manifest.records {
        return Err(PersistError::Integrity(format!(
            "{} has {} records, manifest says {}",
            path.display(),
            existing.records.len(),
            manifest.records
        )));
    }
    let digest = digest_of(&existing.canonical);
    if manifest.results_digest.as_deref() != Some(digest.as_str()) {
        return Err(PersistError::Integrity(format!(
            "{} does not match its manifest digest",
            path.display()
        )));
    }
    Ok((into_result_set(existing.records, &manifest), manifest))
}

/// Keys of every record, measured or failed.
pub fn done_keys(rs: &ResultSet) -> BTreeSet<MeasurementKey> {
    let mut keys = rs.keys();
    keys.extend(rs.failures.iter().map(|f| (f.ec_index, f.occurrence)));
    keys
}

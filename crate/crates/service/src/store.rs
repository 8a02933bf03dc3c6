//! On-disk layout of the data directory:
//!
//! - `sessions/{id}.jsonl`: exploration event logs, appended after every
//!   operation. They double as usage logs.
//! - `previews/{id}.job.json`: preview job state, rewritten on each update.
//! - `logs/{id}.json`: completed preview results, the usage logs of route
//!   previews.
//! - `cache/idempotency.jsonl`: stored responses for `Idempotency-Key`.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use scenescout_core::eval::SourceLog;
use scenescout_core::exploration::{self, ExplorationSession};
use scenescout_core::preview::{PreviewRequest, PreviewResult, PreviewSegment};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::error::ErrorBody;

#[derive(Debug, Error)]
#[error("{path}: {message}")]
pub struct StoreError {
    pub path: String,
    pub message: String,
}

fn err(path: &Path, e: impl ToString) -> StoreError {
    StoreError {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Partial,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewJob {
    pub preview_id: String,
    pub status: JobStatus,
    pub request: PreviewRequest,
    /// Segments finished so far, in route order.
    pub segments: Vec<PreviewSegment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<PreviewResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl PreviewJob {
    pub fn is_finished(&self) -> bool {
        matches!(self.status, JobStatus::Complete | JobStatus::Failed)
    }
}

/// A response stored under an idempotency scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredResponse {
    pub scope: String,
    pub status: u16,
    pub body: Value,
}

#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

const SUBDIRS: [&str; 4] = ["sessions", "previews", "logs", "cache"];

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| err(path, e))
}

fn append(path: &Path, text: &str) -> Result<(), StoreError> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| err(path, e))?;
    f.sync_data().map_err(|e| err(path, e))
}

fn files_with_suffix(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>, StoreError> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| err(dir, e))? {
        let p = e.map_err(|e| err(dir, e))?.path();
        if p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(suffix))
        {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

impl DataDir {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for d in SUBDIRS {
            let p = root.join(d);
            fs::create_dir_all(&p).map_err(|e| err(&p, e))?;
        }
        Ok(Self { root })
    }

    /// True when `path` looks like a data directory.
    pub fn is_data_dir(path: &Path) -> bool {
        path.join("sessions").is_dir() && path.join("logs").is_dir()
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.jsonl"))
    }

    fn job_path(&self, id: &str) -> PathBuf {
        self.root.join("previews").join(format!("{id}.job.json"))
    }

    pub fn preview_log_path(&self, id: &str) -> PathBuf {
        self.root.join("logs").join(format!("{id}.json"))
    }

    fn idempotency_path(&self) -> PathBuf {
        self.root.join("cache").join("idempotency.jsonl")
    }

    /// Persists events `session.history[from..]`. With `from == 0` the log is
    /// written fresh, header included.
    pub fn append_session(
        &self,
        session: &ExplorationSession,
        from: usize,
        now: DateTime<Utc>,
    ) -> Result<(), StoreError> {
        let path = self.session_path(&session.id.0);
        if from == 0 {
            return write_atomic(&path, exploration::to_log(session, now).as_bytes());
        }
        let mut text = String::new();
        for e in &session.history[from..] {
            text.push_str(&serde_json::to_string(e).map_err(|e| err(&path, e))?);
            text.push('\n');
        }
        if text.is_empty() {
            return Ok(());
        }
        append(&path, &text)
    }

    /// Replays every session log. Unreadable logs are skipped with a warning.
    pub fn load_sessions(&self) -> Result<Vec<ExplorationSession>, StoreError> {
        let mut out = Vec::new();
        for p in files_with_suffix(&self.root.join("sessions"), ".jsonl")? {
            let text = fs::read_to_string(&p).map_err(|e| err(&p, e))?;
            match exploration::from_log(&text) {
                Ok((_, s)) => out.push(s),
                Err(e) => tracing::warn!(path = %p.display(), error = %e, "skipping session log"),
            }
        }
        Ok(out)
    }

    pub fn save_job(&self, job: &PreviewJob) -> Result<(), StoreError> {
        let path = self.job_path(&job.preview_id);
        let bytes = serde_json::to_vec(job).map_err(|e| err(&path, e))?;
        write_atomic(&path, &bytes)
    }

    pub fn save_preview_log(&self, id: &str, result: &PreviewResult) -> Result<(), StoreError> {
        let path = self.preview_log_path(id);
        let text = serde_json::to_string_pretty(result).map_err(|e| err(&path, e))?;
        write_atomic(&path, text.as_bytes())
    }

    /// Loads all jobs. Jobs that were still running when the process stopped
    /// are marked failed.
    pub fn load_jobs(&self, now: DateTime<Utc>) -> Result<Vec<PreviewJob>, StoreError> {
        let mut out = Vec::new();
        for p in files_with_suffix(&self.root.join("previews"), ".job.json")? {
            let text = fs::read_to_string(&p).map_err(|e| err(&p, e))?;
            let mut job: PreviewJob = match serde_json::from_str(&text) {
                Ok(j) => j,
                Err(e) => {
                    tracing::warn!(path = %p.display(), error = %e, "skipping preview job");
                    continue;
                }
            };
            if !job.is_finished() {
                job.status = JobStatus::Failed;
                job.error = Some(ErrorBody {
                    code: "interrupted".into(),
                    message: "the service stopped before this preview finished".into(),
                    detail: Value::Null,
                    retryable: true,
                });
                job.updated_at = now;
                self.save_job(&job)?;
            }
            out.push(job);
        }
        Ok(out)
    }

    pub fn load_idempotency(&self) -> Result<Vec<StoredResponse>, StoreError> {
        let path = self.idempotency_path();
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(err(&path, e)),
        };
        // a torn last line is dropped
        Ok(text
            .lines()
            .filter_map(|l| serde_json::from_str(l).ok())
            .collect())
    }

    pub fn append_idempotency(&self, r: &StoredResponse) -> Result<(), StoreError> {
        let path = self.idempotency_path();
        let mut line = serde_json::to_string(r).map_err(|e| err(&path, e))?;
        line.push('\n');
        append(&path, &line)
    }

    /// Completed previews and all exploration sessions, in the format the
    /// evaluation sampler reads.
    pub fn usage_logs(&self) -> Result<Vec<SourceLog>, StoreError> {
        let mut out = Vec::new();
        for p in files_with_suffix(&self.root.join("logs"), ".json")?
            .into_iter()
            .chain(files_with_suffix(&self.root.join("sessions"), ".jsonl")?)
        {
            out.push(SourceLog::load(&p).map_err(|e| err(&p, e))?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torn_idempotency_line_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let d = DataDir::open(dir.path()).unwrap();
        let r = StoredResponse {
            scope: "POST /v1/explore k".into(),
            status: 200,
            body: serde_json::json!({"a": 1}),
        };
        d.append_idempotency(&r).unwrap();
        append(&d.idempotency_path(), "{\"scope\":\"x\",\"sta").unwrap();
        assert_eq!(d.load_idempotency().unwrap(), vec![r]);
    }

    #[test]
    fn layout_is_created() {
        let dir = tempfile::tempdir().unwrap();
        DataDir::open(dir.path().join("d")).unwrap();
        assert!(DataDir::is_data_dir(&dir.path().join("d")));
        for s in SUBDIRS {
            assert!(dir.path().join("d").join(s).is_dir());
        }
    }
}

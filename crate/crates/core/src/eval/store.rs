//! `eval.v1` annotation files: a header line, then task, sentence and
//! description records, one JSON object per line. Later records for the same
//! key replace earlier ones, so annotators only ever append.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{AnnotationTask, DescriptionAnnotation, EvalError, SentenceAnnotation};

pub const SCHEMA: &str = "eval.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalHeader {
    pub schema: String,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
}

impl EvalHeader {
    pub fn new(created_at: DateTime<Utc>) -> Self {
        Self {
            schema: SCHEMA.to_string(),
            created_at,
            annotator: None,
            seed: None,
            fraction: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum AnnotationRecord {
    Task(AnnotationTask),
    Sentence {
        task_id: String,
        sentence_idx: usize,
        annotation: SentenceAnnotation,
    },
    Description {
        task_id: String,
        annotation: DescriptionAnnotation,
    },
}

/// In-memory view of one annotation file.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationFile {
    pub header: EvalHeader,
    tasks: Vec<AnnotationTask>,
    index: BTreeMap<String, usize>,
    sentences: BTreeMap<(String, usize), SentenceAnnotation>,
    descriptions: BTreeMap<String, DescriptionAnnotation>,
    path: Option<PathBuf>,
}

fn io_err(path: &Path, e: impl ToString) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

impl AnnotationFile {
    pub fn new(header: EvalHeader, tasks: Vec<AnnotationTask>) -> Self {
        let mut f = Self {
            header,
            tasks: Vec::new(),
            index: BTreeMap::new(),
            sentences: BTreeMap::new(),
            descriptions: BTreeMap::new(),
            path: None,
        };
        for t in tasks {
            f.upsert_task(t);
        }
        f
    }

    fn upsert_task(&mut self, task: AnnotationTask) {
        match self.index.get(&task.task_id) {
            Some(&i) => self.tasks[i] = task,
            None => {
                self.index.insert(task.task_id.clone(), self.tasks.len());
                self.tasks.push(task);
            }
        }
    }

    pub fn tasks(&self) -> &[AnnotationTask] {
        &self.tasks
    }

    pub fn task(&self, task_id: &str) -> Option<&AnnotationTask> {
        self.index.get(task_id).map(|&i| &self.tasks[i])
    }

    pub fn sentence(&self, task_id: &str, idx: usize) -> Option<&SentenceAnnotation> {
        self.sentences.get(&(task_id.to_string(), idx))
    }

    pub fn description(&self, task_id: &str) -> Option<&DescriptionAnnotation> {
        self.descriptions.get(task_id)
    }

    /// Annotated sentences with their tasks, in task then sentence order.
    pub fn sentence_annotations(&self) -> impl Iterator<Item = (&AnnotationTask, usize, &SentenceAnnotation)> {
        self.sentences
            .iter()
            .filter_map(|((id, idx), a)| Some((self.task(id)?, *idx, a)))
    }

    pub fn description_annotations(&self) -> impl Iterator<Item = (&AnnotationTask, &DescriptionAnnotation)> {
        self.descriptions
            .iter()
            .filter_map(|(id, a)| Some((self.task(id)?, a)))
    }

    /// Applies one record, validating it against the known tasks.
    pub fn apply(&mut self, rec: AnnotationRecord) -> Result<(), EvalError> {
        match rec {
            AnnotationRecord::Task(t) => {
                if t.sentences.is_empty() {
                    return Err(EvalError::Validation {
                        rule: "task_has_sentences",
                        message: format!("task {} has no sentences", t.task_id),
                    });
                }
                self.upsert_task(t);
            }
            AnnotationRecord::Sentence {
                task_id,
                sentence_idx,
                annotation,
            } => {
                let task = self
                    .task(&task_id)
                    .ok_or_else(|| EvalError::UnknownTask(task_id.clone()))?;
                if sentence_idx >= task.sentences.len() {
                    return Err(EvalError::SentenceOutOfRange {
                        task: task_id,
                        idx: sentence_idx,
                        count: task.sentences.len(),
                    });
                }
                annotation.validate()?;
                self.sentences.insert((task_id, sentence_idx), annotation);
            }
            AnnotationRecord::Description { task_id, annotation } => {
                let task = self
                    .task(&task_id)
                    .ok_or_else(|| EvalError::UnknownTask(task_id.clone()))?;
                annotation.validate(task.source.mode)?;
                self.descriptions.insert(task_id, annotation);
            }
        }
        Ok(())
    }

    /// Records a sentence annotation, appending it to the backing file if
    /// there is one.
    pub fn record(&mut self, task_id: &str, sentence_idx: usize, ann: SentenceAnnotation) -> Result<(), EvalError> {
        self.commit(AnnotationRecord::Sentence {
            task_id: task_id.to_string(),
            sentence_idx,
            annotation: ann,
        })
    }

    pub fn record_description(&mut self, task_id: &str, ann: DescriptionAnnotation) -> Result<(), EvalError> {
        self.commit(AnnotationRecord::Description {
            task_id: task_id.to_string(),
            annotation: ann,
        })
    }

    fn commit(&mut self, rec: AnnotationRecord) -> Result<(), EvalError> {
        let line = serde_json::to_string(&rec).expect("records serialize");
        self.apply(rec)?;
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new()
                .append(true)
                .open(path)
                .map_err(|e| io_err(path, e))?;
            writeln!(f, "{line}").map_err(|e| io_err(path, e))?;
        }
        Ok(())
    }

    /// Compact serialization: header, tasks, then the current annotations.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        let mut push = |r: AnnotationRecord| {
            out.push_str(&serde_json::to_string(&r).expect("records serialize"));
            out.push('\n');
        };
        for t in &self.tasks {
            push(AnnotationRecord::Task(t.clone()));
        }
        for ((task_id, idx), a) in &self.sentences {
            push(AnnotationRecord::Sentence {
                task_id: task_id.clone(),
                sentence_idx: *idx,
                annotation: a.clone(),
            });
        }
        for (task_id, a) in &self.descriptions {
            push(AnnotationRecord::Description {
                task_id: task_id.clone(),
                annotation: *a,
            });
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or("empty annotation file")?;
        let header: EvalHeader = serde_json::from_str(first).map_err(|e| format!("line 1: {e}"))?;
        if header.schema != SCHEMA {
            return Err(format!("unsupported schema {}", header.schema));
        }
        let mut f = Self::new(header, Vec::new());
        for (n, line) in lines {
            let rec: AnnotationRecord =
                serde_json::from_str(line).map_err(|e| format!("line {}: {e}", n + 1))?;
            f.apply(rec).map_err(|e| format!("line {}: {e}", n + 1))?;
        }
        Ok(f)
    }

    /// Writes a fresh file and binds it for later appends.
    pub fn create(path: &Path, header: EvalHeader, tasks: Vec<AnnotationTask>) -> Result<Self, EvalError> {
        let mut f = Self::new(header, tasks);
        std::fs::write(path, f.to_jsonl()).map_err(|e| io_err(path, e))?;
        f.path = Some(path.to_path_buf());
        Ok(f)
    }

    /// Loads a file and binds it for later appends.
    pub fn open(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut f = Self::from_jsonl(&text).map_err(|message| EvalError::Format {
            path: path.display().to_string(),
            message,
        })?;
        f.path = Some(path.to_path_buf());
        Ok(f)
    }
}

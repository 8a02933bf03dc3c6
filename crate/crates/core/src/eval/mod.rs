//! Sentence-level human evaluation of generated descriptions: sampling tasks
//! from session logs, storing annotations and aggregating reports.

mod report;
mod store;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exploration::{self, ExplorationSession, SessionEvent};
use crate::geo::Cardinal;
use crate::preview::{PreviewResult, SegmentStatus};
use crate::prompt::{render_places, DescriptionTriple};
use crate::text::split_sentences;

pub use report::{aggregate, diff, render_markdown, CategoryRow, Disagreement, EvalReport, GroupReport, Panel, PANELS};
pub use store::{AnnotationFile, AnnotationRecord, EvalHeader, SCHEMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    RoutePreview,
    VirtualExploration,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::RoutePreview, Mode::VirtualExploration];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verbosity {
    Short,
    Medium,
    Long,
}

impl Verbosity {
    pub const ALL: [Verbosity; 3] = [Verbosity::Short, Verbosity::Medium, Verbosity::Long];

    fn pick(self, t: &DescriptionTriple) -> &str {
        match self {
            Verbosity::Short => &t.short,
            Verbosity::Medium => &t.medium,
            Verbosity::Long => &t.long,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for Verbosity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InfoType {
    Subjective,
    Objective,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObjectiveSubtype {
    #[serde(rename = "POI")]
    Poi,
    FactualObject,
    Accessibility,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Correctness {
    CannotTell,
    Incorrect,
    PartiallyCorrect,
    Correct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorType {
    PlausibleDetail,
    PlausibleAdjective,
    FactualError,
    SpatialError,
    Hallucination,
    Other,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Consistency {
    NotLikely,
    Possibly,
    Likely,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Redundancy {
    NoPrev,
    Repeats,
    AddsNew,
    Updates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relevance {
    Fully,
    Partially,
    Not,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceAnnotation {
    pub info_type: InfoType,
    #[serde(default)]
    pub objective_subtypes: BTreeSet<ObjectiveSubtype>,
    pub correctness: Correctness,
    pub error_type: ErrorType,
    pub consistency: Consistency,
    pub redundancy: Redundancy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionAnnotation {
    pub relevance: Relevance,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("annotation breaks rule {rule:?}: {message}")]
    Validation { rule: &'static str, message: String },
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("sentence {idx} out of range for task {task} with {count} sentences")]
    SentenceOutOfRange {
        task: String,
        idx: usize,
        count: usize,
    },
    #[error("fraction {0} outside (0, 1]")]
    Fraction(f64),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

impl SentenceAnnotation {
    pub fn validate(&self) -> Result<(), EvalError> {
        let needs_error = matches!(
            self.correctness,
            Correctness::Incorrect | Correctness::PartiallyCorrect
        );
        if needs_error != (self.error_type != ErrorType::None) {
            return Err(EvalError::Validation {
                rule: "error_type_iff_incorrect",
                message: format!(
                    "error_type {:?} does not fit correctness {:?}",
                    self.error_type, self.correctness
                ),
            });
        }
        let objective = matches!(self.info_type, InfoType::Objective | InfoType::Mixed);
        if objective == self.objective_subtypes.is_empty() {
            return Err(EvalError::Validation {
                rule: "subtypes_iff_objective",
                message: format!(
                    "info_type {:?} with {} objective subtypes",
                    self.info_type,
                    self.objective_subtypes.len()
                ),
            });
        }
        Ok(())
    }
}

impl DescriptionAnnotation {
    pub fn validate(&self, mode: Mode) -> Result<(), EvalError> {
        if (self.relevance == Relevance::NotApplicable) != (mode == Mode::RoutePreview) {
            return Err(EvalError::Validation {
                rule: "relevance_only_for_exploration",
                message: format!("relevance {:?} in {mode}", self.relevance),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskSource {
    pub log_id: String,
    pub mode: Mode,
    /// Segment index in a preview, event index in an exploration history.
    pub unit: usize,
    pub verbosity: Verbosity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskContext {
    pub prev_description: Option<String>,
    pub heading: Cardinal,
    pub places: Vec<String>,
    pub view_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub source: TaskSource,
    pub context: TaskContext,
    pub text: String,
    pub sentences: Vec<String>,
}

/// A session log the sampler reads.
#[derive(Debug, Clone)]
pub enum SourceLog {
    Preview { id: String, result: PreviewResult },
    Exploration { id: String, session: ExplorationSession },
}

impl SourceLog {
    pub fn id(&self) -> &str {
        match self {
            SourceLog::Preview { id, .. } | SourceLog::Exploration { id, .. } => id,
        }
    }

    /// Loads a `preview.v1` JSON document or an `exploration.v1` JSON-lines
    /// log; the id is the file stem.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
            path: p.clone(),
            message: e.to_string(),
        })?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| p.clone());
        Self::parse(id, &text).map_err(|message| EvalError::Format { path: p, message })
    }

    pub fn parse(id: String, text: &str) -> Result<Self, String> {
        let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        if first.contains(exploration::SCHEMA) {
            let (_, session) = exploration::from_log(text).map_err(|e| e.to_string())?;
            return Ok(SourceLog::Exploration { id, session });
        }
        let result: PreviewResult = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if result.schema != crate::preview::SCHEMA {
            return Err(format!("unsupported schema {}", result.schema));
        }
        Ok(SourceLog::Preview { id, result })
    }
}

struct Unit {
    at: usize,
    triple: DescriptionTriple,
    heading: Cardinal,
    places: Vec<String>,
    view_ids: Vec<String>,
}

fn units(log: &SourceLog) -> (Mode, Vec<Unit>) {
    let lines = |places: &[crate::providers::Place]| -> Vec<String> {
        if places.is_empty() {
            Vec::new()
        } else {
            render_places(places).lines().map(str::to_string).collect()
        }
    };
    match log {
        SourceLog::Preview { result, .. } => (
            Mode::RoutePreview,
            result
                .segments
                .iter()
                .filter(|s| s.status == SegmentStatus::Described)
                .filter_map(|s| {
                    Some(Unit {
                        at: s.index,
                        triple: s.triple.clone()?,
                        heading: s.sample.heading.cardinal(),
                        places: lines(&s.places),
                        view_ids: s.views.iter().map(|v| v.view_id()).collect(),
                    })
                })
                .collect(),
        ),
        SourceLog::Exploration { session, .. } => (
            Mode::VirtualExploration,
            session
                .history
                .iter()
                .enumerate()
                .filter_map(|(at, e)| match e {
                    SessionEvent::BlockDescribed {
                        heading,
                        views,
                        places,
                        triple,
                        ..
                    } => Some(Unit {
                        at,
                        triple: triple.clone(),
                        heading: heading.cardinal(),
                        places: lines(places),
                        view_ids: views.iter().map(|v| v.view_id()).collect(),
                    }),
                    _ => None,
                })
                .collect(),
        ),
    }
}

/// Every annotatable description in `logs`, in log order: one per verbosity
/// level of each described segment or block.
pub fn collect_tasks(logs: &[SourceLog]) -> Vec<AnnotationTask> {
    let mut out = Vec::new();
    for log in logs {
        let (mode, units) = units(log);
        for (i, u) in units.iter().enumerate() {
            for v in Verbosity::ALL {
                let text = v.pick(&u.triple).to_string();
                let sentences = split_sentences(&text);
                if sentences.is_empty() {
                    continue;
                }
                out.push(AnnotationTask {
                    task_id: format!("{}#{}:{}", log.id(), u.at, v.to_string().to_lowercase()),
                    source: TaskSource {
                        log_id: log.id().to_string(),
                        mode,
                        unit: u.at,
                        verbosity: v,
                    },
                    context: TaskContext {
                        prev_description: i
                            .checked_sub(1)
                            .map(|p| v.pick(&units[p].triple).to_string()),
                        heading: u.heading,
                        places: u.places.clone(),
                        view_ids: u.view_ids.clone(),
                    },
                    text,
                    sentences,
                });
            }
        }
    }
    out
}

/// Indices drawn uniformly without replacement, separately within each mode,
/// `round(n * fraction)` per mode. Returned in ascending order.
pub fn sample_indices(modes: &[Mode], fraction: f64, seed: u64) -> Result<Vec<usize>, EvalError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EvalError::Fraction(fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::new();
    for mode in Mode::ALL {
        let members: Vec<usize> = (0..modes.len()).filter(|&i| modes[i] == mode).collect();
        let k = ((members.len() as f64) * fraction).round() as usize;
        let k = k.min(members.len());
        chosen.extend(
            rand::seq::index::sample(&mut rng, members.len(), k)
                .into_iter()
                .map(|j| members[j]),
        );
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Samples a fraction of all descriptions, stratified by mode and
/// deterministic for a given seed.
pub fn sample_tasks(logs: &[SourceLog], fraction: f64, seed: u64) -> Result<Vec<AnnotationTask>, EvalError> {
    let all = collect_tasks(logs);
    let modes: Vec<Mode> = all.iter().map(|t| t.source.mode).collect();
    let picked = sample_indices(&modes, fraction, seed)?;
    let mut keep = vec![false; all.len()];
    for i in picked {
        keep[i] = true;
    }
    Ok(all
        .into_iter()
        .zip(keep)
        .filter_map(|(t, k)| k.then_some(t))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann() -> SentenceAnnotation {
        SentenceAnnotation {
            info_type: InfoType::Objective,
            objective_subtypes: [ObjectiveSubtype::Poi].into(),
            correctness: Correctness::Correct,
            error_type: ErrorType::None,
            consistency: Consistency::Likely,
            redundancy: Redundancy::NoPrev,
            note: None,
        }
    }

    #[test]
    fn correct_with_error_type_rejected() {
        let mut a = ann();
        assert!(a.validate().is_ok());
        a.error_type = ErrorType::FactualError;
        assert!(matches!(
            a.validate(),
            Err(EvalError::Validation { rule: "error_type_iff_incorrect", .. })
        ));
        a.correctness = Correctness::PartiallyCorrect;
        assert!(a.validate().is_ok());
    }

    #[test]
    fn subtypes_follow_info_type() {
        let mut a = ann();
        a.info_type = InfoType::Subjective;
        assert!(a.validate().is_err());
        a.objective_subtypes.clear();
        assert!(a.validate().is_ok());
    }

    #[test]
    fn relevance_only_for_exploration() {
        let na = DescriptionAnnotation { relevance: Relevance::NotApplicable };
        assert!(na.validate(Mode::RoutePreview).is_ok());
        assert!(na.validate(Mode::VirtualExploration).is_err());
        let full = DescriptionAnnotation { relevance: Relevance::Fully };
        assert!(full.validate(Mode::RoutePreview).is_err());
    }

    #[test]
    fn stratified_counts() {
        let modes: Vec<Mode> = (0..40)
            .map(|i| if i < 20 { Mode::RoutePreview } else { Mode::VirtualExploration })
            .collect();
        let s = sample_indices(&modes, 0.2, 7).unwrap();
        assert_eq!(s.iter().filter(|&&i| i < 20).count(), 4);
        assert_eq!(s.iter().filter(|&&i| i >= 20).count(), 4);
        assert_eq!(s, sample_indices(&modes, 0.2, 7).unwrap());
        assert_eq!(sample_indices(&modes, 1.0, 1).unwrap(), (0..40).collect::<Vec<_>>());
        assert!(sample_indices(&modes, 0.0, 1).is_err());
        assert!(sample_indices(&[], 0.5, 1).unwrap().is_empty());
    }
}

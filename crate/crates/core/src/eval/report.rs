use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{
    AnnotationFile, Consistency, Correctness, ErrorType, InfoType, Mode, Redundancy, Relevance,
    SentenceAnnotation, Verbosity,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub name: String,
    pub denominator: usize,
    pub rows: Vec<CategoryRow>,
}

impl Panel {
    fn build(name: &str, categories: &[String], counts: &BTreeMap<String, usize>) -> Self {
        let denominator = categories.iter().map(|c| counts.get(c).copied().unwrap_or(0)).sum();
        let rows = categories
            .iter()
            .map(|c| {
                let count = counts.get(c).copied().unwrap_or(0);
                CategoryRow {
                    category: c.clone(),
                    count,
                    percent: if denominator == 0 {
                        0.0
                    } else {
                        count as f64 * 100.0 / denominator as f64
                    },
                }
            })
            .collect();
        Panel {
            name: name.to_string(),
            denominator,
            rows,
        }
    }

    pub fn percent(&self, category: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.category == category).map(|r| r.percent)
    }

    pub fn count(&self, category: &str) -> Option<usize> {
        self.rows.iter().find(|r| r.category == category).map(|r| r.count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    /// `None` in the overall group.
    pub mode: Option<Mode>,
    pub verbosity: Option<Verbosity>,
    pub sentences: usize,
    pub descriptions: usize,
    pub panels: Vec<Panel>,
}

impl GroupReport {
    pub fn label(&self) -> String {
        match (self.mode, self.verbosity) {
            (Some(m), Some(v)) => format!("{m} / {v}"),
            _ => "Overall".to_string(),
        }
    }

    pub fn panel(&self, name: &str) -> Option<&Panel> {
        self.panels.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub groups: Vec<GroupReport>,
    /// How narrative error categories map onto the annotation form options.
    pub error_mapping: Vec<(String, String)>,
}

impl EvalReport {
    pub fn overall(&self) -> &GroupReport {
        self.groups.last().expect("overall group is always present")
    }

    pub fn group(&self, mode: Mode, verbosity: Verbosity) -> Option<&GroupReport> {
        self.groups
            .iter()
            .find(|g| g.mode == Some(mode) && g.verbosity == Some(verbosity))
    }
}

pub const PANELS: [&str; 6] = [
    "information_type",
    "correctness",
    "error_type",
    "consistency",
    "redundancy",
    "relevance",
];

fn name<T: std::fmt::Debug>(v: T) -> String {
    format!("{v:?}")
}

fn categories(panel: &str) -> Vec<String> {
    match panel {
        "information_type" => [InfoType::Subjective, InfoType::Objective, InfoType::Mixed]
            .map(name)
            .to_vec(),
        "correctness" => [
            Correctness::Correct,
            Correctness::PartiallyCorrect,
            Correctness::Incorrect,
            Correctness::CannotTell,
        ]
        .map(name)
        .to_vec(),
        "error_type" => [
            ErrorType::PlausibleDetail,
            ErrorType::PlausibleAdjective,
            ErrorType::FactualError,
            ErrorType::SpatialError,
            ErrorType::Hallucination,
            ErrorType::Other,
        ]
        .map(name)
        .to_vec(),
        "consistency" => [Consistency::Likely, Consistency::Possibly, Consistency::NotLikely]
            .map(name)
            .to_vec(),
        "redundancy" => [
            Redundancy::NoPrev,
            Redundancy::Repeats,
            Redundancy::AddsNew,
            Redundancy::Updates,
        ]
        .map(name)
        .to_vec(),
        "relevance" => [Relevance::Fully, Relevance::Partially, Relevance::Not]
            .map(name)
            .to_vec(),
        _ => unreachable!("unknown panel {panel}"),
    }
}

fn sentence_key(panel: &str, a: &SentenceAnnotation) -> Option<String> {
    Some(match panel {
        "information_type" => name(a.info_type),
        "correctness" => name(a.correctness),
        "error_type" if a.error_type == ErrorType::None => return None,
        "error_type" => name(a.error_type),
        "consistency" => name(a.consistency),
        "redundancy" => name(a.redundancy),
        _ => return None,
    })
}

fn error_mapping() -> Vec<(String, String)> {
    [
        ("plausible but not present visual details", "PlausibleDetail"),
        ("factual error, e.g. incorrect text", "FactualError"),
        ("spatial errors, e.g. left instead of right", "SpatialError"),
        ("outright hallucinations of whole objects", "Hallucination"),
        ("(no narrative counterpart)", "PlausibleAdjective"),
        ("(no narrative counterpart)", "Other"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect()
}

#[derive(Default)]
struct Tally {
    sentences: usize,
    descriptions: usize,
    counts: BTreeMap<&'static str, BTreeMap<String, usize>>,
}

impl Tally {
    fn add_sentence(&mut self, a: &SentenceAnnotation) {
        self.sentences += 1;
        for p in PANELS {
            if let Some(k) = sentence_key(p, a) {
                *self.counts.entry(p).or_default().entry(k).or_default() += 1;
            }
        }
    }

    fn add_description(&mut self, r: Relevance) {
        self.descriptions += 1;
        if r != Relevance::NotApplicable {
            *self
                .counts
                .entry("relevance")
                .or_default()
                .entry(name(r))
                .or_default() += 1;
        }
    }

    fn finish(self, mode: Option<Mode>, verbosity: Option<Verbosity>) -> GroupReport {
        let empty = BTreeMap::new();
        GroupReport {
            mode,
            verbosity,
            sentences: self.sentences,
            descriptions: self.descriptions,
            panels: PANELS
                .iter()
                .map(|p| Panel::build(p, &categories(p), self.counts.get(p).unwrap_or(&empty)))
                .collect(),
        }
    }
}

/// Per mode and verbosity tables plus an overall group (always last). Sentence
/// panels are normalized by sentence count, error type by sentences that
/// carry an error, relevance by rated exploration descriptions.
pub fn aggregate(file: &AnnotationFile) -> EvalReport {
    let mut groups: BTreeMap<(Mode, Verbosity), Tally> = BTreeMap::new();
    let mut overall = Tally::default();
    for (task, _, a) in file.sentence_annotations() {
        groups
            .entry((task.source.mode, task.source.verbosity))
            .or_default()
            .add_sentence(a);
        overall.add_sentence(a);
    }
    for (task, a) in file.description_annotations() {
        groups
            .entry((task.source.mode, task.source.verbosity))
            .or_default()
            .add_description(a.relevance);
        overall.add_description(a.relevance);
    }
    let mut out: Vec<GroupReport> = groups
        .into_iter()
        .map(|((m, v), t)| t.finish(Some(m), Some(v)))
        .collect();
    out.push(overall.finish(None, None));
    EvalReport {
        groups: out,
        error_mapping: error_mapping(),
    }
}

pub fn render_markdown(report: &EvalReport) -> String {
    let mut s = String::from("# Evaluation report\n");
    for g in &report.groups {
        let _ = write!(
            s,
            "\n## {}\n\n{} sentences, {} descriptions\n",
            g.label(),
            g.sentences,
            g.descriptions
        );
        for p in &g.panels {
            let _ = write!(s, "\n### {} (n = {})\n\n| Category | Count | Percent |\n|---|---:|---:|\n", p.name, p.denominator);
            for r in &p.rows {
                let _ = writeln!(s, "| {} | {} | {:.1} |", r.category, r.count, r.percent);
            }
        }
    }
    s.push_str("\n## Error type mapping\n\n| Narrative category | Form option |\n|---|---|\n");
    for (a, b) in &report.error_mapping {
        let _ = writeln!(s, "| {a} | {b} |");
    }
    s
}

/// One field on which two annotation files differ. A side is `None` when
/// that file has no annotation for the key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub task_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_idx: Option<usize>,
    pub field: String,
    pub left: Option<String>,
    pub right: Option<String>,
}

fn sentence_fields(a: &SentenceAnnotation) -> Vec<(&'static str, String)> {
    vec![
        ("info_type", name(a.info_type)),
        ("objective_subtypes", name(&a.objective_subtypes)),
        ("correctness", name(a.correctness)),
        ("error_type", name(a.error_type)),
        ("consistency", name(a.consistency)),
        ("redundancy", name(a.redundancy)),
    ]
}

/// Field-by-field disagreements between two annotators' files.
pub fn diff(a: &AnnotationFile, b: &AnnotationFile) -> Vec<Disagreement> {
    let mut out = Vec::new();
    let left: BTreeMap<_, _> = a
        .sentence_annotations()
        .map(|(t, i, x)| ((t.task_id.clone(), i), x))
        .collect();
    let right: BTreeMap<_, _> = b
        .sentence_annotations()
        .map(|(t, i, x)| ((t.task_id.clone(), i), x))
        .collect();
    let keys: std::collections::BTreeSet<_> = left.keys().chain(right.keys()).cloned().collect();
    for key in keys {
        let l = left.get(&key).map(|x| sentence_fields(x));
        let r = right.get(&key).map(|x| sentence_fields(x));
        let fields = l.as_ref().or(r.as_ref()).expect("key from one side");
        for (i, (field, _)) in fields.iter().enumerate() {
            let lv = l.as_ref().map(|v| v[i].1.clone());
            let rv = r.as_ref().map(|v| v[i].1.clone());
            if lv != rv {
                out.push(Disagreement {
                    task_id: key.0.clone(),
                    sentence_idx: Some(key.1),
                    field: field.to_string(),
                    left: lv,
                    right: rv,
                });
            }
        }
    }
    let left: BTreeMap<_, _> = a
        .description_annotations()
        .map(|(t, x)| (t.task_id.clone(), name(x.relevance)))
        .collect();
    let right: BTreeMap<_, _> = b
        .description_annotations()
        .map(|(t, x)| (t.task_id.clone(), name(x.relevance)))
        .collect();
    let keys: std::collections::BTreeSet<_> = left.keys().chain(right.keys()).cloned().collect();
    for key in keys {
        let (lv, rv) = (left.get(&key).cloned(), right.get(&key).cloned());
        if lv != rv {
            out.push(Disagreement {
                task_id: key,
                sentence_idx: None,
                field: "relevance".to_string(),
                left: lv,
                right: rv,
            });
        }
    }
    out
}

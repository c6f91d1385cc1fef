//! Accuracy over human judgment files and run-to-run consistency statistics.

mod consistency;

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use consistency::{
    consistency_run, consistency_stats, run_namespace, ConsistencyError, ConsistencyReport, RunCounts, SeriesStats, DEFAULT_RUNS,
    STAT_COLUMNS,
};

use crate::schema::SchemaConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Ner,
    Re,
    Ed,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Ner, Task::Re, Task::Ed];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Ner => "ner",
            Task::Re => "re",
            Task::Ed => "ed",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Task::Ner => "Named Entity Recognition",
            Task::Re => "Relation Extraction",
            Task::Ed => "Entity Disambiguation",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ner" => Ok(Task::Ner),
            "re" => Ok(Task::Re),
            "ed" => Ok(Task::Ed),
            other => Err(EvalError::UnknownTask(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Incorrect,
}

/// One human judgment on one extracted item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub task: Task,
    pub item_id: String,
    pub item_type: String,
    pub verdict: Verdict,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no judgments for task {0}")]
    EmptyJudgmentSet(Task),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("judgment file line {line}: {message}")]
    MalformedJudgments { line: u64, message: String },
    #[error("judgment {item_id} ({task}): type {item_type:?} is not in the schema")]
    UnknownItemType { task: Task, item_id: String, item_type: String },
}

/// Reads a judgment CSV with header `task,item_id,item_type,verdict`.
pub fn read_judgments<R: Read>(r: R) -> Result<Vec<Judgment>, EvalError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = reader.headers().map_err(|e| malformed(&e))?.clone();
    let expected = ["task", "item_id", "item_type", "verdict"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(EvalError::MalformedJudgments {
            line: 1,
            message: format!("expected header {}, found {}", expected.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        out.push(rec.map_err(|e| malformed(&e))?);
    }
    Ok(out)
}

fn malformed(e: &csv::Error) -> EvalError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    let message = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => e.to_string(),
    };
    EvalError::MalformedJudgments { line, message }
}

/// Checks that NER judgments name entity types and RE judgments name
/// relation types of `schema`.
pub fn validate_judgments(judgments: &[Judgment], schema: &SchemaConfig) -> Result<(), EvalError> {
    for j in judgments {
        let ok = match j.task {
            Task::Ner => schema.has_entity_type(&j.item_type),
            Task::Re => schema.has_relation_type(&j.item_type),
            Task::Ed => true,
        };
        if !ok {
            return Err(EvalError::UnknownItemType {
                task: j.task,
                item_id: j.item_id.clone(),
                item_type: j.item_type.clone(),
            });
        }
    }
    Ok(())
}

/// Numerator and denominator behind a ratio.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub correct: usize,
    pub incorrect: usize,
}

impl Counts {
    pub fn total(&self) -> usize {
        self.correct + self.incorrect
    }

    /// correct / (correct + incorrect); `None` with no judgments.
    pub fn ratio(&self) -> Option<f64> {
        (self.total() > 0).then(|| self.correct as f64 / self.total() as f64)
    }

    fn add(&mut self, v: Verdict) {
        match v {
            Verdict::Correct => self.correct += 1,
            Verdict::Incorrect => self.incorrect += 1,
        }
    }
}

/// A ratio with the counts it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub ratio: f64,
    pub counts: Counts,
}

impl Accuracy {
    fn from_counts(counts: Counts) -> Option<Self> {
        counts.ratio().map(|ratio| Accuracy { ratio, counts })
    }
}

fn count(judgments: &[Judgment], task: Task) -> Counts {
    let mut c = Counts::default();
    for j in judgments.iter().filter(|j| j.task == task) {
        c.add(j.verdict);
    }
    c
}

/// Share of correct judgments for `task`.
pub fn accuracy(judgments: &[Judgment], task: Task) -> Result<Accuracy, EvalError> {
    Accuracy::from_counts(count(judgments, task)).ok_or(EvalError::EmptyJudgmentSet(task))
}

/// Accuracy per item type for `task`. Types without judgments are absent.
pub fn accuracy_by_type(judgments: &[Judgment], task: Task) -> Result<BTreeMap<String, Accuracy>, EvalError> {
    let mut by_type: BTreeMap<String, Counts> = BTreeMap::new();
    for j in judgments.iter().filter(|j| j.task == task) {
        by_type.entry(j.item_type.clone()).or_default().add(j.verdict);
    }
    if by_type.is_empty() {
        return Err(EvalError::EmptyJudgmentSet(task));
    }
    Ok(by_type
        .into_iter()
        .filter_map(|(t, c)| Accuracy::from_counts(c).map(|a| (t, a)))
        .collect())
}

/// Per-task and per-type accuracy for every task that has judgments.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub per_task: BTreeMap<Task, Accuracy>,
    pub per_type: BTreeMap<Task, BTreeMap<String, Accuracy>>,
}

impl AccuracyReport {
    /// Fails only when no task has any judgment.
    pub fn from_judgments(judgments: &[Judgment]) -> Result<Self, EvalError> {
        let mut report = AccuracyReport::default();
        for task in Task::ALL {
            if let Ok(a) = accuracy(judgments, task) {
                report.per_task.insert(task, a);
                report.per_type.insert(task, accuracy_by_type(judgments, task)?);
            }
        }
        if report.per_task.is_empty() {
            return Err(EvalError::EmptyJudgmentSet(Task::Ner));
        }
        Ok(report)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        s.push_str("| Task | Correct | Total | Accuracy |\n|---|---:|---:|---:|\n");
        for (task, a) in &self.per_task {
            let _ = writeln!(s, "| {} | {} | {} | {:.2} |", task.title(), a.counts.correct, a.counts.total(), a.ratio);
        }
        for (task, types) in &self.per_type {
            let _ = write!(s, "\n### {} by type\n\n| Type | Correct | Total | Accuracy |\n|---|---:|---:|---:|\n", task.title());
            for (t, a) in types {
                let _ = writeln!(s, "| {t} | {} | {} | {:.2} |", a.counts.correct, a.counts.total(), a.ratio);
            }
        }
        s
    }
}

#[cfg(test)]
mod tests;

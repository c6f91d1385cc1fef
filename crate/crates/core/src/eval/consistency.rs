use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{extract_corpus, CorpusCounts, CorpusError, ExtractOptions};
use crate::ingest::Document;
use crate::llm::{Completion, LlmError};
use crate::schema::SchemaConfig;

pub const DEFAULT_RUNS: usize = 7;

/// Column order of every statistics table.
pub const STAT_COLUMNS: [&str; 4] = ["Mean", "Standard Deviation", "Coefficient of Variation", "Range"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: f64,
    /// Sample standard deviation (divisor n - 1).
    pub std: f64,
    /// std / mean; absent when the mean is zero.
    pub cv: Option<f64>,
    pub range: f64,
}

#[derive(Debug, Error)]
pub enum ConsistencyError {
    #[error("a series needs at least 2 values, got {0}")]
    DegenerateSeries(usize),
    #[error("coefficient of variation is undefined for a zero mean")]
    ZeroMeanCV,
    #[error("run {run}: {error}")]
    Backend { run: usize, error: LlmError },
    #[error("run {run}: {error}")]
    Extract { run: usize, error: CorpusError },
}

fn describe(values: &[f64]) -> Result<SeriesStats, ConsistencyError> {
    let n = values.len();
    if n < 2 {
        return Err(ConsistencyError::DegenerateSeries(n));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let cv = (mean != 0.0).then(|| std / mean);
    Ok(SeriesStats { mean, std, cv, range: max - min })
}

/// Mean, sample standard deviation, coefficient of variation and range.
pub fn consistency_stats(values: &[f64]) -> Result<(f64, f64, f64, f64), ConsistencyError> {
    let s = describe(values)?;
    let cv = s.cv.ok_or(ConsistencyError::ZeroMeanCV)?;
    Ok((s.mean, s.std, cv, s.range))
}

/// Counts from one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub run: usize,
    pub nodes: usize,
    pub relations: usize,
    pub nodes_by_type: BTreeMap<String, usize>,
    pub relations_by_type: BTreeMap<String, usize>,
}

impl RunCounts {
    pub fn from_corpus(run: usize, c: &CorpusCounts) -> Self {
        RunCounts {
            run,
            nodes: c.nodes,
            relations: c.relations,
            nodes_by_type: c.nodes_by_type.clone(),
            relations_by_type: c.relations_by_type.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub runs: usize,
    pub per_run_counts: Vec<RunCounts>,
    /// Keys: `nodes`, `relations`, `node:<Type>`, `relation:<type>`.
    pub stats: BTreeMap<String, SeriesStats>,
}

impl ConsistencyReport {
    /// Computes statistics for every series. A type missing from a run
    /// counts as zero in that run.
    pub fn from_runs(per_run_counts: Vec<RunCounts>) -> Result<Self, ConsistencyError> {
        let series = series_of(&per_run_counts);
        let mut stats = BTreeMap::new();
        for (name, values) in series {
            stats.insert(name, describe(&values)?);
        }
        if per_run_counts.len() < 2 {
            return Err(ConsistencyError::DegenerateSeries(per_run_counts.len()));
        }
        Ok(ConsistencyReport { runs: per_run_counts.len(), per_run_counts, stats })
    }

    /// Raw per-run values of every series, in run order.
    pub fn series(&self) -> BTreeMap<String, Vec<f64>> {
        series_of(&self.per_run_counts)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "## Consistency over {} runs\n", self.runs);
        let totals = [("Node Count", "nodes"), ("Relationship Count", "relations")];
        table(&mut s, "Series", totals.iter().map(|(title, key)| (title.to_string(), &self.stats[*key])));
        s.push('\n');
        table(&mut s, "Node Type", self.typed("node:"));
        s.push('\n');
        table(&mut s, "Relationship Type", self.typed("relation:"));
        s.push_str("\n| Run | Nodes | Relations |\n|---:|---:|---:|\n");
        for r in &self.per_run_counts {
            let _ = writeln!(s, "| {} | {} | {} |", r.run, r.nodes, r.relations);
        }
        s
    }

    fn typed<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (String, &'a SeriesStats)> + 'a {
        self.stats
            .iter()
            .filter_map(move |(k, v)| k.strip_prefix(prefix).map(|t| (t.to_string(), v)))
    }
}

fn series_of(runs: &[RunCounts]) -> BTreeMap<String, Vec<f64>> {
    let mut out = BTreeMap::new();
    out.insert("nodes".to_string(), runs.iter().map(|r| r.nodes as f64).collect());
    out.insert("relations".to_string(), runs.iter().map(|r| r.relations as f64).collect());
    let node_types: BTreeSet<&String> = runs.iter().flat_map(|r| r.nodes_by_type.keys()).collect();
    for t in node_types {
        let v = runs.iter().map(|r| r.nodes_by_type.get(t).copied().unwrap_or(0) as f64).collect();
        out.insert(format!("node:{t}"), v);
    }
    let rel_types: BTreeSet<&String> = runs.iter().flat_map(|r| r.relations_by_type.keys()).collect();
    for t in rel_types {
        let v = runs.iter().map(|r| r.relations_by_type.get(t).copied().unwrap_or(0) as f64).collect();
        out.insert(format!("relation:{t}"), v);
    }
    out
}

fn number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn table<'a>(s: &mut String, first: &str, rows: impl Iterator<Item = (String, &'a SeriesStats)>) {
    let _ = writeln!(s, "| {first} | {} |", STAT_COLUMNS.join(" | "));
    s.push_str("|---|---:|---:|---:|---:|\n");
    for (name, st) in rows {
        let cv = st.cv.map_or_else(|| "n/a".to_string(), |c| format!("{c:.2}"));
        let _ = writeln!(s, "| {name} | {:.2} | {:.2} | {cv} | {} |", st.mean, st.std, number(st.range));
    }
}

/// Namespace name of run `k` (1-based) in a replay fixture directory.
pub fn run_namespace(k: usize) -> String {
    format!("run-{k}")
}

/// Extracts the corpus `n_runs` times, one backend per run, and reports
/// count statistics. Runs execute in order; a chunk failure aborts the
/// experiment with the run index attached.
pub fn consistency_run<B, F>(
    docs: &[Document],
    schema: &SchemaConfig,
    options: &ExtractOptions,
    n_runs: usize,
    backend_for: F,
) -> Result<ConsistencyReport, ConsistencyError>
where
    B: Completion,
    F: Fn(usize) -> Result<B, LlmError>,
{
    if n_runs < 2 {
        return Err(ConsistencyError::DegenerateSeries(n_runs));
    }
    let mut per_run = Vec::with_capacity(n_runs);
    for run in 1..=n_runs {
        let backend = backend_for(run).map_err(|error| ConsistencyError::Backend { run, error })?;
        let opts = ExtractOptions {
            run_id: format!("{}-{}", options.run_id, run_namespace(run)),
            fail_fast: true,
            ..options.clone()
        };
        let (_, counts) = extract_corpus(docs, schema, &backend, &opts).map_err(|error| ConsistencyError::Extract { run, error })?;
        per_run.push(RunCounts::from_corpus(run, &counts));
    }
    ConsistencyReport::from_runs(per_run)
}

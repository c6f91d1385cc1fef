//! Entity disambiguation: bucket by type, ask for group ids, merge, rewrite edges.

mod assign;
mod merge;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assign::parse_assignment;
pub use merge::{identity_assignments, merge_fragments, merge_graph, merge_nodes, rewrite_edges, AliasMap, Fragment};

use crate::extract::{Diagnostic, ExtractedNode, ExtractionResult};
use crate::graph::{build_graph, name_key, GraphError, KnowledgeGraph};
use crate::llm::{Completion, LlmError, LlmSettings};
use crate::par;
use crate::prompts::{build_disambiguation_prompt, PromptError};
use crate::schema::SchemaConfig;

/// Largest name list sent in one disambiguation prompt.
pub const DEFAULT_BATCH_SIZE: usize = 150;

/// Group ids for an ordered name list of one entity type. Equal ids mean
/// the same entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub label: String,
    pub names: Vec<String>,
    pub group_ids: Vec<u64>,
}

impl GroupAssignment {
    /// Every name in its own group.
    pub fn identity(label: &str, names: Vec<String>) -> Self {
        let group_ids = (1..=names.len() as u64).collect();
        GroupAssignment { label: label.to_string(), names, group_ids }
    }

    pub fn group_of(&self, name: &str) -> Option<u64> {
        self.names.iter().position(|n| n == name).map(|i| self.group_ids[i])
    }

    /// Number of names minus number of distinct groups.
    pub fn merge_count(&self) -> usize {
        let mut ids = self.group_ids.clone();
        ids.sort_unstable();
        ids.dedup();
        self.names.len() - ids.len()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DisambiguationError {
    #[error("expected {expected} group ids, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("group id at position {index} is not a positive integer: {value}")]
    NonInteger { index: usize, value: String },
    #[error("unparseable group assignment ({reason})")]
    Unparseable { reason: String, raw: String },
    #[error("node ({label}: {name}) has no group assignment")]
    UncoveredNode { label: String, name: String },
    #[error("relation endpoint ({label}: {name}) is not in the alias map")]
    UnmappedEndpoint { label: String, name: String },
    #[error("{label} batch {batch}: {error}")]
    Batch { label: String, batch: usize, error: Box<DisambiguationError> },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Distinct names per label in first-seen order.
pub fn bucket_by_label(nodes: &[ExtractedNode]) -> BTreeMap<String, Vec<String>> {
    let mut buckets: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for n in nodes {
        if seen.insert((n.label.as_str(), n.name.as_str())) {
            buckets.entry(n.label.clone()).or_default().push(n.name.clone());
        }
    }
    buckets
}

/// Names sharing a [`name_key`] collapse onto one representative, the most
/// frequent name (ties: longer, then lexicographically smaller). Returns the
/// representatives in first-seen order and a name → representative map.
pub fn exact_prepass(names: &[String], counts: &BTreeMap<&str, usize>) -> (Vec<String>, BTreeMap<String, String>) {
    let mut clusters: Vec<(String, Vec<&String>)> = Vec::new();
    let mut by_key: BTreeMap<String, usize> = BTreeMap::new();
    for name in names {
        let key = name_key(name);
        match by_key.get(&key) {
            Some(&i) => clusters[i].1.push(name),
            None => {
                by_key.insert(key.clone(), clusters.len());
                clusters.push((key, vec![name]));
            }
        }
    }
    let mut reps = Vec::with_capacity(clusters.len());
    let mut map = BTreeMap::new();
    for (_, members) in clusters {
        let rep = members
            .iter()
            .copied()
            .min_by(|a, b| merge::display_order((a, counts.get(a.as_str()).copied().unwrap_or(0)), (b, counts.get(b.as_str()).copied().unwrap_or(0))))
            .expect("cluster is non-empty")
            .clone();
        for m in members {
            map.insert(m.clone(), rep.clone());
        }
        reps.push(rep);
    }
    (reps, map)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisambiguateOptions {
    pub settings: LlmSettings,
    pub parallelism: usize,
    pub batch_size: usize,
}

impl Default for DisambiguateOptions {
    fn default() -> Self {
        DisambiguateOptions { settings: LlmSettings::default(), parallelism: 4, batch_size: DEFAULT_BATCH_SIZE }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisambiguationStats {
    /// Node mentions across all results.
    pub mentions: usize,
    /// Distinct (label, name) pairs.
    pub distinct_names: usize,
    /// Names left after the exact-match prepass; these go to the model.
    pub prepass_names: usize,
    pub canonical_nodes: usize,
    /// distinct_names - canonical_nodes
    pub merges: usize,
    pub relations: usize,
    pub edges: usize,
    pub merged_self_loops: usize,
}

#[derive(Debug, Clone)]
pub struct Disambiguation {
    pub graph: KnowledgeGraph,
    pub alias_map: AliasMap,
    /// Final group ids per label over every distinct name.
    pub assignments: BTreeMap<String, GroupAssignment>,
    pub diagnostics: Vec<Diagnostic>,
    pub stats: DisambiguationStats,
}

struct Batch<'a> {
    label: &'a str,
    index: usize,
    names: &'a [String],
}

/// Asks the model for group ids over `names`, in batches, offsetting each
/// batch's ids past the previous batch's largest id.
fn assign_label_batches(
    batches: &[Batch<'_>],
    backend: &dyn Completion,
    options: &DisambiguateOptions,
) -> Vec<Result<Vec<u64>, DisambiguationError>> {
    par::map_ordered(batches, options.parallelism, |b| {
        let wrap = |error: DisambiguationError| DisambiguationError::Batch {
            label: b.label.to_string(),
            batch: b.index,
            error: Box::new(error),
        };
        let prompt = build_disambiguation_prompt(b.label, b.names).map_err(|e| wrap(e.into()))?;
        let response = backend.complete(&options.settings.request(&prompt)).map_err(|e| wrap(e.into()))?;
        parse_assignment(&response.content, b.names.len()).map_err(wrap)
    })
}

/// Full flow: bucket, prepass, prompt per label batch, merge, rewrite, build.
pub fn disambiguate_graph(
    results: &[ExtractionResult],
    schema: &SchemaConfig,
    backend: &dyn Completion,
    options: &DisambiguateOptions,
) -> Result<Disambiguation, DisambiguationError> {
    let nodes: Vec<ExtractedNode> = results.iter().flat_map(|r| r.nodes.iter().cloned()).collect();
    let relations: Vec<_> = results.iter().flat_map(|r| r.relations.iter().cloned()).collect();
    let buckets = bucket_by_label(&nodes);

    let mut counts: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    for n in &nodes {
        *counts.entry(&n.label).or_default().entry(&n.name).or_default() += 1;
    }
    let mut prepass: BTreeMap<&str, (Vec<String>, BTreeMap<String, String>)> = BTreeMap::new();
    for (label, names) in &buckets {
        prepass.insert(label, exact_prepass(names, &counts[label.as_str()]));
    }

    let batch_size = options.batch_size.max(1);
    let batches: Vec<Batch<'_>> = prepass
        .iter()
        .flat_map(|(label, (reps, _))| {
            reps.chunks(batch_size).enumerate().map(move |(index, names)| Batch { label, index, names })
        })
        .collect();
    let answers = assign_label_batches(&batches, backend, options);

    let mut rep_groups: BTreeMap<&str, BTreeMap<&str, u64>> = BTreeMap::new();
    let mut offsets: BTreeMap<&str, u64> = BTreeMap::new();
    for (batch, answer) in batches.iter().zip(answers) {
        let ids = answer?;
        let offset = offsets.entry(batch.label).or_default();
        let base = *offset;
        let groups = rep_groups.entry(batch.label).or_default();
        for (name, id) in batch.names.iter().zip(ids) {
            groups.insert(name, base + id);
            *offset = (*offset).max(base + id);
        }
    }

    let mut assignments = BTreeMap::new();
    for (label, names) in &buckets {
        let (_, rep_of) = &prepass[label.as_str()];
        let groups = &rep_groups[label.as_str()];
        let group_ids = names.iter().map(|n| groups[rep_of[n].as_str()]).collect();
        assignments.insert(label.clone(), GroupAssignment { label: label.clone(), names: names.clone(), group_ids });
    }

    let (canonical, alias_map) = merge_nodes(&nodes, &assignments)?;
    let (edges, diagnostics) = rewrite_edges(&relations, &alias_map)?;
    let stats = DisambiguationStats {
        mentions: nodes.len(),
        distinct_names: buckets.values().map(Vec::len).sum(),
        prepass_names: prepass.values().map(|(reps, _)| reps.len()).sum(),
        canonical_nodes: canonical.len(),
        merges: buckets.values().map(Vec::len).sum::<usize>() - canonical.len(),
        relations: relations.len(),
        edges: edges.len(),
        merged_self_loops: diagnostics.len(),
    };
    let graph = build_graph(canonical, edges, schema)?;
    Ok(Disambiguation { graph, alias_map, assignments, diagnostics, stats })
}

/// Alias audit table: label, alias, canonical_id, display_name.
pub fn write_alias_csv<W: Write>(w: W, graph: &KnowledgeGraph) -> csv::Result<()> {
    let mut rows: Vec<(&str, &str, &str, &str)> = graph
        .nodes()
        .flat_map(|n| {
            n.aliases
                .keys()
                .map(move |a| (n.label.as_str(), a.as_str(), n.canonical_id.as_str(), n.display_name.as_str()))
        })
        .collect();
    rows.sort();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["label", "alias", "canonical_id", "display_name"])?;
    for r in rows {
        out.write_record([r.0, r.1, r.2, r.3])?;
    }
    out.flush()?;
    Ok(())
}

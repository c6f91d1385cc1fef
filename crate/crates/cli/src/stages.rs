//! Pipeline stages. Each stage writes its artifacts under the run directory
//! and reuses upstream artifacts already there.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde_json::{json, Value};

use skg_core::disambiguate::{disambiguate_graph, merge_nodes, rewrite_edges, write_alias_csv, DisambiguateOptions, GroupAssignment};
use skg_core::eval::{consistency_run, read_judgments, validate_judgments, AccuracyReport, ConsistencyReport};
use skg_core::extract::{extract_corpus, read_results, write_results, CorpusCounts, Diagnostic, ExtractOptions, ExtractionResult, Severity};
use skg_core::graph::{build_graph, export, read_jsonl, ExportFormat, KnowledgeGraph};
use skg_core::ingest::{chunk_document, corpus_entries, load_corpus, Document};
use skg_core::llm::Completion;

use crate::config::Settings;
use crate::events;
use crate::CliError;

pub const DOCUMENTS: &str = "documents.jsonl";
pub const CHUNKS: &str = "chunks.jsonl";
pub const MANIFEST: &str = "manifest.json";
pub const EXTRACTION: &str = "extraction.jsonl";
pub const COUNTS: &str = "counts.json";
pub const DISAMBIGUATION: &str = "disambiguation.json";
pub const ALIASES: &str = "aliases.csv";
pub const GRAPH: &str = "graph.jsonl";

const FETCH_TIMEOUT: Duration = Duration::from_secs(30);

fn pipeline_err(context: &str) -> impl Fn(String) -> CliError + '_ {
    move |e| CliError::Pipeline(format!("{context}: {e}"))
}

pub fn artifact(s: &Settings, name: &str) -> PathBuf {
    s.run_dir.join(name)
}

fn write_artifact(s: &Settings, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&s.run_dir).map_err(|e| CliError::Pipeline(format!("cannot create {}: {e}", s.run_dir.display())))?;
    let path = artifact(s, name);
    fs::write(&path, bytes).map_err(|e| CliError::Pipeline(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn read_artifact(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Pipeline(format!("cannot read {}: {e}", path.display())))
}

/// Records stage timing in the sidecar manifest, which is the only artifact
/// holding wall-clock times.
fn record_stage(s: &Settings, stage: &str, started: DateTime<Utc>, extra: Value) -> Result<(), CliError> {
    let path = artifact(s, MANIFEST);
    let mut manifest: Value = fs::read_to_string(&path)
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .filter(Value::is_object)
        .unwrap_or_else(|| json!({}));
    manifest["run_id"] = json!(s.run_id);
    if !manifest["stages"].is_object() {
        manifest["stages"] = json!({});
    }
    let mut entry = json!({"started_at": started.to_rfc3339(), "finished_at": Utc::now().to_rfc3339()});
    if let (Value::Object(e), Value::Object(x)) = (&mut entry, extra) {
        e.extend(x);
    }
    manifest["stages"][stage] = entry;
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_artifact(s, MANIFEST, text.as_bytes())?;
    events::info("stage_done", json!({"stage": stage, "run_id": s.run_id}));
    Ok(())
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("artifact serializes");
        out.push(b'\n');
    }
    out
}

pub fn ingest(s: &Settings) -> Result<Vec<Document>, CliError> {
    let started = Utc::now();
    let corpus = s.corpus_path()?;
    let entries = corpus_entries(corpus).map_err(|e| CliError::Pipeline(e.to_string()))?;
    let load = load_corpus(&entries, s.parallelism, FETCH_TIMEOUT).map_err(|e| CliError::Pipeline(e.to_string()))?;
    for (id, err) in &load.rejected {
        events::warn("document_rejected", json!({"document_id": id, "error": err.to_string()}));
    }
    if load.documents.is_empty() {
        return Err(CliError::Pipeline(format!("no documents could be loaded from {}", corpus.display())));
    }
    let mut chunks = Vec::new();
    for d in &load.documents {
        match chunk_document(d, s.chunk_budget) {
            Ok(c) => chunks.extend(c),
            Err(e) => events::warn("chunking_failed", json!({"document_id": d.id, "error": e.to_string()})),
        }
    }
    write_artifact(s, DOCUMENTS, &jsonl(&load.documents))?;
    write_artifact(s, CHUNKS, &jsonl(&chunks))?;
    let fetched: BTreeMap<&str, Option<String>> =
        load.documents.iter().map(|d| (d.id.as_str(), d.fetched_at.map(|t| t.to_rfc3339()))).collect();
    let rejected: BTreeMap<&str, String> = load.rejected.iter().map(|(id, e)| (id.as_str(), e.to_string())).collect();
    record_stage(s, "ingest", started, json!({"fetched_at": fetched, "rejected": rejected}))?;
    println!("ingested {} documents into {} chunks", load.documents.len(), chunks.len());
    Ok(load.documents)
}

/// Documents from the run directory, ingesting first when absent.
pub fn documents(s: &Settings) -> Result<Vec<Document>, CliError> {
    let path = artifact(s, DOCUMENTS);
    if !path.is_file() {
        return ingest(s);
    }
    let text = read_artifact(&path)?;
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        docs.push(serde_json::from_str(line).map_err(|e| CliError::Pipeline(format!("{}:{}: {e}", path.display(), i + 1)))?);
    }
    Ok(docs)
}

fn report_diagnostics<'a>(stage: &str, diags: impl Iterator<Item = &'a Diagnostic>) {
    let mut by_code: BTreeMap<String, (usize, Severity)> = BTreeMap::new();
    for d in diags {
        let code = serde_json::to_value(d.code).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let e = by_code.entry(code).or_insert((0, d.severity));
        e.0 += 1;
        if d.severity > e.1 {
            e.1 = d.severity;
        }
        if d.severity == Severity::Error {
            events::warn("diagnostic", json!({"stage": stage, "code": d.code, "message": d.message}));
        }
    }
    for (code, (count, severity)) in by_code {
        events::info("diagnostics", json!({"stage": stage, "code": code, "severity": severity, "count": count}));
    }
}

fn counts_summary(c: &CorpusCounts) -> String {
    let mut out = format!(
        "documents {}, chunks {} ({} failed), nodes {}, relations {}\n",
        c.documents, c.chunks, c.failed_chunks, c.nodes, c.relations
    );
    for (t, n) in &c.nodes_by_type {
        out.push_str(&format!("  node {t}: {n}\n"));
    }
    for (t, n) in &c.relations_by_type {
        out.push_str(&format!("  relation {t}: {n}\n"));
    }
    out
}

fn extract_options(s: &Settings, keep_going: bool) -> ExtractOptions {
    ExtractOptions {
        run_id: s.run_id.clone(),
        chunk_budget: s.chunk_budget,
        parallelism: s.parallelism,
        settings: s.llm.clone(),
        fail_fast: !keep_going,
    }
}

pub fn extract(s: &Settings, docs: &[Document], keep_going: bool) -> Result<Vec<ExtractionResult>, CliError> {
    let started = Utc::now();
    let backend = s.backend()?;
    let (results, counts) = extract_corpus(docs, &s.schema, backend.as_ref(), &extract_options(s, keep_going))
        .map_err(|e| CliError::Pipeline(format!("extraction: {e}")))?;
    report_diagnostics("extract", results.iter().flat_map(|r| &r.diagnostics));
    let mut buf = Vec::new();
    write_results(&mut buf, &results).map_err(|e| CliError::Pipeline(e.to_string()))?;
    write_artifact(s, EXTRACTION, &buf)?;
    let counts_json = serde_json::to_string_pretty(&counts).expect("counts serialize") + "\n";
    write_artifact(s, COUNTS, counts_json.as_bytes())?;
    record_stage(s, "extract", started, json!({"backend": s.backend}))?;
    print!("{}", counts_summary(&counts));
    Ok(results)
}

pub fn extraction(s: &Settings, keep_going: bool) -> Result<Vec<ExtractionResult>, CliError> {
    let path = artifact(s, EXTRACTION);
    if !path.is_file() {
        let docs = documents(s)?;
        return extract(s, &docs, keep_going);
    }
    let file = fs::File::open(&path).map_err(|e| CliError::Pipeline(format!("cannot read {}: {e}", path.display())))?;
    read_results(BufReader::new(file)).map_err(pipeline_err(EXTRACTION))
}

#[derive(serde::Serialize, serde::Deserialize)]
struct DisambiguationArtifact {
    assignments: BTreeMap<String, GroupAssignment>,
    stats: skg_core::disambiguate::DisambiguationStats,
    diagnostics: Vec<Diagnostic>,
}

pub fn disambiguate(s: &Settings, results: &[ExtractionResult]) -> Result<BTreeMap<String, GroupAssignment>, CliError> {
    let started = Utc::now();
    let backend = s.backend()?;
    let opts = DisambiguateOptions { settings: s.llm.clone(), parallelism: s.parallelism, batch_size: s.batch_size };
    let d = disambiguate_graph(results, &s.schema, backend.as_ref(), &opts)
        .map_err(|e| CliError::Pipeline(format!("disambiguation: {e}")))?;
    report_diagnostics("disambiguate", d.diagnostics.iter());
    let art = DisambiguationArtifact { assignments: d.assignments, stats: d.stats, diagnostics: d.diagnostics };
    let text = serde_json::to_string_pretty(&art).expect("assignments serialize") + "\n";
    write_artifact(s, DISAMBIGUATION, text.as_bytes())?;
    let mut csv = Vec::new();
    write_alias_csv(&mut csv, &d.graph).map_err(|e| CliError::Pipeline(e.to_string()))?;
    write_artifact(s, ALIASES, &csv)?;
    record_stage(s, "disambiguate", started, json!({}))?;
    println!(
        "disambiguated {} distinct names into {} canonical nodes ({} merges)",
        art.stats.distinct_names, art.stats.canonical_nodes, art.stats.merges
    );
    Ok(art.assignments)
}

pub fn assignments(s: &Settings, results: &[ExtractionResult]) -> Result<BTreeMap<String, GroupAssignment>, CliError> {
    let path = artifact(s, DISAMBIGUATION);
    if !path.is_file() {
        return disambiguate(s, results);
    }
    let art: DisambiguationArtifact = serde_json::from_str(&read_artifact(&path)?).map_err(|e| CliError::Pipeline(format!("{DISAMBIGUATION}: {e}")))?;
    Ok(art.assignments)
}

pub fn build(
    s: &Settings,
    results: &[ExtractionResult],
    assignments: &BTreeMap<String, GroupAssignment>,
) -> Result<KnowledgeGraph, CliError> {
    let started = Utc::now();
    let nodes: Vec<_> = results.iter().flat_map(|r| r.nodes.iter().cloned()).collect();
    let relations: Vec<_> = results.iter().flat_map(|r| r.relations.iter().cloned()).collect();
    let fail = |e: &dyn std::fmt::Display| CliError::Pipeline(format!("build: {e}"));
    let (canonical, alias_map) = merge_nodes(&nodes, assignments).map_err(|e| fail(&e))?;
    let (edges, diags) = rewrite_edges(&relations, &alias_map).map_err(|e| fail(&e))?;
    report_diagnostics("build", diags.iter());
    let g = build_graph(canonical, edges, &s.schema).map_err(|e| fail(&e))?;
    let mut buf = Vec::new();
    export(&g, ExportFormat::Jsonl, &mut buf).map_err(|e| fail(&e))?;
    write_artifact(s, GRAPH, &buf)?;
    record_stage(s, "build", started, json!({}))?;
    println!("graph: {} nodes, {} edges", g.node_count(), g.edge_count());
    Ok(g)
}

/// The graph at `path`, or the run's graph (building it when absent).
pub fn graph(s: &Settings, path: Option<&Path>) -> Result<KnowledgeGraph, CliError> {
    let path = match path {
        Some(p) => p.to_path_buf(),
        None => {
            let p = artifact(s, GRAPH);
            if !p.is_file() {
                let results = extraction(s, false)?;
                let a = assignments(s, &results)?;
                return build(s, &results, &a);
            }
            p
        }
    };
    read_jsonl(&read_artifact(&path)?, &s.schema).map_err(|e| CliError::Pipeline(format!("{}: {e}", path.display())))
}

pub fn export_all(s: &Settings, g: &KnowledgeGraph, formats: &[ExportFormat]) -> Result<Vec<PathBuf>, CliError> {
    let started = Utc::now();
    let mut written = Vec::new();
    for &f in formats {
        let mut buf = Vec::new();
        export(g, f, &mut buf).map_err(|e| CliError::Pipeline(format!("export: {e}")))?;
        written.push(write_artifact(s, &format!("graph.{}", f.extension()), &buf)?);
    }
    record_stage(s, "export", started, json!({"formats": formats.iter().map(|f| f.extension()).collect::<Vec<_>>()}))?;
    for p in &written {
        println!("wrote {}", p.display());
    }
    Ok(written)
}

pub fn eval(s: &Settings, judgments: &Path, as_json: bool) -> Result<AccuracyReport, CliError> {
    let started = Utc::now();
    let file = fs::File::open(judgments).map_err(|e| CliError::Pipeline(format!("cannot read {}: {e}", judgments.display())))?;
    let js = read_judgments(file).map_err(|e| CliError::Pipeline(format!("{}: {e}", judgments.display())))?;
    validate_judgments(&js, &s.schema).map_err(|e| CliError::Pipeline(e.to_string()))?;
    let report = AccuracyReport::from_judgments(&js).map_err(|e| CliError::Pipeline(e.to_string()))?;
    write_artifact(s, "accuracy.json", report.to_json().as_bytes())?;
    write_artifact(s, "accuracy.md", report.to_markdown().as_bytes())?;
    record_stage(s, "eval", started, json!({"judgments": js.len()}))?;
    print!("{}", if as_json { report.to_json() } else { report.to_markdown() });
    Ok(report)
}

pub fn consistency(s: &Settings, runs: usize, as_json: bool) -> Result<ConsistencyReport, CliError> {
    let started = Utc::now();
    if runs < 2 {
        return Err(CliError::Config(format!("consistency needs at least 2 runs, got {runs}")));
    }
    let backends: Vec<Arc<dyn Completion>> = (1..=runs).map(|k| s.run_backend(k).map(Arc::from)).collect::<Result<_, _>>()?;
    let docs = documents(s)?;
    let report = consistency_run(&docs, &s.schema, &extract_options(s, false), runs, |k| Ok(backends[k - 1].clone()))
        .map_err(|e| CliError::Pipeline(format!("consistency: {e}")))?;
    write_artifact(s, "consistency.json", report.to_json().as_bytes())?;
    write_artifact(s, "consistency.md", report.to_markdown().as_bytes())?;
    record_stage(s, "consistency", started, json!({"runs": runs}))?;
    print!("{}", if as_json { report.to_json() } else { report.to_markdown() });
    Ok(report)
}

/// Ingest, extract, disambiguate, build and export, recomputing every stage.
pub fn pipeline(s: &Settings, keep_going: bool) -> Result<KnowledgeGraph, CliError> {
    let docs = ingest(s)?;
    let results = extract(s, &docs, keep_going)?;
    let a = disambiguate(s, &results)?;
    let g = build(s, &results, &a)?;
    export_all(s, &g, &ExportFormat::ALL)?;
    Ok(g)
}

//! Entity and relationship extraction from chunks.

mod parse;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::parse_extraction;

use crate::ingest::{chunk_document, Chunk, ChunkError, Document};
use crate::llm::{Completion, FinishReason, LlmError, LlmSettings};
use crate::par;
use crate::prompts::{build_extraction_prompt, PromptError};
use crate::schema::SchemaConfig;

/// Where an extracted item came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub document_id: String,
    pub chunk_index: usize,
    pub run_id: String,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.document_id, self.chunk_index, self.run_id)
    }
}

/// A node identity local to one extraction: label plus name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeKey {
    pub label: String,
    pub name: String,
}

impl NodeKey {
    pub fn new(label: &str, name: &str) -> Self {
        NodeKey { label: label.to_string(), name: name.to_string() }
    }
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}: {})", self.label, self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedNode {
    pub label: String,
    pub name: String,
    pub properties: BTreeMap<String, String>,
    pub provenance: Provenance,
}

impl ExtractedNode {
    pub fn temp_key(&self) -> NodeKey {
        NodeKey::new(&self.label, &self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedRelation {
    pub source_key: NodeKey,
    pub target_key: NodeKey,
    pub rel_type: String,
    pub properties: BTreeMap<String, String>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DiagCode {
    RepairedFencing,
    RepairedProse,
    RepairedSyntax,
    UnknownLabel,
    UnknownRelType,
    MaterializedEndpoint,
    UnresolvedEndpoint,
    EmptyName,
    SelfRelation,
    EndpointTypeMismatch,
    MalformedItem,
    DuplicateNode,
    DuplicateRelation,
    TruncatedOutput,
    ChunkFailed,
    MergedSelfLoop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fragment: Option<String>,
}

impl Diagnostic {
    pub fn new(severity: Severity, code: DiagCode, message: impl Into<String>, fragment: Option<String>) -> Self {
        Diagnostic { severity, code, message: message.into(), fragment }
    }
}

/// Everything extracted from one chunk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub document_id: String,
    pub chunk_index: usize,
    pub run_id: String,
    pub nodes: Vec<ExtractedNode>,
    pub relations: Vec<ExtractedRelation>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ExtractionResult {
    pub fn empty(p: &Provenance) -> Self {
        ExtractionResult {
            document_id: p.document_id.clone(),
            chunk_index: p.chunk_index,
            run_id: p.run_id.clone(),
            nodes: Vec::new(),
            relations: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            document_id: self.document_id.clone(),
            chunk_index: self.chunk_index,
            run_id: self.run_id.clone(),
        }
    }

    /// True when the chunk produced no result because extraction failed.
    pub fn failed(&self) -> bool {
        self.diagnostics.iter().any(|d| d.code == DiagCode::ChunkFailed)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("empty response")]
    EmptyResponse,
    #[error("unparseable response ({reason})")]
    Unparseable { reason: String, raw: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// An extraction error tagged with the chunk it happened on.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("chunk {chunk}: {error}")]
pub struct ChunkFailure {
    pub chunk: String,
    pub error: ExtractError,
}

/// Prompts the backend with one chunk and parses the answer.
pub fn extract_chunk(
    chunk: &Chunk,
    schema: &SchemaConfig,
    backend: &dyn Completion,
    settings: &LlmSettings,
    run_id: &str,
) -> Result<ExtractionResult, ChunkFailure> {
    let fail = |error: ExtractError| ChunkFailure { chunk: chunk.label(), error };
    let prompt = build_extraction_prompt(schema, chunk).map_err(|e| fail(e.into()))?;
    let response = backend.complete(&settings.request(&prompt)).map_err(|e| fail(e.into()))?;
    let provenance = Provenance {
        document_id: chunk.document_id.clone(),
        chunk_index: chunk.index,
        run_id: run_id.to_string(),
    };
    let parsed = parse_extraction(&response.content, schema, &provenance);
    let mut result = parsed.map_err(fail)?;
    match response.finish_reason {
        FinishReason::Normal => {}
        FinishReason::Truncated => result.diagnostics.push(Diagnostic::new(
            Severity::Warning,
            DiagCode::TruncatedOutput,
            "response hit the output token limit",
            None,
        )),
        FinishReason::Filtered => result.diagnostics.push(Diagnostic::new(
            Severity::Warning,
            DiagCode::TruncatedOutput,
            "response was cut by the content filter",
            None,
        )),
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractOptions {
    pub run_id: String,
    pub chunk_budget: usize,
    pub parallelism: usize,
    pub settings: LlmSettings,
    /// Abort on the first failed chunk instead of recording it.
    pub fail_fast: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            run_id: "run".into(),
            chunk_budget: crate::ingest::DEFAULT_CHUNK_BUDGET,
            parallelism: 4,
            settings: LlmSettings::default(),
            fail_fast: false,
        }
    }
}

/// Corpus-level totals in the shape of per-type distributions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusCounts {
    pub documents: usize,
    pub chunks: usize,
    pub failed_chunks: usize,
    pub nodes: usize,
    pub relations: usize,
    pub nodes_by_type: BTreeMap<String, usize>,
    pub relations_by_type: BTreeMap<String, usize>,
}

impl CorpusCounts {
    pub fn from_results(results: &[ExtractionResult]) -> Self {
        let mut c = CorpusCounts::default();
        let mut docs = std::collections::BTreeSet::new();
        for r in results {
            docs.insert(r.document_id.as_str());
            c.chunks += 1;
            if r.failed() {
                c.failed_chunks += 1;
            }
            c.nodes += r.nodes.len();
            c.relations += r.relations.len();
            for n in &r.nodes {
                *c.nodes_by_type.entry(n.label.clone()).or_default() += 1;
            }
            for rel in &r.relations {
                *c.relations_by_type.entry(rel.rel_type.clone()).or_default() += 1;
            }
        }
        c.documents = docs.len();
        c
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("parallelism must be at least 1")]
    InvalidParallelism,
    #[error(transparent)]
    Chunking(#[from] ChunkError),
    #[error(transparent)]
    Chunk(#[from] ChunkFailure),
}

fn failed_result(p: &Provenance, message: String) -> ExtractionResult {
    let mut r = ExtractionResult::empty(p);
    r.diagnostics.push(Diagnostic::new(Severity::Error, DiagCode::ChunkFailed, message, None));
    r
}

/// Chunks every document and extracts all chunks with up to
/// `options.parallelism` requests in flight. Results come back ordered by
/// document, then chunk index.
pub fn extract_corpus(
    docs: &[Document],
    schema: &SchemaConfig,
    backend: &dyn Completion,
    options: &ExtractOptions,
) -> Result<(Vec<ExtractionResult>, CorpusCounts), CorpusError> {
    if options.parallelism == 0 {
        return Err(CorpusError::InvalidParallelism);
    }
    // each document contributes either its chunks or one failure placeholder
    let mut work: Vec<Result<Chunk, ExtractionResult>> = Vec::new();
    for doc in docs {
        match chunk_document(doc, options.chunk_budget) {
            Ok(chunks) => work.extend(chunks.into_iter().map(Ok)),
            Err(e) if options.fail_fast => return Err(e.into()),
            Err(e) => {
                let p = Provenance { document_id: doc.id.clone(), chunk_index: 0, run_id: options.run_id.clone() };
                work.push(Err(failed_result(&p, e.to_string())));
            }
        }
    }

    let outcomes = par::map_ordered(&work, options.parallelism, |item| match item {
        Ok(chunk) => extract_chunk(chunk, schema, backend, &options.settings, &options.run_id).map_err(|f| {
            let p = Provenance {
                document_id: chunk.document_id.clone(),
                chunk_index: chunk.index,
                run_id: options.run_id.clone(),
            };
            (Box::new(f), p)
        }),
        Err(placeholder) => Ok(placeholder.clone()),
    });

    let mut results = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        match outcome {
            Ok(r) => results.push(r),
            Err((failure, _)) if options.fail_fast => return Err((*failure).into()),
            Err((failure, p)) => results.push(failed_result(&p, failure.to_string())),
        }
    }
    let counts = CorpusCounts::from_results(&results);
    Ok((results, counts))
}

/// Writes one result per line.
pub fn write_results<W: Write>(mut w: W, results: &[ExtractionResult]) -> std::io::Result<()> {
    for r in results {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_results<R: BufRead>(r: R) -> Result<Vec<ExtractionResult>, String> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", n + 1))?);
    }
    Ok(out)
}

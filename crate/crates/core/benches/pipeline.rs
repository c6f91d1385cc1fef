//! Sequential vs data-parallel execution of the hot paths.
//!
//! `cargo bench -p skg-core` compares both in one build; build with
//! `--no-default-features` to make `map_ordered` itself sequential.

use std::collections::{BTreeMap, BTreeSet};
use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use serde_json::json;

use skg_core::extract::{extract_corpus, parse_extraction, ExtractOptions, Provenance};
use skg_core::graph::{build_graph, export, CanonicalNode, Edge, ExportFormat};
use skg_core::ingest::Document;
use skg_core::llm::{FnCompletion, LlmError, LlmRequest, LlmResponse};
use skg_core::par;
use skg_core::schema::default_schema;

fn response(seed: usize) -> String {
    let nodes: Vec<_> = (0..40).map(|i| json!({"label": "Company", "name": format!("Firm {seed} {i}")})).collect();
    let rels: Vec<_> = (1..40)
        .map(|i| json!({"source": format!("Firm {seed} {}", i - 1), "target": format!("Firm {seed} {i}"), "type": "suppliesTo"}))
        .collect();
    format!("```json\n{}\n```", json!({"nodes": nodes, "relationships": rels}))
}

fn corpus() -> Vec<Document> {
    (0..8)
        .map(|d| Document {
            id: format!("d{d}"),
            source_uri: format!("file:///d{d}.txt"),
            title: String::new(),
            body: (0..40).map(|s| format!("Sentence {s} of document {d} mentions Firm {s}.")).collect::<Vec<_>>().join(" "),
            fetched_at: None,
        })
        .collect()
}

fn bench_extract(c: &mut Criterion) {
    let schema = default_schema();
    let docs = corpus();
    // a fixed per-request delay stands in for network latency
    let backend = FnCompletion(|req: &LlmRequest| -> Result<LlmResponse, LlmError> {
        std::thread::sleep(Duration::from_millis(2));
        Ok(LlmResponse::normal(response(req.user.len())))
    });
    let mut group = c.benchmark_group("extract_corpus");
    group.sample_size(10);
    for threads in [1, 8] {
        let opts = ExtractOptions { chunk_budget: 60, parallelism: threads, ..ExtractOptions::default() };
        group.bench_with_input(BenchmarkId::from_parameter(threads), &opts, |b, opts| {
            b.iter(|| extract_corpus(black_box(&docs), &schema, &backend, opts).unwrap())
        });
    }
    group.finish();
}

fn bench_parse(c: &mut Criterion) {
    let schema = default_schema();
    let raws: Vec<String> = (0..256).map(response).collect();
    let prov = Provenance { document_id: "d".into(), chunk_index: 0, run_id: "bench".into() };
    let parse = |raw: &String| parse_extraction(raw, &schema, &prov).map(|r| r.nodes.len()).unwrap_or(0);
    let mut group = c.benchmark_group("parse_responses");
    group.bench_function("sequential", |b| b.iter(|| par::map_sequential(black_box(&raws), parse)));
    group.bench_function("parallel", |b| b.iter(|| par::map_ordered(black_box(&raws), 8, parse)));
    group.finish();
}

fn bench_export(c: &mut Criterion) {
    let prov = BTreeSet::from([Provenance { document_id: "d".into(), chunk_index: 0, run_id: "bench".into() }]);
    let nodes: Vec<CanonicalNode> = (0..2000)
        .map(|i| CanonicalNode {
            canonical_id: format!("company:{i}"),
            label: "Company".into(),
            display_name: format!("Firm {i}"),
            aliases: BTreeMap::from([(format!("Firm {i}"), 1)]),
            properties: BTreeMap::new(),
            provenance: prov.clone(),
        })
        .collect();
    let edges: Vec<Edge> = (0..2000)
        .flat_map(|i| {
            let prov = prov.clone();
            (1..=5).map(move |k| Edge {
                source: format!("company:{i}"),
                rel_type: "suppliesTo".into(),
                target: format!("company:{}", (i + k) % 2000),
                properties: BTreeMap::new(),
                provenance: prov.clone(),
            })
        })
        .collect();
    let g = build_graph(nodes, edges, &default_schema()).unwrap();
    let export_one = |f: &ExportFormat| {
        let mut buf = Vec::new();
        export(&g, *f, &mut buf).unwrap();
        buf.len()
    };
    let mut group = c.benchmark_group("export_all_formats");
    group.bench_function("sequential", |b| b.iter(|| par::map_sequential(&ExportFormat::ALL, export_one)));
    group.bench_function("parallel", |b| b.iter(|| par::map_ordered(&ExportFormat::ALL, 4, export_one)));
    group.finish();
}

criterion_group!(benches, bench_extract, bench_parse, bench_export);
criterion_main!(benches);

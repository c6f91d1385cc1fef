//! Bundled fixtures: replay counts, golden request hash, case-study queries.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Duration;

use skg_core::disambiguate::{disambiguate_graph, DisambiguateOptions};
use skg_core::eval::{consistency_run, consistency_stats, run_namespace};
use skg_core::extract::{extract_corpus, ExtractOptions};
use skg_core::graph::{material_network, read_jsonl, shared_suppliers, upstream_suppliers, KnowledgeGraph};
use skg_core::ingest::{corpus_entries, load_corpus, Document};
use skg_core::llm::{request_hash, LlmRequest, ReplayStore};
use skg_core::schema::{load_schema, SchemaConfig};

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn schema() -> SchemaConfig {
    load_schema(&std::fs::read_to_string(dir().join("schema.json")).unwrap()).unwrap()
}

fn docs() -> Vec<Document> {
    let entries = corpus_entries(&dir().join("corpus")).unwrap();
    let load = load_corpus(&entries, 2, Duration::from_secs(5)).unwrap();
    assert!(load.rejected.is_empty());
    load.documents
}

fn options() -> ExtractOptions {
    ExtractOptions { chunk_budget: 60, fail_fast: true, ..ExtractOptions::default() }
}

fn case_study() -> KnowledgeGraph {
    read_jsonl(&std::fs::read_to_string(dir().join("case_study_graph.jsonl")).unwrap(), &schema()).unwrap()
}

fn ids(v: &[&str]) -> BTreeSet<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn golden_request_hash() {
    // digest computed independently from the documented canonical form
    let req: LlmRequest = serde_json::from_str(&std::fs::read_to_string(dir().join("sample_request.json")).unwrap()).unwrap();
    assert_eq!(request_hash(&req), "4efd52949883d4248f86cf60cc74fe9440b6b824ca217645db5dd1134cfee92a");
}

#[test]
fn replayed_corpus_counts() {
    let store = ReplayStore::load(&dir().join("exchanges.jsonl")).unwrap();
    let docs = docs();
    assert_eq!(docs.len(), 3);
    let (results, counts) = extract_corpus(&docs, &schema(), &store, &options()).unwrap();
    assert_eq!((counts.chunks, counts.failed_chunks, counts.nodes, counts.relations), (10, 0, 67, 57));
    let d = disambiguate_graph(&results, &schema(), &store, &DisambiguateOptions::default()).unwrap();
    assert_eq!(d.stats.distinct_names, 46);
    assert_eq!(d.stats.merges, 3);
    assert_eq!((d.graph.node_count(), d.graph.edge_count()), (43, 47));
    // "Nornickel" is mentioned more often, so it names the merged node
    assert_eq!(d.graph.resolve_name("Norilsk Nickel", Some("Company")).unwrap(), "company:nornickel");
    assert_eq!(d.graph.resolve_name("ganfeng", None).unwrap(), "company:ganfeng-lithium");
}

#[test]
fn seven_run_consistency_recomputes() {
    let cdir = dir().join("consistency");
    let report = consistency_run(&docs(), &schema(), &options(), 7, |k| ReplayStore::load_namespace(&cdir, &run_namespace(k))).unwrap();
    let nodes: Vec<usize> = report.per_run_counts.iter().map(|r| r.nodes).collect();
    assert_eq!(nodes, vec![59, 59, 61, 55, 62, 53, 50]);
    for (name, values) in report.series() {
        let st = report.stats[&name];
        match consistency_stats(&values) {
            Ok((m, s, cv, r)) => {
                assert!((st.mean - m).abs() < 1e-9 && (st.std - s).abs() < 1e-9 && (st.range - r).abs() < 1e-9);
                assert!((st.cv.unwrap() - cv).abs() < 1e-9);
            }
            Err(_) => assert!(st.cv.is_none()),
        }
    }
}

#[test]
fn upstream_of_audi_reaches_ganfeng_mines() {
    let g = case_study();
    let t = upstream_suppliers(&g, "company:audi", 3).unwrap();
    assert_eq!(t.tiers[&1], ids(&["company:lg-chem"]));
    assert_eq!(t.tiers[&2], ids(&["company:ganfeng-lithium"]));
    assert_eq!(t.tiers[&3], ids(&["company:pilbara-minerals"]));
    let ganfeng_mines: BTreeSet<&str> = t
        .edges
        .iter()
        .filter(|e| e.source == "company:ganfeng-lithium" && e.rel_type == "owns")
        .map(|e| e.target.as_str())
        .collect();
    assert_eq!(ganfeng_mines, BTreeSet::from(["mine:cauchari-olaroz", "mine:goulamina", "mine:mariana"]));
}

#[test]
fn lg_chem_is_shared_with_competitors() {
    let g = case_study();
    for other in ["Ford", "Chrysler", "SAIC Motor"] {
        let b = g.resolve_name(other, Some("Company")).unwrap();
        let s = shared_suppliers(&g, "company:audi", &b).unwrap();
        assert_eq!(s.suppliers, ids(&["company:lg-chem"]), "{other}");
    }
    let s = shared_suppliers(&g, "company:tesla", "company:bmw").unwrap();
    assert_eq!(s.suppliers, ids(&["company:catl", "company:ganfeng-lithium"]));
}

#[test]
fn nickel_network_centers_on_norilsk() {
    let g = case_study();
    let s = material_network(&g, "material:nickel").unwrap();
    assert_eq!(
        s.nodes,
        ids(&[
            "material:nickel",
            "company:norilsk-nickel",
            "location:moscow",
            "mine:talnakh",
            "mine:oktyabrsky",
            "location:norilsk",
            "company:nornickel-harjavalta",
            "person:vladimir-potanin",
        ])
    );
    assert_eq!(s.edges.len(), 8);
}

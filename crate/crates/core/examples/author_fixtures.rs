//! Regenerates the bundled replay fixtures from a hand-written annotation
//! table. Run with `cargo run -p skg-core --example author_fixtures [dir]`.
//!
//! The annotator plays the model: for each chunk it reports the entities of
//! the table whose surface forms occur in the chunk, and every listed
//! relationship whose two endpoints both occur. For disambiguation it groups
//! names that belong to the same table entry.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::json;
use sha2::{Digest, Sha256};

use skg_core::disambiguate::{disambiguate_graph, DisambiguateOptions};
use skg_core::eval::run_namespace;
use skg_core::extract::{extract_corpus, ExtractOptions, Provenance};
use skg_core::graph::{build_graph, export, name_key, CanonicalNode, Edge, ExportFormat};
use skg_core::ingest::{corpus_entries, load_corpus};
use skg_core::llm::{FnCompletion, LlmError, LlmExchange, LlmRequest, LlmResponse, Recorder};
use skg_core::schema::default_schema;

const CHUNK_BUDGET: usize = 60;
const RUNS: usize = 7;

/// (key, label, surface forms)
const ENTITIES: &[(&str, &str, &[&str])] = &[
    ("ganfeng", "Company", &["Ganfeng Lithium", "Ganfeng"]),
    ("lgchem", "Company", &["LG Chem Ltd.", "LG Chem"]),
    ("tesla", "Company", &["Tesla"]),
    ("bmw", "Company", &["BMW"]),
    ("pilbara", "Company", &["Pilbara Minerals"]),
    ("audi", "Company", &["Audi"]),
    ("ford", "Company", &["Ford"]),
    ("chrysler", "Company", &["Chrysler"]),
    ("saic", "Company", &["SAIC Motor"]),
    ("norilsk", "Company", &["Norilsk Nickel", "Nornickel"]),
    ("harjavalta", "Company", &["Nornickel Harjavalta"]),
    ("basf", "Company", &["BASF"]),
    ("jinchuan", "Company", &["Jinchuan Group"]),
    ("catl", "Company", &["CATL"]),
    ("li", "Person", &["Li Liangbin"]),
    ("xinyu", "Location", &["Xinyu"]),
    ("jiangxi", "Location", &["Jiangxi"]),
    ("china", "Location", &["China"]),
    ("argentina", "Location", &["Argentina"]),
    ("mali", "Location", &["Mali"]),
    ("wa", "Location", &["Western Australia"]),
    ("seoul", "Location", &["Seoul"]),
    ("wroclaw", "Location", &["Wroclaw"]),
    ("poland", "Location", &["Poland"]),
    ("moscow", "Location", &["Moscow"]),
    ("russia", "Location", &["Russia"]),
    ("norilsk_city", "Location", &["Norilsk"]),
    ("taimyr", "Location", &["Taimyr Peninsula"]),
    ("finland", "Location", &["Finland"]),
    ("jinchang", "Location", &["Jinchang"]),
    ("ningde", "Location", &["Ningde"]),
    ("lioh", "Material", &["Lithium hydroxide"]),
    ("li2co3", "Material", &["Lithium carbonate"]),
    ("spodumene", "Material", &["spodumene"]),
    ("nickel", "Material", &["Nickel"]),
    ("palladium", "Material", &["palladium"]),
    ("mariana", "Mine", &["Mariana"]),
    ("cauchari", "Mine", &["Cauchari-Olaroz"]),
    ("goulamina", "Mine", &["Goulamina"]),
    ("talnakh", "Mine", &["Talnakh"]),
    ("oktyabrsky", "Mine", &["Oktyabrsky"]),
    ("cell", "Product", &["Lithium-ion battery cell"]),
    ("etron", "Product", &["e-tron"]),
];

const TRIPLES: &[(&str, &str, &str)] = &[
    ("ganfeng", "locatedIn", "xinyu"),
    ("xinyu", "locatedIn", "jiangxi"),
    ("jiangxi", "locatedIn", "china"),
    ("ganfeng", "produces", "lioh"),
    ("ganfeng", "produces", "li2co3"),
    ("li", "owns", "ganfeng"),
    ("ganfeng", "owns", "mariana"),
    ("mariana", "locatedIn", "argentina"),
    ("ganfeng", "owns", "cauchari"),
    ("cauchari", "locatedIn", "argentina"),
    ("ganfeng", "owns", "goulamina"),
    ("goulamina", "locatedIn", "mali"),
    ("goulamina", "produces", "spodumene"),
    ("ganfeng", "suppliesTo", "lgchem"),
    ("ganfeng", "suppliesTo", "tesla"),
    ("ganfeng", "suppliesTo", "bmw"),
    ("pilbara", "suppliesTo", "ganfeng"),
    ("pilbara", "locatedIn", "wa"),
    ("lgchem", "locatedIn", "seoul"),
    ("lgchem", "produces", "cell"),
    ("lgchem", "suppliesTo", "audi"),
    ("lgchem", "suppliesTo", "ford"),
    ("lgchem", "suppliesTo", "chrysler"),
    ("lgchem", "suppliesTo", "saic"),
    ("audi", "produces", "etron"),
    ("cell", "contains", "nickel"),
    ("cell", "contains", "lioh"),
    ("lgchem", "locatedIn", "wroclaw"),
    ("wroclaw", "locatedIn", "poland"),
    ("norilsk", "produces", "nickel"),
    ("norilsk", "produces", "palladium"),
    ("norilsk", "locatedIn", "moscow"),
    ("moscow", "locatedIn", "russia"),
    ("norilsk", "owns", "talnakh"),
    ("norilsk", "owns", "oktyabrsky"),
    ("talnakh", "locatedIn", "norilsk_city"),
    ("oktyabrsky", "locatedIn", "norilsk_city"),
    ("talnakh", "produces", "nickel"),
    ("oktyabrsky", "produces", "nickel"),
    ("norilsk", "owns", "harjavalta"),
    ("harjavalta", "locatedIn", "finland"),
    ("harjavalta", "suppliesTo", "basf"),
    ("jinchuan", "locatedIn", "jinchang"),
    ("jinchang", "locatedIn", "china"),
    ("jinchuan", "produces", "nickel"),
    ("jinchuan", "suppliesTo", "catl"),
    ("catl", "locatedIn", "ningde"),
];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-'
}

/// Entity key → surface forms found in `text`, earliest first. Longer
/// surfaces claim their span first so "Nornickel Harjavalta" never also
/// counts as "Nornickel".
fn mentions(text: &str) -> BTreeMap<&'static str, Vec<&'static str>> {
    let mut surfaces: Vec<(&str, &str)> = ENTITIES.iter().flat_map(|(k, _, ss)| ss.iter().map(move |s| (*k, *s))).collect();
    surfaces.sort_by_key(|(_, s)| std::cmp::Reverse(s.len()));
    let mut taken = vec![false; text.len()];
    let mut found: BTreeMap<&str, Vec<(usize, &str)>> = BTreeMap::new();
    for (key, surface) in surfaces {
        let mut from = 0;
        while let Some(pos) = text[from..].find(surface) {
            let start = from + pos;
            let end = start + surface.len();
            from = end;
            let before = text[..start].chars().next_back();
            let after = text[end..].chars().next();
            if before.is_some_and(is_word_char) || after.is_some_and(is_word_char) {
                continue;
            }
            if taken[start..end].iter().any(|&t| t) {
                continue;
            }
            taken[start..end].iter_mut().for_each(|t| *t = true);
            found.entry(key).or_default().push((start, surface));
        }
    }
    found
        .into_iter()
        .map(|(k, mut hits)| {
            hits.sort();
            let mut surfaces: Vec<&str> = Vec::new();
            for (_, s) in hits {
                if !surfaces.contains(&s) {
                    surfaces.push(s);
                }
            }
            (k, surfaces)
        })
        .collect()
}

fn label_of(key: &str) -> &'static str {
    ENTITIES.iter().find(|(k, _, _)| *k == key).map(|(_, l, _)| *l).unwrap()
}

fn hashed(parts: &[&str]) -> u64 {
    let d = Sha256::digest(parts.join("|").as_bytes());
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// `run` 0 is the reference run; runs 1..=7 each drop a different subset.
fn annotate(text: &str, run: usize) -> String {
    let run_tag = run.to_string();
    let keep_entity = |k: &str| run == 0 || !hashed(&[k, &run_tag]).is_multiple_of(6);
    let found: BTreeMap<_, _> = mentions(text).into_iter().filter(|(k, _)| keep_entity(k)).collect();
    // every surface becomes a node; relationships use the earliest one
    let nodes: Vec<_> = found
        .iter()
        .flat_map(|(k, names)| names.iter().map(move |name| json!({"label": label_of(k), "name": name, "properties": {}})))
        .collect();
    let rels: Vec<_> = TRIPLES
        .iter()
        .filter(|(s, r, t)| run == 0 || !hashed(&[s, r, t, &run_tag]).is_multiple_of(5))
        .filter_map(|(s, r, t)| {
            Some(json!({
                "source": found.get(s)?[0],
                "source_label": label_of(s),
                "target": found.get(t)?[0],
                "target_label": label_of(t),
                "type": r,
            }))
        })
        .collect();
    json!({"nodes": nodes, "relationships": rels}).to_string()
}

/// Wraps some answers the way chat models tend to.
fn dress(body: String, text: &str) -> String {
    match hashed(&[text]) % 3 {
        0 => body,
        1 => format!("```json\n{body}\n```"),
        _ => format!("Here is the extracted graph:\n{body}\nLet me know if you need more detail."),
    }
}

fn group_names(user: &str) -> String {
    let mut groups: Vec<String> = Vec::new();
    let mut ids = Vec::new();
    for line in user.lines().filter(|l| !l.trim().is_empty()) {
        let name = line.split_once(". ").map(|(_, n)| n).unwrap_or(line);
        let key = ENTITIES
            .iter()
            .find(|(_, _, ss)| ss.contains(&name))
            .map(|(k, _, _)| k.to_string())
            .unwrap_or_else(|| format!("unknown:{name}"));
        let id = match groups.iter().position(|g| *g == key) {
            Some(i) => i + 1,
            None => {
                groups.push(key);
                groups.len()
            }
        };
        ids.push(id);
    }
    serde_json::to_string(&ids).unwrap()
}

fn annotator(run: usize) -> FnCompletion<impl Fn(&LlmRequest) -> Result<LlmResponse, LlmError> + Send + Sync> {
    FnCompletion(move |req: &LlmRequest| {
        if req.system.contains("numbered list") {
            return Ok(LlmResponse::normal(group_names(&req.user)));
        }
        Ok(LlmResponse::normal(dress(annotate(&req.user, run), &req.user)))
    })
}

fn fresh(path: &Path) {
    if path.exists() {
        fs::remove_file(path).unwrap();
    }
}

fn node(label: &str, name: &str, aliases: &[&str]) -> CanonicalNode {
    let mut all = BTreeMap::from([(name.to_string(), aliases.len() + 1)]);
    for a in aliases {
        all.insert(a.to_string(), 1);
    }
    CanonicalNode {
        canonical_id: format!("{}:{}", label.to_lowercase(), name_key(name)),
        label: label.into(),
        display_name: name.into(),
        aliases: all,
        properties: BTreeMap::new(),
        provenance: BTreeSet::from([Provenance { document_id: "case-study".into(), chunk_index: 0, run_id: "fixture".into() }]),
    }
}

/// The hand-built graph behind the case-study queries.
fn case_study_graph(dir: &Path) {
    let nodes = vec![
        node("Company", "Audi", &[]),
        node("Company", "Ford", &["Ford Motor Company"]),
        node("Company", "Chrysler", &[]),
        node("Company", "SAIC Motor", &[]),
        node("Company", "Tesla", &["Tesla Inc."]),
        node("Company", "BMW", &[]),
        node("Company", "LG Chem", &["LG Chemical", "LG-Chemical"]),
        node("Company", "CATL", &[]),
        node("Company", "Ganfeng Lithium", &["Ganfeng Lithium Co Ltd"]),
        node("Company", "Pilbara Minerals", &[]),
        node("Company", "Norilsk Nickel", &["Nornickel", "MMC Norilsk Nickel"]),
        node("Company", "Nornickel Harjavalta", &[]),
        node("Company", "Jinchuan Group", &[]),
        node("Person", "Vladimir Potanin", &[]),
        node("Mine", "Mariana", &[]),
        node("Mine", "Cauchari-Olaroz", &[]),
        node("Mine", "Goulamina", &[]),
        node("Mine", "Pilgangoora", &[]),
        node("Mine", "Talnakh", &[]),
        node("Mine", "Oktyabrsky", &[]),
        node("Material", "Lithium", &[]),
        node("Material", "Lithium hydroxide", &[]),
        node("Material", "Nickel", &[]),
        node("Material", "Cobalt", &[]),
        node("Product", "Lithium-ion battery cell", &[]),
        node("Location", "China", &[]),
        node("Location", "Xinyu", &[]),
        node("Location", "Argentina", &[]),
        node("Location", "Mali", &[]),
        node("Location", "Western Australia", &[]),
        node("Location", "Seoul", &[]),
        node("Location", "Moscow", &[]),
        node("Location", "Russia", &[]),
        node("Location", "Norilsk", &[]),
        node("Location", "Finland", &[]),
    ];
    let triples = [
        ("company:lg-chem", "suppliesTo", "company:audi"),
        ("company:lg-chem", "suppliesTo", "company:ford"),
        ("company:lg-chem", "suppliesTo", "company:chrysler"),
        ("company:lg-chem", "suppliesTo", "company:saic-motor"),
        ("company:ganfeng-lithium", "suppliesTo", "company:lg-chem"),
        ("company:ganfeng-lithium", "suppliesTo", "company:tesla"),
        ("company:ganfeng-lithium", "suppliesTo", "company:bmw"),
        ("company:pilbara-minerals", "suppliesTo", "company:ganfeng-lithium"),
        ("company:catl", "suppliesTo", "company:tesla"),
        ("company:catl", "suppliesTo", "company:bmw"),
        ("company:catl", "suppliesTo", "company:ford"),
        ("company:lg-chem", "produces", "product:lithium-ion-battery-cell"),
        ("company:lg-chem", "locatedIn", "location:seoul"),
        ("product:lithium-ion-battery-cell", "contains", "material:lithium-hydroxide"),
        ("product:lithium-ion-battery-cell", "contains", "material:nickel"),
        ("company:ganfeng-lithium", "locatedIn", "location:xinyu"),
        ("location:xinyu", "locatedIn", "location:china"),
        ("company:ganfeng-lithium", "produces", "material:lithium-hydroxide"),
        ("company:ganfeng-lithium", "owns", "mine:mariana"),
        ("company:ganfeng-lithium", "owns", "mine:cauchari-olaroz"),
        ("company:ganfeng-lithium", "owns", "mine:goulamina"),
        ("mine:mariana", "locatedIn", "location:argentina"),
        ("mine:cauchari-olaroz", "locatedIn", "location:argentina"),
        ("mine:goulamina", "locatedIn", "location:mali"),
        ("mine:mariana", "produces", "material:lithium"),
        ("mine:cauchari-olaroz", "produces", "material:lithium"),
        ("mine:goulamina", "produces", "material:lithium"),
        ("company:pilbara-minerals", "owns", "mine:pilgangoora"),
        ("company:pilbara-minerals", "locatedIn", "location:western-australia"),
        ("mine:pilgangoora", "locatedIn", "location:western-australia"),
        ("mine:pilgangoora", "produces", "material:lithium"),
        ("company:norilsk-nickel", "produces", "material:nickel"),
        ("company:norilsk-nickel", "locatedIn", "location:moscow"),
        ("location:moscow", "locatedIn", "location:russia"),
        ("company:norilsk-nickel", "owns", "mine:talnakh"),
        ("company:norilsk-nickel", "owns", "mine:oktyabrsky"),
        ("company:norilsk-nickel", "owns", "company:nornickel-harjavalta"),
        ("mine:talnakh", "locatedIn", "location:norilsk"),
        ("mine:oktyabrsky", "locatedIn", "location:norilsk"),
        ("mine:talnakh", "produces", "material:nickel"),
        ("company:nornickel-harjavalta", "locatedIn", "location:finland"),
        ("person:vladimir-potanin", "owns", "company:norilsk-nickel"),
        ("company:jinchuan-group", "produces", "material:cobalt"),
        ("company:jinchuan-group", "locatedIn", "location:china"),
        ("company:jinchuan-group", "suppliesTo", "company:catl"),
    ];
    let prov = BTreeSet::from([Provenance { document_id: "case-study".into(), chunk_index: 0, run_id: "fixture".into() }]);
    let edges = triples
        .iter()
        .map(|(s, r, t)| Edge {
            source: s.to_string(),
            rel_type: r.to_string(),
            target: t.to_string(),
            properties: BTreeMap::new(),
            provenance: prov.clone(),
        })
        .collect();
    let g = build_graph(nodes, edges, &default_schema()).expect("case-study graph is valid");
    let mut buf = Vec::new();
    export(&g, ExportFormat::Jsonl, &mut buf).unwrap();
    fs::write(dir.join("case_study_graph.jsonl"), buf).unwrap();
}

/// Replaces wall-clock recording times with a fixed instant so that
/// regenerating the fixtures is byte-stable.
fn pin_timestamps(path: &Path) {
    let at: chrono::DateTime<chrono::Utc> = "2026-01-01T00:00:00Z".parse().unwrap();
    let mut out = String::new();
    for line in fs::read_to_string(path).unwrap().lines() {
        let mut ex: LlmExchange = serde_json::from_str(line).unwrap();
        ex.recorded_at = at;
        out.push_str(&serde_json::to_string(&ex).unwrap());
        out.push('\n');
    }
    fs::write(path, out).unwrap();
}

fn main() {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"));
    let schema = default_schema();
    fs::write(dir.join("schema.json"), schema.to_json() + "\n").unwrap();

    let entries = corpus_entries(&dir.join("corpus")).unwrap();
    let docs = load_corpus(&entries, 1, Duration::from_secs(5)).unwrap().documents;
    let options = ExtractOptions { chunk_budget: CHUNK_BUDGET, parallelism: 1, fail_fast: true, ..ExtractOptions::default() };

    let exchanges = dir.join("exchanges.jsonl");
    fresh(&exchanges);
    let rec = Recorder::new(annotator(0), &exchanges);
    let (results, counts) = extract_corpus(&docs, &schema, &rec, &options).unwrap();
    let dis = DisambiguateOptions { parallelism: 1, ..DisambiguateOptions::default() };
    let d = disambiguate_graph(&results, &schema, &rec, &dis).unwrap();
    pin_timestamps(&exchanges);
    println!(
        "reference: {} chunks, {} nodes, {} relations -> {} canonical nodes, {} edges",
        counts.chunks,
        counts.nodes,
        counts.relations,
        d.graph.node_count(),
        d.graph.edge_count()
    );

    let cdir = dir.join("consistency");
    fs::create_dir_all(&cdir).unwrap();
    for k in 1..=RUNS {
        let path = cdir.join(format!("{}.jsonl", run_namespace(k)));
        fresh(&path);
        let (_, c) = extract_corpus(&docs, &schema, &Recorder::new(annotator(k), &path), &options).unwrap();
        pin_timestamps(&path);
        println!("run {k}: {} nodes, {} relations", c.nodes, c.relations);
    }
    case_study_graph(&dir);
}

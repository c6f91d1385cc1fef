//! Canonical property graph, case-study queries and exporters.

mod export;
mod query;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use export::{export, read_jsonl, ExportFormat, ReadError};
pub use query::{material_network, shared_suppliers, upstream_suppliers, SharedSuppliers, Subgraph, TieredSubgraph};

use crate::extract::Provenance;
use crate::schema::SchemaConfig;

/// Lowercased alphanumeric runs joined by `-`: `"Tesla, Inc."` gives `tesla-inc`.
pub fn name_key(name: &str) -> String {
    name.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("-")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalNode {
    pub canonical_id: String,
    pub label: String,
    pub display_name: String,
    /// Every merged surface name with its mention count.
    pub aliases: BTreeMap<String, usize>,
    pub properties: BTreeMap<String, String>,
    pub provenance: BTreeSet<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub source: String,
    pub rel_type: String,
    pub target: String,
    pub properties: BTreeMap<String, String>,
    pub provenance: BTreeSet<Provenance>,
}

impl Edge {
    pub fn key(&self) -> (&str, &str, &str) {
        (&self.source, &self.rel_type, &self.target)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge {from} -[{rel_type}]-> {to} references missing node `{missing}`")]
    DanglingEdge { from: String, rel_type: String, to: String, missing: String },
    #[error("node id `{0}` used more than once")]
    DuplicateNodeId(String),
    #[error("edge {0} -[{1}]-> {2} appears more than once")]
    DuplicateEdge(String, String, String),
    #[error("invalid node `{id}`: {reason}")]
    InvalidNode { id: String, reason: String },
    #[error("invalid edge {from} -[{rel_type}]-> {to}: {reason}")]
    InvalidEdge { from: String, rel_type: String, to: String, reason: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{id}` is a {found}, expected {expected}")]
    WrongNodeType { id: String, expected: String, found: String },
    #[error("depth must be at least 1")]
    InvalidDepth,
}

/// Immutable graph. Nodes are keyed by canonical id; edges are unique on
/// (source, rel_type, target) and kept sorted on that key.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<String, CanonicalNode>,
    edges: Vec<Edge>,
    schema_digest: String,
    outgoing: BTreeMap<String, Vec<usize>>,
    incoming: BTreeMap<String, Vec<usize>>,
}

/// Validates and indexes nodes and edges.
pub fn build_graph(
    nodes: Vec<CanonicalNode>,
    mut edges: Vec<Edge>,
    schema: &SchemaConfig,
) -> Result<KnowledgeGraph, GraphError> {
    let mut by_id = BTreeMap::new();
    let mut alias_owner: BTreeMap<(&str, &str), &str> = BTreeMap::new();
    for n in &nodes {
        let invalid = |reason: &str| GraphError::InvalidNode { id: n.canonical_id.clone(), reason: reason.into() };
        if n.canonical_id.is_empty() {
            return Err(invalid("empty id"));
        }
        if !schema.has_entity_type(&n.label) {
            return Err(invalid(&format!("unknown label `{}`", n.label)));
        }
        if !n.aliases.contains_key(&n.display_name) {
            return Err(invalid("display name is not an alias"));
        }
        for alias in n.aliases.keys() {
            if let Some(other) = alias_owner.insert((&n.label, alias), &n.canonical_id) {
                if other != n.canonical_id {
                    return Err(invalid(&format!("alias `{alias}` also belongs to `{other}`")));
                }
            }
        }
    }
    for n in nodes {
        let id = n.canonical_id.clone();
        if by_id.insert(id.clone(), n).is_some() {
            return Err(GraphError::DuplicateNodeId(id));
        }
    }

    edges.sort_by(|a, b| a.key().cmp(&b.key()));
    for pair in edges.windows(2) {
        if pair[0].key() == pair[1].key() {
            let (s, r, t) = pair[0].key();
            return Err(GraphError::DuplicateEdge(s.into(), r.into(), t.into()));
        }
    }
    let mut outgoing: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut incoming: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, e) in edges.iter().enumerate() {
        let invalid = |reason: String| GraphError::InvalidEdge {
            from: e.source.clone(),
            rel_type: e.rel_type.clone(),
            to: e.target.clone(),
            reason,
        };
        if !schema.has_relation_type(&e.rel_type) {
            return Err(invalid(format!("unknown relation type `{}`", e.rel_type)));
        }
        if e.source == e.target {
            return Err(invalid("self loop".into()));
        }
        for end in [&e.source, &e.target] {
            if !by_id.contains_key(end) {
                return Err(GraphError::DanglingEdge {
                    from: e.source.clone(),
                    rel_type: e.rel_type.clone(),
                    to: e.target.clone(),
                    missing: end.clone(),
                });
            }
        }
        outgoing.entry(e.source.clone()).or_default().push(i);
        incoming.entry(e.target.clone()).or_default().push(i);
    }
    Ok(KnowledgeGraph {
        nodes: by_id,
        edges,
        schema_digest: schema.digest(),
        outgoing,
        incoming,
    })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResolveError {
    #[error("no node named `{name}`{}", suggest(.suggestions))]
    NotFound { name: String, suggestions: Vec<String> },
    #[error("`{name}` matches several nodes: {}", .candidates.join(", "))]
    Ambiguous { name: String, candidates: Vec<String> },
}

fn suggest(s: &[String]) -> String {
    if s.is_empty() {
        String::new()
    } else {
        format!("; did you mean {}?", s.join(", "))
    }
}

impl KnowledgeGraph {
    pub fn node(&self, id: &str) -> Option<&CanonicalNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &CanonicalNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn schema_digest(&self) -> &str {
        &self.schema_digest
    }

    pub fn outgoing(&self, id: &str) -> impl Iterator<Item = (usize, &Edge)> {
        self.outgoing
            .get(id)
            .into_iter()
            .flatten()
            .map(|&i| (i, &self.edges[i]))
    }

    pub fn incoming(&self, id: &str) -> impl Iterator<Item = (usize, &Edge)> {
        self.incoming
            .get(id)
            .into_iter()
            .flatten()
            .map(|&i| (i, &self.edges[i]))
    }

    /// Node counts per label.
    pub fn label_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for n in self.nodes.values() {
            *out.entry(n.label.clone()).or_default() += 1;
        }
        out
    }

    /// SHA-256 of the JSON-lines export.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        export(self, ExportFormat::Jsonl, &mut buf).expect("writing to memory");
        hex::encode(Sha256::digest(&buf))
    }

    pub(crate) fn require(&self, id: &str, label: &str) -> Result<&CanonicalNode, GraphError> {
        let n = self.nodes.get(id).ok_or_else(|| GraphError::UnknownNode(id.to_string()))?;
        if n.label != label {
            return Err(GraphError::WrongNodeType {
                id: id.to_string(),
                expected: label.to_string(),
                found: n.label.clone(),
            });
        }
        Ok(n)
    }

    /// Finds a node by canonical id, exact alias, or unique case- and
    /// punctuation-insensitive alias match, optionally within one label.
    pub fn resolve_name(&self, name: &str, label: Option<&str>) -> Result<String, ResolveError> {
        let in_label = |n: &&CanonicalNode| label.is_none_or(|l| n.label == l);
        if let Some(n) = self.nodes.get(name).filter(in_label) {
            return Ok(n.canonical_id.clone());
        }
        let pick = |matches: Vec<&CanonicalNode>| -> Option<Result<String, ResolveError>> {
            match matches.as_slice() {
                [] => None,
                [one] => Some(Ok(one.canonical_id.clone())),
                many => Some(Err(ResolveError::Ambiguous {
                    name: name.to_string(),
                    candidates: many.iter().map(|n| n.canonical_id.clone()).collect(),
                })),
            }
        };
        let exact: Vec<_> = self.nodes.values().filter(in_label).filter(|n| n.aliases.contains_key(name)).collect();
        if let Some(r) = pick(exact) {
            return r;
        }
        let key = name_key(name);
        let loose: Vec<_> = self
            .nodes
            .values()
            .filter(in_label)
            .filter(|n| !key.is_empty() && n.aliases.keys().any(|a| name_key(a) == key))
            .collect();
        if let Some(r) = pick(loose) {
            return r;
        }
        let mut suggestions: Vec<String> = self
            .nodes
            .values()
            .filter(in_label)
            .filter(|n| {
                !key.is_empty()
                    && n.aliases.keys().any(|a| {
                        let ak = name_key(a);
                        ak.contains(&key) || (!ak.is_empty() && key.contains(&ak))
                    })
            })
            .map(|n| n.display_name.clone())
            .collect();
        suggestions.sort();
        suggestions.dedup();
        suggestions.truncate(5);
        Err(ResolveError::NotFound { name: name.to_string(), suggestions })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::schema::default_schema;

    pub(crate) fn node(id: &str, label: &str, name: &str) -> CanonicalNode {
        CanonicalNode {
            canonical_id: id.into(),
            label: label.into(),
            display_name: name.into(),
            aliases: BTreeMap::from([(name.to_string(), 1)]),
            properties: BTreeMap::new(),
            provenance: BTreeSet::new(),
        }
    }

    pub(crate) fn edge(s: &str, r: &str, t: &str) -> Edge {
        Edge {
            source: s.into(),
            rel_type: r.into(),
            target: t.into(),
            properties: BTreeMap::new(),
            provenance: BTreeSet::new(),
        }
    }

    #[test]
    fn name_keys() {
        assert_eq!(name_key("Tesla, Inc."), "tesla-inc");
        assert_eq!(name_key("  TESLA inc "), "tesla-inc");
        assert_eq!(name_key("---"), "");
        assert_eq!(name_key("Cauchari-Olaroz"), "cauchari-olaroz");
    }

    #[test]
    fn two_nodes_one_edge() {
        let g = build_graph(
            vec![node("c", "Company", "CATL"), node("t", "Company", "Tesla")],
            vec![edge("c", "suppliesTo", "t")],
            &default_schema(),
        )
        .unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (2, 1));
        assert_eq!(g.outgoing("c").count(), 1);
        assert_eq!(g.incoming("t").count(), 1);
        assert_eq!(g.incoming("c").count(), 0);
    }

    #[test]
    fn build_errors() {
        let s = default_schema();
        let two = || vec![node("c", "Company", "CATL"), node("t", "Company", "Tesla")];
        assert!(matches!(
            build_graph(two(), vec![edge("c", "suppliesTo", "x")], &s),
            Err(GraphError::DanglingEdge { missing, .. }) if missing == "x"
        ));
        let mut dup = two();
        dup.push(node("c", "Company", "Other"));
        assert_eq!(build_graph(dup, vec![], &s), Err(GraphError::DuplicateNodeId("c".into())));
        assert!(matches!(
            build_graph(two(), vec![edge("c", "suppliesTo", "t"), edge("c", "suppliesTo", "t")], &s),
            Err(GraphError::DuplicateEdge(..))
        ));
        assert!(matches!(
            build_graph(two(), vec![edge("c", "likes", "t")], &s),
            Err(GraphError::InvalidEdge { .. })
        ));
        assert!(matches!(
            build_graph(two(), vec![edge("c", "owns", "c")], &s),
            Err(GraphError::InvalidEdge { .. })
        ));
        assert!(matches!(
            build_graph(vec![node("v", "Vehicle", "X")], vec![], &s),
            Err(GraphError::InvalidNode { .. })
        ));
        let mut bad = node("a", "Company", "A");
        bad.display_name = "B".into();
        assert!(matches!(build_graph(vec![bad], vec![], &s), Err(GraphError::InvalidNode { .. })));
        let shared = vec![node("a", "Company", "Same"), node("b", "Company", "Same")];
        assert!(matches!(build_graph(shared, vec![], &s), Err(GraphError::InvalidNode { .. })));
    }

    #[test]
    fn resolve() {
        let mut tesla = node("company:tesla", "Company", "Tesla");
        tesla.aliases.insert("Tesla, Inc.".into(), 1);
        let g = build_graph(
            vec![
                tesla,
                node("company:lg-chem", "Company", "LG Chem"),
                node("company:lg-energy-solution", "Company", "LG Energy Solution"),
                node("material:lithium", "Material", "Lithium"),
                node("product:lithium", "Product", "Lithium"),
            ],
            vec![],
            &default_schema(),
        )
        .unwrap();
        assert_eq!(g.resolve_name("Tesla", None).unwrap(), "company:tesla");
        assert_eq!(g.resolve_name("company:tesla", None).unwrap(), "company:tesla");
        assert_eq!(g.resolve_name("tesla inc", None).unwrap(), "company:tesla");
        assert_eq!(g.resolve_name("lg chem", Some("Company")).unwrap(), "company:lg-chem");
        assert!(matches!(g.resolve_name("Lithium", None), Err(ResolveError::Ambiguous { .. })));
        assert_eq!(g.resolve_name("Lithium", Some("Material")).unwrap(), "material:lithium");
        match g.resolve_name("LG", None) {
            Err(ResolveError::NotFound { suggestions, .. }) => {
                assert_eq!(suggestions, ["LG Chem", "LG Energy Solution"])
            }
            other => panic!("{other:?}"),
        }
    }
}

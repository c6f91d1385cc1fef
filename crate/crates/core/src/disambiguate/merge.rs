use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use super::{DisambiguationError, GroupAssignment};
use crate::extract::{DiagCode, Diagnostic, ExtractedNode, ExtractedRelation, NodeKey, Provenance, Severity};
use crate::graph::{build_graph, name_key, CanonicalNode, Edge, GraphError, KnowledgeGraph};
use crate::schema::SchemaConfig;

/// (label, surface name) → canonical id.
pub type AliasMap = BTreeMap<NodeKey, String>;

/// Display-name preference: higher count, then longer, then lexicographically
/// smaller. `Less` means `a` is preferred.
pub(crate) fn display_order(a: (&str, usize), b: (&str, usize)) -> Ordering {
    b.1.cmp(&a.1)
        .then_with(|| b.0.chars().count().cmp(&a.0.chars().count()))
        .then_with(|| a.0.cmp(b.0))
}

/// Unit of merging: an extracted node, or an existing canonical node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    pub label: String,
    pub aliases: BTreeMap<String, usize>,
    pub properties: BTreeMap<String, String>,
    pub provenance: BTreeSet<Provenance>,
}

impl From<&ExtractedNode> for Fragment {
    fn from(n: &ExtractedNode) -> Self {
        Fragment {
            label: n.label.clone(),
            aliases: BTreeMap::from([(n.name.clone(), 1)]),
            properties: n.properties.clone(),
            provenance: BTreeSet::from([n.provenance.clone()]),
        }
    }
}

impl From<&CanonicalNode> for Fragment {
    fn from(n: &CanonicalNode) -> Self {
        Fragment {
            label: n.label.clone(),
            aliases: n.aliases.clone(),
            properties: n.properties.clone(),
            provenance: n.provenance.clone(),
        }
    }
}

/// Merges property maps. A key with one distinct value keeps it; a key with
/// several keeps each value under `key@doc:chunk:run` of the earliest source
/// carrying it.
fn merge_properties<'a>(items: impl IntoIterator<Item = (&'a BTreeMap<String, String>, Option<&'a Provenance>)>) -> BTreeMap<String, String> {
    let mut values: BTreeMap<&str, Vec<(&str, Option<&Provenance>)>> = BTreeMap::new();
    for (props, prov) in items {
        for (k, v) in props {
            let entry = values.entry(k).or_default();
            match entry.iter_mut().find(|(val, _)| *val == v.as_str()) {
                Some((_, p)) => {
                    if prov.is_some() && (p.is_none() || prov < *p) {
                        *p = prov;
                    }
                }
                None => entry.push((v, prov)),
            }
        }
    }
    let mut out = BTreeMap::new();
    for (key, vals) in values {
        if let [(v, _)] = vals.as_slice() {
            out.insert(key.to_string(), v.to_string());
            continue;
        }
        for (v, prov) in vals {
            let base = match prov {
                Some(p) => format!("{key}@{p}"),
                None => format!("{key}@unknown"),
            };
            let mut k = base.clone();
            let mut n = 2;
            while out.contains_key(&k) {
                k = format!("{base}#{n}");
                n += 1;
            }
            out.insert(k, v.to_string());
        }
    }
    out
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Unions fragments whose aliases share a group and builds one canonical
/// node per union. `group_of` maps (label, alias) to a group id.
pub fn merge_fragments(
    fragments: &[Fragment],
    group_of: impl Fn(&str, &str) -> Option<u64>,
) -> Result<(Vec<CanonicalNode>, AliasMap), DisambiguationError> {
    let mut parent: Vec<usize> = (0..fragments.len()).collect();
    let mut first: BTreeMap<(&str, u64), usize> = BTreeMap::new();
    for (i, f) in fragments.iter().enumerate() {
        for alias in f.aliases.keys() {
            let gid = group_of(&f.label, alias).ok_or_else(|| DisambiguationError::UncoveredNode {
                label: f.label.clone(),
                name: alias.clone(),
            })?;
            match first.get(&(f.label.as_str(), gid)) {
                Some(&j) => {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
                None => {
                    first.insert((&f.label, gid), i);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..fragments.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }

    let mut nodes = Vec::with_capacity(groups.len());
    let mut used_ids = BTreeSet::new();
    let mut alias_map = AliasMap::new();
    for members in groups.values() {
        let label = fragments[members[0]].label.clone();
        let mut aliases: BTreeMap<String, usize> = BTreeMap::new();
        let mut provenance = BTreeSet::new();
        for &m in members {
            for (a, c) in &fragments[m].aliases {
                *aliases.entry(a.clone()).or_default() += c;
            }
            provenance.extend(fragments[m].provenance.iter().cloned());
        }
        let properties = merge_properties(members.iter().map(|&m| (&fragments[m].properties, fragments[m].provenance.first())));
        let display_name = aliases
            .iter()
            .min_by(|a, b| display_order((a.0, *a.1), (b.0, *b.1)))
            .map(|(a, _)| a.clone())
            .expect("fragments carry at least one alias");
        let key = name_key(&display_name);
        let base = format!("{}:{}", label.to_lowercase(), if key.is_empty() { "node" } else { &key });
        let mut canonical_id = base.clone();
        let mut n = 2;
        while !used_ids.insert(canonical_id.clone()) {
            canonical_id = format!("{base}~{n}");
            n += 1;
        }
        for a in aliases.keys() {
            alias_map.insert(NodeKey::new(&label, a), canonical_id.clone());
        }
        nodes.push(CanonicalNode { canonical_id, label, display_name, aliases, properties, provenance });
    }
    nodes.sort_by(|a, b| a.canonical_id.cmp(&b.canonical_id));
    Ok((nodes, alias_map))
}

/// Merges extracted nodes under per-label group assignments.
pub fn merge_nodes(
    nodes: &[ExtractedNode],
    assignments: &BTreeMap<String, GroupAssignment>,
) -> Result<(Vec<CanonicalNode>, AliasMap), DisambiguationError> {
    let lookup = lookup_table(assignments);
    let fragments: Vec<Fragment> = nodes.iter().map(Fragment::from).collect();
    merge_fragments(&fragments, |label, name| lookup.get(&(label, name)).copied())
}

fn lookup_table(assignments: &BTreeMap<String, GroupAssignment>) -> BTreeMap<(&str, &str), u64> {
    let mut lookup = BTreeMap::new();
    for a in assignments.values() {
        for (name, &gid) in a.names.iter().zip(&a.group_ids) {
            lookup.insert((a.label.as_str(), name.as_str()), gid);
        }
    }
    lookup
}

struct EdgeDraft<'a> {
    properties: Vec<(&'a BTreeMap<String, String>, Option<&'a Provenance>)>,
    provenance: BTreeSet<Provenance>,
}

fn collapse<'a>(
    items: impl IntoIterator<Item = (String, &'a str, String, &'a BTreeMap<String, String>, &'a BTreeSet<Provenance>)>,
) -> (Vec<Edge>, Vec<Diagnostic>) {
    let mut drafts: BTreeMap<(String, String, String), EdgeDraft<'a>> = BTreeMap::new();
    let mut diags = Vec::new();
    for (source, rel_type, target, props, prov) in items {
        if source == target {
            diags.push(Diagnostic::new(
                Severity::Info,
                DiagCode::MergedSelfLoop,
                format!("{source} -[{rel_type}]-> {target} became a self loop after merging; dropped"),
                None,
            ));
            continue;
        }
        let d = drafts
            .entry((source, rel_type.to_string(), target))
            .or_insert_with(|| EdgeDraft { properties: Vec::new(), provenance: BTreeSet::new() });
        d.properties.push((props, prov.first()));
        d.provenance.extend(prov.iter().cloned());
    }
    let edges = drafts
        .into_iter()
        .map(|((source, rel_type, target), d)| Edge {
            source,
            rel_type,
            target,
            properties: merge_properties(d.properties),
            provenance: d.provenance,
        })
        .collect();
    (edges, diags)
}

/// Replaces relation endpoints with canonical ids and collapses duplicates.
pub fn rewrite_edges(
    relations: &[ExtractedRelation],
    alias_map: &AliasMap,
) -> Result<(Vec<Edge>, Vec<Diagnostic>), DisambiguationError> {
    let lookup = |k: &NodeKey| {
        alias_map.get(k).cloned().ok_or_else(|| DisambiguationError::UnmappedEndpoint {
            label: k.label.clone(),
            name: k.name.clone(),
        })
    };
    let provs: Vec<BTreeSet<Provenance>> = relations.iter().map(|r| BTreeSet::from([r.provenance.clone()])).collect();
    let mut items = Vec::with_capacity(relations.len());
    for (r, prov) in relations.iter().zip(&provs) {
        items.push((lookup(&r.source_key)?, r.rel_type.as_str(), lookup(&r.target_key)?, &r.properties, prov));
    }
    Ok(collapse(items))
}

/// Re-merges an existing graph's nodes under new assignments keyed by alias.
pub fn merge_graph(
    g: &KnowledgeGraph,
    assignments: &BTreeMap<String, GroupAssignment>,
    schema: &SchemaConfig,
) -> Result<(KnowledgeGraph, Vec<Diagnostic>), DisambiguationError> {
    let lookup = lookup_table(assignments);
    let fragments: Vec<Fragment> = g.nodes().map(Fragment::from).collect();
    let (nodes, alias_map) = merge_fragments(&fragments, |label, name| lookup.get(&(label, name)).copied())?;
    let new_id = |old: &str| -> Result<String, DisambiguationError> {
        let n = g.node(old).ok_or_else(|| GraphError::UnknownNode(old.to_string()))?;
        Ok(alias_map[&NodeKey::new(&n.label, &n.display_name)].clone())
    };
    let mut items = Vec::with_capacity(g.edge_count());
    for e in g.edges() {
        items.push((new_id(&e.source)?, e.rel_type.as_str(), new_id(&e.target)?, &e.properties, &e.provenance));
    }
    let (edges, diags) = collapse(items);
    Ok((build_graph(nodes, edges, schema)?, diags))
}

/// Every alias of every node in its own group, per label.
pub fn identity_assignments(g: &KnowledgeGraph) -> BTreeMap<String, GroupAssignment> {
    let mut out: BTreeMap<String, GroupAssignment> = BTreeMap::new();
    for n in g.nodes() {
        let a = out
            .entry(n.label.clone())
            .or_insert_with(|| GroupAssignment { label: n.label.clone(), names: Vec::new(), group_ids: Vec::new() });
        let gid = a.group_ids.last().copied().unwrap_or(0) + 1;
        for alias in n.aliases.keys() {
            a.names.push(alias.clone());
            a.group_ids.push(gid);
        }
    }
    out
}

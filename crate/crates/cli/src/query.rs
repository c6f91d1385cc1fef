use std::fmt::Write as _;

use clap::ValueEnum;

use skg_core::graph::{material_network, shared_suppliers, upstream_suppliers, Edge, KnowledgeGraph};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QueryKind {
    /// Suppliers up to --depth tiers above a company
    Upstream,
    /// Direct suppliers common to --a and --b
    Shared,
    /// Producers of a material with their sites and owners
    Material,
}

fn show(g: &KnowledgeGraph, id: &str) -> String {
    match g.node(id) {
        Some(n) => format!("{} [{}] ({id})", n.display_name, n.label),
        None => id.to_string(),
    }
}

fn edge_lines(out: &mut String, edges: &[Edge]) {
    if edges.is_empty() {
        return;
    }
    out.push_str("edges:\n");
    for e in edges {
        let _ = writeln!(out, "  {} -[{}]-> {}", e.source, e.rel_type, e.target);
    }
}

fn resolve(g: &KnowledgeGraph, name: &str, label: &str) -> Result<String, CliError> {
    g.resolve_name(name, Some(label)).map_err(|e| CliError::Pipeline(e.to_string()))
}

pub fn run(g: &KnowledgeGraph, kind: QueryKind, a: &str, b: Option<&str>, depth: usize, as_json: bool) -> Result<String, CliError> {
    let fail = |e: skg_core::graph::GraphError| CliError::Pipeline(e.to_string());
    let mut out = String::new();
    match kind {
        QueryKind::Upstream => {
            let id = resolve(g, a, "Company")?;
            let t = upstream_suppliers(g, &id, depth).map_err(fail)?;
            if as_json {
                return Ok(serde_json::to_string_pretty(&t).expect("query serializes") + "\n");
            }
            let _ = writeln!(out, "upstream of {} to depth {depth}", show(g, &id));
            for (tier, ids) in t.tiers.iter().filter(|(&k, _)| k > 0) {
                for i in ids {
                    let _ = writeln!(out, "  tier {tier}: {}", show(g, i));
                }
            }
            for i in &t.enrichment {
                let _ = writeln!(out, "  linked: {}", show(g, i));
            }
            edge_lines(&mut out, &t.edges);
        }
        QueryKind::Shared => {
            let b = b.ok_or_else(|| CliError::Config("--kind shared needs --b".into()))?;
            let (ia, ib) = (resolve(g, a, "Company")?, resolve(g, b, "Company")?);
            let s = shared_suppliers(g, &ia, &ib).map_err(fail)?;
            if as_json {
                return Ok(serde_json::to_string_pretty(&s).expect("query serializes") + "\n");
            }
            let _ = writeln!(out, "shared suppliers of {} and {}", show(g, &ia), show(g, &ib));
            if s.suppliers.is_empty() {
                out.push_str("  none\n");
            }
            for i in &s.suppliers {
                let _ = writeln!(out, "  {}", show(g, i));
            }
            edge_lines(&mut out, &s.edges);
        }
        QueryKind::Material => {
            let id = resolve(g, a, "Material")?;
            let s = material_network(g, &id).map_err(fail)?;
            if as_json {
                return Ok(serde_json::to_string_pretty(&s).expect("query serializes") + "\n");
            }
            let _ = writeln!(out, "network of {}", show(g, &id));
            for i in &s.nodes {
                let _ = writeln!(out, "  {}", show(g, i));
            }
            edge_lines(&mut out, &s.edges);
        }
    }
    Ok(out)
}

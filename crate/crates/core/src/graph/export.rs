use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{build_graph, CanonicalNode, Edge, GraphError, KnowledgeGraph};
use crate::schema::SchemaConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Cypher,
    Graphml,
    Dot,
    Jsonl,
}

impl ExportFormat {
    pub const ALL: [ExportFormat; 4] = [ExportFormat::Cypher, ExportFormat::Graphml, ExportFormat::Dot, ExportFormat::Jsonl];

    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Cypher => "cypher",
            ExportFormat::Graphml => "graphml",
            ExportFormat::Dot => "dot",
            ExportFormat::Jsonl => "jsonl",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cypher" => Ok(ExportFormat::Cypher),
            "graphml" => Ok(ExportFormat::Graphml),
            "dot" => Ok(ExportFormat::Dot),
            "jsonl" => Ok(ExportFormat::Jsonl),
            other => Err(format!("unknown export format `{other}` (expected cypher, graphml, dot or jsonl)")),
        }
    }
}

/// Nodes in export order: label, display name, id.
fn sorted_nodes(g: &KnowledgeGraph) -> Vec<&CanonicalNode> {
    let mut nodes: Vec<&CanonicalNode> = g.nodes().collect();
    nodes.sort_by(|a, b| (&a.label, &a.display_name, &a.canonical_id).cmp(&(&b.label, &b.display_name, &b.canonical_id)));
    nodes
}

/// Writes the graph in `format`. Output is a pure function of the graph.
pub fn export<W: Write>(g: &KnowledgeGraph, format: ExportFormat, mut sink: W) -> io::Result<()> {
    let text = match format {
        ExportFormat::Cypher => cypher(g),
        ExportFormat::Graphml => graphml(g),
        ExportFormat::Dot => dot(g),
        ExportFormat::Jsonl => jsonl(g),
    };
    sink.write_all(text.as_bytes())?;
    sink.flush()
}

fn cypher_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c.is_control() => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

fn cypher_ident(s: &str) -> String {
    let plain = s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if plain {
        s.to_string()
    } else {
        format!("`{}`", s.replace('`', "``"))
    }
}

fn cypher_match(var: &str, n: &CanonicalNode) -> String {
    format!("({var}:{} {{name: {}}})", cypher_ident(&n.label), cypher_string(&n.display_name))
}

fn cypher_sets(var: &str, props: &BTreeMap<String, String>, extra: &[(&str, String)]) -> String {
    let mut parts: Vec<String> = extra.iter().map(|(k, v)| format!("{var}.{} = {v}", cypher_ident(k))).collect();
    parts.extend(props.iter().map(|(k, v)| format!("{var}.{} = {}", cypher_ident(k), cypher_string(v))));
    if parts.is_empty() {
        String::new()
    } else {
        format!(" SET {}", parts.join(", "))
    }
}

fn cypher(g: &KnowledgeGraph) -> String {
    let mut out = String::new();
    for n in sorted_nodes(g) {
        let aliases: Vec<String> = n.aliases.keys().map(|a| cypher_string(a)).collect();
        let extra = [("aliases", format!("[{}]", aliases.join(", "))), ("canonical_id", cypher_string(&n.canonical_id))];
        let _ = writeln!(out, "MERGE {}{};", cypher_match("n", n), cypher_sets("n", &n.properties, &extra));
    }
    for e in g.edges() {
        let (Some(s), Some(t)) = (g.node(&e.source), g.node(&e.target)) else {
            continue;
        };
        let _ = writeln!(
            out,
            "MERGE {} MERGE {} MERGE (a)-[r:{}]->(b){};",
            cypher_match("a", s),
            cypher_match("b", t),
            cypher_ident(&e.rel_type),
            cypher_sets("r", &e.properties, &[])
        );
    }
    out
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\n' | '\t' | '\r' => {
                let _ = write!(out, "&#{};", c as u32);
            }
            c if (c as u32) < 0x20 => out.push('\u{fffd}'),
            c => out.push(c),
        }
    }
    out
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

fn graphml(g: &KnowledgeGraph) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(
        "<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\" \
         xmlns:xsi=\"http://www.w3.org/2001/XMLSchema-instance\" \
         xsi:schemaLocation=\"http://graphml.graphdrawing.org/xmlns http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd\">\n",
    );
    for (id, target, name) in [
        ("label", "node", "label"),
        ("display_name", "node", "display_name"),
        ("aliases", "node", "aliases"),
        ("node_properties", "node", "properties"),
        ("node_provenance", "node", "provenance"),
        ("rel_type", "edge", "rel_type"),
        ("edge_properties", "edge", "properties"),
        ("edge_provenance", "edge", "provenance"),
    ] {
        let _ = writeln!(out, "  <key id=\"{id}\" for=\"{target}\" attr.name=\"{name}\" attr.type=\"string\"/>");
    }
    out.push_str("  <graph id=\"G\" edgedefault=\"directed\">\n");
    for n in sorted_nodes(g) {
        let _ = writeln!(out, "    <node id=\"{}\">", xml_escape(&n.canonical_id));
        for (key, value) in [
            ("label", n.label.clone()),
            ("display_name", n.display_name.clone()),
            ("aliases", json(&n.aliases)),
            ("node_properties", json(&n.properties)),
            ("node_provenance", json(&n.provenance)),
        ] {
            let _ = writeln!(out, "      <data key=\"{key}\">{}</data>", xml_escape(&value));
        }
        out.push_str("    </node>\n");
    }
    for (i, e) in g.edges().iter().enumerate() {
        let _ = writeln!(
            out,
            "    <edge id=\"e{i}\" source=\"{}\" target=\"{}\">",
            xml_escape(&e.source),
            xml_escape(&e.target)
        );
        for (key, value) in [
            ("rel_type", e.rel_type.clone()),
            ("edge_properties", json(&e.properties)),
            ("edge_provenance", json(&e.provenance)),
        ] {
            let _ = writeln!(out, "      <data key=\"{key}\">{}</data>", xml_escape(&value));
        }
        out.push_str("    </edge>\n");
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

fn dot_string(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c if c.is_control() => out.push(' '),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn dot(g: &KnowledgeGraph) -> String {
    let mut out = String::from("digraph knowledge_graph {\n  rankdir=LR;\n  node [shape=box];\n");
    for n in sorted_nodes(g) {
        let _ = writeln!(
            out,
            "  {} [label={}, type={}];",
            dot_string(&n.canonical_id),
            dot_string(&format!("{}\n({})", n.display_name, n.label)),
            dot_string(&n.label)
        );
    }
    for e in g.edges() {
        let _ = writeln!(
            out,
            "  {} -> {} [label={}];",
            dot_string(&e.source),
            dot_string(&e.target),
            dot_string(&e.rel_type)
        );
    }
    out.push_str("}\n");
    out
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Node(CanonicalNode),
    Edge(Edge),
}

fn jsonl(g: &KnowledgeGraph) -> String {
    let mut out = String::new();
    for n in sorted_nodes(g) {
        out.push_str(&json(&Record::Node(n.clone())));
        out.push('\n');
    }
    for e in g.edges() {
        out.push_str(&json(&Record::Edge(e.clone())));
        out.push('\n');
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum ReadError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Loads a graph from its JSON-lines export.
pub fn read_jsonl(text: &str, schema: &SchemaConfig) -> Result<KnowledgeGraph, ReadError> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Record>(line) {
            Ok(Record::Node(n)) => nodes.push(n),
            Ok(Record::Edge(e)) => edges.push(e),
            Err(e) => return Err(ReadError::Malformed { line: i + 1, message: e.to_string() }),
        }
    }
    Ok(build_graph(nodes, edges, schema)?)
}

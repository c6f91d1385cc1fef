//! Output-contract parsing with a repair pass.

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use super::{
    DiagCode, Diagnostic, ExtractError, ExtractedNode, ExtractedRelation, ExtractionResult,
    NodeKey, Provenance, Severity,
};
use crate::schema::{normalize_label, LabelKind, SchemaConfig};

/// Opening braces tried by the repair pass before giving up.
const MAX_CANDIDATES: usize = 64;
const FRAGMENT_LIMIT: usize = 200;

/// Parses one model response against the output contract.
pub fn parse_extraction(
    raw: &str,
    schema: &SchemaConfig,
    provenance: &Provenance,
) -> Result<ExtractionResult, ExtractError> {
    if raw.trim().is_empty() {
        return Err(ExtractError::EmptyResponse);
    }
    let mut result = ExtractionResult::empty(provenance);
    let (nodes, relationships) = match strict(raw) {
        Ok(parts) => parts,
        Err(strict_reason) => match repair(raw) {
            Some((parts, code)) => {
                result.diagnostics.push(Diagnostic::new(
                    Severity::Info,
                    code,
                    "response repaired before parsing",
                    None,
                ));
                parts
            }
            None => {
                return Err(ExtractError::Unparseable {
                    reason: strict_reason,
                    raw: raw.to_string(),
                })
            }
        },
    };
    build(&mut result, schema, provenance, &nodes, &relationships);
    Ok(result)
}

type Parts = (Vec<Value>, Vec<Value>);

fn strict(raw: &str) -> Result<Parts, String> {
    let v: Value = serde_json::from_str(raw.trim()).map_err(|e| e.to_string())?;
    contract(v)
}

fn contract(v: Value) -> Result<Parts, String> {
    let Value::Object(mut obj) = v else {
        return Err("top level is not a JSON object".into());
    };
    let mut take = |key: &str| match obj.remove(key) {
        Some(Value::Array(items)) => Ok(items),
        Some(_) => Err(format!("`{key}` is not an array")),
        None => Err(format!("missing `{key}`")),
    };
    let nodes = take("nodes")?;
    let relationships = take("relationships")?;
    Ok((nodes, relationships))
}

/// Strips fences and surrounding prose, then tries each balanced `{...}`
/// span in order of its opening brace.
fn repair(raw: &str) -> Option<(Parts, DiagCode)> {
    let fenced = raw.contains("```");
    let text = if fenced { strip_fences(raw) } else { raw.to_string() };
    let code = if fenced { DiagCode::RepairedFencing } else { DiagCode::RepairedProse };
    if let Ok(parts) = strict(&text) {
        return Some((parts, code));
    }
    let opens = text
        .char_indices()
        .filter(|&(_, c)| c == '{')
        .map(|(i, _)| i)
        .take(MAX_CANDIDATES);
    for start in opens {
        let Some(end) = balanced_end(&text, start) else {
            continue;
        };
        let candidate = &text[start..end];
        if let Ok(parts) = strict(candidate) {
            return Some((parts, code));
        }
        let relaxed = drop_trailing_commas(candidate);
        if relaxed != candidate {
            if let Ok(parts) = strict(&relaxed) {
                return Some((parts, DiagCode::RepairedSyntax));
            }
        }
    }
    None
}

/// Removes fence lines (```` ``` ```` with an optional language tag).
fn strip_fences(raw: &str) -> String {
    raw.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Byte index just past the brace matching the one at `start`, skipping
/// braces inside JSON strings.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, b) in text.bytes().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

fn drop_trailing_commas(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let chars: Vec<char> = text.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            out.push(c);
            continue;
        }
        if c == '"' {
            in_string = true;
        }
        if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

fn fragment(v: &Value) -> Option<String> {
    let text = v.to_string();
    Some(text.chars().take(FRAGMENT_LIMIT).collect())
}

/// Collapses internal whitespace and trims.
pub(crate) fn clean_name(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn properties(
    item: &Map<String, Value>,
    diags: &mut Vec<Diagnostic>,
    whole: &Value,
) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    match item.get("properties") {
        None | Some(Value::Null) => {}
        Some(Value::Object(props)) => {
            for (k, v) in props {
                let key = k.trim();
                if key.is_empty() {
                    continue;
                }
                let value = match v {
                    Value::Null => continue,
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                out.insert(key.to_string(), value);
            }
        }
        Some(_) => diags.push(Diagnostic::new(
            Severity::Warning,
            DiagCode::MalformedItem,
            "`properties` is not an object; ignored",
            fragment(whole),
        )),
    }
    out
}

fn string_field<'a>(item: &'a Map<String, Value>, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| item.get(*k).and_then(Value::as_str))
}

fn node_label(raw: &str, schema: &SchemaConfig) -> Option<String> {
    normalize_label(raw, LabelKind::Node)
        .ok()
        .filter(|l| schema.has_entity_type(l))
}

fn build(
    result: &mut ExtractionResult,
    schema: &SchemaConfig,
    provenance: &Provenance,
    nodes: &[Value],
    relationships: &[Value],
) {
    let diags = &mut result.diagnostics;
    // (label, name) -> index into result.nodes
    let mut index: BTreeMap<NodeKey, usize> = BTreeMap::new();

    for item in nodes {
        let Some(obj) = item.as_object() else {
            diags.push(Diagnostic::new(Severity::Warning, DiagCode::MalformedItem, "node is not an object", fragment(item)));
            continue;
        };
        let (Some(raw_label), Some(raw_name)) = (string_field(obj, &["label"]), string_field(obj, &["name"])) else {
            diags.push(Diagnostic::new(
                Severity::Warning,
                DiagCode::MalformedItem,
                "node needs string `label` and `name`",
                fragment(item),
            ));
            continue;
        };
        let Some(label) = node_label(raw_label, schema) else {
            diags.push(Diagnostic::new(
                Severity::Warning,
                DiagCode::UnknownLabel,
                format!("unknown entity label `{raw_label}`"),
                fragment(item),
            ));
            continue;
        };
        let name = clean_name(raw_name);
        if name.is_empty() {
            diags.push(Diagnostic::new(Severity::Warning, DiagCode::EmptyName, "node has an empty name", fragment(item)));
            continue;
        }
        let props = properties(obj, diags, item);
        let key = NodeKey::new(&label, &name);
        if let Some(&i) = index.get(&key) {
            let existing = &mut result.nodes[i].properties;
            for (k, v) in props {
                existing.entry(k).or_insert(v);
            }
            diags.push(Diagnostic::new(
                Severity::Info,
                DiagCode::DuplicateNode,
                format!("node {key} listed more than once; merged"),
                fragment(item),
            ));
            continue;
        }
        index.insert(key, result.nodes.len());
        result.nodes.push(ExtractedNode {
            label,
            name,
            properties: props,
            provenance: provenance.clone(),
        });
    }

    let mut seen_relations: BTreeMap<(NodeKey, String, NodeKey), usize> = BTreeMap::new();
    for item in relationships {
        let Some(obj) = item.as_object() else {
            diags.push(Diagnostic::new(Severity::Warning, DiagCode::MalformedItem, "relationship is not an object", fragment(item)));
            continue;
        };
        let (Some(raw_source), Some(raw_target), Some(raw_type)) = (
            string_field(obj, &["source"]),
            string_field(obj, &["target"]),
            string_field(obj, &["type"]),
        ) else {
            diags.push(Diagnostic::new(
                Severity::Warning,
                DiagCode::MalformedItem,
                "relationship needs string `source`, `target` and `type`",
                fragment(item),
            ));
            continue;
        };
        let rel_type = match normalize_label(raw_type, LabelKind::Relation) {
            Ok(t) if schema.has_relation_type(&t) => t,
            _ => {
                diags.push(Diagnostic::new(
                    Severity::Warning,
                    DiagCode::UnknownRelType,
                    format!("unknown relationship type `{raw_type}`"),
                    fragment(item),
                ));
                continue;
            }
        };
        let source_name = clean_name(raw_source);
        let target_name = clean_name(raw_target);
        if source_name.is_empty() || target_name.is_empty() {
            diags.push(Diagnostic::new(Severity::Warning, DiagCode::EmptyName, "relationship endpoint has an empty name", fragment(item)));
            continue;
        }

        let given = |field: &str| -> Result<Option<String>, String> {
            match string_field(obj, &[field]) {
                None => Ok(None),
                Some(raw) => node_label(raw, schema).map(Some).ok_or_else(|| raw.to_string()),
            }
        };
        let (source_given, target_given) = match (given("source_label"), given("target_label")) {
            (Ok(s), Ok(t)) => (s, t),
            (Err(bad), _) | (_, Err(bad)) => {
                diags.push(Diagnostic::new(
                    Severity::Warning,
                    DiagCode::UnknownLabel,
                    format!("unknown endpoint label `{bad}`"),
                    fragment(item),
                ));
                continue;
            }
        };

        let rel_def = schema.relation_type(&rel_type).expect("checked above");
        let candidates = |name: &str, given: &Option<String>, role: Role, other: Option<&str>| -> Vec<String> {
            if let Some(l) = given {
                return vec![l.clone()];
            }
            let listed: Vec<String> = index
                .keys()
                .filter(|k| k.name == name)
                .map(|k| k.label.clone())
                .collect();
            let allowed = |l: &str| match &rel_def.endpoint_constraints {
                None => true,
                Some(pairs) => pairs.iter().any(|c| {
                    let (mine, theirs) = match role {
                        Role::Source => (&c.source, &c.target),
                        Role::Target => (&c.target, &c.source),
                    };
                    mine == l && other.is_none_or(|o| o == theirs)
                }),
            };
            if listed.len() == 1 {
                return listed;
            }
            if !listed.is_empty() {
                return listed.into_iter().filter(|l| allowed(l)).collect();
            }
            schema
                .entity_types
                .iter()
                .map(|t| t.name.clone())
                .filter(|l| rel_def.endpoint_constraints.is_some() && allowed(l))
                .collect()
        };

        let mut source_opts = candidates(&source_name, &source_given, Role::Source, target_given.as_deref());
        let mut target_opts = candidates(&target_name, &target_given, Role::Target, source_given.as_deref());
        // a resolved side narrows the other
        if source_opts.len() == 1 && target_opts.len() != 1 {
            target_opts = candidates(&target_name, &target_given, Role::Target, Some(&source_opts[0]));
        } else if target_opts.len() == 1 && source_opts.len() != 1 {
            source_opts = candidates(&source_name, &source_given, Role::Source, Some(&target_opts[0]));
        }
        let (source_label, target_label) = match (source_opts.as_slice(), target_opts.as_slice()) {
            ([s], [t]) => (s.clone(), t.clone()),
            _ => {
                diags.push(Diagnostic::new(
                    Severity::Warning,
                    DiagCode::UnresolvedEndpoint,
                    format!("cannot determine endpoint types of `{source_name}` -[{rel_type}]-> `{target_name}`"),
                    fragment(item),
                ));
                continue;
            }
        };
        let source_key = NodeKey::new(&source_label, &source_name);
        let target_key = NodeKey::new(&target_label, &target_name);
        if source_key == target_key {
            diags.push(Diagnostic::new(
                Severity::Warning,
                DiagCode::SelfRelation,
                format!("self relation on {source_key} dropped"),
                fragment(item),
            ));
            continue;
        }
        if !rel_def.admits(&source_label, &target_label) {
            diags.push(Diagnostic::new(
                Severity::Warning,
                DiagCode::EndpointTypeMismatch,
                format!("{rel_type} does not list {source_label} -> {target_label}"),
                fragment(item),
            ));
        }
        for key in [&source_key, &target_key] {
            if !index.contains_key(key) {
                diags.push(Diagnostic::new(
                    Severity::Info,
                    DiagCode::MaterializedEndpoint,
                    format!("endpoint {key} added as a node"),
                    fragment(item),
                ));
                index.insert(key.clone(), result.nodes.len());
                result.nodes.push(ExtractedNode {
                    label: key.label.clone(),
                    name: key.name.clone(),
                    properties: BTreeMap::new(),
                    provenance: provenance.clone(),
                });
            }
        }
        let props = properties(obj, diags, item);
        let triple = (source_key.clone(), rel_type.clone(), target_key.clone());
        if let Some(&i) = seen_relations.get(&triple) {
            let existing = &mut result.relations[i].properties;
            for (k, v) in props {
                existing.entry(k).or_insert(v);
            }
            diags.push(Diagnostic::new(
                Severity::Info,
                DiagCode::DuplicateRelation,
                format!("relationship {source_key} -[{rel_type}]-> {target_key} listed more than once; merged"),
                fragment(item),
            ));
            continue;
        }
        seen_relations.insert(triple, result.relations.len());
        result.relations.push(ExtractedRelation {
            source_key,
            target_key,
            rel_type,
            properties: props,
            provenance: provenance.clone(),
        });
    }
}

#[derive(Clone, Copy)]
enum Role {
    Source,
    Target,
}

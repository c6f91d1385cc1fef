//! Entity and relation type definitions.
//!
//! A [`SchemaConfig`] drives everything downstream: the extraction prompt
//! lists its types, the parser rejects labels outside it, and the graph
//! validates edges against it. The config is loaded from JSON and checked
//! once; after that it is immutable and can be shared freely.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Minimum number of examples every entity type must carry.
pub const MIN_EXAMPLES: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("malformed schema config: {0}")]
    MalformedConfig(String),
    #[error("duplicate type name `{0}`")]
    DuplicateTypeName(String),
    #[error("entity type `{name}` has {found} usable examples, need at least {MIN_EXAMPLES}")]
    InsufficientExamples { name: String, found: usize },
    #[error("relation `{relation}` constrains an undeclared entity type `{entity_type}`")]
    UnknownEndpointType { relation: String, entity_type: String },
    #[error("type name `{name}` is not {expected}")]
    InvalidTypeName { name: String, expected: &'static str },
    #[error("schema must declare at least one {0} type")]
    EmptySchema(&'static str),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("label is empty")]
    EmptyLabel,
    #[error("label `{0}` cannot be rendered in the required casing")]
    InvalidLabel(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityTypeDef {
    pub name: String,
    pub description: String,
    pub examples: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub property_hints: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConstraint {
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationTypeDef {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub semantic_equivalents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_constraints: Option<Vec<EndpointConstraint>>,
}

impl RelationTypeDef {
    /// True when the relation admits a `source -> target` pair of entity types.
    /// Unconstrained relations admit everything.
    pub fn admits(&self, source: &str, target: &str) -> bool {
        match &self.endpoint_constraints {
            None => true,
            Some(pairs) => pairs.iter().any(|c| c.source == source && c.target == target),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    pub entity_types: Vec<EntityTypeDef>,
    pub relation_types: Vec<RelationTypeDef>,
}

impl SchemaConfig {
    pub fn entity_type(&self, name: &str) -> Option<&EntityTypeDef> {
        self.entity_types.iter().find(|t| t.name == name)
    }

    pub fn relation_type(&self, name: &str) -> Option<&RelationTypeDef> {
        self.relation_types.iter().find(|t| t.name == name)
    }

    pub fn has_entity_type(&self, name: &str) -> bool {
        self.entity_type(name).is_some()
    }

    pub fn has_relation_type(&self, name: &str) -> bool {
        self.relation_type(name).is_some()
    }

    /// Pretty JSON in the same layout `load_schema` reads.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    /// Stable identity of the schema: SHA-256 over its compact JSON form.
    pub fn digest(&self) -> String {
        let compact = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&compact))
    }

    /// Checks every schema invariant.
    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.entity_types.is_empty() {
            return Err(SchemaError::EmptySchema("entity"));
        }
        if self.relation_types.is_empty() {
            return Err(SchemaError::EmptySchema("relation"));
        }

        let mut seen = BTreeSet::new();
        for et in &self.entity_types {
            if !is_pascal_case(&et.name) {
                return Err(SchemaError::InvalidTypeName {
                    name: et.name.clone(),
                    expected: "PascalCase",
                });
            }
            if !seen.insert(et.name.as_str()) {
                return Err(SchemaError::DuplicateTypeName(et.name.clone()));
            }
            let distinct: BTreeSet<&str> = et
                .examples
                .iter()
                .map(|e| e.trim())
                .filter(|e| !e.is_empty())
                .collect();
            let all_usable = distinct.len() == et.examples.len();
            if distinct.len() < MIN_EXAMPLES || !all_usable {
                return Err(SchemaError::InsufficientExamples {
                    name: et.name.clone(),
                    found: distinct.len(),
                });
            }
        }

        let mut seen = BTreeSet::new();
        for rt in &self.relation_types {
            if !is_lower_camel_case(&rt.name) {
                return Err(SchemaError::InvalidTypeName {
                    name: rt.name.clone(),
                    expected: "lowerCamelCase",
                });
            }
            if !seen.insert(rt.name.as_str()) {
                return Err(SchemaError::DuplicateTypeName(rt.name.clone()));
            }
            for c in rt.endpoint_constraints.iter().flatten() {
                for end in [&c.source, &c.target] {
                    if !self.has_entity_type(end) {
                        return Err(SchemaError::UnknownEndpointType {
                            relation: rt.name.clone(),
                            entity_type: end.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Parses and validates a JSON schema config.
pub fn load_schema(config_text: &str) -> Result<SchemaConfig, SchemaError> {
    let schema: SchemaConfig = serde_json::from_str(config_text)
        .map_err(|e| SchemaError::MalformedConfig(e.to_string()))?;
    schema.validate()?;
    Ok(schema)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelKind {
    /// Entity labels, rendered PascalCase.
    Node,
    /// Relation labels, rendered lowerCamelCase.
    Relation,
}

/// Splits a raw label into lowercase words.
///
/// Word boundaries are any non-alphanumeric character, a transition from a
/// non-uppercase character to an uppercase one (`suppliesTo`), and the end
/// of an acronym followed by a capitalized word (`HTTPServer`).
fn label_words(raw: &str) -> Vec<String> {
    let mut words = Vec::new();
    for piece in raw.split(|c: char| !c.is_alphanumeric()) {
        let chars: Vec<char> = piece.chars().collect();
        let mut current = String::new();
        for (i, &c) in chars.iter().enumerate() {
            if i > 0 && c.is_uppercase() {
                let prev = chars[i - 1];
                let next_lower = chars.get(i + 1).is_some_and(|n| n.is_lowercase());
                let boundary = !prev.is_uppercase() || next_lower;
                if boundary && !current.is_empty() {
                    words.push(std::mem::take(&mut current));
                }
            }
            current.extend(c.to_lowercase());
        }
        if !current.is_empty() {
            words.push(current);
        }
    }
    words
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn render_words(words: &[String], kind: LabelKind) -> String {
    match kind {
        LabelKind::Node => words.iter().map(|w| capitalize(w)).collect(),
        LabelKind::Relation => {
            let mut s = words[0].clone();
            s.extend(words[1..].iter().map(|w| capitalize(w)));
            s
        }
    }
}

/// Renders a label in the canonical casing for its kind.
///
/// `("supplies to", Relation)` gives `suppliesTo`, `("COMPANY", Node)` gives
/// `Company`. Re-splitting a rendered label can merge single-letter words
/// (`a b c` renders `aBC`, which splits as `a`, `bc`), so rendering repeats
/// until it reaches a fixpoint. Boundaries are only ever lost, which bounds
/// the number of rounds and makes the function idempotent.
pub fn normalize_label(raw: &str, kind: LabelKind) -> Result<String, LabelError> {
    let mut words = label_words(raw.trim());
    if words.is_empty() {
        return Err(LabelError::EmptyLabel);
    }
    let mut out = render_words(&words, kind);
    for _ in 0..16 {
        let again = label_words(&out);
        if again == words {
            let ok = match kind {
                LabelKind::Node => is_pascal_case(&out),
                LabelKind::Relation => is_lower_camel_case(&out),
            };
            return if ok {
                Ok(out)
            } else {
                Err(LabelError::InvalidLabel(raw.to_string()))
            };
        }
        out = render_words(&again, kind);
        words = again;
    }
    Err(LabelError::InvalidLabel(raw.to_string()))
}

/// First character uppercase, the rest alphanumeric.
pub fn is_pascal_case(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_uppercase()) && chars.all(char::is_alphanumeric)
}

/// First character lowercase, the rest alphanumeric.
pub fn is_lower_camel_case(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_lowercase()) && chars.all(char::is_alphanumeric)
}

fn entity(name: &str, description: &str, examples: &[&str], hints: &[&str]) -> EntityTypeDef {
    EntityTypeDef {
        name: name.into(),
        description: description.into(),
        examples: examples.iter().map(|s| s.to_string()).collect(),
        property_hints: if hints.is_empty() {
            None
        } else {
            Some(hints.iter().map(|s| s.to_string()).collect())
        },
    }
}

fn relation(
    name: &str,
    description: &str,
    equivalents: &[&str],
    constraints: Option<&[(&str, &str)]>,
) -> RelationTypeDef {
    RelationTypeDef {
        name: name.into(),
        description: description.into(),
        semantic_equivalents: equivalents.iter().map(|s| s.to_string()).collect(),
        endpoint_constraints: constraints.map(|pairs| {
            pairs
                .iter()
                .map(|(s, t)| EndpointConstraint {
                    source: s.to_string(),
                    target: t.to_string(),
                })
                .collect()
        }),
    }
}

/// The electric-vehicle battery supply chain schema: six entity types and
/// five relation types.
pub fn default_schema() -> SchemaConfig {
    SchemaConfig {
        entity_types: vec![
            entity(
                "Company",
                "A business organization that manufactures, mines, refines, trades or supplies goods, including subsidiaries and joint ventures.",
                &["Tesla", "CATL", "Zijin Mining", "Ganfeng Lithium"],
                &["industry", "founded", "headquarters"],
            ),
            entity(
                "Person",
                "A named individual such as a founder, executive, chairman or major shareholder.",
                &["Elon Musk", "Robin Zeng", "Li Liangbin"],
                &["role"],
            ),
            entity(
                "Location",
                "A geographic place: country, region, province, state or city.",
                &["China", "Western Australia", "Xinyu"],
                &[],
            ),
            entity(
                "Material",
                "A raw or processed material, mineral or chemical compound used in manufacturing.",
                &["Lithium", "Nickel", "Cobalt", "Lithium hydroxide"],
                &[],
            ),
            entity(
                "Mine",
                "A named mining operation, deposit or project that extracts minerals.",
                &["Greenbushes", "Talnakh", "Goulamina"],
                &["status", "ownershipShare"],
            ),
            entity(
                "Product",
                "A manufactured good or product line, such as a vehicle model or battery product.",
                &["Model 3", "Lithium-ion battery cell", "LFP battery pack"],
                &[],
            ),
        ],
        relation_types: vec![
            relation(
                "suppliesTo",
                "The source company provides goods, materials or components to the target company.",
                &["supplies", "sells to", "provides to", "delivers to", "is a supplier of", "has an offtake agreement with"],
                Some(&[("Company", "Company")]),
            ),
            relation(
                "contains",
                "The source product or material includes the target material or product as a constituent.",
                &["is made from", "uses", "consists of", "includes"],
                None,
            ),
            relation(
                "produces",
                "The source company or mine makes, mines, refines or manufactures the target material or product.",
                &["manufactures", "mines", "refines", "makes", "extracts"],
                Some(&[
                    ("Company", "Material"),
                    ("Company", "Product"),
                    ("Mine", "Material"),
                ]),
            ),
            relation(
                "locatedIn",
                "The source entity is headquartered, based or situated in the target location.",
                &["is headquartered in", "is based in", "is situated in", "operates in"],
                Some(&[
                    ("Company", "Location"),
                    ("Mine", "Location"),
                    ("Person", "Location"),
                    ("Location", "Location"),
                ]),
            ),
            relation(
                "owns",
                "The source company or person holds ownership of, or a controlling stake in, the target company or mine.",
                &["acquired", "holds a stake in", "controls", "is the parent company of"],
                Some(&[
                    ("Company", "Company"),
                    ("Company", "Mine"),
                    ("Person", "Company"),
                ]),
            ),
        ],
    }
}

//! Prompt rendering.
//!
//! Two template families: the combined entity/relationship extraction prompt
//! and the per-type disambiguation prompt. Rendering is a pure function of
//! its inputs; the template version travels with every prompt so recorded
//! fixtures can detect drift.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{estimate_tokens, Chunk, DEFAULT_CHUNK_BUDGET};
use crate::schema::SchemaConfig;

pub const EXTRACTION_TEMPLATE_VERSION: &str = "1.0.0";
pub const DISAMBIGUATION_TEMPLATE_VERSION: &str = "1.0.0";

/// Upper bound on estimated tokens for a full extraction prompt when the
/// chunk respects [`DEFAULT_CHUNK_BUDGET`].
pub const DEFAULT_PROMPT_BUDGET: usize = DEFAULT_CHUNK_BUDGET + 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Extraction,
    Disambiguation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub system: String,
    pub user: String,
    pub template_id: TemplateId,
    pub template_version: String,
}

impl PromptText {
    pub fn approx_tokens(&self) -> usize {
        estimate_tokens(&self.system) + estimate_tokens(&self.user)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("chunk {0} has no text")]
    EmptyChunk(String),
    #[error("no names to disambiguate for type `{0}`")]
    EmptyNameList(String),
}

/// System text of the extraction prompt for `schema`. Independent of the chunk.
pub fn extraction_system_text(schema: &SchemaConfig) -> String {
    let mut s = String::new();
    s.push_str(
        "You are an information extraction system that builds supply chain knowledge graphs. \
         Read the text supplied by the user and extract the entities (nodes) it mentions and \
         the relationships between them.\n\n",
    );

    s.push_str("## Entity types\n");
    s.push_str(
        "Recognize only the following categories of entities. Each category has a definition \
         and examples.\n",
    );
    for et in &schema.entity_types {
        let _ = writeln!(
            s,
            "- {}: {} Examples: {}.",
            et.name,
            et.description.trim(),
            et.examples.join("; ")
        );
        if let Some(hints) = et.property_hints.as_ref().filter(|h| !h.is_empty()) {
            let _ = writeln!(s, "  Useful properties: {}.", hints.join(", "));
        }
    }

    s.push_str("\n## Output format\n");
    s.push_str(
        "Return a single JSON object and nothing else: no code fences, no commentary. \
         The object has exactly two keys, \"nodes\" and \"relationships\":\n",
    );
    s.push_str(
        "{\"nodes\":[{\"label\":\"<EntityType>\",\"name\":\"<entity name>\",\"properties\":{\"<key>\":\"<value>\"}}],\
         \"relationships\":[{\"source\":\"<source name>\",\"source_label\":\"<EntityType>\",\
         \"target\":\"<target name>\",\"target_label\":\"<EntityType>\",\"type\":\"<relationType>\",\
         \"properties\":{\"<key>\":\"<value>\"}}]}\n",
    );
    s.push_str(
        "Represent entity properties as key-value pairs inside \"properties\", with string values. \
         Use double quotes for every key and string, escape quotes that occur inside values, and \
         do not leave trailing commas.\n",
    );

    s.push_str("\n## Data handling\n");
    s.push_str("- Extract only entities of the categories listed above and ignore everything else.\n");
    s.push_str(
        "- Attach any additional relevant information about an entity (dates, quantities, roles, \
         capacities, ownership shares) as properties of that entity instead of creating extra nodes.\n",
    );
    s.push_str(
        "- Use the most complete name the text gives for each entity and reuse exactly that name \
         whenever the entity is referenced.\n",
    );
    s.push_str("- Do not add facts that the text does not state.\n");
    s.push_str(
        "- If the text mentions no relevant entities, return {\"nodes\":[],\"relationships\":[]}.\n",
    );

    s.push_str("\n## Relationships\n");
    s.push_str(
        "A relationship is a directed link between two of the nodes extracted above, from a \
         source node to a target node. Capture only the following relationship types:\n",
    );
    for rt in &schema.relation_types {
        let _ = write!(s, "- {}: {}", rt.name, rt.description.trim());
        if !rt.semantic_equivalents.is_empty() {
            let _ = write!(
                s,
                " Also expressed as: {}.",
                rt.semantic_equivalents.join("; ")
            );
        }
        s.push('\n');
        if let Some(pairs) = rt.endpoint_constraints.as_ref().filter(|p| !p.is_empty()) {
            let rendered: Vec<String> = pairs
                .iter()
                .map(|c| format!("{} -> {}", c.source, c.target))
                .collect();
            let _ = writeln!(s, "  Allowed endpoints: {}.", rendered.join(", "));
        }
    }

    s.push_str("\n## Label formatting\n");
    s.push_str(
        "- Node labels must be one of the entity categories above, spelled exactly as shown (PascalCase).\n",
    );
    s.push_str(
        "- Relationship types must be one of the types above, spelled exactly as shown (lowerCamelCase).\n",
    );
    s.push_str(
        "- Every relationship source and target must also appear in \"nodes\" with the same name and label.\n",
    );
    s.push_str(
        "- Keep the direction stated in the text: the source performs the relationship on the target.\n",
    );
    s.push_str("- Do not create a relationship from a node to itself.\n");
    s.push_str("- Do not invent new entity categories or relationship types.\n");
    s
}

/// Renders the combined extraction prompt. The user text is the chunk body
/// verbatim.
pub fn build_extraction_prompt(
    schema: &SchemaConfig,
    chunk: &Chunk,
) -> Result<PromptText, PromptError> {
    if chunk.text.trim().is_empty() {
        return Err(PromptError::EmptyChunk(chunk.label()));
    }
    Ok(PromptText {
        system: extraction_system_text(schema),
        user: chunk.text.clone(),
        template_id: TemplateId::Extraction,
        template_version: EXTRACTION_TEMPLATE_VERSION.to_string(),
    })
}

/// Estimated token overhead the extraction template adds on top of a chunk.
pub fn extraction_overhead(schema: &SchemaConfig) -> usize {
    estimate_tokens(&extraction_system_text(schema))
}

/// Renders the disambiguation prompt for one type's name list.
pub fn build_disambiguation_prompt(label: &str, names: &[String]) -> Result<PromptText, PromptError> {
    if names.is_empty() {
        return Err(PromptError::EmptyNameList(label.to_string()));
    }
    let n = names.len();
    let system = format!(
        "You are an expert in semantics and entity identification.\n\
         You will receive a numbered list of {n} names, all of entity type \"{label}\", extracted \
         from supply chain documents. Decide which names refer to the same real-world entity.\n\
         Assign a positive integer group number to every name. Names that denote the same entity \
         must get the same number; names that denote different entities must get different numbers.\n\
         Treat spelling variants, abbreviations, legal suffixes such as Inc., Ltd. or Co., and \
         translations of one entity as the same entity. Do not merge distinct entities that merely \
         share a word.\n\
         Return only a JSON array of {n} integers in list order, for example [1,1,2], with no other text.\n"
    );
    let mut user = String::new();
    for (i, name) in names.iter().enumerate() {
        let flat = name.split_whitespace().collect::<Vec<_>>().join(" ");
        let _ = writeln!(user, "{}. {}", i + 1, flat);
    }
    Ok(PromptText {
        system,
        user,
        template_id: TemplateId::Disambiguation,
        template_version: DISAMBIGUATION_TEMPLATE_VERSION.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{default_schema, EntityTypeDef, RelationTypeDef};

    fn chunk(text: &str) -> Chunk {
        Chunk {
            document_id: "doc".into(),
            index: 0,
            text: text.into(),
            approx_tokens: estimate_tokens(text),
        }
    }

    fn definitions_section(system: &str) -> (&str, &str) {
        let ents = system.find("## Entity types").unwrap();
        let fmt = system.find("## Output format").unwrap();
        let rels = system.find("## Relationships").unwrap();
        let labels = system.find("## Label formatting").unwrap();
        (&system[ents..fmt], &system[rels..labels])
    }

    #[test]
    fn every_type_defined_exactly_once() {
        let schema = default_schema();
        let p = build_extraction_prompt(&schema, &chunk("CATL supplies Tesla.")).unwrap();
        let (ents, rels) = definitions_section(&p.system);
        for et in &schema.entity_types {
            let needle = format!("- {}:", et.name);
            assert_eq!(p.system.matches(&needle).count(), 1, "{needle}");
            assert!(ents.contains(&needle));
            for ex in &et.examples {
                assert!(ents.contains(ex.as_str()));
            }
        }
        for rt in &schema.relation_types {
            let needle = format!("- {}:", rt.name);
            assert_eq!(p.system.matches(&needle).count(), 1, "{needle}");
            assert!(rels.contains(&needle));
        }
        assert_eq!(p.user, "CATL supplies Tesla.");
        assert_eq!(p.template_id, TemplateId::Extraction);
    }

    #[test]
    fn sections_appear_in_order() {
        let system = extraction_system_text(&default_schema());
        let order = [
            "## Entity types",
            "## Output format",
            "key-value pairs",
            "## Data handling",
            "additional relevant information",
            "## Relationships",
            "directed link between two",
            "## Label formatting",
        ];
        let positions: Vec<usize> = order.iter().map(|s| system.find(s).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "{positions:?}");
    }

    #[test]
    fn minimal_schema() {
        let schema = SchemaConfig {
            entity_types: vec![EntityTypeDef {
                name: "Company".into(),
                description: "A firm.".into(),
                examples: vec!["A".into(), "B".into(), "C".into()],
                property_hints: None,
            }],
            relation_types: vec![RelationTypeDef {
                name: "owns".into(),
                description: "Ownership.".into(),
                semantic_equivalents: vec![],
                endpoint_constraints: None,
            }],
        };
        let p = build_extraction_prompt(&schema, &chunk("x")).unwrap();
        let (ents, rels) = definitions_section(&p.system);
        assert_eq!(ents.lines().filter(|l| l.starts_with("- ")).count(), 1);
        assert_eq!(rels.lines().filter(|l| l.starts_with("- ")).count(), 1);
        assert!(!p.system.contains("- Mine:"));
    }

    #[test]
    fn template_is_deterministic() {
        let schema = default_schema();
        let a = build_extraction_prompt(&schema, &chunk("CATL supplies Tesla.")).unwrap();
        let b = build_extraction_prompt(&schema, &chunk("Norilsk Nickel produces nickel.")).unwrap();
        assert_eq!(a.system, b.system);
        assert_ne!(a.user, b.user);
        assert_eq!(
            a,
            build_extraction_prompt(&schema, &chunk("CATL supplies Tesla.")).unwrap()
        );
    }

    #[test]
    fn empty_chunk_rejected() {
        assert!(matches!(
            build_extraction_prompt(&default_schema(), &chunk("  ")),
            Err(PromptError::EmptyChunk(_))
        ));
    }

    #[test]
    fn prompt_fits_budget() {
        let schema = default_schema();
        let overhead = extraction_overhead(&schema);
        assert!(overhead <= 1000, "template overhead {overhead}");
        let text = "word ".repeat(DEFAULT_CHUNK_BUDGET * 100 / 135);
        let c = chunk(text.trim());
        assert!(c.approx_tokens <= DEFAULT_CHUNK_BUDGET);
        let p = build_extraction_prompt(&schema, &c).unwrap();
        assert!(p.approx_tokens() <= DEFAULT_PROMPT_BUDGET);
    }

    #[test]
    fn disambiguation_prompt() {
        let names = vec!["Tesla".to_string(), "Tesla, Inc.".into(), "BMW".into()];
        let p = build_disambiguation_prompt("Company", &names).unwrap();
        assert_eq!(p.user, "1. Tesla\n2. Tesla, Inc.\n3. BMW\n");
        assert!(p.system.contains("expert in semantics and entity identification"));
        assert!(p.system.contains("\"Company\""));
        assert!(p.system.contains("JSON array of 3 integers"));
        assert_eq!(p, build_disambiguation_prompt("Company", &names).unwrap());

        let single = build_disambiguation_prompt("Location", &["China".to_string()]).unwrap();
        assert_eq!(single.user, "1. China\n");
        assert_eq!(
            build_disambiguation_prompt("Location", &[]),
            Err(PromptError::EmptyNameList("Location".into()))
        );
    }
}

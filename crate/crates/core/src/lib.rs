pub mod disambiguate;
pub mod eval;
pub mod extract;
pub mod graph;
pub mod ingest;
pub mod llm;
pub mod par;
pub mod schema;
pub mod prompts;

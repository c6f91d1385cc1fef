//! Greedy sentence packing under a token budget.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::segment::sentence_spans;
use super::Document;

/// Default chunk budget in estimated tokens.
pub const DEFAULT_CHUNK_BUDGET: usize = 1500;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub document_id: String,
    pub index: usize,
    pub text: String,
    pub approx_tokens: usize,
}

impl Chunk {
    /// `document#index`, used in diagnostics and error messages.
    pub fn label(&self) -> String {
        format!("{}#{}", self.document_id, self.index)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChunkError {
    #[error("sentence {sentence} of document `{document_id}` needs {tokens} tokens, budget is {budget}: {preview:?}")]
    SentenceExceedsBudget {
        document_id: String,
        sentence: usize,
        tokens: usize,
        budget: usize,
        preview: String,
    },
}

/// Estimated model tokens: whitespace-delimited words times 1.35, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    tokens_for_words(text.split_whitespace().count())
}

fn tokens_for_words(words: usize) -> usize {
    (words * 135).div_ceil(100)
}

/// Packs the document's sentences into chunks, each taking as many
/// consecutive sentences as fit in `budget`.
pub fn chunk_document(doc: &Document, budget: usize) -> Result<Vec<Chunk>, ChunkError> {
    let body = doc.body.as_str();
    let spans = sentence_spans(body);
    let words: Vec<usize> = spans
        .iter()
        .map(|r| body[r.clone()].split_whitespace().count())
        .collect();

    if let Some((i, &w)) = words
        .iter()
        .enumerate()
        .find(|(_, &w)| tokens_for_words(w) > budget)
    {
        let sentence = &body[spans[i].clone()];
        return Err(ChunkError::SentenceExceedsBudget {
            document_id: doc.id.clone(),
            sentence: i,
            tokens: tokens_for_words(w),
            budget,
            preview: sentence.chars().take(80).collect(),
        });
    }

    let mut chunks = Vec::new();
    let mut first = 0;
    while first < spans.len() {
        let mut last = first;
        let mut total = words[first];
        while last + 1 < spans.len() && tokens_for_words(total + words[last + 1]) <= budget {
            last += 1;
            total += words[last];
        }
        // sentences are separated only by whitespace, so the slice's word
        // count is the sum of its sentences' counts
        let text = &body[spans[first].start..spans[last].end];
        chunks.push(Chunk {
            document_id: doc.id.clone(),
            index: chunks.len(),
            text: text.to_string(),
            approx_tokens: tokens_for_words(total),
        });
        first = last + 1;
    }
    Ok(chunks)
}

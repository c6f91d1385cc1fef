//! Rule-based sentence segmentation.
//!
//! A sentence ends at `.`, `!` or `?` (optionally followed by closing quotes
//! or brackets) when the next non-space character is uppercase or a digit.
//! A period after a known abbreviation or a single-letter initial is not a
//! boundary.

use std::ops::Range;

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "co", "corp", "inc", "ltd", "llc",
    "plc", "bhd", "ag", "sa", "nv", "pty", "no", "nos", "vs", "etc", "approx", "dept", "est",
    "fig", "gen", "gov", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct",
    "nov", "dec", "e.g", "i.e", "u.s", "u.k", "u.n", "a.m", "p.m",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '\u{201D}', '\u{2019}'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '\u{201C}', '\u{2018}'];

/// Byte ranges of each sentence in `body`, trimmed of surrounding whitespace.
pub fn sentence_spans(body: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let chars: Vec<(usize, char)> = body.char_indices().collect();
    let mut start: Option<usize> = None;
    let mut i = 0;

    while i < chars.len() {
        let (pos, c) = chars[i];
        if start.is_none() {
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            start = Some(pos);
        }

        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?') {
                j += 1;
            }
            while j < chars.len() && CLOSERS.contains(&chars[j].1) {
                j += 1;
            }
            let end = chars.get(j).map_or(body.len(), |&(p, _)| p);

            if j < chars.len() && chars[j].1.is_whitespace() {
                let mut k = j;
                while k < chars.len() && chars[k].1.is_whitespace() {
                    k += 1;
                }
                while k < chars.len() && OPENERS.contains(&chars[k].1) {
                    k += 1;
                }
                let next_starts = chars
                    .get(k)
                    .is_some_and(|&(_, n)| n.is_uppercase() || n.is_ascii_digit());
                let abbreviated = c == '.' && j == i + 1 && is_abbreviation(&body[..pos]);
                if next_starts && !abbreviated {
                    spans.push(start.take().unwrap()..end);
                    i = j;
                    continue;
                }
            }
            i = j.max(i + 1);
            continue;
        }
        i += 1;
    }

    if let Some(s) = start {
        let tail = body[s..].trim_end();
        if !tail.is_empty() {
            spans.push(s..s + tail.len());
        }
    }
    spans
}

/// Whether the word ending right before a period is an abbreviation.
fn is_abbreviation(before_period: &str) -> bool {
    let word = before_period
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(OPENERS);
    let mut letters = word.chars();
    if let (Some(first), None) = (letters.next(), letters.next()) {
        if first.is_uppercase() {
            return true;
        }
    }
    let lower = word.to_lowercase();
    ABBREVIATIONS.contains(&lower.as_str())
}

/// Splits `body` into sentences. Empty input gives an empty list.
pub fn segment_sentences(body: &str) -> Vec<&str> {
    sentence_spans(body)
        .into_iter()
        .map(|r| &body[r])
        .collect()
}

use serde_json::Value;

use super::DisambiguationError;

const MAX_CANDIDATES: usize = 64;

/// Parses the integer-array answer, repairing fences and surrounding prose.
pub fn parse_assignment(raw: &str, expected_len: usize) -> Result<Vec<u64>, DisambiguationError> {
    let array = match serde_json::from_str::<Value>(raw.trim()) {
        Ok(Value::Array(items)) => items,
        strict => repair(raw).ok_or_else(|| DisambiguationError::Unparseable {
            reason: match strict {
                Ok(_) => "top level is not a JSON array".into(),
                Err(e) => e.to_string(),
            },
            raw: raw.to_string(),
        })?,
    };
    let mut ids = Vec::with_capacity(array.len());
    for (index, v) in array.iter().enumerate() {
        match v.as_u64().filter(|&id| id > 0) {
            Some(id) => ids.push(id),
            None => return Err(DisambiguationError::NonInteger { index, value: v.to_string() }),
        }
    }
    if ids.len() != expected_len {
        return Err(DisambiguationError::LengthMismatch { expected: expected_len, found: ids.len() });
    }
    Ok(ids)
}

fn repair(raw: &str) -> Option<Vec<Value>> {
    let text: String = raw
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n");
    if let Ok(Value::Array(items)) = serde_json::from_str::<Value>(text.trim()) {
        return Some(items);
    }
    let opens = text.char_indices().filter(|&(_, c)| c == '[').map(|(i, _)| i).take(MAX_CANDIDATES);
    for start in opens {
        let Some(end) = balanced_end(&text, start) else {
            continue;
        };
        if let Ok(Value::Array(items)) = serde_json::from_str::<Value>(&text[start..end]) {
            return Some(items);
        }
    }
    None
}

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
            b'[' => depth += 1,
            b']' => {
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

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clean() {
        assert_eq!(parse_assignment("[1,1,2]", 3).unwrap(), [1, 1, 2]);
        assert_eq!(parse_assignment(" [ 4, 9 ]\n", 2).unwrap(), [4, 9]);
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(
            parse_assignment("[1,2]", 3),
            Err(DisambiguationError::LengthMismatch { expected: 3, found: 2 })
        );
    }

    #[test]
    fn repaired_equals_clean() {
        let clean = parse_assignment("[1,1,2]", 3).unwrap();
        assert_eq!(parse_assignment("The answer is: [1, 1, 2]", 3).unwrap(), clean);
        assert_eq!(parse_assignment("```json\n[1,1,2]\n```", 3).unwrap(), clean);
        assert_eq!(parse_assignment("Groups for [the list]: [1,1,2].", 3).unwrap(), clean);
    }

    #[test]
    fn non_integers() {
        for bad in ["[1,\"2\",3]", "[1,2.5,3]", "[1,0,3]", "[1,-1,3]", "[1,null,3]"] {
            assert!(
                matches!(parse_assignment(bad, 3), Err(DisambiguationError::NonInteger { index: 1, .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn unparseable() {
        assert!(matches!(parse_assignment("no idea", 2), Err(DisambiguationError::Unparseable { .. })));
        assert!(matches!(parse_assignment("{\"a\":1}", 1), Err(DisambiguationError::Unparseable { .. })));
        assert!(matches!(parse_assignment("", 1), Err(DisambiguationError::Unparseable { .. })));
    }

    proptest! {
        #[test]
        fn never_panics(raw in "\\PC{0,80}", n in 1usize..5) {
            let _ = parse_assignment(&raw, n);
        }

        #[test]
        fn wrapped_arrays_round_trip(ids in proptest::collection::vec(1u64..1000, 1..40), prefix in "[a-zA-Z :]{0,20}") {
            let text = format!("{prefix} {}", serde_json::to_string(&ids).unwrap());
            prop_assert_eq!(parse_assignment(&text, ids.len()).unwrap(), ids);
        }
    }
}

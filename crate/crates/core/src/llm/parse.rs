//! Extraction of JSON objects from LLM responses.
//!
//! Responses arrive fenced in ```json blocks, bare, or buried in prose;
//! the scanner pulls out the first balanced object and validates the
//! required keys.

use serde_json::{Map, Value};

use super::GatewayError;

/// Find the first balanced JSON object in `text`, tolerating ``` fences and
/// surrounding prose, and check that every required key is present.
///
/// Single pass over each candidate start; never loops on malformed input.
pub fn parse_json_object(
    text: &str,
    required_keys: &[&str],
) -> Result<Map<String, Value>, GatewayError> {
    let bytes = text.as_bytes();
    let mut start = 0;
    while let Some(offset) = text[start..].find('{') {
        let open = start + offset;
        if let Some(end) = scan_balanced(bytes, open) {
            if let Ok(Value::Object(map)) = serde_json::from_str(&text[open..end]) {
                for key in required_keys {
                    if !map.contains_key(*key) {
                        return Err(GatewayError::MissingKey(key.to_string()));
                    }
                }
                return Ok(map);
            }
        }
        start = open + 1;
    }
    Err(GatewayError::NoObjectFound)
}

/// Byte index one past the brace matching `open`, honoring strings and
/// escapes. `None` when the object never closes.
fn scan_balanced(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
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

/// Convenience: required string value from a parsed object.
pub fn string_value(map: &Map<String, Value>, key: &str) -> Result<String, GatewayError> {
    match map.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Ok(other.to_string()),
        None => Err(GatewayError::MissingKey(key.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_json_block() {
        let m = parse_json_object("```json\n{\"answer\": \"1979\"}\n```", &["answer"]).unwrap();
        assert_eq!(m["answer"], "1979");
    }

    #[test]
    fn bare_object() {
        let m = parse_json_object("{\"response\":\"yes\"}", &["response"]).unwrap();
        assert_eq!(m["response"], "yes");
    }

    #[test]
    fn object_inside_prose() {
        // expected span verified with the independent scanner oracle below
        let m = parse_json_object("Sure! {\"answer\": \"x\"} hope that helps", &["answer"]).unwrap();
        assert_eq!(m["answer"], "x");
    }

    #[test]
    fn nested_objects_and_braces_in_strings() {
        let text = "note {bad} then {\"a\": {\"b\": \"}{\"}, \"c\": 1}";
        let m = parse_json_object(text, &["a", "c"]).unwrap();
        assert_eq!(m["c"], 1);
    }

    #[test]
    fn missing_key_reported() {
        let err = parse_json_object("{\"answer\": \"x\"}", &["response"]).unwrap_err();
        assert!(matches!(err, GatewayError::MissingKey(k) if k == "response"));
    }

    #[test]
    fn no_object_found() {
        assert!(matches!(
            parse_json_object("no json here", &[]).unwrap_err(),
            GatewayError::NoObjectFound
        ));
        assert!(matches!(
            parse_json_object("{ never closes", &[]).unwrap_err(),
            GatewayError::NoObjectFound
        ));
    }

    /// Independent hand-written oracle: scan for the first balanced-brace
    /// span that also parses as JSON, character by character, tracking
    /// quotes the slow way.
    fn oracle_first_object(text: &str) -> Option<(usize, usize)> {
        let chars: Vec<char> = text.chars().collect();
        for start in 0..chars.len() {
            if chars[start] != '{' {
                continue;
            }
            let mut depth = 0i64;
            let mut quoted = false;
            let mut skip = false;
            for (i, &c) in chars.iter().enumerate().skip(start) {
                if skip {
                    skip = false;
                    continue;
                }
                if quoted {
                    match c {
                        '\\' => skip = true,
                        '"' => quoted = false,
                        _ => {}
                    }
                    continue;
                }
                match c {
                    '"' => quoted = true,
                    '{' => depth += 1,
                    '}' => {
                        depth -= 1;
                        if depth == 0 {
                            let candidate: String = chars[start..=i].iter().collect();
                            if serde_json::from_str::<serde_json::Value>(&candidate).is_ok() {
                                return Some((start, i + 1));
                            }
                            break;
                        }
                    }
                    _ => {}
                }
            }
        }
        None
    }

    #[test]
    fn matches_balanced_brace_oracle() {
        let cases = [
            "Sure! {\"answer\": \"x\"} hope that helps",
            "```json\n{\"answer\": \"1979\"}\n```",
            "{\"a\":{\"b\":2}} trailing {\"c\":3}",
            "prefix {not json} {\"k\": \"v\"}",
            "{\"s\": \"brace } inside\"}",
        ];
        for case in cases {
            let (lo, hi) = oracle_first_object(case).expect(case);
            let expected: String = case.chars().collect::<Vec<_>>()[lo..hi].iter().collect();
            let expected_map: serde_json::Value = serde_json::from_str(&expected).unwrap();
            let got = parse_json_object(case, &[]).unwrap();
            assert_eq!(serde_json::Value::Object(got), expected_map, "case: {case}");
        }
    }
}

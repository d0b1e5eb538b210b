//! Word tokenization shared by the labeler, the filter, and the synthesis
//! pipeline.
//!
//! The rule is deliberately simple and fully deterministic: split on
//! whitespace, then peel leading/trailing ASCII punctuation off each segment
//! into separate tokens. `"KGOT, in"` becomes `["KGOT", ",", "in"]`.

use serde::{Deserialize, Serialize};

/// One word-level token with its position in the source text.
///
/// Offsets are in characters (not bytes) so they survive serialization to
/// fixture files regardless of encoding details.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordToken {
    pub surface: String,
    /// Char offset of the first character.
    pub start: usize,
    /// Char offset one past the last character.
    pub end: usize,
    /// 0-based position in the token sequence.
    pub index: usize,
}

/// Split text into word tokens.
///
/// Whitespace separates segments; leading and trailing ASCII punctuation of
/// each segment becomes its own single-char token. Interior punctuation
/// (apostrophes, hyphens, dotted abbreviations) stays attached.
pub fn tokenize_words(text: &str) -> Vec<WordToken> {
    let mut tokens = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let seg_start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        let seg_end = i;

        // peel leading punctuation
        let mut lo = seg_start;
        let hi = seg_end;
        while lo < hi && chars[lo].is_ascii_punctuation() {
            push_token(&mut tokens, &chars, lo, lo + 1);
            lo += 1;
        }
        if lo == hi {
            continue; // segment was punctuation only
        }
        // find trailing punctuation run (emitted after the core token)
        let mut trail = hi;
        while trail > lo && chars[trail - 1].is_ascii_punctuation() {
            trail -= 1;
        }
        push_token(&mut tokens, &chars, lo, trail);
        while trail < hi {
            push_token(&mut tokens, &chars, trail, trail + 1);
            trail += 1;
        }
    }
    tokens
}

fn push_token(tokens: &mut Vec<WordToken>, chars: &[char], start: usize, end: usize) {
    let index = tokens.len();
    tokens.push(WordToken {
        surface: chars[start..end].iter().collect(),
        start,
        end,
        index,
    });
}

/// Surfaces only, for callers that do not need offsets.
pub fn word_surfaces(text: &str) -> Vec<String> {
    tokenize_words(text).into_iter().map(|t| t.surface).collect()
}

/// Join selected tokens back into a span string.
///
/// Adjacent tokens (no gap in the original text) are joined without a
/// space so that `["KGOT", ","]` reads back as `"KGOT,"`; everything else
/// is separated by a single space.
pub fn join_tokens(tokens: &[WordToken], selected: &[bool]) -> String {
    let mut out = String::new();
    let mut prev_end: Option<usize> = None;
    for (tok, &keep) in tokens.iter().zip(selected) {
        if !keep {
            continue;
        }
        if let Some(end) = prev_end {
            // adjacent tokens (e.g. a word and its trailing comma) rejoin
            // without a separator
            if tok.start != end {
                out.push(' ');
            }
        }
        out.push_str(&tok.surface);
        prev_end = Some(tok.end);
    }
    out
}

/// Greedy in-order subsequence match of `needle` token surfaces against
/// `haystack` tokens. Returns the matched haystack indices, or `None` when
/// `needle` is not a subsequence.
pub fn match_subsequence(needle: &[String], haystack: &[WordToken]) -> Option<Vec<usize>> {
    let mut out = Vec::with_capacity(needle.len());
    let mut pos = 0;
    for want in needle {
        let found = haystack[pos..].iter().position(|t| &t.surface == want)?;
        out.push(pos + found);
        pos = pos + found + 1;
    }
    Some(out)
}

/// Check that every word of `output` (after tokenization) occurs in the
/// combined token multiset of `sources`, returning the first offending word.
pub fn multiset_excess(output: &str, sources: &[&str]) -> Option<String> {
    use std::collections::HashMap;
    let mut budget: HashMap<String, usize> = HashMap::new();
    for src in sources {
        for w in word_surfaces(src) {
            *budget.entry(w).or_insert(0) += 1;
        }
    }
    for w in word_surfaces(output) {
        match budget.get_mut(&w) {
            Some(n) if *n > 0 => *n -= 1,
            _ => return Some(w),
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_no_tokens() {
        assert!(tokenize_words("").is_empty());
        assert!(tokenize_words("   \t\n").is_empty());
    }

    #[test]
    fn splits_trailing_question_mark() {
        // hand-applied rule: five words plus the trailing "?"
        let surfaces = word_surfaces("How large is Dimond Center?");
        assert_eq!(surfaces, vec!["How", "large", "is", "Dimond", "Center", "?"]);
    }

    #[test]
    fn splits_trailing_comma() {
        let surfaces = word_surfaces("KGOT, in");
        assert_eq!(surfaces, vec!["KGOT", ",", "in"]);
    }

    #[test]
    fn interior_punctuation_stays() {
        assert_eq!(word_surfaces("don't stop"), vec!["don't", "stop"]);
        assert_eq!(word_surfaces("U.S. city"), vec!["U.S", ".", "city"]);
    }

    #[test]
    fn punctuation_only_segment() {
        assert_eq!(word_surfaces("a -- b"), vec!["a", "-", "-", "b"]);
    }

    #[test]
    fn offsets_reconstruct_input() {
        let text = "KGOT, in the (Dimond) Center?  Yes!";
        let tokens = tokenize_words(text);
        let chars: Vec<char> = text.chars().collect();
        for t in &tokens {
            let original: String = chars[t.start..t.end].iter().collect();
            assert_eq!(original, t.surface);
        }
        // offsets ascending and non-overlapping
        for pair in tokens.windows(2) {
            assert!(pair[0].end <= pair[1].start);
        }
    }

    #[test]
    fn join_reattaches_adjacent_punctuation() {
        let tokens = tokenize_words("KGOT, known studio in the Dimond Center now");
        // select "KGOT", ",", "in", "the", "Dimond", "Center"
        let mut mask = vec![false; tokens.len()];
        for (i, t) in tokens.iter().enumerate() {
            if ["KGOT", ",", "in", "the", "Dimond", "Center"].contains(&t.surface.as_str()) {
                mask[i] = true;
            }
        }
        assert_eq!(join_tokens(&tokens, &mask), "KGOT, in the Dimond Center");
    }

    #[test]
    fn subsequence_matching() {
        let hay = tokenize_words("the quick brown fox jumps");
        let needle: Vec<String> = ["quick", "fox"].iter().map(|s| s.to_string()).collect();
        assert_eq!(match_subsequence(&needle, &hay), Some(vec![1, 3]));
        let bad: Vec<String> = ["fox", "quick"].iter().map(|s| s.to_string()).collect();
        assert_eq!(match_subsequence(&bad, &hay), None);
    }

    #[test]
    fn multiset_excess_detects_invention() {
        assert_eq!(multiset_excess("a b", &["a b c"]), None);
        assert_eq!(multiset_excess("a d", &["a b c"]), Some("d".to_string()));
        // second occurrence must be budgeted
        assert_eq!(multiset_excess("a a", &["a b"]), Some("a".to_string()));
        assert_eq!(multiset_excess("a a", &["a b", "a"]), None);
    }
}

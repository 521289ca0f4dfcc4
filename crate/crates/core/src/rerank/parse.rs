//! Recovery of a ranking from free-form decider output, and per-candidate
//! splitting of analyzer output.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    /// A "Ranked order" line listing every index exactly once.
    Exact,
    /// Indices were found but had to be deduplicated, filtered or completed.
    Repaired,
    /// Nothing usable; the identity order was returned.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedOrder {
    /// 1-based permutation of `1..=m`.
    pub permutation: Vec<usize>,
    pub status: ParseStatus,
    pub notes: Vec<String>,
}

static RANKED_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)ranked\s+order\s*[:\-]?(.*)").unwrap());
static PAPER_REF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bpaper\s*#?\s*(\d+)").unwrap());
static BARE_INT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").unwrap());

/// Reads a permutation of `1..=m` out of decider text.
///
/// Prefers the first line mentioning "Ranked order"; otherwise collects
/// every "paper N" reference in reading order. The result is always a full
/// permutation: duplicates keep their first occurrence, out-of-range indices
/// are dropped and missing ones are appended in pool order.
pub fn parse_ranked_order(text: &str, m: usize) -> ParsedOrder {
    let mut notes = Vec::new();
    let ranked_line = text.lines().find_map(|line| {
        RANKED_LINE
            .captures(line)
            .map(|c| c.get(1).map_or("", |g| g.as_str()))
    });

    let (tokens, from_line): (Vec<&str>, bool) = match ranked_line {
        Some(rest) => {
            let mut tokens: Vec<&str> = PAPER_REF
                .captures_iter(rest)
                .map(|c| c.get(1).unwrap().as_str())
                .collect();
            if tokens.is_empty() {
                tokens = BARE_INT.find_iter(rest).map(|m| m.as_str()).collect();
            }
            if tokens.is_empty() {
                notes.push("ranked order line lists no indices".into());
                (scan_references(text), false)
            } else {
                (tokens, true)
            }
        }
        None => (scan_references(text), false),
    };

    if tokens.is_empty() {
        notes.push("no paper indices found".into());
        return ParsedOrder {
            permutation: (1..=m).collect(),
            status: ParseStatus::Fallback,
            notes,
        };
    }

    let mut seen = vec![false; m + 1];
    let mut permutation = Vec::with_capacity(m);
    let mut clean = from_line;
    for token in tokens {
        match token.parse::<usize>() {
            Ok(i) if (1..=m).contains(&i) => {
                if seen[i] {
                    notes.push(format!("duplicate index {i} dropped"));
                    clean = false;
                } else {
                    seen[i] = true;
                    permutation.push(i);
                }
            }
            _ => {
                notes.push(format!("index {token} out of range 1..={m}"));
                clean = false;
            }
        }
    }
    let missing: Vec<usize> = (1..=m).filter(|i| !seen[*i]).collect();
    if !missing.is_empty() {
        notes.push(format!("appended missing indices {missing:?}"));
        clean = false;
        permutation.extend(missing);
    }
    if !from_line {
        notes.push("no ranked order line; used paper references in reading order".into());
    }
    ParsedOrder {
        permutation,
        status: if clean {
            ParseStatus::Exact
        } else {
            ParseStatus::Repaired
        },
        notes,
    }
}

fn scan_references(text: &str) -> Vec<&str> {
    PAPER_REF
        .captures_iter(text)
        .map(|c| c.get(1).unwrap().as_str())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStatus {
    /// Sections introduced by "Paper i" headings.
    PaperHeadings,
    /// Sections introduced by a numbered list.
    NumberedList,
    /// No per-candidate structure; every slot gets the whole text.
    Shared,
}

static PAPER_HEADING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^[ \t>#*_\-]*(?:\d+[.)][ \t]*)?[*_]*paper[ \t]+(\d+)\b[*_]*[ \t]*[:.\-]?").unwrap()
});
static NUMBERED_ITEM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ \t*_#]*(\d+)[.)][*_]*[ \t]+").unwrap());

/// Splits analyzer output into one text per candidate slot.
pub fn split_analysis(text: &str, m: usize) -> (Vec<String>, SplitStatus) {
    if let Some(parts) = split_on(&PAPER_HEADING, text, m) {
        return (parts, SplitStatus::PaperHeadings);
    }
    if let Some(parts) = split_on(&NUMBERED_ITEM, text, m) {
        return (parts, SplitStatus::NumberedList);
    }
    (vec![text.trim().to_string(); m], SplitStatus::Shared)
}

/// Uses the first heading for each index; succeeds only if all of `1..=m`
/// appear.
fn split_on(pattern: &Regex, text: &str, m: usize) -> Option<Vec<String>> {
    // (start of heading, end of heading, index)
    let mut heads: Vec<(usize, usize, usize)> = Vec::new();
    let mut seen = vec![false; m + 1];
    for c in pattern.captures_iter(text) {
        let Ok(i) = c[1].parse::<usize>() else { continue };
        if (1..=m).contains(&i) && !seen[i] {
            seen[i] = true;
            let whole = c.get(0).unwrap();
            heads.push((whole.start(), whole.end(), i));
        }
    }
    if heads.len() != m {
        return None;
    }
    let mut parts = vec![String::new(); m];
    for (k, &(_, body_start, i)) in heads.iter().enumerate() {
        let body_end = heads.get(k + 1).map_or(text.len(), |h| h.0);
        parts[i - 1] = text[body_start..body_end].trim().to_string();
    }
    Some(parts)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn is_permutation(p: &[usize], m: usize) -> bool {
        let mut sorted = p.to_vec();
        sorted.sort_unstable();
        sorted == (1..=m).collect::<Vec<_>>()
    }

    #[test]
    fn ranked_order_line() {
        let p = parse_ranked_order("Ranked order: paper 3, paper 1, paper 2", 3);
        assert_eq!(p.permutation, [3, 1, 2]);
        assert_eq!(p.status, ParseStatus::Exact);
    }

    #[test]
    fn ranked_order_embedded_in_prose() {
        let text = "Some thoughts.\nRanked order: paper 1, paper 2, paper 3, paper 4, paper 5, paper 6\n1. Explanation: paper 6 is old.";
        let p = parse_ranked_order(text, 6);
        assert_eq!(p.permutation, [1, 2, 3, 4, 5, 6]);
        assert_eq!(p.status, ParseStatus::Exact);
    }

    #[test]
    fn bare_integers_on_ranked_line() {
        let p = parse_ranked_order("**Ranked order**: 2, 3, 1", 3);
        assert_eq!(p.permutation, [2, 3, 1]);
        assert_eq!(p.status, ParseStatus::Exact);
    }

    #[test]
    fn duplicates_and_out_of_range_are_repaired() {
        let p = parse_ranked_order("I like paper 2 ... again paper 2 ... and paper 9", 3);
        assert_eq!(p.permutation, [2, 1, 3]);
        assert_eq!(p.status, ParseStatus::Repaired);
        assert!(p.notes.iter().any(|n| n.contains("duplicate")));
        assert!(p.notes.iter().any(|n| n.contains("out of range")));
    }

    #[test]
    fn incomplete_ranked_line_is_repaired() {
        let p = parse_ranked_order("Ranked order: paper 4, paper 2", 4);
        assert_eq!(p.permutation, [4, 2, 1, 3]);
        assert_eq!(p.status, ParseStatus::Repaired);
    }

    #[test]
    fn prose_falls_back_to_identity() {
        let p = parse_ranked_order("I cannot decide.", 4);
        assert_eq!(p.permutation, [1, 2, 3, 4]);
        assert_eq!(p.status, ParseStatus::Fallback);
    }

    #[test]
    fn huge_index_is_out_of_range() {
        let p = parse_ranked_order("Ranked order: paper 99999999999999999999999, paper 1", 2);
        assert_eq!(p.permutation, [1, 2]);
        assert_eq!(p.status, ParseStatus::Repaired);
    }

    #[test]
    fn split_on_paper_headings() {
        let text = "Intro line.\nPaper 1\nRelevance: a.\n\nPaper 2: Relevance: b.\n**Paper 3** - c";
        let (parts, status) = split_analysis(text, 3);
        assert_eq!(status, SplitStatus::PaperHeadings);
        assert_eq!(parts, ["Relevance: a.", "Relevance: b.", "c"]);
    }

    #[test]
    fn split_on_numbered_list() {
        let text = "1. first thing\n2) second thing\n3. third";
        let (parts, status) = split_analysis(text, 3);
        assert_eq!(status, SplitStatus::NumberedList);
        assert_eq!(parts, ["first thing", "second thing", "third"]);
    }

    #[test]
    fn split_falls_back_to_shared() {
        let (parts, status) = split_analysis("Paper 1 is nice. Unstructured.", 2);
        assert_eq!(status, SplitStatus::Shared);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0], parts[1]);
    }

    proptest! {
        #[test]
        fn always_a_permutation(text in ".{0,200}", m in 1usize..12) {
            let p = parse_ranked_order(&text, m);
            prop_assert!(is_permutation(&p.permutation, m));
        }

        #[test]
        fn structured_noise_is_a_permutation(
            idx in proptest::collection::vec(0usize..20, 0..30),
            m in 1usize..12,
            with_line in any::<bool>(),
            cut in 0usize..400,
        ) {
            let list: Vec<String> = idx.iter().map(|i| format!("paper {i}")).collect();
            let mut text = if with_line { "Ranked order: ".to_string() } else { String::new() };
            text.push_str(&list.join(", "));
            let cut = text.char_indices().map(|(i, _)| i).find(|i| *i >= cut).unwrap_or(text.len());
            let p = parse_ranked_order(&text[..cut], m);
            prop_assert!(is_permutation(&p.permutation, m));
        }

        #[test]
        fn exact_roundtrip(perm in Just((1..=9).collect::<Vec<usize>>()).prop_shuffle()) {
            let line = perm.iter().map(|i| format!("paper {i}")).collect::<Vec<_>>().join(", ");
            let p = parse_ranked_order(&format!("Ranked order: {line}"), 9);
            prop_assert_eq!(p.permutation, perm);
            prop_assert_eq!(p.status, ParseStatus::Exact);
        }

        #[test]
        fn split_has_m_parts(text in ".{0,300}", m in 1usize..8) {
            prop_assert_eq!(split_analysis(&text, m).0.len(), m);
        }
    }
}

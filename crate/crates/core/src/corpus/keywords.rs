use std::collections::HashSet;

use super::PaperRecord;

fn folded(paper: &PaperRecord) -> HashSet<String> {
    paper
        .keywords
        .iter()
        .map(|k| k.trim().to_lowercase())
        .filter(|k| !k.is_empty())
        .collect()
}

/// Number of distinct keywords shared by two papers, compared case-folded.
pub fn keyword_overlap(a: &PaperRecord, b: &PaperRecord) -> usize {
    let left = folded(a);
    folded(b).iter().filter(|k| left.contains(*k)).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tests::paper;

    #[test]
    fn identical_sets() {
        let kw = ["a", "b", "c", "d"];
        assert_eq!(keyword_overlap(&paper("x", &kw), &paper("y", &kw)), 4);
    }

    #[test]
    fn disjoint_and_empty() {
        assert_eq!(keyword_overlap(&paper("x", &["a"]), &paper("y", &["b"])), 0);
        assert_eq!(keyword_overlap(&paper("x", &[]), &paper("y", &[])), 0);
    }

    #[test]
    fn case_folded() {
        let a = paper("x", &["DNA", "robot", "origami"]);
        let b = paper("y", &["dna", "Origami"]);
        assert_eq!(keyword_overlap(&a, &b), 2);
        assert_eq!(keyword_overlap(&b, &a), 2);
    }

    #[test]
    fn repeated_keywords_count_once() {
        let a = paper("x", &["dna", "DNA"]);
        let b = paper("y", &["Dna"]);
        assert_eq!(keyword_overlap(&a, &b), 1);
    }
}

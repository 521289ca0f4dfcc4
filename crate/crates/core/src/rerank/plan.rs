use serde::{Deserialize, Serialize};

use super::RerankError;

/// How a retrieval set of size `r_q` is split before agentic reranking.
///
/// The top `fixed_len` retrieved candidates are kept as they are; the
/// remaining `pool_len` are reranked and the best `slots` of them fill the
/// selection up to `t1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RerankPlan {
    pub r_q: usize,
    pub t1: usize,
    pub fixed_len: usize,
    pub pool_len: usize,
    pub slots: usize,
    /// `r_q > 2·t1`: nothing is exempt and the whole set is reranked.
    pub clamped: bool,
}

pub fn plan_split(r_q: usize, t1: usize) -> Result<RerankPlan, RerankError> {
    if t1 == 0 {
        return Err(RerankError::Plan("t1 must be at least 1".into()));
    }
    if r_q < t1 {
        return Err(RerankError::Plan(format!(
            "cannot select t1 = {t1} papers from a retrieval set of {r_q}"
        )));
    }
    let clamped = r_q > 2 * t1;
    let fixed_len = if clamped { 0 } else { 2 * t1 - r_q };
    Ok(RerankPlan {
        r_q,
        t1,
        fixed_len,
        pool_len: r_q - fixed_len,
        slots: t1 - fixed_len,
        clamped,
    })
}

impl RerankPlan {
    pub fn fixed<'a, T>(&self, retrieved: &'a [T]) -> &'a [T] {
        &retrieved[..self.fixed_len]
    }

    pub fn pool<'a, T>(&self, retrieved: &'a [T]) -> &'a [T] {
        &retrieved[self.fixed_len..self.r_q]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retrieval_size_seven() {
        let p = plan_split(7, 5).unwrap();
        assert_eq!((p.fixed_len, p.pool_len, p.slots), (3, 4, 2));
    }

    #[test]
    fn retrieval_size_eight() {
        let p = plan_split(8, 5).unwrap();
        assert_eq!((p.fixed_len, p.pool_len, p.slots), (2, 6, 3));
    }

    #[test]
    fn boundary_two_t1() {
        let p = plan_split(10, 5).unwrap();
        assert_eq!((p.fixed_len, p.pool_len, p.slots), (0, 10, 5));
        assert!(!p.clamped);
    }

    #[test]
    fn beyond_two_t1_is_clamped() {
        let p = plan_split(13, 5).unwrap();
        assert_eq!((p.fixed_len, p.pool_len, p.slots), (0, 13, 5));
        assert!(p.clamped);
    }

    #[test]
    fn equal_sizes_need_no_rerank() {
        let p = plan_split(5, 5).unwrap();
        assert_eq!((p.fixed_len, p.pool_len, p.slots), (5, 0, 0));
    }

    #[test]
    fn too_small_retrieval_is_an_error() {
        assert!(plan_split(4, 5).is_err());
        assert!(plan_split(4, 0).is_err());
    }

    #[test]
    fn arithmetic_identities() {
        for t1 in 1..=20 {
            for r in t1..=2 * t1 {
                let p = plan_split(r, t1).unwrap();
                assert_eq!(p.fixed_len, 2 * t1 - r);
                assert_eq!(p.pool_len, 2 * (r - t1));
                assert_eq!(p.slots, r - t1);
                assert_eq!(p.fixed_len + p.pool_len, r);
                assert_eq!(p.fixed_len + p.slots, t1);
            }
        }
    }

    #[test]
    fn slices() {
        let ids = ["a", "b", "c", "d", "e", "f", "g", "h"];
        let p = plan_split(8, 5).unwrap();
        assert_eq!(p.fixed(&ids), ["a", "b"]);
        assert_eq!(p.pool(&ids), ["c", "d", "e", "f", "g", "h"]);
    }
}

//! Ranking metrics, aggregation with bootstrap intervals, and significance tests.

mod report;
mod stats;

pub use report::{
    aggregate, external_ranking, keyword_overlap_rank, pairwise_pvalues, read_score_file,
    BootstrapConfig, GroupSummary, MetricsReport, QueryMetrics, ScoreRecord, SystemReport,
};
pub use stats::{
    bootstrap_interval, mean, significance_stars, two_tailed_t_pvalue, welch_ttest, Interval,
    TTest,
};

use std::collections::{BTreeMap, HashSet};

use crate::corpus::{EvalInstance, Grade};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("k = {k} exceeds ranking length {len}")]
    KTooLarge { k: usize, len: usize },
    #[error("k must be positive")]
    ZeroK,
    #[error("ranked id `{id}` is not a candidate of query `{query}`")]
    UnknownCandidate { query: String, id: String },
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Gain assigned to each relevance grade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gains<S> {
    pub core: S,
    pub superficial: S,
    pub none: S,
}

impl<S: Scalar> Gains<S> {
    /// Only core citations carry gain.
    pub fn binary() -> Self {
        Self {
            core: S::one(),
            superficial: S::zero(),
            none: S::zero(),
        }
    }

    /// core = 2, superficial = 1, none = 0.
    pub fn graded() -> Self {
        Self {
            core: S::of(2.0),
            superficial: S::one(),
            none: S::zero(),
        }
    }

    pub fn of(&self, grade: Grade) -> S {
        match grade {
            Grade::Core => self.core,
            Grade::Superficial => self.superficial,
            Grade::None => self.none,
        }
    }
}

/// An ordered list of candidates with their grades, plus the grade counts of
/// the whole candidate set used for ideal normalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradedRanking {
    pub ids: Vec<String>,
    pub grades: Vec<Grade>,
    /// (core, superficial, none) over the full candidate set.
    pub pool: (usize, usize, usize),
}

impl GradedRanking {
    pub fn from_instance<I: AsRef<str>>(
        ranked: &[I],
        instance: &EvalInstance,
    ) -> Result<Self, EvalError> {
        let members: HashSet<&str> = instance.candidates.iter().map(String::as_str).collect();
        let mut ids = Vec::with_capacity(ranked.len());
        let mut grades = Vec::with_capacity(ranked.len());
        for id in ranked {
            let id = id.as_ref();
            if !members.contains(id) {
                return Err(EvalError::UnknownCandidate {
                    query: instance.query.clone(),
                    id: id.to_string(),
                });
            }
            ids.push(id.to_string());
            grades.push(instance.grade(id));
        }
        Ok(Self {
            ids,
            grades,
            pool: instance.grade_counts(),
        })
    }

    /// Ranking over anonymous items; the pool is the ranking itself.
    pub fn from_grades(grades: Vec<Grade>) -> Self {
        let count = |g| grades.iter().filter(|x| **x == g).count();
        let pool = (
            count(Grade::Core),
            count(Grade::Superficial),
            count(Grade::None),
        );
        Self {
            ids: (0..grades.len()).map(|i| i.to_string()).collect(),
            grades,
            pool,
        }
    }

    pub fn len(&self) -> usize {
        self.grades.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grades.is_empty()
    }
}

fn check_k(k: usize, len: usize) -> Result<(), EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if k > len {
        return Err(EvalError::KTooLarge { k, len });
    }
    Ok(())
}

/// Fraction of the first `k` items that are core citations.
pub fn precision_at_k<S: Scalar>(ranking: &GradedRanking, k: usize) -> Result<S, EvalError> {
    check_k(k, ranking.len())?;
    let hits = ranking.grades[..k]
        .iter()
        .filter(|g| **g == Grade::Core)
        .count();
    Ok(S::of(hits as f64) / S::of(k as f64))
}

/// NDCG value; `degenerate` marks instances with no positive gain, scored 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ndcg<S> {
    pub value: S,
    pub degenerate: bool,
}

fn discount<S: Scalar>(position: usize) -> S {
    S::one() / S::of((position + 1) as f64).log2()
}

/// Log2-discounted DCG@k normalized by the ideal DCG@k of the candidate set.
pub fn ndcg_at_k<S: Scalar>(
    ranking: &GradedRanking,
    k: usize,
    gains: &Gains<S>,
) -> Result<Ndcg<S>, EvalError> {
    check_k(k, ranking.len())?;
    let dcg: S = ranking.grades[..k]
        .iter()
        .enumerate()
        .map(|(i, g)| gains.of(*g) * discount::<S>(i + 1))
        .sum();

    let (core, superficial, none) = ranking.pool;
    let mut ideal: Vec<S> = std::iter::repeat_n(gains.core, core)
        .chain(std::iter::repeat_n(gains.superficial, superficial))
        .chain(std::iter::repeat_n(gains.none, none.min(k)))
        .collect();
    ideal.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let idcg: S = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, g)| *g * discount::<S>(i + 1))
        .sum();

    if idcg <= S::zero() {
        return Ok(Ndcg {
            value: S::zero(),
            degenerate: true,
        });
    }
    Ok(Ndcg {
        value: dcg / idcg,
        degenerate: false,
    })
}

/// Metric names in report order.
pub fn metric_names(ks: &[usize]) -> Vec<String> {
    ks.iter()
        .map(|k| format!("prec@{k}"))
        .chain(ks.iter().map(|k| format!("ndcg@{k}")))
        .collect()
}

/// PREC@k and NDCG@k for each `k`.
pub fn score_ranking(
    ranking: &GradedRanking,
    ks: &[usize],
    gains: &Gains<f64>,
) -> Result<BTreeMap<String, f64>, EvalError> {
    let mut out = BTreeMap::new();
    for &k in ks {
        out.insert(format!("prec@{k}"), precision_at_k::<f64>(ranking, k)?);
        out.insert(format!("ndcg@{k}"), ndcg_at_k(ranking, k, gains)?.value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use Grade::{Core as C, None as N, Superficial as S};

    #[test]
    fn precision_saturates() {
        let r = GradedRanking::from_grades(vec![C; 5]);
        assert_eq!(precision_at_k::<f64>(&r, 5).unwrap(), 1.0);
    }

    #[test]
    fn precision_counts_cores() {
        let r = GradedRanking::from_grades(vec![C, C, N, C, S]);
        assert!((precision_at_k::<f64>(&r, 5).unwrap() - 0.6).abs() < 1e-15);
        assert!(matches!(
            precision_at_k::<f64>(&r, 6),
            Err(EvalError::KTooLarge { k: 6, len: 5 })
        ));
    }

    #[test]
    fn ndcg_perfect_and_single() {
        let r = GradedRanking::from_grades(vec![C, C, S, N]);
        assert_eq!(ndcg_at_k(&r, 4, &Gains::<f64>::binary()).unwrap().value, 1.0);
        assert_eq!(ndcg_at_k(&r, 1, &Gains::<f64>::binary()).unwrap().value, 1.0);
        assert_eq!(ndcg_at_k(&r, 4, &Gains::<f64>::graded()).unwrap().value, 1.0);
    }

    #[test]
    fn ndcg_worked_example() {
        let r = GradedRanking::from_grades(vec![C, N, C]);
        let expected = (1.0 + 1.0 / 4f64.log2()) / (1.0 + 1.0 / 3f64.log2());
        let got = ndcg_at_k(&r, 3, &Gains::<f64>::binary()).unwrap().value;
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.9197).abs() < 1e-4);
    }

    #[test]
    fn ndcg_normalizes_over_full_pool() {
        // Selection of length 2 drawn from a pool with 3 cores: a perfect
        // top-2 still scores 1.
        let r = GradedRanking {
            ids: vec!["a".into(), "b".into()],
            grades: vec![C, C],
            pool: (3, 0, 10),
        };
        assert_eq!(ndcg_at_k(&r, 2, &Gains::<f64>::binary()).unwrap().value, 1.0);
        let r = GradedRanking {
            grades: vec![N, C],
            ..r
        };
        let v = ndcg_at_k(&r, 2, &Gains::<f64>::binary()).unwrap().value;
        assert!((v - (1.0 / 3f64.log2()) / (1.0 + 1.0 / 3f64.log2())).abs() < 1e-15);
    }

    #[test]
    fn all_zero_gains_are_degenerate() {
        let r = GradedRanking::from_grades(vec![N, S, N]);
        let v = ndcg_at_k(&r, 3, &Gains::<f64>::binary()).unwrap();
        assert!(v.degenerate);
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn generic_f32() {
        let r = GradedRanking::from_grades(vec![C, N, C]);
        let v = ndcg_at_k::<f32>(&r, 3, &Gains::binary()).unwrap().value;
        assert!((v - 0.9197).abs() < 1e-4);
    }

    #[test]
    fn unknown_candidate_rejected() {
        let inst = EvalInstance {
            query: "q".into(),
            candidates: vec!["a".into(), "b".into()],
            core: vec!["a".into()],
            superficial: vec!["b".into()],
            t_q: 2,
            t1: 1,
            t2: 1,
            seed: 0,
        };
        assert!(GradedRanking::from_instance(&["a", "b"], &inst).is_ok());
        assert!(matches!(
            GradedRanking::from_instance(&["a", "z"], &inst),
            Err(EvalError::UnknownCandidate { .. })
        ));
    }

    fn arb_grades() -> impl Strategy<Value = Vec<Grade>> {
        proptest::collection::vec(prop_oneof![Just(C), Just(S), Just(N)], 1..12)
    }

    proptest! {
        #[test]
        fn metrics_in_range(grades in arb_grades(), k_seed in any::<usize>()) {
            let r = GradedRanking::from_grades(grades);
            let k = 1 + k_seed % r.len();
            let p = precision_at_k::<f64>(&r, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(((p * k as f64).round() - p * k as f64).abs() < 1e-12);
            for gains in [Gains::binary(), Gains::graded()] {
                let n = ndcg_at_k(&r, k, &gains).unwrap().value;
                prop_assert!((0.0..=1.0 + 1e-12).contains(&n));
            }
        }

        #[test]
        fn sorted_ranking_scores_one(grades in arb_grades(), k_seed in any::<usize>()) {
            let mut sorted = grades.clone();
            sorted.sort();
            let r = GradedRanking::from_grades(sorted);
            let k = 1 + k_seed % r.len();
            let n = ndcg_at_k(&r, k, &Gains::<f64>::graded()).unwrap();
            prop_assert!(n.degenerate || (n.value - 1.0).abs() < 1e-12);
        }
    }
}

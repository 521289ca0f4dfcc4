use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CitationGraph, CorpusError};
use crate::seed::{derive_seed, rng};

/// Ground-truth sampled citations for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySample {
    #[serde(rename = "query_id")]
    pub query: String,
    #[serde(rename = "core_ids")]
    pub core: Vec<String>,
    #[serde(rename = "superficial_ids")]
    pub superficial: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleOutcome {
    pub samples: Vec<QuerySample>,
    pub eligible: usize,
    /// Set when fewer than the requested number of queries were eligible.
    pub warning: Option<String>,
}

/// Draws up to `count` queries with at least `t1` core and `t2` superficial
/// citations, then draws the per-query core and superficial subsets.
///
/// Output is sorted by query id and is a pure function of the arguments.
pub fn sample_queries(
    graph: &CitationGraph,
    t1: usize,
    t2: usize,
    count: usize,
    seed: u64,
) -> Result<SampleOutcome, CorpusError> {
    if t1 == 0 || t2 == 0 {
        return Err(CorpusError::InvalidArgument(format!(
            "t1 and t2 must be at least 1 (got {t1}, {t2})"
        )));
    }
    let eligible: Vec<_> = (0..graph.node_count() as u32)
        .into_par_iter()
        .map(|n| graph.label_node(n))
        .filter(|l| l.k_q >= t1 && l.n_q - l.k_q >= t2)
        .collect();

    let mut warning = None;
    let chosen: Vec<usize> = if eligible.len() <= count {
        if eligible.len() < count {
            warning = Some(format!(
                "requested {count} queries but only {} are eligible",
                eligible.len()
            ));
        }
        (0..eligible.len()).collect()
    } else {
        let mut picked = index::sample(&mut rng(derive_seed(seed, "queries")), eligible.len(), count)
            .into_vec();
        picked.sort_unstable();
        picked
    };

    let samples = chosen
        .into_iter()
        .map(|i| {
            let label = &eligible[i];
            let query_seed = derive_seed(seed, &format!("sample/{}", label.query));
            let mut r = rng(query_seed);
            QuerySample {
                query: label.query.clone(),
                core: subset(&mut r, &label.core, t1),
                superficial: subset(&mut r, &label.superficial, t2),
                seed: query_seed,
            }
        })
        .collect();

    Ok(SampleOutcome {
        samples,
        eligible: eligible.len(),
        warning,
    })
}

fn subset<R: Rng>(rng: &mut R, from: &[String], amount: usize) -> Vec<String> {
    let mut picked = index::sample(rng, from.len(), amount).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| from[i].clone()).collect()
}

/// Train:test proportion, e.g. `8:2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitRatio(Ratio<u64>);

impl SplitRatio {
    pub fn new(train: u64, test: u64) -> Result<Self, CorpusError> {
        if train == 0 || test == 0 {
            return Err(CorpusError::InvalidArgument(format!(
                "split ratio {train}:{test} must have both parts positive"
            )));
        }
        Ok(Self(Ratio::new(train, train + test)))
    }

    /// Fraction of samples that go to the training set.
    pub fn train_fraction(self) -> Ratio<u64> {
        self.0
    }

    /// Training-set size for `total` samples, rounded half up.
    pub fn train_len(self, total: usize) -> usize {
        (Ratio::from_integer(total as u64) * self.0).round().to_integer() as usize
    }
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self(Ratio::new(8, 10))
    }
}

impl fmt::Display for SplitRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.0.numer(), self.0.denom() - self.0.numer())
    }
}

impl FromStr for SplitRatio {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CorpusError::InvalidArgument(format!("cannot parse split ratio `{s}`"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let train = a.trim().parse().map_err(|_| bad())?;
        let test = b.trim().parse().map_err(|_| bad())?;
        Self::new(train, test)
    }
}

/// Seeded random partition; each side keeps the input order.
pub fn split_train_test(
    samples: &[QuerySample],
    ratio: SplitRatio,
    seed: u64,
) -> (Vec<QuerySample>, Vec<QuerySample>) {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng(derive_seed(seed, "split")));
    let mut in_train = vec![false; samples.len()];
    for &i in &order[..ratio.train_len(samples.len())] {
        in_train[i] = true;
    }
    let (train, test): (Vec<_>, Vec<_>) = samples
        .iter()
        .cloned()
        .zip(in_train)
        .partition(|(_, t)| *t);
    (
        train.into_iter().map(|(s, _)| s).collect(),
        test.into_iter().map(|(s, _)| s).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grade {
    Core,
    Superficial,
    None,
}

/// One task instance: a query and its shuffled candidate set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalInstance {
    #[serde(rename = "query_id")]
    pub query: String,
    pub candidates: Vec<String>,
    #[serde(rename = "core_ids")]
    pub core: Vec<String>,
    #[serde(rename = "superficial_ids")]
    pub superficial: Vec<String>,
    pub t_q: usize,
    pub t1: usize,
    pub t2: usize,
    pub seed: u64,
}

impl EvalInstance {
    pub fn grade(&self, id: &str) -> Grade {
        if self.core.iter().any(|c| c == id) {
            Grade::Core
        } else if self.superficial.iter().any(|c| c == id) {
            Grade::Superficial
        } else {
            Grade::None
        }
    }

    /// Counts of (core, superficial, none) grades over the candidate set.
    pub fn grade_counts(&self) -> (usize, usize, usize) {
        (self.t1, self.t2, self.t_q - self.t1 - self.t2)
    }
}

/// Builds the candidate set: sampled core and superficial citations plus
/// uniformly drawn papers that are neither the query nor cited by it.
pub fn build_eval_instance(
    sample: &QuerySample,
    graph: &CitationGraph,
    t_q: usize,
    seed: u64,
) -> Result<EvalInstance, CorpusError> {
    let t1 = sample.core.len();
    let t2 = sample.superficial.len();
    if t_q < t1 + t2 {
        return Err(CorpusError::InvalidArgument(format!(
            "t_q = {t_q} is smaller than t1 + t2 = {}",
            t1 + t2
        )));
    }
    let query = graph
        .index_of(&sample.query)
        .ok_or_else(|| CorpusError::NotFound(sample.query.clone()))?;
    let references = graph.references(query);
    for id in sample.core.iter().chain(&sample.superficial) {
        let cited = graph
            .index_of(id)
            .is_some_and(|n| references.binary_search(&n).is_ok());
        if !cited {
            return Err(CorpusError::InvalidArgument(format!(
                "sampled id `{id}` is not cited by `{}`",
                sample.query
            )));
        }
    }

    let mut excluded: Vec<u32> = references.to_vec();
    if let Err(pos) = excluded.binary_search(&query) {
        excluded.insert(pos, query);
    }
    let is_excluded = |n: u32| excluded.binary_search(&n).is_ok();
    let total = graph.node_count();
    let needed = t_q - t1 - t2;
    let available = total - excluded.len();
    if needed > available {
        return Err(CorpusError::CorpusTooSmall {
            required: t_q,
            required_pool: needed,
            available,
        });
    }

    let instance_seed = derive_seed(seed, &format!("instance/{}", sample.query));
    let mut r = rng(instance_seed);
    let fillers: Vec<u32> = if needed * 2 <= available {
        let mut seen = HashSet::with_capacity(needed);
        let mut out = Vec::with_capacity(needed);
        while out.len() < needed {
            let n = r.random_range(0..total as u32);
            if !is_excluded(n) && seen.insert(n) {
                out.push(n);
            }
        }
        out
    } else {
        let pool: Vec<u32> = (0..total as u32).filter(|&n| !is_excluded(n)).collect();
        index::sample(&mut r, pool.len(), needed)
            .into_iter()
            .map(|i| pool[i])
            .collect()
    };

    let mut candidates: Vec<String> = sample
        .core
        .iter()
        .chain(&sample.superficial)
        .cloned()
        .chain(fillers.into_iter().map(|n| graph.id(n).to_string()))
        .collect();
    candidates.shuffle(&mut r);

    Ok(EvalInstance {
        query: sample.query.clone(),
        candidates,
        core: sample.core.clone(),
        superficial: sample.superficial.clone(),
        t_q,
        t1,
        t2,
        seed: instance_seed,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::corpus::tests::paper;
    use crate::corpus::{build_graph, Corpus};

    /// Graph with `extra` isolated papers plus, for each of `queries` queries,
    /// `cores` core and `sups` superficial references.
    fn planted(queries: usize, cores: usize, sups: usize, extra: usize) -> CitationGraph {
        let mut ids = Vec::new();
        let mut edges = Vec::new();
        for q in 0..queries {
            let qid = format!("q{q:02}");
            let fid = format!("f{q:02}");
            ids.push(qid.clone());
            ids.push(fid.clone());
            edges.push((fid.clone(), qid.clone()));
            for c in 0..cores {
                let cid = format!("c{q:02}_{c}");
                ids.push(cid.clone());
                edges.push((qid.clone(), cid.clone()));
                edges.push((fid.clone(), cid));
            }
            for s in 0..sups {
                let sid = format!("s{q:02}_{s}");
                ids.push(sid.clone());
                edges.push((qid.clone(), sid));
            }
        }
        for e in 0..extra {
            ids.push(format!("x{e:05}"));
        }
        let corpus = Corpus::from_records(ids.iter().map(|id| paper(id, &[])).collect()).unwrap();
        build_graph(&corpus, edges).0
    }

    #[test]
    fn no_eligible_queries_warns() {
        let g = planted(3, 2, 2, 10);
        let out = sample_queries(&g, 5, 5, 10, 1).unwrap();
        assert!(out.samples.is_empty());
        assert!(out.warning.is_some());
    }

    #[test]
    fn sampling_is_deterministic_and_subsetted() {
        let g = planted(12, 7, 6, 50);
        let a = sample_queries(&g, 5, 5, 8, 42).unwrap();
        let b = sample_queries(&g, 5, 5, 8, 42).unwrap();
        assert_eq!(
            serde_json::to_string(&a.samples).unwrap(),
            serde_json::to_string(&b.samples).unwrap()
        );
        assert_eq!(a.samples.len(), 8);
        assert_eq!(a.eligible, 12);
        assert!(a.warning.is_none());
        for s in &a.samples {
            let label = g.label_citations(&s.query).unwrap();
            assert_eq!(s.core.len(), 5);
            assert_eq!(s.superficial.len(), 5);
            assert!(s.core.iter().all(|c| label.core.contains(c)));
            assert!(s.superficial.iter().all(|c| label.superficial.contains(c)));
        }
        let c = sample_queries(&g, 5, 5, 8, 43).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn zero_subset_size_rejected() {
        let g = planted(1, 1, 1, 0);
        assert!(sample_queries(&g, 0, 1, 1, 0).is_err());
    }

    fn fake_samples(n: usize) -> Vec<QuerySample> {
        (0..n)
            .map(|i| QuerySample {
                query: format!("q{i}"),
                core: vec![],
                superficial: vec![],
                seed: i as u64,
            })
            .collect()
    }

    #[test]
    fn split_eight_two() {
        let samples = fake_samples(10);
        let (train, test) = split_train_test(&samples, SplitRatio::default(), 3);
        assert_eq!((train.len(), test.len()), (8, 2));
        let all: BTreeSet<_> = train.iter().chain(&test).map(|s| s.query.clone()).collect();
        assert_eq!(all.len(), 10);
        assert_eq!(split_train_test(&samples, SplitRatio::default(), 3), (train, test));
    }

    #[test]
    fn split_single_sample_conserves() {
        let samples = fake_samples(1);
        let (train, test) = split_train_test(&samples, "8:2".parse().unwrap(), 0);
        assert_eq!((train.len(), test.len()), (1, 0));
        let (train, test) = split_train_test(&samples, "2:8".parse().unwrap(), 0);
        assert_eq!((train.len(), test.len()), (0, 1));
        for n in 0..40 {
            let (a, b) = split_train_test(&fake_samples(n), "7:3".parse().unwrap(), 9);
            assert_eq!(a.len() + b.len(), n);
        }
    }

    #[test]
    fn split_ratio_parse_and_display() {
        let r: SplitRatio = "8:2".parse().unwrap();
        assert_eq!(r.to_string(), "4:1");
        assert!("8:0".parse::<SplitRatio>().is_err());
        assert!("eight".parse::<SplitRatio>().is_err());
    }

    #[test]
    fn instance_without_fillers() {
        let g = planted(4, 6, 6, 0);
        let s = &sample_queries(&g, 5, 5, 4, 7).unwrap().samples[0];
        let inst = build_eval_instance(s, &g, 10, 7).unwrap();
        assert_eq!(inst.candidates.len(), 10);
        let grades: Vec<Grade> = inst.candidates.iter().map(|c| inst.grade(c)).collect();
        assert_eq!(grades.iter().filter(|g| **g == Grade::Core).count(), 5);
        assert_eq!(grades.iter().filter(|g| **g == Grade::Superficial).count(), 5);
    }

    #[test]
    fn fillers_avoid_query_and_references() {
        let g = planted(20, 6, 6, 400);
        let samples = sample_queries(&g, 5, 5, 20, 5).unwrap().samples;
        for (i, s) in samples.iter().enumerate() {
            for t_q in [10, 40, 300, 450] {
                let inst = build_eval_instance(s, &g, t_q, i as u64).unwrap();
                let refs: BTreeSet<&str> = g.references_of(&s.query).unwrap().into_iter().collect();
                let unique: BTreeSet<&String> = inst.candidates.iter().collect();
                assert_eq!(unique.len(), t_q);
                assert!(!inst.candidates.contains(&s.query));
                let (c, sup, none) = inst.grade_counts();
                let mut counts = (0, 0, 0);
                for cand in &inst.candidates {
                    match inst.grade(cand) {
                        Grade::Core => counts.0 += 1,
                        Grade::Superficial => counts.1 += 1,
                        Grade::None => {
                            counts.2 += 1;
                            assert!(!refs.contains(cand.as_str()), "filler {cand} is a reference");
                        }
                    }
                }
                assert_eq!(counts, (c, sup, none));
            }
        }
    }

    #[test]
    fn instance_is_deterministic() {
        let g = planted(2, 6, 6, 100);
        let s = &sample_queries(&g, 5, 5, 1, 1).unwrap().samples[0];
        assert_eq!(
            build_eval_instance(s, &g, 60, 4).unwrap(),
            build_eval_instance(s, &g, 60, 4).unwrap()
        );
        assert_ne!(
            build_eval_instance(s, &g, 60, 4).unwrap().candidates,
            build_eval_instance(s, &g, 60, 5).unwrap().candidates
        );
    }

    #[test]
    fn corpus_too_small_names_size() {
        let g = planted(1, 5, 5, 3);
        let s = &sample_queries(&g, 5, 5, 1, 1).unwrap().samples[0];
        match build_eval_instance(s, &g, 1000, 0) {
            Err(CorpusError::CorpusTooSmall { required, .. }) => assert_eq!(required, 1000),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn large_candidate_sets() {
        let g = planted(1, 5, 5, 100_100);
        let s = &sample_queries(&g, 5, 5, 1, 1).unwrap().samples[0];
        for t_q in [1_000, 10_000, 100_000] {
            let inst = build_eval_instance(s, &g, t_q, 0).unwrap();
            assert_eq!(inst.candidates.len(), t_q);
        }
    }
}

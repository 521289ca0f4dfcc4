use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::{bootstrap_interval, significance_stars, welch_ttest, Interval};
use super::{EvalError, GradedRanking};
use crate::corpus::{keyword_overlap, Corpus, EvalInstance, Field, PaperRecord};
use crate::seed::rng_for;

/// Metric values of one system on one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    #[serde(rename = "query_id")]
    pub query: String,
    pub field: Field,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 1000,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
    pub half_width: f64,
}

/// Means and 95% intervals of every metric over one group of queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    #[serde(flatten)]
    pub means: BTreeMap<String, f64>,
    pub ci95: BTreeMap<String, Bounds>,
    pub n: usize,
    /// Fewer than two queries: intervals collapse onto the mean.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemReport {
    pub fields: BTreeMap<String, GroupSummary>,
    pub domains: BTreeMap<String, GroupSummary>,
    pub overall: GroupSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub systems: BTreeMap<String, SystemReport>,
    /// metric → system → system → test over all queries.
    pub pairwise: BTreeMap<String, BTreeMap<String, BTreeMap<String, PairwiseTest>>>,
}

fn summarize(
    rows: &[&QueryMetrics],
    metrics: &[String],
    bootstrap: BootstrapConfig,
    group: &str,
) -> GroupSummary {
    let mut means = BTreeMap::new();
    let mut ci95 = BTreeMap::new();
    let mut degenerate = false;
    for metric in metrics {
        let values: Vec<f64> = rows
            .iter()
            .filter_map(|r| r.values.get(metric).copied())
            .collect();
        let mut rng = rng_for(bootstrap.seed, &format!("{group}/{metric}"));
        let Interval {
            mean,
            lo,
            hi,
            half_width,
            degenerate: d,
            ..
        } = bootstrap_interval(&values, bootstrap.resamples, &mut rng);
        degenerate |= d;
        means.insert(metric.clone(), mean);
        ci95.insert(metric.clone(), Bounds { lo, hi, half_width });
    }
    GroupSummary {
        means,
        ci95,
        n: rows.len(),
        degenerate,
    }
}

/// Per-field, per-domain and overall means with bootstrap intervals.
///
/// Rows are ordered by query id first, so the result does not depend on the
/// input order.
pub fn aggregate(
    per_query: &[QueryMetrics],
    metrics: &[String],
    bootstrap: BootstrapConfig,
) -> SystemReport {
    let mut rows: Vec<&QueryMetrics> = per_query.iter().collect();
    rows.sort_by(|a, b| a.query.cmp(&b.query));

    let mut by_field: BTreeMap<Field, Vec<&QueryMetrics>> = BTreeMap::new();
    let mut by_domain: BTreeMap<String, Vec<&QueryMetrics>> = BTreeMap::new();
    for row in &rows {
        by_field.entry(row.field).or_default().push(row);
        by_domain
            .entry(row.field.domain().to_string())
            .or_default()
            .push(row);
    }
    SystemReport {
        fields: by_field
            .into_iter()
            .map(|(field, group)| {
                let name = field.name().to_string();
                let summary = summarize(&group, metrics, bootstrap, &format!("field/{name}"));
                (name, summary)
            })
            .collect(),
        domains: by_domain
            .into_iter()
            .map(|(domain, group)| {
                let summary = summarize(&group, metrics, bootstrap, &format!("domain/{domain}"));
                (domain, summary)
            })
            .collect(),
        overall: summarize(&rows, metrics, bootstrap, "overall"),
    }
}

/// Welch tests between every pair of systems on every metric.
pub fn pairwise_pvalues(
    systems: &BTreeMap<String, Vec<QueryMetrics>>,
    metrics: &[String],
) -> BTreeMap<String, BTreeMap<String, BTreeMap<String, PairwiseTest>>> {
    let mut out = BTreeMap::new();
    for metric in metrics {
        let mut matrix: BTreeMap<String, BTreeMap<String, PairwiseTest>> = BTreeMap::new();
        for (a, rows_a) in systems {
            for (b, rows_b) in systems {
                if a == b {
                    continue;
                }
                let values = |rows: &[QueryMetrics]| -> Vec<f64> {
                    let mut v: Vec<(&str, f64)> = rows
                        .iter()
                        .filter_map(|r| r.values.get(metric).map(|x| (r.query.as_str(), *x)))
                        .collect();
                    v.sort_by(|x, y| x.0.cmp(y.0));
                    v.into_iter().map(|(_, x)| x).collect()
                };
                if let Ok(test) = welch_ttest(&values(rows_a), &values(rows_b)) {
                    matrix.entry(a.clone()).or_default().insert(
                        b.clone(),
                        PairwiseTest {
                            t: test.t,
                            df: test.df,
                            p_value: test.p_value,
                            stars: significance_stars(test.p_value).to_string(),
                        },
                    );
                }
            }
        }
        out.insert(metric.clone(), matrix);
    }
    out
}

impl MetricsReport {
    pub fn build(
        systems: &BTreeMap<String, Vec<QueryMetrics>>,
        metrics: &[String],
        bootstrap: BootstrapConfig,
    ) -> Self {
        Self {
            systems: systems
                .iter()
                .map(|(name, rows)| (name.clone(), aggregate(rows, metrics, bootstrap)))
                .collect(),
            pairwise: pairwise_pvalues(systems, metrics),
        }
    }

    /// Flat rows: system, scope, group, metric, mean, ci_lo, ci_hi, half_width, n.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "system", "scope", "group", "metric", "mean", "ci_lo", "ci_hi", "half_width", "n",
        ])?;
        for (system, report) in &self.systems {
            let groups = report
                .fields
                .iter()
                .map(|(g, s)| ("field", g.as_str(), s))
                .chain(report.domains.iter().map(|(g, s)| ("domain", g.as_str(), s)))
                .chain(std::iter::once(("overall", "all", &report.overall)));
            for (scope, group, summary) in groups {
                for (metric, mean) in &summary.means {
                    let b = summary.ci95[metric];
                    w.write_record([
                        system.as_str(),
                        scope,
                        group,
                        metric,
                        &mean.to_string(),
                        &b.lo.to_string(),
                        &b.hi.to_string(),
                        &b.half_width.to_string(),
                        &summary.n.to_string(),
                    ])?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Keyword-overlap baseline: candidates by shared keyword count, descending,
/// ties by ascending id.
pub fn keyword_overlap_rank(
    query: &PaperRecord,
    instance: &EvalInstance,
    corpus: &Corpus,
) -> Result<GradedRanking, EvalError> {
    let mut scored = Vec::with_capacity(instance.candidates.len());
    for id in &instance.candidates {
        let paper = corpus.get(id).ok_or_else(|| EvalError::UnknownCandidate {
            query: instance.query.clone(),
            id: id.clone(),
        })?;
        scored.push((keyword_overlap(query, paper), id.as_str()));
    }
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
    let ranked: Vec<&str> = scored.into_iter().map(|(_, id)| id).collect();
    GradedRanking::from_instance(&ranked, instance)
}

/// Per-candidate scores from an external system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub query_id: String,
    pub scores: BTreeMap<String, f64>,
}

pub fn read_score_file(path: &Path) -> Result<HashMap<String, ScoreRecord>, EvalError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ScoreRecord = serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.insert(record.query_id.clone(), record);
    }
    Ok(out)
}

/// Candidates by external score, descending; unscored candidates last; ties by id.
pub fn external_ranking(record: &ScoreRecord, instance: &EvalInstance) -> Vec<String> {
    let mut scored: Vec<(f64, &String)> = instance
        .candidates
        .iter()
        .map(|id| {
            let s = record.scores.get(id).copied().unwrap_or(f64::NEG_INFINITY);
            (if s.is_nan() { f64::NEG_INFINITY } else { s }, id)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    scored.into_iter().map(|(_, id)| id.clone()).collect()
}

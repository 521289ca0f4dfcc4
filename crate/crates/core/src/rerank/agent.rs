//! The analyze-then-decide pass over one query's rerank pool.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chat::{AgentRole, CallHint, CallRecord, ChatClient, TokenUsage};
use super::oneshot::{OneShotExample, OneShotLibrary};
use super::parse::{parse_ranked_order, split_analysis, ParsedOrder, SplitStatus};
use super::plan::{plan_split, RerankPlan};
use super::prompt::{render_analyzer_prompt, render_decider_prompt, Guidance, PaperText, Templates};
use super::RerankError;
use crate::corpus::{Corpus, Field, PaperRecord};

/// Slot text for exempt papers when the whole retrieval set is numbered.
pub const EXEMPT_ANALYSIS: &str =
    "Kept at its retrieval position; listed for context only and not to be ranked.";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Numbering {
    /// Only the rerank pool is shown, numbered from 1.
    #[default]
    PoolOnly,
    /// The decider sees the whole retrieval set; exempt papers carry a
    /// placeholder analysis and are filtered out of its ranking.
    FullSet,
}

impl std::str::FromStr for Numbering {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "pool_only" | "pool" => Ok(Self::PoolOnly),
            "full_set" | "full" => Ok(Self::FullSet),
            other => Err(format!("unknown numbering `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Skip the analyzer; the decider reads raw abstracts.
    #[serde(default)]
    pub no_analyzer: bool,
    /// No worked example in either prompt.
    #[serde(default)]
    pub no_guider: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RerankConfig {
    #[serde(default)]
    pub ablation: Ablation,
    /// Prefer a one-shot example tagged with the query's field.
    #[serde(default)]
    pub per_field_oneshot: bool,
    #[serde(default)]
    pub numbering: Numbering,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    FixedPrefix,
    Reranked,
    /// Filled from retrieval order after the agents failed.
    RetrievalFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalSelection {
    pub query_id: String,
    pub selected: Vec<String>,
    pub provenance: Vec<Provenance>,
    #[serde(default)]
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTranscript {
    pub query_id: String,
    pub plan: RerankPlan,
    pub oneshot: Option<String>,
    /// Ids shown to the decider, in prompt numbering order.
    pub presented_ids: Vec<String>,
    pub analyzer: Option<CallRecord>,
    pub analysis_split: Option<SplitStatus>,
    pub analyses: Vec<String>,
    pub decider: Option<CallRecord>,
    pub parsed: Option<ParsedOrder>,
    /// 1-based pool indices in decider order.
    pub pool_order: Vec<usize>,
    pub warnings: Vec<String>,
    /// Sum over `analyzer` and `decider`.
    pub usage: TokenUsage,
    pub degraded: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankOutcome {
    pub selection: FinalSelection,
    pub transcript: AgentTranscript,
}

/// One query to rerank.
#[derive(Debug, Clone, Copy)]
pub struct RerankJob<'a> {
    pub query: &'a PaperRecord,
    /// Retrieval set, best first.
    pub retrieved: &'a [String],
    pub t1: usize,
}

pub struct Reranker {
    client: ChatClient,
    templates: Templates,
    oneshots: OneShotLibrary,
    config: RerankConfig,
}

impl Reranker {
    pub fn new(
        client: ChatClient,
        templates: Templates,
        oneshots: OneShotLibrary,
        config: RerankConfig,
    ) -> Self {
        Self {
            client,
            templates,
            oneshots,
            config,
        }
    }

    pub fn client(&self) -> &ChatClient {
        &self.client
    }

    pub fn config(&self) -> &RerankConfig {
        &self.config
    }

    fn guidance(&self, field: Field) -> Result<Guidance<'_>, RerankError> {
        if self.config.ablation.no_guider {
            return Ok(Guidance::Ablated);
        }
        self.oneshots
            .select(field, self.config.per_field_oneshot)
            .map(Guidance::OneShot)
            .ok_or_else(|| RerankError::MissingOneShot(field.name().to_string()))
    }

    /// Fails fast when the configured guidance cannot be satisfied for
    /// `field`, before any backend traffic.
    pub fn check_guidance(&self, field: Field) -> Result<(), RerankError> {
        self.guidance(field).map(|_| ())
    }

    pub fn rerank(&self, job: RerankJob<'_>, corpus: &Corpus) -> Result<RerankOutcome, RerankError> {
        let RerankJob { query, retrieved, t1 } = job;
        let plan = plan_split(retrieved.len(), t1)?;
        let guidance = self.guidance(query.field)?;
        let fixed = plan.fixed(retrieved);
        let pool = plan.pool(retrieved);
        let texts = |ids: &[String]| -> Result<Vec<PaperText>, RerankError> {
            ids.iter()
                .map(|id| {
                    corpus
                        .get(id)
                        .map(PaperText::from)
                        .ok_or_else(|| RerankError::UnknownPaper(id.clone()))
                })
                .collect()
        };
        let pool_texts = texts(pool)?;
        let full_set = self.config.numbering == Numbering::FullSet;
        let presented: &[String] = if full_set { retrieved } else { pool };

        let mut transcript = AgentTranscript {
            query_id: query.id.clone(),
            plan,
            oneshot: match guidance {
                Guidance::OneShot(ex) => Some(ex.name.clone()),
                Guidance::Ablated => None,
            },
            presented_ids: Vec::new(),
            analyzer: None,
            analysis_split: None,
            analyses: Vec::new(),
            decider: None,
            parsed: None,
            pool_order: Vec::new(),
            warnings: Vec::new(),
            usage: TokenUsage::default(),
            degraded: None,
        };
        if plan.clamped {
            transcript.warnings.push(format!(
                "retrieval size {} exceeds 2*t1 = {}; reranking the whole set",
                plan.r_q,
                2 * t1
            ));
        }

        let mut selected: Vec<String> = fixed.to_vec();
        let mut provenance = vec![Provenance::FixedPrefix; fixed.len()];
        if plan.slots == 0 {
            return Ok(self.finish(query, selected, provenance, transcript));
        }

        let query_text = PaperText::from(query);
        let outcome = (|| -> Result<Vec<usize>, RerankError> {
            // Analyzer: always over the pool only.
            let pool_analyses = if self.config.ablation.no_analyzer {
                pool_texts.iter().map(|p| p.abstract_text.clone()).collect()
            } else {
                let prompt =
                    render_analyzer_prompt(&self.templates, guidance, &query_text, &pool_texts)?;
                transcript.warnings.extend(prompt.warnings);
                let hint = CallHint {
                    agent: AgentRole::Analyzer,
                    query_id: &query.id,
                    pool_ids: pool,
                };
                let record = self.client.call(prompt.messages, &hint)?;
                transcript.usage.add(&record.usage);
                let (parts, status) = split_analysis(&record.output, pool.len());
                transcript.analyzer = Some(record);
                transcript.analysis_split = Some(status);
                parts
            };

            let (presented_texts, analyses) = if full_set {
                let mut analyses = vec![EXEMPT_ANALYSIS.to_string(); fixed.len()];
                analyses.extend(pool_analyses);
                (texts(retrieved)?, analyses)
            } else {
                (pool_texts.clone(), pool_analyses)
            };
            transcript.presented_ids = presented.to_vec();
            let prompt = render_decider_prompt(
                &self.templates,
                guidance,
                &query_text,
                &presented_texts,
                &analyses,
            )?;
            transcript.analyses = analyses;
            transcript.warnings.extend(prompt.warnings);
            let hint = CallHint {
                agent: AgentRole::Decider,
                query_id: &query.id,
                pool_ids: presented,
            };
            let record = self.client.call(prompt.messages, &hint)?;
            transcript.usage.add(&record.usage);
            let parsed = parse_ranked_order(&record.output, presented.len());
            transcript.decider = Some(record);
            let offset = if full_set { fixed.len() } else { 0 };
            let order = parsed
                .permutation
                .iter()
                .filter(|i| **i > offset)
                .map(|i| i - offset)
                .collect();
            transcript.parsed = Some(parsed);
            Ok(order)
        })();

        match outcome {
            Ok(order) => {
                for i in order.iter().take(plan.slots) {
                    selected.push(pool[i - 1].clone());
                    provenance.push(Provenance::Reranked);
                }
                transcript.pool_order = order;
            }
            Err(RerankError::Chat(e)) => {
                log::warn!("query {}: agents unavailable, keeping retrieval order: {e}", query.id);
                transcript.degraded = Some(e.to_string());
                selected.extend(pool[..plan.slots].iter().cloned());
                provenance.extend(std::iter::repeat_n(Provenance::RetrievalFallback, plan.slots));
            }
            Err(e) => return Err(e),
        }
        Ok(self.finish(query, selected, provenance, transcript))
    }

    fn finish(
        &self,
        query: &PaperRecord,
        selected: Vec<String>,
        provenance: Vec<Provenance>,
        transcript: AgentTranscript,
    ) -> RerankOutcome {
        RerankOutcome {
            selection: FinalSelection {
                query_id: query.id.clone(),
                selected,
                provenance,
                degraded: transcript.degraded.is_some(),
            },
            transcript,
        }
    }

    /// Reranks every job on a pool of `workers` threads; results keep job
    /// order.
    pub fn rerank_all(
        &self,
        jobs: &[RerankJob<'_>],
        corpus: &Corpus,
        workers: usize,
    ) -> Vec<Result<RerankOutcome, RerankError>> {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
        {
            Ok(pool) => pool.install(|| jobs.par_iter().map(|j| self.rerank(*j, corpus)).collect()),
            Err(e) => {
                log::warn!("cannot start worker pool ({e}); reranking sequentially");
                jobs.iter().map(|j| self.rerank(*j, corpus)).collect()
            }
        }
    }
}

/// Inputs for authoring a worked example.
#[derive(Debug, Clone)]
pub struct OneShotSpec {
    pub name: String,
    pub field: Option<Field>,
    pub query: PaperText,
    pub candidates: Vec<PaperText>,
    /// 1-based candidate indices, most likely citation first.
    pub ground_truth_order: Vec<usize>,
}

/// Runs the analyze-decide pass on an exemplar whose answer is known and
/// stores the result as a draft under `root/<name>`. Nothing is written if
/// either call fails.
pub fn build_oneshot(
    client: &ChatClient,
    templates: &Templates,
    spec: &OneShotSpec,
    root: &Path,
) -> Result<OneShotExample, RerankError> {
    let n = spec.candidates.len();
    let mut sorted = spec.ground_truth_order.clone();
    sorted.sort_unstable();
    if n == 0 || sorted != (1..=n).collect::<Vec<_>>() {
        return Err(RerankError::InvalidArgument(format!(
            "ground-truth order must be a permutation of 1..={n}"
        )));
    }
    let ids: Vec<String> = (1..=n).map(|i| format!("{}#{i}", spec.name)).collect();

    let prompt = render_analyzer_prompt(templates, Guidance::Ablated, &spec.query, &spec.candidates)?;
    let analyzer = client.call(
        prompt.messages,
        &CallHint {
            agent: AgentRole::Analyzer,
            query_id: &spec.name,
            pool_ids: &ids,
        },
    )?;
    let (parts, _) = split_analysis(&analyzer.output, n);
    let mut prompt =
        render_decider_prompt(templates, Guidance::Ablated, &spec.query, &spec.candidates, &parts)?;
    let truth: Vec<String> = spec
        .ground_truth_order
        .iter()
        .map(|i| format!("paper {i}"))
        .collect();
    if let Some(user) = prompt.messages.last_mut() {
        user.content.push_str(&format!(
            "\n\nThe true order for this example is: {}. Justify this order and begin your answer with a line of the form \"Ranked order: paper a, paper b, ...\".",
            truth.join(", ")
        ));
    }
    let decider = client.call(
        prompt.messages,
        &CallHint {
            agent: AgentRole::Decider,
            query_id: &spec.name,
            pool_ids: &ids,
        },
    )?;

    let draft = OneShotExample {
        name: spec.name.clone(),
        field: spec.field,
        query: spec.query.clone(),
        candidates: spec.candidates.clone(),
        ground_truth_order: spec.ground_truth_order.clone(),
        analysis: ensure_newline(analyzer.output),
        ranking: ensure_newline(decider.output),
        status: super::oneshot::ReviewStatus::Draft,
        digest: String::new(),
    };
    let dir = root.join(&spec.name);
    draft.save_draft(&dir)?;
    Ok(OneShotExample::load(&dir)?)
}

fn ensure_newline(mut s: String) -> String {
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

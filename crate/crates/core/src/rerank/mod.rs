//! LLM reranking of the uncertain tail of a retrieval set.
//!
//! A retrieval set of `r_q` candidates is split into a fixed prefix and a
//! rerank pool ([`plan_split`]). An analyzer agent explains how the query
//! relates to each pool member, a decider agent ranks the pool from those
//! analyses, and the best `r_q − t1` pool members complete the selection.
//! An approved worked example can be prepended to both prompts.

mod agent;
mod chat;
mod mock;
mod oneshot;
mod parse;
mod plan;
mod prompt;

pub use agent::{
    build_oneshot, Ablation, AgentTranscript, FinalSelection, Numbering, OneShotSpec, Provenance,
    RerankConfig, RerankJob, RerankOutcome, Reranker, EXEMPT_ANALYSIS,
};
pub use chat::{
    estimate_tokens, AgentRole, CachedReply, CallHint, CallRecord, ChatBackend, ChatClient,
    ChatError, ChatMessage, ChatReply, ChatRequest, HttpChatBackend, RateLimiter, ReportedUsage,
    ResponseCache, RetryPolicy, Role, TokenUsage,
};
pub use mock::{MockChat, MockMode};
pub use oneshot::{
    approve, OneShotError, OneShotExample, OneShotInfo, OneShotLibrary, ReviewStatus,
    ANALYSIS_FILE, APPROVAL_FILE, EXAMPLE_FILE, RANKING_FILE,
};
pub use parse::{parse_ranked_order, split_analysis, ParseStatus, ParsedOrder, SplitStatus};
pub use plan::{plan_split, RerankPlan};
pub use prompt::{
    placeholders, render, render_analyzer_prompt, render_decider_prompt, Guidance, PaperText,
    PromptError, RenderedPrompt, Templates, BLOCK_SEPARATOR, TEMPLATE_NAMES,
};

#[derive(Debug, thiserror::Error)]
pub enum RerankError {
    #[error("invalid rerank plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    OneShot(#[from] OneShotError),
    #[error("no approved one-shot example for field `{0}`; approve one or disable the guider")]
    MissingOneShot(String),
    #[error("retrieved id `{0}` is not in the corpus")]
    UnknownPaper(String),
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::corpus::{Corpus, EvalInstance, Field, PaperRecord};

    fn record(id: &str) -> PaperRecord {
        PaperRecord {
            id: id.into(),
            title: format!("Title of {id}"),
            abstract_text: format!("Abstract of {id}."),
            keywords: vec![],
            field: Field::Physics,
            year: 2020,
        }
    }

    fn corpus(n: usize) -> Corpus {
        let mut recs = vec![record("q")];
        recs.extend((0..n).map(|i| record(&format!("c{i}"))));
        Corpus::from_records(recs).unwrap()
    }

    fn retrieved(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    fn reranker(backend: Arc<dyn ChatBackend>, config: RerankConfig) -> Reranker {
        Reranker::new(
            ChatClient::new(backend).with_retry(RetryPolicy::immediate(5)),
            Templates::builtin(),
            OneShotLibrary::builtin(),
            config,
        )
    }

    /// Decider that always answers with a fixed line.
    struct Fixed(&'static str);

    impl ChatBackend for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn model(&self) -> &str {
            "fixed"
        }
        fn complete(&self, _: &ChatRequest, hint: &CallHint<'_>) -> Result<ChatReply, ChatError> {
            Ok(ChatReply {
                content: match hint.agent {
                    AgentRole::Analyzer => "no structure here".into(),
                    AgentRole::Decider => self.0.into(),
                },
                usage: Some(ReportedUsage {
                    prompt_tokens: 100,
                    completion_tokens: 10,
                }),
            })
        }
    }

    #[test]
    fn identity_mock_keeps_retrieval_order() {
        let c = corpus(8);
        let ids = retrieved(8);
        let mock = Arc::new(MockChat::new(MockMode::Identity));
        let r = reranker(mock.clone(), RerankConfig::default());
        let out = r
            .rerank(RerankJob { query: c.get("q").unwrap(), retrieved: &ids, t1: 5 }, &c)
            .unwrap();
        assert_eq!(out.selection.selected, ids[..5]);
        assert_eq!(mock.calls(), 2);
        assert_eq!(out.transcript.oneshot.as_deref(), Some("default"));
        assert_eq!(out.transcript.analysis_split, Some(SplitStatus::PaperHeadings));
        assert_eq!(out.transcript.parsed.as_ref().unwrap().status, ParseStatus::Exact);
    }

    #[test]
    fn decider_permutation_is_applied_to_pool() {
        let c = corpus(8);
        let ids = retrieved(8);
        let r = reranker(
            Arc::new(Fixed("Ranked order: paper 4, paper 1, paper 6, paper 2, paper 3, paper 5")),
            RerankConfig::default(),
        );
        let out = r
            .rerank(RerankJob { query: c.get("q").unwrap(), retrieved: &ids, t1: 5 }, &c)
            .unwrap();
        // Fixed prefix c0, c1; pool c2..c7; picks pool members 4, 1, 6.
        assert_eq!(out.selection.selected, ["c0", "c1", "c5", "c2", "c7"]);
        assert_eq!(
            out.selection.provenance,
            [
                Provenance::FixedPrefix,
                Provenance::FixedPrefix,
                Provenance::Reranked,
                Provenance::Reranked,
                Provenance::Reranked
            ]
        );
        assert_eq!(out.transcript.analysis_split, Some(SplitStatus::Shared));
        assert_eq!(out.transcript.usage, TokenUsage::new(200, 20, false));
    }

    #[test]
    fn full_set_numbering_filters_exempt_indices() {
        let c = corpus(8);
        let ids = retrieved(8);
        let config = RerankConfig {
            numbering: Numbering::FullSet,
            ..Default::default()
        };
        // Retrieval positions 6, 3, 8 are pool members 4, 1, 6.
        let r = reranker(
            Arc::new(Fixed("Ranked order: paper 1, paper 6, paper 2, paper 3, paper 8, paper 4, paper 5, paper 7")),
            config,
        );
        let out = r
            .rerank(RerankJob { query: c.get("q").unwrap(), retrieved: &ids, t1: 5 }, &c)
            .unwrap();
        assert_eq!(out.selection.selected, ["c0", "c1", "c5", "c2", "c7"]);
        assert_eq!(out.transcript.presented_ids.len(), 8);
        assert_eq!(out.transcript.analyses[0], EXEMPT_ANALYSIS);
    }

    #[test]
    fn oracle_mock_promotes_cores() {
        let c = corpus(8);
        let ids = retrieved(8);
        let inst = EvalInstance {
            query: "q".into(),
            candidates: ids.clone(),
            core: vec!["c6".into(), "c7".into(), "c0".into()],
            superficial: vec!["c3".into()],
            t_q: 8,
            t1: 3,
            t2: 1,
            seed: 0,
        };
        let r = reranker(Arc::new(MockChat::oracle([&inst])), RerankConfig::default());
        let out = r
            .rerank(RerankJob { query: c.get("q").unwrap(), retrieved: &ids, t1: 5 }, &c)
            .unwrap();
        assert_eq!(out.selection.selected, ["c0", "c1", "c6", "c7", "c3"]);
    }

    #[test]
    fn outage_degrades_to_retrieval_order() {
        let c = corpus(7);
        let ids = retrieved(7);
        let mock = Arc::new(MockChat::new(MockMode::Failing));
        let r = reranker(mock.clone(), RerankConfig::default());
        let out = r
            .rerank(RerankJob { query: c.get("q").unwrap(), retrieved: &ids, t1: 5 }, &c)
            .unwrap();
        assert!(out.selection.degraded);
        assert_eq!(out.selection.selected, ids[..5]);
        assert_eq!(out.selection.provenance[3], Provenance::RetrievalFallback);
        assert_eq!(mock.calls(), 5);
        assert!(out.transcript.degraded.is_some());
    }

    #[test]
    fn no_analyzer_uses_abstracts_and_one_call() {
        let c = corpus(7);
        let ids = retrieved(7);
        let mock = Arc::new(MockChat::new(MockMode::Identity));
        let config = RerankConfig {
            ablation: Ablation {
                no_analyzer: true,
                no_guider: false,
            },
            ..Default::default()
        };
        let r = reranker(mock.clone(), config);
        let out = r
            .rerank(RerankJob { query: c.get("q").unwrap(), retrieved: &ids, t1: 5 }, &c)
            .unwrap();
        assert_eq!(mock.calls(), 1);
        assert_eq!(out.transcript.analyses[0], "Abstract of c3.");
        let decider = out.transcript.decider.unwrap();
        assert!(decider.messages[1].content.contains("Analysis: Abstract of c3."));
    }

    #[test]
    fn missing_oneshot_is_an_error_unless_ablated() {
        let c = corpus(7);
        let ids = retrieved(7);
        let mock: Arc<dyn ChatBackend> = Arc::new(MockChat::new(MockMode::Identity));
        let empty = Reranker::new(
            ChatClient::new(mock.clone()),
            Templates::builtin(),
            OneShotLibrary::default(),
            RerankConfig::default(),
        );
        let job = RerankJob { query: c.get("q").unwrap(), retrieved: &ids, t1: 5 };
        assert!(matches!(empty.rerank(job, &c), Err(RerankError::MissingOneShot(_))));
        let ablated = Reranker::new(
            ChatClient::new(mock),
            Templates::builtin(),
            OneShotLibrary::default(),
            RerankConfig {
                ablation: Ablation {
                    no_analyzer: false,
                    no_guider: true,
                },
                ..Default::default()
            },
        );
        let out = ablated.rerank(job, &c).unwrap();
        assert!(out.transcript.oneshot.is_none());
        assert!(!out.transcript.analyzer.unwrap().messages[1].content.contains("Exemplary"));
    }

    #[test]
    fn no_pool_means_no_calls() {
        let c = corpus(5);
        let ids = retrieved(5);
        let mock = Arc::new(MockChat::new(MockMode::Identity));
        let r = reranker(mock.clone(), RerankConfig::default());
        let out = r
            .rerank(RerankJob { query: c.get("q").unwrap(), retrieved: &ids, t1: 5 }, &c)
            .unwrap();
        assert_eq!(out.selection.selected, ids);
        assert_eq!(mock.calls(), 0);
    }

    #[test]
    fn too_small_retrieval_and_unknown_ids() {
        let c = corpus(4);
        let ids = retrieved(4);
        let r = reranker(Arc::new(MockChat::new(MockMode::Identity)), RerankConfig::default());
        let q = c.get("q").unwrap();
        assert!(matches!(
            r.rerank(RerankJob { query: q, retrieved: &ids, t1: 5 }, &c),
            Err(RerankError::Plan(_))
        ));
        let bad: Vec<String> = vec!["c0".into(), "zz".into(), "c1".into()];
        assert!(matches!(
            r.rerank(RerankJob { query: q, retrieved: &bad, t1: 2 }, &c),
            Err(RerankError::UnknownPaper(_))
        ));
    }

    #[test]
    fn warm_cache_is_transparent() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus(8);
        let ids = retrieved(8);
        let run = || {
            let mock = Arc::new(MockChat::new(MockMode::Identity));
            let client = ChatClient::new(mock.clone())
                .with_cache(ResponseCache::open(dir.path()).unwrap());
            let r = Reranker::new(client, Templates::builtin(), OneShotLibrary::builtin(), Default::default());
            let out = r
                .rerank(RerankJob { query: c.get("q").unwrap(), retrieved: &ids, t1: 5 }, &c)
                .unwrap();
            (serde_json::to_string(&out).unwrap(), mock.calls())
        };
        let (cold, cold_calls) = run();
        let (warm, warm_calls) = run();
        assert_eq!(cold, warm);
        assert_eq!((cold_calls, warm_calls), (2, 0));
    }

    #[test]
    fn parallel_matches_sequential() {
        let c = corpus(8);
        let ids = retrieved(8);
        let q = c.get("q").unwrap();
        let jobs: Vec<RerankJob> = (5..=8)
            .map(|n| RerankJob { query: q, retrieved: &ids[..n], t1: 5 })
            .collect();
        let r = reranker(Arc::new(MockChat::new(MockMode::Identity)), RerankConfig::default());
        let par: Vec<_> = r.rerank_all(&jobs, &c, 4).into_iter().map(|o| o.unwrap()).collect();
        let seq: Vec<_> = jobs.iter().map(|j| r.rerank(*j, &c).unwrap()).collect();
        assert_eq!(par, seq);
    }

    #[test]
    fn build_oneshot_writes_draft_only_on_success() {
        let dir = tempfile::tempdir().unwrap();
        let ex = OneShotLibrary::builtin().get("default").unwrap().clone();
        let spec = OneShotSpec {
            name: "trial".into(),
            field: Some(Field::ComputerScience),
            query: ex.query.clone(),
            candidates: vec![ex.candidates[5].clone(), ex.candidates[0].clone(), ex.candidates[3].clone()],
            ground_truth_order: ex.ground_truth_for(&[6, 1, 4]),
        };
        let failing = ChatClient::new(Arc::new(MockChat::new(MockMode::Failing)))
            .with_retry(RetryPolicy::immediate(2));
        assert!(build_oneshot(&failing, &Templates::builtin(), &spec, dir.path()).is_err());
        assert!(!dir.path().join("trial").exists());

        let ok = ChatClient::new(Arc::new(Fixed("Ranked order: paper 2, paper 3, paper 1")));
        let draft = build_oneshot(&ok, &Templates::builtin(), &spec, dir.path()).unwrap();
        assert_eq!(draft.status, ReviewStatus::Draft);
        assert_eq!(draft.ground_truth_order, [2, 3, 1]);
        let approved = approve(&dir.path().join("trial")).unwrap();
        assert!(approved.is_approved());
    }
}

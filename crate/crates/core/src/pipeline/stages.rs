//! One function per command. Callers hold the output lock.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::{ChatBackendKind, EmbeddingBackendKind, EvalOn, PipelineConfig};
use super::manifest::{check_upstream, write_atomic, RunManifest, Stage};
use super::PipelineError;
use crate::corpus::{
    build_eval_instance, build_graph, read_edges, sample_queries, split_train_test, CitationGraph,
    Corpus, EvalInstance, Field, QuerySample,
};
use crate::embed::{
    embed_corpus, EmbeddingBackend, HashEmbedder, HttpEmbedder, HttpEmbedderConfig,
    PrecomputedEmbedder, RetrievalResult, VectorStore,
};
use crate::eval::{
    external_ranking, keyword_overlap_rank, metric_names, read_score_file, score_ranking,
    GradedRanking, MetricsReport, QueryMetrics,
};
use crate::rerank::{
    approve, build_oneshot, AgentTranscript, CallHint, ChatBackend, ChatClient, ChatError,
    ChatReply, ChatRequest, FinalSelection, HttpChatBackend, MockChat, MockMode, OneShotError,
    OneShotExample, OneShotLibrary, OneShotSpec, PaperText, RateLimiter, RerankJob, Reranker,
    ResponseCache, RetryPolicy, ReviewStatus, Templates, TokenUsage, EXAMPLE_FILE,
};

/// File names inside the run directory.
pub mod artifact {
    pub const LOAD_REPORT: &str = "load_report.json";
    pub const LABELS: &str = "labels.jsonl";
    pub const SAMPLES_TRAIN: &str = "samples_train.jsonl";
    pub const SAMPLES_TEST: &str = "samples_test.jsonl";
    pub const INSTANCES: &str = "instances.jsonl";
    pub const VECTORS: &str = "vectors.hlmv";
    pub const RETRIEVAL: &str = "retrieval.jsonl";
    pub const SELECTIONS: &str = "selections.jsonl";
    pub const TRANSCRIPTS: &str = "transcripts.jsonl";
    pub const METRICS: &str = "metrics.jsonl";
    pub const REPORT_JSON: &str = "report.json";
    pub const REPORT_CSV: &str = "report.csv";
}

pub const SYSTEM_RETRIEVAL: &str = "retrieval";
pub const SYSTEM_RERANK: &str = "hlm-cite";
pub const SYSTEM_KEYWORD: &str = "keyword-overlap";

fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("artifact serializes");
        out.push(b'\n');
    }
    out
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let file = File::open(path).map_err(PipelineError::io(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(PipelineError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PipelineError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

struct Ctx<'a> {
    config: &'a PipelineConfig,
    out: &'a Path,
    started: Instant,
    manifest: RunManifest,
}

impl<'a> Ctx<'a> {
    fn begin(stage: Stage, config: &'a PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let out = config.out_dir()?;
        check_upstream(stage, config, out)?;
        log::info!("{stage}: starting");
        Ok(Self {
            config,
            out,
            started: Instant::now(),
            manifest: RunManifest::new(stage, config),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn input(&mut self, name: &str, path: &Path) -> Result<(), PipelineError> {
        self.manifest.input(name, path)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, PipelineError> {
        let path = self.path(name);
        write_atomic(&path, bytes)?;
        self.manifest.output(name, &path)?;
        Ok(path)
    }

    fn finish(mut self) -> Result<RunManifest, PipelineError> {
        self.manifest.elapsed_ms = self.started.elapsed().as_millis() as u64;
        self.manifest.save(self.out)?;
        log::info!("{}: done in {} ms", self.manifest.stage, self.manifest.elapsed_ms);
        Ok(self.manifest)
    }

    fn corpus(&mut self) -> Result<Corpus, PipelineError> {
        let path = self.config.require(&self.config.paths.corpus, "corpus")?;
        self.input("corpus", &path)?;
        let corpus = Corpus::load_jsonl(&path)?;
        if !corpus.empty_abstracts().is_empty() {
            log::warn!(
                "{} papers have empty abstracts and embed from their title alone",
                corpus.empty_abstracts().len()
            );
        }
        Ok(corpus)
    }

    fn graph(&mut self, corpus: &Corpus) -> Result<(CitationGraph, crate::corpus::LoadReport), PipelineError> {
        let path = self.config.require(&self.config.paths.edges, "edges")?;
        self.input("edges", &path)?;
        let edges = read_edges(&path)?;
        Ok(build_graph(corpus, edges.iter().map(|(a, b)| (a.as_str(), b.as_str()))))
    }

    fn read<T: DeserializeOwned>(&mut self, name: &str) -> Result<Vec<T>, PipelineError> {
        let path = self.path(name);
        self.input(name, &path)?;
        read_jsonl(&path)
    }

    /// Queries the downstream stages work on.
    fn eval_queries(&mut self) -> Result<Option<BTreeSet<String>>, PipelineError> {
        match self.config.eval.eval_on {
            EvalOn::All => Ok(None),
            EvalOn::Test => {
                let test: Vec<QuerySample> = self.read(artifact::SAMPLES_TEST)?;
                Ok(Some(test.into_iter().map(|s| s.query).collect()))
            }
        }
    }
}

fn keep(set: &Option<BTreeSet<String>>, query: &str) -> bool {
    set.as_ref().is_none_or(|s| s.contains(query))
}

/// Builds the citation graph and writes per-query labels.
pub fn cmd_label(config: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    let mut ctx = Ctx::begin(Stage::Label, config)?;
    let corpus = ctx.corpus()?;
    let (graph, report) = ctx.graph(&corpus)?;
    let dropped = report.dropped_dangling + report.dropped_self + report.dropped_duplicate;
    if dropped > 0 {
        log::warn!(
            "dropped {dropped} edges ({} dangling, {} self, {} duplicate)",
            report.dropped_dangling,
            report.dropped_self,
            report.dropped_duplicate
        );
    }
    let mut labels = graph.label_all();
    labels.sort_by(|a, b| a.query.cmp(&b.query));

    let mut json = serde_json::to_vec_pretty(&report).expect("load report serializes");
    json.push(b'\n');
    ctx.write(artifact::LOAD_REPORT, &json)?;
    ctx.write(artifact::LABELS, &jsonl(&labels))?;
    ctx.manifest.counters.insert("nodes".into(), report.nodes as u64);
    ctx.manifest.counters.insert("edges".into(), report.edges as u64);
    ctx.manifest.counters.insert("labeled_queries".into(), labels.len() as u64);
    ctx.finish()
}

/// Samples queries, splits them and builds the candidate sets.
pub fn cmd_sample(config: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    let mut ctx = Ctx::begin(Stage::Sample, config)?;
    let t = &config.task;
    let corpus = ctx.corpus()?;
    let (graph, _) = ctx.graph(&corpus)?;
    let outcome = sample_queries(&graph, t.t1, t.t2, t.queries, t.seed)?;
    if let Some(w) = &outcome.warning {
        log::warn!("{w}");
    }
    let (train, test) = split_train_test(&outcome.samples, t.split_ratio()?, t.seed);
    let instances = outcome
        .samples
        .par_iter()
        .map(|s| build_eval_instance(s, &graph, t.t_q, t.seed))
        .collect::<Result<Vec<_>, _>>()?;

    ctx.write(artifact::SAMPLES_TRAIN, &jsonl(&train))?;
    ctx.write(artifact::SAMPLES_TEST, &jsonl(&test))?;
    ctx.write(artifact::INSTANCES, &jsonl(&instances))?;
    let c = &mut ctx.manifest.counters;
    c.insert("eligible".into(), outcome.eligible as u64);
    c.insert("sampled".into(), outcome.samples.len() as u64);
    c.insert("train".into(), train.len() as u64);
    c.insert("test".into(), test.len() as u64);
    ctx.finish()
}

/// Embeds every corpus paper into `vectors.hlmv`.
pub fn cmd_embed(config: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    let mut ctx = Ctx::begin(Stage::Embed, config)?;
    let e = &config.embedding;
    let corpus = ctx.corpus()?;
    let backend: Box<dyn EmbeddingBackend> = match e.backend {
        EmbeddingBackendKind::Hash => Box::new(HashEmbedder::new(e.dim)),
        EmbeddingBackendKind::Precomputed => {
            let path = config.require(&config.paths.vectors, "vectors")?;
            ctx.input("precomputed", &path)?;
            Box::new(PrecomputedEmbedder::new(VectorStore::load_with_dim(&path, e.dim)?))
        }
        EmbeddingBackendKind::Http => {
            let http = HttpEmbedderConfig::from_env(&e.model, e.dim)
                .ok_or_else(|| PipelineError::Config("EMBED_API_BASE is not set".into()))?;
            Box::new(HttpEmbedder::new(http)?)
        }
    };
    let store = embed_corpus(backend.as_ref(), corpus.papers(), e.in_flight, e.attempts)?;
    let mut bytes = Vec::new();
    store.write_to(&mut bytes)?;
    ctx.write(artifact::VECTORS, &bytes)?;
    ctx.manifest
        .backends
        .insert("embedding".into(), format!("{}/{}", backend.name(), backend.dim()));
    ctx.manifest.counters.insert("vectors".into(), store.len() as u64);
    ctx.finish()
}

/// Ranks every instance's candidates by inner product with the query.
pub fn cmd_retrieve(config: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    let mut ctx = Ctx::begin(Stage::Retrieve, config)?;
    let corpus = ctx.corpus()?;
    let instances: Vec<EvalInstance> = ctx.read(artifact::INSTANCES)?;
    let vectors = ctx.path(artifact::VECTORS);
    ctx.input(artifact::VECTORS, &vectors)?;
    let store = VectorStore::<f32>::load_with_dim(&vectors, config.embedding.dim)?;
    let results = instances
        .par_iter()
        .map(|inst| {
            let field = corpus.require(&inst.query)?.field;
            let r_q = config.task.r_q_for(field.domain());
            Ok(store.retrieve(&inst.query, &inst.candidates, r_q)?)
        })
        .collect::<Result<Vec<RetrievalResult<f32>>, PipelineError>>()?;
    ctx.write(artifact::RETRIEVAL, &jsonl(&results))?;
    ctx.manifest.counters.insert("queries".into(), results.len() as u64);
    ctx.finish()
}

/// Counts requests that reach the wrapped backend.
struct Counting {
    inner: Arc<dyn ChatBackend>,
    calls: AtomicU64,
}

impl ChatBackend for Counting {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn model(&self) -> &str {
        self.inner.model()
    }

    fn complete(&self, request: &ChatRequest, hint: &CallHint<'_>) -> Result<ChatReply, ChatError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request, hint)
    }
}

fn chat_client(
    config: &PipelineConfig,
    instances: &[EvalInstance],
) -> Result<(ChatClient, Arc<Counting>), PipelineError> {
    let c = &config.chat;
    let inner: Arc<dyn ChatBackend> = match c.backend {
        ChatBackendKind::Mock => match c.mock_mode()? {
            MockMode::Oracle => Arc::new(MockChat::oracle(instances)),
            mode => Arc::new(MockChat::new(mode)),
        },
        ChatBackendKind::Http => Arc::new(HttpChatBackend::from_env(
            c.model.as_deref(),
            Duration::from_secs(c.timeout_secs),
        )?),
    };
    let counting = Arc::new(Counting {
        inner,
        calls: AtomicU64::new(0),
    });
    let cache_dir = config.cache_dir()?;
    let cache = ResponseCache::open(&cache_dir).map_err(PipelineError::io(&cache_dir))?;
    let retry = match c.backend {
        ChatBackendKind::Mock => RetryPolicy::immediate(c.max_attempts),
        ChatBackendKind::Http => RetryPolicy {
            max_attempts: c.max_attempts,
            ..RetryPolicy::default()
        },
    };
    let mut client = ChatClient::new(counting.clone())
        .with_cache(cache)
        .with_retry(retry)
        .with_temperature(c.temperature);
    if let Some(rpm) = c.requests_per_minute {
        client = client.with_limiter(Arc::new(RateLimiter::per_minute(rpm)));
    }
    Ok((client, counting))
}

fn templates(config: &PipelineConfig) -> Result<Templates, PipelineError> {
    match &config.paths.prompts {
        Some(dir) => Ok(Templates::load_dir(dir).map_err(crate::rerank::RerankError::from)?),
        None => Ok(Templates::builtin()),
    }
}

fn oneshot_library(config: &PipelineConfig) -> Result<OneShotLibrary, PipelineError> {
    let builtin = OneShotLibrary::builtin();
    match &config.paths.oneshot {
        Some(root) => Ok(builtin.merge(OneShotLibrary::load(root)?)),
        None => Ok(builtin),
    }
}

/// Outcome of a rerank run, for callers that need more than the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankSummary {
    pub manifest: RunManifest,
    pub backend_calls: u64,
    pub degraded: usize,
    pub queries: usize,
    pub tokens: TokenUsage,
}

/// Reranks the retrieval sets of the evaluated queries.
///
/// Backend exhaustion on a query degrades it to retrieval order; outputs are
/// still written and the run then fails with [`PipelineError::Degraded`].
pub fn cmd_rerank(config: &PipelineConfig) -> Result<RerankSummary, PipelineError> {
    let mut ctx = Ctx::begin(Stage::Rerank, config)?;
    let corpus = ctx.corpus()?;
    let instances: Vec<EvalInstance> = ctx.read(artifact::INSTANCES)?;
    let retrieval: Vec<RetrievalResult<f32>> = ctx.read(artifact::RETRIEVAL)?;
    let wanted = ctx.eval_queries()?;

    let (client, counter) = chat_client(config, &instances)?;
    let templates = templates(config)?;
    let library = oneshot_library(config)?;
    let reranker = Reranker::new(client, templates.clone(), library.clone(), config.ablation.rerank_config()?);

    let retrieved: Vec<(&RetrievalResult<f32>, Vec<String>)> = retrieval
        .iter()
        .filter(|r| keep(&wanted, &r.query))
        .map(|r| (r, r.ids().map(String::from).collect()))
        .collect();
    let mut jobs = Vec::with_capacity(retrieved.len());
    let mut fields = BTreeSet::new();
    for (r, ids) in &retrieved {
        let query = corpus.require(&r.query)?;
        fields.insert(query.field);
        jobs.push(RerankJob {
            query,
            retrieved: ids,
            t1: config.task.t1,
        });
    }
    // Fail before any traffic when guidance is unavailable.
    for field in &fields {
        reranker.check_guidance(*field)?;
    }

    let outcomes = reranker
        .rerank_all(&jobs, &corpus, config.chat.workers)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let mut tokens = TokenUsage::default();
    let mut selections: Vec<&FinalSelection> = Vec::with_capacity(outcomes.len());
    let mut transcripts: Vec<&AgentTranscript> = Vec::with_capacity(outcomes.len());
    for o in &outcomes {
        tokens.add(&o.transcript.usage);
        selections.push(&o.selection);
        transcripts.push(&o.transcript);
    }
    let degraded = selections.iter().filter(|s| s.degraded).count();

    ctx.write(artifact::SELECTIONS, &jsonl(&selections))?;
    ctx.write(artifact::TRANSCRIPTS, &jsonl(&transcripts))?;
    let backend_calls = counter.calls.load(Ordering::SeqCst);
    let m = &mut ctx.manifest;
    m.assets.insert("prompts".into(), templates.digest());
    for ex in library.examples().iter().filter(|e| e.is_approved()) {
        m.assets.insert(format!("oneshot/{}", ex.name), ex.digest.clone());
    }
    m.backends.insert(
        "chat".into(),
        format!("{}/{}", reranker.client().backend_name(), reranker.client().model()),
    );
    m.tokens = Some(tokens);
    m.counters.insert("queries".into(), selections.len() as u64);
    m.counters.insert("degraded".into(), degraded as u64);
    m.counters.insert("backend_calls".into(), backend_calls);
    let queries = selections.len();
    let manifest = ctx.finish()?;
    if degraded > 0 {
        return Err(PipelineError::Degraded {
            degraded,
            total: queries,
        });
    }
    Ok(RerankSummary {
        manifest,
        backend_calls,
        degraded,
        queries,
        tokens,
    })
}

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub system: String,
    #[serde(flatten)]
    pub metrics: QueryMetrics,
}

/// Scores every system on every evaluated query.
pub fn cmd_eval(config: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    let mut ctx = Ctx::begin(Stage::Eval, config)?;
    let e = &config.eval;
    let corpus = ctx.corpus()?;
    let instances: Vec<EvalInstance> = ctx.read(artifact::INSTANCES)?;
    let retrieval: Vec<RetrievalResult<f32>> = ctx.read(artifact::RETRIEVAL)?;
    let selections: Vec<FinalSelection> = ctx.read(artifact::SELECTIONS)?;
    let wanted = ctx.eval_queries()?;
    let mut external = BTreeMap::new();
    for (name, path) in &e.external {
        ctx.input(&format!("external/{name}"), path)?;
        external.insert(name.clone(), read_score_file(path)?);
    }

    let retrieved: HashMap<&str, Vec<&str>> = retrieval
        .iter()
        .map(|r| (r.query.as_str(), r.ids().collect()))
        .collect();
    let selected: HashMap<&str, &FinalSelection> =
        selections.iter().map(|s| (s.query_id.as_str(), s)).collect();
    let gains = e.gains();
    let mut rows = Vec::new();
    let mut missing_scores = 0usize;
    for inst in instances.iter().filter(|i| keep(&wanted, &i.query)) {
        let query = corpus.require(&inst.query)?;
        let score = |system: &str, ranking: GradedRanking| -> Result<MetricsRow, PipelineError> {
            Ok(row(system, &inst.query, query.field, score_ranking(&ranking, &e.ks, &gains)?))
        };
        let missing = |what: &'static str| PipelineError::MissingUpstream {
            artifact: PathBuf::from(format!("{what} output for query {}", inst.query)),
            command: what,
        };
        let ids = retrieved.get(inst.query.as_str()).ok_or_else(|| missing("retrieve"))?;
        rows.push(score(SYSTEM_RETRIEVAL, GradedRanking::from_instance(ids, inst)?)?);
        let sel = selected.get(inst.query.as_str()).ok_or_else(|| missing("rerank"))?;
        rows.push(score(SYSTEM_RERANK, GradedRanking::from_instance(&sel.selected, inst)?)?);
        if e.keyword_baseline {
            rows.push(score(SYSTEM_KEYWORD, keyword_overlap_rank(query, inst, &corpus)?)?);
        }
        for (name, scores) in &external {
            match scores.get(&inst.query) {
                Some(record) => {
                    let ranked = external_ranking(record, inst);
                    rows.push(score(name, GradedRanking::from_instance(&ranked, inst)?)?);
                }
                None => missing_scores += 1,
            }
        }
    }
    if missing_scores > 0 {
        log::warn!("{missing_scores} (system, query) pairs had no external scores and were skipped");
    }
    rows.sort_by(|a, b| (&a.system, &a.metrics.query).cmp(&(&b.system, &b.metrics.query)));
    ctx.write(artifact::METRICS, &jsonl(&rows))?;
    ctx.manifest.counters.insert("rows".into(), rows.len() as u64);
    ctx.finish()
}

fn row(system: &str, query: &str, field: Field, values: BTreeMap<String, f64>) -> MetricsRow {
    MetricsRow {
        system: system.to_string(),
        metrics: QueryMetrics {
            query: query.to_string(),
            field,
            values,
        },
    }
}

/// Aggregates metrics into `report.json` and `report.csv`.
pub fn cmd_report(config: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    let mut ctx = Ctx::begin(Stage::Report, config)?;
    let rows: Vec<MetricsRow> = ctx.read(artifact::METRICS)?;
    let mut systems: BTreeMap<String, Vec<QueryMetrics>> = BTreeMap::new();
    for r in rows {
        systems.entry(r.system).or_default().push(r.metrics);
    }
    let report = MetricsReport::build(&systems, &metric_names(&config.eval.ks), config.eval.bootstrap());
    let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
    json.push(b'\n');
    ctx.write(artifact::REPORT_JSON, &json)?;
    let csv = report
        .to_csv()
        .map_err(|e| PipelineError::Config(format!("cannot render report CSV: {e}")))?;
    ctx.write(artifact::REPORT_CSV, csv.as_bytes())?;
    ctx.finish()
}

/// Every stage in order. A degraded rerank still runs eval and report, then
/// surfaces as [`PipelineError::Degraded`].
pub fn cmd_run(config: &PipelineConfig) -> Result<(), PipelineError> {
    cmd_label(config)?;
    cmd_sample(config)?;
    cmd_embed(config)?;
    cmd_retrieve(config)?;
    let rerank = match cmd_rerank(config) {
        Ok(_) => None,
        Err(e @ PipelineError::Degraded { .. }) => Some(e),
        Err(e) => return Err(e),
    };
    cmd_eval(config)?;
    cmd_report(config)?;
    rerank.map_or(Ok(()), Err)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OneShotListing {
    pub name: String,
    pub field: Option<Field>,
    pub status: ReviewStatus,
    pub candidates: usize,
    pub digest: String,
    pub source: String,
}

/// Built-in and authored examples with their review state.
pub fn cmd_oneshot_list(config: &PipelineConfig) -> Result<Vec<OneShotListing>, PipelineError> {
    let authored = match &config.paths.oneshot {
        Some(root) => OneShotLibrary::load(root)?,
        None => OneShotLibrary::default(),
    };
    let listing = |e: &OneShotExample, source: String| OneShotListing {
        name: e.name.clone(),
        field: e.field,
        status: e.status,
        candidates: e.candidates.len(),
        digest: e.digest.clone(),
        source,
    };
    let mut out: Vec<OneShotListing> = OneShotLibrary::builtin()
        .examples()
        .iter()
        .filter(|e| authored.get(&e.name).is_none())
        .map(|e| listing(e, "builtin".into()))
        .collect();
    let root = config.paths.oneshot.clone().unwrap_or_default();
    out.extend(
        authored
            .examples()
            .iter()
            .map(|e| listing(e, root.join(&e.name).display().to_string())),
    );
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}

/// Marks an authored draft as reviewed.
pub fn cmd_oneshot_approve(config: &PipelineConfig, name: &str) -> Result<OneShotExample, PipelineError> {
    let root = config.require(&config.paths.oneshot, "oneshot")?;
    let dir = root.join(name);
    if !dir.join(EXAMPLE_FILE).is_file() {
        return Err(PipelineError::MissingUpstream {
            artifact: dir,
            command: "oneshot build",
        });
    }
    Ok(approve(&dir)?)
}

#[derive(Debug, Clone, Deserialize)]
struct SpecFile {
    name: String,
    #[serde(default)]
    field: Option<Field>,
    query: PaperText,
    candidates: Vec<PaperText>,
    ground_truth_order: Vec<usize>,
}

/// Drafts a worked example from a spec file (same shape as `example.json`).
pub fn cmd_oneshot_build(config: &PipelineConfig, spec: &Path) -> Result<OneShotExample, PipelineError> {
    let root = config.require(&config.paths.oneshot, "oneshot")?;
    let text = std::fs::read_to_string(spec).map_err(PipelineError::io(spec))?;
    let s: SpecFile = serde_json::from_str(&text).map_err(|e| PipelineError::Parse {
        path: spec.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if s.name.is_empty() || s.name.contains(['/', '\\']) || s.name.starts_with('.') {
        return Err(PipelineError::Config(format!("invalid example name `{}`", s.name)));
    }
    let (client, _) = chat_client(config, &[])?;
    let spec = OneShotSpec {
        name: s.name,
        field: s.field,
        query: s.query,
        candidates: s.candidates,
        ground_truth_order: s.ground_truth_order,
    };
    match build_oneshot(&client, &templates(config)?, &spec, &root) {
        Ok(ex) => Ok(ex),
        Err(crate::rerank::RerankError::OneShot(OneShotError::NotFound(n))) => {
            Err(PipelineError::Config(format!("one-shot `{n}` not found after build")))
        }
        Err(e) => Err(e.into()),
    }
}

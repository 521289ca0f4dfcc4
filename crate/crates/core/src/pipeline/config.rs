//! Declarative run configuration (TOML) and command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::{Domain, SplitRatio};
use crate::eval::{BootstrapConfig, Gains};
use crate::rerank::{Ablation, MockMode, Numbering, RerankConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    /// Precomputed vectors, used when `embedding.backend = "precomputed"`.
    pub vectors: Option<PathBuf>,
    /// Output directory for every artifact.
    pub out: Option<PathBuf>,
    /// Chat response cache; defaults to `<out>/cache`.
    pub cache: Option<PathBuf>,
    /// Directory overriding the built-in prompt templates.
    pub prompts: Option<PathBuf>,
    /// Root of authored one-shot examples; the built-in default is always available.
    pub oneshot: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub seed: u64,
    /// Number of queries to sample.
    pub queries: usize,
    pub t1: usize,
    pub t2: usize,
    pub t_q: usize,
    /// Retrieval size for every query; unset means per-domain defaults.
    pub r_q: Option<usize>,
    pub r_q_natural: usize,
    pub r_q_social: usize,
    /// Train:test proportion, e.g. "8:2".
    pub split: String,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            queries: 1000,
            t1: 5,
            t2: 5,
            t_q: 10_000,
            r_q: None,
            r_q_natural: 8,
            r_q_social: 7,
            split: "8:2".into(),
        }
    }
}

impl TaskConfig {
    pub fn r_q_for(&self, domain: Domain) -> usize {
        self.r_q.unwrap_or(match domain {
            Domain::Natural => self.r_q_natural,
            Domain::Social => self.r_q_social,
        })
    }

    pub fn split_ratio(&self) -> Result<SplitRatio, PipelineError> {
        self.split
            .parse()
            .map_err(|e| PipelineError::Config(format!("task.split: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingBackendKind {
    Hash,
    Precomputed,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub backend: EmbeddingBackendKind,
    pub dim: usize,
    pub model: String,
    pub in_flight: usize,
    pub attempts: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            backend: EmbeddingBackendKind::Hash,
            dim: crate::embed::DEFAULT_DIM,
            model: "text-embedding".into(),
            in_flight: 4,
            attempts: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatBackendKind {
    Mock,
    Http,
}

impl std::str::FromStr for ChatBackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(Self::Mock),
            "http" => Ok(Self::Http),
            other => Err(format!("unknown backend `{other}` (expected mock or http)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatConfig {
    pub backend: ChatBackendKind,
    /// identity, oracle or failing.
    pub mock: String,
    /// Model name; falls back to `CHAT_MODEL`.
    pub model: Option<String>,
    pub temperature: f64,
    pub workers: usize,
    pub requests_per_minute: Option<u32>,
    pub max_attempts: u32,
    pub timeout_secs: u64,
}

impl Default for ChatConfig {
    fn default() -> Self {
        Self {
            backend: ChatBackendKind::Mock,
            mock: "identity".into(),
            model: None,
            temperature: 0.0,
            workers: 4,
            requests_per_minute: None,
            max_attempts: 5,
            timeout_secs: 120,
        }
    }
}

impl ChatConfig {
    pub fn mock_mode(&self) -> Result<MockMode, PipelineError> {
        self.mock.parse().map_err(PipelineError::Config)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub no_analyzer: bool,
    pub no_guider: bool,
    /// Pick a field-specific worked example when one is approved.
    pub few_shot: bool,
    /// "pool" (default) or "full".
    pub numbering: Option<String>,
}

impl AblationConfig {
    pub fn rerank_config(&self) -> Result<RerankConfig, PipelineError> {
        let numbering = match &self.numbering {
            None => Numbering::default(),
            Some(s) => s.parse().map_err(PipelineError::Config)?,
        };
        Ok(RerankConfig {
            ablation: Ablation {
                no_analyzer: self.no_analyzer,
                no_guider: self.no_guider,
            },
            per_field_oneshot: self.few_shot,
            numbering,
        })
    }

    /// Applies one `--ablation` flag value.
    pub fn apply(&mut self, flag: &str) -> Result<(), PipelineError> {
        match flag {
            "no-analyzer" => self.no_analyzer = true,
            "no-guider" => self.no_guider = true,
            "few-shot" => self.few_shot = true,
            other => {
                return Err(PipelineError::Config(format!(
                    "unknown ablation `{other}` (expected no-analyzer, no-guider or few-shot)"
                )))
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalOn {
    All,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainScheme {
    Binary,
    Graded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub eval_on: EvalOn,
    pub ks: Vec<usize>,
    pub gains: GainScheme,
    pub keyword_baseline: bool,
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,
    /// System name → JSONL score file.
    pub external: BTreeMap<String, PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            eval_on: EvalOn::Test,
            ks: vec![3, 5],
            gains: GainScheme::Binary,
            keyword_baseline: true,
            bootstrap_resamples: BootstrapConfig::default().resamples,
            bootstrap_seed: BootstrapConfig::default().seed,
            external: BTreeMap::new(),
        }
    }
}

impl EvalConfig {
    pub fn gains(&self) -> Gains<f64> {
        match self.gains {
            GainScheme::Binary => Gains::binary(),
            GainScheme::Graded => Gains::graded(),
        }
    }

    pub fn bootstrap(&self) -> BootstrapConfig {
        BootstrapConfig {
            resamples: self.bootstrap_resamples,
            seed: self.bootstrap_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub task: TaskConfig,
    pub embedding: EmbeddingConfig,
    pub chat: ChatConfig,
    pub ablation: AblationConfig,
    pub eval: EvalConfig,
}

/// Command-line values that win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub t_q: Option<usize>,
    pub r_q: Option<usize>,
    pub t1: Option<usize>,
    pub ablations: Vec<String>,
    pub backend: Option<ChatBackendKind>,
    pub mock: Option<String>,
    pub out: Option<PathBuf>,
}

impl PipelineConfig {
    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: Self = toml::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.corpus,
            &mut p.edges,
            &mut p.vectors,
            &mut p.out,
            &mut p.cache,
            &mut p.prompts,
            &mut p.oneshot,
        ] {
            if let Some(path) = slot.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        for path in self.eval.external.values_mut() {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), PipelineError> {
        if let Some(v) = o.seed {
            self.task.seed = v;
        }
        if let Some(v) = o.t_q {
            self.task.t_q = v;
        }
        if let Some(v) = o.r_q {
            self.task.r_q = Some(v);
        }
        if let Some(v) = o.t1 {
            self.task.t1 = v;
        }
        for flag in &o.ablations {
            self.ablation.apply(flag)?;
        }
        if let Some(v) = o.backend {
            self.chat.backend = v;
        }
        if let Some(v) = &o.mock {
            self.chat.mock = v.clone();
        }
        if let Some(v) = &o.out {
            self.paths.out = Some(v.clone());
        }
        self.validate()
    }

    /// Cross-field invariants.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let t = &self.task;
        let bad = |m: String| Err(PipelineError::Config(m));
        if t.t1 == 0 || t.t2 == 0 {
            return bad(format!("t1 and t2 must be positive (got {}, {})", t.t1, t.t2));
        }
        if t.t_q < t.t1 + t.t2 {
            return bad(format!("t_q = {} is smaller than t1 + t2 = {}", t.t_q, t.t1 + t.t2));
        }
        for domain in [Domain::Natural, Domain::Social] {
            let r = t.r_q_for(domain);
            if r < t.t1 || r > t.t_q {
                return bad(format!(
                    "r_q = {r} for {domain} must lie between t1 = {} and t_q = {}",
                    t.t1, t.t_q
                ));
            }
        }
        if let Some(&k) = self.eval.ks.iter().find(|&&k| k == 0 || k > t.t1) {
            return bad(format!("eval k = {k} must lie between 1 and t1 = {}", t.t1));
        }
        if self.embedding.dim == 0 {
            return bad("embedding.dim must be positive".into());
        }
        t.split_ratio()?;
        self.ablation.rerank_config()?;
        self.chat.mock_mode()?;
        Ok(())
    }

    /// The bundled toy corpus with offline backends, writing into `out`.
    pub fn bundled_toy(out: &Path) -> Self {
        let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy");
        let mut c = Self::default();
        c.paths.corpus = Some(data.join("corpus.jsonl"));
        c.paths.edges = Some(data.join("edges.csv"));
        c.paths.out = Some(out.to_path_buf());
        c.task.queries = 200;
        c.task.t_q = 50;
        c.embedding.dim = 256;
        c.eval.eval_on = EvalOn::All;
        c
    }

    pub fn out_dir(&self) -> Result<&Path, PipelineError> {
        self.paths
            .out
            .as_deref()
            .ok_or_else(|| PipelineError::Config("paths.out is not set (use --out)".into()))
    }

    pub fn cache_dir(&self) -> Result<PathBuf, PipelineError> {
        match &self.paths.cache {
            Some(p) => Ok(p.clone()),
            None => Ok(self.out_dir()?.join("cache")),
        }
    }

    pub fn require(&self, path: &Option<PathBuf>, key: &str) -> Result<PathBuf, PipelineError> {
        path.clone()
            .ok_or_else(|| PipelineError::Config(format!("paths.{key} is not set")))
    }
}

//! File-based orchestration of the end-to-end workflow.
//!
//! Each command reads the artifacts of the stages before it, checks them
//! against their manifests, writes its own outputs into the run directory and
//! records a manifest of inputs, outputs, assets, backends and token totals.

mod config;
mod manifest;
mod stages;

pub use config::{
    AblationConfig, ChatBackendKind, ChatConfig, EmbeddingBackendKind, EmbeddingConfig, EvalConfig,
    EvalOn, GainScheme, Overrides, PathsConfig, PipelineConfig, TaskConfig,
};
pub use manifest::{
    check_upstream, file_digest, write_atomic, FileDigest, OutputLock, RunManifest, Stage, LOCK_FILE,
    MANIFEST_DIR,
};
pub use stages::{
    artifact, cmd_embed, cmd_eval, cmd_label, cmd_oneshot_approve, cmd_oneshot_build,
    cmd_oneshot_list, cmd_report, cmd_rerank, cmd_retrieve, cmd_run, cmd_sample, read_jsonl,
    MetricsRow, OneShotListing, RerankSummary,
};

use std::path::{Path, PathBuf};

use crate::corpus::CorpusError;
use crate::embed::EmbedError;
use crate::eval::EvalError;
use crate::rerank::{ChatError, OneShotError, RerankError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0} is locked by another run; remove it if no run is active")]
    Locked(PathBuf),
    #[error("missing {artifact}; run `hlmcite {command}` first")]
    MissingUpstream {
        artifact: PathBuf,
        command: &'static str,
    },
    #[error("stale {artifact}: {reason}; rerun `hlmcite {command}`")]
    Stale {
        artifact: PathBuf,
        reason: String,
        command: &'static str,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Rerank(#[from] RerankError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{degraded} of {total} queries fell back to retrieval order after backend failures; partial results written")]
    Degraded { degraded: usize, total: usize },
}

impl PipelineError {
    pub(crate) fn io(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
        move |source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status: 2 for configuration problems, 3 for missing or
    /// stale upstream artifacts, 4 for backend exhaustion, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Locked(_) => 2,
            PipelineError::MissingUpstream { .. } | PipelineError::Stale { .. } => 3,
            PipelineError::Degraded { .. } => 4,
            PipelineError::Embed(EmbedError::Backend { .. }) => 4,
            PipelineError::Rerank(RerankError::Chat(ChatError::Config(_))) => 2,
            PipelineError::Rerank(RerankError::Chat(_)) => 4,
            PipelineError::Rerank(
                RerankError::MissingOneShot(_)
                | RerankError::Plan(_)
                | RerankError::Prompt(_)
                | RerankError::InvalidArgument(_),
            ) => 2,
            PipelineError::Rerank(RerankError::OneShot(OneShotError::NotFound(_))) => 3,
            PipelineError::Corpus(CorpusError::Io { .. }) => 3,
            PipelineError::Corpus(CorpusError::InvalidArgument(_) | CorpusError::CorpusTooSmall { .. }) => 2,
            _ => 1,
        }
    }
}

impl From<ChatError> for PipelineError {
    fn from(e: ChatError) -> Self {
        PipelineError::Rerank(RerankError::Chat(e))
    }
}

impl From<OneShotError> for PipelineError {
    fn from(e: OneShotError) -> Self {
        PipelineError::Rerank(RerankError::OneShot(e))
    }
}

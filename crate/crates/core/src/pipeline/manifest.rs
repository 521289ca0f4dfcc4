//! Per-stage run manifests, file digests and the output-directory lock.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineConfig, PipelineError};
use crate::rerank::TokenUsage;

pub const MANIFEST_DIR: &str = "manifests";
pub const LOCK_FILE: &str = ".hlmcite.lock";

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Label,
    Sample,
    Embed,
    Retrieve,
    Rerank,
    Eval,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Label,
        Stage::Sample,
        Stage::Embed,
        Stage::Retrieve,
        Stage::Rerank,
        Stage::Eval,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Label => "label",
            Stage::Sample => "sample",
            Stage::Embed => "embed",
            Stage::Retrieve => "retrieve",
            Stage::Rerank => "rerank",
            Stage::Eval => "eval",
            Stage::Report => "report",
        }
    }

    /// Stages whose outputs this one reads.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Label | Stage::Embed => &[],
            Stage::Sample => &[Stage::Label],
            Stage::Retrieve => &[Stage::Sample, Stage::Embed],
            Stage::Rerank => &[Stage::Retrieve],
            Stage::Eval => &[Stage::Rerank],
            Stage::Report => &[Stage::Eval],
        }
    }

    /// The part of the configuration this stage's outputs depend on.
    pub fn params(self, c: &PipelineConfig) -> serde_json::Value {
        use serde_json::json;
        let t = &c.task;
        match self {
            Stage::Label => json!({}),
            Stage::Sample => json!({
                "seed": t.seed, "queries": t.queries, "t1": t.t1, "t2": t.t2,
                "t_q": t.t_q, "split": t.split,
            }),
            Stage::Embed => json!({ "embedding": c.embedding }),
            Stage::Retrieve => json!({
                "r_q": t.r_q, "r_q_natural": t.r_q_natural, "r_q_social": t.r_q_social,
            }),
            Stage::Rerank => json!({
                "backend": c.chat.backend, "mock": c.chat.mock, "model": c.chat.model,
                "temperature": c.chat.temperature, "ablation": c.ablation,
                "prompts": c.paths.prompts, "oneshot": c.paths.oneshot,
                "eval_on": c.eval.eval_on, "t1": t.t1,
            }),
            Stage::Eval => json!({
                "eval_on": c.eval.eval_on, "ks": c.eval.ks, "gains": c.eval.gains,
                "keyword_baseline": c.eval.keyword_baseline, "external": c.eval.external,
            }),
            Stage::Report => json!({
                "bootstrap_resamples": c.eval.bootstrap_resamples,
                "bootstrap_seed": c.eval.bootstrap_seed,
            }),
        }
    }

    pub fn manifest_path(self, out: &Path) -> PathBuf {
        out.join(MANIFEST_DIR).join(format!("{}.json", self.name()))
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

pub fn file_digest(path: &Path) -> Result<FileDigest, PipelineError> {
    let mut file = File::open(path).map_err(PipelineError::io(path))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = file.read(&mut buf).map_err(PipelineError::io(path))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: hex::encode(hasher.finalize()),
        bytes,
    })
}

/// What one stage consumed and produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: Stage,
    pub tool_version: String,
    pub config: PipelineConfig,
    pub params: serde_json::Value,
    pub inputs: BTreeMap<String, FileDigest>,
    pub outputs: BTreeMap<String, FileDigest>,
    /// Prompt and one-shot asset digests.
    pub assets: BTreeMap<String, String>,
    /// Backend role → backend/model name.
    pub backends: BTreeMap<String, String>,
    pub tokens: Option<TokenUsage>,
    pub counters: BTreeMap<String, u64>,
    pub elapsed_ms: u64,
}

impl RunManifest {
    pub fn new(stage: Stage, config: &PipelineConfig) -> Self {
        Self {
            stage,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            params: stage.params(config),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            assets: BTreeMap::new(),
            backends: BTreeMap::new(),
            tokens: None,
            counters: BTreeMap::new(),
            elapsed_ms: 0,
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) -> Result<(), PipelineError> {
        self.inputs.insert(name.into(), file_digest(path)?);
        Ok(())
    }

    pub fn output(&mut self, name: &str, path: &Path) -> Result<(), PipelineError> {
        self.outputs.insert(name.into(), file_digest(path)?);
        Ok(())
    }

    pub fn load(stage: Stage, out: &Path) -> Result<Self, PipelineError> {
        let path = stage.manifest_path(out);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(PipelineError::MissingUpstream {
                    artifact: path,
                    command: stage.name(),
                })
            }
            Err(e) => return Err(PipelineError::io(&path)(e)),
        };
        serde_json::from_str(&text).map_err(|e| PipelineError::Stale {
            artifact: path,
            reason: format!("unreadable manifest ({e})"),
            command: stage.name(),
        })
    }

    pub fn save(&self, out: &Path) -> Result<(), PipelineError> {
        let path = self.stage.manifest_path(out);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(&path, text.as_bytes())
    }
}

/// Checks that every stage upstream of `stage` has a manifest, that the
/// files it recorded are unchanged, and that the configuration it ran with
/// still matches. Errors name the command to rerun: a changed file is blamed
/// on the stage that wrote it, and only external inputs on their reader.
pub fn check_upstream(stage: Stage, config: &PipelineConfig, out: &Path) -> Result<(), PipelineError> {
    let mut closure: Vec<Stage> = Vec::new();
    let mut todo: std::collections::VecDeque<Stage> = stage.upstream().iter().copied().collect();
    while let Some(s) = todo.pop_front() {
        if !closure.contains(&s) {
            closure.push(s);
            todo.extend(s.upstream());
        }
    }

    // Missing manifests are reported nearest first; file checks run earliest first.
    let mut manifests = Vec::with_capacity(closure.len());
    for &s in &closure {
        manifests.push(RunManifest::load(s, out)?);
    }
    manifests.sort_by_key(|m| m.stage);
    for m in &manifests {
        let s = m.stage;
        if m.params != s.params(config) {
            return Err(PipelineError::Stale {
                artifact: s.manifest_path(out),
                reason: "configuration changed since it ran".into(),
                command: s.name(),
            });
        }
    }
    for m in &manifests {
        verify_files(m.stage, &m.outputs, "output")?;
    }
    for m in &manifests {
        verify_files(m.stage, &m.inputs, "input")?;
    }
    Ok(())
}

fn verify_files(
    stage: Stage,
    files: &BTreeMap<String, FileDigest>,
    kind: &str,
) -> Result<(), PipelineError> {
    for recorded in files.values() {
        if !recorded.path.exists() {
            return Err(PipelineError::MissingUpstream {
                artifact: recorded.path.clone(),
                command: stage.name(),
            });
        }
        if file_digest(&recorded.path)?.sha256 != recorded.sha256 {
            return Err(PipelineError::Stale {
                artifact: recorded.path.clone(),
                reason: format!("{kind} changed since `{stage}` ran"),
                command: stage.name(),
            });
        }
    }
    Ok(())
}

/// Writes through a temporary sibling and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(PipelineError::io(parent))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let mut f = File::create(&tmp).map_err(PipelineError::io(&tmp))?;
    f.write_all(bytes).map_err(PipelineError::io(&tmp))?;
    f.sync_all().map_err(PipelineError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(PipelineError::io(path))
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(out: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(out).map_err(PipelineError::io(out))?;
        let path = out.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(path)),
            Err(e) => Err(PipelineError::io(&path)(e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let first = OutputLock::acquire(dir.path()).unwrap();
        assert!(matches!(OutputLock::acquire(dir.path()), Err(PipelineError::Locked(_))));
        drop(first);
        OutputLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn digest_matches_sha256() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f");
        write_atomic(&p, b"abc").unwrap();
        let d = file_digest(&p).unwrap();
        assert_eq!(d.sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(d.bytes, 3);
    }

    #[test]
    fn missing_and_stale_upstream_name_the_command() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        let config = PipelineConfig::default();
        match check_upstream(Stage::Sample, &config, out) {
            Err(PipelineError::MissingUpstream { command, .. }) => assert_eq!(command, "label"),
            other => panic!("{other:?}"),
        }

        let file = out.join("labels.jsonl");
        write_atomic(&file, b"x\n").unwrap();
        let mut m = RunManifest::new(Stage::Label, &config);
        m.output("labels", &file).unwrap();
        m.save(out).unwrap();
        check_upstream(Stage::Sample, &config, out).unwrap();

        write_atomic(&file, b"y\n").unwrap();
        match check_upstream(Stage::Sample, &config, out) {
            Err(PipelineError::Stale { command, .. }) => assert_eq!(command, "label"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_drift_is_stale() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = PipelineConfig::default();
        RunManifest::new(Stage::Embed, &config).save(dir.path()).unwrap();
        check_upstream(Stage::Retrieve, &config, dir.path()).unwrap_err();
        RunManifest::new(Stage::Sample, &config).save(dir.path()).unwrap();
        RunManifest::new(Stage::Label, &config).save(dir.path()).unwrap();
        check_upstream(Stage::Retrieve, &config, dir.path()).unwrap();
        config.task.seed += 1;
        match check_upstream(Stage::Retrieve, &config, dir.path()) {
            Err(PipelineError::Stale { command, reason, .. }) => {
                assert_eq!(command, "sample");
                assert!(reason.contains("configuration"));
            }
            other => panic!("{other:?}"),
        }
    }
}

//! Prompt templates and their rendering.
//!
//! Templates are UTF-8 text with `{Placeholder}` slots. The built-in set is
//! compiled in from `assets/prompts/`; a directory with the same file names
//! can replace it at run time.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::chat::{ChatMessage, Role};
use super::oneshot::OneShotExample;
use super::parse::split_analysis;
use crate::corpus::PaperRecord;
use crate::seed::sha256_hex;

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("template `{template}` uses unknown placeholder {{{name}}}")]
    UnknownPlaceholder { template: String, name: String },
    #[error("cannot read template {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("the rerank pool is empty")]
    EmptyPool,
    #[error("{found} analyses for a pool of {expected}")]
    AnalysisCount { expected: usize, found: usize },
    #[error("one-shot example `{0}` is not approved")]
    NotApproved(String),
}

/// Title and abstract as shown to the agents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperText {
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
}

impl From<&PaperRecord> for PaperText {
    fn from(p: &PaperRecord) -> Self {
        Self {
            title: p.title.clone(),
            abstract_text: p.abstract_text.clone(),
        }
    }
}

/// File stems of the template set, in digest order.
pub const TEMPLATE_NAMES: [&str; 8] = [
    "analyzer_system",
    "analyzer_user",
    "analyzer_candidate",
    "decider_system",
    "decider_user",
    "decider_candidate",
    "oneshot_analyzer",
    "oneshot_decider",
];

/// Joins rendered candidate blocks inside a user prompt.
pub const BLOCK_SEPARATOR: &str = ", ";

const BUILTIN: [&str; 8] = [
    include_str!("../../assets/prompts/analyzer_system.txt"),
    include_str!("../../assets/prompts/analyzer_user.txt"),
    include_str!("../../assets/prompts/analyzer_candidate.txt"),
    include_str!("../../assets/prompts/decider_system.txt"),
    include_str!("../../assets/prompts/decider_user.txt"),
    include_str!("../../assets/prompts/decider_candidate.txt"),
    include_str!("../../assets/prompts/oneshot_analyzer.txt"),
    include_str!("../../assets/prompts/oneshot_decider.txt"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    texts: BTreeMap<&'static str, String>,
}

fn strip_final_newline(s: &str) -> &str {
    s.strip_suffix("\r\n")
        .or_else(|| s.strip_suffix('\n'))
        .unwrap_or(s)
}

impl Default for Templates {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Templates {
    pub fn builtin() -> Self {
        Self {
            texts: TEMPLATE_NAMES
                .iter()
                .zip(BUILTIN)
                .map(|(name, text)| (*name, strip_final_newline(text).to_string()))
                .collect(),
        }
    }

    /// Reads `<name>.txt` for every template name from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut texts = BTreeMap::new();
        for name in TEMPLATE_NAMES {
            let path = dir.join(format!("{name}.txt"));
            let text = std::fs::read_to_string(&path)
                .map_err(|source| PromptError::Io { path, source })?;
            texts.insert(name, strip_final_newline(&text).to_string());
        }
        Ok(Self { texts })
    }

    pub fn get(&self, name: &str) -> &str {
        &self.texts[name]
    }

    /// Content digest of the whole set, for run manifests.
    pub fn digest(&self) -> String {
        let mut buf = Vec::new();
        for name in TEMPLATE_NAMES {
            let text = &self.texts[name];
            buf.extend_from_slice(name.as_bytes());
            buf.push(0);
            buf.extend_from_slice(&(text.len() as u64).to_le_bytes());
            buf.extend_from_slice(text.as_bytes());
        }
        sha256_hex(&buf)
    }

    fn render(&self, name: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
        render(name, self.get(name), values)
    }
}

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{([A-Za-z][A-Za-z0-9_]*)\}").unwrap());

/// Names of all `{Placeholder}` slots in a template, in order of appearance.
pub fn placeholders(template: &str) -> Vec<&str> {
    PLACEHOLDER
        .captures_iter(template)
        .map(|c| c.get(1).unwrap().as_str())
        .collect()
}

/// Single-pass substitution: values are never rescanned for placeholders.
pub fn render(name: &str, template: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() + values.iter().map(|v| v.1.len()).sum::<usize>());
    let mut last = 0;
    for c in PLACEHOLDER.captures_iter(template) {
        let whole = c.get(0).unwrap();
        let key = c.get(1).unwrap().as_str();
        let value = values
            .iter()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| PromptError::UnknownPlaceholder {
                template: name.to_string(),
                name: key.to_string(),
            })?
            .1;
        out.push_str(&template[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&template[last..]);
    Ok(out)
}

/// Whether an approved worked example is prepended to the prompts.
#[derive(Debug, Clone, Copy)]
pub enum Guidance<'a> {
    OneShot(&'a OneShotExample),
    /// No exemplar at all.
    Ablated,
}

impl<'a> Guidance<'a> {
    fn example(&self) -> Result<Option<&'a OneShotExample>, PromptError> {
        match self {
            Guidance::OneShot(ex) if !ex.is_approved() => {
                Err(PromptError::NotApproved(ex.name.clone()))
            }
            Guidance::OneShot(ex) => Ok(Some(ex)),
            Guidance::Ablated => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn analyzer_blocks(t: &Templates, pool: &[PaperText]) -> Result<String, PromptError> {
    let blocks = pool
        .iter()
        .enumerate()
        .map(|(i, p)| {
            t.render(
                "analyzer_candidate",
                &[
                    ("Index", &(i + 1).to_string()),
                    ("CandidateTitle", &p.title),
                    ("CandidateAbstract", &p.abstract_text),
                ],
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(blocks.join(BLOCK_SEPARATOR))
}

fn decider_blocks<A: AsRef<str>>(
    t: &Templates,
    pool: &[PaperText],
    analyses: &[A],
) -> Result<String, PromptError> {
    let blocks = pool
        .iter()
        .zip(analyses)
        .enumerate()
        .map(|(i, (p, a))| {
            t.render(
                "decider_candidate",
                &[
                    ("Index", &(i + 1).to_string()),
                    ("CandidateTitle", &p.title),
                    ("CandidateAnalysis", a.as_ref()),
                ],
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(blocks.join(BLOCK_SEPARATOR))
}

fn messages(system: String, user: String) -> Vec<ChatMessage> {
    vec![
        ChatMessage {
            role: Role::System,
            content: system,
        },
        ChatMessage {
            role: Role::User,
            content: user,
        },
    ]
}

fn with_prefix(prefix: Option<String>, user: String) -> String {
    match prefix {
        Some(p) => format!("{p}\n\n{user}"),
        None => user,
    }
}

/// System and user messages asking for a per-candidate citation analysis of
/// `pool`, numbered from 1 in pool order.
pub fn render_analyzer_prompt(
    t: &Templates,
    guidance: Guidance<'_>,
    query: &PaperText,
    pool: &[PaperText],
) -> Result<RenderedPrompt, PromptError> {
    if pool.is_empty() {
        return Err(PromptError::EmptyPool);
    }
    let mut warnings = Vec::new();
    for (i, p) in pool.iter().enumerate() {
        if p.abstract_text.trim().is_empty() {
            warnings.push(format!("paper {} has an empty abstract", i + 1));
        }
    }
    let user = t.render(
        "analyzer_user",
        &[
            ("QueryPaperTitle", &query.title),
            ("QueryPaperAbstract", &query.abstract_text),
            ("CandidateBlocks", &analyzer_blocks(t, pool)?),
        ],
    )?;
    let prefix = match guidance.example()? {
        Some(ex) => Some(t.render(
            "oneshot_analyzer",
            &[
                ("ExampleQueryTitle", &ex.query.title),
                ("ExampleQueryAbstract", &ex.query.abstract_text),
                ("ExampleCandidateBlocks", &analyzer_blocks(t, &ex.candidates)?),
                ("ExampleAnalysis", &ex.analysis),
            ],
        )?),
        None => None,
    };
    Ok(RenderedPrompt {
        messages: messages(t.get("analyzer_system").to_string(), with_prefix(prefix, user)),
        warnings,
    })
}

/// System and user messages asking for a ranking of `pool` given one
/// analysis text per candidate.
pub fn render_decider_prompt<A: AsRef<str>>(
    t: &Templates,
    guidance: Guidance<'_>,
    query: &PaperText,
    pool: &[PaperText],
    analyses: &[A],
) -> Result<RenderedPrompt, PromptError> {
    if pool.is_empty() {
        return Err(PromptError::EmptyPool);
    }
    if analyses.len() != pool.len() {
        return Err(PromptError::AnalysisCount {
            expected: pool.len(),
            found: analyses.len(),
        });
    }
    let warnings = analyses
        .iter()
        .enumerate()
        .filter(|(_, a)| a.as_ref().trim().is_empty())
        .map(|(i, _)| format!("analysis for paper {} is empty", i + 1))
        .collect();
    let user = t.render(
        "decider_user",
        &[
            ("QueryPaperTitle", &query.title),
            ("QueryPaperAbstract", &query.abstract_text),
            ("CandidateBlocks", &decider_blocks(t, pool, analyses)?),
        ],
    )?;
    let prefix = match guidance.example()? {
        Some(ex) => {
            let (parts, _) = split_analysis(&ex.analysis, ex.candidates.len());
            Some(t.render(
                "oneshot_decider",
                &[
                    ("ExampleQueryTitle", &ex.query.title),
                    ("ExampleQueryAbstract", &ex.query.abstract_text),
                    ("ExampleCandidateBlocks", &decider_blocks(t, &ex.candidates, &parts)?),
                    ("ExampleRanking", &ex.ranking),
                ],
            )?)
        }
        None => None,
    };
    Ok(RenderedPrompt {
        messages: messages(t.get("decider_system").to_string(), with_prefix(prefix, user)),
        warnings,
    })
}

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};

use super::{EmbedError, Embedding, VectorStore};
use crate::corpus::PaperRecord;

/// Token limit applied to embedding inputs.
pub const MAX_INPUT_TOKENS: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbedInput {
    pub id: String,
    pub text: String,
}

/// Anything that turns paper text into dense vectors.
pub trait EmbeddingBackend: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn batch_limit(&self) -> usize;
    fn max_tokens(&self) -> usize {
        MAX_INPUT_TOKENS
    }
    /// Returns one vector per input, in input order.
    fn embed(&self, inputs: &[EmbedInput]) -> Result<Vec<Vec<f32>>, EmbedError>;
}

/// Title and abstract joined by one space, cut to `max_tokens` whitespace tokens.
pub fn embedding_text(paper: &PaperRecord, max_tokens: usize) -> String {
    let joined = format!("{} {}", paper.title.trim(), paper.abstract_text.trim());
    let joined = joined.trim();
    if joined.split_whitespace().nth(max_tokens).is_none() {
        return joined.to_string();
    }
    joined
        .split_whitespace()
        .take(max_tokens)
        .collect::<Vec<_>>()
        .join(" ")
}

fn input_for(backend: &dyn EmbeddingBackend, paper: &PaperRecord) -> Result<EmbedInput, EmbedError> {
    if paper.title.trim().is_empty() {
        return Err(EmbedError::EmptyTitle(paper.id.clone()));
    }
    Ok(EmbedInput {
        id: paper.id.clone(),
        text: embedding_text(paper, backend.max_tokens()),
    })
}

pub fn embed_paper(
    backend: &dyn EmbeddingBackend,
    paper: &PaperRecord,
) -> Result<Embedding<f32>, EmbedError> {
    let input = input_for(backend, paper)?;
    let mut out = backend.embed(std::slice::from_ref(&input))?;
    let values = out.pop().ok_or_else(|| EmbedError::Backend {
        backend: backend.name().to_string(),
        retryable: true,
        message: "empty response".into(),
    })?;
    if values.len() != backend.dim() {
        return Err(EmbedError::DimMismatch {
            expected: backend.dim(),
            found: values.len(),
        });
    }
    Embedding::new(values).map_err(|e| match e {
        EmbedError::NonFinite { index, .. } => EmbedError::NonFinite {
            id: paper.id.clone(),
            index,
        },
        other => other,
    })
}

/// Embeds every paper in batches with at most `in_flight` concurrent
/// requests. Rows land in input order whatever the completion order.
pub fn embed_corpus(
    backend: &dyn EmbeddingBackend,
    papers: &[PaperRecord],
    in_flight: usize,
    attempts: usize,
) -> Result<VectorStore<f32>, EmbedError> {
    let inputs = papers
        .iter()
        .map(|p| input_for(backend, p))
        .collect::<Result<Vec<_>, _>>()?;
    let batches: Vec<&[EmbedInput]> = inputs.chunks(backend.batch_limit().max(1)).collect();
    let results: Mutex<Vec<Option<Vec<Vec<f32>>>>> = Mutex::new(vec![None; batches.len()]);
    let first_error: Mutex<Option<EmbedError>> = Mutex::new(None);
    let next = AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..in_flight.max(1).min(batches.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= batches.len() || first_error.lock().unwrap().is_some() {
                    break;
                }
                match embed_with_retry(backend, batches[i], attempts.max(1)) {
                    Ok(vectors) => results.lock().unwrap()[i] = Some(vectors),
                    Err(e) => {
                        first_error.lock().unwrap().get_or_insert(e);
                        break;
                    }
                }
            });
        }
    });

    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    let dim = backend.dim();
    let mut rows = Vec::with_capacity(inputs.len());
    let mut vectors = results.into_inner().unwrap().into_iter().flatten().flatten();
    for input in &inputs {
        let v = vectors.next().ok_or_else(|| EmbedError::Backend {
            backend: backend.name().to_string(),
            retryable: false,
            message: "backend returned fewer vectors than inputs".into(),
        })?;
        rows.push((input.id.clone(), v));
    }
    VectorStore::from_rows(rows, dim)
}

fn embed_with_retry(
    backend: &dyn EmbeddingBackend,
    batch: &[EmbedInput],
    attempts: usize,
) -> Result<Vec<Vec<f32>>, EmbedError> {
    let mut attempt = 0;
    loop {
        attempt += 1;
        match backend.embed(batch) {
            Ok(v) if v.len() == batch.len() => return Ok(v),
            Ok(v) => {
                return Err(EmbedError::Backend {
                    backend: backend.name().to_string(),
                    retryable: false,
                    message: format!("expected {} vectors, got {}", batch.len(), v.len()),
                })
            }
            Err(EmbedError::Backend { retryable: true, .. }) if attempt < attempts => {
                std::thread::sleep(Duration::from_millis(50 << attempt.min(6)));
            }
            Err(e) => return Err(e),
        }
    }
}

/// Deterministic feature-hashing embedder for tests and offline runs.
///
/// Each lowercase alphanumeric token maps to a fixed pseudo-random vector;
/// a text embeds to the sum of its token vectors scaled by `1/sqrt(tokens)`.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    pub fn vector(&self, text: &str) -> Vec<f32> {
        let mut out = vec![0.0f64; self.dim];
        let tokens: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect();
        for token in &tokens {
            let h = fnv1a(token.as_bytes());
            for (j, slot) in out.iter_mut().enumerate() {
                let bits = splitmix64(h ^ (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                *slot += (bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
            }
        }
        let scale = if tokens.is_empty() {
            0.0
        } else {
            1.0 / (tokens.len() as f64).sqrt()
        };
        out.into_iter().map(|v| (v * scale) as f32).collect()
    }
}

impl EmbeddingBackend for HashEmbedder {
    fn name(&self) -> &str {
        "hash-mock"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn batch_limit(&self) -> usize {
        64
    }

    fn embed(&self, inputs: &[EmbedInput]) -> Result<Vec<Vec<f32>>, EmbedError> {
        Ok(inputs.iter().map(|i| self.vector(&i.text)).collect())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Serves vectors from an existing store, keyed by paper id.
#[derive(Debug, Clone)]
pub struct PrecomputedEmbedder {
    store: VectorStore<f32>,
}

impl PrecomputedEmbedder {
    pub fn new(store: VectorStore<f32>) -> Self {
        Self { store }
    }
}

impl EmbeddingBackend for PrecomputedEmbedder {
    fn name(&self) -> &str {
        "precomputed"
    }

    fn dim(&self) -> usize {
        self.store.dim()
    }

    fn batch_limit(&self) -> usize {
        4096
    }

    fn embed(&self, inputs: &[EmbedInput]) -> Result<Vec<Vec<f32>>, EmbedError> {
        inputs
            .iter()
            .map(|i| {
                self.store
                    .get(&i.id)
                    .map(<[f32]>::to_vec)
                    .ok_or_else(|| EmbedError::Backend {
                        backend: self.name().to_string(),
                        retryable: false,
                        message: format!("no precomputed vector for `{}`", i.id),
                    })
            })
            .collect()
    }
}

/// Request and response shape of a remote embedding API.
#[derive(Debug, Clone)]
pub struct HttpEmbedderConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub dim: usize,
    pub batch_limit: usize,
    pub path: String,
    pub model_field: String,
    pub input_field: String,
    /// Field of the response holding the per-input list.
    pub list_field: String,
    /// Field of each list item holding the vector; empty when items are bare arrays.
    pub vector_field: String,
    pub timeout: Duration,
}

impl HttpEmbedderConfig {
    /// OpenAI-style `/embeddings` defaults, base URL and key from
    /// `EMBED_API_BASE` / `EMBED_API_KEY`.
    pub fn from_env(model: &str, dim: usize) -> Option<Self> {
        let base_url = std::env::var("EMBED_API_BASE").ok()?;
        Some(Self {
            base_url,
            api_key: std::env::var("EMBED_API_KEY").ok(),
            model: model.to_string(),
            dim,
            batch_limit: 64,
            path: "/embeddings".into(),
            model_field: "model".into(),
            input_field: "input".into(),
            list_field: "data".into(),
            vector_field: "embedding".into(),
            timeout: Duration::from_secs(60),
        })
    }
}

pub struct HttpEmbedder {
    config: HttpEmbedderConfig,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(config: HttpEmbedderConfig) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| EmbedError::Backend {
                backend: "http".into(),
                retryable: false,
                message: e.to_string(),
            })?;
        Ok(Self { config, client })
    }

    fn fail(&self, retryable: bool, message: String) -> EmbedError {
        EmbedError::Backend {
            backend: self.name().to_string(),
            retryable,
            message,
        }
    }

    /// Pulls vectors out of a response body according to the configured fields.
    pub fn parse_response(&self, body: &Value) -> Result<Vec<Vec<f32>>, EmbedError> {
        let list = body
            .get(&self.config.list_field)
            .and_then(Value::as_array)
            .ok_or_else(|| self.fail(false, format!("response lacks `{}` array", self.config.list_field)))?;
        let mut items: Vec<&Value> = list.iter().collect();
        if items.iter().all(|v| v.get("index").is_some_and(Value::is_u64)) {
            items.sort_by_key(|v| v["index"].as_u64());
        }
        items
            .into_iter()
            .map(|item| {
                let vector = if self.config.vector_field.is_empty() {
                    item
                } else {
                    item.get(&self.config.vector_field).unwrap_or(&Value::Null)
                };
                vector
                    .as_array()
                    .ok_or_else(|| self.fail(false, "vector is not an array".into()))?
                    .iter()
                    .map(|x| {
                        x.as_f64()
                            .map(|f| f as f32)
                            .ok_or_else(|| self.fail(false, "non-numeric vector component".into()))
                    })
                    .collect()
            })
            .collect()
    }
}

impl EmbeddingBackend for HttpEmbedder {
    fn name(&self) -> &str {
        &self.config.model
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn batch_limit(&self) -> usize {
        self.config.batch_limit
    }

    fn embed(&self, inputs: &[EmbedInput]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let mut body = serde_json::Map::new();
        body.insert(self.config.model_field.clone(), json!(self.config.model));
        body.insert(
            self.config.input_field.clone(),
            json!(inputs.iter().map(|i| i.text.as_str()).collect::<Vec<_>>()),
        );
        let url = format!(
            "{}{}",
            self.config.base_url.trim_end_matches('/'),
            self.config.path
        );
        let mut request = self.client.post(url).json(&Value::Object(body));
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| self.fail(true, e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| self.fail(true, e.to_string()))?;
        if !status.is_success() {
            let retryable = status.as_u16() == 429 || status.is_server_error();
            return Err(self.fail(retryable, format!("HTTP {status}: {text}")));
        }
        let body: Value =
            serde_json::from_str(&text).map_err(|e| self.fail(false, format!("bad JSON: {e}")))?;
        let vectors = self.parse_response(&body)?;
        if vectors.len() != inputs.len() {
            return Err(self.fail(
                false,
                format!("expected {} vectors, got {}", inputs.len(), vectors.len()),
            ));
        }
        Ok(vectors)
    }
}

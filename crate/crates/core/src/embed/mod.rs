//! Dense paper embeddings and exact inner-product retrieval.

mod backend;
mod file;

pub use backend::{
    embed_corpus, embed_paper, embedding_text, EmbedInput, EmbeddingBackend, HashEmbedder,
    HttpEmbedder, HttpEmbedderConfig, PrecomputedEmbedder,
};
pub use file::{MAGIC, VERSION};

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::scalar::{dot, Scalar};

/// Default embedding width of the base encoder.
pub const DEFAULT_DIM: usize = 768;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("unknown candidate id `{0}`")]
    UnknownId(String),
    #[error("duplicate id `{0}` in vector store")]
    DuplicateId(String),
    #[error("non-finite component at index {index} of vector `{id}`")]
    NonFinite { id: String, index: usize },
    #[error("k = {k} exceeds the {available} candidates")]
    KTooLarge { k: usize, available: usize },
    #[error("row count {rows} does not match id count {ids}")]
    RowCount { rows: usize, ids: usize },
    #[error("bad vector file: expected {expected}, found {found}")]
    Format { expected: String, found: String },
    #[error("vector file truncated at byte offset {offset} while reading {what}")]
    Truncated { offset: u64, what: String },
    #[error("embedding backend `{backend}` failed (retryable: {retryable}): {message}")]
    Backend {
        backend: String,
        retryable: bool,
        message: String,
    },
    #[error("paper `{0}` has an empty title")]
    EmptyTitle(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed-length vector of finite components.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<S> {
    values: Vec<S>,
}

impl<S: Scalar> Embedding<S> {
    pub fn new(values: Vec<S>) -> Result<Self, EmbedError> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite {
                id: String::new(),
                index,
            });
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<S> {
        self.values
    }
}

/// Immutable id → vector map stored as a row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore<S> {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Vec<S>,
    dim: usize,
}

/// A candidate and its inner product with the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored<S> {
    pub id: String,
    pub score: S,
}

/// Ranked retrieval set for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult<S> {
    #[serde(rename = "query_id")]
    pub query: String,
    pub ranked: Vec<Scored<S>>,
}

impl<S> RetrievalResult<S> {
    pub fn r_q(&self) -> usize {
        self.ranked.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.ranked.iter().map(|s| s.id.as_str())
    }
}

impl<S: Scalar> VectorStore<S> {
    pub fn empty(dim: usize) -> Self {
        Self {
            ids: Vec::new(),
            index: HashMap::new(),
            matrix: Vec::new(),
            dim,
        }
    }

    /// Builds a store from ids and a flat row-major matrix.
    pub fn from_matrix(ids: Vec<String>, matrix: Vec<S>, dim: usize) -> Result<Self, EmbedError> {
        let rows = matrix.len().checked_div(dim).unwrap_or(0);
        if (dim == 0 && !matrix.is_empty()) || rows * dim != matrix.len() || rows != ids.len() {
            return Err(EmbedError::RowCount {
                rows,
                ids: ids.len(),
            });
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(EmbedError::DuplicateId(id.clone()));
            }
        }
        if let Some(pos) = matrix.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite {
                id: ids[pos / dim].clone(),
                index: pos % dim,
            });
        }
        Ok(Self {
            ids,
            index,
            matrix,
            dim,
        })
    }

    pub fn from_rows(rows: Vec<(String, Vec<S>)>, dim: usize) -> Result<Self, EmbedError> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut matrix = Vec::with_capacity(rows.len() * dim);
        for (id, row) in rows {
            if row.len() != dim {
                return Err(EmbedError::DimMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            ids.push(id);
            matrix.extend(row);
        }
        Self::from_matrix(ids, matrix, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn matrix(&self) -> &[S] {
        &self.matrix
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&[S]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Approximate resident size: matrix, ids and index.
    pub fn heap_bytes(&self) -> usize {
        let ids: usize = self
            .ids
            .iter()
            .map(|id| std::mem::size_of::<String>() + id.capacity())
            .sum();
        let index = self.index.capacity()
            * (std::mem::size_of::<String>() + std::mem::size_of::<usize>() + 8)
            + self.ids.iter().map(|id| id.len()).sum::<usize>();
        self.matrix.capacity() * std::mem::size_of::<S>() + ids + index
    }

    /// Exact top-k by inner product over `candidates`.
    ///
    /// Equal scores are ordered by ascending id. Only a k-sized heap is
    /// allocated besides the output.
    pub fn top_k<I: AsRef<str>>(
        &self,
        query: &[S],
        candidates: &[I],
        k: usize,
    ) -> Result<Vec<Scored<S>>, EmbedError> {
        if query.len() != self.dim {
            return Err(EmbedError::DimMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        if k > candidates.len() {
            return Err(EmbedError::KTooLarge {
                k,
                available: candidates.len(),
            });
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap: BinaryHeap<Entry<'_, S>> = BinaryHeap::with_capacity(k + 1);
        for candidate in candidates {
            let id = candidate.as_ref();
            let row = self
                .position(id)
                .ok_or_else(|| EmbedError::UnknownId(id.to_string()))?;
            let entry = Entry {
                score: dot(query, self.row(row)),
                id: &self.ids[row],
            };
            if heap.len() < k {
                heap.push(entry);
            } else if let Some(mut worst) = heap.peek_mut() {
                if entry < *worst {
                    *worst = entry;
                }
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|e| Scored {
                id: e.id.to_string(),
                score: e.score,
            })
            .collect())
    }

    /// Ranks candidates for `query_id` using its own stored vector.
    pub fn retrieve<I: AsRef<str>>(
        &self,
        query_id: &str,
        candidates: &[I],
        k: usize,
    ) -> Result<RetrievalResult<S>, EmbedError> {
        let query = self
            .get(query_id)
            .ok_or_else(|| EmbedError::UnknownId(query_id.to_string()))?;
        Ok(RetrievalResult {
            query: query_id.to_string(),
            ranked: self.top_k(query, candidates, k)?,
        })
    }
}

/// Heap entry ordered so that "greater" means "ranks worse":
/// lower score, then larger id.
struct Entry<'a, S> {
    score: S,
    id: &'a str,
}

impl<S: Scalar> Ord for Entry<'_, S> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .partial_cmp(&self.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| self.id.cmp(other.id))
    }
}

impl<S: Scalar> PartialOrd for Entry<'_, S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<S: Scalar> PartialEq for Entry<'_, S> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<S: Scalar> Eq for Entry<'_, S> {}

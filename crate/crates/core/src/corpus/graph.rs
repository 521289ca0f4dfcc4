use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError};

/// Counts produced while building a graph from raw edges.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub nodes: usize,
    pub edges: usize,
    pub dropped_dangling: usize,
    pub dropped_self: usize,
    pub dropped_duplicate: usize,
}

/// Directed citation graph over the corpus ids.
///
/// Nodes are numbered in ascending id order, so index order and id order agree
/// and every adjacency list is sorted by id.
#[derive(Debug, Clone)]
pub struct CitationGraph {
    ids: Vec<String>,
    index: HashMap<String, u32>,
    cites: Vec<Vec<u32>>,
    cited_by: Vec<Vec<u32>>,
}

/// Partition of a query's references into core and superficial citations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreLabelResult {
    pub query: String,
    pub core: Vec<String>,
    pub superficial: Vec<String>,
    /// Number of references.
    pub n_q: usize,
    /// Number of core references.
    pub k_q: usize,
    /// Number of followers.
    pub m_q: usize,
}

/// Builds the graph, dropping dangling, self and duplicate edges.
pub fn build_graph<I, S>(corpus: &Corpus, edges: I) -> (CitationGraph, LoadReport)
where
    I: IntoIterator<Item = (S, S)>,
    S: AsRef<str>,
{
    let mut ids: Vec<String> = corpus.papers().iter().map(|p| p.id.clone()).collect();
    ids.sort();
    let index: HashMap<String, u32> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i as u32))
        .collect();

    let mut report = LoadReport {
        nodes: ids.len(),
        ..LoadReport::default()
    };
    let mut pairs = Vec::new();
    for (citing, cited) in edges {
        let (Some(&from), Some(&to)) = (index.get(citing.as_ref()), index.get(cited.as_ref()))
        else {
            report.dropped_dangling += 1;
            continue;
        };
        if from == to {
            report.dropped_self += 1;
            continue;
        }
        pairs.push((from, to));
    }
    let raw = pairs.len();
    pairs.sort_unstable();
    pairs.dedup();
    report.dropped_duplicate = raw - pairs.len();
    report.edges = pairs.len();

    let mut cites = vec![Vec::new(); ids.len()];
    let mut cited_by = vec![Vec::new(); ids.len()];
    for &(from, to) in &pairs {
        cites[from as usize].push(to);
        cited_by[to as usize].push(from);
    }
    // `pairs` is sorted by (from, to), so `cites` lists are already sorted.
    for list in &mut cited_by {
        list.sort_unstable();
    }

    (
        CitationGraph {
            ids,
            index,
            cites,
            cited_by,
        },
        report,
    )
}

/// Reads a `citing_id,cited_id` CSV edge file.
pub fn read_edges(path: &Path) -> Result<Vec<(String, String)>, CorpusError> {
    let parse_err = |line: usize, message: String| CorpusError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => CorpusError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => parse_err(1, format!("{other:?}")),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "citing_id" || &headers[1] != "cited_id" {
        return Err(parse_err(
            1,
            format!("expected header `citing_id,cited_id`, found `{}`", headers.as_slice()),
        ));
    }
    let mut edges = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 2 {
            return Err(parse_err(line, format!("expected 2 columns, found {}", record.len())));
        }
        edges.push((record[0].to_string(), record[1].to_string()));
    }
    Ok(edges)
}

impl CitationGraph {
    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.cites.iter().map(Vec::len).sum()
    }

    /// Node ids in ascending order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<u32> {
        self.index.get(id).copied()
    }

    pub fn id(&self, node: u32) -> &str {
        &self.ids[node as usize]
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Indices of the papers cited by `node`, ascending.
    pub fn references(&self, node: u32) -> &[u32] {
        &self.cites[node as usize]
    }

    /// Indices of the papers citing `node`, ascending.
    pub fn followers(&self, node: u32) -> &[u32] {
        &self.cited_by[node as usize]
    }

    pub fn references_of(&self, id: &str) -> Result<Vec<&str>, CorpusError> {
        let node = self.require(id)?;
        Ok(self.references(node).iter().map(|&n| self.id(n)).collect())
    }

    pub fn followers_of(&self, id: &str) -> Result<Vec<&str>, CorpusError> {
        let node = self.require(id)?;
        Ok(self.followers(node).iter().map(|&n| self.id(n)).collect())
    }

    fn require(&self, id: &str) -> Result<u32, CorpusError> {
        self.index_of(id)
            .ok_or_else(|| CorpusError::NotFound(id.to_string()))
    }

    /// Splits the references of `query` into core and superficial citations.
    ///
    /// A reference `s` is core when some follower `p` of the query also cites `s`.
    pub fn label_citations(&self, query: &str) -> Result<CoreLabelResult, CorpusError> {
        let node = self.require(query)?;
        Ok(self.label_node(node))
    }

    pub(crate) fn label_node(&self, node: u32) -> CoreLabelResult {
        let references = self.references(node);
        let followers = self.followers(node);
        let mut is_core = vec![false; references.len()];
        for &p in followers {
            // Both lists are sorted: merge-intersect.
            let theirs = self.references(p);
            let (mut i, mut j) = (0, 0);
            while i < references.len() && j < theirs.len() {
                match references[i].cmp(&theirs[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        is_core[i] = true;
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
        let mut core = Vec::new();
        let mut superficial = Vec::new();
        for (&s, core_flag) in references.iter().zip(is_core) {
            if core_flag {
                core.push(self.id(s).to_string());
            } else {
                superficial.push(self.id(s).to_string());
            }
        }
        CoreLabelResult {
            query: self.id(node).to_string(),
            n_q: references.len(),
            k_q: core.len(),
            m_q: followers.len(),
            core,
            superficial,
        }
    }

    /// Labels every paper with at least one reference, in ascending id order.
    pub fn label_all(&self) -> Vec<CoreLabelResult> {
        (0..self.ids.len() as u32)
            .into_par_iter()
            .filter(|&n| !self.cites[n as usize].is_empty())
            .map(|n| self.label_node(n))
            .collect()
    }
}

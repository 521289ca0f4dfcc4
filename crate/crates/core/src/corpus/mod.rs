//! Paper corpus, citation graph, core/superficial labeling and task sampling.

mod graph;
mod keywords;
mod sample;

pub use graph::{build_graph, read_edges, CitationGraph, CoreLabelResult, LoadReport};
pub use keywords::keyword_overlap;
pub use sample::{
    build_eval_instance, sample_queries, split_train_test, EvalInstance, Grade, QuerySample,
    SampleOutcome, SplitRatio,
};

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot open {path}: {source}")]
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
    #[error("duplicate paper id `{0}`")]
    DuplicateId(String),
    #[error("paper `{0}` has an empty title")]
    EmptyTitle(String),
    #[error("paper record with empty id")]
    EmptyId,
    #[error("unknown paper id `{0}`")]
    NotFound(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("corpus too small: candidate set of {required} needs {required_pool} non-citation papers, only {available} available")]
    CorpusTooSmall {
        required: usize,
        required_pool: usize,
        available: usize,
    },
}

/// Top-level grouping of scientific fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Natural,
    Social,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Natural => "natural science",
            Domain::Social => "social science",
        })
    }
}

macro_rules! fields {
    ($($variant:ident => $name:literal, $domain:ident;)*) => {
        /// One of the 19 scientific field labels.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum Field {
            $(#[serde(rename = $name)] $variant,)*
        }

        impl Field {
            pub const ALL: [Field; 19] = [$(Field::$variant,)*];

            pub fn name(self) -> &'static str {
                match self { $(Field::$variant => $name,)* }
            }

            pub fn domain(self) -> Domain {
                match self { $(Field::$variant => Domain::$domain,)* }
            }
        }
    };
}

fields! {
    Biology => "biology", Natural;
    Chemistry => "chemistry", Natural;
    ComputerScience => "computer science", Natural;
    Engineering => "engineering", Natural;
    EnvironmentalScience => "environmental science", Natural;
    Geography => "geography", Natural;
    Geology => "geology", Natural;
    MaterialsScience => "materials science", Natural;
    Mathematics => "mathematics", Natural;
    Medicine => "medicine", Natural;
    Physics => "physics", Natural;
    Art => "art", Social;
    Business => "business", Social;
    Economics => "economics", Social;
    History => "history", Social;
    Philosophy => "philosophy", Social;
    PoliticalScience => "political science", Social;
    Psychology => "psychology", Social;
    Sociology => "sociology", Social;
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Field {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_lowercase().replace(['_', '-'], " ");
        Field::ALL
            .iter()
            .copied()
            .find(|f| f.name() == wanted)
            .ok_or_else(|| format!("unknown field `{s}`"))
    }
}

/// Textual and metadata view of one paper.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    pub field: Field,
    pub year: i32,
}

/// The universe of papers, indexed by id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    papers: Vec<PaperRecord>,
    index: HashMap<String, usize>,
    empty_abstracts: Vec<String>,
}

impl Corpus {
    pub fn from_records(records: Vec<PaperRecord>) -> Result<Self, CorpusError> {
        let mut index = HashMap::with_capacity(records.len());
        let mut empty_abstracts = Vec::new();
        for (i, paper) in records.iter().enumerate() {
            if paper.id.is_empty() {
                return Err(CorpusError::EmptyId);
            }
            if paper.title.trim().is_empty() {
                return Err(CorpusError::EmptyTitle(paper.id.clone()));
            }
            if index.insert(paper.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(paper.id.clone()));
            }
            if paper.abstract_text.trim().is_empty() {
                empty_abstracts.push(paper.id.clone());
            }
        }
        empty_abstracts.sort();
        Ok(Self {
            papers: records,
            index,
            empty_abstracts,
        })
    }

    /// Reads a JSONL corpus; errors carry the 1-based line number.
    pub fn load_jsonl(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| CorpusError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: PaperRecord =
                serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            records.push(record);
        }
        Self::from_records(records)
    }

    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(File::create(path)?);
        for paper in &self.papers {
            serde_json::to_writer(&mut out, paper)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn get(&self, id: &str) -> Option<&PaperRecord> {
        self.index.get(id).map(|&i| &self.papers[i])
    }

    pub fn require(&self, id: &str) -> Result<&PaperRecord, CorpusError> {
        self.get(id).ok_or_else(|| CorpusError::NotFound(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Papers in load order.
    pub fn papers(&self) -> &[PaperRecord] {
        &self.papers
    }

    pub fn len(&self) -> usize {
        self.papers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.papers.is_empty()
    }

    /// Ids of papers whose abstract is empty; they are kept and embed from the title alone.
    pub fn empty_abstracts(&self) -> &[String] {
        &self.empty_abstracts
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn paper(id: &str, keywords: &[&str]) -> PaperRecord {
        PaperRecord {
            id: id.to_string(),
            title: format!("Title {id}"),
            abstract_text: format!("Abstract {id}"),
            keywords: keywords.iter().map(|k| k.to_string()).collect(),
            field: Field::Biology,
            year: 2020,
        }
    }

    #[test]
    fn nineteen_fields_split_eleven_eight() {
        let natural = Field::ALL
            .iter()
            .filter(|f| f.domain() == Domain::Natural)
            .count();
        assert_eq!(natural, 11);
        assert_eq!(Field::ALL.len() - natural, 8);
    }

    #[test]
    fn field_parses_loosely() {
        assert_eq!(
            "Computer_Science".parse::<Field>(),
            Ok(Field::ComputerScience)
        );
        assert!("astrology".parse::<Field>().is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Corpus::from_records(vec![paper("a", &[]), paper("a", &[])]).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId(id) if id == "a"));
    }

    #[test]
    fn empty_title_rejected_empty_abstract_flagged() {
        let mut bad = paper("a", &[]);
        bad.title = " ".into();
        assert!(matches!(
            Corpus::from_records(vec![bad]),
            Err(CorpusError::EmptyTitle(_))
        ));

        let mut sparse = paper("b", &[]);
        sparse.abstract_text.clear();
        let corpus = Corpus::from_records(vec![paper("a", &[]), sparse]).unwrap();
        assert_eq!(corpus.empty_abstracts(), ["b".to_string()]);
        assert_eq!(corpus.len(), 2);
    }

    #[test]
    fn jsonl_error_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"id":"a","title":"A","abstract":"x","keywords":[],"field":"physics","year":2001}"#,
                "\n",
                "{not json}\n"
            ),
        )
        .unwrap();
        match Corpus::load_jsonl(&path) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}

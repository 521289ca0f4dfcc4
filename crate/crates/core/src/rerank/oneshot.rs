//! Worked examples prepended to agent prompts.
//!
//! An example lives in its own directory:
//!
//! ```text
//! <name>/example.json   query, candidates, ground-truth order, optional field
//! <name>/analysis.txt   exemplary analysis
//! <name>/ranking.txt    exemplary ranking
//! <name>/APPROVED       review marker holding the content digest
//! ```
//!
//! An example is injectable only while its marker matches the current
//! content, so any edit after review drops it back to draft.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::prompt::PaperText;
use crate::corpus::Field;
use crate::seed::sha256_hex;

pub const EXAMPLE_FILE: &str = "example.json";
pub const ANALYSIS_FILE: &str = "analysis.txt";
pub const RANKING_FILE: &str = "ranking.txt";
pub const APPROVAL_FILE: &str = "APPROVED";

#[derive(Debug, thiserror::Error)]
pub enum OneShotError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("no one-shot example named `{0}`")]
    NotFound(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OneShotError + '_ {
    move |source| OneShotError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewStatus {
    Draft,
    Approved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ExampleFile {
    name: String,
    #[serde(default)]
    field: Option<Field>,
    query: PaperText,
    candidates: Vec<PaperText>,
    ground_truth_order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneShotExample {
    pub name: String,
    /// Field this example is specialised for; `None` for a general example.
    pub field: Option<Field>,
    pub query: PaperText,
    pub candidates: Vec<PaperText>,
    /// 1-based candidate indices, most likely citation first.
    pub ground_truth_order: Vec<usize>,
    pub analysis: String,
    pub ranking: String,
    pub status: ReviewStatus,
    /// Digest of the content files this example was read from.
    pub digest: String,
}

impl OneShotExample {
    pub fn is_approved(&self) -> bool {
        self.status == ReviewStatus::Approved
    }

    fn example_json(&self) -> String {
        let file = ExampleFile {
            name: self.name.clone(),
            field: self.field,
            query: self.query.clone(),
            candidates: self.candidates.clone(),
            ground_truth_order: self.ground_truth_order.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("example serializes");
        s.push('\n');
        s
    }

    fn from_parts(
        path: &Path,
        example: &str,
        analysis: &str,
        ranking: &str,
        marker: Option<&str>,
    ) -> Result<Self, OneShotError> {
        let invalid = |message: String| OneShotError::Invalid {
            path: path.to_path_buf(),
            message,
        };
        let file: ExampleFile =
            serde_json::from_str(example).map_err(|e| invalid(format!("{EXAMPLE_FILE}: {e}")))?;
        if file.candidates.is_empty() {
            return Err(invalid("example has no candidates".into()));
        }
        let mut order = file.ground_truth_order.clone();
        order.sort_unstable();
        if order != (1..=file.candidates.len()).collect::<Vec<_>>() {
            return Err(invalid(format!(
                "ground_truth_order must be a permutation of 1..={}",
                file.candidates.len()
            )));
        }
        let digest = content_digest(example, analysis, ranking);
        let approved = marker.is_some_and(|m| parse_marker(m) == Some(digest.as_str()));
        Ok(Self {
            name: file.name,
            field: file.field,
            query: file.query,
            candidates: file.candidates,
            ground_truth_order: file.ground_truth_order,
            analysis: analysis.to_string(),
            ranking: ranking.to_string(),
            status: if approved {
                ReviewStatus::Approved
            } else {
                ReviewStatus::Draft
            },
            digest,
        })
    }

    pub fn load(dir: &Path) -> Result<Self, OneShotError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(io_err(&path))
        };
        let example = read(EXAMPLE_FILE)?;
        let analysis = read(ANALYSIS_FILE)?;
        let ranking = read(RANKING_FILE)?;
        let marker_path = dir.join(APPROVAL_FILE);
        let marker = match fs::read_to_string(&marker_path) {
            Ok(m) => Some(m),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(io_err(&marker_path)(e)),
        };
        Self::from_parts(dir, &example, &analysis, &ranking, marker.as_deref())
    }

    /// Writes the example as a draft under `dir`, replacing any previous
    /// content and approval.
    pub fn save_draft(&self, dir: &Path) -> Result<(), OneShotError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let marker = dir.join(APPROVAL_FILE);
        if marker.exists() {
            fs::remove_file(&marker).map_err(io_err(&marker))?;
        }
        for (name, text) in [
            (EXAMPLE_FILE, self.example_json()),
            (ANALYSIS_FILE, self.analysis.clone()),
            (RANKING_FILE, self.ranking.clone()),
        ] {
            let path = dir.join(name);
            fs::write(&path, text).map_err(io_err(&path))?;
        }
        Ok(())
    }

    /// Relative ground-truth order of a subset of candidates.
    ///
    /// `picks` are 1-based candidate indices in presentation order; the
    /// result lists positions within `picks`, most likely citation first.
    pub fn ground_truth_for(&self, picks: &[usize]) -> Vec<usize> {
        let rank = |c: usize| self.ground_truth_order.iter().position(|x| *x == c);
        let mut positions: Vec<usize> = (1..=picks.len()).collect();
        positions.sort_by_key(|p| rank(picks[p - 1]));
        positions
    }
}

fn content_digest(example: &str, analysis: &str, ranking: &str) -> String {
    let mut buf = Vec::new();
    for part in [example, analysis, ranking] {
        buf.extend_from_slice(&(part.len() as u64).to_le_bytes());
        buf.extend_from_slice(part.as_bytes());
    }
    sha256_hex(&buf)
}

fn parse_marker(marker: &str) -> Option<&str> {
    marker.trim().strip_prefix("approved sha256:")
}

/// Marks the draft in `dir` as reviewed.
pub fn approve(dir: &Path) -> Result<OneShotExample, OneShotError> {
    let ex = OneShotExample::load(dir)?;
    let path = dir.join(APPROVAL_FILE);
    fs::write(&path, format!("approved sha256:{}\n", ex.digest)).map_err(io_err(&path))?;
    OneShotExample::load(dir)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneShotInfo {
    pub name: String,
    pub field: Option<Field>,
    pub status: ReviewStatus,
    pub candidates: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OneShotLibrary {
    examples: Vec<OneShotExample>,
}

impl OneShotLibrary {
    /// The shipped default example.
    pub fn builtin() -> Self {
        let ex = OneShotExample::from_parts(
            Path::new("<builtin>/default"),
            include_str!("../../assets/oneshot/default/example.json"),
            include_str!("../../assets/oneshot/default/analysis.txt"),
            include_str!("../../assets/oneshot/default/ranking.txt"),
            Some(include_str!("../../assets/oneshot/default/APPROVED")),
        )
        .expect("built-in one-shot example is valid");
        Self { examples: vec![ex] }
    }

    /// Every subdirectory of `root` holding an example. A missing root is an
    /// empty library.
    pub fn load(root: &Path) -> Result<Self, OneShotError> {
        let mut examples = Vec::new();
        let entries = match fs::read_dir(root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(e) => return Err(io_err(root)(e)),
        };
        for entry in entries {
            let path = entry.map_err(io_err(root))?.path();
            if path.join(EXAMPLE_FILE).is_file() {
                examples.push(OneShotExample::load(&path)?);
            }
        }
        examples.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(Self { examples })
    }

    /// Adds `other`'s examples; same-named ones replace ours.
    pub fn merge(mut self, other: OneShotLibrary) -> Self {
        for ex in other.examples {
            self.examples.retain(|e| e.name != ex.name);
            self.examples.push(ex);
        }
        self.examples.sort_by(|a, b| a.name.cmp(&b.name));
        self
    }

    pub fn examples(&self) -> &[OneShotExample] {
        &self.examples
    }

    pub fn get(&self, name: &str) -> Option<&OneShotExample> {
        self.examples.iter().find(|e| e.name == name)
    }

    pub fn list(&self) -> Vec<OneShotInfo> {
        self.examples
            .iter()
            .map(|e| OneShotInfo {
                name: e.name.clone(),
                field: e.field,
                status: e.status,
                candidates: e.candidates.len(),
            })
            .collect()
    }

    /// Approved example for a query. With `per_field`, an example tagged
    /// with the query's field wins; otherwise (or if none exists) a general
    /// example is used, preferring the one named `default`.
    pub fn select(&self, field: Field, per_field: bool) -> Option<&OneShotExample> {
        let approved = || self.examples.iter().filter(|e| e.is_approved());
        if per_field {
            if let Some(e) = approved().find(|e| e.field == Some(field)) {
                return Some(e);
            }
        }
        approved()
            .filter(|e| e.field.is_none())
            .min_by_key(|e| (e.name != "default", e.name.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn builtin_default() -> OneShotExample {
        OneShotLibrary::builtin().get("default").unwrap().clone()
    }

    #[test]
    fn builtin_default_is_approved() {
        let ex = builtin_default();
        assert!(ex.is_approved());
        assert_eq!(ex.candidates.len(), 6);
        assert_eq!(ex.ground_truth_order, [1, 2, 3, 4, 5, 6]);
        assert!(ex.query.title.starts_with("Transformer-XL"));
        assert!(ex.ranking.starts_with("Ranked order: paper 1, paper 2"));
    }

    #[test]
    fn three_candidate_ranking_is_two_three_one() {
        let ex = builtin_default();
        let title = |i: usize| ex.candidates[i - 1].title.as_str();
        // Neural probabilistic LM, Transformers, BERT.
        let picks = [6, 1, 4];
        assert!(title(6).contains("Neural Probabilistic"));
        assert!(title(1).contains("Attention"));
        assert!(title(4).starts_with("BERT"));
        assert_eq!(ex.ground_truth_for(&picks), [2, 3, 1]);
    }

    #[test]
    fn draft_roundtrip_and_approval() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bio");
        let mut ex = builtin_default();
        ex.name = "bio".into();
        ex.field = Some(Field::Biology);
        ex.save_draft(&path).unwrap();

        let lib = OneShotLibrary::load(dir.path()).unwrap();
        assert_eq!(lib.list()[0].status, ReviewStatus::Draft);
        assert!(lib.select(Field::Biology, true).is_none());

        let approved = approve(&path).unwrap();
        assert!(approved.is_approved());
        let lib = OneShotLibrary::load(dir.path()).unwrap();
        assert_eq!(lib.select(Field::Biology, true).unwrap().name, "bio");
        // Field-tagged examples are not used as general fallbacks.
        assert!(lib.select(Field::Physics, true).is_none());
        assert!(lib.select(Field::Biology, false).is_none());
    }

    #[test]
    fn edits_after_approval_revert_to_draft() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("default");
        builtin_default().save_draft(&path).unwrap();
        approve(&path).unwrap();
        fs::write(path.join(RANKING_FILE), "Ranked order: paper 2, paper 1\n").unwrap();
        assert_eq!(OneShotExample::load(&path).unwrap().status, ReviewStatus::Draft);
    }

    #[test]
    fn per_field_falls_back_to_general() {
        let dir = tempfile::tempdir().unwrap();
        for (name, field) in [("default", None), ("econ", Some(Field::Economics)), ("aaa", None)] {
            let mut ex = builtin_default();
            ex.name = name.into();
            ex.field = field;
            let p = dir.path().join(name);
            ex.save_draft(&p).unwrap();
            approve(&p).unwrap();
        }
        let lib = OneShotLibrary::load(dir.path()).unwrap();
        assert_eq!(lib.select(Field::Economics, true).unwrap().name, "econ");
        assert_eq!(lib.select(Field::Physics, true).unwrap().name, "default");
        assert_eq!(lib.select(Field::Economics, false).unwrap().name, "default");
    }

    #[test]
    fn invalid_ground_truth_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut ex = builtin_default();
        ex.ground_truth_order = vec![1, 1, 2, 3, 4, 5];
        ex.save_draft(dir.path()).unwrap();
        assert!(matches!(
            OneShotExample::load(dir.path()),
            Err(OneShotError::Invalid { .. })
        ));
    }

    #[test]
    fn missing_root_is_empty() {
        let lib = OneShotLibrary::load(Path::new("/nonexistent/oneshots")).unwrap();
        assert!(lib.examples().is_empty());
    }
}

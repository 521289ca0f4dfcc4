//! Deterministic chat backends for tests and offline runs.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::chat::{AgentRole, CallHint, ChatBackend, ChatError, ChatReply, ChatRequest};
use crate::corpus::{EvalInstance, Grade};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockMode {
    /// Ranks the pool in the order it was presented.
    Identity,
    /// Ranks core citations first, then superficial ones, then the rest;
    /// ties keep presentation order.
    Oracle,
    /// Every call fails with a retryable error.
    Failing,
}

impl std::str::FromStr for MockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "identity" => Ok(Self::Identity),
            "oracle" => Ok(Self::Oracle),
            "failing" => Ok(Self::Failing),
            other => Err(format!("unknown mock `{other}` (expected identity, oracle or failing)")),
        }
    }
}

pub struct MockChat {
    mode: MockMode,
    grades: HashMap<String, HashMap<String, Grade>>,
    calls: AtomicUsize,
}

impl MockChat {
    pub fn new(mode: MockMode) -> Self {
        Self {
            mode,
            grades: HashMap::new(),
            calls: AtomicUsize::new(0),
        }
    }

    /// Oracle mock that knows the labels of every instance.
    pub fn oracle<'a>(instances: impl IntoIterator<Item = &'a EvalInstance>) -> Self {
        let grades = instances
            .into_iter()
            .map(|inst| {
                let g = inst
                    .core
                    .iter()
                    .map(|id| (id.clone(), Grade::Core))
                    .chain(inst.superficial.iter().map(|id| (id.clone(), Grade::Superficial)))
                    .collect();
                (inst.query.clone(), g)
            })
            .collect();
        Self {
            mode: MockMode::Oracle,
            grades,
            calls: AtomicUsize::new(0),
        }
    }

    /// Number of `complete` calls so far, failed ones included.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn grade(&self, query: &str, id: &str) -> Grade {
        self.grades
            .get(query)
            .and_then(|g| g.get(id))
            .copied()
            .unwrap_or(Grade::None)
    }
}

impl ChatBackend for MockChat {
    fn name(&self) -> &str {
        match self.mode {
            MockMode::Identity => "mock-identity",
            MockMode::Oracle => "mock-oracle",
            MockMode::Failing => "mock-failing",
        }
    }

    fn model(&self) -> &str {
        "mock"
    }

    fn complete(&self, _request: &ChatRequest, hint: &CallHint<'_>) -> Result<ChatReply, ChatError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.mode == MockMode::Failing {
            return Err(ChatError::Backend {
                backend: self.name().into(),
                retryable: true,
                message: "simulated outage".into(),
            });
        }
        let m = hint.pool_ids.len();
        let content = match hint.agent {
            AgentRole::Analyzer => (1..=m)
                .map(|i| format!("Paper {i}\nCandidate {} relates to the query.", hint.pool_ids[i - 1]))
                .collect::<Vec<_>>()
                .join("\n\n"),
            AgentRole::Decider => {
                let mut order: Vec<usize> = (1..=m).collect();
                if self.mode == MockMode::Oracle {
                    order.sort_by_key(|i| self.grade(hint.query_id, &hint.pool_ids[i - 1]));
                }
                let list: Vec<String> = order.iter().map(|i| format!("paper {i}")).collect();
                format!("Ranked order: {}", list.join(", "))
            }
        };
        Ok(ChatReply {
            content,
            usage: None,
        })
    }
}

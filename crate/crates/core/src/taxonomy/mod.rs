//! Unified hierarchical label space.
//!
//! Labels pooled from several datasets are merged into one tree, driven by a
//! declarative [`SpaceOracle`] that answers how two label spaces relate. The
//! result is a [`UnifiedHierarchy`] plus a [`LabelMapping`] that sends every
//! dataset label to one or more hierarchy nodes.

mod build;
mod hierarchy;
mod io;
mod oracle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use build::{build_uhls, canonical_order, insert_label, BuildEvent, BuildLog, InsertCase};
pub use hierarchy::{LabelMapping, Node, NodeId, UnifiedHierarchy, ROOT_KEY};
pub use io::{read_hierarchy, write_hierarchy};
pub use oracle::{Assertion, AssertionRecord, Relation, SpaceOracle};

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("inconsistent oracle: {reason}{}", render_chain(.chain))]
    InconsistentOracle { reason: String, chain: Vec<String> },
    #[error("oracle does not determine the relation between `{0}` and `{1}`; add an assertion or DISJOINT_DEFAULT")]
    Undetermined(String, String),
    #[error("label `{0}` was already processed")]
    AlreadyProcessed(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid label id `{0}` (expected `dataset:name`)")]
    InvalidLabelId(String),
    #[error("hierarchy is not a tree: {0}")]
    NotATree(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn render_chain(chain: &[String]) -> String {
    let mut out = String::new();
    for link in chain {
        out.push_str("\n  ");
        out.push_str(link);
    }
    out
}

pub type Result<T> = std::result::Result<T, TaxonomyError>;

/// A dataset-qualified label, written `dataset:name`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelId {
    pub dataset: String,
    pub name: String,
}

impl LabelId {
    pub fn new(dataset: impl Into<String>, name: impl Into<String>) -> Self {
        LabelId {
            dataset: dataset.into(),
            name: name.into(),
        }
    }
}

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.dataset, self.name)
    }
}

impl FromStr for LabelId {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self> {
        let (dataset, name) = s
            .split_once(':')
            .ok_or_else(|| TaxonomyError::InvalidLabelId(s.to_string()))?;
        let bad = |part: &str| part.is_empty() || part.chars().any(|c| c.is_whitespace() || c == ',');
        if bad(dataset) || bad(name) {
            return Err(TaxonomyError::InvalidLabelId(s.to_string()));
        }
        Ok(LabelId::new(dataset, name))
    }
}

//! Mention-annotated corpora in a common record form, plus splitting and pooling.

mod formats;
mod registry;
mod split;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use formats::{load_dataset, parse_column, parse_mention_records, write_mention_records, MentionRecord};
pub use registry::{DatasetSplits, Registry, RegistryEntry};
pub use split::{merge_tests, pool_train, pool_validation, split_dataset, SplitSet};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("{source_name}:{line}: label `{label}` is not declared for dataset `{dataset}`")]
    UnknownLabel {
        source_name: String,
        line: usize,
        dataset: String,
        label: String,
    },
    #[error("{source_name}:{line}: span [{start}, {end}) is invalid for {len} tokens")]
    InvalidSpan {
        source_name: String,
        line: usize,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("nothing to pool: every input is empty")]
    EmptyPool,
    #[error("registry: {0}")]
    Registry(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, IngestError>;

/// On-disk layout of a dataset file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    /// `token<TAB>tag` per line, BIO tags, blank line between sentences.
    Column,
    /// One JSON object per line: `id`, `tokens`, `start`, `end`, `labels`.
    MentionRecord,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    #[serde(default)]
    pub domain: String,
    pub labels: BTreeSet<String>,
    #[serde(default)]
    pub multi_label: bool,
    #[serde(default)]
    pub has_standard_splits: bool,
}

impl DatasetDescriptor {
    pub fn new<I, S>(name: &str, domain: &str, labels: I, multi_label: bool) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        DatasetDescriptor {
            name: name.to_string(),
            domain: domain.to_string(),
            labels: labels.into_iter().map(Into::into).collect(),
            multi_label,
            has_standard_splits: false,
        }
    }
}

/// One entity mention in its sentence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionInstance {
    pub tokens: Vec<String>,
    /// Half-open token interval of the mention.
    pub start: usize,
    pub end: usize,
    pub gold: BTreeSet<String>,
    pub dataset: String,
    pub instance_id: String,
}

impl MentionInstance {
    pub fn span_is_valid(&self) -> bool {
        self.start < self.end && self.end <= self.tokens.len()
    }

    pub fn mention(&self) -> &[String] {
        &self.tokens[self.start..self.end]
    }

    pub fn left_context(&self) -> &[String] {
        &self.tokens[..self.start]
    }

    pub fn right_context(&self) -> &[String] {
        &self.tokens[self.end..]
    }
}

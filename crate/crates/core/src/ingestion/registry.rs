use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::formats::load_dataset;
use super::split::{split_dataset, SplitSet};
use super::{DatasetDescriptor, Format, IngestError, Result};

/// One dataset in the registry file.
///
/// Either `path` (split here, 70/15/15) or all of `train`, `validation`,
/// `test` (standard splits) must be given. Relative paths resolve against
/// the registry file's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    #[serde(flatten)]
    pub descriptor: DatasetDescriptor,
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
}

/// A dataset after loading: its descriptor and its three splits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplits {
    pub descriptor: DatasetDescriptor,
    pub splits: SplitSet,
}

/// Registered datasets, in registration order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    #[serde(rename = "dataset", default)]
    pub datasets: Vec<RegistryEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Registry {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut reg: Registry = toml::from_str(text).map_err(|e| IngestError::Registry(e.to_string()))?;
        reg.base_dir = base_dir.into();
        reg.validate()?;
        Ok(reg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("registry serializes")
    }

    fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for e in &self.datasets {
            let d = &e.descriptor;
            let bad = |msg: &str| Err(IngestError::Registry(format!("dataset `{}`: {msg}", d.name)));
            if d.name.is_empty() || d.name.contains(':') || d.name.contains(char::is_whitespace) {
                return bad("name must be non-empty without `:` or whitespace");
            }
            if !names.insert(d.name.as_str()) {
                return bad("registered twice");
            }
            if d.labels.is_empty() {
                return bad("no labels");
            }
            if d.labels.iter().any(|l| l.is_empty() || l.contains(char::is_whitespace) || l.contains(',')) {
                return bad("label names must be non-empty without whitespace or `,`");
            }
            let split_paths = [&e.train, &e.validation, &e.test].iter().filter(|p| p.is_some()).count();
            match (d.has_standard_splits, &e.path, split_paths) {
                (true, None, 3) | (false, Some(_), 0) => {}
                (true, _, _) => return bad("standard splits need train, validation and test paths"),
                (false, _, _) => return bad("needs a single `path` when has_standard_splits is false"),
            }
        }
        Ok(())
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &DatasetDescriptor> {
        self.datasets.iter().map(|e| &e.descriptor)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Loads every dataset; those without standard splits are split with `seed`.
    pub fn load_all(&self, seed: u64) -> Result<Vec<DatasetSplits>> {
        self.datasets
            .iter()
            .map(|e| {
                let d = &e.descriptor;
                let load = |p: &PathBuf| load_dataset(self.resolve(p), e.format, d);
                let splits = match (&e.path, &e.train, &e.validation, &e.test) {
                    (Some(p), ..) => split_dataset(load(p)?, seed),
                    (None, Some(tr), Some(va), Some(te)) => SplitSet {
                        train: load(tr)?,
                        validation: load(va)?,
                        test: load(te)?,
                        seed,
                    },
                    _ => unreachable!("validated at parse time"),
                };
                Ok(DatasetSplits {
                    descriptor: d.clone(),
                    splits,
                })
            })
            .collect()
    }
}

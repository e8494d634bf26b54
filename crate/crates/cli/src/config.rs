//! Run configuration: a TOML file with `[data]`, `[run]`, `[encoder]`,
//! `[training]` and `[evaluation]` sections.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use uhls_core::encoder::EncoderConfig;
use uhls_core::evaluation::{Criterion, Scheme};
use uhls_core::predictor::TrainingConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Uhls,
    Silo,
    Multihead,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Uhls => "uhls",
            ModelKind::Silo => "silo",
            ModelKind::Multihead => "multihead",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uhls" => Ok(ModelKind::Uhls),
            "silo" => Ok(ModelKind::Silo),
            "multihead" => Ok(ModelKind::Multihead),
            _ => Err(format!("unknown model kind `{s}` (expected uhls, silo or multihead)")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub registry: PathBuf,
    pub oracle: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_hierarchy: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub model: ModelKind,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { model: ModelKind::Uhls, seed: 7, out: PathBuf::from("run") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub scheme: Scheme,
    pub criterion: Criterion,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection { scheme: Scheme::Realistic, criterion: Criterion::Hcl }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub run: RunSection,
    pub encoder: EncoderConfig,
    pub training: TrainingConfig,
    pub evaluation: EvaluationSection,
}

impl RunConfig {
    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config `{}`", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("invalid config `{}`", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.data.registry);
        resolve(&mut cfg.data.oracle);
        if let Some(p) = cfg.data.seed_hierarchy.as_mut() {
            resolve(p);
        }
        resolve(&mut cfg.run.out);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks that the configured inputs exist and the sections are valid.
    pub fn validate(&self) -> Result<()> {
        let need = |p: &Path, what: &str| -> Result<()> {
            if p.as_os_str().is_empty() {
                bail!("`data.{what}` is not set");
            }
            if !p.is_file() {
                bail!("{what} file `{}` does not exist", p.display());
            }
            Ok(())
        };
        need(&self.data.registry, "registry")?;
        need(&self.data.oracle, "oracle")?;
        if let Some(p) = &self.data.seed_hierarchy {
            need(p, "seed_hierarchy")?;
        }
        self.training.validate().context("invalid [training] section")?;
        Ok(())
    }
}

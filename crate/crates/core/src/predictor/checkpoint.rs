//! Binary checkpoints.
//!
//! Layout: the 8-byte magic `UHLSCKPT`, a little-endian `u32` version, a
//! little-endian `u64` header length, the JSON header, then every tensor as
//! little-endian `f64` values in header order. Floats are stored bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::encoder::{EncoderConfig, HashedEncoder};

use super::{ClassSpace, ModelError, Result, TypePredictor, UhlsModel};

const MAGIC: &[u8; 8] = b"UHLSCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: Value,
    tensors: Vec<(String, usize)>,
}

/// Named tensors plus JSON metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub meta: Value,
    pub tensors: Vec<(String, Vec<f64>)>,
}

fn err(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn new(kind: &str, meta: Value) -> Self {
        Checkpoint {
            kind: kind.to_string(),
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: &str, values: &[f64]) {
        self.tensors.push((name.to_string(), values.to_vec()));
    }

    pub fn tensor(&self, name: &str) -> Result<&[f64]> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| err(format!("missing tensor `{name}`")))
    }

    pub fn meta_field<T: for<'de> Deserialize<'de>>(&self, name: &str) -> Result<T> {
        let v = self.meta.get(name).ok_or_else(|| err(format!("missing field `{name}`")))?;
        serde_json::from_value(v.clone()).map_err(|e| err(format!("field `{name}`: {e}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self.tensors.iter().map(|(n, v)| (n.clone(), v.len())).collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let floats: usize = self.tensors.iter().map(|(_, v)| v.len()).sum();
        let mut out = Vec::with_capacity(20 + header.len() + 8 * floats);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, v) in &self.tensors {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(err("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(err(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..20 + hlen).ok_or_else(|| err("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| err(e.to_string()))?;
        let mut rest = &bytes[20 + hlen..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for (name, len) in header.tensors {
            let n = len.checked_mul(8).filter(|&n| n <= rest.len()).ok_or_else(|| err(format!("truncated tensor `{name}`")))?;
            let values = rest[..n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            rest = &rest[n..];
            tensors.push((name, values));
        }
        if !rest.is_empty() {
            return Err(err("trailing bytes"));
        }
        Ok(Checkpoint {
            kind: header.kind,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

impl HashedEncoder {
    pub fn write_into(&self, ckpt: &mut Checkpoint, prefix: &str) {
        ckpt.meta[format!("{prefix}encoder")] = serde_json::to_value(&self.config).expect("config serializes");
        ckpt.push(&format!("{prefix}left"), &self.left);
        ckpt.push(&format!("{prefix}right"), &self.right);
        ckpt.push(&format!("{prefix}chars"), &self.chars);
    }

    pub fn read_from(ckpt: &Checkpoint, prefix: &str) -> Result<Self> {
        let config: EncoderConfig = ckpt.meta_field(&format!("{prefix}encoder"))?;
        let enc = HashedEncoder {
            left: ckpt.tensor(&format!("{prefix}left"))?.to_vec(),
            right: ckpt.tensor(&format!("{prefix}right"))?.to_vec(),
            chars: ckpt.tensor(&format!("{prefix}chars"))?.to_vec(),
            config,
        };
        let c = &enc.config;
        if enc.left.len() != c.token_buckets * c.left_dim
            || enc.right.len() != c.token_buckets * c.right_dim
            || enc.chars.len() != c.char_buckets * c.char_dim
        {
            return Err(err("encoder table sizes disagree with config"));
        }
        Ok(enc)
    }
}

impl UhlsModel<HashedEncoder> {
    /// `meta` may carry extra run information (training config, seed); it is stored under `run`.
    pub fn to_checkpoint(&self, run: Value) -> Checkpoint {
        let classes = self.classes();
        let mut ckpt = Checkpoint::new(
            "uhls",
            serde_json::json!({
                "classes": classes.keys(),
                "parents": classes.parents(),
                "beta": self.head.beta,
                "run": run,
            }),
        );
        self.encoder.write_into(&mut ckpt, "");
        ckpt.push("weights", &self.head.weights);
        ckpt.push("bias", &self.head.bias);
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != "uhls" {
            return Err(err(format!("expected a uhls checkpoint, found `{}`", ckpt.kind)));
        }
        let encoder = HashedEncoder::read_from(ckpt, "")?;
        let classes = ClassSpace::new(ckpt.meta_field("classes")?, ckpt.meta_field("parents")?)?;
        let dim = encoder.config.dim();
        let head = TypePredictor {
            dim,
            weights: ckpt.tensor("weights")?.to_vec(),
            bias: ckpt.tensor("bias")?.to_vec(),
            beta: ckpt.meta_field("beta")?,
            classes,
        };
        if head.weights.len() != dim * head.classes.len() || head.bias.len() != head.classes.len() {
            return Err(err("head sizes disagree with class count"));
        }
        Ok(UhlsModel { encoder, head })
    }
}

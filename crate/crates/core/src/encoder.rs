//! Mention-in-context encoders.
//!
//! An [`Encoder`] turns a [`MentionInstance`] into a fixed-size
//! [`Representation`] built from three parts laid out back to back: left
//! context, right context, mention characters. [`HashedEncoder`] is the
//! reference implementation: each part is the mean of hashed embedding rows,
//! which keeps the gradient exact and cheap.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::MentionInstance;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncoderError {
    #[error("instance `{id}`: span [{start}, {end}) is invalid for {len} tokens")]
    InvalidSpan {
        id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("upstream gradient has dimension {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
}

pub type Result<T> = std::result::Result<T, EncoderError>;

/// Encoder output `R`.
#[derive(Clone, Debug, PartialEq)]
pub struct Representation(pub Vec<f64>);

impl Representation {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Gradient container an encoder hands back from its backward pass.
pub trait EncoderGradient: Clone + Send + Sync {
    fn accumulate(&mut self, other: &Self);
    fn scale(&mut self, factor: f64);
    fn is_zero(&self) -> bool;
}

/// Contract every encoder implements so models can swap encoders freely.
pub trait Encoder: Clone + Send + Sync {
    type Gradient: EncoderGradient;

    fn dim(&self) -> usize;
    fn encode(&self, instance: &MentionInstance) -> Result<Representation>;
    /// Gradient of the loss w.r.t. the encoder parameters, given `dLoss/dR`.
    fn backward(&self, instance: &MentionInstance, upstream: &[f64]) -> Result<Self::Gradient>;
    fn zero_gradient(&self) -> Self::Gradient;
    /// `params -= step * gradient`.
    fn apply(&mut self, gradient: &Self::Gradient, step: f64);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub token_buckets: usize,
    pub char_buckets: usize,
    pub left_dim: usize,
    pub right_dim: usize,
    pub char_dim: usize,
    /// Context tokens kept on each side; `None` keeps the whole sentence.
    pub context_window: Option<usize>,
    pub hash_seed: u64,
    pub init_seed: u64,
    pub init_scale: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            token_buckets: 1 << 15,
            char_buckets: 1 << 8,
            left_dim: 32,
            right_dim: 32,
            char_dim: 32,
            context_window: None,
            hash_seed: 0x5eed,
            init_seed: 17,
            init_scale: 1.0,
        }
    }
}

impl EncoderConfig {
    pub fn dim(&self) -> usize {
        self.left_dim + self.right_dim + self.char_dim
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Left,
    Right,
    Chars,
}

/// Seeded FNV-1a with a final avalanche step.
fn feature_hash(seed: u64, bytes: &[u8]) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(PRIME);
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h
}

/// Hashed row indices for each field of one instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureRows {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub chars: Vec<usize>,
}

/// Sparse per-row gradient for the three embedding tables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HashedGradient {
    pub left: BTreeMap<usize, Vec<f64>>,
    pub right: BTreeMap<usize, Vec<f64>>,
    pub chars: BTreeMap<usize, Vec<f64>>,
}

fn add_rows(into: &mut BTreeMap<usize, Vec<f64>>, from: &BTreeMap<usize, Vec<f64>>) {
    for (row, g) in from {
        let slot = into.entry(*row).or_insert_with(|| vec![0.0; g.len()]);
        for (a, b) in slot.iter_mut().zip(g) {
            *a += b;
        }
    }
}

impl EncoderGradient for HashedGradient {
    fn accumulate(&mut self, other: &Self) {
        add_rows(&mut self.left, &other.left);
        add_rows(&mut self.right, &other.right);
        add_rows(&mut self.chars, &other.chars);
    }

    fn scale(&mut self, factor: f64) {
        for table in [&mut self.left, &mut self.right, &mut self.chars] {
            for g in table.values_mut() {
                g.iter_mut().for_each(|v| *v *= factor);
            }
        }
    }

    fn is_zero(&self) -> bool {
        [&self.left, &self.right, &self.chars]
            .iter()
            .all(|t| t.values().all(|g| g.iter().all(|&v| v == 0.0)))
    }
}

/// Mean-of-hashed-embeddings encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct HashedEncoder {
    pub config: EncoderConfig,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub chars: Vec<f64>,
}

impl HashedEncoder {
    /// Tables drawn uniformly from `[-init_scale, init_scale]`.
    pub fn new(config: EncoderConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let s = config.init_scale;
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-s..=s)).collect() };
        let left = draw(config.token_buckets * config.left_dim);
        let right = draw(config.token_buckets * config.right_dim);
        let chars = draw(config.char_buckets * config.char_dim);
        HashedEncoder {
            config,
            left,
            right,
            chars,
        }
    }

    /// All-zero tables, mostly useful for hand-set fixtures.
    pub fn zeros(config: EncoderConfig) -> Self {
        HashedEncoder {
            left: vec![0.0; config.token_buckets * config.left_dim],
            right: vec![0.0; config.token_buckets * config.right_dim],
            chars: vec![0.0; config.char_buckets * config.char_dim],
            config,
        }
    }

    pub fn token_row(&self, token: &str) -> usize {
        (feature_hash(self.config.hash_seed, token.as_bytes()) % self.config.token_buckets as u64) as usize
    }

    pub fn char_row(&self, c: char) -> usize {
        let mut buf = [0u8; 4];
        let bytes = c.encode_utf8(&mut buf).as_bytes();
        (feature_hash(self.config.hash_seed ^ 0xc4a5, bytes) % self.config.char_buckets as u64) as usize
    }

    pub fn table(&self, field: Field) -> (&[f64], usize) {
        match field {
            Field::Left => (&self.left, self.config.left_dim),
            Field::Right => (&self.right, self.config.right_dim),
            Field::Chars => (&self.chars, self.config.char_dim),
        }
    }

    pub fn table_mut(&mut self, field: Field) -> (&mut [f64], usize) {
        match field {
            Field::Left => (&mut self.left, self.config.left_dim),
            Field::Right => (&mut self.right, self.config.right_dim),
            Field::Chars => (&mut self.chars, self.config.char_dim),
        }
    }

    pub fn features(&self, inst: &MentionInstance) -> Result<FeatureRows> {
        if !inst.span_is_valid() {
            return Err(EncoderError::InvalidSpan {
                id: inst.instance_id.clone(),
                start: inst.start,
                end: inst.end,
                len: inst.tokens.len(),
            });
        }
        let (mut left, mut right) = (inst.left_context(), inst.right_context());
        if let Some(w) = self.config.context_window {
            left = &left[left.len().saturating_sub(w)..];
            right = &right[..right.len().min(w)];
        }
        let mention = inst.mention().join(" ");
        Ok(FeatureRows {
            left: left.iter().map(|t| self.token_row(t)).collect(),
            right: right.iter().map(|t| self.token_row(t)).collect(),
            chars: mention.chars().map(|c| self.char_row(c)).collect(),
        })
    }
}

fn mean_rows(table: &[f64], dim: usize, rows: &[usize], out: &mut Vec<f64>) {
    let start = out.len();
    out.resize(start + dim, 0.0);
    if rows.is_empty() {
        return;
    }
    let acc = &mut out[start..];
    for &r in rows {
        for (a, v) in acc.iter_mut().zip(&table[r * dim..(r + 1) * dim]) {
            *a += v;
        }
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
}

fn spread_rows(rows: &[usize], upstream: &[f64]) -> BTreeMap<usize, Vec<f64>> {
    let mut out: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    if rows.is_empty() {
        return out;
    }
    let n = rows.len() as f64;
    for &r in rows {
        let slot = out.entry(r).or_insert_with(|| vec![0.0; upstream.len()]);
        for (s, u) in slot.iter_mut().zip(upstream) {
            *s += u / n;
        }
    }
    out
}

fn apply_rows(table: &mut [f64], dim: usize, rows: &BTreeMap<usize, Vec<f64>>, step: f64) {
    for (r, g) in rows {
        for (p, v) in table[r * dim..(r + 1) * dim].iter_mut().zip(g) {
            *p -= step * v;
        }
    }
}

impl Encoder for HashedEncoder {
    type Gradient = HashedGradient;

    fn dim(&self) -> usize {
        self.config.dim()
    }

    fn encode(&self, instance: &MentionInstance) -> Result<Representation> {
        let f = self.features(instance)?;
        let c = &self.config;
        let mut out = Vec::with_capacity(c.dim());
        mean_rows(&self.left, c.left_dim, &f.left, &mut out);
        mean_rows(&self.right, c.right_dim, &f.right, &mut out);
        mean_rows(&self.chars, c.char_dim, &f.chars, &mut out);
        Ok(Representation(out))
    }

    fn backward(&self, instance: &MentionInstance, upstream: &[f64]) -> Result<HashedGradient> {
        let c = &self.config;
        if upstream.len() != c.dim() {
            return Err(EncoderError::DimensionMismatch {
                got: upstream.len(),
                expected: c.dim(),
            });
        }
        let f = self.features(instance)?;
        let (ul, rest) = upstream.split_at(c.left_dim);
        let (ur, uc) = rest.split_at(c.right_dim);
        Ok(HashedGradient {
            left: spread_rows(&f.left, ul),
            right: spread_rows(&f.right, ur),
            chars: spread_rows(&f.chars, uc),
        })
    }

    fn zero_gradient(&self) -> HashedGradient {
        HashedGradient::default()
    }

    fn apply(&mut self, gradient: &HashedGradient, step: f64) {
        let c = self.config.clone();
        apply_rows(&mut self.left, c.left_dim, &gradient.left, step);
        apply_rows(&mut self.right, c.right_dim, &gradient.right, step);
        apply_rows(&mut self.chars, c.char_dim, &gradient.chars, step);
    }
}

//! The unified type predictor.
//!
//! A linear layer over the encoder output gives a softmax distribution over
//! all non-root hierarchy nodes. Each node's probability is then boosted by
//! `beta` times the probability mass of its ancestors and the result is
//! renormalized. Training credits the most probable node of an instance's
//! candidate set and descends on its negative log-likelihood.

mod checkpoint;
mod model;
mod pipeline;
mod training;

use std::collections::HashMap;

use thiserror::Error;

use crate::encoder::EncoderError;
use crate::ingestion::IngestError;
use crate::taxonomy::{NodeId, TaxonomyError, UnifiedHierarchy};

pub use checkpoint::Checkpoint;
pub use model::{ModelGradient, Prediction, UhlsExample, UhlsModel};
pub use pipeline::train_uhls;
pub use training::{fit, EpochRecord, Trainable, TrainingConfig, TrainingLog};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("representation contains a non-finite value")]
    NonFiniteInput,
    #[error("candidate set is empty")]
    EmptyCandidateSet,
    #[error("class index {0} is out of range")]
    UnknownClass(usize),
    #[error("dimension mismatch: got {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("training loss became non-finite in epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Output classes of the predictor: non-root hierarchy nodes in canonical (key) order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassSpace {
    keys: Vec<String>,
    parents: Vec<Option<usize>>,
    ancestors: Vec<Vec<usize>>,
    descendant_counts: Vec<usize>,
    index: HashMap<String, usize>,
}

impl ClassSpace {
    /// `parents[k]` is the class index of k's parent, `None` under the synthetic root.
    pub fn new(keys: Vec<String>, parents: Vec<Option<usize>>) -> Result<Self> {
        if keys.len() != parents.len() {
            return Err(ModelError::DimensionMismatch {
                got: parents.len(),
                expected: keys.len(),
            });
        }
        let n = keys.len();
        let mut ancestors = vec![Vec::new(); n];
        let mut descendant_counts = vec![0; n];
        for (k, slot) in ancestors.iter_mut().enumerate() {
            let mut cur = parents[k];
            while let Some(p) = cur {
                if p >= n || slot.len() > n {
                    return Err(ModelError::Checkpoint(format!("class `{}` has a broken parent chain", keys[k])));
                }
                slot.push(p);
                descendant_counts[p] += 1;
                cur = parents[p];
            }
        }
        let index = keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        Ok(ClassSpace {
            keys,
            parents,
            ancestors,
            descendant_counts,
            index,
        })
    }

    pub fn from_hierarchy(h: &UnifiedHierarchy) -> Self {
        let order = h.canonical_order();
        let pos: HashMap<NodeId, usize> = order.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let keys = order.iter().map(|&n| h.key(n).to_string()).collect();
        let parents = order
            .iter()
            .map(|&n| h.parent(n).and_then(|p| pos.get(&p).copied()))
            .collect();
        Self::new(keys, parents).expect("hierarchy is a tree")
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn key(&self, class: usize) -> &str {
        &self.keys[class]
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn class_of(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn class_of_node(&self, h: &UnifiedHierarchy, node: NodeId) -> Option<usize> {
        self.class_of(h.key(node))
    }

    /// Ancestors of `class` excluding the synthetic root, nearest first.
    pub fn ancestors(&self, class: usize) -> &[usize] {
        &self.ancestors[class]
    }

    pub fn descendant_count(&self, class: usize) -> usize {
        self.descendant_counts[class]
    }

    pub fn is_flat(&self) -> bool {
        self.parents.iter().all(Option::is_none)
    }
}

/// Numerically stable softmax (max-shifted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; the earliest index wins ties.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Un-normalized ancestor-boosted scores: `p(y) + beta * Σ_{t ∈ ancestors(y)} p(t)`.
pub fn ancestor_boosted(p: &[f64], classes: &ClassSpace, beta: f64) -> Vec<f64> {
    (0..p.len())
        .map(|y| p[y] + beta * classes.ancestors(y).iter().map(|&t| p[t]).sum::<f64>())
        .collect()
}

/// Ancestor-boosted distribution, renormalized to sum to one.
///
/// With `beta == 0` or a flat class space the input is returned unchanged.
pub fn adjusted_distribution(p: &[f64], classes: &ClassSpace, beta: f64) -> Vec<f64> {
    if beta == 0.0 || classes.is_flat() {
        return p.to_vec();
    }
    let raw = ancestor_boosted(p, classes, beta);
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Selects the most probable candidate and returns `(-ln p̂(y*), y*)`.
pub fn partial_loss(adjusted: &[f64], candidates: &[usize]) -> Result<(f64, usize)> {
    let mut best: Option<usize> = None;
    for &c in candidates {
        if c >= adjusted.len() {
            return Err(ModelError::UnknownClass(c));
        }
        match best {
            Some(b) if adjusted[b] > adjusted[c] || (adjusted[b] == adjusted[c] && b < c) => {}
            _ => best = Some(c),
        }
    }
    let y = best.ok_or(ModelError::EmptyCandidateSet)?;
    Ok((-adjusted[y].ln(), y))
}

/// Gradients of the partial loss for one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadGradient {
    pub loss: f64,
    pub selected: usize,
    /// Same layout as [`TypePredictor::weights`].
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub repr: Vec<f64>,
}

/// Linear layer `W` (dim × classes, row-major), bias `b`, and the ancestor weight `beta`.
#[derive(Clone, Debug, PartialEq)]
pub struct TypePredictor {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub beta: f64,
    pub classes: ClassSpace,
}

impl TypePredictor {
    pub fn zeros(dim: usize, classes: ClassSpace, beta: f64) -> Self {
        let k = classes.len();
        TypePredictor {
            dim,
            weights: vec![0.0; dim * k],
            bias: vec![0.0; k],
            beta,
            classes,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn logits(&self, repr: &[f64]) -> Result<Vec<f64>> {
        if repr.len() != self.dim {
            return Err(ModelError::DimensionMismatch {
                got: repr.len(),
                expected: self.dim,
            });
        }
        if repr.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteInput);
        }
        let k = self.num_classes();
        let mut z = self.bias.clone();
        for (i, &r) in repr.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            for (zk, w) in z.iter_mut().zip(&self.weights[i * k..(i + 1) * k]) {
                *zk += r * w;
            }
        }
        Ok(z)
    }

    /// `softmax(R W + b)`.
    pub fn label_distribution(&self, repr: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(repr)?))
    }

    pub fn adjusted_distribution(&self, p: &[f64]) -> Vec<f64> {
        adjusted_distribution(p, &self.classes, self.beta)
    }

    pub fn partial_loss(&self, adjusted: &[f64], candidates: &[usize]) -> Result<(f64, usize)> {
        partial_loss(adjusted, candidates)
    }

    /// Exact gradients of `-ln p̂(y*)` w.r.t. `W`, `b` and `R`, holding the selected `y*` fixed.
    pub fn loss_backward(&self, repr: &[f64], candidates: &[usize]) -> Result<HeadGradient> {
        let p = self.label_distribution(repr)?;
        let adjusted = self.adjusted_distribution(&p);
        let (loss, y) = partial_loss(&adjusted, candidates)?;
        let k = self.num_classes();

        // loss = -ln raw[y] + ln Σ raw,  raw = p + beta * (ancestor sums)
        let beta = if self.classes.is_flat() { 0.0 } else { self.beta };
        let raw_y = p[y] + beta * self.classes.ancestors(y).iter().map(|&t| p[t]).sum::<f64>();
        let total: f64 = (0..k)
            .map(|t| p[t] * (1.0 + beta * self.classes.descendant_count(t) as f64))
            .sum();
        let mut d_p: Vec<f64> = (0..k)
            .map(|t| (1.0 + beta * self.classes.descendant_count(t) as f64) / total)
            .collect();
        d_p[y] -= 1.0 / raw_y;
        for &t in self.classes.ancestors(y) {
            d_p[t] -= beta / raw_y;
        }
        // back through the softmax
        let dot: f64 = p.iter().zip(&d_p).map(|(a, b)| a * b).sum();
        let d_z: Vec<f64> = p.iter().zip(&d_p).map(|(pi, gi)| pi * (gi - dot)).collect();

        let mut d_w = vec![0.0; self.dim * k];
        let mut d_r = vec![0.0; self.dim];
        for i in 0..self.dim {
            let row = &self.weights[i * k..(i + 1) * k];
            d_r[i] = row.iter().zip(&d_z).map(|(w, g)| w * g).sum();
            if repr[i] != 0.0 {
                for (dw, g) in d_w[i * k..(i + 1) * k].iter_mut().zip(&d_z) {
                    *dw = repr[i] * g;
                }
            }
        }
        Ok(HeadGradient {
            loss,
            selected: y,
            weights: d_w,
            bias: d_z,
            repr: d_r,
        })
    }

    /// Most probable node under the adjusted distribution, over every class.
    pub fn predict(&self, repr: &[f64]) -> Result<(usize, f64)> {
        let adjusted = self.adjusted_distribution(&self.label_distribution(repr)?);
        let best = argmax(&adjusted).ok_or(ModelError::EmptyCandidateSet)?;
        Ok((best, adjusted[best]))
    }
}

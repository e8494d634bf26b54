//! Baselines over original dataset label sets, plus HCL/RHCL arbitration.
//!
//! A [`SiloEnsemble`] holds one independent encoder and head per dataset; a
//! [`MultiHeadModel`] shares one encoder across per-dataset heads. Neither
//! ever scores hierarchy nodes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::encoder::{Encoder, EncoderConfig, EncoderGradient, HashedEncoder};
use crate::ingestion::{IngestError, pool_train, pool_validation, DatasetDescriptor, DatasetSplits, MentionInstance};
use crate::predictor::{fit, softmax, Checkpoint, ModelError, Trainable, TrainingConfig, TrainingLog};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("no scores to arbitrate")]
    EmptyScores,
    #[error("model `{0}` has an empty score vector")]
    EmptyModel(String),
    #[error("label `{label}` is not in the label set of dataset `{dataset}`")]
    UnknownLabel { dataset: String, label: String },
    #[error("dataset `{0}` has no training instances")]
    EmptyDataset(String),
    #[error("ensemble checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EnsembleError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    SoftmaxCe,
    SigmoidCe,
}

impl LossKind {
    pub fn for_descriptor(d: &DatasetDescriptor) -> Self {
        if d.multi_label {
            LossKind::SigmoidCe
        } else {
            LossKind::SoftmaxCe
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Linear classifier over one dataset's original labels (sorted).
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub dataset: String,
    pub labels: Vec<String>,
    pub loss: LossKind,
    pub dim: usize,
    /// dim × labels, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradient of one head.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl HeadGrad {
    fn add(&mut self, other: &HeadGrad) {
        self.weights.iter_mut().zip(&other.weights).for_each(|(a, b)| *a += b);
        self.bias.iter_mut().zip(&other.bias).for_each(|(a, b)| *a += b);
    }
}

impl Head {
    pub fn zeros(descriptor: &DatasetDescriptor, dim: usize) -> Self {
        let labels: Vec<String> = descriptor.labels.iter().cloned().collect();
        Head {
            dataset: descriptor.name.clone(),
            loss: LossKind::for_descriptor(descriptor),
            dim,
            weights: vec![0.0; dim * labels.len()],
            bias: vec![0.0; labels.len()],
            labels,
        }
    }

    fn logits(&self, r: &[f64]) -> Vec<f64> {
        let k = self.labels.len();
        let mut z = self.bias.clone();
        for (i, &ri) in r.iter().enumerate() {
            for (zk, w) in z.iter_mut().zip(&self.weights[i * k..(i + 1) * k]) {
                *zk += ri * w;
            }
        }
        z
    }

    /// Softmax probabilities or per-label sigmoid outputs.
    pub fn scores(&self, r: &[f64]) -> Vec<f64> {
        let z = self.logits(r);
        match self.loss {
            LossKind::SoftmaxCe => softmax(&z),
            LossKind::SigmoidCe => z.into_iter().map(sigmoid).collect(),
        }
    }

    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).map_err(|_| EnsembleError::UnknownLabel {
            dataset: self.dataset.clone(),
            label: label.to_string(),
        })
    }

    pub fn targets(&self, inst: &MentionInstance) -> Result<Vec<usize>> {
        inst.gold.iter().map(|g| self.label_index(g)).collect()
    }

    /// Loss, head gradient and `dLoss/dR`.
    pub fn backward(&self, r: &[f64], targets: &[usize]) -> (f64, HeadGrad, Vec<f64>) {
        let z = self.logits(r);
        let k = self.labels.len();
        let (loss, dz) = match self.loss {
            LossKind::SoftmaxCe => {
                let p = softmax(&z);
                let w = 1.0 / targets.len() as f64;
                let mut dz = p.clone();
                let mut loss = 0.0;
                for &t in targets {
                    dz[t] -= w;
                    loss -= w * p[t].ln();
                }
                (loss, dz)
            }
            LossKind::SigmoidCe => {
                let mut y = vec![0.0; k];
                targets.iter().for_each(|&t| y[t] = 1.0);
                let loss = z.iter().zip(&y).map(|(&zi, &yi)| softplus(zi) - yi * zi).sum();
                let dz = z.iter().zip(&y).map(|(&zi, &yi)| sigmoid(zi) - yi).collect();
                (loss, dz)
            }
        };
        let mut dw = vec![0.0; self.dim * k];
        let mut dr = vec![0.0; self.dim];
        for i in 0..self.dim {
            let row = &self.weights[i * k..(i + 1) * k];
            dr[i] = row.iter().zip(&dz).map(|(w, g)| w * g).sum();
            for (d, g) in dw[i * k..(i + 1) * k].iter_mut().zip(&dz) {
                *d = r[i] * g;
            }
        }
        (loss, HeadGrad { weights: dw, bias: dz }, dr)
    }

    fn apply(&mut self, g: &HeadGrad, step: f64) {
        self.weights.iter_mut().zip(&g.weights).for_each(|(w, d)| *w -= step * d);
        self.bias.iter_mut().zip(&g.bias).for_each(|(b, d)| *b -= step * d);
    }

    fn zero_grad(&self) -> HeadGrad {
        HeadGrad {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn write_into(&self, ckpt: &mut Checkpoint, prefix: &str) {
        ckpt.meta[format!("{prefix}head")] = json!({
            "dataset": self.dataset,
            "labels": self.labels,
            "loss": self.loss,
        });
        ckpt.push(&format!("{prefix}weights"), &self.weights);
        ckpt.push(&format!("{prefix}bias"), &self.bias);
    }

    fn read_from(ckpt: &Checkpoint, prefix: &str, dim: usize) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            dataset: String,
            labels: Vec<String>,
            loss: LossKind,
        }
        let m: Meta = ckpt.meta_field(&format!("{prefix}head"))?;
        let head = Head {
            dim,
            weights: ckpt.tensor(&format!("{prefix}weights"))?.to_vec(),
            bias: ckpt.tensor(&format!("{prefix}bias"))?.to_vec(),
            dataset: m.dataset,
            labels: m.labels,
            loss: m.loss,
        };
        if head.weights.len() != dim * head.labels.len() || head.bias.len() != head.labels.len() {
            return Err(EnsembleError::Checkpoint(format!("head `{}` has inconsistent sizes", head.dataset)));
        }
        Ok(head)
    }
}

/// One model's scores over its own dataset's labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub dataset: String,
    pub labels: Vec<String>,
    pub scores: Vec<f64>,
}

impl ModelScores {
    /// Index and value of the top score; the earliest label wins ties.
    pub fn top(&self) -> Option<(usize, f64)> {
        crate::predictor::argmax(&self.scores).map(|i| (i, self.scores[i]))
    }
}

/// Per-dataset scorers evaluated on a single instance.
pub trait ScoreSource: Sync {
    /// Datasets in registration order.
    fn datasets(&self) -> Vec<String>;
    fn dataset_scores(&self, dataset: &str, inst: &MentionInstance) -> Result<Option<ModelScores>>;
    /// Scores from every member, registration order.
    fn all_scores(&self, inst: &MentionInstance) -> Result<Vec<ModelScores>> {
        self.datasets()
            .iter()
            .map(|d| Ok(self.dataset_scores(d, inst)?.expect("listed dataset has a head")))
            .collect()
    }
}

/// Encoder plus one head; a silo member.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadModel<E: Encoder = HashedEncoder> {
    pub encoder: E,
    pub head: Head,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadExample {
    pub instance: MentionInstance,
    pub targets: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadModelGradient<G> {
    pub encoder: G,
    pub head: HeadGrad,
}

impl<E: Encoder> HeadModel<E> {
    pub fn scores(&self, inst: &MentionInstance) -> Result<ModelScores> {
        let r = self.encoder.encode(inst).map_err(ModelError::from)?;
        Ok(ModelScores {
            dataset: self.head.dataset.clone(),
            labels: self.head.labels.clone(),
            scores: self.head.scores(r.as_slice()),
        })
    }

    /// Fraction of instances whose top label is among the gold labels.
    pub fn accuracy(&self, instances: &[MentionInstance]) -> Result<f64> {
        accuracy_by(instances, |inst| self.scores(inst))
    }
}

fn accuracy_by<F>(instances: &[MentionInstance], score: F) -> Result<f64>
where
    F: Fn(&MentionInstance) -> Result<ModelScores> + Sync,
{
    if instances.is_empty() {
        return Ok(0.0);
    }
    let hits: Vec<bool> = instances
        .par_iter()
        .map(|inst| {
            let s = score(inst)?;
            let (i, _) = s.top().ok_or_else(|| EnsembleError::EmptyModel(s.dataset.clone()))?;
            Ok(inst.gold.contains(&s.labels[i]))
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / instances.len() as f64)
}

impl<E: Encoder> Trainable for HeadModel<E> {
    type Example = HeadExample;
    type Gradient = HeadModelGradient<E::Gradient>;

    fn example_gradient(&self, ex: &HeadExample) -> crate::predictor::Result<(f64, Self::Gradient)> {
        let r = self.encoder.encode(&ex.instance)?;
        let (loss, head, dr) = self.head.backward(r.as_slice(), &ex.targets);
        let encoder = self.encoder.backward(&ex.instance, &dr)?;
        Ok((loss, HeadModelGradient { encoder, head }))
    }

    fn zero_gradient(&self) -> Self::Gradient {
        HeadModelGradient {
            encoder: self.encoder.zero_gradient(),
            head: self.head.zero_grad(),
        }
    }

    fn accumulate(total: &mut Self::Gradient, g: &Self::Gradient) {
        total.encoder.accumulate(&g.encoder);
        total.head.add(&g.head);
    }

    fn apply(&mut self, g: &Self::Gradient, step: f64) {
        self.encoder.apply(&g.encoder, step);
        self.head.apply(&g.head, step);
    }
}

fn head_examples(head: &Head, instances: &[MentionInstance]) -> Result<Vec<HeadExample>> {
    instances
        .iter()
        .map(|inst| {
            Ok(HeadExample {
                targets: head.targets(inst)?,
                instance: inst.clone(),
            })
        })
        .collect()
}

/// Independent per-dataset models, registration order.
#[derive(Clone, Debug, PartialEq)]
pub struct SiloEnsemble<E: Encoder = HashedEncoder> {
    pub members: Vec<HeadModel<E>>,
}

impl<E: Encoder> SiloEnsemble<E> {
    pub fn member(&self, dataset: &str) -> Option<&HeadModel<E>> {
        self.members.iter().find(|m| m.head.dataset == dataset)
    }
}

impl<E: Encoder> ScoreSource for SiloEnsemble<E> {
    fn datasets(&self) -> Vec<String> {
        self.members.iter().map(|m| m.head.dataset.clone()).collect()
    }

    fn dataset_scores(&self, dataset: &str, inst: &MentionInstance) -> Result<Option<ModelScores>> {
        self.member(dataset).map(|m| m.scores(inst)).transpose()
    }
}

/// Trains one model per dataset, each selected on its own validation split.
///
/// Every member starts from the same encoder initialization and shuffling seed.
pub fn train_silo(
    datasets: &[DatasetSplits],
    encoder: &EncoderConfig,
    config: &TrainingConfig,
) -> Result<(SiloEnsemble, Vec<TrainingLog>)> {
    let trained: Vec<(HeadModel, TrainingLog)> = datasets
        .par_iter()
        .map(|ds| {
            let d = &ds.descriptor;
            if ds.splits.train.is_empty() {
                return Err(EnsembleError::EmptyDataset(d.name.clone()));
            }
            let enc = HashedEncoder::new(encoder.clone());
            let head = Head::zeros(d, enc.dim());
            let examples = head_examples(&head, &ds.splits.train)?;
            let model = HeadModel { encoder: enc, head };
            let val = &ds.splits.validation;
            let (m, log) = fit(model, &examples, config, |m| {
                m.accuracy(val).map_err(|e| ModelError::Validation(e.to_string()))
            })?;
            Ok((m, log))
        })
        .collect::<Result<_>>()?;
    let (members, logs) = trained.into_iter().unzip();
    Ok((SiloEnsemble { members }, logs))
}

/// One shared encoder, one head per dataset (registration order).
#[derive(Clone, Debug, PartialEq)]
pub struct MultiHeadModel<E: Encoder = HashedEncoder> {
    pub encoder: E,
    pub heads: Vec<Head>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiHeadExample {
    pub head: usize,
    pub instance: MentionInstance,
    pub targets: Vec<usize>,
}

/// Gradient of a multi-head model; heads absent from the map have zero gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiHeadGradient<G> {
    pub encoder: G,
    pub heads: BTreeMap<usize, HeadGrad>,
}

impl<E: Encoder> MultiHeadModel<E> {
    pub fn head_index(&self, dataset: &str) -> Option<usize> {
        self.heads.iter().position(|h| h.dataset == dataset)
    }

    pub fn example(&self, inst: &MentionInstance) -> Result<MultiHeadExample> {
        let head = self
            .head_index(&inst.dataset)
            .ok_or_else(|| EnsembleError::EmptyDataset(inst.dataset.clone()))?;
        Ok(MultiHeadExample {
            head,
            targets: self.heads[head].targets(inst)?,
            instance: inst.clone(),
        })
    }

    /// Routed accuracy: each instance is scored by its own dataset's head.
    pub fn routed_accuracy(&self, instances: &[MentionInstance]) -> Result<f64> {
        accuracy_by(instances, |inst| {
            self.dataset_scores(&inst.dataset, inst)?.ok_or_else(|| EnsembleError::EmptyDataset(inst.dataset.clone()))
        })
    }
}

impl<E: Encoder> ScoreSource for MultiHeadModel<E> {
    fn datasets(&self) -> Vec<String> {
        self.heads.iter().map(|h| h.dataset.clone()).collect()
    }

    fn dataset_scores(&self, dataset: &str, inst: &MentionInstance) -> Result<Option<ModelScores>> {
        let Some(i) = self.head_index(dataset) else {
            return Ok(None);
        };
        let r = self.encoder.encode(inst).map_err(ModelError::from)?;
        let h = &self.heads[i];
        Ok(Some(ModelScores {
            dataset: h.dataset.clone(),
            labels: h.labels.clone(),
            scores: h.scores(r.as_slice()),
        }))
    }

    fn all_scores(&self, inst: &MentionInstance) -> Result<Vec<ModelScores>> {
        let r = self.encoder.encode(inst).map_err(ModelError::from)?;
        Ok(self
            .heads
            .iter()
            .map(|h| ModelScores {
                dataset: h.dataset.clone(),
                labels: h.labels.clone(),
                scores: h.scores(r.as_slice()),
            })
            .collect())
    }
}

impl<E: Encoder> Trainable for MultiHeadModel<E> {
    type Example = MultiHeadExample;
    type Gradient = MultiHeadGradient<E::Gradient>;

    fn example_gradient(&self, ex: &MultiHeadExample) -> crate::predictor::Result<(f64, Self::Gradient)> {
        let r = self.encoder.encode(&ex.instance)?;
        let (loss, head, dr) = self.heads[ex.head].backward(r.as_slice(), &ex.targets);
        let encoder = self.encoder.backward(&ex.instance, &dr)?;
        Ok((
            loss,
            MultiHeadGradient {
                encoder,
                heads: BTreeMap::from([(ex.head, head)]),
            },
        ))
    }

    fn zero_gradient(&self) -> Self::Gradient {
        MultiHeadGradient {
            encoder: self.encoder.zero_gradient(),
            heads: BTreeMap::new(),
        }
    }

    fn accumulate(total: &mut Self::Gradient, g: &Self::Gradient) {
        total.encoder.accumulate(&g.encoder);
        for (i, hg) in &g.heads {
            match total.heads.get_mut(i) {
                Some(t) => t.add(hg),
                None => {
                    total.heads.insert(*i, hg.clone());
                }
            }
        }
    }

    fn apply(&mut self, g: &Self::Gradient, step: f64) {
        self.encoder.apply(&g.encoder, step);
        for (i, hg) in &g.heads {
            self.heads[*i].apply(hg, step);
        }
    }
}

/// Trains the shared-encoder model on pooled batches, selected on the combined validation split.
pub fn train_multihead(
    datasets: &[DatasetSplits],
    encoder: &EncoderConfig,
    config: &TrainingConfig,
) -> Result<(MultiHeadModel, TrainingLog)> {
    let enc = HashedEncoder::new(encoder.clone());
    let dim = enc.dim();
    let model = MultiHeadModel {
        heads: datasets.iter().map(|d| Head::zeros(&d.descriptor, dim)).collect(),
        encoder: enc,
    };
    let train = pool_train(datasets.iter().map(|d| &d.splits))?;
    let val = pool_validation(datasets.iter().map(|d| &d.splits)).unwrap_or_default();
    let examples = train.iter().map(|i| model.example(i)).collect::<Result<Vec<_>>>()?;
    let (m, log) = fit(model, &examples, config, |m| {
        m.routed_accuracy(&val).map_err(|e| ModelError::Validation(e.to_string()))
    })?;
    Ok((m, log))
}

/// Audit record of one arbitration decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArbitrationTrace {
    pub criterion: String,
    pub entries: Vec<TraceEntry>,
    /// Index into `entries` of the winning model.
    pub chosen: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub dataset: String,
    pub top_label: String,
    pub raw_score: f64,
    pub normalized_score: f64,
}

/// Winner of an arbitration.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub dataset: String,
    pub label: String,
    pub score: f64,
    pub trace: ArbitrationTrace,
}

fn arbitrate(scores: &[ModelScores], criterion: &str, scale: impl Fn(&ModelScores) -> f64) -> Result<Selection> {
    if scores.is_empty() {
        return Err(EnsembleError::EmptyScores);
    }
    let mut entries: Vec<TraceEntry> = Vec::with_capacity(scores.len());
    let mut chosen = 0;
    for (i, s) in scores.iter().enumerate() {
        let (top, raw) = s.top().ok_or_else(|| EnsembleError::EmptyModel(s.dataset.clone()))?;
        let normalized = raw * scale(s);
        if i > 0 && normalized > entries[chosen].normalized_score {
            chosen = i;
        }
        entries.push(TraceEntry {
            dataset: s.dataset.clone(),
            top_label: s.labels[top].clone(),
            raw_score: raw,
            normalized_score: normalized,
        });
    }
    let winner = &entries[chosen];
    Ok(Selection {
        dataset: winner.dataset.clone(),
        label: winner.top_label.clone(),
        score: winner.normalized_score,
        trace: ArbitrationTrace {
            criterion: criterion.to_string(),
            entries,
            chosen,
        },
    })
}

/// Highest raw confidence; ties go to the earlier model, then the earlier label.
pub fn hcl_select(scores: &[ModelScores]) -> Result<Selection> {
    arbitrate(scores, "hcl", |_| 1.0)
}

/// Highest confidence after multiplying each model's scores by its label count.
pub fn rhcl_select(scores: &[ModelScores]) -> Result<Selection> {
    arbitrate(scores, "rhcl", |s| s.labels.len() as f64)
}

impl ArbitrationTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }
}

const SILO_KIND: &str = "silo-member";
const MULTIHEAD_KIND: &str = "multihead";

#[derive(Serialize, Deserialize)]
struct Manifest {
    kind: String,
    members: Vec<ManifestMember>,
}

#[derive(Serialize, Deserialize)]
struct ManifestMember {
    dataset: String,
    file: String,
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(m).expect("manifest serializes");
    std::fs::write(dir.join("ensemble.json"), text + "\n")?;
    Ok(())
}

fn read_manifest(dir: &Path, kind: &str) -> Result<Manifest> {
    let text = std::fs::read_to_string(dir.join("ensemble.json"))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| EnsembleError::Checkpoint(e.to_string()))?;
    if m.kind != kind {
        return Err(EnsembleError::Checkpoint(format!("expected `{kind}`, found `{}`", m.kind)));
    }
    Ok(m)
}

impl SiloEnsemble<HashedEncoder> {
    /// Writes one checkpoint per member plus `ensemble.json`; returns the files written.
    pub fn save_dir(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = Manifest {
            kind: "silo".into(),
            members: Vec::new(),
        };
        for (i, m) in self.members.iter().enumerate() {
            let file = format!("member-{i}-{}.ckpt", m.head.dataset);
            let mut ckpt = Checkpoint::new(SILO_KIND, json!({}));
            m.encoder.write_into(&mut ckpt, "");
            m.head.write_into(&mut ckpt, "");
            ckpt.save(dir.join(&file))?;
            manifest.members.push(ManifestMember {
                dataset: m.head.dataset.clone(),
                file,
            });
        }
        write_manifest(dir, &manifest)?;
        let mut files: Vec<String> = manifest.members.into_iter().map(|m| m.file).collect();
        files.push("ensemble.json".into());
        Ok(files)
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir, "silo")?;
        let members = manifest
            .members
            .iter()
            .map(|mm| {
                let ckpt = Checkpoint::load(dir.join(&mm.file))?;
                if ckpt.kind != SILO_KIND {
                    return Err(EnsembleError::Checkpoint(format!("{}: not a silo member", mm.file)));
                }
                let encoder = HashedEncoder::read_from(&ckpt, "")?;
                let head = Head::read_from(&ckpt, "", encoder.dim())?;
                Ok(HeadModel { encoder, head })
            })
            .collect::<Result<_>>()?;
        Ok(SiloEnsemble { members })
    }
}

impl MultiHeadModel<HashedEncoder> {
    pub fn save_dir(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir)?;
        let mut ckpt = Checkpoint::new(MULTIHEAD_KIND, json!({ "heads": self.heads.len() }));
        self.encoder.write_into(&mut ckpt, "");
        for (i, h) in self.heads.iter().enumerate() {
            h.write_into(&mut ckpt, &format!("head{i}."));
        }
        ckpt.save(dir.join("multihead.ckpt"))?;
        let manifest = Manifest {
            kind: MULTIHEAD_KIND.into(),
            members: self
                .heads
                .iter()
                .map(|h| ManifestMember {
                    dataset: h.dataset.clone(),
                    file: "multihead.ckpt".into(),
                })
                .collect(),
        };
        write_manifest(dir, &manifest)?;
        Ok(vec!["multihead.ckpt".into(), "ensemble.json".into()])
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        read_manifest(dir, MULTIHEAD_KIND)?;
        let ckpt = Checkpoint::load(dir.join("multihead.ckpt"))?;
        let encoder = HashedEncoder::read_from(&ckpt, "")?;
        let n: usize = ckpt.meta_field("heads")?;
        let heads = (0..n)
            .map(|i| Head::read_from(&ckpt, &format!("head{i}."), encoder.dim()))
            .collect::<Result<_>>()?;
        Ok(MultiHeadModel { encoder, heads })
    }
}

/// Human-readable table of a trace.
pub fn trace_table(trace: &ArbitrationTrace) -> String {
    let mut out = String::new();
    for (i, e) in trace.entries.iter().enumerate() {
        let mark = if i == trace.chosen { "*" } else { " " };
        writeln!(
            out,
            "{mark} {:<16} {:<20} raw={:.4} norm={:.4}",
            e.dataset, e.top_label, e.raw_score, e.normalized_score
        )
        .unwrap();
    }
    out
}

//! Idealistic and realistic evaluation in hierarchy space.
//!
//! Predictions and gold labels are both mapped into the unified hierarchy. A
//! prediction is correct when it hits a gold node exactly, or when it lies
//! below a gold node whose subtree the gold dataset never distinguished
//! ("fine-under-coarse"). With one prediction per instance micro-F1 reduces
//! to accuracy; multi-label gold counts as correct when any gold label is.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::Encoder;
use crate::ensembles::{hcl_select, rhcl_select, ArbitrationTrace, EnsembleError, ScoreSource};
use crate::ingestion::MentionInstance;
use crate::predictor::{ModelError, Prediction, UhlsModel};
use crate::taxonomy::{LabelId, LabelMapping, NodeId, UnifiedHierarchy};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("label `{0}` cannot be mapped into the hierarchy")]
    UnmappableLabel(String),
    #[error("no model or head for dataset `{0}`")]
    MissingModel(String),
    #[error("criterion `{criterion}` does not apply to {model}")]
    InvalidCriterion { criterion: Criterion, model: String },
    #[error("unknown {what} `{value}`")]
    Parse { what: &'static str, value: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Idealistic,
    Realistic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    Hcl,
    Rhcl,
    Direct,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Idealistic => "idealistic",
            Scheme::Realistic => "realistic",
        })
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Hcl => "hcl",
            Criterion::Rhcl => "rhcl",
            Criterion::Direct => "direct",
        })
    }
}

impl FromStr for Scheme {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "idealistic" => Ok(Scheme::Idealistic),
            "realistic" => Ok(Scheme::Realistic),
            _ => Err(EvalError::Parse { what: "scheme", value: s.into() }),
        }
    }
}

impl FromStr for Criterion {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hcl" => Ok(Criterion::Hcl),
            "rhcl" => Ok(Criterion::Rhcl),
            "direct" => Ok(Criterion::Direct),
            _ => Err(EvalError::Parse { what: "criterion", value: s.into() }),
        }
    }
}

/// Which clause of the best-effort rule decided an outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Exact,
    FineUnderCoarse,
    /// Would be fine-under-coarse, but the gold dataset distinguishes nodes in that subtree.
    ExceptionBlocked,
    Incorrect,
}

impl Rule {
    pub fn is_correct(self) -> bool {
        matches!(self, Rule::Exact | Rule::FineUnderCoarse)
    }

    pub fn tag(self) -> &'static str {
        match self {
            Rule::Exact => "exact",
            Rule::FineUnderCoarse => "fine-under-coarse",
            Rule::ExceptionBlocked => "exception-blocked",
            Rule::Incorrect => "incorrect",
        }
    }
}

/// A predicted label: a hierarchy node, or an original dataset label.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PredictedLabel {
    Node(String),
    Dataset(LabelId),
}

impl fmt::Display for PredictedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictedLabel::Node(k) => f.write_str(k),
            PredictedLabel::Dataset(l) => write!(f, "{l}"),
        }
    }
}

impl PredictedLabel {
    /// Node set `P`: the node itself, or `φ` of a dataset label.
    pub fn nodes(&self, h: &UnifiedHierarchy, m: &LabelMapping) -> Result<BTreeSet<NodeId>> {
        match self {
            PredictedLabel::Node(k) => h
                .find(k)
                .filter(|&n| n != NodeId::ROOT)
                .map(|n| BTreeSet::from([n]))
                .ok_or_else(|| EvalError::UnmappableLabel(k.clone())),
            PredictedLabel::Dataset(l) => m.get(l).cloned().ok_or_else(|| EvalError::UnmappableLabel(l.to_string())),
        }
    }
}

/// Best-effort correctness of one prediction against one gold label.
pub fn best_effort_correct(pred: &PredictedLabel, gold: &LabelId, h: &UnifiedHierarchy, m: &LabelMapping) -> Result<Rule> {
    let p = pred.nodes(h, m)?;
    let g = m.get(gold).ok_or_else(|| EvalError::UnmappableLabel(gold.to_string()))?;
    if p.intersection(g).next().is_some() {
        return Ok(Rule::Exact);
    }
    let own = m.dataset_nodes(h, &gold.dataset);
    let mut blocked = false;
    for &gn in g {
        let below = h.subtree(gn);
        if p.iter().any(|n| below.contains(n)) {
            if below.is_disjoint(&own) {
                return Ok(Rule::FineUnderCoarse);
            }
            blocked = true;
        }
    }
    Ok(if blocked { Rule::ExceptionBlocked } else { Rule::Incorrect })
}

/// Best outcome over all gold labels of an instance.
pub fn instance_rule(pred: &PredictedLabel, inst: &MentionInstance, h: &UnifiedHierarchy, m: &LabelMapping) -> Result<Rule> {
    let mut best = Rule::Incorrect;
    for g in &inst.gold {
        best = best.min(best_effort_correct(pred, &LabelId::new(&inst.dataset, g), h, m)?);
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub instance_id: String,
    pub dataset: String,
    pub gold: Vec<String>,
    pub predictor: String,
    pub predicted: String,
    pub predicted_is_node: bool,
    pub confidence: f64,
    pub rule: Rule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<ArbitrationTrace>,
}

impl PredictionRecord {
    pub fn correct(&self) -> bool {
        self.rule.is_correct()
    }
}

/// Fraction of correct records; `0` for no records.
pub fn micro_f1(records: &[PredictionRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.correct()).count() as f64 / records.len() as f64
}

/// Something that predicts a hierarchy node for an instance.
pub trait NodePredictor: Sync {
    fn predict_node(&self, inst: &MentionInstance) -> std::result::Result<Prediction, ModelError>;
}

impl<E: Encoder> NodePredictor for UhlsModel<E> {
    fn predict_node(&self, inst: &MentionInstance) -> std::result::Result<Prediction, ModelError> {
        self.predict(inst)
    }
}

/// A model under evaluation.
#[derive(Clone, Copy)]
pub enum Evaluated<'a> {
    Uhls(&'a dyn NodePredictor),
    Ensemble { name: &'a str, source: &'a dyn ScoreSource },
}

impl Evaluated<'_> {
    pub fn name(&self) -> &str {
        match self {
            Evaluated::Uhls(_) => "uhls",
            Evaluated::Ensemble { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetScore {
    pub correct: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scheme: Scheme,
    pub predictor: String,
    pub criterion: Option<Criterion>,
    pub total: usize,
    pub exact: usize,
    pub fine_under_coarse: usize,
    /// All incorrect outcomes, including exception-blocked ones.
    pub incorrect: usize,
    pub exception_blocked: usize,
    pub micro_f1: f64,
    pub multi_label_instances: usize,
    pub per_dataset: BTreeMap<String, DatasetScore>,
    /// gold label(s) -> predicted label -> count
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
}

impl EvaluationReport {
    pub fn from_records(scheme: Scheme, predictor: &str, criterion: Option<Criterion>, records: &[PredictionRecord]) -> Self {
        let mut r = EvaluationReport {
            scheme,
            predictor: predictor.to_string(),
            criterion,
            total: records.len(),
            exact: 0,
            fine_under_coarse: 0,
            incorrect: 0,
            exception_blocked: 0,
            micro_f1: micro_f1(records),
            multi_label_instances: 0,
            per_dataset: BTreeMap::new(),
            confusion: BTreeMap::new(),
        };
        for rec in records {
            match rec.rule {
                Rule::Exact => r.exact += 1,
                Rule::FineUnderCoarse => r.fine_under_coarse += 1,
                Rule::ExceptionBlocked => {
                    r.exception_blocked += 1;
                    r.incorrect += 1;
                }
                Rule::Incorrect => r.incorrect += 1,
            }
            if rec.gold.len() > 1 {
                r.multi_label_instances += 1;
            }
            let d = r.per_dataset.entry(rec.dataset.clone()).or_default();
            d.total += 1;
            d.correct += usize::from(rec.correct());
            let gold = rec.gold.iter().map(|g| format!("{}:{g}", rec.dataset)).collect::<Vec<_>>().join("|");
            *r.confusion.entry(gold).or_default().entry(rec.predicted.clone()).or_default() += 1;
        }
        r
    }

    /// `exact + fine_under_coarse + incorrect == total`.
    pub fn is_conserved(&self) -> bool {
        self.exact + self.fine_under_coarse + self.incorrect == self.total
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let crit = self.criterion.map(|c| c.to_string()).unwrap_or_else(|| "-".into());
        writeln!(out, "scheme     {}", self.scheme).unwrap();
        writeln!(out, "predictor  {}", self.predictor).unwrap();
        writeln!(out, "criterion  {crit}").unwrap();
        writeln!(out, "instances  {}", self.total).unwrap();
        writeln!(out, "micro-F1   {:.4}", self.micro_f1).unwrap();
        writeln!(out).unwrap();
        writeln!(out, "{:<20} {:>8}", "rule", "count").unwrap();
        writeln!(out, "{:<20} {:>8}", "exact", self.exact).unwrap();
        writeln!(out, "{:<20} {:>8}", "fine-under-coarse", self.fine_under_coarse).unwrap();
        writeln!(out, "{:<20} {:>8}", "incorrect", self.incorrect).unwrap();
        writeln!(out, "{:<20} {:>8}", "  exception-blocked", self.exception_blocked).unwrap();
        writeln!(out).unwrap();
        writeln!(out, "{:<20} {:>8} {:>8} {:>8}", "dataset", "correct", "total", "acc").unwrap();
        for (d, s) in &self.per_dataset {
            let acc = if s.total == 0 { 0.0 } else { s.correct as f64 / s.total as f64 };
            writeln!(out, "{d:<20} {:>8} {:>8} {acc:>8.4}", s.correct, s.total).unwrap();
        }
        writeln!(out).unwrap();
        writeln!(out, "note: one prediction per instance, so micro-F1 equals accuracy.").unwrap();
        if self.multi_label_instances > 0 {
            writeln!(
                out,
                "note: {} multi-label instance(s) count as correct when any gold label is matched.",
                self.multi_label_instances
            )
            .unwrap();
        }
        if self.criterion.is_some_and(|c| c != Criterion::Direct) && self.predictor != "uhls" {
            writeln!(out, "note: sigmoid-head confidences are compared uncalibrated against softmax probabilities.").unwrap();
        }
        out
    }
}

/// One JSON object per line.
pub fn records_to_jsonl(records: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

struct Ctx<'a> {
    h: &'a UnifiedHierarchy,
    m: &'a LabelMapping,
    name: &'a str,
}

impl Ctx<'_> {
    fn record(
        &self,
        inst: &MentionInstance,
        pred: PredictedLabel,
        confidence: f64,
        trace: Option<ArbitrationTrace>,
    ) -> Result<PredictionRecord> {
        let rule = instance_rule(&pred, inst, self.h, self.m)?;
        Ok(PredictionRecord {
            instance_id: inst.instance_id.clone(),
            dataset: inst.dataset.clone(),
            gold: inst.gold.iter().cloned().collect(),
            predictor: self.name.to_string(),
            predicted: pred.to_string(),
            predicted_is_node: matches!(pred, PredictedLabel::Node(_)),
            confidence,
            rule,
            trace,
        })
    }
}

fn uhls_record(ctx: &Ctx, model: &dyn NodePredictor, inst: &MentionInstance) -> Result<PredictionRecord> {
    let p = model.predict_node(inst)?;
    ctx.record(inst, PredictedLabel::Node(p.key), p.confidence, None)
}

/// Routes each test instance to the model or head of its own dataset.
pub fn evaluate_idealistic(
    model: Evaluated,
    test: &[MentionInstance],
    h: &UnifiedHierarchy,
    m: &LabelMapping,
) -> Result<(EvaluationReport, Vec<PredictionRecord>)> {
    let ctx = Ctx { h, m, name: model.name() };
    let records: Vec<PredictionRecord> = test
        .par_iter()
        .map(|inst| match model {
            Evaluated::Uhls(u) => uhls_record(&ctx, u, inst),
            Evaluated::Ensemble { source, .. } => {
                let s = source
                    .dataset_scores(&inst.dataset, inst)?
                    .ok_or_else(|| EvalError::MissingModel(inst.dataset.clone()))?;
                let (i, score) = s.top().ok_or_else(|| EvalError::MissingModel(inst.dataset.clone()))?;
                let label = LabelId::new(&s.dataset, &s.labels[i]);
                ctx.record(inst, PredictedLabel::Dataset(label), score, None)
            }
        })
        .collect::<Result<_>>()?;
    let report = EvaluationReport::from_records(Scheme::Idealistic, model.name(), None, &records);
    Ok((report, records))
}

/// Scores instances without knowledge of their origin dataset.
pub fn evaluate_realistic(
    model: Evaluated,
    test: &[MentionInstance],
    criterion: Criterion,
    h: &UnifiedHierarchy,
    m: &LabelMapping,
) -> Result<(EvaluationReport, Vec<PredictionRecord>)> {
    let ctx = Ctx { h, m, name: model.name() };
    if matches!(model, Evaluated::Ensemble { .. }) && criterion == Criterion::Direct {
        return Err(EvalError::InvalidCriterion {
            criterion,
            model: format!("the multi-model predictor `{}`", model.name()),
        });
    }
    let records: Vec<PredictionRecord> = test
        .par_iter()
        .map(|inst| match model {
            // a single classifier: every criterion reduces to its own argmax
            Evaluated::Uhls(u) => uhls_record(&ctx, u, inst),
            Evaluated::Ensemble { source, .. } => {
                let scores = source.all_scores(inst)?;
                let sel = match criterion {
                    Criterion::Hcl => hcl_select(&scores)?,
                    _ => rhcl_select(&scores)?,
                };
                let label = LabelId::new(&sel.dataset, &sel.label);
                ctx.record(inst, PredictedLabel::Dataset(label), sel.score, Some(sel.trace))
            }
        })
        .collect::<Result<_>>()?;
    let report = EvaluationReport::from_records(Scheme::Realistic, model.name(), Some(criterion), &records);
    Ok((report, records))
}

/// Per-target histograms of predicted labels, per model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FineGrainedReport {
    pub support: BTreeMap<String, usize>,
    /// target -> model -> predicted label -> count
    pub histograms: BTreeMap<String, BTreeMap<String, BTreeMap<String, usize>>>,
}

impl FineGrainedReport {
    /// `target,model,predicted,count` rows for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("target,model,predicted,count\n");
        for (t, models) in &self.histograms {
            for (model, hist) in models {
                for (p, c) in hist {
                    writeln!(out, "{t},{model},{p},{c}").unwrap();
                }
            }
        }
        out
    }
}

/// A named labeler used in [`fine_grained_eval`].
pub type Labeler<'a> = (&'a str, &'a (dyn Fn(&MentionInstance) -> Result<String> + Sync));

/// Tallies what each model predicts for instances re-annotated with each target fine label.
pub fn fine_grained_eval(models: &[Labeler], subset: &[MentionInstance], targets: &[String]) -> Result<FineGrainedReport> {
    let mut report = FineGrainedReport::default();
    for t in targets {
        let members: Vec<&MentionInstance> = subset.iter().filter(|i| i.gold.contains(t)).collect();
        report.support.insert(t.clone(), members.len());
        let per_model = report.histograms.entry(t.clone()).or_default();
        for (name, labeler) in models {
            let hist = per_model.entry(name.to_string()).or_default();
            let preds: Vec<String> = members.par_iter().map(|i| labeler(i)).collect::<Result<_>>()?;
            for p in preds {
                *hist.entry(p).or_default() += 1;
            }
        }
    }
    Ok(report)
}

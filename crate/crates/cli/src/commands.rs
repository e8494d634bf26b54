//! Subcommand implementations.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use log::info;
use serde::Deserialize;
use serde_json::json;
use uhls_core::ensembles::{
    hcl_select, rhcl_select, trace_table, train_multihead, train_silo, MultiHeadModel, ScoreSource, SiloEnsemble,
};
use uhls_core::evaluation::{
    evaluate_idealistic, evaluate_realistic, records_to_jsonl, Criterion, Evaluated, EvaluationReport, PredictionRecord,
    Scheme,
};
use uhls_core::ingestion::{merge_tests, DatasetSplits, MentionInstance, Registry};
use uhls_core::predictor::{train_uhls, Checkpoint, ClassSpace, UhlsModel};
use uhls_core::synthbench::{generate as generate_corpus, SynthSpec};
use uhls_core::taxonomy::{
    build_uhls, canonical_order, read_hierarchy, write_hierarchy, BuildLog, LabelMapping, SpaceOracle, UnifiedHierarchy,
};

use crate::config::{ModelKind, RunConfig};
use crate::output::{write, write_manifest, write_manifest_for};
use crate::{Common, Failure, UsageContext};

type CmdResult = Result<(), Failure>;

/// Config file merged with command-line overrides.
fn effective(c: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p).usage()?,
        None => RunConfig::default(),
    };
    if let Some(m) = c.model {
        cfg.run.model = m;
    }
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.run.out = o.clone();
    }
    if let Some(p) = &c.seed_hierarchy {
        cfg.data.seed_hierarchy = Some(p.clone());
    }
    if let Some(s) = c.scheme {
        cfg.evaluation.scheme = s;
    }
    if let Some(k) = c.criterion {
        cfg.evaluation.criterion = k;
    }
    cfg.training.seed = cfg.run.seed;
    Ok(cfg)
}

/// Everything a run needs: data, oracle and the unified hierarchy.
struct Workspace {
    cfg: RunConfig,
    datasets: Vec<DatasetSplits>,
    hierarchy: UnifiedHierarchy,
    mapping: LabelMapping,
    log: BuildLog,
}

fn registry(cfg: &RunConfig) -> Result<Registry, Failure> {
    Registry::load(&cfg.data.registry)
        .with_context(|| format!("invalid registry `{}`", cfg.data.registry.display()))
        .usage()
}

fn prepare(c: &Common) -> Result<Workspace, Failure> {
    if c.config.is_none() {
        return Err(Failure::Usage(anyhow!("`--config` is required")));
    }
    let cfg = effective(c)?;
    cfg.validate().usage()?;
    let registry = registry(&cfg)?;
    let oracle = SpaceOracle::load(&cfg.data.oracle)
        .with_context(|| format!("invalid oracle `{}`", cfg.data.oracle.display()))
        .usage()?;
    let seed = match &cfg.data.seed_hierarchy {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read `{}`", p.display())).usage()?;
            Some(read_hierarchy(&text).with_context(|| format!("invalid seed hierarchy `{}`", p.display())).usage()?.0)
        }
        None => None,
    };
    let labels = canonical_order(registry.descriptors().map(|d| (d.name.as_str(), d.labels.iter().map(String::as_str))));
    let (hierarchy, mapping, log) = build_uhls(&labels, &oracle, seed).context("hierarchy construction failed")?;
    for w in log.warnings() {
        log::warn!("{w}");
    }
    let datasets = registry.load_all(cfg.run.seed).context("cannot load datasets")?;
    Ok(Workspace { cfg, datasets, hierarchy, mapping, log })
}

fn model_dir(cfg: &RunConfig) -> PathBuf {
    cfg.run.out.join("models").join(cfg.run.model.to_string())
}

pub fn generate(out: &Path, seed: u64, instances_per_label: usize, noise: f64, branching: usize) -> CmdResult {
    let spec = SynthSpec::standard_with_branching(branching, instances_per_label, noise, seed);
    spec.validate().context("invalid benchmark parameters").usage()?;
    let corpus = generate_corpus(&spec).context("generation failed")?;
    let mut files: Vec<PathBuf> = corpus.write(out).context("cannot write corpus")?.into_iter().map(PathBuf::from).collect();
    let mut cfg = RunConfig::default();
    cfg.data.registry = "registry.toml".into();
    cfg.data.oracle = "oracle.txt".into();
    cfg.run.seed = seed;
    cfg.training.seed = seed;
    write(&out.join("run.toml"), cfg.to_toml())?;
    files.push("run.toml".into());
    write_manifest_for(out, &files)?;
    println!("wrote {} files to {}", files.len(), out.display());
    Ok(())
}

pub fn build_hierarchy(c: &Common) -> CmdResult {
    let ws = prepare(c)?;
    let dir = ws.cfg.run.out.join("hierarchy");
    write(&dir.join("hierarchy.txt"), write_hierarchy(&ws.hierarchy, &ws.mapping))?;
    write(&dir.join("build_log.txt"), ws.log.to_text())?;
    write_manifest(&ws.cfg.run.out)?;
    println!(
        "{} nodes, {} labels created, {} mapped; written to {}",
        ws.hierarchy.len() - 1,
        ws.log.created_count(),
        ws.log.mapped_count(),
        dir.display()
    );
    Ok(())
}

fn run_meta(cfg: &RunConfig) -> serde_json::Value {
    json!({ "seed": cfg.run.seed, "training": cfg.training, "encoder": cfg.encoder })
}

pub fn train(c: &Common) -> CmdResult {
    let ws = prepare(c)?;
    let cfg = &ws.cfg;
    let dir = model_dir(cfg);
    info!("training {} into {}", cfg.run.model, dir.display());
    match cfg.run.model {
        ModelKind::Uhls => {
            let (model, log) = train_uhls(&ws.datasets, &ws.hierarchy, &ws.mapping, &cfg.encoder, &cfg.training).context("training failed")?;
            write(&dir.join("model.ckpt"), model.to_checkpoint(run_meta(cfg)).to_bytes())?;
            write(&dir.join("train_log.txt"), log.to_text())?;
            write(&dir.join("hierarchy.txt"), write_hierarchy(&ws.hierarchy, &ws.mapping))?;
            println!("best validation micro-F1 {:.4}", log.best_validation().unwrap_or(0.0));
        }
        ModelKind::Silo => {
            let (silo, logs) = train_silo(&ws.datasets, &cfg.encoder, &cfg.training).context("training failed")?;
            silo.save_dir(&dir).context("cannot save silo ensemble")?;
            for (d, log) in ws.datasets.iter().zip(&logs) {
                write(&dir.join(format!("train_log_{}.txt", d.descriptor.name)), log.to_text())?;
                println!("{}: best validation accuracy {:.4}", d.descriptor.name, log.best_validation().unwrap_or(0.0));
            }
        }
        ModelKind::Multihead => {
            let (model, log) = train_multihead(&ws.datasets, &cfg.encoder, &cfg.training).context("training failed")?;
            model.save_dir(&dir).context("cannot save multi-head model")?;
            write(&dir.join("train_log.txt"), log.to_text())?;
            println!("best validation accuracy {:.4}", log.best_validation().unwrap_or(0.0));
        }
    }
    write_manifest(&cfg.run.out)?;
    Ok(())
}

enum Loaded {
    Uhls(UhlsModel),
    Silo(SiloEnsemble),
    Multihead(MultiHeadModel),
}

impl Loaded {
    fn load(cfg: &RunConfig) -> anyhow::Result<Self> {
        let dir = model_dir(cfg);
        if !dir.is_dir() {
            bail!("no trained {} model under `{}`; run `uhls train` first", cfg.run.model, dir.display());
        }
        Ok(match cfg.run.model {
            ModelKind::Uhls => Loaded::Uhls(UhlsModel::from_checkpoint(&Checkpoint::load(dir.join("model.ckpt"))?)?),
            ModelKind::Silo => Loaded::Silo(SiloEnsemble::load_dir(&dir)?),
            ModelKind::Multihead => Loaded::Multihead(MultiHeadModel::load_dir(&dir)?),
        })
    }

    fn evaluated<'a>(&'a self, name: &'a str) -> Evaluated<'a> {
        match self {
            Loaded::Uhls(m) => Evaluated::Uhls(m),
            Loaded::Silo(s) => Evaluated::Ensemble { name, source: s },
            Loaded::Multihead(s) => Evaluated::Ensemble { name, source: s },
        }
    }

    fn source(&self) -> Option<&dyn ScoreSource> {
        match self {
            Loaded::Uhls(_) => None,
            Loaded::Silo(s) => Some(s),
            Loaded::Multihead(s) => Some(s),
        }
    }
}

fn check_classes(model: &Loaded, h: &UnifiedHierarchy) -> anyhow::Result<()> {
    if let Loaded::Uhls(m) = model {
        if m.classes().keys() != ClassSpace::from_hierarchy(h).keys() {
            bail!("checkpoint classes do not match the hierarchy built from this config");
        }
    }
    Ok(())
}

fn traces_text(records: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        if let Some(t) = &r.trace {
            out.push_str(&format!("# {} gold={} chosen={}\n", r.instance_id, r.gold.join(","), r.predicted));
            out.push_str(&trace_table(t));
            out.push('\n');
        }
    }
    out
}

pub fn evaluate(c: &Common) -> CmdResult {
    let ws = prepare(c)?;
    let cfg = &ws.cfg;
    let ensemble = cfg.run.model != ModelKind::Uhls;
    let (scheme, criterion) = (cfg.evaluation.scheme, cfg.evaluation.criterion);
    if ensemble && scheme == Scheme::Realistic && criterion == Criterion::Direct {
        return Err(Failure::Usage(anyhow!(
            "criterion `direct` needs a single classifier; use hcl or rhcl with --model {}",
            cfg.run.model
        )));
    }
    let model = Loaded::load(cfg)?;
    check_classes(&model, &ws.hierarchy)?;
    let test = merge_tests(ws.datasets.iter().map(|d| &d.splits)).context("no test instances")?;
    let name = cfg.run.model.to_string();
    let evaluated = model.evaluated(&name);
    let (report, records): (EvaluationReport, Vec<PredictionRecord>) = match scheme {
        Scheme::Idealistic => evaluate_idealistic(evaluated, &test, &ws.hierarchy, &ws.mapping).context("evaluation failed")?,
        Scheme::Realistic => evaluate_realistic(evaluated, &test, criterion, &ws.hierarchy, &ws.mapping).context("evaluation failed")?,
    };
    let tag = match scheme {
        Scheme::Idealistic => format!("{name}-idealistic"),
        Scheme::Realistic => format!("{name}-realistic-{criterion}"),
    };
    let dir = cfg.run.out.join("eval").join(tag);
    write(&dir.join("report.json"), report.to_json() + "\n")?;
    write(&dir.join("report.txt"), report.to_table())?;
    write(&dir.join("predictions.jsonl"), records_to_jsonl(&records))?;
    let traces = traces_text(&records);
    if !traces.is_empty() {
        write(&dir.join("traces.txt"), traces)?;
    }
    write_manifest(&cfg.run.out)?;
    print!("{}", report.to_table());
    Ok(())
}

/// One input mention; other fields such as gold labels are ignored.
#[derive(Deserialize)]
struct PredictInput {
    #[serde(default)]
    id: Option<String>,
    tokens: Vec<String>,
    start: usize,
    end: usize,
}

fn read_inputs(path: &Path) -> anyhow::Result<Vec<MentionInstance>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read `{}`", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictInput = serde_json::from_str(line).with_context(|| format!("{}:{n}: malformed input line", path.display()))?;
        if rec.tokens.is_empty() || rec.start >= rec.end || rec.end > rec.tokens.len() {
            bail!("{}:{n}: mention span [{}, {}) does not fit {} tokens", path.display(), rec.start, rec.end, rec.tokens.len());
        }
        out.push(MentionInstance {
            instance_id: rec.id.unwrap_or_else(|| format!("line{n}")),
            tokens: rec.tokens,
            start: rec.start,
            end: rec.end,
            gold: BTreeSet::new(),
            dataset: String::new(),
        });
    }
    Ok(out)
}

/// The sentence with the mention bracketed and followed by its label path.
fn bracketed(inst: &MentionInstance, path: &[String]) -> String {
    let mut words = Vec::with_capacity(inst.tokens.len());
    for (i, t) in inst.tokens.iter().enumerate() {
        let mut w = String::new();
        if i == inst.start {
            w.push('[');
        }
        w.push_str(t);
        if i + 1 == inst.end {
            w.push_str(&format!("]{{{}}}", path.join("/")));
        }
        words.push(w);
    }
    words.join(" ")
}

fn predict_one(model: &Loaded, criterion: Criterion, inst: &MentionInstance) -> anyhow::Result<serde_json::Value> {
    let (label, path, confidence, source) = match model {
        Loaded::Uhls(m) => {
            let p = m.predict(inst)?;
            let classes = m.classes();
            let mut path: Vec<String> = classes.ancestors(p.class).iter().rev().map(|&a| classes.key(a).to_string()).collect();
            path.push(p.key.clone());
            (p.key, path, p.confidence, None)
        }
        _ => {
            let scores = model.source().expect("ensemble").all_scores(inst)?;
            let sel = match criterion {
                Criterion::Hcl => hcl_select(&scores)?,
                _ => rhcl_select(&scores)?,
            };
            let label = format!("{}:{}", sel.dataset, sel.label);
            (label.clone(), vec![label], sel.score, Some(sel.dataset))
        }
    };
    let mut v = json!({
        "id": inst.instance_id,
        "sentence": bracketed(inst, &path),
        "mention": inst.mention().join(" "),
        "label": label,
        "path": path,
        "confidence": confidence,
    });
    if let Some(ds) = source {
        v["dataset"] = json!(ds);
    }
    Ok(v)
}

pub fn predict(c: &Common, input: &Path, output: Option<&Path>) -> CmdResult {
    if c.config.is_none() {
        return Err(Failure::Usage(anyhow!("`--config` is required")));
    }
    let cfg = effective(c)?;
    if cfg.run.model != ModelKind::Uhls && cfg.evaluation.criterion == Criterion::Direct {
        return Err(Failure::Usage(anyhow!("criterion `direct` needs a single classifier; use hcl or rhcl")));
    }
    let model = Loaded::load(&cfg)?;
    let inputs = read_inputs(input)?;
    let mut body = String::new();
    for inst in &inputs {
        let v = predict_one(&model, cfg.evaluation.criterion, inst)?;
        body.push_str(&v.to_string());
        body.push('\n');
    }
    let default_path = cfg.run.out.join("predict").join(format!("{}.jsonl", cfg.run.model));
    let path = output.unwrap_or(&default_path);
    write(path, body)?;
    if path.starts_with(&cfg.run.out) {
        write_manifest(&cfg.run.out)?;
    }
    println!("{} predictions written to {}", inputs.len(), path.display());
    Ok(())
}

pub fn show_config(c: &Common) -> CmdResult {
    print!("{}", effective(c)?.to_toml());
    Ok(())
}

//! Acceptance suite: one PASS/FAIL line per criterion.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uhls_core::encoder::EncoderConfig;
use uhls_core::ensembles::{hcl_select, rhcl_select, train_silo, ModelScores, ScoreSource};
use uhls_core::evaluation::{
    best_effort_correct, evaluate_idealistic, evaluate_realistic, Criterion, Evaluated, EvaluationReport, PredictedLabel,
    Rule,
};
use uhls_core::ingestion::merge_tests;
use uhls_core::predictor::{adjusted_distribution, softmax, train_uhls, ClassSpace, TrainingConfig};
use uhls_core::synthbench::{generate, GoldenUhls, SynthSpec};
use uhls_core::taxonomy::{build_uhls, LabelId, LabelMapping, SpaceOracle, UnifiedHierarchy};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn lid(s: &str) -> LabelId {
    s.parse().unwrap()
}

fn build(oracle: &str, labels: &[&str]) -> (UnifiedHierarchy, LabelMapping) {
    let oracle = SpaceOracle::parse(oracle).unwrap();
    let labels: Vec<LabelId> = labels.iter().map(|l| lid(l)).collect();
    let (h, m, _) = build_uhls(&labels, &oracle, None).unwrap();
    (h, m)
}

fn keys(h: &UnifiedHierarchy, m: &LabelMapping, label: &str) -> BTreeSet<String> {
    m.candidate_set(h, &lid(label)).unwrap().into_iter().map(|n| h.key(n).to_string()).collect()
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let specs = 30;
    for seed in 0..specs {
        let spec = SynthSpec::random(seed, 25, 4);
        ensure(spec.tree.len() <= 25 && spec.datasets.len() <= 4, "spec exceeds size bounds")?;
        let corpus = generate(&spec).map_err(|e| e.to_string())?;
        let (h, m, _) = build_uhls(&corpus.labels, &corpus.oracle, None).map_err(|e| e.to_string())?;
        ensure(GoldenUhls::from_built(&h, &m) == corpus.golden, format!("seed {seed} differs from the reference"))?;
    }
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("{specs} random specs match the brute-force reference in {:.2?}", start.elapsed()))
}

fn permutation_robustness() -> Outcome {
    let mut orders = 0;
    let mut largest = 0;
    for (oracle_text, labels) in common::ORDER_FIXTURES {
        let oracle = SpaceOracle::parse(oracle_text).unwrap();
        let labels: Vec<LabelId> = labels.iter().map(|l| lid(l)).collect();
        largest = largest.max(labels.len());
        let mut reference = None;
        for perm in common::permutations(labels.len()) {
            let order: Vec<LabelId> = perm.iter().map(|&i| labels[i].clone()).collect();
            let (h, m, _) = build_uhls(&order, &oracle, None).map_err(|e| e.to_string())?;
            let sig = common::signature(&h, &m, &oracle);
            match &reference {
                None => reference = Some(sig),
                Some(r) => ensure(r == &sig, format!("order {order:?} gives a different tree"))?,
            }
            orders += 1;
        }
    }
    ensure(largest == 6, "corpus lacks a six-label fixture")?;
    Ok(format!("{} fixtures, {orders} insertion orders, all isomorphic", common::ORDER_FIXTURES.len()))
}

fn arbitration_example() -> Outcome {
    let scores = |d: &str, l: &[(&str, f64)]| ModelScores {
        dataset: d.into(),
        labels: l.iter().map(|p| p.0.to_string()).collect(),
        scores: l.iter().map(|p| p.1).collect(),
    };
    let models = vec![
        scores("MA", &[("l1", 0.1), ("l2", 0.2), ("l3", 0.7)]),
        scores("MB", &[("l4", 0.05), ("l5", 0.95)]),
    ];
    let hcl = hcl_select(&models).map_err(|e| e.to_string())?;
    let rhcl = rhcl_select(&models).map_err(|e| e.to_string())?;
    ensure(hcl.label == "l5" && hcl.score == 0.95, format!("HCL chose {}@{}", hcl.label, hcl.score))?;
    ensure(
        rhcl.label == "l3" && (rhcl.score - 2.1).abs() <= 4.0 * f64::EPSILON,
        format!("RHCL chose {}@{}", rhcl.label, rhcl.score),
    )?;
    Ok(format!("HCL l5@{} RHCL l3@{}", hcl.score, rhcl.score))
}

fn distribution_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        use rand::Rng;
        let n = rng.gen_range(1..40);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-30.0..30.0)).collect();
        worst = worst.max((softmax(&z).iter().sum::<f64>() - 1.0).abs());
    }
    ensure(worst <= 1e-9, format!("softmax sum off by {worst:e}"))?;
    let chain = ClassSpace::new(vec!["a".into(), "b".into()], vec![None, Some(0)]).unwrap();
    let adj = adjusted_distribution(&[0.6, 0.4], &chain, 0.5);
    let err = (adj[0] - 6.0 / 13.0).abs().max((adj[1] - 7.0 / 13.0).abs());
    ensure(err <= 1e-12, format!("chain fixture off by {err:e}"))?;
    let p = softmax(&[0.3, -1.2, 2.0]);
    let tree = ClassSpace::new(vec!["a".into(), "b".into(), "c".into()], vec![None, Some(0), Some(1)]).unwrap();
    let same = adjusted_distribution(&p, &tree, 0.0);
    ensure(same.iter().zip(&p).all(|(a, b)| a.to_bits() == b.to_bits()), "beta 0 changed p")?;
    Ok(format!("softmax sum error {worst:.1e}, chain error {err:.1e}, beta 0 bitwise"))
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let cases = 120;
    for i in 0..cases {
        let case = common::gradcheck::random_case(&mut rng, i);
        worst = worst.max(common::gradcheck::max_gradient_error(&case, &mut rng));
    }
    ensure(worst <= 1e-4, format!("max relative error {worst:e}"))?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("{cases} instances, max relative error {worst:.1e}, {:.2?}", start.elapsed()))
}

const VEHICLES: &str = "\
SUBSUMES d:vehicle d:car
SUBSUMES d:vehicle e:truck
SUBSUMES e:machine d:vehicle
DISJOINT_DEFAULT *
";

fn candidate_rules() -> Outcome {
    let (h, m) = build(common::GPE, &["onto:gpe", "onto:person", "wiki:city", "wiki:country", "wiki:county"]);
    ensure(h.len() == 6, "GPE fixture should have five nodes")?;
    ensure(
        keys(&h, &m, "onto:gpe") == set(&["onto:gpe", "wiki:city", "wiki:country", "wiki:county"]),
        "GPE expansion",
    )?;
    ensure(keys(&h, &m, "onto:person") == set(&["onto:person"]), "person candidates")?;
    let (h, m) = build(VEHICLES, &["d:car", "d:vehicle", "e:machine", "e:truck"]);
    ensure(h.len() == 5, "vehicle fixture should have four nodes")?;
    ensure(keys(&h, &m, "d:vehicle") == set(&["d:vehicle"]), "same-dataset exemption for d:vehicle")?;
    ensure(keys(&h, &m, "e:machine") == set(&["e:machine"]), "same-dataset exemption for e:machine")?;
    let (h, m) = build(VEHICLES, &["d:vehicle", "d:car", "e:machine"]);
    ensure(keys(&h, &m, "e:machine") == set(&["d:car", "d:vehicle", "e:machine"]), "cross-dataset expansion")?;
    Ok("GPE expansion and same-dataset exemption match the golden sets".into())
}

/// Reports from the standard benchmark run shared by criteria 7 to 9.
struct Benchmark {
    uhls_ideal: EvaluationReport,
    uhls_real: EvaluationReport,
    silo_hcl: EvaluationReport,
    fine_hits: usize,
    fine_total: usize,
    silo_emits_fine: bool,
    elapsed: Duration,
}

fn run_benchmark() -> Benchmark {
    let start = Instant::now();
    let corpus = generate(&SynthSpec::standard(200, 0.05, 11)).unwrap();
    let data = corpus.splits(11);
    let (h, m, _) = build_uhls(&corpus.labels, &corpus.oracle, None).unwrap();
    let encoder = EncoderConfig { token_buckets: 1 << 12, ..Default::default() };
    let training = TrainingConfig::default();
    let (uhls, _) = train_uhls(&data, &h, &m, &encoder, &training).unwrap();
    let (silo, _) = train_silo(&data, &encoder, &training).unwrap();
    let test = merge_tests(data.iter().map(|d| &d.splits)).unwrap();
    let (uhls_ideal, _) = evaluate_idealistic(Evaluated::Uhls(&uhls), &test, &h, &m).unwrap();
    let (uhls_real, _) = evaluate_realistic(Evaluated::Uhls(&uhls), &test, Criterion::Direct, &h, &m).unwrap();
    let ens = Evaluated::Ensemble { name: "silo", source: &silo };
    let (silo_hcl, _) = evaluate_realistic(ens, &test, Criterion::Hcl, &h, &m).unwrap();

    let truth = corpus.truth();
    let news = data.iter().find(|d| d.descriptor.name == "news").unwrap();
    let fine_labels: BTreeSet<String> = corpus.spec.tree.leaves().into_iter().map(|i| corpus.spec.tree.name(i).to_string()).collect();
    let coarse_only: Vec<_> = news
        .splits
        .test
        .iter()
        .filter(|i| i.gold.iter().any(|g| g == "c0" || g == "c1") && !truth[i.instance_id.as_str()].is_noisy())
        .collect();
    let fine_hits = coarse_only
        .iter()
        .filter(|i| uhls.predict(i).unwrap().key == format!("fine:{}", truth[i.instance_id.as_str()].pattern_leaf))
        .count();
    let member = silo.members.iter().find(|mm| mm.head.dataset == "news").unwrap();
    let mut silo_emits_fine = member.head.labels.iter().any(|l| fine_labels.contains(l));
    for i in &news.splits.test {
        let s = silo.dataset_scores("news", i).unwrap().unwrap();
        silo_emits_fine |= s.labels.iter().any(|l| !news.descriptor.labels.contains(l));
    }
    Benchmark {
        uhls_ideal,
        uhls_real,
        silo_hcl,
        fine_hits,
        fine_total: coarse_only.len(),
        silo_emits_fine,
        elapsed: start.elapsed(),
    }
}

fn end_to_end(b: &Benchmark) -> Outcome {
    let gap = 100.0 * (b.uhls_real.micro_f1 - b.silo_hcl.micro_f1);
    ensure(gap >= 10.0, format!("UHLS {:.4} vs silo-HCL {:.4}: gap {gap:.2}", b.uhls_real.micro_f1, b.silo_hcl.micro_f1))?;
    ensure(b.uhls_ideal.micro_f1 - b.uhls_real.micro_f1 == 0.0, "idealistic and realistic UHLS differ")?;
    within(b.elapsed, Duration::from_secs(300))?;
    Ok(format!(
        "UHLS realistic {:.4}, silo-HCL {:.4}, gap {gap:.2} points, idealistic - realistic = 0, {:.2?}",
        b.uhls_real.micro_f1, b.silo_hcl.micro_f1, b.elapsed
    ))
}

fn fine_under_coarse(b: &Benchmark) -> Outcome {
    ensure(b.fine_total > 0, "no coarse test instances")?;
    let rate = b.fine_hits as f64 / b.fine_total as f64;
    ensure(rate >= 0.8, format!("fine child rate {rate:.3}"))?;
    ensure(!b.silo_emits_fine, "silo news member can emit a fine label")?;
    Ok(format!("{}/{} coarse instances typed with the correct fine child; silo(news) has no fine outputs", b.fine_hits, b.fine_total))
}

const PLACES: &str = "\
SUBSUMES a:place a:town
SUBSUMES a:place b:city
DISJOINT_DEFAULT b:person
DISJOINT_DEFAULT *
";

fn metric_soundness(b: &Benchmark) -> Outcome {
    for r in [&b.uhls_ideal, &b.uhls_real, &b.silo_hcl] {
        ensure(r.is_conserved(), format!("{} report does not conserve totals", r.predictor))?;
        ensure(r.exact + r.fine_under_coarse + r.incorrect == r.total, "rule counts do not sum to the total")?;
    }
    let rule = |h: &UnifiedHierarchy, m: &LabelMapping, p: &str, g: &str| {
        best_effort_correct(&PredictedLabel::Node(p.into()), &lid(g), h, m).unwrap()
    };
    let (h, m) = build(PLACES, &["a:place", "a:town", "b:city", "b:person"]);
    ensure(rule(&h, &m, "b:city", "a:place") == Rule::ExceptionBlocked, "own subtree node must block")?;
    let (h3, m3) = build(PLACES, &["a:place", "b:city", "b:person"]);
    ensure(rule(&h3, &m3, "b:city", "a:place") == Rule::FineUnderCoarse, "foreign subtree must not block")?;
    ensure(rule(&h3, &m3, "a:place", "b:city") == Rule::Incorrect, "coarse prediction for fine gold")?;
    Ok(format!(
        "totals conserved over {} predictions; exception blocks only with own subtree nodes",
        b.uhls_ideal.total + b.uhls_real.total + b.silo_hcl.total
    ))
}

fn uhls(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_uhls")).args(args).current_dir(cwd).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), format!("uhls {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn cli_reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut manifests = Vec::new();
    for copy in ["a", "b"] {
        let corpus = dir.path().join(copy);
        uhls(&["generate", "--out", copy, "--instances-per-label", "20", "--seed", "5"], dir.path())?;
        let cfg = corpus.join("run.toml");
        let text = std::fs::read_to_string(&cfg).unwrap().replace("epochs = 50", "epochs = 5");
        std::fs::write(&cfg, text).unwrap();
        let base = ["--config", "run.toml"];
        let runs: [&[&str]; 11] = [
            &["build-hierarchy"],
            &["train"],
            &["train", "--model", "silo"],
            &["train", "--model", "multihead"],
            &["evaluate", "--scheme", "idealistic"],
            &["evaluate", "--criterion", "direct"],
            &["evaluate", "--model", "silo", "--criterion", "hcl"],
            &["evaluate", "--model", "silo", "--criterion", "rhcl"],
            &["evaluate", "--model", "multihead", "--criterion", "rhcl"],
            &["predict", "--input", "data/news.jsonl"],
            &["predict", "--model", "silo", "--criterion", "rhcl", "--input", "data/med.jsonl"],
        ];
        for r in runs {
            let args: Vec<&str> = r[..1].iter().chain(&base).chain(&r[1..]).copied().collect();
            uhls(&args, &corpus)?;
        }
        let gen = std::fs::read(corpus.join("manifest.json")).unwrap();
        let run = std::fs::read(corpus.join("run/manifest.json")).unwrap();
        manifests.push((gen, run));
    }
    ensure(manifests[0].0 == manifests[1].0, "generate outputs differ")?;
    ensure(manifests[0].1 == manifests[1].1, "run outputs differ")?;
    let files = String::from_utf8_lossy(&manifests[0].1).matches("\": \"").count();
    Ok(format!("two full runs agree byte for byte on {files} output files"))
}

fn attempt(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    })
}

#[test]
fn acceptance() {
    let bench = catch_unwind(run_benchmark).ok();
    let on_bench = |f: fn(&Benchmark) -> Outcome| -> Outcome {
        match &bench {
            Some(b) => attempt(|| f(b)),
            None => Err("benchmark run panicked".into()),
        }
    };
    let results: Vec<(&str, Outcome)> = vec![
        ("oracle equivalence", attempt(oracle_equivalence)),
        ("permutation robustness", attempt(permutation_robustness)),
        ("HCL/RHCL worked example", attempt(arbitration_example)),
        ("softmax and ancestor adjustment", attempt(distribution_checks)),
        ("gradient suite", attempt(gradient_suite)),
        ("candidate-set rules", attempt(candidate_rules)),
        ("end-to-end realistic gap", on_bench(end_to_end)),
        ("fine-under-coarse propagation", on_bench(fine_under_coarse)),
        ("metric soundness", on_bench(metric_soundness)),
        ("CLI reproducibility", attempt(cli_reproducibility)),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}

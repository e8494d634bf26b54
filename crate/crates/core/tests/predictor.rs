//! Unified classifier: distributions, gradients, training and checkpoints.

mod common;

use common::gradcheck::{class_space, max_gradient_error, random_case, random_instance, random_parents};

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uhls_core::encoder::{EncoderConfig, HashedEncoder};
use uhls_core::ingestion::merge_tests;
use uhls_core::predictor::{
    adjusted_distribution, ancestor_boosted, fit, softmax, train_uhls, Checkpoint, ClassSpace, TrainingConfig,
    UhlsExample, UhlsModel,
};
use uhls_core::synthbench::generate;
use uhls_core::taxonomy::build_uhls;

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for i in 0..120 {
        let case = random_case(&mut rng, i);
        worst = worst.max(max_gradient_error(&case, &mut rng));
    }
    assert!(worst <= 1e-4, "max relative error {worst:e}");
}

#[test]
fn zero_gradient_when_selected_class_is_certain() {
    let classes = class_space(vec![None]);
    let config = EncoderConfig { token_buckets: 8, char_buckets: 8, left_dim: 2, right_dim: 2, char_dim: 2, ..Default::default() };
    let model = UhlsModel::new(HashedEncoder::new(config), classes, 0.4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ex = UhlsExample { instance: random_instance(&mut rng, 0), candidates: vec![0] };
    let (loss, g) = model.backward(&ex).unwrap();
    assert_eq!(loss, 0.0);
    assert!(g.weights.iter().chain(&g.bias).all(|&v| v == 0.0));
}

#[test]
fn softmax_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let z: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let p = softmax(&z);
        let denom: f64 = z.iter().map(|v| v.exp()).sum();
        for (pi, zi) in p.iter().zip(&z) {
            assert!((pi - zi.exp() / denom).abs() < 1e-12);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.0).collect();
        assert!(softmax(&shifted).iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-12));
    }
    assert!(softmax(&[1000.0, 0.0]).iter().all(|v| v.is_finite()));
}

proptest! {
    #[test]
    fn ancestor_boost_adds_beta_times_ancestor_mass(seed in any::<u64>(), n in 1usize..=20, beta in 0.01f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parents = random_parents(&mut rng, n);
        let classes = class_space(parents.clone());
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let boosted = ancestor_boosted(&p, &classes, beta);
        for y in 0..n {
            let mut mass = 0.0;
            let mut cur = parents[y];
            while let Some(t) = cur {
                mass += p[t];
                cur = parents[t];
            }
            prop_assert!((boosted[y] - p[y] - beta * mass).abs() < 1e-12);
            if parents[y].is_some() {
                prop_assert!(boosted[y] > p[y]);
            }
        }
        let adjusted = adjusted_distribution(&p, &classes, beta);
        prop_assert!((adjusted.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn one_step_decreases_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..20 {
        let case = random_case(&mut rng, i);
        let before = case.model.loss(&case.example).unwrap().0;
        if before == 0.0 {
            continue;
        }
        let cfg = TrainingConfig { epochs: 1, batch_size: 1, learning_rate: 0.1, ..Default::default() };
        let (after_model, _) = fit(case.model.clone(), std::slice::from_ref(&case.example), &cfg, |_| Ok(0.0)).unwrap();
        let after = after_model.loss(&case.example).unwrap().0;
        assert!(after < before, "{after} >= {before}");
    }
}

fn trained_fixture(epochs: usize) -> (uhls_core::synthbench::SynthCorpus, UhlsModel, uhls_core::predictor::TrainingLog) {
    let corpus = generate(&common::two_dataset_spec(60, 0.0, 3)).unwrap();
    let (h, m, _) = build_uhls(&corpus.labels, &corpus.oracle, None).unwrap();
    let (model, log) = train_uhls(&corpus.splits(3), &h, &m, &common::small_encoder(), &common::training(epochs)).unwrap();
    (corpus, model, log)
}

#[test]
fn fixture_reaches_high_validation_micro_f1() {
    let (_, _, log) = trained_fixture(50);
    let best = log.best_validation().unwrap();
    assert!(best >= 0.95, "best validation micro-F1 {best}");
    assert!(log.epochs.len() <= 50);
    assert!(log.epochs.windows(2).all(|w| w[1].best_validation >= w[0].best_validation));
}

#[test]
fn training_is_deterministic() {
    let (_, a, log_a) = trained_fixture(4);
    let (_, b, log_b) = trained_fixture(4);
    assert_eq!(log_a.to_text(), log_b.to_text());
    assert_eq!(a.to_checkpoint(serde_json::Value::Null).to_bytes(), b.to_checkpoint(serde_json::Value::Null).to_bytes());
}

#[test]
fn coarse_labels_drive_fine_predictions() {
    let (corpus, model, _) = trained_fixture(50);
    let truth = corpus.truth();
    let splits = corpus.splits(3);
    let coarse = &splits.iter().find(|d| d.descriptor.name == "coarse").unwrap().splits.test;
    let mut hits = 0;
    for inst in coarse {
        let t = truth[inst.instance_id.as_str()];
        let key = model.predict(inst).unwrap().key;
        if key == format!("fine:{}", t.leaf) {
            hits += 1;
        }
    }
    let rate = hits as f64 / coarse.len() as f64;
    assert!(rate >= 0.8, "fine-node rate on coarse test instances {rate}");
}

#[test]
fn checkpoint_round_trip_predicts_bitwise_identically() {
    let (corpus, model, _) = trained_fixture(3);
    let ckpt = model.to_checkpoint(serde_json::json!({"seed": 3}));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ckpt.save(&path).unwrap();
    let loaded = UhlsModel::from_checkpoint(&Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(loaded, model);
    let splits = corpus.splits(3);
    let test = merge_tests(splits.iter().map(|d| &d.splits)).unwrap();
    for inst in &test {
        let (a, b) = (model.predict(inst).unwrap(), loaded.predict(inst).unwrap());
        assert_eq!(a.class, b.class);
        assert_eq!(a.confidence.to_bits(), b.confidence.to_bits());
    }
    assert!(UhlsModel::from_checkpoint(&Checkpoint::new("silo", serde_json::Value::Null)).is_err());
}

#[test]
fn multi_label_gold_uses_union_of_candidates_and_one_prediction() {
    let corpus = generate(&common::two_dataset_spec(2, 0.0, 1)).unwrap();
    let (h, m, _) = build_uhls(&corpus.labels, &corpus.oracle, None).unwrap();
    let classes = ClassSpace::from_hierarchy(&h);
    let mut inst = corpus.datasets[1].instances[0].instance.clone();
    inst.gold = BTreeSet::from(["c0".to_string(), "c1".to_string()]);
    let ex = UhlsExample::new(inst.clone(), &h, &m, &classes).unwrap();
    let keys: BTreeSet<&str> = ex.candidates.iter().map(|&c| classes.key(c)).collect();
    for k in ["coarse:c0", "coarse:c1", "fine:c0_0", "fine:c1_2"] {
        assert!(keys.contains(k), "{k}");
    }
    assert_eq!(keys.len(), 8);
    let model = UhlsModel::new(HashedEncoder::new(common::small_encoder()), classes, 0.4);
    let p = model.predict(&inst).unwrap();
    assert!(p.class < model.classes().len());
}

//! Random classifier instances and a central-difference gradient check.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use uhls_core::encoder::{EncoderConfig, Field, HashedEncoder};
use uhls_core::ingestion::MentionInstance;
use uhls_core::predictor::{ClassSpace, UhlsExample, UhlsModel};

pub fn random_parents(rng: &mut impl Rng, n: usize) -> Vec<Option<usize>> {
    (0..n)
        .map(|i| if i == 0 || rng.gen_bool(0.3) { None } else { Some(rng.gen_range(0..i)) })
        .collect()
}

pub fn class_space(parents: Vec<Option<usize>>) -> ClassSpace {
    let keys = (0..parents.len()).map(|i| format!("k{i:02}")).collect();
    ClassSpace::new(keys, parents).unwrap()
}

pub const VOCAB: [&str; 10] = ["the", "Paris", "said", "of", "river", "Acme", "in", "dr", "Ödön", "x"];

pub fn random_instance(rng: &mut impl Rng, id: usize) -> MentionInstance {
    let n = rng.gen_range(1..8);
    let tokens: Vec<String> = (0..n).map(|_| VOCAB[rng.gen_range(0..VOCAB.len())].to_string()).collect();
    let start = rng.gen_range(0..n);
    let end = rng.gen_range(start + 1..=n);
    MentionInstance {
        tokens,
        start,
        end,
        gold: BTreeSet::from(["x".to_string()]),
        dataset: "d".into(),
        instance_id: format!("i{id}"),
    }
}

pub struct Case {
    pub model: UhlsModel,
    pub example: UhlsExample,
}

pub fn random_case(rng: &mut ChaCha8Rng, id: usize) -> Case {
    let k = rng.gen_range(2..9);
    let classes = class_space(random_parents(rng, k));
    let config = EncoderConfig {
        token_buckets: 16,
        char_buckets: 16,
        left_dim: 3,
        right_dim: 2,
        char_dim: 3,
        init_seed: rng.gen(),
        init_scale: 1.0,
        ..Default::default()
    };
    let beta = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.5) };
    let mut model = UhlsModel::new(HashedEncoder::new(config), classes, beta);
    model.head.weights.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
    model.head.bias.iter_mut().for_each(|b| *b = rng.gen_range(-1.0..1.0));
    let mut candidates: Vec<usize> = (0..k).filter(|_| rng.gen_bool(0.4)).collect();
    if candidates.is_empty() {
        candidates.push(rng.gen_range(0..k));
    }
    Case {
        model,
        example: UhlsExample {
            instance: random_instance(rng, id),
            candidates,
        },
    }
}

/// Loss with the selected class held fixed, as the analytic gradient assumes.
pub fn fixed_loss(model: &UhlsModel, inst: &MentionInstance, y: usize) -> f64 {
    -model.distribution(inst).unwrap()[y].ln()
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-7 {
        (analytic - numeric).abs() * 1e3
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Largest relative error over every parameter the instance touches, plus a few it does not.
pub fn max_gradient_error(case: &Case, rng: &mut impl Rng) -> f64 {
    const H: f64 = 1e-5;
    let Case { model, example } = case;
    let (_, y) = model.loss(example).unwrap();
    let (_, grad) = model.backward(example).unwrap();
    let mut worst: f64 = 0.0;
    let numeric = |perturb: &dyn Fn(&mut UhlsModel, f64)| {
        let mut plus = model.clone();
        perturb(&mut plus, H);
        let mut minus = model.clone();
        perturb(&mut minus, -H);
        (fixed_loss(&plus, &example.instance, y) - fixed_loss(&minus, &example.instance, y)) / (2.0 * H)
    };
    for i in 0..model.head.weights.len() {
        let n = numeric(&|m, h| m.head.weights[i] += h);
        worst = worst.max(rel_err(grad.weights[i], n));
    }
    for i in 0..model.head.bias.len() {
        let n = numeric(&|m, h| m.head.bias[i] += h);
        worst = worst.max(rel_err(grad.bias[i], n));
    }
    for (field, rows) in [(Field::Left, &grad.encoder.left), (Field::Right, &grad.encoder.right), (Field::Chars, &grad.encoder.chars)] {
        let (table, dim) = model.encoder.table(field);
        let total_rows = table.len() / dim;
        for r in 0..total_rows {
            let analytic = rows.get(&r);
            if analytic.is_none() && !rng.gen_bool(0.25) {
                continue;
            }
            for k in 0..dim {
                let n = numeric(&|m, h| m.encoder.table_mut(field).0[r * dim + k] += h);
                let a = analytic.map_or(0.0, |g| g[k]);
                worst = worst.max(rel_err(a, n));
            }
        }
    }
    worst
}

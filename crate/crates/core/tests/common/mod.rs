//! Fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod gradcheck;

use uhls_core::encoder::EncoderConfig;
use uhls_core::predictor::TrainingConfig;
use std::collections::{BTreeMap, BTreeSet};

use uhls_core::synthbench::{SynthDataset, SynthSpec, TrueTree};
use uhls_core::taxonomy::{LabelMapping, NodeId, Relation, SpaceOracle, UnifiedHierarchy};

/// Small encoder for fast fixture training.
pub fn small_encoder() -> EncoderConfig {
    EncoderConfig {
        token_buckets: 1 << 10,
        char_buckets: 1 << 7,
        left_dim: 16,
        right_dim: 16,
        char_dim: 16,
        ..Default::default()
    }
}

pub fn training(epochs: usize) -> TrainingConfig {
    TrainingConfig {
        epochs,
        ..Default::default()
    }
}

/// Depth-2, branching-3 tree: `fine` sees the nine leaves, `coarse` sees the three parents.
pub fn two_dataset_spec(instances_per_label: usize, noise: f64, seed: u64) -> SynthSpec {
    let tree = TrueTree::full(2, 3);
    let leaves = tree.leaves().into_iter().map(|i| tree.name(i).to_string()).collect();
    SynthSpec {
        tree,
        datasets: vec![
            SynthDataset {
                name: "fine".into(),
                domain: "encyclopedia".into(),
                visible: leaves,
                unions: vec![],
            },
            SynthDataset {
                name: "coarse".into(),
                domain: "newswire".into(),
                visible: vec!["c0".into(), "c1".into(), "c2".into()],
                unions: vec![],
            },
        ],
        instances_per_label,
        noise,
        seed,
    }
}

pub const GPE: &str = "\
SUBSUMES onto:gpe wiki:city
SUBSUMES onto:gpe wiki:country
SUBSUMES onto:gpe wiki:county
DISJOINT_DEFAULT onto:person
DISJOINT_DEFAULT *
";

/// A tree signature that ignores which member of an equality class created a node.
pub type Signature = (BTreeSet<(String, String)>, BTreeMap<String, BTreeSet<String>>);

pub fn signature(h: &UnifiedHierarchy, m: &LabelMapping, oracle: &SpaceOracle) -> Signature {
    let class = |n: NodeId| -> String {
        match &h.node(n).origin {
            None => "root".into(),
            Some(o) => {
                let members: Vec<String> = oracle
                    .labels()
                    .iter()
                    .filter(|l| oracle.compare(l, o).unwrap() == Relation::Equal)
                    .map(|l| l.to_string())
                    .collect();
                members.join("=")
            }
        }
    };
    let edges = h.ids().skip(1).map(|n| (class(n), class(h.parent(n).unwrap()))).collect();
    let mapping = m
        .iter()
        .map(|(l, nodes)| (l.to_string(), nodes.iter().map(|&n| class(n)).collect()))
        .collect();
    (edges, mapping)
}

pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Laminar fixtures (subsumption, equality, disjointness) of at most six labels.
pub const ORDER_FIXTURES: &[(&str, &[&str])] = &[
    (
        "SUBSUMES d:person d:athlete\nSUBSUMES d:person d:politician\nDISJOINT d:athlete d:politician\n",
        &["d:person", "d:athlete", "d:politician"],
    ),
    (
        "EQUAL a:person b:person\nSUBSUMES a:person a:athlete\nSUBSUMES a:athlete b:sprinter\nDISJOINT_DEFAULT c:org\nDISJOINT_DEFAULT *\n",
        &["a:person", "b:person", "a:athlete", "b:sprinter", "c:org"],
    ),
    (
        "EQUAL a:car b:car\nSUBSUMES c:motor a:car\nSUBSUMES c:motor b:truck\nSUBSUMES a:vehicle c:motor\nSUBSUMES a:vehicle c:boat\nDISJOINT_DEFAULT *\n",
        &["a:vehicle", "a:car", "b:car", "b:truck", "c:motor", "c:boat"],
    ),
    (GPE, &["onto:gpe", "onto:person", "wiki:city", "wiki:country", "wiki:county"]),
    (
        "SUBSUMES conll:loc onto:gpe\nSUBSUMES onto:gpe wiki:city\nSUBSUMES conll:loc wiki:mountain\nEQUAL conll:per onto:person\nSUBSUMES onto:person wiki:actor\nDISJOINT_DEFAULT *\n",
        &["conll:loc", "conll:per", "onto:gpe", "onto:person", "wiki:city", "wiki:mountain"],
    ),
];

//! Loading, serialization, splitting and pooling.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use uhls_core::ingestion::{
    load_dataset, merge_tests, parse_column, parse_mention_records, pool_train, pool_validation, split_dataset,
    write_mention_records, DatasetDescriptor, Format, IngestError, MentionInstance, Registry,
};
use uhls_core::synthbench::{generate, SynthSpec};

fn descriptor(multi: bool) -> DatasetDescriptor {
    DatasetDescriptor::new("d", "news", ["per", "loc", "org"], multi)
}

fn instance_strategy(multi: bool) -> impl Strategy<Value = MentionInstance> {
    let labels = if multi {
        proptest::sample::subsequence(vec!["loc", "org", "per"], 1..=3).boxed()
    } else {
        proptest::sample::select(vec!["loc", "org", "per"]).prop_map(|l| vec![l]).boxed()
    };
    (
        proptest::collection::vec("[A-Za-z0-9.,'\"\\\\é-]{1,8}", 1..10),
        any::<prop::sample::Index>(),
        any::<prop::sample::Index>(),
        labels,
        "[a-z0-9:_-]{1,12}",
    )
        .prop_map(|(tokens, a, b, labels, id)| {
            let i = a.index(tokens.len());
            let j = b.index(tokens.len());
            let (start, end) = (i.min(j), i.max(j) + 1);
            MentionInstance {
                tokens,
                start,
                end,
                gold: labels.into_iter().map(String::from).collect(),
                dataset: "d".into(),
                instance_id: id,
            }
        })
}

proptest! {
    #[test]
    fn mention_records_round_trip(insts in proptest::collection::vec(instance_strategy(true), 0..20)) {
        let d = descriptor(true);
        let text = write_mention_records(&insts);
        let back = parse_mention_records(&text, "mem", &d).unwrap();
        prop_assert_eq!(&back, &insts);
        prop_assert_eq!(write_mention_records(&back), text);
    }

    #[test]
    fn single_label_round_trip(insts in proptest::collection::vec(instance_strategy(false), 0..20)) {
        let d = descriptor(false);
        let back = parse_mention_records(&write_mention_records(&insts), "mem", &d).unwrap();
        prop_assert_eq!(back, insts);
    }

    #[test]
    fn splits_partition_the_input(n in 0usize..300, seed in any::<u64>()) {
        let insts: Vec<MentionInstance> = (0..n)
            .map(|i| MentionInstance {
                tokens: vec![format!("t{i}")],
                start: 0,
                end: 1,
                gold: BTreeSet::from(["per".to_string()]),
                dataset: "d".into(),
                instance_id: format!("i{i}"),
            })
            .collect();
        let s = split_dataset(insts.clone(), seed);
        prop_assert_eq!(s.train.len(), n * 70 / 100);
        prop_assert_eq!(s.validation.len(), n * 15 / 100);
        prop_assert_eq!(s.len(), n);
        let ids: BTreeSet<&str> = s.train.iter().chain(&s.validation).chain(&s.test).map(|i| i.instance_id.as_str()).collect();
        prop_assert_eq!(ids.len(), n);
        prop_assert_eq!(split_dataset(insts, seed), s);
    }
}

#[test]
fn hundred_instances_split_seventy_fifteen_fifteen() {
    let c = generate(&SynthSpec::standard(20, 0.0, 1)).unwrap();
    let insts: Vec<MentionInstance> = c.datasets[0].instances.iter().take(100).map(|s| s.instance.clone()).collect();
    for seed in [0, 1, 99] {
        let s = split_dataset(insts.clone(), seed);
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (70, 15, 15));
    }
    let one = split_dataset(insts[..1].to_vec(), 3);
    assert_eq!((one.train.len(), one.validation.len(), one.test.len()), (0, 0, 1));
}

fn tagged(dataset: &str, n: usize) -> Vec<MentionInstance> {
    (0..n)
        .map(|i| MentionInstance {
            tokens: vec!["x".into()],
            start: 0,
            end: 1,
            gold: BTreeSet::from(["per".to_string()]),
            dataset: dataset.into(),
            instance_id: format!("{dataset}{i}"),
        })
        .collect()
}

#[test]
fn pooling_is_round_robin_and_lossless() {
    let a = uhls_core::ingestion::SplitSet { train: tagged("d1", 2), validation: tagged("d1", 3), test: tagged("d1", 1), seed: 0 };
    let b = uhls_core::ingestion::SplitSet { train: tagged("d2", 2), validation: tagged("d2", 0), test: tagged("d2", 2), seed: 0 };
    let pooled = pool_train([&a, &b]).unwrap();
    let order: Vec<&str> = pooled.iter().map(|i| i.dataset.as_str()).collect();
    assert_eq!(order, ["d1", "d2", "d1", "d2"]);
    assert_eq!(pool_validation([&a, &b]).unwrap().len(), 3);
    let merged = merge_tests([&a, &b]).unwrap();
    let counts: BTreeMap<&str, usize> = merged.iter().fold(BTreeMap::new(), |mut m, i| {
        *m.entry(i.dataset.as_str()).or_default() += 1;
        m
    });
    assert_eq!(counts, BTreeMap::from([("d1", 1), ("d2", 2)]));
    let empty = uhls_core::ingestion::SplitSet::default();
    assert!(matches!(pool_train([&empty]), Err(IngestError::EmptyPool)));
    assert!(matches!(merge_tests([&empty, &empty]), Err(IngestError::EmptyPool)));
}

#[test]
fn column_file_with_an_org_mention() {
    let d = DatasetDescriptor::new("conll", "news", ["ORG", "PER"], false);
    let text = "Shares\tO\nof\tO\nAcme\tB-ORG\nCorp\tI-ORG\nfell\tO\n\nNothing\tO\nhere\tO\n";
    let insts = parse_column(text, "f.txt", &d).unwrap();
    assert_eq!(insts.len(), 1);
    assert_eq!(insts[0].mention(), ["Acme", "Corp"]);
    assert_eq!(insts[0].gold, BTreeSet::from(["ORG".to_string()]));
}

#[test]
fn multi_label_record() {
    let d = DatasetDescriptor::new("wiki", "web", ["person", "athlete"], true);
    let line = r#"{"id":"w1","tokens":["Usain","Bolt","ran"],"start":0,"end":2,"labels":["person","athlete"]}"#;
    let insts = parse_mention_records(line, "w", &d).unwrap();
    assert_eq!(insts[0].gold.len(), 2);
    let single = DatasetDescriptor::new("wiki", "web", ["person", "athlete"], false);
    assert!(parse_mention_records(line, "w", &single).is_err());
}

#[test]
fn first_malformed_row_is_reported() {
    let d = descriptor(false);
    let good = |i: usize| format!(r#"{{"id":"r{i}","tokens":["a","b"],"start":0,"end":1,"labels":["per"]}}"#);
    let mut lines: Vec<String> = (1..=20).map(good).collect();
    lines[6] = r#"{"id":"r7","tokens":["a"],"start":"#.to_string();
    lines[11] = r#"{"id":"r12","tokens":["a"],"start":1,"end":1,"labels":["per"]}"#.to_string();
    lines[16] = r#"{"id":"r17","tokens":["a"],"start":0,"end":1,"labels":["nope"]}"#.to_string();
    match parse_mention_records(&lines.join("\n"), "fixture.jsonl", &d) {
        Err(IngestError::Parse { line, source_name, .. }) => {
            assert_eq!(line, 7);
            assert_eq!(source_name, "fixture.jsonl");
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
    lines[6] = good(7);
    assert!(matches!(
        parse_mention_records(&lines.join("\n"), "f", &d),
        Err(IngestError::InvalidSpan { line: 12, .. })
    ));
    lines[11] = good(12);
    assert!(matches!(
        parse_mention_records(&lines.join("\n"), "f", &d),
        Err(IngestError::UnknownLabel { line: 17, .. })
    ));
}

#[test]
fn written_corpus_loads_back_identically() {
    let dir = tempfile::tempdir().unwrap();
    let c = generate(&SynthSpec::standard(5, 0.1, 4)).unwrap();
    c.write(dir.path()).unwrap();
    let reg = Registry::load(dir.path().join("registry.toml")).unwrap();
    let loaded = reg.load_all(9).unwrap();
    let direct = c.splits(9);
    assert_eq!(loaded.len(), direct.len());
    for (a, b) in loaded.iter().zip(&direct) {
        assert_eq!(a.descriptor, b.descriptor);
        assert_eq!(a.splits, b.splits);
    }
    let d = &c.datasets[0];
    let path = dir.path().join("data").join(format!("{}.jsonl", d.descriptor.name));
    let from_file = load_dataset(&path, Format::MentionRecord, &d.descriptor).unwrap();
    let originals: Vec<MentionInstance> = d.instances.iter().map(|s| s.instance.clone()).collect();
    assert_eq!(from_file, originals);
}

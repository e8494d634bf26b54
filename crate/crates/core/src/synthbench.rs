//! Synthetic multi-dataset corpora over a known ground-truth tree.
//!
//! Every label is a set of true leaves. Datasets see different coarsenings
//! of the tree (plus optional union labels), so the label-space oracle and
//! the expected unified hierarchy follow from leaf-set arithmetic alone. The
//! expected hierarchy is computed here by a separate leaf-set implementation
//! of the merge procedure, independent of [`crate::taxonomy`].
//!
//! Mentions carry cue words and character patterns determined by their true
//! leaf, shared across datasets, while the rest of the context comes from a
//! per-dataset domain vocabulary.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingestion::{
    split_dataset, write_mention_records, DatasetDescriptor, DatasetSplits, Format, IngestError, MentionInstance, Registry,
    RegistryEntry,
};
use crate::taxonomy::{
    Assertion, AssertionRecord, LabelId, LabelMapping, SpaceOracle, TaxonomyError, UnifiedHierarchy, ROOT_KEY,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("malformed golden file line {line}: {message}")]
    Golden { line: usize, message: String },
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(SynthError::InvalidSpec(msg.into()))
}

/// Ground-truth tree. Top-level nodes hang under an implicit root; names
/// encode the path (`c1`, `c1_0`, `c1_0_2`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrueTree {
    /// `(name, parent index)` in creation order; parents precede children.
    pub nodes: Vec<(String, Option<usize>)>,
}

impl TrueTree {
    /// Complete tree of the given depth and branching factor.
    pub fn full(depth: usize, branching: usize) -> Self {
        let mut t = TrueTree { nodes: Vec::new() };
        let mut frontier: Vec<Option<usize>> = vec![None];
        for _ in 0..depth {
            let mut next = Vec::new();
            for parent in frontier {
                for _ in 0..branching {
                    next.push(Some(t.add_child(parent)));
                }
            }
            frontier = next;
        }
        t
    }

    /// Random tree with at most `max_nodes` nodes, every internal node having 2 or 3 children.
    pub fn random(rng: &mut impl Rng, max_nodes: usize) -> Self {
        let mut t = TrueTree { nodes: Vec::new() };
        let top = rng.gen_range(2..=4).min(max_nodes.max(2));
        for _ in 0..top {
            t.add_child(None);
        }
        let target = rng.gen_range(top..=max_nodes.max(top));
        let mut attempts = 0;
        while t.nodes.len() < target && attempts < 100 {
            attempts += 1;
            let leaves: Vec<usize> = (0..t.nodes.len()).filter(|&i| t.is_leaf(i) && t.depth(i) < 3).collect();
            let Some(&leaf) = leaves.choose(rng) else { break };
            let k = rng.gen_range(2..=3);
            if t.nodes.len() + k > target {
                continue;
            }
            for _ in 0..k {
                t.add_child(Some(leaf));
            }
        }
        t
    }

    fn add_child(&mut self, parent: Option<usize>) -> usize {
        let siblings = self.nodes.iter().filter(|(_, p)| *p == parent).count();
        let name = match parent {
            None => format!("c{siblings}"),
            Some(p) => format!("{}_{siblings}", self.nodes[p].0),
        };
        self.nodes.push((name, parent));
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.nodes[i].0
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|(n, _)| n == name)
    }

    pub fn children(&self, i: Option<usize>) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&c| self.nodes[c].1 == i).collect()
    }

    pub fn is_leaf(&self, i: usize) -> bool {
        self.nodes.iter().all(|(_, p)| *p != Some(i))
    }

    pub fn depth(&self, i: usize) -> usize {
        let mut d = 0;
        let mut cur = self.nodes[i].1;
        while let Some(p) = cur {
            d += 1;
            cur = self.nodes[p].1;
        }
        d
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.is_leaf(i)).collect()
    }

    /// Leaves of the subtree rooted at `i` (a leaf is its own only leaf).
    pub fn leaves_under(&self, i: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut stack = vec![i];
        while let Some(n) = stack.pop() {
            let kids = self.children(Some(n));
            if kids.is_empty() {
                out.insert(n);
            }
            stack.extend(kids);
        }
        out
    }
}

/// A label whose space is exactly the union of the named true nodes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthUnion {
    pub name: String,
    pub parts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthDataset {
    pub name: String,
    pub domain: String,
    /// True nodes this dataset uses as labels.
    pub visible: Vec<String>,
    #[serde(default)]
    pub unions: Vec<SynthUnion>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub tree: TrueTree,
    pub datasets: Vec<SynthDataset>,
    pub instances_per_label: usize,
    pub noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Depth-2, branching-5 tree seen by three datasets:
    /// `fine` sees every leaf, `news` sees `c0`, `c1` and the union
    /// `misc = c2_0 + c2_1`, and `med` sees `c2` and its child `c2_0`.
    pub fn standard(instances_per_label: usize, noise: f64, seed: u64) -> Self {
        Self::standard_with_branching(5, instances_per_label, noise, seed)
    }

    /// [`SynthSpec::standard`] over a depth-2 tree with the given branching (at least 3).
    pub fn standard_with_branching(branching: usize, instances_per_label: usize, noise: f64, seed: u64) -> Self {
        let tree = TrueTree::full(2, branching.max(3));
        let leaves: Vec<String> = tree.leaves().into_iter().map(|i| tree.name(i).to_string()).collect();
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
                    name: "news".into(),
                    domain: "newswire".into(),
                    visible: vec!["c0".into(), "c1".into()],
                    unions: vec![SynthUnion {
                        name: "misc".into(),
                        parts: vec!["c2_0".into(), "c2_1".into()],
                    }],
                },
                SynthDataset {
                    name: "med".into(),
                    domain: "clinical".into(),
                    visible: vec!["c2".into(), "c2_0".into()],
                    unions: vec![],
                },
            ],
            instances_per_label,
            noise,
            seed,
        }
    }

    /// Random tree (at most `max_nodes` nodes) seen by 1 to `max_datasets` datasets.
    pub fn random(seed: u64, max_nodes: usize, max_datasets: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = TrueTree::random(&mut rng, max_nodes);
        let n = rng.gen_range(1..=max_datasets.max(1));
        let mut used_union_parents = BTreeSet::new();
        let mut datasets: Vec<SynthDataset> = (0..n)
            .map(|d| {
                let mut visible = BTreeSet::new();
                let mut unions = Vec::new();
                let mut stack: Vec<usize> = tree.children(None);
                stack.reverse();
                while let Some(node) = stack.pop() {
                    if n > 1 && rng.gen_bool(0.15) {
                        continue;
                    }
                    let kids = tree.children(Some(node));
                    if kids.is_empty() || rng.gen_bool(0.4) {
                        visible.insert(tree.name(node).to_string());
                        continue;
                    }
                    if rng.gen_bool(0.3) {
                        visible.insert(tree.name(node).to_string());
                    }
                    let mut rest = kids.clone();
                    if n > 1 && kids.len() >= 2 && !used_union_parents.contains(&node) && rng.gen_bool(0.3) {
                        used_union_parents.insert(node);
                        let mut shuffled = kids.clone();
                        shuffled.shuffle(&mut rng);
                        let k = rng.gen_range(2..=kids.len());
                        let mut parts: Vec<usize> = shuffled[..k].to_vec();
                        parts.sort();
                        rest.retain(|c| !parts.contains(c));
                        unions.push(SynthUnion {
                            name: format!("u_{}", tree.name(node)),
                            parts: parts.iter().map(|&p| tree.name(p).to_string()).collect(),
                        });
                    }
                    stack.extend(rest.into_iter().rev());
                }
                if visible.is_empty() && unions.is_empty() {
                    let top = tree.children(None);
                    visible.insert(tree.name(*top.choose(&mut rng).unwrap()).to_string());
                }
                SynthDataset {
                    name: format!("d{d}"),
                    domain: format!("dom{d}"),
                    visible: visible.into_iter().collect(),
                    unions,
                }
            })
            .collect();
        // every union part must be a label somewhere else, so the union can be declared
        for d in 0..datasets.len() {
            for u in datasets[d].unions.clone() {
                for part in &u.parts {
                    let seen = datasets
                        .iter()
                        .enumerate()
                        .any(|(e, ds)| e != d && ds.visible.contains(part));
                    if !seen {
                        let others: Vec<usize> = (0..datasets.len()).filter(|&e| e != d).collect();
                        let e = *others.choose(&mut rng).unwrap();
                        datasets[e].visible.push(part.clone());
                        datasets[e].visible.sort();
                    }
                }
            }
        }
        SynthSpec {
            tree,
            datasets,
            instances_per_label: 0,
            noise: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.noise) {
            return invalid(format!("noise {} is outside [0, 0.5)", self.noise));
        }
        if self.tree.is_empty() {
            return invalid("empty tree");
        }
        if self.tree.leaves().len() * 3 > SYLLABLES {
            return invalid("too many leaves for distinct mention patterns");
        }
        if self.datasets.is_empty() {
            return invalid("no datasets");
        }
        let mut names = BTreeSet::new();
        let mut domains = BTreeSet::new();
        let mut union_parents = BTreeSet::new();
        for d in &self.datasets {
            let ok = |s: &str| !s.is_empty() && !s.contains([':', ',', ' ', '\t']);
            if !ok(&d.name) || !names.insert(d.name.as_str()) {
                return invalid(format!("dataset name `{}` is empty, repeated or malformed", d.name));
            }
            if !ok(&d.domain) || !domains.insert(d.domain.as_str()) {
                return invalid(format!("dataset `{}` needs its own domain", d.name));
            }
            let mut labels = BTreeSet::new();
            for v in &d.visible {
                if self.tree.find(v).is_none() {
                    return invalid(format!("dataset `{}` sees unknown node `{v}`", d.name));
                }
                if !labels.insert(v.as_str()) {
                    return invalid(format!("dataset `{}` lists `{v}` twice", d.name));
                }
            }
            for u in &d.unions {
                if !ok(&u.name) || !labels.insert(u.name.as_str()) {
                    return invalid(format!("union label `{}` clashes in dataset `{}`", u.name, d.name));
                }
                let idx: Vec<usize> = u
                    .parts
                    .iter()
                    .map(|p| self.tree.find(p).ok_or_else(|| SynthError::InvalidSpec(format!("unknown union part `{p}`"))))
                    .collect::<Result<_>>()?;
                let parents: BTreeSet<Option<usize>> = idx.iter().map(|&i| self.tree.nodes[i].1).collect();
                let distinct: BTreeSet<usize> = idx.iter().copied().collect();
                if idx.len() < 2 || distinct.len() != idx.len() || parents.len() != 1 {
                    return invalid(format!("union `{}` needs two or more distinct sibling parts", u.name));
                }
                if !union_parents.insert(parents.into_iter().next().unwrap()) {
                    return invalid(format!("a second union over the same parent (`{}`)", u.name));
                }
                for p in &u.parts {
                    if !self.datasets.iter().any(|e| e.name != d.name && e.visible.contains(p)) {
                        return invalid(format!("union part `{p}` of `{}` is no other dataset's label", u.name));
                    }
                }
            }
            if labels.is_empty() {
                return invalid(format!("dataset `{}` has no labels", d.name));
            }
        }
        Ok(())
    }
}

/// Expected hierarchy as key sets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GoldenUhls {
    /// `(child, parent)` node keys.
    pub edges: BTreeSet<(String, String)>,
    /// Dataset label -> node keys.
    pub mapping: BTreeMap<String, BTreeSet<String>>,
}

impl GoldenUhls {
    pub fn from_built(h: &UnifiedHierarchy, m: &LabelMapping) -> Self {
        GoldenUhls {
            edges: h.edge_keys(),
            mapping: m
                .iter()
                .map(|(l, nodes)| (l.to_string(), nodes.iter().map(|&n| h.key(n).to_string()).collect()))
                .collect(),
        }
    }

    pub fn nodes(&self) -> BTreeSet<&str> {
        self.edges.iter().map(|(c, _)| c.as_str()).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (c, p) in &self.edges {
            writeln!(out, "EDGE {c} {p}").unwrap();
        }
        for (l, nodes) in &self.mapping {
            writeln!(out, "MAP {l} -> {}", nodes.iter().cloned().collect::<Vec<_>>().join(",")).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut g = GoldenUhls::default();
        for (i, line) in text.lines().enumerate() {
            let bad = |m: &str| SynthError::Golden {
                line: i + 1,
                message: m.to_string(),
            };
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                [] => {}
                ["EDGE", c, p] => {
                    g.edges.insert((c.to_string(), p.to_string()));
                }
                ["MAP", l, "->", nodes] => {
                    g.mapping.insert(l.to_string(), nodes.split(',').map(str::to_string).collect());
                }
                _ => return Err(bad("expected `EDGE child parent` or `MAP label -> a,b`")),
            }
        }
        Ok(g)
    }
}

/// The merge procedure re-derived on leaf sets.
///
/// `unions` lists each declared union as its whole's leaf set and its parts'
/// leaf sets; it applies to every label with that leaf set.
fn reference_uhls(labels: &[(LabelId, BTreeSet<usize>)], unions: &[(BTreeSet<usize>, Vec<BTreeSet<usize>>)]) -> GoldenUhls {
    struct RNode {
        key: String,
        leaves: Option<BTreeSet<usize>>, // None: the root, containing everything
        parent: usize,
    }
    let mut nodes = vec![RNode {
        key: ROOT_KEY.to_string(),
        leaves: None,
        parent: 0,
    }];
    let inside = |a: &BTreeSet<usize>, b: &Option<BTreeSet<usize>>| match b {
        None => true,
        Some(b) => a.len() < b.len() && a.is_subset(b),
    };
    let mut mapping: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();

    for (y, s) in labels {
        let sorted = |nodes: &[RNode]| {
            let mut ids: Vec<usize> = (1..nodes.len()).collect();
            ids.sort_by(|&a, &b| nodes[a].key.cmp(&nodes[b].key));
            ids
        };
        let order = sorted(&nodes);
        let equal_node = |set: &BTreeSet<usize>| order.iter().copied().find(|&n| nodes[n].leaves.as_ref() == Some(set));
        if let Some(n) = equal_node(s) {
            mapping.insert(y.to_string(), BTreeSet::from([nodes[n].key.clone()]));
            continue;
        }
        let resolved = unions.iter().filter(|(whole, _)| whole == s).find_map(|(_, parts)| {
            parts.iter().map(&equal_node).collect::<Option<Vec<usize>>>()
        });
        if let Some(hits) = resolved {
            mapping.insert(y.to_string(), hits.into_iter().map(|n| nodes[n].key.clone()).collect());
            continue;
        }
        let children = |nodes: &[RNode], p: usize| -> Vec<usize> {
            let mut c: Vec<usize> = (1..nodes.len()).filter(|&i| nodes[i].parent == p).collect();
            c.sort_by(|&a, &b| nodes[a].key.cmp(&nodes[b].key));
            c
        };
        let mut parent = 0;
        while let Some(&next) = children(&nodes, parent).iter().find(|&&c| inside(s, &nodes[c].leaves)) {
            parent = next;
        }
        let id = nodes.len();
        let siblings = children(&nodes, parent);
        nodes.push(RNode {
            key: y.to_string(),
            leaves: Some(s.clone()),
            parent,
        });
        for c in siblings {
            if inside(nodes[c].leaves.as_ref().unwrap(), &Some(s.clone())) {
                nodes[c].parent = id;
            }
        }
        let in_subtree = |nodes: &[RNode], mut n: usize| {
            while n != 0 {
                if n == id {
                    return true;
                }
                n = nodes[n].parent;
            }
            false
        };
        let mut targets = BTreeSet::from([y.to_string()]);
        for n in 1..nodes.len() {
            if !in_subtree(&nodes, n) && inside(nodes[n].leaves.as_ref().unwrap(), &Some(s.clone())) {
                targets.insert(nodes[n].key.clone());
            }
        }
        mapping.insert(y.to_string(), targets);
    }
    GoldenUhls {
        edges: nodes[1..]
            .iter()
            .map(|n| (n.key.clone(), nodes[n.parent].key.clone()))
            .collect(),
        mapping,
    }
}

/// A generated instance with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthInstance {
    pub instance: MentionInstance,
    /// True fine leaf.
    pub leaf: String,
    /// Leaf whose cue words and mention pattern were used; differs from `leaf` for noisy instances.
    pub pattern_leaf: String,
}

impl SynthInstance {
    pub fn is_noisy(&self) -> bool {
        self.leaf != self.pattern_leaf
    }
}

#[derive(Clone, Debug)]
pub struct SynthDatasetData {
    pub descriptor: DatasetDescriptor,
    pub instances: Vec<SynthInstance>,
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub spec: SynthSpec,
    pub datasets: Vec<SynthDatasetData>,
    /// All labels in processing order.
    pub labels: Vec<LabelId>,
    pub oracle: SpaceOracle,
    pub golden: GoldenUhls,
}

const CONSONANTS: &str = "bcdfghjklmnprstvz";
const VOWELS: &str = "aeiou";
const SYLLABLES: usize = 17 * 5;
const CUES_PER_LEAF: usize = 3;
const DOMAIN_WORDS: usize = 40;

/// Per-leaf lexical material: mention syllables and cue words.
struct Patterns {
    syllables: HashMap<usize, Vec<String>>,
    cues: HashMap<usize, Vec<String>>,
}

impl Patterns {
    fn new(tree: &TrueTree, seed: u64) -> Self {
        let mut all: Vec<String> = CONSONANTS
            .chars()
            .flat_map(|c| VOWELS.chars().map(move |v| format!("{c}{v}")))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ca1_ab1e);
        all.shuffle(&mut rng);
        let mut syllables = HashMap::new();
        let mut cues = HashMap::new();
        for (k, leaf) in tree.leaves().into_iter().enumerate() {
            let syl = all[3 * k..3 * k + 3].to_vec();
            cues.insert(
                leaf,
                (0..CUES_PER_LEAF).map(|j| format!("{}{}", syl[j], syl[(j + 1) % 3])).collect(),
            );
            syllables.insert(leaf, syl);
        }
        Patterns { syllables, cues }
    }

    fn mention(&self, leaf: usize, rng: &mut impl Rng) -> Vec<String> {
        let syl = &self.syllables[&leaf];
        let n = rng.gen_range(1..=2);
        (0..n)
            .map(|_| {
                let w = format!("{}{}", syl.choose(rng).unwrap(), syl.choose(rng).unwrap());
                let mut c = w.chars();
                let first = c.next().unwrap().to_ascii_uppercase();
                std::iter::once(first).chain(c).collect()
            })
            .collect()
    }
}

fn label_leaves(spec: &SynthSpec, d: &SynthDataset) -> BTreeMap<String, BTreeSet<usize>> {
    let mut out = BTreeMap::new();
    for v in &d.visible {
        out.insert(v.clone(), spec.tree.leaves_under(spec.tree.find(v).unwrap()));
    }
    for u in &d.unions {
        let set = u.parts.iter().flat_map(|p| spec.tree.leaves_under(spec.tree.find(p).unwrap())).collect();
        out.insert(u.name.clone(), set);
    }
    out
}

fn generate_dataset(spec: &SynthSpec, index: usize, patterns: &Patterns) -> SynthDatasetData {
    let d = &spec.datasets[index];
    let labels = label_leaves(spec, d);
    let descriptor = DatasetDescriptor::new(&d.name, &d.domain, labels.keys().cloned(), false);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)));
    let domain: Vec<String> = (0..DOMAIN_WORDS).map(|k| format!("{}{k}", d.domain)).collect();
    let all_leaves = spec.tree.leaves();
    let mut instances = Vec::new();
    for (label, set) in &labels {
        // leaves for which this label is the finest label of the dataset
        let finer: BTreeSet<usize> = labels
            .values()
            .filter(|o| o.len() < set.len() && o.is_subset(set))
            .flatten()
            .copied()
            .collect();
        let residual: Vec<usize> = set.difference(&finer).copied().collect();
        if residual.is_empty() {
            continue;
        }
        for _ in 0..spec.instances_per_label {
            let leaf = *residual.choose(&mut rng).unwrap();
            let noisy = all_leaves.len() > 1 && rng.gen_bool(spec.noise);
            let pattern = if noisy {
                *all_leaves.iter().filter(|&&l| l != leaf).collect::<Vec<_>>().choose(&mut rng).unwrap()
            } else {
                &leaf
            };
            let cues = &patterns.cues[pattern];
            let mut tokens: Vec<String> = Vec::new();
            tokens.push(domain.choose(&mut rng).unwrap().clone());
            tokens.push(domain.choose(&mut rng).unwrap().clone());
            tokens.push(cues.choose(&mut rng).unwrap().clone());
            let start = tokens.len();
            tokens.extend(patterns.mention(*pattern, &mut rng));
            let end = tokens.len();
            tokens.push(cues.choose(&mut rng).unwrap().clone());
            tokens.push(domain.choose(&mut rng).unwrap().clone());
            tokens.push(domain.choose(&mut rng).unwrap().clone());
            let id = format!("{}-{:05}", d.name, instances.len());
            instances.push(SynthInstance {
                instance: MentionInstance {
                    tokens,
                    start,
                    end,
                    gold: BTreeSet::from([label.clone()]),
                    dataset: d.name.clone(),
                    instance_id: id,
                },
                leaf: spec.tree.name(leaf).to_string(),
                pattern_leaf: spec.tree.name(*pattern).to_string(),
            });
        }
    }
    SynthDatasetData { descriptor, instances }
}

/// Builds the corpus, oracle and expected hierarchy for a spec.
pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let patterns = Patterns::new(&spec.tree, spec.seed);
    let datasets: Vec<SynthDatasetData> = (0..spec.datasets.len())
        .into_par_iter()
        .map(|i| generate_dataset(spec, i, &patterns))
        .collect();

    let mut labels: Vec<(LabelId, BTreeSet<usize>)> = Vec::new();
    for d in &spec.datasets {
        for (name, set) in label_leaves(spec, d) {
            labels.push((LabelId::new(&d.name, name), set));
        }
    }

    let mut records = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            let ((a, sa), (b, sb)) = (&labels[i], &labels[j]);
            let assertion = if sa == sb {
                Assertion::Equal(a.clone(), b.clone())
            } else if sa.is_superset(sb) {
                Assertion::Subsumes(a.clone(), b.clone())
            } else if sb.is_superset(sa) {
                Assertion::Subsumes(b.clone(), a.clone())
            } else if sa.is_disjoint(sb) {
                Assertion::Disjoint(a.clone(), b.clone())
            } else {
                return invalid(format!("labels `{a}` and `{b}` partially overlap"));
            };
            records.push(AssertionRecord::new(assertion).with_provenance("derived from the true tree"));
        }
    }
    let mut union_leaves = Vec::new();
    for d in &spec.datasets {
        for u in &d.unions {
            let whole = LabelId::new(&d.name, &u.name);
            let mut parts = Vec::new();
            let mut part_sets = Vec::new();
            for p in &u.parts {
                let owner = spec
                    .datasets
                    .iter()
                    .find(|e| e.name != d.name && e.visible.contains(p))
                    .expect("validated");
                parts.push(LabelId::new(&owner.name, p));
                part_sets.push(spec.tree.leaves_under(spec.tree.find(p).unwrap()));
            }
            records.push(AssertionRecord::new(Assertion::EqualsUnion(whole, parts)).with_provenance("declared union"));
            union_leaves.push((part_sets.iter().flatten().copied().collect(), part_sets));
        }
    }
    if labels.len() == 1 {
        records.push(AssertionRecord::new(Assertion::DisjointDefault(labels[0].0.clone())));
    }
    let oracle = SpaceOracle::from_records(records)?;
    let golden = reference_uhls(&labels, &union_leaves);
    Ok(SynthCorpus {
        spec: spec.clone(),
        labels: labels.into_iter().map(|(l, _)| l).collect(),
        datasets,
        oracle,
        golden,
    })
}

impl SynthCorpus {
    /// Splits every dataset exactly as a registry load with the same seed would.
    pub fn splits(&self, seed: u64) -> Vec<DatasetSplits> {
        self.datasets
            .iter()
            .map(|d| DatasetSplits {
                descriptor: d.descriptor.clone(),
                splits: split_dataset(d.instances.iter().map(|s| s.instance.clone()).collect(), seed),
            })
            .collect()
    }

    /// Instance id -> generated instance.
    pub fn truth(&self) -> HashMap<&str, &SynthInstance> {
        self.datasets
            .iter()
            .flat_map(|d| d.instances.iter())
            .map(|s| (s.instance.instance_id.as_str(), s))
            .collect()
    }

    pub fn registry(&self) -> Registry {
        Registry {
            datasets: self
                .datasets
                .iter()
                .map(|d| RegistryEntry {
                    descriptor: d.descriptor.clone(),
                    format: Format::MentionRecord,
                    path: Some(PathBuf::from(format!("data/{}.jsonl", d.descriptor.name))),
                    train: None,
                    validation: None,
                    test: None,
                })
                .collect(),
            base_dir: PathBuf::new(),
        }
    }

    /// Writes datasets, registry, oracle, expected hierarchy and ground truth
    /// under `dir`; returns the relative paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir.join("data"))?;
        let mut written = Vec::new();
        let mut put = |rel: String, body: String| -> Result<()> {
            std::fs::write(dir.join(&rel), body)?;
            written.push(rel);
            Ok(())
        };
        let mut truth = String::new();
        for d in &self.datasets {
            put(
                format!("data/{}.jsonl", d.descriptor.name),
                write_mention_records(d.instances.iter().map(|s| &s.instance)),
            )?;
            for s in &d.instances {
                let row = serde_json::json!({
                    "id": s.instance.instance_id,
                    "dataset": d.descriptor.name,
                    "leaf": s.leaf,
                    "pattern_leaf": s.pattern_leaf,
                });
                truth.push_str(&row.to_string());
                truth.push('\n');
            }
        }
        put("registry.toml".into(), self.registry().to_toml())?;
        put("oracle.txt".into(), self.oracle.to_text())?;
        put("golden_uhls.txt".into(), self.golden.to_text())?;
        put("truth.jsonl".into(), truth)?;
        Ok(written)
    }
}

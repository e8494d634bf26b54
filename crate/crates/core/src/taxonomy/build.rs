use std::collections::BTreeSet;
use std::fmt::Write as _;

use log::warn;

use super::hierarchy::{LabelMapping, NodeId, UnifiedHierarchy};
use super::oracle::{Relation, SpaceOracle};
use super::{LabelId, Result, TaxonomyError};

/// Which branch of the insertion procedure fired for one label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InsertCase {
    /// A new node was created under `parent`.
    Created {
        parent: String,
        reparented: Vec<String>,
        /// Nodes strictly inside the label that stayed outside its subtree.
        extra: Vec<String>,
    },
    /// The label's space already exists as one node or a union of nodes.
    Mapped { targets: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BuildEvent {
    pub label: LabelId,
    pub case: InsertCase,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BuildLog {
    pub events: Vec<BuildEvent>,
}

impl BuildLog {
    pub fn created_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e.case, InsertCase::Created { .. })).count()
    }

    pub fn mapped_count(&self) -> usize {
        self.events.len() - self.created_count()
    }

    pub fn warnings(&self) -> impl Iterator<Item = &str> {
        self.events.iter().flat_map(|e| e.warnings.iter().map(String::as_str))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            match &e.case {
                InsertCase::Created {
                    parent,
                    reparented,
                    extra,
                } => {
                    let _ = write!(out, "CASE1 {} PARENT {}", e.label, parent);
                    if !reparented.is_empty() {
                        let _ = write!(out, " REPARENT {}", reparented.join(","));
                    }
                    if !extra.is_empty() {
                        let _ = write!(out, " EXTRA {}", extra.join(","));
                    }
                }
                InsertCase::Mapped { targets } => {
                    let _ = write!(out, "CASE2 {} -> {}", e.label, targets.join(","));
                }
            }
            out.push('\n');
            for w in &e.warnings {
                let _ = writeln!(out, "WARN {} {}", e.label, w);
            }
        }
        out
    }
}

fn origin_of(h: &UnifiedHierarchy, id: NodeId) -> &LabelId {
    h.node(id).origin.as_ref().expect("non-root nodes carry an origin")
}

/// Processing order: datasets in registration order, labels sorted within each.
pub fn canonical_order<'a, I, L>(datasets: I) -> Vec<LabelId>
where
    I: IntoIterator<Item = (&'a str, L)>,
    L: IntoIterator<Item = &'a str>,
{
    let mut out = Vec::new();
    for (dataset, labels) in datasets {
        let sorted: BTreeSet<&str> = labels.into_iter().collect();
        out.extend(sorted.into_iter().map(|l| LabelId::new(dataset, l)));
    }
    out
}

/// Processes one label: either maps it onto existing nodes or inserts it as a new node.
pub fn insert_label(
    hierarchy: &mut UnifiedHierarchy,
    mapping: &mut LabelMapping,
    oracle: &SpaceOracle,
    y: &LabelId,
) -> Result<BuildEvent> {
    if mapping.contains(y) {
        return Err(TaxonomyError::AlreadyProcessed(y.to_string()));
    }
    if !oracle.covers(y) {
        return Err(TaxonomyError::UnknownLabel(y.to_string()));
    }
    let order = hierarchy.canonical_order();

    // Case 2: an existing node with the same space, or a union of existing nodes.
    for &n in &order {
        if oracle.compare(y, origin_of(hierarchy, n))? == Relation::Equal {
            mapping.insert(y.clone(), BTreeSet::from([n]));
            return Ok(BuildEvent {
                label: y.clone(),
                case: InsertCase::Mapped {
                    targets: vec![hierarchy.key(n).to_string()],
                },
                warnings: Vec::new(),
            });
        }
    }
    for parts in oracle.unions_of(y)? {
        let mut resolved = BTreeSet::new();
        for part in &parts {
            let hit = order
                .iter()
                .copied()
                .find(|&n| oracle.equal(part, origin_of(hierarchy, n)).unwrap_or(false));
            match hit {
                Some(n) => {
                    resolved.insert(n);
                }
                None => break,
            }
        }
        if resolved.len() == parts.len() {
            let targets = sorted_keys(hierarchy, &resolved);
            mapping.insert(y.clone(), resolved);
            return Ok(BuildEvent {
                label: y.clone(),
                case: InsertCase::Mapped { targets },
                warnings: Vec::new(),
            });
        }
    }

    // Case 1: descend to the deepest node whose space contains y.
    let mut warnings = Vec::new();
    let mut parent = NodeId::ROOT;
    loop {
        let mut containing = Vec::new();
        for &c in hierarchy.children(parent) {
            if oracle.compare(y, origin_of(hierarchy, c))? == Relation::AInsideB {
                containing.push(c);
            }
        }
        match containing.as_slice() {
            [] => break,
            [only] => parent = *only,
            [first, ..] => {
                let names: Vec<&str> = containing.iter().map(|&c| hierarchy.key(c)).collect();
                let msg = format!(
                    "several children of `{}` contain it ({}); chose `{}`",
                    hierarchy.key(parent),
                    names.join(", "),
                    hierarchy.key(*first)
                );
                warn!("{y}: {msg}");
                warnings.push(msg);
                parent = *first;
            }
        }
    }
    let siblings: Vec<NodeId> = hierarchy.children(parent).to_vec();
    let created = hierarchy.add_node(y.clone(), parent)?;
    let mut reparented = Vec::new();
    for x in siblings {
        if oracle.compare(origin_of(hierarchy, x), y)? == Relation::AInsideB {
            hierarchy.reparent(x, created);
            reparented.push(hierarchy.key(x).to_string());
        }
    }
    mapping.insert(y.clone(), BTreeSet::from([created]));

    // Keep the result a tree: nodes inside y that live elsewhere are reached via the mapping.
    let below = hierarchy.subtree(created);
    let mut extra = BTreeSet::new();
    for n in hierarchy.canonical_order() {
        if n == created || below.contains(&n) {
            continue;
        }
        if oracle.compare(origin_of(hierarchy, n), y)? == Relation::AInsideB {
            mapping.extend(y, n);
            extra.insert(n);
        }
    }
    Ok(BuildEvent {
        label: y.clone(),
        case: InsertCase::Created {
            parent: hierarchy.key(parent).to_string(),
            reparented,
            extra: sorted_keys(hierarchy, &extra),
        },
        warnings,
    })
}

fn sorted_keys(h: &UnifiedHierarchy, ids: &BTreeSet<NodeId>) -> Vec<String> {
    let mut keys: Vec<String> = ids.iter().map(|&n| h.key(n).to_string()).collect();
    keys.sort();
    keys
}

/// Folds [`insert_label`] over `labels`, optionally starting from a seed hierarchy.
pub fn build_uhls(
    labels: &[LabelId],
    oracle: &SpaceOracle,
    seed: Option<UnifiedHierarchy>,
) -> Result<(UnifiedHierarchy, LabelMapping, BuildLog)> {
    let mut hierarchy = seed.unwrap_or_default();
    for id in hierarchy.ids().skip(1) {
        let origin = origin_of(&hierarchy, id);
        if !oracle.covers(origin) {
            return Err(TaxonomyError::UnknownLabel(origin.to_string()));
        }
    }
    let mut mapping = LabelMapping::new();
    let mut log = BuildLog::default();
    for y in labels {
        let event = insert_label(&mut hierarchy, &mut mapping, oracle, y)?;
        log.events.push(event);
    }
    Ok((hierarchy, mapping, log))
}

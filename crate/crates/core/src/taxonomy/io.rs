//! Text records for a hierarchy and its label mapping.
//!
//! ```text
//! NODE root PARENT - ORIGIN synthetic
//! NODE bbn:city PARENT bbn:gpe ORIGIN bbn:city
//! MAP onto:GPE -> bbn:gpe
//! ```
//!
//! Nodes are written root first, then by key; mappings by label. Reading and
//! writing again reproduces the input byte for byte.

use std::collections::BTreeSet;

use super::hierarchy::{LabelMapping, Node, UnifiedHierarchy, ROOT_KEY};
use super::{LabelId, Result, TaxonomyError};

pub fn write_hierarchy(hierarchy: &UnifiedHierarchy, mapping: &LabelMapping) -> String {
    let mut out = format!("NODE {ROOT_KEY} PARENT - ORIGIN synthetic\n");
    for id in hierarchy.canonical_order() {
        let node = hierarchy.node(id);
        let parent = hierarchy.parent(id).map(|p| hierarchy.key(p)).unwrap_or("-");
        let origin = node.origin.as_ref().map(ToString::to_string).unwrap_or_else(|| "synthetic".into());
        out.push_str(&format!("NODE {} PARENT {} ORIGIN {}\n", node.key, parent, origin));
    }
    for (label, nodes) in mapping.iter() {
        let mut keys: Vec<&str> = nodes.iter().map(|&n| hierarchy.key(n)).collect();
        keys.sort();
        out.push_str(&format!("MAP {} -> {}\n", label, keys.join(",")));
    }
    out
}

pub fn read_hierarchy(text: &str) -> Result<(UnifiedHierarchy, LabelMapping)> {
    let mut nodes = Vec::new();
    let mut parents = Vec::new();
    let mut maps: Vec<(usize, LabelId, Vec<String>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| TaxonomyError::Parse { line, message };
        let body = raw.split('#').next().unwrap_or_default().trim();
        if body.is_empty() {
            continue;
        }
        let words: Vec<&str> = body.split_whitespace().collect();
        match words.as_slice() {
            ["NODE", key, "PARENT", parent, "ORIGIN", origin] => {
                let origin = match *origin {
                    "synthetic" => None,
                    o => Some(o.parse::<LabelId>().map_err(|e| err(e.to_string()))?),
                };
                if let Some(o) = &origin {
                    if o.to_string() != *key {
                        return Err(err(format!("node `{key}` must be keyed by its origin `{o}`")));
                    }
                }
                nodes.push(Node {
                    key: key.to_string(),
                    origin,
                });
                parents.push(if *parent == "-" { None } else { Some(parent.to_string()) });
            }
            ["MAP", label, "->", targets] => {
                let label = label.parse::<LabelId>().map_err(|e| err(e.to_string()))?;
                let targets: Vec<String> = targets.split(',').map(str::to_string).collect();
                if targets.iter().any(String::is_empty) {
                    return Err(err("empty mapping target".into()));
                }
                maps.push((line, label, targets));
            }
            _ => return Err(err(format!("unrecognised record `{body}`"))),
        }
    }
    if nodes.is_empty() {
        nodes.push(Node {
            key: ROOT_KEY.into(),
            origin: None,
        });
        parents.push(None);
    }
    let hierarchy = UnifiedHierarchy::from_parts(nodes, parents)?;
    let mut mapping = LabelMapping::new();
    for (line, label, targets) in maps {
        let mut ids = BTreeSet::new();
        for t in &targets {
            let id = hierarchy.find(t).ok_or_else(|| TaxonomyError::Parse {
                line,
                message: format!("mapping target `{t}` is not a node"),
            })?;
            ids.insert(id);
        }
        if mapping.contains(&label) {
            return Err(TaxonomyError::Parse {
                line,
                message: format!("label `{label}` mapped twice"),
            });
        }
        mapping.insert(label, ids);
    }
    Ok((hierarchy, mapping))
}

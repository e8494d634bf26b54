use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{LabelId, Result, TaxonomyError};

/// Key of the synthetic root node.
pub const ROOT_KEY: &str = "root";

/// Index of a node inside one [`UnifiedHierarchy`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    /// Stable textual id; `dataset:name` of the creating label, or [`ROOT_KEY`].
    pub key: String,
    /// The label that created the node; `None` for the synthetic root.
    pub origin: Option<LabelId>,
}

/// The unified tree. Node 0 is always the synthetic root.
#[derive(Clone, Debug)]
pub struct UnifiedHierarchy {
    nodes: Vec<Node>,
    parent: Vec<Option<NodeId>>,
    children: Vec<Vec<NodeId>>,
    by_key: HashMap<String, NodeId>,
}

impl Default for UnifiedHierarchy {
    fn default() -> Self {
        Self::new()
    }
}

impl UnifiedHierarchy {
    pub fn new() -> Self {
        UnifiedHierarchy {
            nodes: vec![Node {
                key: ROOT_KEY.to_string(),
                origin: None,
            }],
            parent: vec![None],
            children: vec![Vec::new()],
            by_key: HashMap::from([(ROOT_KEY.to_string(), NodeId::ROOT)]),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn key(&self, id: NodeId) -> &str {
        &self.nodes[id.0].key
    }

    pub fn find(&self, key: &str) -> Option<NodeId> {
        self.by_key.get(key).copied()
    }

    pub fn lookup(&self, key: &str) -> Result<NodeId> {
        self.find(key).ok_or_else(|| TaxonomyError::UnknownNode(key.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parent[id.0]
    }

    /// Children ordered by key.
    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id.0]
    }

    /// Non-root nodes ordered by key: the canonical class order.
    pub fn canonical_order(&self) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self.ids().skip(1).collect();
        ids.sort_by(|a, b| self.key(*a).cmp(self.key(*b)));
        ids
    }

    /// Adds `origin` as a new child of `parent` and returns its id.
    pub(crate) fn add_node(&mut self, origin: LabelId, parent: NodeId) -> Result<NodeId> {
        let key = origin.to_string();
        if self.by_key.contains_key(&key) {
            return Err(TaxonomyError::NotATree(format!("duplicate node `{key}`")));
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            key: key.clone(),
            origin: Some(origin),
        });
        self.parent.push(None);
        self.children.push(Vec::new());
        self.by_key.insert(key, id);
        self.attach(id, parent);
        Ok(id)
    }

    pub(crate) fn reparent(&mut self, id: NodeId, new_parent: NodeId) {
        if let Some(old) = self.parent[id.0] {
            self.children[old.0].retain(|&c| c != id);
        }
        self.attach(id, new_parent);
    }

    fn attach(&mut self, id: NodeId, parent: NodeId) {
        self.parent[id.0] = Some(parent);
        let pos = {
            let keys = &self.nodes;
            self.children[parent.0]
                .binary_search_by(|c| keys[c.0].key.as_str().cmp(keys[id.0].key.as_str()))
                .unwrap_or_else(|p| p)
        };
        self.children[parent.0].insert(pos, id);
    }

    /// Strict ancestors, nearest first, ending at the root.
    pub fn ancestors(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = self.parent[id.0];
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent[p.0];
        }
        out
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.ancestors(id).len()
    }

    /// All descendants of `id`, excluding `id` itself.
    pub fn subtree(&self, id: NodeId) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<NodeId> = self.children[id.0].clone();
        while let Some(n) = stack.pop() {
            if out.insert(n) {
                stack.extend_from_slice(&self.children[n.0]);
            }
        }
        out
    }

    pub fn subtree_of(&self, key: &str) -> Result<BTreeSet<NodeId>> {
        Ok(self.subtree(self.lookup(key)?))
    }

    pub fn is_descendant(&self, node: NodeId, of: NodeId) -> bool {
        let mut cur = self.parent[node.0];
        while let Some(p) = cur {
            if p == of {
                return true;
            }
            cur = self.parent[p.0];
        }
        false
    }

    /// Full structural check: one root, one parent per node, no cycles, child lists consistent.
    pub fn validate(&self) -> Result<()> {
        if self.parent[0].is_some() {
            return Err(TaxonomyError::NotATree("root has a parent".into()));
        }
        for id in self.ids().skip(1) {
            let p = self.parent[id.0]
                .ok_or_else(|| TaxonomyError::NotATree(format!("`{}` has no parent", self.key(id))))?;
            if !self.children[p.0].contains(&id) {
                return Err(TaxonomyError::NotATree(format!("`{}` missing from its parent's children", self.key(id))));
            }
            let mut steps = 0;
            let mut cur = Some(id);
            while let Some(c) = cur {
                steps += 1;
                if steps > self.nodes.len() {
                    return Err(TaxonomyError::NotATree(format!("cycle through `{}`", self.key(id))));
                }
                cur = self.parent[c.0];
            }
        }
        let child_links: usize = self.children.iter().map(Vec::len).sum();
        if child_links != self.nodes.len() - 1 {
            return Err(TaxonomyError::NotATree("child lists disagree with parent links".into()));
        }
        Ok(())
    }

    /// Edges as `(child key, parent key)`, sorted.
    pub fn edge_keys(&self) -> BTreeSet<(String, String)> {
        self.ids()
            .skip(1)
            .filter_map(|id| self.parent(id).map(|p| (self.key(id).to_string(), self.key(p).to_string())))
            .collect()
    }

    pub(crate) fn from_parts(nodes: Vec<Node>, parent_keys: Vec<Option<String>>) -> Result<Self> {
        let mut h = UnifiedHierarchy {
            nodes: Vec::new(),
            parent: Vec::new(),
            children: Vec::new(),
            by_key: HashMap::new(),
        };
        for (i, n) in nodes.iter().enumerate() {
            if h.by_key.insert(n.key.clone(), NodeId(i)).is_some() {
                return Err(TaxonomyError::NotATree(format!("duplicate node `{}`", n.key)));
            }
        }
        if nodes.first().map(|n| n.key.as_str()) != Some(ROOT_KEY) || nodes[0].origin.is_some() {
            return Err(TaxonomyError::NotATree("first node must be the synthetic root".into()));
        }
        h.parent = vec![None; nodes.len()];
        h.children = vec![Vec::new(); nodes.len()];
        h.nodes = nodes;
        for (i, pk) in parent_keys.iter().enumerate() {
            match (i, pk) {
                (0, None) => {}
                (0, Some(_)) => return Err(TaxonomyError::NotATree("root has a parent".into())),
                (_, None) => return Err(TaxonomyError::NotATree(format!("`{}` has no parent", h.nodes[i].key))),
                (_, Some(k)) => {
                    let p = h.lookup(k)?;
                    h.attach(NodeId(i), p);
                }
            }
        }
        h.validate()?;
        Ok(h)
    }
}

/// `φ`: every dataset label to a non-empty set of hierarchy nodes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelMapping {
    entries: BTreeMap<LabelId, BTreeSet<NodeId>>,
}

impl LabelMapping {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, label: &LabelId) -> Option<&BTreeSet<NodeId>> {
        self.entries.get(label)
    }

    pub fn lookup(&self, label: &LabelId) -> Result<&BTreeSet<NodeId>> {
        self.get(label).ok_or_else(|| TaxonomyError::UnknownLabel(label.to_string()))
    }

    pub fn insert(&mut self, label: LabelId, nodes: BTreeSet<NodeId>) {
        self.entries.insert(label, nodes);
    }

    pub(crate) fn extend(&mut self, label: &LabelId, node: NodeId) {
        self.entries.entry(label.clone()).or_default().insert(node);
    }

    pub fn contains(&self, label: &LabelId) -> bool {
        self.entries.contains_key(label)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LabelId, &BTreeSet<NodeId>)> {
        self.entries.iter()
    }

    /// Nodes a dataset distinguishes on its own: nodes created by one of its
    /// labels, plus nodes one of its labels maps to exclusively.
    pub fn dataset_nodes(&self, hierarchy: &UnifiedHierarchy, dataset: &str) -> BTreeSet<NodeId> {
        let mut out: BTreeSet<NodeId> = hierarchy
            .ids()
            .filter(|&id| hierarchy.node(id).origin.as_ref().is_some_and(|o| o.dataset == dataset))
            .collect();
        for (label, nodes) in &self.entries {
            if label.dataset == dataset && nodes.len() == 1 {
                out.extend(nodes.iter().copied());
            }
        }
        out
    }

    /// Candidate set `Y_m` for a training label: its mapped nodes plus their
    /// descendants. A mapped node's descendants are withheld when the label's
    /// own dataset distinguishes any node inside that subtree.
    pub fn candidate_set(&self, hierarchy: &UnifiedHierarchy, label: &LabelId) -> Result<BTreeSet<NodeId>> {
        let mapped = self.lookup(label)?;
        let own = self.dataset_nodes(hierarchy, &label.dataset);
        let mut out = mapped.clone();
        for &node in mapped {
            let below = hierarchy.subtree(node);
            if below.iter().all(|n| !own.contains(n)) {
                out.extend(below);
            }
        }
        Ok(out)
    }
}

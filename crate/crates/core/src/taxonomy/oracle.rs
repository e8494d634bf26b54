use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use super::{LabelId, Result, TaxonomyError};

/// One statement about label spaces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Assertion {
    /// The first label's space strictly contains the second's.
    Subsumes(LabelId, LabelId),
    Equal(LabelId, LabelId),
    Disjoint(LabelId, LabelId),
    /// The first label's space is exactly the union of the others.
    EqualsUnion(LabelId, Vec<LabelId>),
    /// The label is disjoint from every label it has no derivable relation with.
    DisjointDefault(LabelId),
    /// Closed world over the whole universe.
    DisjointDefaultAll,
}

impl Assertion {
    fn labels(&self) -> Vec<&LabelId> {
        match self {
            Assertion::Subsumes(a, b) | Assertion::Equal(a, b) | Assertion::Disjoint(a, b) => vec![a, b],
            Assertion::EqualsUnion(a, parts) => std::iter::once(a).chain(parts).collect(),
            Assertion::DisjointDefault(a) => vec![a],
            Assertion::DisjointDefaultAll => vec![],
        }
    }
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assertion::Subsumes(a, b) => write!(f, "SUBSUMES {a} {b}"),
            Assertion::Equal(a, b) => write!(f, "EQUAL {a} {b}"),
            Assertion::Disjoint(a, b) => write!(f, "DISJOINT {a} {b}"),
            Assertion::EqualsUnion(a, parts) => {
                write!(f, "EQUALS_UNION {a} =")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, " +")?;
                    }
                    write!(f, " {p}")?;
                }
                Ok(())
            }
            Assertion::DisjointDefault(a) => write!(f, "DISJOINT_DEFAULT {a}"),
            Assertion::DisjointDefaultAll => write!(f, "DISJOINT_DEFAULT *"),
        }
    }
}

/// An assertion together with where it came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssertionRecord {
    pub assertion: Assertion,
    /// Free-text note, usually an annotation-guideline citation.
    pub provenance: String,
    /// 1-based source line, 0 when built in memory.
    pub line: usize,
}

impl AssertionRecord {
    pub fn new(assertion: Assertion) -> Self {
        AssertionRecord {
            assertion,
            provenance: String::new(),
            line: 0,
        }
    }

    pub fn with_provenance(mut self, note: impl Into<String>) -> Self {
        self.provenance = note.into();
        self
    }

    fn describe(&self) -> String {
        let mut s = String::new();
        if self.line > 0 {
            s.push_str(&format!("line {}: ", self.line));
        }
        s.push_str(&self.assertion.to_string());
        if !self.provenance.is_empty() {
            s.push_str("  # ");
            s.push_str(&self.provenance);
        }
        s
    }
}

impl fmt::Display for AssertionRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.assertion)?;
        if !self.provenance.is_empty() {
            write!(f, "  # {}", self.provenance)?;
        }
        Ok(())
    }
}

/// How the space of `a` relates to the space of `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    AInsideB,
    BInsideA,
    Equal,
    Disjoint,
    Overlap,
}

impl Relation {
    pub fn swapped(self) -> Relation {
        match self {
            Relation::AInsideB => Relation::BInsideA,
            Relation::BInsideA => Relation::AInsideB,
            other => other,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum EdgeSource {
    Asserted(usize),
    /// Implied because the outer class contains every part of the union asserted at this record.
    UnionCover(usize),
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    outer: usize,
    inner: usize,
    source: EdgeSource,
}

/// Machine-checkable table of label-space assertions.
///
/// Labels related by `EQUAL` (or a single-part union) collapse into one
/// equivalence class. Strict containment between classes is closed
/// transitively at construction time, and every contradiction is rejected
/// there, so queries can only fail on labels the table never mentions or on
/// pairs it leaves undetermined.
#[derive(Clone, Debug)]
pub struct SpaceOracle {
    records: Vec<AssertionRecord>,
    labels: Vec<LabelId>,
    index: HashMap<LabelId, usize>,
    class_of: Vec<usize>,
    class_count: usize,
    edges: Vec<Edge>,
    below: Vec<BTreeSet<usize>>,
    above: Vec<BTreeSet<usize>>,
    disjoint: HashSet<(usize, usize)>,
    default_disjoint: Vec<bool>,
    closed_world: bool,
    unions: HashMap<usize, Vec<(usize, Vec<usize>)>>,
}

impl SpaceOracle {
    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let (body, note) = match raw.split_once('#') {
                Some((b, n)) => (b, n.trim()),
                None => (raw, ""),
            };
            let body = body.trim();
            if body.is_empty() {
                continue;
            }
            let assertion = parse_assertion(body).map_err(|message| TaxonomyError::Parse { line, message })?;
            records.push(AssertionRecord {
                assertion,
                provenance: note.to_string(),
                line,
            });
        }
        Self::from_records(records)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Serialize in the line format accepted by [`SpaceOracle::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_records(records: Vec<AssertionRecord>) -> Result<Self> {
        let mut universe = BTreeSet::new();
        let mut closed_world = false;
        for r in &records {
            if r.assertion == Assertion::DisjointDefaultAll {
                closed_world = true;
            }
            for l in r.assertion.labels() {
                universe.insert(l.clone());
            }
        }
        let labels: Vec<LabelId> = universe.into_iter().collect();
        let index: HashMap<LabelId, usize> = labels.iter().cloned().enumerate().map(|(i, l)| (l, i)).collect();

        // equivalence classes
        let mut uf = UnionFind::new(labels.len());
        for r in &records {
            match &r.assertion {
                Assertion::Equal(a, b) => uf.union(index[a], index[b]),
                Assertion::EqualsUnion(a, parts) if parts.len() == 1 => uf.union(index[a], index[&parts[0]]),
                _ => {}
            }
        }
        let mut class_ids = HashMap::new();
        let mut class_of = vec![0; labels.len()];
        for (i, slot) in class_of.iter_mut().enumerate() {
            let root = uf.find(i);
            let next = class_ids.len();
            *slot = *class_ids.entry(root).or_insert(next);
        }
        let class_count = class_ids.len();

        let mut oracle = SpaceOracle {
            records,
            labels,
            index,
            class_of,
            class_count,
            edges: Vec::new(),
            below: vec![BTreeSet::new(); class_count],
            above: vec![BTreeSet::new(); class_count],
            disjoint: HashSet::new(),
            default_disjoint: vec![false; class_count],
            closed_world,
            unions: HashMap::new(),
        };
        oracle.collect_edges()?;
        oracle.close()?;
        oracle.check_unions()?;
        oracle.derive_union_covers()?;
        oracle.check_disjoint()?;
        Ok(oracle)
    }

    fn class(&self, l: &LabelId) -> usize {
        self.class_of[self.index[l]]
    }

    fn collect_edges(&mut self) -> Result<()> {
        for (ri, r) in self.records.iter().enumerate() {
            match &r.assertion {
                Assertion::Subsumes(a, b) => {
                    let (ca, cb) = (self.class(a), self.class(b));
                    if ca == cb {
                        return Err(self.inconsistent(
                            format!("`{a}` strictly subsumes `{b}` but the two are asserted equal"),
                            &[ri],
                        ));
                    }
                    self.edges.push(Edge {
                        outer: ca,
                        inner: cb,
                        source: EdgeSource::Asserted(ri),
                    });
                }
                Assertion::EqualsUnion(a, parts) if parts.len() > 1 => {
                    let ca = self.class(a);
                    for p in parts {
                        let cp = self.class(p);
                        if ca == cp {
                            return Err(self.inconsistent(
                                format!("union part `{p}` is asserted equal to the whole `{a}`"),
                                &[ri],
                            ));
                        }
                        self.edges.push(Edge {
                            outer: ca,
                            inner: cp,
                            source: EdgeSource::Asserted(ri),
                        });
                    }
                    let parts = parts.iter().map(|p| self.index[p]).collect();
                    self.unions.entry(self.index[a]).or_default().push((ri, parts));
                }
                Assertion::Disjoint(a, b) => {
                    let (ca, cb) = (self.class(a), self.class(b));
                    self.disjoint.insert((ca.min(cb), ca.max(cb)));
                }
                Assertion::DisjointDefault(a) => {
                    let ca = self.class(a);
                    self.default_disjoint[ca] = true;
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Transitive closure of strict containment; rejects cycles.
    fn close(&mut self) -> Result<()> {
        let mut adj = vec![Vec::new(); self.class_count];
        for (ei, e) in self.edges.iter().enumerate() {
            adj[e.outer].push((e.inner, ei));
        }
        if let Some(cycle) = find_cycle(&adj) {
            let records: Vec<usize> = cycle.iter().map(|&ei| self.edge_record(ei)).collect();
            return Err(self.inconsistent("strict containment forms a cycle".to_string(), &records));
        }
        for c in 0..self.class_count {
            let mut seen = BTreeSet::new();
            let mut stack: Vec<usize> = adj[c].iter().map(|&(n, _)| n).collect();
            while let Some(n) = stack.pop() {
                if seen.insert(n) {
                    stack.extend(adj[n].iter().map(|&(m, _)| m));
                }
            }
            self.below[c] = seen;
        }
        for c in 0..self.class_count {
            self.above[c].clear();
        }
        for c in 0..self.class_count {
            for &d in &self.below[c].clone() {
                self.above[d].insert(c);
            }
        }
        Ok(())
    }

    fn check_unions(&self) -> Result<()> {
        for unions in self.unions.values() {
            for (ri, parts) in unions {
                for (i, &p) in parts.iter().enumerate() {
                    for &q in &parts[i + 1..] {
                        let (cp, cq) = (self.class_of[p], self.class_of[q]);
                        if cp == cq || self.below[cp].contains(&cq) || self.below[cq].contains(&cp) {
                            return Err(self.inconsistent(
                                format!(
                                    "union parts `{}` and `{}` are nested; state the equality directly",
                                    self.labels[p], self.labels[q]
                                ),
                                &[*ri],
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// A class that contains every part of a union contains the union.
    fn derive_union_covers(&mut self) -> Result<()> {
        loop {
            let mut added = false;
            let unions: Vec<(usize, usize, Vec<usize>)> = self
                .unions
                .iter()
                .flat_map(|(&whole, us)| us.iter().map(move |(ri, parts)| (whole, *ri, parts.clone())))
                .collect();
            for (whole, ri, parts) in unions {
                let cw = self.class_of[whole];
                for c in 0..self.class_count {
                    if c == cw || self.below[c].contains(&cw) {
                        continue;
                    }
                    let covers = parts.iter().all(|&p| self.below[c].contains(&self.class_of[p]));
                    if covers {
                        self.edges.push(Edge {
                            outer: c,
                            inner: cw,
                            source: EdgeSource::UnionCover(ri),
                        });
                        added = true;
                    }
                }
            }
            if !added {
                return Ok(());
            }
            self.close()?;
        }
    }

    fn check_disjoint(&self) -> Result<()> {
        for (ri, r) in self.records.iter().enumerate() {
            let Assertion::Disjoint(a, b) = &r.assertion else {
                continue;
            };
            let (ca, cb) = (self.class(a), self.class(b));
            if ca == cb {
                return Err(self.inconsistent(format!("`{a}` and `{b}` are both equal and disjoint"), &[ri]));
            }
            if let Some(path) = self.path(ca, cb).or_else(|| self.path(cb, ca)) {
                let mut chain = vec![ri];
                chain.extend(path);
                return Err(self.inconsistent(format!("`{a}` and `{b}` are both nested and disjoint"), &chain));
            }
            let shared = self.closed_below(ca).intersection(&self.closed_below(cb)).next().copied();
            if let Some(s) = shared {
                let mut chain = vec![ri];
                chain.extend(self.path(ca, s).unwrap_or_default());
                chain.extend(self.path(cb, s).unwrap_or_default());
                return Err(self.inconsistent(
                    format!(
                        "`{a}` and `{b}` are disjoint but both contain `{}`",
                        self.labels[self.representative(s)]
                    ),
                    &chain,
                ));
            }
        }
        Ok(())
    }

    fn closed_below(&self, c: usize) -> BTreeSet<usize> {
        let mut s = self.below[c].clone();
        s.insert(c);
        s
    }

    fn closed_above(&self, c: usize) -> BTreeSet<usize> {
        let mut s = self.above[c].clone();
        s.insert(c);
        s
    }

    fn representative(&self, class: usize) -> usize {
        self.class_of.iter().position(|&c| c == class).expect("class has a member")
    }

    fn edge_record(&self, ei: usize) -> usize {
        match self.edges[ei].source {
            EdgeSource::Asserted(ri) | EdgeSource::UnionCover(ri) => ri,
        }
    }

    /// Records along a containment path from `outer` down to `inner`.
    fn path(&self, outer: usize, inner: usize) -> Option<Vec<usize>> {
        if outer == inner {
            return Some(Vec::new());
        }
        let mut prev: HashMap<usize, usize> = HashMap::new();
        let mut queue = VecDeque::from([outer]);
        let mut seen = HashSet::from([outer]);
        while let Some(c) = queue.pop_front() {
            for (ei, e) in self.edges.iter().enumerate() {
                if e.outer == c && seen.insert(e.inner) {
                    prev.insert(e.inner, ei);
                    if e.inner == inner {
                        let mut out = Vec::new();
                        let mut cur = inner;
                        while cur != outer {
                            let ei = prev[&cur];
                            out.push(self.edge_record(ei));
                            cur = self.edges[ei].outer;
                        }
                        out.reverse();
                        return Some(out);
                    }
                    queue.push_back(e.inner);
                }
            }
        }
        None
    }

    fn inconsistent(&self, reason: String, records: &[usize]) -> TaxonomyError {
        let mut chain = Vec::new();
        for &ri in records {
            let d = self.records[ri].describe();
            if !chain.contains(&d) {
                chain.push(d);
            }
        }
        TaxonomyError::InconsistentOracle { reason, chain }
    }

    pub fn records(&self) -> &[AssertionRecord] {
        &self.records
    }

    /// Every label mentioned by at least one assertion, sorted.
    pub fn labels(&self) -> &[LabelId] {
        &self.labels
    }

    pub fn covers(&self, label: &LabelId) -> bool {
        self.index.contains_key(label)
    }

    fn lookup(&self, l: &LabelId) -> Result<usize> {
        self.index
            .get(l)
            .map(|&i| self.class_of[i])
            .ok_or_else(|| TaxonomyError::UnknownLabel(l.to_string()))
    }

    pub fn compare(&self, a: &LabelId, b: &LabelId) -> Result<Relation> {
        let ca = self.lookup(a)?;
        let cb = self.lookup(b)?;
        if ca == cb {
            return Ok(Relation::Equal);
        }
        if self.below[cb].contains(&ca) {
            return Ok(Relation::AInsideB);
        }
        if self.below[ca].contains(&cb) {
            return Ok(Relation::BInsideA);
        }
        let up_b = self.closed_above(cb);
        for x in self.closed_above(ca) {
            for &y in &up_b {
                if self.disjoint.contains(&(x.min(y), x.max(y))) {
                    return Ok(Relation::Disjoint);
                }
            }
        }
        if self.closed_below(ca).intersection(&self.closed_below(cb)).next().is_some() {
            return Ok(Relation::Overlap);
        }
        if self.closed_world || self.default_disjoint[ca] || self.default_disjoint[cb] {
            return Ok(Relation::Disjoint);
        }
        Err(TaxonomyError::Undetermined(a.to_string(), b.to_string()))
    }

    /// `ℒ(inner) ≺ ℒ(outer)`: strict containment.
    pub fn strictly_inside(&self, inner: &LabelId, outer: &LabelId) -> Result<bool> {
        let ci = self.lookup(inner)?;
        let co = self.lookup(outer)?;
        Ok(self.below[co].contains(&ci))
    }

    pub fn equal(&self, a: &LabelId, b: &LabelId) -> Result<bool> {
        Ok(self.lookup(a)? == self.lookup(b)?)
    }

    /// Unions asserted for `label` (or any label equal to it), each as its list of parts.
    pub fn unions_of(&self, label: &LabelId) -> Result<Vec<Vec<LabelId>>> {
        let c = self.lookup(label)?;
        let mut out = Vec::new();
        for (i, _) in self.labels.iter().enumerate().filter(|&(i, _)| self.class_of[i] == c) {
            if let Some(us) = self.unions.get(&i) {
                for (_, parts) in us {
                    out.push(parts.iter().map(|&p| self.labels[p].clone()).collect());
                }
            }
        }
        Ok(out)
    }
}

fn parse_assertion(body: &str) -> std::result::Result<Assertion, String> {
    let mut words = body.split_whitespace();
    let keyword = words.next().unwrap_or_default();
    let rest: Vec<&str> = words.collect();
    let label = |s: &str| s.parse::<LabelId>().map_err(|e| e.to_string());
    let pair = |rest: &[&str]| -> std::result::Result<(LabelId, LabelId), String> {
        match rest {
            [a, b] => Ok((label(a)?, label(b)?)),
            _ => Err(format!("{keyword} takes exactly two labels")),
        }
    };
    match keyword {
        "SUBSUMES" => pair(&rest).map(|(a, b)| Assertion::Subsumes(a, b)),
        "EQUAL" => pair(&rest).map(|(a, b)| Assertion::Equal(a, b)),
        "DISJOINT" => pair(&rest).map(|(a, b)| Assertion::Disjoint(a, b)),
        "DISJOINT_DEFAULT" => match rest.as_slice() {
            ["*"] => Ok(Assertion::DisjointDefaultAll),
            [a] => Ok(Assertion::DisjointDefault(label(a)?)),
            _ => Err("DISJOINT_DEFAULT takes one label or `*`".into()),
        },
        "EQUALS_UNION" => {
            if rest.len() < 3 || rest[1] != "=" {
                return Err("expected `EQUALS_UNION a = b1 + b2 ...`".into());
            }
            let whole = label(rest[0])?;
            let mut parts = Vec::new();
            for (i, tok) in rest[2..].iter().enumerate() {
                if i % 2 == 1 {
                    if *tok != "+" {
                        return Err(format!("expected `+`, found `{tok}`"));
                    }
                } else {
                    parts.push(label(tok)?);
                }
            }
            if rest.len().is_multiple_of(2) {
                return Err("dangling `+` in union".into());
            }
            Ok(Assertion::EqualsUnion(whole, parts))
        }
        other => Err(format!("unknown assertion `{other}`")),
    }
}

/// Returns the edge indices of one cycle, if any.
fn find_cycle(adj: &[Vec<(usize, usize)>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let n = adj.len();
    let mut mark = vec![Mark::New; n];
    for start in 0..n {
        if mark[start] != Mark::New {
            continue;
        }
        // (node, next adjacency position, edge used to enter)
        let mut stack: Vec<(usize, usize, Option<usize>)> = vec![(start, 0, None)];
        mark[start] = Mark::Active;
        while let Some(top) = stack.last_mut() {
            let (node, pos) = (top.0, top.1);
            if pos < adj[node].len() {
                top.1 += 1;
                let (next, ei) = adj[node][pos];
                match mark[next] {
                    Mark::New => {
                        mark[next] = Mark::Active;
                        stack.push((next, 0, Some(ei)));
                    }
                    Mark::Active => {
                        let at = stack.iter().position(|f| f.0 == next).expect("active node on stack");
                        let mut cycle: Vec<usize> = stack[at + 1..].iter().filter_map(|f| f.2).collect();
                        cycle.push(ei);
                        return Some(cycle);
                    }
                    Mark::Done => {}
                }
            } else {
                mark[node] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

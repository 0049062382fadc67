//! Graphs over the rose: labeled directed graphs, the circle family spelling the
//! relator, edge partitions and legal quotients.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::words::{Letter, ReducedWord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("relator is not cyclically reduced")]
    NotCyclicallyReduced,
    #[error("need at least one copy")]
    NoCopies,
    #[error("edge {0} out of range")]
    EdgeOutOfRange(usize),
    #[error("edge {0} appears in more than one class")]
    DuplicateEdge(usize),
    #[error("edge {0} is already glued")]
    AlreadyGlued(usize),
    #[error("class of size {size} (allowed: 1 or {glue_degree})")]
    BadClassSize { size: usize, glue_degree: usize },
    #[error("inconsistent labels in class containing edge {edge}")]
    InconsistentLabels { edge: usize },
    #[error("illegal quotient: two half-edges labeled {label} depart vertex {vertex}")]
    IllegalQuotient { vertex: usize, label: Letter },
    #[error("malformed graph JSON: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum End {
    Tail,
    Head,
}

impl End {
    pub fn other(self) -> End {
        match self {
            End::Tail => End::Head,
            End::Head => End::Tail,
        }
    }
}

/// One end of an edge, viewed from the vertex it is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HalfEdge {
    pub edge: usize,
    pub end: End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub tail: usize,
    pub head: usize,
    pub label: Letter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FoldViolation {
    pub vertex: usize,
    pub label: Letter,
}

/// A finite directed graph with edges labeled by letters of the free group.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledGraph {
    pub num_vertices: usize,
    pub edges: Vec<GraphEdge>,
}

impl LabeledGraph {
    pub fn new(num_vertices: usize) -> LabeledGraph {
        LabeledGraph {
            num_vertices,
            edges: Vec::new(),
        }
    }

    pub fn add_edge(&mut self, tail: usize, head: usize, label: Letter) -> usize {
        assert!(tail < self.num_vertices && head < self.num_vertices);
        self.edges.push(GraphEdge { tail, head, label });
        self.edges.len() - 1
    }

    pub fn vertex_of(&self, h: HalfEdge) -> usize {
        let e = &self.edges[h.edge];
        match h.end {
            End::Tail => e.tail,
            End::Head => e.head,
        }
    }

    /// Label read when leaving the vertex of `h` along its edge.
    pub fn departing_label(&self, h: HalfEdge) -> Letter {
        let l = self.edges[h.edge].label;
        match h.end {
            End::Tail => l,
            End::Head => l.inv(),
        }
    }

    /// Half-edges incident to each vertex, in edge order.
    pub fn incidence(&self) -> Vec<Vec<HalfEdge>> {
        let mut inc = vec![Vec::new(); self.num_vertices];
        for (i, e) in self.edges.iter().enumerate() {
            inc[e.tail].push(HalfEdge {
                edge: i,
                end: End::Tail,
            });
            inc[e.head].push(HalfEdge {
                edge: i,
                end: End::Head,
            });
        }
        inc
    }

    pub fn valences(&self) -> Vec<usize> {
        let mut val = vec![0; self.num_vertices];
        for e in &self.edges {
            val[e.tail] += 1;
            val[e.head] += 1;
        }
        val
    }

    /// The first vertex (then label) at which two half-edges depart with the same label.
    pub fn immersion_violation(&self) -> Option<FoldViolation> {
        let mut seen: HashSet<(usize, Letter)> = HashSet::new();
        let mut worst: Option<FoldViolation> = None;
        for i in 0..self.edges.len() {
            for end in [End::Tail, End::Head] {
                let h = HalfEdge { edge: i, end };
                let key = (self.vertex_of(h), self.departing_label(h));
                if !seen.insert(key) {
                    let cand = FoldViolation {
                        vertex: key.0,
                        label: key.1,
                    };
                    if worst.is_none_or(|w| (cand.vertex, cand.label) < (w.vertex, w.label)) {
                        worst = Some(cand);
                    }
                }
            }
        }
        worst
    }

    pub fn is_immersed(&self) -> bool {
        self.immersion_violation().is_none()
    }

    /// Number of connected components (isolated vertices count).
    pub fn component_count(&self) -> usize {
        let mut dsu = DisjointSet::new(self.num_vertices);
        for e in &self.edges {
            dsu.union(e.tail, e.head);
        }
        (0..self.num_vertices).filter(|&v| dsu.find(v) == v).count()
    }

    pub fn to_json(&self, partition: Option<&EdgePartition>) -> GraphJson {
        let (partition, reversed) = match partition {
            Some(p) => {
                let classes = p.canonical_classes();
                let rev = classes
                    .iter()
                    .flatten()
                    .filter(|(_, fwd)| !fwd)
                    .map(|(e, _)| *e)
                    .collect();
                (
                    Some(
                        classes
                            .iter()
                            .map(|c| c.iter().map(|(e, _)| *e).collect())
                            .collect(),
                    ),
                    Some(rev),
                )
            }
            None => (None, None),
        };
        GraphJson {
            vertices: self.num_vertices,
            edges: self
                .edges
                .iter()
                .map(|e| JsonEdge {
                    u: e.tail,
                    v: e.head,
                    label: e.label,
                })
                .collect(),
            partition,
            reversed,
        }
    }

    pub fn from_json(j: &GraphJson) -> Result<LabeledGraph, GraphError> {
        let mut g = LabeledGraph::new(j.vertices);
        for e in &j.edges {
            if e.u >= j.vertices || e.v >= j.vertices {
                return Err(GraphError::Malformed(format!(
                    "edge ({}, {}) out of range",
                    e.u, e.v
                )));
            }
            g.add_edge(e.u, e.v, e.label);
        }
        Ok(g)
    }

    /// Graphviz rendering. Edges flagged in `glued` are drawn bold red.
    pub fn to_dot(&self, name: &str, glued: Option<&[bool]>) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph {name} {{");
        let _ = writeln!(out, "  node [shape=point];");
        for (i, e) in self.edges.iter().enumerate() {
            let style = match glued.map(|g| g[i]) {
                Some(true) => ", color=red, penwidth=2",
                _ => "",
            };
            let _ = writeln!(
                out,
                "  {} -> {} [label=\"{}\"{}];",
                e.tail, e.head, e.label, style
            );
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonEdge {
    pub u: usize,
    pub v: usize,
    pub label: Letter,
}

/// Serialized graph. `partition` lists classes of L-edge ids; members listed in
/// `reversed` are glued against the orientation of their class's first member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub vertices: usize,
    pub edges: Vec<JsonEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reversed: Option<Vec<usize>>,
}

/// Union-find with path compression and union by rank.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    pub fn new(n: usize) -> DisjointSet {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Disjoint circles, each spelling the same cyclic word. Edge `c*n + i` of
/// component `c` runs from vertex `c*n + i` to vertex `c*n + (i+1) mod n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleFamily {
    pub word: ReducedWord,
    pub copies: usize,
}

impl CircleFamily {
    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    pub fn num_edges(&self) -> usize {
        self.copies * self.word.len()
    }

    pub fn edge_id(&self, component: usize, position: usize) -> usize {
        component * self.len() + position % self.len()
    }

    pub fn component(&self, edge: usize) -> usize {
        edge / self.len()
    }

    pub fn position(&self, edge: usize) -> usize {
        edge % self.len()
    }

    pub fn label(&self, edge: usize) -> Letter {
        self.word.at(self.position(edge))
    }

    pub fn tail(&self, edge: usize) -> usize {
        edge
    }

    pub fn head(&self, edge: usize) -> usize {
        self.edge_id(self.component(edge), self.position(edge) + 1)
    }

    pub fn endpoint(&self, edge: usize, end: End) -> usize {
        match end {
            End::Tail => self.tail(edge),
            End::Head => self.head(edge),
        }
    }

    /// The edge arriving at L-vertex `v` (vertex ids coincide with outgoing edge ids).
    pub fn incoming(&self, v: usize) -> usize {
        self.edge_id(self.component(v), self.position(v) + self.len() - 1)
    }

    pub fn to_graph(&self) -> LabeledGraph {
        let mut g = LabeledGraph::new(self.num_edges());
        for e in 0..self.num_edges() {
            g.add_edge(self.tail(e), self.head(e), self.label(e));
        }
        g
    }
}

pub fn circles_from_word(r: &ReducedWord, copies: usize) -> Result<CircleFamily, GraphError> {
    if !crate::words::is_reduced(r.letters(), true) || r.is_empty() {
        return Err(GraphError::NotCyclicallyReduced);
    }
    if copies == 0 {
        return Err(GraphError::NoCopies);
    }
    Ok(CircleFamily {
        word: r.clone(),
        copies,
    })
}

const FREE: u32 = u32::MAX;

/// A partition of the edges of a circle family into singleton (free) classes and
/// glued classes. Each glued member records whether it is co-oriented with the
/// first member of its class.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePartition {
    class_of: Vec<u32>,
    glued: Vec<Vec<(usize, bool)>>,
    dead: Vec<u32>,
}

impl EdgePartition {
    pub fn singletons(num_edges: usize) -> EdgePartition {
        EdgePartition {
            class_of: vec![FREE; num_edges],
            glued: Vec::new(),
            dead: Vec::new(),
        }
    }

    pub fn from_classes(
        num_edges: usize,
        classes: &[Vec<(usize, bool)>],
    ) -> Result<EdgePartition, GraphError> {
        let mut p = EdgePartition::singletons(num_edges);
        let mut seen = vec![false; num_edges];
        for class in classes {
            for &(e, _) in class {
                if e >= num_edges {
                    return Err(GraphError::EdgeOutOfRange(e));
                }
                if std::mem::replace(&mut seen[e], true) {
                    return Err(GraphError::DuplicateEdge(e));
                }
            }
            if class.len() > 1 {
                p.glue(class)?;
            }
        }
        Ok(p)
    }

    pub fn num_edges(&self) -> usize {
        self.class_of.len()
    }

    pub fn is_free(&self, e: usize) -> bool {
        self.class_of[e] == FREE
    }

    /// Members of the class containing `e`, with co-orientation flags relative to the first member.
    pub fn class_members(&self, e: usize) -> Vec<(usize, bool)> {
        match self.class_of[e] {
            FREE => vec![(e, true)],
            c => self.glued[c as usize].clone(),
        }
    }

    /// Glues currently free edges into one class.
    pub fn glue(&mut self, members: &[(usize, bool)]) -> Result<(), GraphError> {
        for &(e, _) in members {
            if e >= self.num_edges() {
                return Err(GraphError::EdgeOutOfRange(e));
            }
            if !self.is_free(e) {
                return Err(GraphError::AlreadyGlued(e));
            }
        }
        if members.len() < 2 {
            return Ok(());
        }
        let first_fwd = members[0].1;
        let normalized: Vec<(usize, bool)> =
            members.iter().map(|&(e, f)| (e, f == first_fwd)).collect();
        let id = match self.dead.pop() {
            Some(id) => {
                self.glued[id as usize] = normalized;
                id
            }
            None => {
                self.glued.push(normalized);
                (self.glued.len() - 1) as u32
            }
        };
        for &(e, _) in members {
            self.class_of[e] = id;
        }
        Ok(())
    }

    /// Dissolves the class containing `e` into singletons; returns its former members.
    pub fn unglue(&mut self, e: usize) -> Vec<(usize, bool)> {
        let c = self.class_of[e];
        if c == FREE {
            return vec![(e, true)];
        }
        let members = std::mem::take(&mut self.glued[c as usize]);
        for &(m, _) in &members {
            self.class_of[m] = FREE;
        }
        self.dead.push(c);
        members
    }

    /// Classes ordered by smallest member, members sorted, orientation relative to the smallest member.
    pub fn canonical_classes(&self) -> Vec<Vec<(usize, bool)>> {
        let mut out = Vec::new();
        for e in 0..self.num_edges() {
            let members = self.class_members(e);
            let min = members.iter().map(|m| m.0).min().unwrap_or(e);
            if min != e {
                continue;
            }
            let base = members
                .iter()
                .find(|m| m.0 == e)
                .map(|m| m.1)
                .unwrap_or(true);
            let mut ms: Vec<(usize, bool)> = members.iter().map(|&(m, f)| (m, f == base)).collect();
            ms.sort();
            out.push(ms);
        }
        out
    }

    pub fn glued_class_count(&self) -> usize {
        self.glued.iter().filter(|c| !c.is_empty()).count()
    }

    pub fn check_sizes(&self, glue_degree: usize) -> Result<(), GraphError> {
        for c in self.glued.iter().filter(|c| !c.is_empty()) {
            if c.len() != glue_degree {
                return Err(GraphError::BadClassSize {
                    size: c.len(),
                    glue_degree,
                });
            }
        }
        Ok(())
    }

    /// Grows the partition to cover `extra` additional free edges.
    pub fn extend(&mut self, extra: usize) {
        self.class_of.extend(std::iter::repeat_n(FREE, extra));
    }
}

/// The quotient of a circle family by an edge partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Quotient {
    pub graph: LabeledGraph,
    /// For each L-edge: its image edge and whether the map preserves orientation.
    pub edge_image: Vec<(usize, bool)>,
    /// For each L-vertex: its image vertex.
    pub vertex_image: Vec<usize>,
    /// For each quotient edge: whether it comes from a glued class.
    pub glued: Vec<bool>,
}

/// Collapses each class to a single edge. Fails on label mismatch or when the
/// result is not immersed; never folds.
pub fn apply_partition(l: &CircleFamily, p: &EdgePartition) -> Result<Quotient, GraphError> {
    let n_edges = l.num_edges();
    if p.num_edges() != n_edges {
        return Err(GraphError::Malformed(
            "partition size differs from edge count".into(),
        ));
    }
    let classes = p.canonical_classes();
    let mut dsu = DisjointSet::new(n_edges);
    for class in &classes {
        let (e0, f0) = class[0];
        let class_label = if f0 { l.label(e0) } else { l.label(e0).inv() };
        let class_tail = if f0 { l.tail(e0) } else { l.head(e0) };
        let class_head = if f0 { l.head(e0) } else { l.tail(e0) };
        for &(e, f) in &class[1..] {
            let lab = if f { l.label(e) } else { l.label(e).inv() };
            if lab != class_label {
                return Err(GraphError::InconsistentLabels { edge: e });
            }
            let (t, h) = if f {
                (l.tail(e), l.head(e))
            } else {
                (l.head(e), l.tail(e))
            };
            dsu.union(class_tail, t);
            dsu.union(class_head, h);
        }
    }
    let mut root_name: HashMap<usize, usize> = HashMap::new();
    let mut vertex_image = vec![0; n_edges];
    for (v, img) in vertex_image.iter_mut().enumerate() {
        let root = dsu.find(v);
        let next = root_name.len();
        *img = *root_name.entry(root).or_insert(next);
    }
    let mut graph = LabeledGraph::new(root_name.len());
    let mut edge_image = vec![(0, true); n_edges];
    let mut glued = Vec::with_capacity(classes.len());
    for class in &classes {
        let (e0, f0) = class[0];
        let (t, h) = if f0 {
            (l.tail(e0), l.head(e0))
        } else {
            (l.head(e0), l.tail(e0))
        };
        let label = if f0 { l.label(e0) } else { l.label(e0).inv() };
        let id = graph.add_edge(vertex_image[t], vertex_image[h], label);
        glued.push(class.len() > 1);
        for &(e, f) in class {
            edge_image[e] = (id, f == f0);
        }
    }
    if let Some(v) = graph.immersion_violation() {
        return Err(GraphError::IllegalQuotient {
            vertex: v.vertex,
            label: v.label,
        });
    }
    Ok(Quotient {
        graph,
        edge_image,
        vertex_image,
        glued,
    })
}

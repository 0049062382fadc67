//! Regular spines: the quotient Σ of the circle family, its fiber modules, and an
//! independent checker for the regularity conditions R1-R5.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rosegraph::{
    apply_partition, CircleFamily, EdgePartition, End, GraphError, GraphJson, HalfEdge,
    LabeledGraph,
};
use crate::words::ReducedWord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("malformed spine: {0}")]
    Malformed(String),
    #[error("transport undefined at vertex {vertex}: {reason}")]
    TransportUndefined { vertex: usize, reason: String },
    #[error("regularity conditions R1-R4 do not all hold")]
    NotRegular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Simplicial,
    Cubical,
}

impl Kind {
    /// Number of strands over each edge: d, or 2(d-1).
    pub fn glue_degree(self, d: usize) -> usize {
        match self {
            Kind::Simplicial => d,
            Kind::Cubical => 2 * (d - 1),
        }
    }

    /// Valence of a genuine vertex: d+1, or 2d.
    pub fn genuine_valence(self, d: usize) -> usize {
        match self {
            Kind::Simplicial => d + 1,
            Kind::Cubical => 2 * d,
        }
    }

    pub fn has_pairing(self) -> bool {
        self == Kind::Cubical
    }
}

impl std::str::FromStr for Kind {
    type Err = String;
    fn from_str(s: &str) -> Result<Kind, String> {
        match s {
            "simplicial" => Ok(Kind::Simplicial),
            "cubical" => Ok(Kind::Cubical),
            other => Err(format!("unknown kind {other:?} (simplicial | cubical)")),
        }
    }
}

/// The strands over one edge of Σ. `strands[i]` is the L-edge carrying module
/// index `i`; in the cubical case indices `2j` and `2j+1` are antipodal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiberModule {
    pub strands: Vec<usize>,
}

impl FiberModule {
    pub fn index_of(&self, strand: usize) -> Option<usize> {
        self.strands.iter().position(|&s| s == strand)
    }

    pub fn antipode(&self, strand: usize) -> Option<usize> {
        self.index_of(strand)
            .and_then(|i| self.strands.get(i ^ 1).copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexClass {
    Internal,
    Genuine,
    Invalid,
}

/// A candidate spine: Σ together with the morphism from L and module data.
#[derive(Debug, Clone, PartialEq)]
pub struct Spine {
    pub kind: Kind,
    pub d: usize,
    pub circles: CircleFamily,
    pub sigma: LabeledGraph,
    pub partition: EdgePartition,
    /// Per L-edge: image edge of Σ and whether orientation is preserved.
    pub edge_image: Vec<(usize, bool)>,
    /// Per L-vertex: image vertex of Σ.
    pub vertex_image: Vec<usize>,
    pub fibers: Vec<FiberModule>,
    /// Antipodal pairs of incident half-edges at genuine vertices (cubical only).
    pub vertex_modules: BTreeMap<usize, Vec<[HalfEdge; 2]>>,
}

impl Spine {
    /// Builds Σ from a partition. `fiber_order` optionally reorders the strands of
    /// the class whose smallest member is the map key.
    pub fn from_partition(
        kind: Kind,
        d: usize,
        circles: CircleFamily,
        partition: EdgePartition,
        fiber_order: &HashMap<usize, Vec<usize>>,
        vertex_modules: BTreeMap<usize, Vec<[HalfEdge; 2]>>,
    ) -> Result<Spine, SpineError> {
        let q = apply_partition(&circles, &partition)?;
        let mut fibers = vec![
            FiberModule {
                strands: Vec::new()
            };
            q.graph.edges.len()
        ];
        for (e, &(s, _)) in q.edge_image.iter().enumerate() {
            fibers[s].strands.push(e);
        }
        for fiber in fibers.iter_mut() {
            if let Some(order) = fiber.strands.first().and_then(|m| fiber_order.get(m)) {
                let mut a = order.clone();
                let mut b = fiber.strands.clone();
                a.sort();
                b.sort();
                if a != b {
                    return Err(SpineError::Malformed(
                        "fiber order is not a permutation of its class".into(),
                    ));
                }
                fiber.strands = order.clone();
            }
        }
        Ok(Spine {
            kind,
            d,
            circles,
            sigma: q.graph,
            partition,
            edge_image: q.edge_image,
            vertex_image: q.vertex_image,
            fibers,
            vertex_modules,
        })
    }

    pub fn glue_degree(&self) -> usize {
        self.kind.glue_degree(self.d)
    }

    /// Checks that the stored maps form a morphism over the rose.
    pub fn validate_structure(&self) -> Result<(), SpineError> {
        let l = &self.circles;
        if self.edge_image.len() != l.num_edges() || self.vertex_image.len() != l.num_edges() {
            return Err(SpineError::Malformed(
                "image tables have wrong length".into(),
            ));
        }
        if self.fibers.len() != self.sigma.edges.len() {
            return Err(SpineError::Malformed(
                "one fiber per edge of sigma required".into(),
            ));
        }
        for e in 0..l.num_edges() {
            let (s, fwd) = self.edge_image[e];
            let se = self
                .sigma
                .edges
                .get(s)
                .ok_or_else(|| SpineError::Malformed(format!("edge {e} maps outside sigma")))?;
            let (lab, t, h) = if fwd {
                (l.label(e), se.tail, se.head)
            } else {
                (l.label(e).inv(), se.head, se.tail)
            };
            if lab != se.label
                || self.vertex_image[l.tail(e)] != t
                || self.vertex_image[l.head(e)] != h
            {
                return Err(SpineError::Malformed(format!(
                    "L-edge {e} does not commute with labels"
                )));
            }
        }
        Ok(())
    }

    pub fn classify_vertices(&self) -> Vec<VertexClass> {
        let genuine = self.kind.genuine_valence(self.d);
        self.sigma
            .valences()
            .into_iter()
            .map(|v| match v {
                2 => VertexClass::Internal,
                v if v == genuine => VertexClass::Genuine,
                _ => VertexClass::Invalid,
            })
            .collect()
    }

    /// Σ half-edge at which the given end of an L-edge sits.
    pub fn half_edge_of(&self, l_edge: usize, end: End) -> HalfEdge {
        let (s, fwd) = self.edge_image[l_edge];
        HalfEdge {
            edge: s,
            end: if fwd { end } else { end.other() },
        }
    }

    /// The end of L-edge `strand` lying at half-edge `h` (the strand must lie over `h.edge`).
    fn strand_end_at(&self, strand: usize, h: HalfEdge) -> End {
        let (_, fwd) = self.edge_image[strand];
        if fwd {
            h.end
        } else {
            h.end.other()
        }
    }

    /// The L-edge continuing `strand` through the given end, and the end it enters by.
    fn l_neighbor(&self, strand: usize, end: End) -> (usize, End) {
        let l = &self.circles;
        match end {
            End::Head => (l.head(strand), End::Tail),
            End::Tail => (l.incoming(strand), End::Head),
        }
    }

    /// Half-edge through which `strand` leaves the vertex at half-edge `h`.
    pub fn continuation(&self, strand: usize, h: HalfEdge) -> (usize, HalfEdge) {
        let end = self.strand_end_at(strand, h);
        let (next, next_end) = self.l_neighbor(strand, end);
        (next, self.half_edge_of(next, next_end))
    }

    fn antipode_in_fiber(&self, strand: usize) -> Option<usize> {
        if !self.kind.has_pairing() {
            return None;
        }
        self.fibers[self.edge_image[strand].0].antipode(strand)
    }

    /// Transports the transversal strands over `h_in` to those over `h_out`, for
    /// the passage of `strand` (an L-edge over `h_in.edge`) through the vertex.
    pub fn transversal_transport(
        &self,
        strand: usize,
        h_in: HalfEdge,
        h_out: HalfEdge,
    ) -> Result<Vec<(usize, usize)>, SpineError> {
        let v = self.sigma.vertex_of(h_in);
        let undefined = |reason: &str| SpineError::TransportUndefined {
            vertex: v,
            reason: reason.into(),
        };
        let (out_strand, out_h) = self.continuation(strand, h_in);
        if out_h != h_out {
            return Err(undefined(
                "strand does not pass between the given half-edges",
            ));
        }
        let excluded_in = [Some(strand), self.antipode_in_fiber(strand)];
        let excluded_out = [Some(out_strand), self.antipode_in_fiber(out_strand)];
        let mut by_target: HashMap<HalfEdge, usize> = HashMap::new();
        for &t in &self.fibers[h_out.edge].strands {
            if excluded_out.contains(&Some(t)) {
                continue;
            }
            let (_, target) = self.continuation(t, h_out);
            if by_target.insert(target, t).is_some() {
                return Err(undefined("two outgoing strands continue into one edge"));
            }
        }
        let mut out = Vec::new();
        for &s in &self.fibers[h_in.edge].strands {
            if excluded_in.contains(&Some(s)) {
                continue;
            }
            let (_, target) = self.continuation(s, h_in);
            let t = by_target
                .remove(&target)
                .ok_or_else(|| undefined("no matching strand"))?;
            out.push((s, t));
        }
        if !by_target.is_empty() {
            return Err(undefined("transport is not a bijection"));
        }
        Ok(out)
    }

    /// Holonomy of the transversal bundle around component `component`, starting at
    /// position `start`. Entry `i` is the index (in fiber order, excluding the base
    /// strand and its antipode) that transversal strand `i` returns to.
    pub fn cocycle_holonomy_from(
        &self,
        component: usize,
        start: usize,
    ) -> Result<Vec<usize>, SpineError> {
        let l = &self.circles;
        let classes = self.classify_vertices();
        let base = l.edge_id(component, start);
        let excluded = [Some(base), self.antipode_in_fiber(base)];
        let transversal: Vec<usize> = self.fibers[self.edge_image[base].0]
            .strands
            .iter()
            .copied()
            .filter(|s| !excluded.contains(&Some(*s)))
            .collect();
        let mut current = transversal.clone();
        let mut a = base;
        for _ in 0..l.len() {
            let h_in = self.half_edge_of(a, End::Head);
            let b = l.head(a);
            let h_out = self.half_edge_of(b, End::Tail);
            let v = self.sigma.vertex_of(h_in);
            let step: HashMap<usize, usize> = match classes[v] {
                VertexClass::Genuine => self
                    .transversal_transport(a, h_in, h_out)?
                    .into_iter()
                    .collect(),
                _ => self.fibers[h_in.edge]
                    .strands
                    .iter()
                    .map(|&s| {
                        let (t, h) = self.continuation(s, h_in);
                        if h == h_out {
                            Ok((s, t))
                        } else {
                            Err(SpineError::TransportUndefined {
                                vertex: v,
                                reason: "broken continuation".into(),
                            })
                        }
                    })
                    .collect::<Result<_, _>>()?,
            };
            for c in current.iter_mut() {
                *c = *step.get(c).ok_or_else(|| SpineError::TransportUndefined {
                    vertex: v,
                    reason: "transversal strand lost".into(),
                })?;
            }
            a = b;
        }
        current
            .iter()
            .map(|c| {
                transversal.iter().position(|t| t == c).ok_or_else(|| {
                    SpineError::TransportUndefined {
                        vertex: self.vertex_image[base],
                        reason: "holonomy leaves the transversal".into(),
                    }
                })
            })
            .collect()
    }

    pub fn cocycle_holonomy(&self, component: usize) -> Result<Vec<usize>, SpineError> {
        self.cocycle_holonomy_from(component, 0)
    }

    /// Lengths of topological edges: maximal paths whose interior vertices are 2-valent.
    pub fn topological_edge_lengths(&self) -> Vec<usize> {
        let val = self.sigma.valences();
        let inc = self.sigma.incidence();
        let mut used = vec![false; self.sigma.edges.len()];
        let mut lengths = Vec::new();
        let walk = |start: HalfEdge, used: &mut Vec<bool>| -> usize {
            let mut h = start;
            let mut len = 0;
            loop {
                if used[h.edge] {
                    return len;
                }
                used[h.edge] = true;
                len += 1;
                let far = HalfEdge {
                    edge: h.edge,
                    end: h.end.other(),
                };
                let v = self.sigma.vertex_of(far);
                if val[v] != 2 {
                    return len;
                }
                match inc[v].iter().find(|&&x| x != far) {
                    Some(&next) => h = next,
                    None => return len,
                }
            }
        };
        for v in 0..self.sigma.num_vertices {
            if val[v] == 2 {
                continue;
            }
            for &h in &inc[v] {
                if !used[h.edge] {
                    lengths.push(walk(h, &mut used));
                }
            }
        }
        for e in 0..self.sigma.edges.len() {
            if !used[e] {
                lengths.push(walk(
                    HalfEdge {
                        edge: e,
                        end: End::Tail,
                    },
                    &mut used,
                ));
            }
        }
        lengths
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    Valence {
        vertex: usize,
        valence: usize,
    },
    ModuleInvalid {
        vertex: usize,
    },
    FiberSize {
        edge: usize,
        strands: usize,
        expected: usize,
    },
    FiberMismatch {
        edge: usize,
    },
    FiberPairing {
        edge: usize,
        vertex: usize,
    },
    PairCount {
        vertex: usize,
        first: HalfEdge,
        second: HalfEdge,
        count: usize,
    },
    Continuation {
        vertex: usize,
    },
    ModuleMap {
        vertex: usize,
        edge: usize,
    },
    Visits {
        component: usize,
        genuine_visits: usize,
    },
    Holonomy {
        component: usize,
        permutation: Vec<usize>,
    },
    Skipped {
        reason: String,
    },
}

const MAX_WITNESSES: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub pass: bool,
    pub violations: usize,
    pub witnesses: Vec<Witness>,
}

impl ConditionResult {
    fn from_witnesses(mut all: Vec<Witness>) -> ConditionResult {
        let violations = all.len();
        all.truncate(MAX_WITNESSES);
        ConditionResult {
            pass: violations == 0,
            violations,
            witnesses: all,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolonomyEntry {
    pub component: usize,
    pub identity: bool,
    pub permutation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpineReport {
    pub kind: Kind,
    pub d: usize,
    pub r1: ConditionResult,
    pub r2: ConditionResult,
    pub r3: ConditionResult,
    pub r4: ConditionResult,
    pub r5: ConditionResult,
    pub m: Option<usize>,
    pub visits: Vec<usize>,
    pub min_top_edge: Option<usize>,
    pub genuine_vertices: usize,
    pub internal_vertices: usize,
    pub holonomies: Vec<HolonomyEntry>,
}

impl SpineReport {
    pub fn local_pass(&self) -> bool {
        self.r1.pass && self.r2.pass && self.r3.pass
    }

    pub fn regular_pass(&self) -> bool {
        self.local_pass() && self.r4.pass
    }

    pub fn all_pass(&self) -> bool {
        self.regular_pass() && self.r5.pass
    }
}

fn unordered(a: HalfEdge, b: HalfEdge) -> (HalfEdge, HalfEdge) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Runs R1-R5 on `s`. R5 is evaluated only when R1-R3 hold.
pub fn check_regularity(s: &Spine, expected_m: Option<usize>) -> SpineReport {
    let l = &s.circles;
    let deg = s.glue_degree();
    let classes = s.classify_vertices();
    let val = s.sigma.valences();
    let inc = s.sigma.incidence();

    // R1: valences, and a valid antipodal module at each cubical genuine vertex.
    let mut w1 = Vec::new();
    for (v, c) in classes.iter().enumerate() {
        if *c == VertexClass::Invalid {
            w1.push(Witness::Valence {
                vertex: v,
                valence: val[v],
            });
        }
    }
    let mut antipode_at: HashMap<HalfEdge, HalfEdge> = HashMap::new();
    if s.kind.has_pairing() {
        for (v, c) in classes.iter().enumerate() {
            if *c != VertexClass::Genuine {
                continue;
            }
            let pairs = s.vertex_modules.get(&v).cloned().unwrap_or_default();
            let mut covered: Vec<HalfEdge> = pairs.iter().flatten().copied().collect();
            covered.sort();
            let mut expected = inc[v].clone();
            expected.sort();
            if covered != expected {
                w1.push(Witness::ModuleInvalid { vertex: v });
                continue;
            }
            for [a, b] in pairs {
                antipode_at.insert(a, b);
                antipode_at.insert(b, a);
            }
        }
    }

    // R2: fiber sizes counted from preimages, stored fibers match, coherent pairing.
    let mut w2 = Vec::new();
    let mut preimages = vec![Vec::new(); s.sigma.edges.len()];
    for (e, &(img, _)) in s.edge_image.iter().enumerate() {
        preimages[img].push(e);
    }
    for (edge, pre) in preimages.iter().enumerate() {
        if pre.len() != deg {
            w2.push(Witness::FiberSize {
                edge,
                strands: pre.len(),
                expected: deg,
            });
        }
        let mut stored = s.fibers[edge].strands.clone();
        stored.sort();
        if &stored != pre {
            w2.push(Witness::FiberMismatch { edge });
        }
    }
    let fibers_ok = w2.is_empty();
    if s.kind.has_pairing() && fibers_ok {
        for (v, c) in classes.iter().enumerate() {
            if *c != VertexClass::Internal || inc[v].len() != 2 {
                continue;
            }
            let h = inc[v][0];
            for &st in &s.fibers[h.edge].strands {
                let (t, th) = s.continuation(st, h);
                let anti = s.antipode_in_fiber(st).unwrap_or(st);
                let (ta, tah) = s.continuation(anti, h);
                if th != tah || s.antipode_in_fiber(t) != Some(ta) {
                    w2.push(Witness::FiberPairing {
                        edge: h.edge,
                        vertex: v,
                    });
                    break;
                }
            }
        }
    }

    // R3: pair counts at genuine vertices, continuation at internal vertices,
    // module respect in the cubical case.
    let mut w3 = Vec::new();
    let mut pair_count: HashMap<(HalfEdge, HalfEdge), usize> = HashMap::new();
    let mut degenerate_at: Vec<usize> = Vec::new();
    for x in 0..l.num_edges() {
        let a = l.incoming(x);
        let h_in = s.half_edge_of(a, End::Head);
        let h_out = s.half_edge_of(x, End::Tail);
        if h_in == h_out {
            degenerate_at.push(s.vertex_image[x]);
        } else {
            *pair_count.entry(unordered(h_in, h_out)).or_default() += 1;
        }
    }
    degenerate_at.sort();
    degenerate_at.dedup();
    for v in degenerate_at {
        w3.push(Witness::Continuation { vertex: v });
    }
    let mut l_vertices_at = vec![0usize; s.sigma.num_vertices];
    for &img in &s.vertex_image {
        l_vertices_at[img] += 1;
    }
    for (v, c) in classes.iter().enumerate() {
        match c {
            VertexClass::Genuine => {
                for i in 0..inc[v].len() {
                    for j in i + 1..inc[v].len() {
                        let (a, b) = (inc[v][i], inc[v][j]);
                        let count = pair_count.get(&unordered(a, b)).copied().unwrap_or(0);
                        let antipodal = antipode_at.get(&a) == Some(&b);
                        let expected = if antipodal { 0 } else { 1 };
                        if count != expected {
                            w3.push(Witness::PairCount {
                                vertex: v,
                                first: a,
                                second: b,
                                count,
                            });
                        }
                    }
                }
                if s.kind.has_pairing() && fibers_ok && !antipode_at.is_empty() {
                    for &h in &inc[v] {
                        let ok = s.fibers[h.edge].strands.iter().all(|&st| {
                            let anti = match s.antipode_in_fiber(st) {
                                Some(a) => a,
                                None => return false,
                            };
                            let (_, h1) = s.continuation(st, h);
                            let (_, h2) = s.continuation(anti, h);
                            antipode_at.get(&h1) == Some(&h2)
                        });
                        if !ok {
                            w3.push(Witness::ModuleMap {
                                vertex: v,
                                edge: h.edge,
                            });
                        }
                    }
                }
            }
            VertexClass::Internal => {
                if inc[v].len() == 2 {
                    let key = unordered(inc[v][0], inc[v][1]);
                    let through = pair_count.get(&key).copied().unwrap_or(0);
                    if through != l_vertices_at[v] {
                        w3.push(Witness::Continuation { vertex: v });
                    }
                }
            }
            VertexClass::Invalid => {}
        }
    }
    w3.sort_by_key(|w| match w {
        Witness::PairCount { vertex, .. }
        | Witness::Continuation { vertex }
        | Witness::ModuleMap { vertex, .. } => *vertex,
        _ => usize::MAX,
    });

    // R4: genuine visits per component.
    let mut visits = vec![0usize; l.copies];
    for x in 0..l.num_edges() {
        if classes[s.vertex_image[x]] == VertexClass::Genuine {
            visits[l.component(x)] += 1;
        }
    }
    let target = expected_m.or_else(|| visits.first().copied());
    let w4: Vec<Witness> = visits
        .iter()
        .enumerate()
        .filter(|(_, &v)| Some(v) != target)
        .map(|(component, &genuine_visits)| Witness::Visits {
            component,
            genuine_visits,
        })
        .collect();
    let m = if w4.is_empty() { target } else { None };

    let r1 = ConditionResult::from_witnesses(w1);
    let r2 = ConditionResult::from_witnesses(w2);
    let r3 = ConditionResult::from_witnesses(w3);
    let r4 = ConditionResult::from_witnesses(w4);

    // R5: holonomy around each component.
    let mut holonomies = Vec::new();
    let r5 = if r1.pass && r2.pass && r3.pass {
        let mut w5 = Vec::new();
        for component in 0..l.copies {
            match s.cocycle_holonomy(component) {
                Ok(perm) => {
                    let identity = perm.iter().enumerate().all(|(i, &p)| i == p);
                    if !identity {
                        w5.push(Witness::Holonomy {
                            component,
                            permutation: perm.clone(),
                        });
                    }
                    holonomies.push(HolonomyEntry {
                        component,
                        identity,
                        permutation: perm,
                    });
                }
                Err(e) => w5.push(Witness::Skipped {
                    reason: e.to_string(),
                }),
            }
        }
        ConditionResult::from_witnesses(w5)
    } else {
        ConditionResult {
            pass: false,
            violations: 0,
            witnesses: vec![Witness::Skipped {
                reason: "R1-R3 must hold first".into(),
            }],
        }
    };

    SpineReport {
        kind: s.kind,
        d: s.d,
        r1,
        r2,
        r3,
        r4,
        r5,
        m,
        visits,
        min_top_edge: s.topological_edge_lengths().into_iter().min(),
        genuine_vertices: classes
            .iter()
            .filter(|c| **c == VertexClass::Genuine)
            .count(),
        internal_vertices: classes
            .iter()
            .filter(|c| **c == VertexClass::Internal)
            .count(),
        holonomies,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexStats {
    /// Euler characteristic of the mapping cylinder with disks attached.
    pub chi: i64,
    /// The same, counted cell by cell.
    pub chi_naive: i64,
    /// d = 2 simplicial only: every link is a circle.
    pub surface_check: Option<bool>,
    /// d = 2 simplicial only: chi equals c(1 - m/6).
    pub formula_check: Option<bool>,
}

pub fn mapping_complex_stats(s: &Spine, report: &SpineReport) -> Result<ComplexStats, SpineError> {
    if !report.regular_pass() {
        return Err(SpineError::NotRegular);
    }
    let c = s.circles.copies as i64;
    let v_sigma = s.sigma.num_vertices as i64;
    let e_sigma = s.sigma.edges.len() as i64;
    let chi = v_sigma - e_sigma + c;
    let v_l = s.circles.num_edges() as i64;
    let e_l = s.circles.num_edges() as i64;
    let vertices = v_sigma + v_l;
    let edges = e_sigma + e_l + v_l;
    let faces = e_l + c;
    let chi_naive = vertices - edges + faces;
    let (surface_check, formula_check) = if s.kind == Kind::Simplicial && s.d == 2 {
        let m = report.m.unwrap_or(0) as i64;
        (Some(links_are_circles(s)), Some(6 * chi == c * (6 - m)))
    } else {
        (None, None)
    };
    Ok(ComplexStats {
        chi,
        chi_naive,
        surface_check,
        formula_check,
    })
}

/// Each vertex link (nodes: incident half-edges; arcs: strand passages) is one cycle.
fn links_are_circles(s: &Spine) -> bool {
    if s.fibers.iter().any(|f| f.strands.len() != 2) {
        return false;
    }
    let l = &s.circles;
    let inc = s.sigma.incidence();
    let mut arcs: Vec<Vec<(HalfEdge, HalfEdge)>> = vec![Vec::new(); s.sigma.num_vertices];
    for x in 0..l.num_edges() {
        let a = l.incoming(x);
        arcs[s.vertex_image[x]].push((s.half_edge_of(a, End::Head), s.half_edge_of(x, End::Tail)));
    }
    for v in 0..s.sigma.num_vertices {
        let nodes = &inc[v];
        let mut degree: HashMap<HalfEdge, usize> = HashMap::new();
        let mut dsu = crate::rosegraph::DisjointSet::new(nodes.len());
        let idx = |h: &HalfEdge| nodes.iter().position(|n| n == h);
        for (a, b) in &arcs[v] {
            *degree.entry(*a).or_default() += 1;
            *degree.entry(*b).or_default() += 1;
            match (idx(a), idx(b)) {
                (Some(i), Some(j)) => {
                    dsu.union(i, j);
                }
                _ => return false,
            }
        }
        if nodes.iter().any(|n| degree.get(n) != Some(&2)) {
            return false;
        }
        let root = dsu.find(0);
        if (0..nodes.len()).any(|i| dsu.find(i) != root) {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexModuleJson {
    pub vertex: usize,
    pub pairs: Vec<[HalfEdge; 2]>,
}

/// Serialized spine: enough to rebuild Σ from the relator and partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpineJson {
    pub kind: Kind,
    pub d: usize,
    pub relator: ReducedWord,
    pub copies: usize,
    pub sigma: GraphJson,
    pub fibers: Vec<Vec<usize>>,
    #[serde(default)]
    pub vertex_modules: Vec<VertexModuleJson>,
}

impl Spine {
    pub fn to_json(&self) -> SpineJson {
        SpineJson {
            kind: self.kind,
            d: self.d,
            relator: self.circles.word.clone(),
            copies: self.circles.copies,
            sigma: self.sigma.to_json(Some(&self.partition)),
            fibers: self.fibers.iter().map(|f| f.strands.clone()).collect(),
            vertex_modules: self
                .vertex_modules
                .iter()
                .map(|(&vertex, pairs)| VertexModuleJson {
                    vertex,
                    pairs: pairs.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds the spine from its serialized partition and checks that the
    /// recomputed Σ matches the stored one.
    pub fn from_json(j: &SpineJson) -> Result<Spine, SpineError> {
        let circles = crate::rosegraph::circles_from_word(&j.relator, j.copies)?;
        let n = circles.num_edges();
        let classes = j
            .sigma
            .partition
            .as_ref()
            .ok_or_else(|| SpineError::Malformed("missing partition".into()))?;
        let reversed: std::collections::HashSet<usize> = j
            .sigma
            .reversed
            .clone()
            .unwrap_or_default()
            .into_iter()
            .collect();
        let classes: Vec<Vec<(usize, bool)>> = classes
            .iter()
            .map(|c| c.iter().map(|&e| (e, !reversed.contains(&e))).collect())
            .collect();
        let partition = EdgePartition::from_classes(n, &classes)?;
        if j.fibers.iter().flatten().any(|&e| e >= n) {
            return Err(SpineError::Malformed("fiber strand outside L".into()));
        }
        let modules = j
            .vertex_modules
            .iter()
            .map(|m| (m.vertex, m.pairs.clone()))
            .collect();
        let mut spine =
            Spine::from_partition(j.kind, j.d, circles, partition, &HashMap::new(), modules)?;
        if j.fibers.len() != spine.fibers.len() {
            return Err(SpineError::Malformed(
                "one stored fiber per edge of sigma required".into(),
            ));
        }
        // Stored fibers are kept verbatim; disagreement with the partition is an
        // R2 failure reported by the checker.
        for (f, stored) in spine.fibers.iter_mut().zip(&j.fibers) {
            f.strands = stored.clone();
        }
        let stored = LabeledGraph::from_json(&j.sigma)?;
        if stored != spine.sigma {
            return Err(SpineError::Malformed(
                "stored sigma differs from the recomputed quotient".into(),
            ));
        }
        spine.validate_structure()?;
        Ok(spine)
    }
}

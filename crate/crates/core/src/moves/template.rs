//! Gluing patterns for beachballs: the hypercube layout (simplicial) and the
//! lens layout over the spherical graph of a hypercube (cubical).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Beachball, GluingState, MoveError, Placement};
use crate::rosegraph::{End, LabeledGraph};
use crate::spine::Kind;
use crate::words::Letter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemplateKind {
    Hypercube { d: usize },
    Lens { d: usize },
}

/// One half-edge at a template vertex: an end of a template edge, or the stem
/// arriving at a slot's start (`Tail`) or leaving its end (`Head`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Incidence {
    Edge(usize, End),
    Stem(usize, End),
}

/// Where one beachball goes: its start and end vertex and a path per role.
/// A path step `(edge, true)` runs from the edge's low end to its high end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub start: usize,
    pub end: usize,
    pub paths: Vec<Vec<(usize, bool)>>,
}

/// A pattern of template edges traversed by beachball strands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub kind: TemplateKind,
    pub num_vertices: usize,
    /// Each edge as (low, high).
    pub edges: Vec<(usize, usize)>,
    pub slots: Vec<Slot>,
    /// Per vertex: antipodal pairs of incidences (cubical only).
    pub antipodes: Vec<Vec<[Incidence; 2]>>,
}

/// One strand piece lying on a template edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occupant {
    pub slot: usize,
    pub path: usize,
    pub step: usize,
    pub forward: bool,
}

fn edge_end_at_start(forward: bool) -> End {
    if forward {
        End::Tail
    } else {
        End::Head
    }
}

impl Template {
    pub fn path_len(&self) -> usize {
        self.slots
            .first()
            .and_then(|s| s.paths.first())
            .map_or(0, |p| p.len())
    }

    pub fn degree(&self) -> usize {
        self.slots.first().map_or(0, |s| s.paths.len())
    }

    pub fn glue_kind(&self) -> Kind {
        match self.kind {
            TemplateKind::Hypercube { .. } => Kind::Simplicial,
            TemplateKind::Lens { .. } => Kind::Cubical,
        }
    }

    pub fn vertex_of(&self, inc: Incidence) -> usize {
        match inc {
            Incidence::Edge(e, End::Tail) => self.edges[e].0,
            Incidence::Edge(e, End::Head) => self.edges[e].1,
            Incidence::Stem(k, End::Tail) => self.slots[k].start,
            Incidence::Stem(k, End::Head) => self.slots[k].end,
        }
    }

    pub fn incidences(&self) -> Vec<Vec<Incidence>> {
        let mut out = vec![Vec::new(); self.num_vertices];
        for (e, &(lo, hi)) in self.edges.iter().enumerate() {
            out[lo].push(Incidence::Edge(e, End::Tail));
            out[hi].push(Incidence::Edge(e, End::Head));
        }
        for (k, s) in self.slots.iter().enumerate() {
            out[s.start].push(Incidence::Stem(k, End::Tail));
            out[s.end].push(Incidence::Stem(k, End::Head));
        }
        out
    }

    /// The incidences a strand uses just before and just after step `t` of its
    /// path, at the vertex where step `t` begins.
    fn through(&self, slot: usize, path: usize, t: usize) -> (Incidence, Incidence) {
        let p = &self.slots[slot].paths[path];
        let before = if t == 0 {
            Incidence::Stem(slot, End::Tail)
        } else {
            let (e, f) = p[t - 1];
            Incidence::Edge(e, edge_end_at_start(f).other())
        };
        let after = if t == p.len() {
            Incidence::Stem(slot, End::Head)
        } else {
            let (e, f) = p[t];
            Incidence::Edge(e, edge_end_at_start(f))
        };
        (before, after)
    }

    /// All passages: (vertex, incoming incidence, outgoing incidence, slot, path).
    pub fn passages(&self) -> Vec<(usize, Incidence, Incidence, usize, usize)> {
        let mut out = Vec::new();
        for (k, s) in self.slots.iter().enumerate() {
            for p in 0..s.paths.len() {
                for t in 0..=s.paths[p].len() {
                    let (a, b) = self.through(k, p, t);
                    out.push((self.vertex_of(a), a, b, k, p));
                }
            }
        }
        out
    }

    pub fn antipode(&self, v: usize, inc: Incidence) -> Option<Incidence> {
        self.antipodes.get(v)?.iter().find_map(|[a, b]| {
            if *a == inc {
                Some(*b)
            } else if *b == inc {
                Some(*a)
            } else {
                None
            }
        })
    }

    /// Occupants of each edge. Cubical templates list antipodal partners adjacently.
    pub fn occupants(&self) -> Result<Vec<Vec<Occupant>>, String> {
        let mut occ = vec![Vec::new(); self.edges.len()];
        for (k, s) in self.slots.iter().enumerate() {
            for (p, path) in s.paths.iter().enumerate() {
                for (t, &(e, f)) in path.iter().enumerate() {
                    occ[e].push(Occupant {
                        slot: k,
                        path: p,
                        step: t,
                        forward: f,
                    });
                }
            }
        }
        if self.antipodes.is_empty() {
            return Ok(occ);
        }
        for (e, list) in occ.iter_mut().enumerate() {
            let low = self.pairing_at(e, list, End::Tail)?;
            let high = self.pairing_at(e, list, End::Head)?;
            if low != high {
                return Err(format!("pairing on edge {e} differs at its two ends"));
            }
            let mut ordered = Vec::with_capacity(list.len());
            let mut used = vec![false; list.len()];
            for i in 0..list.len() {
                if !used[i] {
                    used[i] = true;
                    used[low[i]] = true;
                    ordered.push(list[i]);
                    ordered.push(list[low[i]]);
                }
            }
            *list = ordered;
        }
        Ok(occ)
    }

    /// Partner of each occupant: the one whose other incidence at the given end
    /// is antipodal to its own.
    fn pairing_at(&self, e: usize, list: &[Occupant], end: End) -> Result<Vec<usize>, String> {
        let v = if end == End::Tail {
            self.edges[e].0
        } else {
            self.edges[e].1
        };
        let other: Vec<Incidence> = list
            .iter()
            .map(|o| {
                let starts_here = (end == End::Tail) == o.forward;
                if starts_here {
                    self.through(o.slot, o.path, o.step).0
                } else {
                    self.through(o.slot, o.path, o.step + 1).1
                }
            })
            .collect();
        let mut partner = Vec::with_capacity(list.len());
        for (i, inc) in other.iter().enumerate() {
            let anti = self
                .antipode(v, *inc)
                .ok_or_else(|| format!("no antipode for {inc:?} at vertex {v}"))?;
            let hits: Vec<usize> = (0..list.len()).filter(|&j| other[j] == anti).collect();
            match hits.as_slice() {
                [j] if *j != i => partner.push(*j),
                _ => return Err(format!("occupants of edge {e} do not pair at vertex {v}")),
            }
        }
        Ok(partner)
    }

    /// Checks loads, valences and the pair conditions at every vertex.
    pub fn check_local(&self) -> Result<(), String> {
        let kind = self.glue_kind();
        let deg = self.degree();
        let occ = self.occupants()?;
        if let Some(e) = occ.iter().position(|o| o.len() != deg) {
            return Err(format!(
                "edge {e} carries {} strands, expected {deg}",
                occ[e].len()
            ));
        }
        let inc = self.incidences();
        let d = match self.kind {
            TemplateKind::Hypercube { d } | TemplateKind::Lens { d } => d,
        };
        let mut counts: HashMap<(usize, Incidence, Incidence), usize> = HashMap::new();
        for (v, a, b, _, _) in self.passages() {
            let key = if a <= b { (v, a, b) } else { (v, b, a) };
            *counts.entry(key).or_default() += 1;
        }
        for (v, list) in inc.iter().enumerate() {
            if list.len() != kind.genuine_valence(d) {
                return Err(format!("vertex {v} has valence {}", list.len()));
            }
            for (i, &a) in list.iter().enumerate() {
                for &b in &list[i + 1..] {
                    let (x, y) = if a <= b { (a, b) } else { (b, a) };
                    let c = counts.get(&(v, x, y)).copied().unwrap_or(0);
                    let antipodal = self.antipode(v, a) == Some(b);
                    let want = usize::from(!antipodal);
                    if c != want {
                        return Err(format!("vertex {v}: pair {a:?},{b:?} carries {c} strands"));
                    }
                }
            }
        }
        if kind == Kind::Cubical {
            for (k, s) in self.slots.iter().enumerate() {
                for p in (0..s.paths.len()).step_by(2) {
                    for t in [0, s.paths[p].len()] {
                        let (a0, b0) = self.through(k, p, t);
                        let (a1, b1) = self.through(k, p + 1, t);
                        let (x0, x1) = if t == 0 { (b0, b1) } else { (a0, a1) };
                        if self.antipode(self.vertex_of(x0), x0) != Some(x1) {
                            return Err(format!(
                                "slot {k}: paths {p},{} are not antipodal at step {t}",
                                p + 1
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Williams terrace of `n`: 0, 1, n-1, 2, n-2, ...
pub fn williams(n: usize) -> Vec<usize> {
    let mut s = vec![0];
    let (mut lo, mut hi) = (1, n.saturating_sub(1));
    while s.len() < n {
        if s.len() % 2 == 1 {
            s.push(lo);
            lo += 1;
        } else {
            s.push(hi);
            hi -= 1;
        }
    }
    s
}

/// Strand orderings of the d-cube: strand `j` flips coordinates
/// `(j + terrace[t]) mod d` for t = 0..d, starting at vertices of even parity
/// over `start_mask`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypercubeLayout {
    pub d: usize,
    pub terrace: Vec<usize>,
    pub start_mask: u64,
}

impl HypercubeLayout {
    pub fn new(d: usize) -> Result<HypercubeLayout, MoveError> {
        if d == 0 || d > 20 {
            return Err(MoveError::DegenerateDimension(d));
        }
        let start_mask = if d % 2 == 1 { (1u64 << d) - 1 } else { 1 };
        Ok(HypercubeLayout {
            d,
            terrace: williams(d),
            start_mask,
        })
    }

    pub fn order(&self, j: usize) -> Vec<usize> {
        self.terrace.iter().map(|&b| (j + b) % self.d).collect()
    }

    pub fn is_start(&self, w: u64) -> bool {
        (w & self.start_mask).count_ones().is_multiple_of(2)
    }

    pub fn starts(&self) -> Vec<u64> {
        (0..1u64 << self.d).filter(|&w| self.is_start(w)).collect()
    }

    fn edge_ids(&self) -> (Vec<(usize, usize)>, HashMap<(u64, usize), usize>) {
        let mut edges = Vec::new();
        let mut ids = HashMap::new();
        for u in 0..1u64 << self.d {
            for c in 0..self.d {
                if u & (1 << c) == 0 {
                    ids.insert((u, c), edges.len());
                    edges.push((u as usize, (u | 1 << c) as usize));
                }
            }
        }
        (edges, ids)
    }

    pub fn template(&self) -> Template {
        let d = self.d;
        let full = (1u64 << d) - 1;
        let (edges, ids) = self.edge_ids();
        let slots = self
            .starts()
            .into_iter()
            .map(|s| {
                let paths = (0..d)
                    .map(|j| {
                        let mut v = s;
                        self.order(j)
                            .into_iter()
                            .map(|c| {
                                let low = v & !(1 << c);
                                let forward = v & (1 << c) == 0;
                                v ^= 1 << c;
                                (ids[&(low, c)], forward)
                            })
                            .collect()
                    })
                    .collect();
                Slot {
                    start: s as usize,
                    end: (s ^ full) as usize,
                    paths,
                }
            })
            .collect();
        Template {
            kind: TemplateKind::Hypercube { d },
            num_vertices: 1 << d,
            edges,
            slots,
            antipodes: Vec::new(),
        }
    }
}

/// A pair of binary words of length d with equal first and last bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeightPair(pub Vec<u8>, pub Vec<u8>);

impl HeightPair {
    pub fn words(&self) -> [&[u8]; 2] {
        [&self.0, &self.1]
    }
}

fn periodic_prefix(pattern: &str, len: usize) -> Vec<u8> {
    pattern
        .bytes()
        .cycle()
        .take(len)
        .map(|b| b - b'0')
        .collect()
}

/// Parity bit closing the last two height pairs.
pub fn height_parity(d: usize) -> u8 {
    if d.is_multiple_of(2) || d == 3 {
        1
    } else {
        0
    }
}

/// The four height pairs of dimension `d`.
pub fn height_pairs(d: usize) -> Result<[HeightPair; 4], MoveError> {
    if d < 3 {
        return Err(MoveError::DegenerateDimension(d));
    }
    let m = d - 2;
    let x = height_parity(d);
    let wrap = |first: u8, mid: Vec<u8>, last: u8| {
        let mut w = vec![first];
        w.extend(mid);
        w.push(last);
        w
    };
    Ok([
        HeightPair(wrap(0, vec![0; m], 0), wrap(0, vec![1; m], 0)),
        HeightPair(
            wrap(0, periodic_prefix("01", m), 1),
            wrap(0, periodic_prefix("10", m), 1),
        ),
        HeightPair(
            wrap(1, periodic_prefix("1100", m), x),
            wrap(1, periodic_prefix("0011", m), x),
        ),
        HeightPair(
            wrap(1, periodic_prefix("1001", m), 1 - x),
            wrap(1, periodic_prefix("0110", m), 1 - x),
        ),
    ])
}

/// The spherical graph: two vertices over each vertex and four edges over each
/// edge. Vertex `2v + a` lies over `v`; returns the projection of edges.
pub fn spherical_graph(g: &LabeledGraph) -> (LabeledGraph, Vec<usize>) {
    let mut s = LabeledGraph::new(2 * g.num_vertices);
    let mut proj = Vec::with_capacity(4 * g.edges.len());
    for (i, e) in g.edges.iter().enumerate() {
        for a in 0..2 {
            for b in 0..2 {
                s.add_edge(2 * e.tail + a, 2 * e.head + b, e.label);
                proj.push(i);
            }
        }
    }
    (s, proj)
}

/// Lens gluing of dimension `d` over the (d-1)-cube layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LensLayout {
    pub d: usize,
    pub base: Option<HypercubeLayout>,
}

impl LensLayout {
    pub fn new(d: usize) -> Result<LensLayout, MoveError> {
        if d < 2 {
            return Err(MoveError::DegenerateDimension(d));
        }
        let base = if d == 2 {
            None
        } else {
            Some(HypercubeLayout::new(d - 1)?)
        };
        Ok(LensLayout { d, base })
    }

    pub fn template(&self) -> Result<Template, MoveError> {
        let Some(base) = &self.base else {
            return Ok(circle_lens());
        };
        let d = self.d;
        let dd = d - 1;
        let full = (1u64 << dd) - 1;
        let (down_edges, _) = base.edge_ids();
        let vid = |v: u64, h: u8| 2 * v as usize + h as usize;
        let mut edges = Vec::new();
        let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
        for &(lo, hi) in &down_edges {
            for h in 0..2u8 {
                for h2 in 0..2u8 {
                    let e = (vid(lo as u64, h), vid(hi as u64, h2));
                    ids.insert(e, edges.len());
                    edges.push(e);
                }
            }
        }
        let pairs = height_pairs(d)?;
        let mut slots = Vec::new();
        for s in base.starts() {
            for pair in &pairs {
                let [w0, w1] = pair.words();
                let mut paths = Vec::with_capacity(2 * dd);
                for j in 0..dd {
                    for w in [w0, w1] {
                        let mut v = s;
                        let mut path = Vec::with_capacity(dd);
                        for (t, c) in base.order(j).into_iter().enumerate() {
                            let u = v ^ (1 << c);
                            let (a, b) = (vid(v, w[t]), vid(u, w[t + 1]));
                            let forward = v & (1 << c) == 0;
                            let key = if forward { (a, b) } else { (b, a) };
                            path.push((ids[&key], forward));
                            v = u;
                        }
                        paths.push(path);
                    }
                }
                slots.push(Slot {
                    start: vid(s, w0[0]),
                    end: vid(s ^ full, w0[dd]),
                    paths,
                });
            }
        }
        let mut t = Template {
            kind: TemplateKind::Lens { d },
            num_vertices: 2 << dd,
            edges,
            slots,
            antipodes: Vec::new(),
        };
        let inc = t.incidences();
        let mut antipodes = vec![Vec::new(); t.num_vertices];
        for (v, list) in inc.iter().enumerate() {
            let mut by_coord: HashMap<usize, Vec<Incidence>> = HashMap::new();
            let mut stems = Vec::new();
            for &i in list {
                match i {
                    Incidence::Edge(e, _) => {
                        let (a, b) = t.edges[e];
                        let c = ((a / 2) ^ (b / 2)).trailing_zeros() as usize;
                        by_coord.entry(c).or_default().push(i);
                    }
                    Incidence::Stem(..) => stems.push(i),
                }
            }
            let mut coords: Vec<_> = by_coord.into_iter().collect();
            coords.sort();
            for (_, pair) in coords {
                if let [a, b] = pair.as_slice() {
                    antipodes[v].push([*a, *b]);
                }
            }
            if let [a, b] = stems.as_slice() {
                antipodes[v].push([*a, *b]);
            }
        }
        t.antipodes = antipodes;
        Ok(t)
    }
}

/// Local cubical R1-R3 for the lens of dimension `d >= 3`, computed from the
/// layout without materializing the template: every edge carries 2(d-1)
/// strands, every vertex has valence 2d, every non-antipodal pair of
/// incidences carries exactly one strand and antipodal pairs carry none, and
/// the paired paths of a slot leave and enter along antipodal edges.
pub fn lens_local_check(d: usize) -> Result<(), String> {
    let pairs = height_pairs(d).map_err(|e| e.to_string())?;
    check_lens_pairs(d, &pairs)
}

pub(crate) fn check_lens_pairs(d: usize, pairs: &[HeightPair]) -> Result<(), String> {
    let base = HypercubeLayout::new(d - 1).map_err(|e| e.to_string())?;
    let dd = d - 1;
    let full = (1u64 << dd) - 1;
    let val = 2 * d;
    let nv = 2usize << dd;
    let vid = |v: u64, h: u8| 2 * v as usize + h as usize;
    // Local incidence index at (v, h): 2c + h2 for the edge towards (v ^ 2^c, h2),
    // 2dd + s for the s-th stem registered at the vertex.
    let mut stems: Vec<Vec<(usize, bool)>> = vec![Vec::new(); nv];
    let starts = base.starts();
    for (si, &s) in starts.iter().enumerate() {
        for (pi, pair) in pairs.iter().enumerate() {
            let w0 = &pair.0;
            let k = si * pairs.len() + pi;
            stems[vid(s, w0[0])].push((k, true));
            stems[vid(s ^ full, w0[dd])].push((k, false));
        }
    }
    if let Some(v) = stems.iter().position(|l| l.len() != 2) {
        return Err(format!(
            "vertex {v} has valence {}",
            2 * dd + stems[v].len()
        ));
    }
    let stem_index = |v: usize, key: (usize, bool)| {
        2 * dd + stems[v].iter().position(|&x| x == key).unwrap_or(0)
    };
    let mut counts = vec![0u8; nv * val * val];
    let mut loads = vec![0u8; (1usize << dd) * dd * 4];
    let orders: Vec<Vec<usize>> = (0..dd).map(|j| base.order(j)).collect();
    for (si, &s) in starts.iter().enumerate() {
        for (pi, pair) in pairs.iter().enumerate() {
            let k = si * pairs.len() + pi;
            for (j, order) in orders.iter().enumerate() {
                let mut firsts = [0usize; 2];
                let mut lasts = [0usize; 2];
                for (wi, w) in pair.words().into_iter().enumerate() {
                    let mut v = s;
                    for t in 0..=dd {
                        let here = vid(v, w[t]);
                        let before = if t == 0 {
                            stem_index(here, (k, true))
                        } else {
                            2 * order[t - 1] + w[t - 1] as usize
                        };
                        let after = if t == dd {
                            stem_index(here, (k, false))
                        } else {
                            2 * order[t] + w[t + 1] as usize
                        };
                        if before == after {
                            return Err(format!(
                                "slot {k} path {j}: strand doubles back at vertex {here}"
                            ));
                        }
                        let (a, b) = (before.min(after), before.max(after));
                        let c = &mut counts[(here * val + a) * val + b];
                        *c = c.saturating_add(1);
                        if t < dd {
                            let bit = order[t];
                            let u = v ^ (1 << bit);
                            let (lo, h_lo, h_hi) = if v & (1 << bit) == 0 {
                                (v, w[t], w[t + 1])
                            } else {
                                (u, w[t + 1], w[t])
                            };
                            let e =
                                ((lo as usize * dd + bit) * 2 + h_lo as usize) * 2 + h_hi as usize;
                            loads[e] = loads[e].saturating_add(1);
                            v = u;
                        }
                    }
                    firsts[wi] = 2 * order[0] + w[1] as usize;
                    lasts[wi] = 2 * order[dd - 1] + w[dd - 1] as usize;
                }
                if firsts[0] / 2 != firsts[1] / 2 || firsts[0] == firsts[1] {
                    return Err(format!(
                        "slot {k}: paths of pair {j} do not leave along antipodal edges"
                    ));
                }
                if lasts[0] / 2 != lasts[1] / 2 || lasts[0] == lasts[1] {
                    return Err(format!(
                        "slot {k}: paths of pair {j} do not arrive along antipodal edges"
                    ));
                }
            }
        }
    }
    for lo in 0..1u64 << dd {
        for bit in 0..dd {
            if lo & (1 << bit) != 0 {
                continue;
            }
            for h in 0..4 {
                let e = (lo as usize * dd + bit) * 4 + h;
                if loads[e] as usize != 2 * dd {
                    return Err(format!(
                        "edge over ({lo}, {bit}) heights {h} carries {} strands",
                        loads[e]
                    ));
                }
            }
        }
    }
    for v in 0..nv {
        for a in 0..val {
            for b in a + 1..val {
                let antipodal = a / 2 == b / 2;
                let want = u8::from(!antipodal);
                let got = counts[(v * val + a) * val + b];
                if got != want {
                    return Err(format!(
                        "vertex {v}: incidences {a},{b} carry {got} strands"
                    ));
                }
            }
        }
    }
    Ok(())
}

/// The d=2 lens: two vertices joined by arcs A and B, carrying two beachballs
/// in opposite directions.
fn circle_lens() -> Template {
    let a = Incidence::Edge(0, End::Tail);
    let b = Incidence::Edge(1, End::Tail);
    let a2 = Incidence::Edge(0, End::Head);
    let b2 = Incidence::Edge(1, End::Head);
    Template {
        kind: TemplateKind::Lens { d: 2 },
        num_vertices: 2,
        edges: vec![(0, 1), (0, 1)],
        slots: vec![
            Slot {
                start: 0,
                end: 1,
                paths: vec![vec![(0, true)], vec![(1, true)]],
            },
            Slot {
                start: 1,
                end: 0,
                paths: vec![vec![(0, false)], vec![(1, false)]],
            },
        ],
        antipodes: vec![
            vec![
                [a, b],
                [Incidence::Stem(0, End::Tail), Incidence::Stem(1, End::Head)],
            ],
            vec![
                [a2, b2],
                [Incidence::Stem(0, End::Head), Incidence::Stem(1, End::Tail)],
            ],
        ],
    }
}

struct Fit<'a> {
    st: &'a GluingState,
    template: &'a Template,
    balls: &'a [Option<Beachball>],
    piece: usize,
    cubical: bool,
    edge_words: Vec<Option<Vec<Letter>>>,
}

impl Fit<'_> {
    /// Word of piece `t` of a strand segment, read along the template edge.
    fn piece_word(&self, seg: usize, t: usize, forward: bool) -> Vec<Letter> {
        let arc = self.st.segments[seg].arc;
        let w = self
            .st
            .circles
            .word
            .cyclic_subword(arc.start + t * self.piece, self.piece);
        if forward {
            w
        } else {
            w.iter().rev().map(|l| l.inv()).collect()
        }
    }

    /// Tries to place strand `seg` on path `p` of slot `k`; returns edges newly fixed.
    fn place(&mut self, k: usize, p: usize, seg: usize) -> Option<Vec<usize>> {
        let mut fixed = Vec::new();
        for (t, &(e, f)) in self.template.slots[k].paths[p].iter().enumerate() {
            let w = self.piece_word(seg, t, f);
            match &self.edge_words[e] {
                Some(x) if *x != w => {
                    for &e in &fixed {
                        self.edge_words[e] = None;
                    }
                    return None;
                }
                Some(_) => {}
                None => {
                    self.edge_words[e] = Some(w);
                    fixed.push(e);
                }
            }
        }
        Some(fixed)
    }

    fn unplace(&mut self, fixed: &[usize]) {
        for &e in fixed {
            self.edge_words[e] = None;
        }
    }

    fn solve(
        &mut self,
        k: usize,
        i: usize,
        roles: &mut [Vec<usize>],
        used: &mut [Vec<bool>],
    ) -> bool {
        let deg = self.template.degree();
        if k == self.balls.len() {
            return true;
        }
        let Some(ball) = &self.balls[k] else {
            return self.solve(k + 1, 0, roles, used);
        };
        if i == deg {
            return self.solve(k + 1, 0, roles, used);
        }
        let step = if self.cubical { 2 } else { 1 };
        for p in (0..deg).step_by(step) {
            for flip in 0..step {
                let (p0, p1) = (p + flip, p + 1 - flip);
                if used[k][p0] {
                    continue;
                }
                let Some(f0) = self.place(k, p0, ball.strands[i]) else {
                    continue;
                };
                let f1 = if self.cubical {
                    match self.place(k, p1, ball.strands[i + 1]) {
                        Some(f) => f,
                        None => {
                            self.unplace(&f0);
                            continue;
                        }
                    }
                } else {
                    Vec::new()
                };
                used[k][p0] = true;
                roles[k][i] = p0;
                if self.cubical {
                    used[k][p1] = true;
                    roles[k][i + 1] = p1;
                }
                if self.solve(k, i + step, roles, used) {
                    return true;
                }
                used[k][p0] = false;
                if self.cubical {
                    used[k][p1] = false;
                }
                self.unplace(&f1);
                self.unplace(&f0);
            }
        }
        false
    }
}

fn check_shape(
    st: &GluingState,
    template: &Template,
    balls: &[Option<Beachball>],
) -> Result<usize, MoveError> {
    let deg = template.degree();
    if balls.len() != template.slots.len() {
        return Err(MoveError::BadInput(format!(
            "{} beachballs for {} slots",
            balls.len(),
            template.slots.len()
        )));
    }
    if deg != st.degree() {
        return Err(MoveError::BadInput(format!(
            "template degree {deg}, state degree {}",
            st.degree()
        )));
    }
    let len = template.path_len();
    if !st.params.lambda.is_multiple_of(len) {
        return Err(MoveError::BadInput(format!(
            "lambda {} not divisible by path length {len}",
            st.params.lambda
        )));
    }
    for b in balls.iter().flatten() {
        if b.strands.len() != deg {
            return Err(MoveError::BadInput("beachball of wrong degree".into()));
        }
        for &s in &b.strands {
            if st.segments[s].arc.len != st.params.lambda || !st.is_free_segment(s) {
                return Err(MoveError::BadInput(format!(
                    "strand segment {s} is glued or has wrong length"
                )));
            }
        }
    }
    Ok(st.params.lambda / len)
}

/// Role assignments and the resulting edge words for a partial filling of the
/// slots (`None` slots are skipped).
pub fn fit_partial(
    st: &GluingState,
    template: &Template,
    balls: &[Option<Beachball>],
) -> Option<(Vec<Vec<usize>>, Vec<Option<Vec<Letter>>>)> {
    let piece = check_shape(st, template, balls).ok()?;
    let deg = template.degree();
    let mut fit = Fit {
        st,
        template,
        balls,
        piece,
        cubical: template.glue_kind() == Kind::Cubical,
        edge_words: vec![None; template.edges.len()],
    };
    let mut roles = vec![vec![0; deg]; balls.len()];
    let mut used = vec![vec![false; deg]; balls.len()];
    if fit.solve(0, 0, &mut roles, &mut used) {
        Some((roles, fit.edge_words))
    } else {
        None
    }
}

/// Finds a role assignment (module index -> path) under which every template
/// edge reads one word. Cubical roles keep antipodal modules on antipodal paths.
pub fn fit_roles(
    st: &GluingState,
    template: &Template,
    balls: &[Beachball],
) -> Option<Vec<Vec<usize>>> {
    let opt: Vec<Option<Beachball>> = balls.iter().cloned().map(Some).collect();
    fit_partial(st, template, &opt).map(|(roles, _)| roles)
}

fn label_error(kind: TemplateKind, msg: String) -> MoveError {
    match kind {
        TemplateKind::Hypercube { .. } => MoveError::HypercubeLabelsIllegal(msg),
        TemplateKind::Lens { .. } => MoveError::LensLabelsIllegal(msg),
    }
}

/// Glues `balls[k]` into slot `k` with module `i` on path `roles[k][i]`.
pub fn glue_template(
    st: &mut GluingState,
    template: &Template,
    balls: &[Beachball],
    roles: &[Vec<usize>],
) -> Result<(), MoveError> {
    let opt: Vec<Option<Beachball>> = balls.iter().cloned().map(Some).collect();
    let piece = check_shape(st, template, &opt)?;
    let deg = template.degree();
    let occ = template
        .occupants()
        .map_err(|m| label_error(template.kind, m))?;
    let mut strand_of = vec![vec![usize::MAX; deg]; balls.len()];
    for (k, r) in roles.iter().enumerate() {
        for (i, &p) in r.iter().enumerate() {
            if p >= deg || strand_of[k][p] != usize::MAX {
                return Err(MoveError::BadInput(format!(
                    "roles of slot {k} are not a permutation"
                )));
            }
            strand_of[k][p] = balls[k].strands[i];
        }
    }
    let l = &st.circles;
    // L-edge under position `pos` of an occupant, with its orientation flag.
    let member = |o: &Occupant, pos: usize| {
        let arc = st.segments[strand_of[o.slot][o.path]].arc;
        let off = o.step * piece;
        if o.forward {
            (arc.edge(l, off + pos), true)
        } else {
            (arc.edge(l, off + piece - 1 - pos), false)
        }
    };
    let read = |o: &Occupant| -> Vec<Letter> {
        (0..piece)
            .map(|pos| {
                let (e, f) = member(o, pos);
                if f {
                    l.label(e)
                } else {
                    l.label(e).inv()
                }
            })
            .collect()
    };
    let mut words = Vec::with_capacity(occ.len());
    for (e, list) in occ.iter().enumerate() {
        let w = read(&list[0]);
        if let Some(o) = list.iter().find(|o| read(o) != w) {
            return Err(label_error(
                template.kind,
                format!("edge {e}: slot {} path {} disagrees", o.slot, o.path),
            ));
        }
        words.push(w);
    }
    let stem_word = |id: usize| st.stem(id).map(|s| st.segment_word(s.arcs[0]));
    let mut departing: HashMap<Incidence, Letter> = HashMap::new();
    for (v, list) in template.incidences().iter().enumerate() {
        let mut seen = HashMap::new();
        for &inc in list {
            let letter = match inc {
                Incidence::Edge(e, End::Tail) => words[e][0],
                Incidence::Edge(e, End::Head) => words[e][piece - 1].inv(),
                Incidence::Stem(k, End::Tail) => {
                    let w = stem_word(balls[k].from)
                        .ok_or_else(|| MoveError::BadInput("missing stem".into()))?;
                    w[w.len() - 1].inv()
                }
                Incidence::Stem(k, End::Head) => {
                    let w = stem_word(balls[k].to)
                        .ok_or_else(|| MoveError::BadInput("missing stem".into()))?;
                    w[0]
                }
            };
            if let Some(prev) = seen.insert(letter, inc) {
                return Err(label_error(
                    template.kind,
                    format!("vertex {v}: {prev:?} and {inc:?} both depart with {letter}"),
                ));
            }
            departing.insert(inc, letter);
        }
    }
    let mut classes = Vec::with_capacity(occ.len() * piece);
    for list in &occ {
        for pos in 0..piece {
            classes.push(list.iter().map(|o| member(o, pos)).collect::<Vec<_>>());
        }
    }
    // Representative (L-edge, end) of each incidence, for vertex modules.
    let rep = |inc: Incidence| -> (usize, End) {
        match inc {
            Incidence::Edge(e, end) => {
                let o = &occ[e][0];
                let pos = if end == End::Tail { 0 } else { piece - 1 };
                let (le, f) = member(o, pos);
                (le, if f { end } else { end.other() })
            }
            Incidence::Stem(k, End::Tail) => {
                let arc = st.segments[st.stem(balls[k].from).expect("stem checked").arcs[0]].arc;
                (arc.edge(l, arc.len - 1), End::Head)
            }
            Incidence::Stem(k, End::Head) => {
                let arc = st.segments[st.stem(balls[k].to).expect("stem checked").arcs[0]].arc;
                (arc.edge(l, 0), End::Tail)
            }
        }
    };
    let vertex_modules = template
        .antipodes
        .iter()
        .map(|pairs| pairs.iter().map(|[a, b]| [rep(*a), rep(*b)]).collect())
        .collect();
    for class in classes {
        st.glue_class(class)?;
    }
    st.placements.push(Placement {
        template: template.kind,
        balls: balls.to_vec(),
        roles: roles.to_vec(),
        vertex_modules,
    });
    let slots: Vec<(usize, usize)> = balls.iter().map(|b| (b.from, b.to)).collect();
    st.commit(
        match template.kind {
            TemplateKind::Hypercube { .. } => "hypercube_glue",
            TemplateKind::Lens { .. } => "lens_glue",
        },
        serde_json::json!({ "template": template.kind, "stems": slots, "roles": roles }),
    );
    Ok(())
}

/// Drapes 2^(d-1) beachballs over the d-cube.
pub fn hypercube_glue(
    st: &mut GluingState,
    layout: &HypercubeLayout,
    balls: &[Beachball],
    roles: Option<&[Vec<usize>]>,
) -> Result<(), MoveError> {
    if st.params.kind != Kind::Simplicial || st.params.d != layout.d {
        return Err(MoveError::BadInput(
            "hypercube gluing needs simplicial kind of matching dimension".into(),
        ));
    }
    let t = layout.template();
    let roles = match roles {
        Some(r) => r.to_vec(),
        None => fit_roles(st, &t, balls).ok_or_else(|| {
            MoveError::HypercubeLabelsIllegal(
                "no role assignment makes the cube edges agree".into(),
            )
        })?,
    };
    glue_template(st, &t, balls, &roles)
}

/// Glues 2^d beachballs of degree 2(d-1) along the lens over the (d-1)-cube.
pub fn lens_glue(
    st: &mut GluingState,
    layout: &LensLayout,
    balls: &[Beachball],
    roles: Option<&[Vec<usize>]>,
) -> Result<(), MoveError> {
    if st.params.kind != Kind::Cubical || st.params.d != layout.d {
        return Err(MoveError::BadInput(
            "lens gluing needs cubical kind of matching dimension".into(),
        ));
    }
    let t = layout.template()?;
    let roles = match roles {
        Some(r) => r.to_vec(),
        None => fit_roles(st, &t, balls).ok_or_else(|| {
            MoveError::LensLabelsIllegal("no role assignment makes the lens edges agree".into())
        })?,
    };
    glue_template(st, &t, balls, &roles)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terrace_starts() {
        assert_eq!(williams(5), vec![0, 1, 4, 2, 3]);
        assert_eq!(williams(2), vec![0, 1]);
    }

    #[test]
    fn hypercube_templates_are_locally_regular() {
        for d in 2..=8 {
            let t = HypercubeLayout::new(d).unwrap().template();
            assert_eq!(t.slots.len(), 1 << (d - 1));
            t.check_local().unwrap_or_else(|e| panic!("d={d}: {e}"));
        }
    }

    #[test]
    fn lens_templates_are_locally_regular() {
        for d in 2..=8 {
            let t = LensLayout::new(d).unwrap().template().unwrap();
            assert_eq!(t.slots.len(), if d == 2 { 2 } else { 1 << d }, "d={d}");
            t.check_local().unwrap_or_else(|e| panic!("d={d}: {e}"));
        }
    }

    #[test]
    fn streaming_lens_check_agrees_with_template_check() {
        for d in 3..=9 {
            assert!(lens_local_check(d).is_ok(), "d={d}");
            LensLayout::new(d)
                .unwrap()
                .template()
                .unwrap()
                .check_local()
                .unwrap();
        }
    }

    #[test]
    fn wrong_parity_breaks_the_lens() {
        // At d = 3 flipping the parity only swaps the last two pairs.
        for d in 4..=10 {
            let mut pairs = height_pairs(d).unwrap().to_vec();
            for p in &mut pairs[2..] {
                let last = d - 1;
                p.0[last] ^= 1;
                p.1[last] ^= 1;
            }
            assert!(check_lens_pairs(d, &pairs).is_err(), "d={d}");
        }
    }

    #[test]
    fn height_pairs_d3() {
        let hp = height_pairs(3).unwrap();
        let s: Vec<(String, String)> = hp
            .iter()
            .map(|p| {
                let f = |w: &[u8]| w.iter().map(|b| char::from(b'0' + b)).collect::<String>();
                (f(&p.0), f(&p.1))
            })
            .collect();
        let want = [
            ("000", "010"),
            ("001", "011"),
            ("111", "101"),
            ("110", "100"),
        ];
        for (got, want) in s.iter().zip(want) {
            assert_eq!((got.0.as_str(), got.1.as_str()), want);
        }
        assert!(matches!(
            height_pairs(2),
            Err(MoveError::DegenerateDimension(2))
        ));
    }
}

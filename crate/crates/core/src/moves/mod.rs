//! Gluing state and the local rewriting moves: covering (with elimination and
//! rolling), tear, hypercube gluing and lens gluing.

mod covering;
mod template;

pub use covering::{
    covering_move, elimination_move, latin_perms, rolling_move, tear_move, RowMode, TearSpec,
};
pub use template::{
    fit_partial, fit_roles, glue_template, height_pairs, height_parity, hypercube_glue, lens_glue,
    lens_local_check, spherical_graph, williams, HeightPair, HypercubeLayout, Incidence,
    LensLayout, Occupant, Slot, Template, TemplateKind,
};

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rosegraph::{
    apply_partition, CircleFamily, DisjointSet, EdgePartition, End, GraphError,
};
use crate::spine::Kind;
use crate::words::Letter;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MoveError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("illegal cover labels: {0}")]
    IllegalCoverLabels(String),
    #[error("collapse needs trivial cover in row {0}")]
    CollapseNeedsTrivialCover(usize),
    #[error("no covering-type labeling: {0}")]
    NoCoveringTypeLabeling(String),
    #[error("tear labels disagree: {0}")]
    TearLabelsDisagree(String),
    #[error("reservoir exhausted: {0}")]
    ReservoirExhausted(String),
    #[error("hypercube labels illegal: {0}")]
    HypercubeLabelsIllegal(String),
    #[error("lens labels illegal: {0}")]
    LensLabelsIllegal(String),
    #[error("degenerate dimension {0}")]
    DegenerateDimension(usize),
    #[error("bad move input: {0}")]
    BadInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlueParams {
    pub kind: Kind,
    pub d: usize,
    pub lambda: usize,
}

impl GlueParams {
    pub fn degree(&self) -> usize {
        self.kind.glue_degree(self.d)
    }
}

/// A run of consecutive L-edges, read forward along its component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Arc {
    pub component: usize,
    pub start: usize,
    pub len: usize,
}

impl Arc {
    pub fn edge(&self, l: &CircleFamily, t: usize) -> usize {
        l.edge_id(self.component, self.start + t)
    }

    pub fn edges(&self, l: &CircleFamily) -> Vec<usize> {
        (0..self.len).map(|t| self.edge(l, t)).collect()
    }

    pub fn word(&self, l: &CircleFamily) -> Vec<Letter> {
        l.word.cyclic_subword(self.start, self.len)
    }

    /// L-vertex at the start of the arc.
    pub fn first_vertex(&self, l: &CircleFamily) -> usize {
        self.edge(l, 0)
    }

    /// L-vertex at the end of the arc.
    pub fn last_vertex(&self, l: &CircleFamily) -> usize {
        l.head(self.edge(l, self.len - 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentRole {
    Odd,
    Even,
    Normalization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub arc: Arc,
    pub role: SegmentRole,
    pub block: Option<usize>,
}

pub type StemId = usize;

/// Glued segments: `arcs[i]` is the segment carrying module index `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stem {
    pub arcs: Vec<usize>,
}

/// A vertex of the free-strand graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VertexKey {
    /// The far end of a stem, where its strands continue.
    StemEnd(StemId),
    /// The near end of a stem, where strands arrive.
    StemStart(StemId),
    /// An L-vertex between two free segments.
    Free(usize),
}

/// Two vertices joined by 𝔡 free strands, ordered by module index at the start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Beachball {
    pub from: StemId,
    pub to: StemId,
    pub strands: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PieceKind {
    Beachball,
    Barrel,
    Bipart,
    Cover { degree: usize },
    Irregular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub kind: PieceKind,
    pub strands: Vec<usize>,
    pub starts: Vec<VertexKey>,
    pub ends: Vec<VertexKey>,
    pub remainder: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InventoryCounts {
    pub reservoir: usize,
    pub remainder_pieces: usize,
    pub remainder_strands: usize,
    pub barrels: usize,
    pub biparts: usize,
    pub other_covers: usize,
    pub irregular: usize,
    pub placements: usize,
    pub collapsed: usize,
}

/// A completed hypercube or lens gluing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub template: TemplateKind,
    pub balls: Vec<Beachball>,
    /// Per ball: module index -> strand role in its slot.
    pub roles: Vec<Vec<usize>>,
    /// Per template vertex: antipodal pairs as (L-edge, end) representatives.
    pub vertex_modules: Vec<Vec<[(usize, End); 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: usize,
    pub op: String,
    pub params: serde_json::Value,
    pub unglued: Vec<Vec<(usize, bool)>>,
    pub glued: Vec<Vec<(usize, bool)>>,
    pub stems: Vec<(StemId, Option<Stem>)>,
    pub remainder_added: Vec<usize>,
    pub remainder_cleared: Vec<usize>,
    pub inventory: InventoryCounts,
    pub digest: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct PendingDelta {
    unglued: Vec<Vec<(usize, bool)>>,
    glued: Vec<Vec<(usize, bool)>>,
    stems: Vec<(StemId, Option<Stem>)>,
    remainder_added: Vec<usize>,
    remainder_cleared: Vec<usize>,
}

/// L together with a legal partial gluing and its piece inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct GluingState {
    pub params: GlueParams,
    pub circles: CircleFamily,
    pub partition: EdgePartition,
    pub segments: Vec<Segment>,
    next_seg: Vec<usize>,
    prev_seg: Vec<usize>,
    seg_at_vertex: HashMap<usize, usize>,
    pub stems: Vec<Option<Stem>>,
    stem_of: HashMap<usize, (StemId, usize)>,
    /// Copy-subset of each component.
    pub subset_of_component: Vec<usize>,
    /// Free segments created as inter-block remainder.
    pub remainder: BTreeSet<usize>,
    pub collapsed: Vec<Vec<usize>>,
    pub placements: Vec<Placement>,
    /// Per component: change in genuine-vertex visits caused by eliminations.
    pub visit_deltas: Vec<i64>,
    /// Module order of each glued class, keyed by its smallest member.
    pub fiber_order: HashMap<usize, Vec<usize>>,
    pub trace: Vec<TraceEvent>,
    pending: PendingDelta,
}

impl GluingState {
    pub fn new(
        params: GlueParams,
        circles: CircleFamily,
        subset_of_component: Vec<usize>,
    ) -> GluingState {
        let n = circles.num_edges();
        let copies = circles.copies;
        GluingState {
            params,
            circles,
            partition: EdgePartition::singletons(n),
            segments: Vec::new(),
            next_seg: Vec::new(),
            prev_seg: Vec::new(),
            seg_at_vertex: HashMap::new(),
            stems: Vec::new(),
            stem_of: HashMap::new(),
            subset_of_component,
            remainder: BTreeSet::new(),
            collapsed: Vec::new(),
            placements: Vec::new(),
            visit_deltas: vec![0; copies],
            fiber_order: HashMap::new(),
            trace: Vec::new(),
            pending: PendingDelta::default(),
        }
    }

    pub fn degree(&self) -> usize {
        self.params.degree()
    }

    /// Installs a segment layout; segments must tile every component cyclically.
    pub fn set_layout(&mut self, segments: Vec<Segment>) -> Result<(), MoveError> {
        let l = &self.circles;
        let mut covered = vec![false; l.num_edges()];
        let mut starts: HashMap<usize, usize> = HashMap::new();
        for (i, s) in segments.iter().enumerate() {
            if s.arc.len == 0 || s.arc.component >= l.copies {
                return Err(MoveError::BadInput(format!(
                    "segment {i} is empty or out of range"
                )));
            }
            for e in s.arc.edges(l) {
                if std::mem::replace(&mut covered[e], true) {
                    return Err(MoveError::BadInput(format!("segments overlap at edge {e}")));
                }
            }
            starts.insert(s.arc.first_vertex(l), i);
        }
        if covered.iter().any(|c| !c) {
            return Err(MoveError::BadInput("segments do not cover L".into()));
        }
        let next: Vec<usize> = segments
            .iter()
            .map(|s| starts[&s.arc.last_vertex(l)])
            .collect();
        let mut prev = vec![0; segments.len()];
        for (i, &n) in next.iter().enumerate() {
            prev[n] = i;
        }
        self.segments = segments;
        self.next_seg = next;
        self.prev_seg = prev;
        self.seg_at_vertex = starts;
        Ok(())
    }

    pub fn next_segment(&self, seg: usize) -> usize {
        self.next_seg[seg]
    }

    pub fn prev_segment(&self, seg: usize) -> usize {
        self.prev_seg[seg]
    }

    pub fn segment_starting_at(&self, l_vertex: usize) -> Option<usize> {
        self.seg_at_vertex.get(&l_vertex).copied()
    }

    pub fn segment_word(&self, seg: usize) -> Vec<Letter> {
        self.segments[seg].arc.word(&self.circles)
    }

    pub fn segment_edges(&self, seg: usize) -> Vec<usize> {
        self.segments[seg].arc.edges(&self.circles)
    }

    pub fn is_free_segment(&self, seg: usize) -> bool {
        self.segment_edges(seg)
            .iter()
            .all(|&e| self.partition.is_free(e))
    }

    pub fn stem_of_segment(&self, seg: usize) -> Option<(StemId, usize)> {
        self.stem_of.get(&seg).copied()
    }

    pub fn stem(&self, id: StemId) -> Option<&Stem> {
        self.stems.get(id).and_then(|s| s.as_ref())
    }

    pub fn subset_of_segment(&self, seg: usize) -> usize {
        self.subset_of_component[self.segments[seg].arc.component]
    }

    pub(crate) fn glue_class(&mut self, members: Vec<(usize, bool)>) -> Result<(), MoveError> {
        self.partition.glue(&members)?;
        if members.len() > 1 {
            let key = members.iter().map(|m| m.0).min().expect("nonempty class");
            self.fiber_order
                .insert(key, members.iter().map(|m| m.0).collect());
        }
        self.pending.glued.push(members);
        Ok(())
    }

    pub(crate) fn unglue_edge(&mut self, e: usize) {
        let members = self.partition.unglue(e);
        if members.len() > 1 {
            if let Some(key) = members.iter().map(|m| m.0).min() {
                self.fiber_order.remove(&key);
            }
            self.pending.unglued.push(members);
        }
    }

    fn set_stem(&mut self, id: StemId, stem: Option<Stem>) {
        if let Some(old) = self.stems.get(id).and_then(|s| s.clone()) {
            for seg in &old.arcs {
                self.stem_of.remove(seg);
            }
        }
        if let Some(new) = &stem {
            for (i, &seg) in new.arcs.iter().enumerate() {
                self.stem_of.insert(seg, (id, i));
            }
        }
        if id >= self.stems.len() {
            self.stems.resize(id + 1, None);
        }
        self.stems[id] = stem.clone();
        self.pending.stems.push((id, stem));
    }

    /// Glues equal-word free segments positionally into a new stem; `segs[i]`
    /// gets module index `i`.
    pub fn glue_stem(&mut self, segs: &[usize]) -> Result<StemId, MoveError> {
        let id = self.stems.len();
        self.glue_stem_as(id, segs)?;
        Ok(id)
    }

    pub(crate) fn glue_stem_as(&mut self, id: StemId, segs: &[usize]) -> Result<(), MoveError> {
        let word = self.segment_word(segs[0]);
        for &s in segs {
            if self.segment_word(s) != word {
                return Err(MoveError::IllegalCoverLabels(format!(
                    "segment {s} differs from its stem"
                )));
            }
        }
        for t in 0..word.len() {
            let members = segs
                .iter()
                .map(|&s| (self.segments[s].arc.edge(&self.circles, t), true))
                .collect();
            self.glue_class(members)?;
        }
        self.set_stem(
            id,
            Some(Stem {
                arcs: segs.to_vec(),
            }),
        );
        Ok(())
    }

    /// Unglues a stem and forgets it; returns its segments.
    pub(crate) fn dissolve_stem(&mut self, id: StemId) -> Vec<usize> {
        let arcs = self.stem(id).map(|s| s.arcs.clone()).unwrap_or_default();
        if let Some(&first) = arcs.first() {
            for e in self.segment_edges(first) {
                self.unglue_edge(e);
            }
        }
        self.set_stem(id, None);
        arcs
    }

    /// Glues segments positionally (same length and word), with no stem bookkeeping.
    pub(crate) fn glue_segments_plain(&mut self, segs: &[usize]) -> Result<(), MoveError> {
        let len = self.segments[segs[0]].arc.len;
        for t in 0..len {
            let members = segs
                .iter()
                .map(|&s| (self.segments[s].arc.edge(&self.circles, t), true))
                .collect();
            self.glue_class(members)?;
        }
        Ok(())
    }

    pub fn mark_remainder(&mut self, seg: usize) {
        if self.remainder.insert(seg) {
            self.pending.remainder_added.push(seg);
        }
    }

    pub fn clear_remainder_flag(&mut self, seg: usize) {
        if self.remainder.remove(&seg) {
            self.pending.remainder_cleared.push(seg);
        }
    }

    /// Vertex of the free-strand graph at the start of segment `seg`.
    pub fn start_vertex(&self, seg: usize) -> VertexKey {
        let p = self.prev_seg[seg];
        if let Some((stem, _)) = self.stem_of_segment(p) {
            return VertexKey::StemEnd(stem);
        }
        VertexKey::Free(self.segments[seg].arc.first_vertex(&self.circles))
    }

    /// Vertex of the free-strand graph at the end of segment `seg`.
    pub fn end_vertex(&self, seg: usize) -> VertexKey {
        let q = self.next_seg[seg];
        if let Some((stem, _)) = self.stem_of_segment(q) {
            return VertexKey::StemStart(stem);
        }
        VertexKey::Free(self.segments[q].arc.first_vertex(&self.circles))
    }

    /// Components of the free-strand graph, classified.
    pub fn inventory(&self) -> Vec<Piece> {
        let free: Vec<usize> = (0..self.segments.len())
            .filter(|&s| self.stem_of_segment(s).is_none() && self.is_free_segment(s))
            .collect();
        let mut keys: HashMap<VertexKey, usize> = HashMap::new();
        let mut ends = Vec::with_capacity(free.len());
        for &s in &free {
            let a = self.start_vertex(s);
            let b = self.end_vertex(s);
            let n = keys.len();
            let ia = *keys.entry(a).or_insert(n);
            let n = keys.len();
            let ib = *keys.entry(b).or_insert(n);
            ends.push((a, b, ia, ib));
        }
        let mut dsu = DisjointSet::new(keys.len());
        for &(_, _, ia, ib) in &ends {
            dsu.union(ia, ib);
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> =
            std::collections::BTreeMap::new();
        for (k, &(_, _, ia, _)) in ends.iter().enumerate() {
            groups.entry(dsu.find(ia)).or_default().push(k);
        }
        let mut pieces: Vec<Piece> = groups
            .into_values()
            .map(|members| {
                let strands: Vec<usize> = members.iter().map(|&k| free[k]).collect();
                let mut starts: Vec<VertexKey> = members.iter().map(|&k| ends[k].0).collect();
                let mut finishes: Vec<VertexKey> = members.iter().map(|&k| ends[k].1).collect();
                let pairs: Vec<(VertexKey, VertexKey)> =
                    members.iter().map(|&k| (ends[k].0, ends[k].1)).collect();
                starts.sort();
                starts.dedup();
                finishes.sort();
                finishes.dedup();
                let kind = self.classify(&starts, &finishes, &pairs);
                let remainder = strands.iter().any(|s| self.remainder.contains(s));
                Piece {
                    kind,
                    strands,
                    starts,
                    ends: finishes,
                    remainder,
                }
            })
            .collect();
        pieces.sort_by_key(|p| p.strands.iter().copied().min());
        pieces
    }

    fn classify(
        &self,
        starts: &[VertexKey],
        ends: &[VertexKey],
        pairs: &[(VertexKey, VertexKey)],
    ) -> PieceKind {
        let deg = self.degree();
        let stemmed = starts.iter().all(|v| matches!(v, VertexKey::StemEnd(_)))
            && ends.iter().all(|v| matches!(v, VertexKey::StemStart(_)));
        let s = starts.len();
        if !stemmed || s != ends.len() || pairs.len() != s * deg {
            return PieceKind::Irregular;
        }
        let mut out_deg: HashMap<VertexKey, usize> = HashMap::new();
        let mut in_deg: HashMap<VertexKey, usize> = HashMap::new();
        let mut pair_count: HashMap<(VertexKey, VertexKey), usize> = HashMap::new();
        for &(a, b) in pairs {
            *out_deg.entry(a).or_default() += 1;
            *in_deg.entry(b).or_default() += 1;
            *pair_count.entry((a, b)).or_default() += 1;
        }
        if out_deg.values().chain(in_deg.values()).any(|&c| c != deg) {
            return PieceKind::Irregular;
        }
        match s {
            1 => PieceKind::Beachball,
            2 => PieceKind::Barrel,
            _ if s == deg && pair_count.len() == s * s && pair_count.values().all(|&c| c == 1) => {
                PieceKind::Bipart
            }
            _ => PieceKind::Cover { degree: s },
        }
    }

    /// Beachball pieces outside the remainder, as stem-indexed structures.
    pub fn reservoir(&self) -> Vec<Beachball> {
        self.inventory()
            .into_iter()
            .filter(|p| p.kind == PieceKind::Beachball && !p.remainder)
            .filter_map(|p| self.as_beachball(&p))
            .collect()
    }

    pub fn as_beachball(&self, p: &Piece) -> Option<Beachball> {
        let (from, to) = match (p.starts.as_slice(), p.ends.as_slice()) {
            ([VertexKey::StemEnd(a)], [VertexKey::StemStart(b)]) => (*a, *b),
            _ => return None,
        };
        let mut strands = vec![usize::MAX; self.degree()];
        for &s in &p.strands {
            let (_, idx) = self.stem_of_segment(self.prev_seg[s])?;
            *strands.get_mut(idx)? = s;
        }
        if strands.contains(&usize::MAX) {
            return None;
        }
        Some(Beachball { from, to, strands })
    }

    /// The beachball whose strands leave stem `from`, if that piece is one.
    pub fn beachball_after(&self, from: StemId) -> Option<Beachball> {
        let stem = self.stem(from)?;
        let strands: Vec<usize> = stem.arcs.iter().map(|&a| self.next_seg[a]).collect();
        if strands
            .iter()
            .any(|&s| self.stem_of_segment(s).is_some() || !self.is_free_segment(s))
        {
            return None;
        }
        let to = self.stem_of_segment(self.next_seg[strands[0]])?.0;
        if strands
            .iter()
            .any(|&s| self.stem_of_segment(self.next_seg[s]).map(|x| x.0) != Some(to))
        {
            return None;
        }
        Some(Beachball { from, to, strands })
    }

    /// The beachball whose strands arrive at stem `to`, if that piece is one.
    pub fn beachball_before(&self, to: StemId) -> Option<Beachball> {
        let stem = self.stem(to)?;
        let first = self.prev_seg[stem.arcs[0]];
        let from = self.stem_of_segment(self.prev_seg[first])?.0;
        self.beachball_after(from).filter(|b| b.to == to)
    }

    /// True when the strands of `b` are reservoir material (not remainder).
    pub fn in_reservoir(&self, b: &Beachball) -> bool {
        b.strands.iter().all(|s| !self.remainder.contains(s))
    }

    pub fn counts(&self) -> InventoryCounts {
        let mut c = InventoryCounts {
            placements: self.placements.len(),
            collapsed: self.collapsed.len(),
            ..InventoryCounts::default()
        };
        for p in self.inventory() {
            if p.remainder {
                c.remainder_pieces += 1;
                c.remainder_strands += p.strands.len();
                continue;
            }
            match p.kind {
                PieceKind::Beachball => c.reservoir += 1,
                PieceKind::Barrel => c.barrels += 1,
                PieceKind::Bipart => c.biparts += 1,
                PieceKind::Cover { .. } => c.other_covers += 1,
                PieceKind::Irregular => c.irregular += 1,
            }
        }
        c
    }

    pub fn check_legal(&self) -> Result<(), MoveError> {
        apply_partition(&self.circles, &self.partition)?;
        Ok(())
    }

    /// SHA-256 over the canonical partition and the stem table.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for class in self.partition.canonical_classes() {
            if class.len() < 2 {
                continue;
            }
            for (e, f) in class {
                h.update((e as u64).to_le_bytes());
                h.update([f as u8]);
            }
            h.update([0xff]);
        }
        for (i, s) in self.stems.iter().enumerate() {
            if let Some(s) = s {
                h.update((i as u64).to_le_bytes());
                for a in &s.arcs {
                    h.update((*a as u64).to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }

    /// Closes the current move: appends a trace event with the accumulated partition delta.
    pub fn commit(&mut self, op: &str, params: serde_json::Value) {
        let delta = std::mem::take(&mut self.pending);
        let event = TraceEvent {
            step: self.trace.len(),
            op: op.to_string(),
            params,
            unglued: delta.unglued,
            glued: delta.glued,
            stems: delta.stems,
            remainder_added: delta.remainder_added,
            remainder_cleared: delta.remainder_cleared,
            inventory: InventoryCounts::default(),
            digest: self.digest(),
        };
        self.trace.push(event);
    }

    /// Like `commit`, also recording inventory counts (a full inventory pass).
    pub fn commit_with_counts(&mut self, op: &str, params: serde_json::Value) {
        self.commit(op, params);
        let counts = self.counts();
        if let Some(last) = self.trace.last_mut() {
            last.inventory = counts;
        }
    }

    /// Discards uncommitted changes by restoring `saved` (taken before the move).
    pub fn rollback(&mut self, saved: GluingState) {
        *self = saved;
    }

    /// Re-applies trace events to a fresh state with the same layout.
    pub fn replay(base: &GluingState, events: &[TraceEvent]) -> Result<GluingState, MoveError> {
        let mut st = base.clone();
        for ev in events {
            for class in &ev.unglued {
                st.unglue_edge(class[0].0);
            }
            for class in &ev.glued {
                st.glue_class(class.clone())?;
            }
            for (id, stem) in &ev.stems {
                st.set_stem(*id, stem.clone());
            }
            for &seg in &ev.remainder_added {
                st.mark_remainder(seg);
            }
            for &seg in &ev.remainder_cleared {
                st.clear_remainder_flag(seg);
            }
            st.commit(&ev.op, ev.params.clone());
            if st.digest() != ev.digest {
                return Err(MoveError::BadInput(format!(
                    "replay diverged at step {}",
                    ev.step
                )));
            }
        }
        Ok(st)
    }

    /// Multiplies L by `factor`: component `c` of copy `t` becomes `t * copies + c`.
    pub fn replicate(&mut self, factor: usize) {
        if factor <= 1 {
            return;
        }
        let old = self.clone();
        let c = old.circles.copies;
        let n = old.circles.len();
        let shift_seg = old.segments.len();
        self.circles.copies = c * factor;
        self.partition = EdgePartition::singletons(c * factor * n);
        let mut segments = Vec::with_capacity(shift_seg * factor);
        for t in 0..factor {
            for s in &old.segments {
                let mut s2 = *s;
                s2.arc.component += t * c;
                segments.push(s2);
            }
        }
        self.subset_of_component = (0..factor)
            .flat_map(|_| old.subset_of_component.iter().copied())
            .collect();
        self.visit_deltas = (0..factor)
            .flat_map(|_| old.visit_deltas.iter().copied())
            .collect();
        self.stems.clear();
        self.stem_of.clear();
        self.set_layout(segments)
            .expect("replicated layout tiles L");
        for t in 0..factor {
            for class in old.partition.canonical_classes() {
                if class.len() > 1 {
                    let shifted: Vec<(usize, bool)> =
                        class.iter().map(|&(e, f)| (e + t * c * n, f)).collect();
                    self.partition
                        .glue(&shifted)
                        .expect("replica classes are disjoint");
                }
            }
            for (id, stem) in old.stems.iter().enumerate() {
                if let Some(stem) = stem {
                    let arcs = stem.arcs.iter().map(|&a| a + t * shift_seg).collect();
                    let new_id = t * old.stems.len() + id;
                    if new_id >= self.stems.len() {
                        self.stems.resize(new_id + 1, None);
                    }
                    self.stems[new_id] = Some(Stem { arcs });
                    for (i, &a) in self.stems[new_id].clone().unwrap().arcs.iter().enumerate() {
                        self.stem_of.insert(a, (new_id, i));
                    }
                }
            }
        }
        self.fiber_order = (0..factor)
            .flat_map(|t| {
                old.fiber_order
                    .iter()
                    .map(move |(k, v)| (k + t * c * n, v.iter().map(|e| e + t * c * n).collect()))
            })
            .collect();
        self.remainder = (0..factor)
            .flat_map(|t| old.remainder.iter().map(move |&s| s + t * shift_seg))
            .collect();
        self.placements.clear();
        self.collapsed.clear();
        self.pending = PendingDelta::default();
    }
}

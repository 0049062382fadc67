//! Length normalization, block segmentation, block matching, resolution of
//! unmatched blocks by the copies trick, and gluing of matched tuples.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{BuildParams, StageError};
use crate::moves::{Arc, GluingState, Segment, SegmentRole};
use crate::spine::Kind;
use crate::words::{rng_stream, Letter};

/// Module index carried by the circles of copy-subset `u`. Cubical subsets
/// `u` and `u + d - 1` share an antipodal pair of modules.
pub fn module_of_subset(kind: Kind, d: usize, u: usize) -> usize {
    match kind {
        Kind::Simplicial => u,
        Kind::Cubical => {
            let half = d - 1;
            if u < half {
                2 * u
            } else {
                2 * (u - half) + 1
            }
        }
    }
}

fn module_of_component(st: &GluingState, c: usize) -> usize {
    module_of_subset(st.params.kind, st.params.d, st.subset_of_component[c])
}

/// Arcs glued before segmentation so the rest of each circle has length
/// divisible by λN. `groups[g]` lists (component, arc) in module order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub groups: Vec<Vec<(usize, Arc)>>,
}

/// Finds 𝔡 positions of one subword of length λN + ρ with distinct letters
/// before and after, and assigns them to the 𝔡 subsets of every group of
/// components. A no-op when ρ = 0.
pub fn normalize_length(
    st: &GluingState,
    params: &BuildParams,
) -> Result<Normalization, StageError> {
    let n = st.circles.len();
    let block = params.lambda * params.big_n;
    let rho = n % block;
    if rho == 0 {
        return Ok(Normalization::default());
    }
    let len = block + rho;
    let deg = params.degree();
    if len >= n {
        return Err(StageError::NormalizationFailed(format!(
            "subword length {len} does not fit in n = {n}"
        )));
    }
    let word = &st.circles.word;
    let mut by_word: HashMap<Vec<Letter>, Vec<usize>> = HashMap::new();
    for p in 0..n {
        by_word
            .entry(word.cyclic_subword(p, len))
            .or_default()
            .push(p);
    }
    let mut groups: Vec<Vec<usize>> = by_word.into_values().filter(|v| v.len() >= deg).collect();
    groups.sort();
    let mut tried = 0usize;
    let mut found = None;
    'outer: for positions in &groups {
        let mut chosen: Vec<usize> = Vec::new();
        for &p in positions {
            tried += 1;
            if tried > params.retry_budget {
                break 'outer;
            }
            let before = word.at((p + n - 1) % n);
            let after = word.at((p + len) % n);
            let clash = chosen
                .iter()
                .any(|&q| word.at((q + n - 1) % n) == before || word.at((q + len) % n) == after);
            if !clash {
                chosen.push(p);
                if chosen.len() == deg {
                    found = Some(chosen);
                    break 'outer;
                }
            }
        }
    }
    let chosen = found.ok_or_else(|| {
        StageError::NormalizationFailed(format!(
            "no {deg} copies of a length-{len} subword with distinct neighbours ({tried} positions tried)"
        ))
    })?;
    let copies = st.circles.copies;
    let mut out = Normalization::default();
    for g in 0..copies / deg {
        let mut group: Vec<(usize, Arc)> = (g * deg..(g + 1) * deg)
            .map(|c| {
                let u = st.subset_of_component[c];
                (
                    c,
                    Arc {
                        component: c,
                        start: chosen[u],
                        len,
                    },
                )
            })
            .collect();
        group.sort_by_key(|&(c, _)| module_of_component(st, c));
        out.groups.push(group);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub component: usize,
    /// Position of the block among the blocks of its component.
    pub index: usize,
    /// The N segments of the block: odd segments at even offsets.
    pub segments: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockStructure {
    pub lambda: usize,
    pub big_n: usize,
    pub blocks: Vec<Block>,
    pub per_component: Vec<Vec<usize>>,
}

impl BlockStructure {
    /// The block after `b` along its component.
    pub fn successor(&self, b: usize) -> usize {
        let blk = &self.blocks[b];
        let row = &self.per_component[blk.component];
        row[(blk.index + 1) % row.len()]
    }

    /// Blocks of the replicated state: copy `t` of block `b` is `b + t * blocks`.
    fn replicate(&self, factor: usize, segs: usize, comps: usize) -> BlockStructure {
        let nb = self.blocks.len();
        let mut out = BlockStructure {
            lambda: self.lambda,
            big_n: self.big_n,
            blocks: Vec::with_capacity(nb * factor),
            per_component: Vec::with_capacity(comps * factor),
        };
        for t in 0..factor {
            for b in &self.blocks {
                out.blocks.push(Block {
                    component: b.component + t * comps,
                    index: b.index,
                    segments: b.segments.iter().map(|s| s + t * segs).collect(),
                });
            }
            for row in &self.per_component {
                out.per_component
                    .push(row.iter().map(|b| b + t * nb).collect());
            }
        }
        out
    }
}

/// Cuts every component into λ-segments grouped into blocks of N, after the
/// normalization arc when there is one, and glues the normalization groups.
pub fn segment_blocks(
    st: &mut GluingState,
    params: &BuildParams,
    norm: &Normalization,
) -> Result<BlockStructure, StageError> {
    let n = st.circles.len();
    let (lambda, big_n) = (params.lambda, params.big_n);
    let copies = st.circles.copies;
    let mut norm_arc: Vec<Option<Arc>> = vec![None; copies];
    for g in &norm.groups {
        for &(c, a) in g {
            norm_arc[c] = Some(a);
        }
    }
    let mut segments = Vec::new();
    let mut norm_seg: HashMap<usize, usize> = HashMap::new();
    let mut bs = BlockStructure {
        lambda,
        big_n,
        blocks: Vec::new(),
        per_component: vec![Vec::new(); copies],
    };
    for (c, arc) in norm_arc.iter().enumerate() {
        let (offset, free) = match arc {
            Some(a) => {
                norm_seg.insert(c, segments.len());
                segments.push(Segment {
                    arc: *a,
                    role: SegmentRole::Normalization,
                    block: None,
                });
                (a.start + a.len, n - a.len)
            }
            None => (0, n),
        };
        if free % (lambda * big_n) != 0 {
            return Err(StageError::Divisibility(format!(
                "component {c} has {free} free edges, not a multiple of lambda * N = {}",
                lambda * big_n
            )));
        }
        for index in 0..free / (lambda * big_n) {
            let id = bs.blocks.len();
            let mut segs = Vec::with_capacity(big_n);
            for t in 0..big_n {
                let start = (offset + (index * big_n + t) * lambda) % n;
                let role = if t % 2 == 0 {
                    SegmentRole::Odd
                } else {
                    SegmentRole::Even
                };
                segs.push(segments.len());
                segments.push(Segment {
                    arc: Arc {
                        component: c,
                        start,
                        len: lambda,
                    },
                    role,
                    block: Some(id),
                });
            }
            bs.blocks.push(Block {
                component: c,
                index,
                segments: segs,
            });
            bs.per_component[c].push(id);
        }
    }
    st.set_layout(segments)?;
    for g in &norm.groups {
        let segs: Vec<usize> = g.iter().map(|(c, _)| norm_seg[c]).collect();
        st.glue_stem(&segs)?;
    }
    st.commit(
        "segment_blocks",
        serde_json::json!({ "blocks": bs.blocks.len(), "normalized": norm.groups.len() }),
    );
    Ok(bs)
}

/// A partition of most blocks into 𝔡-tuples with one block per copy-subset,
/// each listed in module order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub tuples: Vec<Vec<usize>>,
    pub unmatched: Vec<usize>,
    pub unmatched_fraction: f64,
}

/// The letters of a block that the compatibility predicate compares.
#[derive(Debug, Clone)]
struct BlockLetters {
    signature: usize,
    subset: usize,
    module: usize,
    firsts: Vec<Letter>,
    lasts: Vec<Letter>,
    /// Last letter of the even segment just before the block, if it is one.
    prev_last: Option<Letter>,
}

fn block_letters(st: &GluingState, bs: &BlockStructure) -> Vec<BlockLetters> {
    let mut sig_ids: HashMap<Vec<Letter>, usize> = HashMap::new();
    bs.blocks
        .iter()
        .map(|b| {
            let mut odd = Vec::new();
            let mut firsts = Vec::new();
            let mut lasts = Vec::new();
            for (t, &s) in b.segments.iter().enumerate() {
                let w = st.segment_word(s);
                if t % 2 == 0 {
                    odd.extend(w);
                } else {
                    firsts.push(w[0]);
                    lasts.push(w[w.len() - 1]);
                }
            }
            let n = sig_ids.len();
            let signature = *sig_ids.entry(odd).or_insert(n);
            let prev = st.prev_segment(b.segments[0]);
            let prev_last = match st.segments[prev].role {
                SegmentRole::Even => st.segment_word(prev).last().copied(),
                _ => None,
            };
            BlockLetters {
                signature,
                subset: st.subset_of_component[b.component],
                module: module_of_component(st, b.component),
                firsts,
                lasts,
                prev_last,
            }
        })
        .collect()
}

fn pairwise_compatible(a: &BlockLetters, b: &BlockLetters) -> bool {
    a.signature == b.signature
        && a.firsts.iter().zip(&b.firsts).all(|(x, y)| x != y)
        && a.lasts.iter().zip(&b.lasts).all(|(x, y)| x != y)
        && !(a.prev_last.is_some() && a.prev_last == b.prev_last)
}

fn fits(letters: &[BlockLetters], tuple: &[usize], cand: usize) -> bool {
    tuple
        .iter()
        .all(|&b| pairwise_compatible(&letters[b], &letters[cand]))
}

/// Seeded greedy matching. Anchors are subset-0 blocks in shuffled order; each
/// other subset takes the first compatible block scanning cyclically from the
/// anchor's position, and matched tuples are extended along successor blocks
/// while those stay compatible.
pub fn match_blocks(st: &GluingState, bs: &BlockStructure, params: &BuildParams) -> Matching {
    let deg = params.degree();
    let letters = block_letters(st, bs);
    let nb = bs.blocks.len();
    let mut buckets: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (b, l) in letters.iter().enumerate() {
        buckets.entry((l.signature, l.subset)).or_default().push(b);
    }
    let per_comp = |b: usize| bs.per_component[bs.blocks[b].component].len().max(1);
    let mut anchors: Vec<usize> = (0..nb).filter(|&b| letters[b].subset == 0).collect();
    anchors.shuffle(&mut rng_stream(params.seed, 1));
    let mut matched = vec![false; nb];
    let mut tuples = Vec::new();
    for &anchor in &anchors {
        if matched[anchor] {
            continue;
        }
        let mut tuple = vec![anchor];
        let pos = bs.blocks[anchor].index;
        for u in 1..deg {
            let mut cands: Vec<usize> = buckets
                .get(&(letters[anchor].signature, u))
                .map(|v| v.iter().copied().filter(|&b| !matched[b]).collect())
                .unwrap_or_default();
            cands.sort_by_key(|&b| {
                let k = per_comp(b);
                (
                    (bs.blocks[b].index + k - pos % k) % k,
                    bs.blocks[b].component,
                )
            });
            match cands.into_iter().find(|&b| fits(&letters, &tuple, b)) {
                Some(b) => tuple.push(b),
                None => break,
            }
        }
        if tuple.len() < deg {
            continue;
        }
        loop {
            for &b in &tuple {
                matched[b] = true;
            }
            let mut ordered = tuple.clone();
            ordered.sort_by_key(|&b| letters[b].module);
            tuples.push(ordered);
            let next: Vec<usize> = tuple.iter().map(|&b| bs.successor(b)).collect();
            let ok = next
                .iter()
                .enumerate()
                .all(|(i, &b)| !matched[b] && fits(&letters, &next[..i], b));
            if !ok {
                break;
            }
            tuple = next;
        }
    }
    let unmatched: Vec<usize> = (0..nb).filter(|&b| !matched[b]).collect();
    let unmatched_fraction = if nb == 0 {
        0.0
    } else {
        unmatched.len() as f64 / nb as f64
    };
    Matching {
        tuples,
        unmatched,
        unmatched_fraction,
    }
}

/// Assigns copies: `t[y][x]` is the copy in which block `x` joins the group
/// that omits `y`. Each block uses every copy once and each group sees
/// distinct shifted subsets.
fn copy_assignment(subsets: &[usize], deg: usize) -> Option<Vec<Vec<usize>>> {
    let m = subsets.len();
    let mut t = vec![vec![usize::MAX; m]; m];
    let mut used_copy = vec![vec![false; deg]; m];
    let mut used_subset = vec![vec![false; deg]; m];
    let cells: Vec<(usize, usize)> = (0..m)
        .flat_map(|y| (0..m).filter(move |&x| x != y).map(move |x| (y, x)))
        .collect();
    fn go(
        i: usize,
        cells: &[(usize, usize)],
        subsets: &[usize],
        deg: usize,
        t: &mut [Vec<usize>],
        used_copy: &mut [Vec<bool>],
        used_subset: &mut [Vec<bool>],
    ) -> bool {
        let Some(&(y, x)) = cells.get(i) else {
            return true;
        };
        for c in 0..deg {
            let s = (subsets[x] + c) % deg;
            if used_copy[x][c] || used_subset[y][s] {
                continue;
            }
            used_copy[x][c] = true;
            used_subset[y][s] = true;
            t[y][x] = c;
            if go(i + 1, cells, subsets, deg, t, used_copy, used_subset) {
                return true;
            }
            used_copy[x][c] = false;
            used_subset[y][s] = false;
        }
        false
    }
    go(
        0,
        &cells,
        subsets,
        deg,
        &mut t,
        &mut used_copy,
        &mut used_subset,
    )
    .then_some(t)
}

/// Handles unmatched blocks: each joins a matched tuple into a supercompatible
/// (𝔡+1)-set, L is replaced by 𝔡 copies with subsets shifted by the copy
/// index, and each (𝔡+1)-set is reglued as 𝔡+1 groups of 𝔡 across the copies.
/// Returns the copies multiplier.
pub fn resolve_unmatched(
    st: &mut GluingState,
    bs: &mut BlockStructure,
    matching: &mut Matching,
    params: &BuildParams,
) -> Result<usize, StageError> {
    if matching.unmatched.is_empty() {
        return Ok(1);
    }
    let deg = params.degree();
    let letters = block_letters(st, bs);
    let mut taken: BTreeSet<usize> = BTreeSet::new();
    let mut sets: Vec<Vec<usize>> = Vec::new();
    let mut tries = 0usize;
    for &b in &matching.unmatched {
        let pick = matching.tuples.iter().enumerate().find(|(i, tuple)| {
            tries += 1;
            !taken.contains(i)
                && tuple
                    .iter()
                    .all(|&x| pairwise_compatible(&letters[x], &letters[b]))
        });
        let (i, tuple) = match pick {
            Some(p) if tries <= params.retry_budget => p,
            _ => {
                return Err(StageError::ResolutionFailed {
                    block: b,
                    reason: "no matched tuple forms a supercompatible set with it".into(),
                })
            }
        };
        taken.insert(i);
        let mut set = tuple.clone();
        set.push(b);
        sets.push(set);
    }
    let mut assignments = Vec::new();
    for set in &sets {
        let subsets: Vec<usize> = set
            .iter()
            .map(|&x| st.subset_of_component[bs.blocks[x].component])
            .collect();
        let t = copy_assignment(&subsets, deg).ok_or_else(|| StageError::ResolutionFailed {
            block: set[deg],
            reason: "no copy assignment separates the subsets".into(),
        })?;
        assignments.push(t);
    }
    let comps = st.circles.copies;
    let segs = st.segments.len();
    let nb = bs.blocks.len();
    st.replicate(deg);
    for t in 0..deg {
        for c in 0..comps {
            let u = &mut st.subset_of_component[t * comps + c];
            *u = (*u + t) % deg;
        }
    }
    let stems: Vec<usize> = (0..st.stems.len())
        .filter(|&id| st.stem(id).is_some())
        .collect();
    for id in stems {
        let mut arcs = st.dissolve_stem(id);
        arcs.sort_by_key(|&s| module_of_component(st, st.segments[s].arc.component));
        st.glue_stem_as(id, &arcs)?;
    }
    *bs = bs.replicate(deg, segs, comps);
    let by_module = |st: &GluingState, bs: &BlockStructure, mut tuple: Vec<usize>| {
        tuple.sort_by_key(|&b| module_of_component(st, bs.blocks[b].component));
        tuple
    };
    let mut tuples = Vec::new();
    for (i, tuple) in matching.tuples.iter().enumerate() {
        if taken.contains(&i) {
            continue;
        }
        for t in 0..deg {
            tuples.push(by_module(
                st,
                bs,
                tuple.iter().map(|b| b + t * nb).collect(),
            ));
        }
    }
    for (set, t) in sets.iter().zip(&assignments) {
        for y in 0..set.len() {
            let group: Vec<usize> = (0..set.len())
                .filter(|&x| x != y)
                .map(|x| set[x] + t[y][x] * nb)
                .collect();
            tuples.push(by_module(st, bs, group));
        }
    }
    matching.tuples = tuples;
    matching.unmatched.clear();
    st.commit(
        "resolve_unmatched",
        serde_json::json!({ "sets": sets, "multiplier": deg }),
    );
    Ok(deg)
}

/// Glues the odd segments of every tuple into stems (module order), leaving
/// N/2 - 1 beachballs per tuple; the last even segment of each block becomes
/// remainder.
pub fn glue_matched(
    st: &mut GluingState,
    bs: &BlockStructure,
    matching: &Matching,
) -> Result<usize, StageError> {
    for tuple in &matching.tuples {
        for p in (0..bs.big_n).step_by(2) {
            let segs: Vec<usize> = tuple.iter().map(|&b| bs.blocks[b].segments[p]).collect();
            st.glue_stem(&segs)?;
        }
    }
    for b in &bs.blocks {
        st.mark_remainder(b.segments[bs.big_n - 1]);
    }
    st.commit_with_counts(
        "glue_matched",
        serde_json::json!({ "tuples": matching.tuples.len() }),
    );
    Ok(matching.tuples.len())
}

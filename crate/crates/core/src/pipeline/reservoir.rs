//! Remainder clearing by tears, reservoir gluing by template search,
//! symmetrization and cocycle adjustment.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{assemble_spine, BuildParams, StageError};
use crate::moves::{
    fit_roles, glue_template, tear_move, Beachball, GluingState, HypercubeLayout, LensLayout,
    MoveError, PieceKind, StemId, TearSpec, Template, VertexKey,
};
use crate::spine::{Kind, Spine};
use crate::words::Letter;

pub fn template_for(params: &BuildParams) -> Result<Template, MoveError> {
    match params.kind {
        Kind::Simplicial => Ok(HypercubeLayout::new(params.d)?.template()),
        Kind::Cubical => LensLayout::new(params.d)?.template(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClearStats {
    /// Remainder beachballs returned to the reservoir.
    pub released: usize,
    pub tears: usize,
    /// Remainder edges outside barrels and biparts, before each tear and at the end.
    pub non_barrel_edges: Vec<usize>,
    pub reservoir_before: usize,
    pub reservoir_after: usize,
}

fn is_settled(kind: PieceKind) -> bool {
    matches!(kind, PieceKind::Barrel | PieceKind::Bipart)
}

fn stem_word(st: &GluingState, id: StemId) -> Option<Vec<Letter>> {
    st.stem(id).map(|s| st.segment_word(s.arcs[0]))
}

/// A tear at the two ends of strand `y`, with triples drawn from the reservoir.
fn find_tear(
    st: &GluingState,
    piece_strands: &[usize],
    stems_by_word: &HashMap<Vec<Letter>, Vec<StemId>>,
) -> Option<TearSpec> {
    let need = st.degree() - 1;
    let reservoir_ball = |b: Option<Beachball>| b.filter(|b| st.in_reservoir(b));
    for &y in piece_strands {
        let (VertexKey::StemEnd(v_stem), VertexKey::StemStart(v2_stem)) =
            (st.start_vertex(y), st.end_vertex(y))
        else {
            continue;
        };
        let (Some(bv), Some(bv2)) = (
            reservoir_ball(st.beachball_before(v_stem)),
            reservoir_ball(st.beachball_after(v2_stem)),
        ) else {
            continue;
        };
        let (Some(w1), Some(w2)) = (stem_word(st, v_stem), stem_word(st, v2_stem)) else {
            continue;
        };
        let mut used: BTreeSet<StemId> = [bv.from, v_stem, v2_stem, bv2.to].into_iter().collect();
        let mut triples = Vec::new();
        for &s1 in stems_by_word.get(&w1).into_iter().flatten() {
            if triples.len() == need {
                break;
            }
            let Some(a) = reservoir_ball(st.beachball_before(s1)) else {
                continue;
            };
            let Some(b) = reservoir_ball(st.beachball_after(s1)) else {
                continue;
            };
            if stem_word(st, b.to).as_ref() != Some(&w2) {
                continue;
            }
            let Some(c) = reservoir_ball(st.beachball_after(b.to)) else {
                continue;
            };
            let chain = [a.from, s1, b.to, c.to];
            if chain.iter().any(|s| used.contains(s))
                || chain.iter().collect::<BTreeSet<_>>().len() < 4
            {
                continue;
            }
            used.extend(chain);
            triples.push(a.from);
        }
        if triples.len() == need {
            return Some(TearSpec {
                v_stem,
                v2_stem,
                triples,
            });
        }
    }
    None
}

/// Releases remainder beachballs to the reservoir and tears the rest of the
/// remainder until only barrels and biparts are left. Each tear consumes
/// 3(𝔡-1) + 2 reservoir beachballs.
pub fn clear_remainder(
    st: &mut GluingState,
    params: &BuildParams,
) -> Result<ClearStats, StageError> {
    let mut stats = ClearStats {
        reservoir_before: st.counts().reservoir,
        ..ClearStats::default()
    };
    loop {
        let pieces = st.inventory();
        let mut released = 0;
        for p in pieces
            .iter()
            .filter(|p| p.remainder && p.kind == PieceKind::Beachball)
        {
            for &s in &p.strands {
                st.clear_remainder_flag(s);
            }
            released += 1;
        }
        if released > 0 {
            stats.released += released;
            st.commit(
                "release_remainder",
                serde_json::json!({ "beachballs": released }),
            );
        }
        let open: Vec<_> = pieces
            .iter()
            .filter(|p| p.remainder && p.kind != PieceKind::Beachball && !is_settled(p.kind))
            .collect();
        let edges: usize = open
            .iter()
            .flat_map(|p| &p.strands)
            .map(|&s| st.segments[s].arc.len)
            .sum();
        stats.non_barrel_edges.push(edges);
        if open.is_empty() {
            break;
        }
        if stats.tears >= params.retry_budget {
            return Err(StageError::ReservoirExhausted {
                deficit: open.len(),
                detail: format!(
                    "tear budget {} spent with {edges} non-barrel remainder edges left",
                    params.retry_budget
                ),
            });
        }
        let mut stems_by_word: HashMap<Vec<Letter>, Vec<StemId>> = HashMap::new();
        for id in 0..st.stems.len() {
            if let Some(w) = stem_word(st, id) {
                stems_by_word.entry(w).or_default().push(id);
            }
        }
        let spec = open
            .iter()
            .find_map(|p| find_tear(st, &p.strands, &stems_by_word));
        let Some(spec) = spec else {
            return Err(StageError::ReservoirExhausted {
                deficit: open.len(),
                detail: format!("no tearable vertex pair with matching triples; {edges} non-barrel remainder edges left"),
            });
        };
        tear_move(st, &spec)?;
        stats.tears += 1;
    }
    stats.reservoir_after = st.counts().reservoir;
    Ok(stats)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReservoirStats {
    pub beachballs: usize,
    /// Distinct multisets of strand words among the beachballs.
    pub label_classes: usize,
    pub placements: usize,
    pub search_steps: usize,
    pub leftover_beachballs: usize,
    pub free_edges: usize,
}

/// Module-to-path assignments a template admits: any permutation, or for
/// cubical templates antipodal module pairs onto antipodal path pairs.
fn role_list(deg: usize, cubical: bool) -> Vec<Vec<usize>> {
    fn perms(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for p in perms(n - 1) {
            for i in 0..n {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }
    if !cubical {
        let mut all = perms(deg);
        all.sort();
        return all;
    }
    let pairs = deg / 2;
    let mut out = Vec::new();
    for p in perms(pairs) {
        for flips in 0..1usize << pairs {
            let mut roles = vec![0; deg];
            for (i, &q) in p.iter().enumerate() {
                let f = (flips >> i) & 1;
                roles[2 * i] = 2 * q + f;
                roles[2 * i + 1] = 2 * q + 1 - f;
            }
            out.push(roles);
        }
    }
    out.sort();
    out
}

struct Search<'a> {
    template: &'a Template,
    /// Per ball, per module: the forward words of the pieces of its strand.
    pieces: &'a [Vec<Vec<Vec<Letter>>>],
    by_piece: &'a HashMap<(usize, Vec<Letter>), Vec<usize>>,
    roles: &'a [Vec<usize>],
    used: &'a [bool],
    steps: usize,
    budget: usize,
}

fn orient(w: &[Letter], forward: bool) -> Vec<Letter> {
    if forward {
        w.to_vec()
    } else {
        w.iter().rev().map(|l| l.inv()).collect()
    }
}

impl Search<'_> {
    /// Places ball `b` in slot `k` under `roles`; returns the edges newly fixed.
    fn place(
        &self,
        k: usize,
        b: usize,
        roles: &[usize],
        words: &mut [Option<Vec<Letter>>],
    ) -> Option<Vec<usize>> {
        let mut fixed = Vec::new();
        for (i, &p) in roles.iter().enumerate() {
            for (t, &(e, f)) in self.template.slots[k].paths[p].iter().enumerate() {
                let w = orient(&self.pieces[b][i][t], f);
                match &words[e] {
                    Some(x) if *x != w => {
                        for &e in &fixed {
                            words[e] = None;
                        }
                        return None;
                    }
                    Some(_) => {}
                    None => {
                        words[e] = Some(w);
                        fixed.push(e);
                    }
                }
            }
        }
        Some(fixed)
    }

    fn run(
        &mut self,
        assign: &mut Vec<Option<(usize, usize)>>,
        words: &mut Vec<Option<Vec<Letter>>>,
    ) -> bool {
        // The open slot with the most determined path steps, and one such step.
        let mut best: Option<(usize, usize, Option<(usize, Vec<Letter>)>)> = None;
        for k in (0..assign.len()).filter(|&k| assign[k].is_none()) {
            let mut count = 0;
            let mut cell = None;
            for path in &self.template.slots[k].paths {
                for (t, &(e, f)) in path.iter().enumerate() {
                    if let Some(w) = &words[e] {
                        count += 1;
                        cell.get_or_insert((t, orient(w, f)));
                    }
                }
            }
            if best.as_ref().is_none_or(|b| count > b.1) {
                best = Some((k, count, cell));
            }
        }
        let Some((k, _, cell)) = best else {
            return true;
        };
        let cands: Vec<usize> = match &cell {
            Some(key) => self.by_piece.get(key).cloned().unwrap_or_default(),
            None => (0..self.pieces.len()).collect(),
        };
        for c in cands {
            if self.used[c] || assign.iter().flatten().any(|&(b, _)| b == c) {
                continue;
            }
            for (r, roles) in self.roles.iter().enumerate() {
                self.steps += 1;
                if self.steps > self.budget {
                    return false;
                }
                let Some(fixed) = self.place(k, c, roles, words) else {
                    continue;
                };
                assign[k] = Some((c, r));
                if self.run(assign, words) {
                    return true;
                }
                assign[k] = None;
                for e in fixed {
                    words[e] = None;
                }
            }
        }
        false
    }
}

/// Glues the reservoir along hypercube (simplicial) or lens (cubical)
/// templates: each unused beachball seeds a search that fills the remaining
/// slots from a word index, within the retry budget.
pub fn glue_reservoir(
    st: &mut GluingState,
    params: &BuildParams,
) -> Result<ReservoirStats, StageError> {
    let template = template_for(params)?;
    let balls = st.reservoir();
    let plen = template.path_len();
    let piece = params.lambda / plen;
    let mut classes: BTreeSet<Vec<Vec<Letter>>> = BTreeSet::new();
    let mut pieces = Vec::with_capacity(balls.len());
    let mut by_piece: HashMap<(usize, Vec<Letter>), Vec<usize>> = HashMap::new();
    for (i, b) in balls.iter().enumerate() {
        let mut words: Vec<Vec<Letter>> = b.strands.iter().map(|&s| st.segment_word(s)).collect();
        let cut: Vec<Vec<Vec<Letter>>> = words
            .iter()
            .map(|w| w.chunks(piece).map(|c| c.to_vec()).collect())
            .collect();
        for strand in &cut {
            for (t, w) in strand.iter().enumerate() {
                let list = by_piece.entry((t, w.clone())).or_default();
                if list.last() != Some(&i) {
                    list.push(i);
                }
            }
        }
        pieces.push(cut);
        words.sort();
        classes.insert(words);
    }
    let roles = role_list(template.degree(), params.kind == Kind::Cubical);
    let slots = template.slots.len();
    let mut used = vec![false; balls.len()];
    let mut stats = ReservoirStats {
        beachballs: balls.len(),
        label_classes: classes.len(),
        ..Default::default()
    };
    let mut leftovers = Vec::new();
    for b0 in 0..balls.len() {
        if used[b0] {
            continue;
        }
        let mut found = None;
        for k0 in 0..slots {
            let mut search = Search {
                template: &template,
                pieces: &pieces,
                by_piece: &by_piece,
                roles: &roles,
                used: &used,
                steps: 0,
                budget: params.retry_budget,
            };
            let mut words = vec![None; template.edges.len()];
            let mut assign = vec![None; slots];
            let mut ok = false;
            for (r, rl) in roles.iter().enumerate() {
                if let Some(fixed) = search.place(k0, b0, rl, &mut words) {
                    assign[k0] = Some((b0, r));
                    if search.run(&mut assign, &mut words) {
                        ok = true;
                        break;
                    }
                    assign[k0] = None;
                    for e in fixed {
                        words[e] = None;
                    }
                }
            }
            stats.search_steps += search.steps;
            if ok {
                found = Some(assign);
                break;
            }
        }
        let Some(assign) = found else {
            leftovers.push(b0);
            continue;
        };
        let chosen: Vec<Beachball> = assign
            .iter()
            .map(|a| balls[a.expect("filled").0].clone())
            .collect();
        let chosen_roles: Vec<Vec<usize>> = assign
            .iter()
            .map(|a| roles[a.expect("filled").1].clone())
            .collect();
        glue_template(st, &template, &chosen, &chosen_roles)?;
        for (b, _) in assign.into_iter().flatten() {
            used[b] = true;
        }
        stats.placements += 1;
    }
    stats.leftover_beachballs = leftovers.len();
    stats.free_edges = (0..st.circles.num_edges())
        .filter(|&e| st.partition.is_free(e))
        .count();
    if stats.free_edges > 0 {
        let c = st.counts();
        return Err(StageError::CoverSearchFailed(format!(
            "{} free edges left: {} beachballs unplaced, {} barrels, {} biparts, {} other covers, {} irregular, {} remainder pieces",
            stats.free_edges,
            leftovers.len(),
            c.barrels,
            c.biparts,
            c.other_covers,
            c.irregular,
            c.remainder_pieces
        )));
    }
    st.commit_with_counts(
        "glue_reservoir",
        serde_json::json!({ "placements": stats.placements }),
    );
    Ok(stats)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SymmetrizeReport {
    pub visit_deltas: Vec<i64>,
    pub balanced: bool,
}

/// Reports whether collapsed rows changed the genuine-visit counts unevenly.
/// Without eliminations every component keeps its count and nothing is done.
pub fn symmetrize(st: &GluingState) -> SymmetrizeReport {
    let deltas = st.visit_deltas.clone();
    let balanced = deltas.windows(2).all(|w| w[0] == w[1]);
    SymmetrizeReport {
        visit_deltas: deltas,
        balanced,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CocycleReport {
    pub initial_nontrivial: usize,
    pub final_nontrivial: usize,
    pub swaps: usize,
    pub attempts: usize,
    /// Set when R1-R3 fail, so holonomy is undefined and no swap was tried.
    pub skipped: bool,
}

fn nontrivial_holonomies(spine: &Spine) -> usize {
    (0..spine.circles.copies)
        .filter(|&c| match spine.cocycle_holonomy(c) {
            Ok(p) => p.iter().enumerate().any(|(i, &x)| i != x),
            Err(_) => true,
        })
        .count()
}

/// Removes placement `i`, ungluing its strands.
fn unplace(st: &mut GluingState, i: usize) -> Vec<Beachball> {
    let p = st.placements.remove(i);
    for b in &p.balls {
        for &s in &b.strands {
            for e in st.segment_edges(s) {
                st.unglue_edge(e);
            }
        }
    }
    p.balls
}

/// Exchanges beachball `k1` of placement `i` with beachball `k2` of placement
/// `j` (i < j) and reglues both placements with freshly fitted roles. The
/// state is unchanged on error.
pub fn swap_beachballs(
    st: &mut GluingState,
    template: &Template,
    (i, k1): (usize, usize),
    (j, k2): (usize, usize),
) -> Result<(), MoveError> {
    if i >= j || j >= st.placements.len() {
        return Err(MoveError::BadInput(format!(
            "placements {i} and {j} cannot be swapped"
        )));
    }
    let saved = st.clone();
    let mut second = unplace(st, j);
    let mut first = unplace(st, i);
    if k1 >= first.len() || k2 >= second.len() {
        st.rollback(saved);
        return Err(MoveError::BadInput("beachball index out of range".into()));
    }
    std::mem::swap(&mut first[k1], &mut second[k2]);
    for balls in [&first, &second] {
        let glued = match fit_roles(st, template, balls) {
            Some(roles) => glue_template(st, template, balls, &roles),
            None => Err(MoveError::BadInput(
                "swapped beachballs admit no role assignment".into(),
            )),
        };
        if let Err(e) = glued.and_then(|_| st.check_legal()) {
            st.rollback(saved);
            return Err(e);
        }
    }
    // The two placements now sit at the end; restore their positions.
    let b = st.placements.pop().expect("placed");
    let a = st.placements.pop().expect("placed");
    st.placements.insert(i, a);
    st.placements.insert(j, b);
    Ok(())
}

/// Interchanges beachballs with equal label multisets between placements,
/// keeping a swap when it lowers the number of components with nontrivial
/// holonomy.
pub fn adjust_cocycles(
    st: &mut GluingState,
    params: &BuildParams,
) -> Result<CocycleReport, StageError> {
    let spine = assemble_spine(st)?;
    let report = crate::spine::check_regularity(&spine, None);
    if !(report.r1.pass && report.r2.pass && report.r3.pass) {
        return Ok(CocycleReport {
            skipped: true,
            ..Default::default()
        });
    }
    let mut current = nontrivial_holonomies(&spine);
    let mut out = CocycleReport {
        initial_nontrivial: current,
        ..Default::default()
    };
    if current == 0 {
        return Ok(out);
    }
    let template = template_for(params)?;
    let key = |st: &GluingState, b: &Beachball| {
        let mut w: Vec<Vec<Letter>> = b.strands.iter().map(|&s| st.segment_word(s)).collect();
        w.sort();
        w
    };
    let budget = params.retry_budget.min(500);
    'search: for i in 0..st.placements.len() {
        for j in i + 1..st.placements.len() {
            for k1 in 0..st.placements[i].balls.len() {
                for k2 in 0..st.placements[j].balls.len() {
                    if current == 0 {
                        break 'search;
                    }
                    let (b1, b2) = (&st.placements[i].balls[k1], &st.placements[j].balls[k2]);
                    if key(st, b1) != key(st, b2) {
                        continue;
                    }
                    if out.attempts >= budget {
                        break 'search;
                    }
                    out.attempts += 1;
                    let saved = st.clone();
                    let improved = swap_beachballs(st, &template, (i, k1), (j, k2)).is_ok()
                        && assemble_spine(st)
                            .map(|s| nontrivial_holonomies(&s))
                            .is_ok_and(|n| n < current);
                    if improved {
                        current = nontrivial_holonomies(&assemble_spine(st)?);
                        out.swaps += 1;
                    } else {
                        st.rollback(saved);
                    }
                }
            }
        }
    }
    out.final_nontrivial = current;
    if current > 0 {
        return Err(StageError::CocycleAdjustmentFailed(format!(
            "{current} components keep nontrivial holonomy after {} swaps in {} attempts",
            out.swaps, out.attempts
        )));
    }
    Ok(out)
}

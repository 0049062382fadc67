//! Covering moves: restitching rows of glued segments between consecutive
//! beachballs, with the elimination, rolling and tear specializations.

use serde::{Deserialize, Serialize};

use super::{Beachball, GluingState, MoveError, StemId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowMode {
    Cover,
    Collapse,
}

/// `p[i][c] = (c + i) mod s` for each module index `i`.
pub fn latin_perms(degree: usize, s: usize) -> Vec<Vec<usize>> {
    (0..degree)
        .map(|i| (0..s).map(|c| (c + i) % s).collect())
        .collect()
}

pub fn identity_perms(degree: usize, s: usize) -> Vec<Vec<usize>> {
    vec![(0..s).collect(); degree]
}

fn is_perm(p: &[usize], s: usize) -> bool {
    let mut seen = vec![false; s];
    p.len() == s
        && p.iter()
            .all(|&x| x < s && !std::mem::replace(&mut seen[x], true))
}

/// Stems `rows[j][c]` and beachballs `balls[j][c]` (between stem rows j and j+1)
/// of `rows_of_balls` consecutive beachballs per column.
pub(crate) fn collect_matrix(
    st: &GluingState,
    columns: &[StemId],
    rows_of_balls: usize,
) -> Result<(Vec<Vec<StemId>>, Vec<Vec<Beachball>>), MoveError> {
    let mut stems = vec![columns.to_vec()];
    let mut balls = Vec::with_capacity(rows_of_balls);
    for j in 0..rows_of_balls {
        let mut row = Vec::with_capacity(columns.len());
        for &from in &stems[j] {
            let b = st.beachball_after(from).ok_or_else(|| {
                MoveError::BadInput(format!("no beachball after stem {from} (row {})", j + 1))
            })?;
            row.push(b);
        }
        stems.push(row.iter().map(|b| b.to).collect());
        balls.push(row);
    }
    let mut all: Vec<StemId> = stems.iter().flatten().copied().collect();
    all.sort_unstable();
    if all.windows(2).any(|w| w[0] == w[1]) {
        return Err(MoveError::BadInput("matrix uses a stem twice".into()));
    }
    Ok((stems, balls))
}

fn row_word_check(st: &GluingState, row: &[StemId]) -> Result<(), String> {
    let word = |id: StemId| st.stem(id).map(|s| st.segment_word(s.arcs[0]));
    let w0 = word(row[0]);
    match row.iter().find(|&&id| word(id) != w0) {
        Some(id) => Err(format!("stem {id} differs from stem {} in its row", row[0])),
        None => Ok(()),
    }
}

/// Pulls apart a row of stems and reglues arc `(c, i)` into column `perm[i][c]`.
pub(crate) fn restitch_row(
    st: &mut GluingState,
    row: &[StemId],
    perm: &[Vec<usize>],
) -> Result<(), MoveError> {
    let s = row.len();
    let arcs: Vec<Vec<usize>> = row.iter().map(|&id| st.dissolve_stem(id)).collect();
    let deg = arcs[0].len();
    for (c2, &id) in row.iter().enumerate() {
        let mut new_arcs = vec![usize::MAX; deg];
        for (i, slot) in new_arcs.iter_mut().enumerate() {
            let c = (0..s)
                .find(|&c| perm[i][c] == c2)
                .expect("perm is a permutation");
            *slot = arcs[c][i];
        }
        st.glue_stem_as(id, &new_arcs)?;
    }
    Ok(())
}

/// Restitches the interior stem rows of an `s x r` matrix of consecutive
/// beachballs. `perms[j][i]` permutes the columns of module `i` in stem row
/// `j` (0..=r, identity at both ends); collapsed ball rows are glued into
/// segments of length 3λ.
pub fn covering_move(
    st: &mut GluingState,
    columns: &[StemId],
    perms: &[Vec<Vec<usize>>],
    modes: &[RowMode],
) -> Result<(), MoveError> {
    let s = columns.len();
    let r = modes.len();
    let deg = st.degree();
    if s == 0 || r == 0 || perms.len() != r + 1 {
        return Err(MoveError::BadInput(
            "matrix needs s >= 1 columns, r >= 1 rows and r + 1 permutations".into(),
        ));
    }
    for (j, p) in perms.iter().enumerate() {
        if p.len() != deg || p.iter().any(|q| !is_perm(q, s)) {
            return Err(MoveError::BadInput(format!(
                "row {j} is not an element of S_s^𝔡"
            )));
        }
    }
    let id = identity_perms(deg, s);
    if perms[0] != id || perms[r] != id {
        return Err(MoveError::BadInput(
            "boundary permutations must be the identity".into(),
        ));
    }
    let (stems, balls) = collect_matrix(st, columns, r)?;
    for row in &stems[1..r] {
        row_word_check(st, row).map_err(MoveError::IllegalCoverLabels)?;
    }
    for (j, mode) in modes.iter().enumerate() {
        if *mode == RowMode::Collapse && perms[j] != perms[j + 1] {
            return Err(MoveError::CollapseNeedsTrivialCover(j + 1));
        }
    }
    let saved = st.clone();
    for j in 1..r {
        if perms[j] != id {
            if let Err(e) = restitch_row(st, &stems[j], &perms[j]) {
                st.rollback(saved);
                return Err(e);
            }
        }
    }
    for (j, mode) in modes.iter().enumerate() {
        if *mode != RowMode::Collapse {
            continue;
        }
        for c2 in 0..s {
            let group: Vec<usize> = (0..deg)
                .map(|i| {
                    let c = (0..s)
                        .find(|&c| perms[j][i][c] == c2)
                        .expect("perm is a permutation");
                    balls[j][c].strands[i]
                })
                .collect();
            let w = st.segment_word(group[0]);
            if group.iter().any(|&g| st.segment_word(g) != w) {
                st.rollback(saved);
                return Err(MoveError::IllegalCoverLabels(format!(
                    "collapsed row {} is not monochromatic",
                    j + 1
                )));
            }
            if let Err(e) = st.glue_segments_plain(&group) {
                st.rollback(saved);
                return Err(e);
            }
            for &g in &group {
                let comp = st.segments[g].arc.component;
                st.visit_deltas[comp] -= 1;
            }
            st.collapsed.push(group);
        }
    }
    if let Err(e) = st.check_legal() {
        st.rollback(saved);
        return Err(MoveError::IllegalCoverLabels(e.to_string()));
    }
    st.commit(
        "covering_move",
        serde_json::json!({ "columns": columns, "perms": perms, "modes": modes }),
    );
    Ok(())
}

fn covering_type(st: &GluingState, row: &[Beachball]) -> bool {
    let words = |b: &Beachball| {
        b.strands
            .iter()
            .map(|&s| st.segment_word(s))
            .collect::<Vec<_>>()
    };
    let w0 = words(&row[0]);
    row.iter().all(|b| words(b) == w0)
}

/// Trades 2𝔡 beachballs for two biparts of covering type and collapses 𝔡
/// beachballs whose labels form a Latin pattern. `columns` are the first stems
/// of 𝔡 chains of three consecutive beachballs.
pub fn elimination_move(st: &mut GluingState, columns: &[StemId]) -> Result<(), MoveError> {
    let deg = st.degree();
    if columns.len() != deg {
        return Err(MoveError::BadInput(format!(
            "elimination needs {deg} columns"
        )));
    }
    let (_, balls) = collect_matrix(st, columns, 3)?;
    if !covering_type(st, &balls[0]) || !covering_type(st, &balls[2]) {
        return Err(MoveError::NoCoveringTypeLabeling(
            "outer rows do not share labels".into(),
        ));
    }
    let omega: Vec<_> = (0..deg)
        .map(|t| st.segment_word(balls[1][t].strands[0]))
        .collect();
    for (c, b) in balls[1].iter().enumerate() {
        for (i, &seg) in b.strands.iter().enumerate() {
            if st.segment_word(seg) != omega[(c + i) % deg] {
                return Err(MoveError::NoCoveringTypeLabeling(format!(
                    "middle row column {c} module {i} breaks the Latin pattern"
                )));
            }
        }
    }
    let latin = latin_perms(deg, deg);
    let id = identity_perms(deg, deg);
    covering_move(
        st,
        columns,
        &[id.clone(), latin.clone(), latin, id],
        &[RowMode::Cover, RowMode::Collapse, RowMode::Cover],
    )
    .map_err(|e| match e {
        MoveError::IllegalCoverLabels(m) => MoveError::NoCoveringTypeLabeling(m),
        other => other,
    })
}

/// Trades four beachballs (two columns of two) for two barrels by swapping
/// module 0 across the middle stem row.
pub fn rolling_move(st: &mut GluingState, columns: [StemId; 2]) -> Result<(), MoveError> {
    let deg = st.degree();
    let (_, balls) = collect_matrix(st, &columns, 2)?;
    if !covering_type(st, &balls[0]) || !covering_type(st, &balls[1]) {
        return Err(MoveError::NoCoveringTypeLabeling(
            "rows do not share labels".into(),
        ));
    }
    let id = identity_perms(deg, 2);
    let mut swap = id.clone();
    swap[0] = vec![1, 0];
    covering_move(
        st,
        &columns,
        &[id.clone(), swap, id],
        &[RowMode::Cover, RowMode::Cover],
    )
}

/// Input of a tear: the stem ending at `v`, the stem starting at `v'`, and the
/// first stems of 𝔡-1 chains of three consecutive reservoir beachballs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TearSpec {
    pub v_stem: StemId,
    pub v2_stem: StemId,
    pub triples: Vec<StemId>,
}

/// Tears a remainder component at `v` and `v'` into 𝔡 copies of each, joined
/// by the middle beachballs of the triples; the outer beachballs become two
/// biparts. Strands of the middle beachballs join the remainder.
pub fn tear_move(st: &mut GluingState, spec: &TearSpec) -> Result<(), MoveError> {
    let deg = st.degree();
    if spec.triples.len() + 1 != deg {
        return Err(MoveError::BadInput(format!(
            "tear needs {} triples",
            deg - 1
        )));
    }
    let exhausted = |what: &str| MoveError::ReservoirExhausted(what.to_string());
    let bv = st
        .beachball_before(spec.v_stem)
        .ok_or_else(|| exhausted("no beachball before v"))?;
    let bv2 = st
        .beachball_after(spec.v2_stem)
        .ok_or_else(|| exhausted("no beachball after v'"))?;
    if !st.in_reservoir(&bv) || !st.in_reservoir(&bv2) {
        return Err(exhausted("beachball next to v or v' is remainder"));
    }
    let (tri_stems, tri_balls) = collect_matrix(st, &spec.triples, 3)?;
    if tri_balls.iter().flatten().any(|b| !st.in_reservoir(b)) {
        return Err(exhausted("triple uses remainder material"));
    }
    let mut row1 = vec![spec.v_stem];
    row1.extend(&tri_stems[1]);
    let mut row2 = vec![spec.v2_stem];
    row2.extend(&tri_stems[2]);
    let mut all: Vec<StemId> = tri_stems.iter().flatten().copied().collect();
    all.extend([bv.from, spec.v_stem, spec.v2_stem, bv2.to]);
    all.sort_unstable();
    if all.windows(2).any(|w| w[0] == w[1]) {
        return Err(MoveError::BadInput("tear uses a stem twice".into()));
    }
    row_word_check(st, &row1).map_err(MoveError::TearLabelsDisagree)?;
    row_word_check(st, &row2).map_err(MoveError::TearLabelsDisagree)?;
    let saved = st.clone();
    let latin = latin_perms(deg, deg);
    let restitched = restitch_row(st, &row1, &latin).and_then(|_| restitch_row(st, &row2, &latin));
    if let Err(e) = restitched.and_then(|_| st.check_legal()) {
        st.rollback(saved);
        return Err(MoveError::TearLabelsDisagree(e.to_string()));
    }
    for b in &tri_balls[1] {
        for &s in &b.strands {
            st.mark_remainder(s);
        }
    }
    st.commit(
        "tear_move",
        serde_json::to_value(spec).expect("serializable"),
    );
    Ok(())
}

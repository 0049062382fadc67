use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use spineforge::moves::*;
use spineforge::rosegraph::circles_from_word;
use spineforge::spine::Kind;
use spineforge::words::{rng_stream, Letter, ReducedWord};

pub fn draw(
    rng: &mut ChaCha8Rng,
    k: u8,
    len: usize,
    first_ok: impl Fn(Letter) -> bool,
    last_ok: impl Fn(Letter) -> bool,
) -> Option<Vec<Letter>> {
    for _ in 0..10_000 {
        let mut w: Vec<Letter> = Vec::with_capacity(len);
        let mut stuck = 0;
        while w.len() < len && stuck < 1000 {
            let l = Letter::from_index(rng.gen_range(0..2 * k as usize));
            let last = w.len() + 1 == len;
            if w.last().is_some_and(|p| p.inv() == l)
                || (w.is_empty() && !first_ok(l))
                || (last && !last_ok(l))
            {
                stuck += 1;
                continue;
            }
            w.push(l);
        }
        if w.len() == len {
            return Some(w);
        }
    }
    None
}

/// Circles carrying columns of beachball chains. Location (c, i) of the
/// relator reads `X S_0 B_1 S_1 ... B_r S_r Y`; circle `i` glues its location
/// (c, i) into column `c`, where it carries module `i`.
pub struct Chains {
    pub st: GluingState,
    /// `stems[c][j]`: stem row `j` of column `c`.
    pub stems: Vec<Vec<StemId>>,
}

pub fn chain_state(
    params: GlueParams,
    k: u8,
    stem_words: &[Vec<Vec<Letter>>],
    ball_words: &[Vec<Vec<Vec<Letter>>>],
    rng: &mut ChaCha8Rng,
) -> Chains {
    let deg = params.degree();
    let lambda = params.lambda;
    let cols = stem_words.len();
    let rows = stem_words[0].len() - 1;
    let per_loc = 2 * rows + 3;
    'retry: loop {
        let mut letters: Vec<Letter> = Vec::new();
        for c in 0..cols {
            let s0 = &stem_words[c][0];
            let sr = &stem_words[c][rows];
            let mut x_lasts = Vec::new();
            let mut y_firsts = Vec::new();
            for i in 0..deg {
                let prev = letters.last().copied();
                let Some(x) = draw(
                    rng,
                    k,
                    lambda,
                    |l| prev.is_none_or(|p| p != l.inv()),
                    |l| l != s0[0].inv() && !x_lasts.contains(&l),
                ) else {
                    continue 'retry;
                };
                x_lasts.push(x[lambda - 1]);
                letters.extend(x);
                for j in 0..=rows {
                    if j > 0 {
                        letters.extend(&ball_words[c][j - 1][i]);
                    }
                    letters.extend(&stem_words[c][j]);
                }
                let Some(y) = draw(
                    rng,
                    k,
                    lambda,
                    |l| l != sr[lambda - 1].inv() && !y_firsts.contains(&l),
                    |_| true,
                ) else {
                    continue 'retry;
                };
                y_firsts.push(y[0]);
                letters.extend(y);
            }
        }
        let Ok(r) = ReducedWord::new(letters, true) else {
            continue;
        };
        let circles = circles_from_word(&r, deg).unwrap();
        let per_circle = cols * deg * per_loc;
        let mut st = GluingState::new(params, circles, (0..deg).collect());
        let mut segments = Vec::with_capacity(deg * per_circle);
        for comp in 0..deg {
            for p in 0..per_circle {
                let piece = p % per_loc;
                let role = if piece % 2 == 1 && piece < per_loc - 1 {
                    SegmentRole::Odd
                } else {
                    SegmentRole::Even
                };
                segments.push(Segment {
                    arc: Arc {
                        component: comp,
                        start: p * lambda,
                        len: lambda,
                    },
                    role,
                    block: None,
                });
            }
        }
        st.set_layout(segments).unwrap();
        let seg = |comp: usize, c: usize, i: usize, piece: usize| {
            comp * per_circle + (c * deg + i) * per_loc + piece
        };
        let stems = (0..cols)
            .map(|c| {
                (0..=rows)
                    .map(|j| {
                        let segs: Vec<usize> = (0..deg).map(|i| seg(i, c, i, 1 + 2 * j)).collect();
                        st.glue_stem(&segs).unwrap()
                    })
                    .collect()
            })
            .collect();
        st.commit("setup", serde_json::Value::Null);
        return Chains { st, stems };
    }
}

/// Shared stem rows and a pool of 𝔡 ball words per row with pairwise distinct
/// first letters and pairwise distinct last letters; column `c`, row `j`,
/// module `i` reads pool word `pattern(c, j, i)`.
pub fn pattern_chains(
    params: GlueParams,
    cols: usize,
    rows: usize,
    pattern: &dyn Fn(usize, usize, usize) -> usize,
    seed: u64,
) -> Chains {
    let k = 4;
    let deg = params.degree();
    let lambda = params.lambda;
    let mut rng = rng_stream(seed, 50);
    let stems: Vec<Vec<Letter>> = (0..=rows)
        .map(|_| draw(&mut rng, k, lambda, |_| true, |_| true).unwrap())
        .collect();
    let pools: Vec<Vec<Vec<Letter>>> = (1..=rows)
        .map(|j| {
            let mut pool: Vec<Vec<Letter>> = Vec::new();
            for _ in 0..deg {
                let firsts: Vec<Letter> = pool.iter().map(|w| w[0]).collect();
                let lasts: Vec<Letter> = pool.iter().map(|w| w[lambda - 1]).collect();
                let before = stems[j - 1][lambda - 1];
                let after = stems[j][0];
                pool.push(
                    draw(
                        &mut rng,
                        k,
                        lambda,
                        |l| l != before.inv() && !firsts.contains(&l),
                        |l| l != after.inv() && !lasts.contains(&l),
                    )
                    .unwrap(),
                );
            }
            pool
        })
        .collect();
    let stem_words = vec![stems; cols];
    let ball_words: Vec<Vec<Vec<Vec<Letter>>>> = (0..cols)
        .map(|c| {
            (1..=rows)
                .map(|j| {
                    (0..deg)
                        .map(|i| pools[j - 1][pattern(c, j, i)].clone())
                        .collect()
                })
                .collect()
        })
        .collect();
    chain_state(params, k, &stem_words, &ball_words, &mut rng)
}

pub fn simplicial(d: usize) -> GlueParams {
    GlueParams {
        kind: Kind::Simplicial,
        d,
        lambda: 4,
    }
}

/// Every L-edge lies in exactly one class, and glued classes have 𝔡 members.
pub fn mass_ok(st: &GluingState) -> bool {
    let total = st.circles.num_edges();
    let classes = st.partition.canonical_classes();
    let counted: usize = classes.iter().map(|c| c.len()).sum();
    let seg_total: usize = st.segments.iter().map(|s| s.arc.len).sum();
    counted == total
        && seg_total == total
        && st.partition.num_edges() == total
        && st.partition.check_sizes(st.degree()).is_ok()
}

/// One beachball per template slot, with strand `i` reading path `i` of its
/// slot, template edges labelled so departures at every template vertex differ.
pub fn design_state(kind: Kind, d: usize, seed: u64) -> (Chains, Template) {
    let template = match kind {
        Kind::Simplicial => HypercubeLayout::new(d).unwrap().template(),
        Kind::Cubical => LensLayout::new(d).unwrap().template().unwrap(),
    };
    let lambda = template.path_len();
    let params = GlueParams { kind, d, lambda };
    let k = 8;
    let mut rng = rng_stream(seed, 60);
    'retry: loop {
        let mut used: Vec<Vec<Letter>> = vec![Vec::new(); template.num_vertices];
        let mut edge_letter = Vec::with_capacity(template.edges.len());
        for &(lo, hi) in &template.edges {
            let free: Vec<Letter> = (0..2 * k as usize)
                .map(Letter::from_index)
                .filter(|l| {
                    !used[lo].contains(l)
                        && !used[hi].contains(&l.inv())
                        && (lo != hi || *l != l.inv())
                })
                .collect();
            let Some(&l) = free.choose(&mut rng) else {
                continue 'retry;
            };
            used[lo].push(l);
            used[hi].push(l.inv());
            edge_letter.push(l);
        }
        let mut stem_words = Vec::new();
        let mut ball_words = Vec::new();
        for slot in &template.slots {
            let at_start = used[slot.start].clone();
            let Some(s0) = draw(
                &mut rng,
                k,
                lambda,
                |_| true,
                |l| !at_start.contains(&l.inv()),
            ) else {
                continue 'retry;
            };
            used[slot.start].push(s0[lambda - 1].inv());
            let at_end = used[slot.end].clone();
            let Some(s1) = draw(&mut rng, k, lambda, |l| !at_end.contains(&l), |_| true) else {
                continue 'retry;
            };
            used[slot.end].push(s1[0]);
            stem_words.push(vec![s0, s1]);
            let paths: Vec<Vec<Letter>> = slot
                .paths
                .iter()
                .map(|p| {
                    p.iter()
                        .map(|&(e, f)| {
                            if f {
                                edge_letter[e]
                            } else {
                                edge_letter[e].inv()
                            }
                        })
                        .collect()
                })
                .collect();
            ball_words.push(vec![paths]);
        }
        return (
            chain_state(params, k, &stem_words, &ball_words, &mut rng),
            template,
        );
    }
}

pub fn glued_strand_classes(st: &GluingState, balls: &[Beachball]) -> HashMap<Vec<usize>, usize> {
    let mut classes: HashMap<Vec<usize>, usize> = HashMap::new();
    for b in balls {
        for &s in &b.strands {
            for e in st.segment_edges(s) {
                let mut members: Vec<usize> =
                    st.partition.class_members(e).iter().map(|m| m.0).collect();
                members.sort_unstable();
                let n = members.len();
                classes.insert(members, n);
            }
        }
    }
    classes
}

pub fn path_vertices(t: &Template, start: usize, path: &[(usize, bool)]) -> Vec<usize> {
    let mut v = start;
    let mut out = vec![v];
    for &(e, f) in path {
        let (a, b) = t.edges[e];
        assert_eq!(if f { a } else { b }, v);
        v = if f { b } else { a };
        out.push(v);
    }
    out
}

pub fn pick_cols(rng: &mut ChaCha8Rng, cols: usize, n: usize) -> Vec<usize> {
    let mut all: Vec<usize> = (0..cols).collect();
    all.shuffle(rng);
    all.truncate(n);
    all
}

#[derive(Debug, Default)]
pub struct FuzzOutcome {
    pub attempts: usize,
    pub applied: std::collections::BTreeMap<&'static str, usize>,
    pub violations: Vec<String>,
}

/// Random covering, elimination, rolling and tear moves on random chain states.
/// Every attempt must leave a legal state with all mass accounted for, rejected
/// attempts must change nothing, and the trace must replay to the final state.
pub fn fuzz_moves(episodes: usize, attempts: usize) -> FuzzOutcome {
    let mut out = FuzzOutcome::default();
    for ep in 0..episodes {
        let d = 2 + ep % 2;
        let (cols, rows) = (8, 5);
        let mut rng = rng_stream(ep as u64, 70);
        let shifts: Vec<Vec<usize>> = (0..=rows)
            .map(|_| match rng.gen_range(0..3) {
                0 => vec![0; cols],
                1 => (0..cols).collect(),
                _ => (0..cols).map(|_| rng.gen_range(0..d)).collect(),
            })
            .collect();
        let mut ch = pattern_chains(
            simplicial(d),
            cols,
            rows,
            &|c, j, i| (i + shifts[j][c]) % d,
            ep as u64,
        );
        let rc = rng.gen_range(0..cols);
        let b = ch.st.beachball_after(ch.stems[rc][2]).unwrap();
        for &s in &b.strands {
            ch.st.mark_remainder(s);
        }
        ch.st.commit("mark", serde_json::Value::Null);
        let base = ch.st.clone();
        let mut st = ch.st;
        let stems = ch.stems;
        for _ in 0..attempts {
            out.attempts += 1;
            let digest = st.digest();
            let op = rng.gen_range(0..4);
            let res = match op {
                0 => {
                    let s = rng.gen_range(2..=3);
                    let r = rng.gen_range(1..=3);
                    let j0 = rng.gen_range(0..=rows - r);
                    let cs = pick_cols(&mut rng, cols, s);
                    let columns: Vec<StemId> = cs.iter().map(|&c| stems[c][j0]).collect();
                    let id: Vec<Vec<usize>> = vec![(0..s).collect(); d];
                    let mut perms = vec![id.clone()];
                    for _ in 1..r {
                        perms.push(
                            (0..d)
                                .map(|_| {
                                    let mut p: Vec<usize> = (0..s).collect();
                                    p.shuffle(&mut rng);
                                    p
                                })
                                .collect(),
                        );
                    }
                    perms.push(id);
                    let modes: Vec<RowMode> = (0..r)
                        .map(|_| {
                            if rng.gen_bool(0.2) {
                                RowMode::Collapse
                            } else {
                                RowMode::Cover
                            }
                        })
                        .collect();
                    ("covering", covering_move(&mut st, &columns, &perms, &modes))
                }
                1 => {
                    let j0 = rng.gen_range(0..=rows - 3);
                    let columns: Vec<StemId> = pick_cols(&mut rng, cols, d)
                        .iter()
                        .map(|&c| stems[c][j0])
                        .collect();
                    ("elimination", elimination_move(&mut st, &columns))
                }
                2 => {
                    let j0 = rng.gen_range(0..=rows - 2);
                    let cs = pick_cols(&mut rng, cols, 2);
                    (
                        "rolling",
                        rolling_move(&mut st, [stems[cs[0]][j0], stems[cs[1]][j0]]),
                    )
                }
                _ => {
                    let j = rng.gen_range(1..rows);
                    let cs = pick_cols(&mut rng, cols, d);
                    let spec = TearSpec {
                        v_stem: stems[cs[0]][j],
                        v2_stem: stems[cs[0]][j + 1],
                        triples: cs[1..].iter().map(|&c| stems[c][j - 1]).collect(),
                    };
                    ("tear", tear_move(&mut st, &spec))
                }
            };
            if let Err(e) = st.check_legal() {
                out.violations.push(format!(
                    "episode {ep}: {} left an illegal state: {e}",
                    res.0
                ));
            }
            if !mass_ok(&st) {
                out.violations
                    .push(format!("episode {ep}: {} broke the mass ledger", res.0));
            }
            match res.1 {
                Ok(()) => *out.applied.entry(res.0).or_default() += 1,
                Err(_) if st.digest() != digest => out.violations.push(format!(
                    "episode {ep}: rejected {} changed the state",
                    res.0
                )),
                Err(_) => {}
            }
        }
        match GluingState::replay(&base, &st.trace[base.trace.len()..]) {
            Ok(r) if r.digest() == st.digest() => {}
            _ => out
                .violations
                .push(format!("episode {ep}: trace does not replay")),
        }
    }
    out
}

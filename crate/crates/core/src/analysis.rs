//! Bead decompositions, small-cancellation piece statistics and the long-subword
//! lift check.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rosegraph::{End, HalfEdge};
use crate::spine::Spine;
use crate::words::{rng_stream, Letter, ReducedWord};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no lip found for bead {bead}: need {needed} letters with distinct neighbours, longest common subword has length {longest}")]
    NoLipFound {
        bead: usize,
        longest: usize,
        needed: usize,
    },
    #[error("spine is not immersed at vertex {0}")]
    NotImmersed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeadParams {
    pub delta: f64,
    pub c: f64,
    /// Number of copies glued along each lip.
    pub degree: usize,
    pub k: u8,
    pub seed: u64,
}

/// One factor pair `r_i s_i`, as cyclic positions in the relator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub r_start: usize,
    pub r_len: usize,
    pub s_start: usize,
    pub s_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lip {
    pub word: String,
    /// Indices of the s-factors holding the copies.
    pub factors: Vec<usize>,
    /// Cyclic start position of each copy in the relator.
    pub positions: Vec<usize>,
}

/// An arc of the relator between consecutive lip copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Piece {
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeadDecomposition {
    pub n: usize,
    pub params: BeadParams,
    /// Start of `r_1` in the relator.
    pub offset: usize,
    pub lip_len: usize,
    pub factors: Vec<Factor>,
    pub lips: Vec<Lip>,
    pub pieces: Vec<Piece>,
}

impl BeadDecomposition {
    pub fn lip_mass(&self) -> usize {
        self.lips
            .iter()
            .map(|l| l.positions.len() * self.lip_len)
            .sum()
    }

    /// Glued classes that identify the copies of every lip, for the single circle
    /// spelling the relator.
    pub fn lip_classes(&self) -> Vec<Vec<(usize, bool)>> {
        let mut classes = Vec::new();
        for lip in &self.lips {
            for t in 0..self.lip_len {
                classes.push(
                    lip.positions
                        .iter()
                        .map(|&p| ((p + t) % self.n, true))
                        .collect(),
                );
            }
        }
        classes
    }
}

fn letters_string(w: &[Letter]) -> String {
    w.iter().map(|l| l.to_char()).collect()
}

/// Length of the longest word occurring in every one of `blocks`.
fn longest_common(blocks: &[Vec<Letter>]) -> usize {
    let mut best = 0;
    let shortest = blocks.iter().map(Vec::len).min().unwrap_or(0);
    for len in 1..=shortest {
        let mut common: HashSet<&[Letter]> = blocks[0].windows(len).collect();
        for b in &blocks[1..] {
            let here: HashSet<&[Letter]> = b.windows(len).collect();
            common.retain(|w| here.contains(w));
        }
        if common.is_empty() {
            break;
        }
        best = len;
    }
    best
}

/// Factorizes `r` as `r_1 s_1 … r_m s_m` with `|r_i| = ⌊n^(1−δ)⌋` and
/// `|s_i| = ⌊n^δ⌋`, the last `r_m` absorbing rounding, and finds for every bead
/// `i < m/degree` a lip: a word of length `⌈C ln n⌉` occurring in each of
/// `s_i, s_(i+m/degree), …`. Copies are chosen so that the letters before the
/// copies are pairwise distinct, and likewise the letters after, which keeps the
/// glued quotient immersed.
pub fn bead_decompose(
    r: &ReducedWord,
    params: BeadParams,
) -> Result<BeadDecomposition, AnalysisError> {
    let n = r.len();
    let BeadParams {
        delta,
        c,
        degree,
        k,
        ..
    } = params;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AnalysisError::Precondition(format!(
            "delta = {delta} not in (0, 1)"
        )));
    }
    if k < 2 {
        return Err(AnalysisError::Precondition(format!("rank k = {k} < 2")));
    }
    let bound = delta / ((2 * k as u32 - 1) as f64).ln();
    if !(c > 0.0 && c < bound) {
        return Err(AnalysisError::Precondition(format!(
            "C = {c} must lie in (0, δ/log(2k−1)) = (0, {bound})"
        )));
    }
    if degree < 2 || degree > 2 * k as usize - 1 {
        return Err(AnalysisError::Precondition(format!(
            "degree = {degree} not in 2..=2k−1, so copies cannot have distinct neighbours"
        )));
    }
    let nf = n as f64;
    let lip_len = (c * nf.ln()).ceil() as usize;
    let r_len = nf.powf(1.0 - delta).floor() as usize;
    let s_len = nf.powf(delta).floor() as usize;
    if lip_len == 0 || r_len == 0 || s_len < lip_len + 2 {
        return Err(AnalysisError::Precondition(format!(
            "n = {n} too small: lip length {lip_len}, factor lengths {r_len}/{s_len}"
        )));
    }
    let m = n / (r_len + s_len) / degree * degree;
    if m == 0 {
        return Err(AnalysisError::Precondition(format!(
            "n = {n} too small for {degree} factor pairs"
        )));
    }
    let offset = rng_stream(params.seed, 11).gen_range(0..n);
    let mut factors = Vec::with_capacity(m);
    let mut pos = offset;
    for i in 0..m {
        let this_r = if i + 1 == m {
            n - (m - 1) * (r_len + s_len) - s_len
        } else {
            r_len
        };
        factors.push(Factor {
            r_start: pos % n,
            r_len: this_r,
            s_start: (pos + this_r) % n,
            s_len,
        });
        pos += this_r + s_len;
    }

    let stride = m / degree;
    let mut lips = Vec::with_capacity(stride);
    for bead in 0..stride {
        let members: Vec<usize> = (0..degree).map(|j| bead + j * stride).collect();
        let blocks: Vec<Vec<Letter>> = members
            .iter()
            .map(|&f| r.cyclic_subword(factors[f].s_start, s_len))
            .collect();
        // Copies avoid the first and last letter of each s-factor so that their
        // neighbours stay inside it.
        let mut found = None;
        'search: for i0 in 1..s_len - lip_len {
            let word = &blocks[0][i0..i0 + lip_len];
            let mut chosen = vec![i0];
            if !extend(&blocks, word, 1, &mut chosen) {
                continue 'search;
            }
            found = Some((word.to_vec(), chosen));
            break;
        }
        let (word, offsets) = found.ok_or_else(|| AnalysisError::NoLipFound {
            bead,
            longest: longest_common(&blocks),
            needed: lip_len,
        })?;
        lips.push(Lip {
            word: letters_string(&word),
            positions: members
                .iter()
                .zip(&offsets)
                .map(|(&f, &o)| (factors[f].s_start + o) % n)
                .collect(),
            factors: members,
        });
    }

    let mut starts: Vec<usize> = lips
        .iter()
        .flat_map(|l| l.positions.iter().copied())
        .collect();
    starts.sort_unstable();
    let pieces = (0..starts.len())
        .map(|i| {
            let start = (starts[i] + lip_len) % n;
            let next = starts[(i + 1) % starts.len()];
            Piece {
                start,
                len: (next + n - start) % n,
            }
        })
        .collect();
    Ok(BeadDecomposition {
        n,
        params,
        offset,
        lip_len,
        factors,
        lips,
        pieces,
    })
}

/// Picks copies of `word` in `blocks[j..]` whose neighbouring letters differ from
/// those of the copies already chosen.
fn extend(blocks: &[Vec<Letter>], word: &[Letter], j: usize, chosen: &mut Vec<usize>) -> bool {
    if j == blocks.len() {
        return true;
    }
    let len = word.len();
    let b = &blocks[j];
    for i in 1..b.len() - len {
        if &b[i..i + len] != word {
            continue;
        }
        let clash = chosen.iter().enumerate().any(|(jj, &ii)| {
            let other = &blocks[jj];
            other[ii - 1] == b[i - 1] || other[ii + len] == b[i + len]
        });
        if clash {
            continue;
        }
        chosen.push(i);
        if extend(blocks, word, j + 1, chosen) {
            return true;
        }
        chosen.pop();
    }
    false
}

/// Maximal piece statistics over the symmetrized closure of a presentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceStats {
    pub max_piece: usize,
    /// `max_piece` divided by the length of the shorter relator carrying it.
    pub ratio: f64,
    /// For each length, how many reading positions have that longest piece.
    pub histogram: Vec<(usize, usize)>,
}

/// Every cyclic reading of each relator and of its inverse.
struct Readings {
    texts: Vec<Vec<Letter>>,
    lens: Vec<usize>,
}

impl Readings {
    fn new(relators: &[ReducedWord]) -> Readings {
        let mut texts = Vec::new();
        let mut lens = Vec::new();
        for r in relators {
            for w in [r.clone(), r.inverse()] {
                let mut doubled = w.letters().to_vec();
                doubled.extend_from_slice(w.letters());
                texts.push(doubled);
                lens.push(w.len());
            }
        }
        Readings { texts, lens }
    }

    fn positions(&self) -> Vec<(usize, usize)> {
        (0..self.texts.len())
            .flat_map(|t| (0..self.lens[t]).map(move |p| (t, p)))
            .collect()
    }

    fn read(&self, (t, p): (usize, usize)) -> &[Letter] {
        &self.texts[t][p..p + self.lens[t]]
    }
}

fn lcp(a: &[Letter], b: &[Letter]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Longest common prefix of two readings starting at distinct positions, over all
/// cyclic readings of every relator and of its inverse, capped at the reading
/// lengths. Sorting the readings makes the maximum an adjacent pair.
pub fn piece_stats(relators: &[ReducedWord]) -> Result<PieceStats, AnalysisError> {
    if relators.is_empty() || relators.iter().any(|r| r.is_empty()) {
        return Err(AnalysisError::Precondition(
            "relators must be nonempty".into(),
        ));
    }
    let rd = Readings::new(relators);
    let mut pos = rd.positions();
    pos.sort_by(|&a, &b| rd.read(a).cmp(rd.read(b)).then(a.cmp(&b)));
    let adjacent: Vec<usize> = pos
        .windows(2)
        .map(|w| lcp(rd.read(w[0]), rd.read(w[1])))
        .collect();
    let mut max_piece = 0;
    let mut ratio: f64 = 0.0;
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for i in 0..pos.len() {
        let left = if i > 0 { adjacent[i - 1] } else { 0 };
        let right = adjacent.get(i).copied().unwrap_or(0);
        *counts.entry(left.max(right)).or_default() += 1;
        if i > 0 {
            let a = adjacent[i - 1];
            let shorter = rd.lens[pos[i - 1].0].min(rd.lens[pos[i].0]);
            max_piece = max_piece.max(a);
            ratio = ratio.max(a as f64 / shorter as f64);
        }
    }
    let mut histogram: Vec<(usize, usize)> = counts.into_iter().collect();
    histogram.sort_unstable();
    Ok(PieceStats {
        max_piece,
        ratio,
        histogram,
    })
}

pub fn pieces_ratio(relators: &[ReducedWord]) -> Result<f64, AnalysisError> {
    Ok(piece_stats(relators)?.ratio)
}

/// Longest piece shared between a reading of `a` and a reading of `b`.
pub fn max_piece_between(a: &ReducedWord, b: &ReducedWord) -> usize {
    let ra = Readings::new(std::slice::from_ref(a));
    let rb = Readings::new(std::slice::from_ref(b));
    let mut best = 0;
    for pa in ra.positions() {
        for pb in rb.positions() {
            best = best.max(lcp(ra.read(pa), rb.read(pb)));
        }
    }
    best
}

/// CSV text of a piece-length histogram.
pub fn histogram_csv(stats: &PieceStats) -> String {
    let mut out = String::from("piece_length,positions\n");
    for (len, count) in &stats.histogram {
        out.push_str(&format!("{len},{count}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftWitness {
    pub start_vertex: usize,
    /// Cyclic position in the relator where the path's label begins.
    pub position: usize,
    /// Σ-edges traversed, with `true` for traversal along the edge orientation.
    pub path: Vec<(usize, bool)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum LiftVerdict {
    Lifts { paths: usize },
    Fails { witness: LiftWitness },
    Inconclusive { steps: usize },
}

/// Checks that every immersed path in Σ of length `⌈βn⌉` whose label is a cyclic
/// subword of `r` or `r⁻¹` is the image of a path in L. Since Σ is immersed, a
/// label and a start vertex determine the path, so paths are enumerated by
/// reading each cyclic subword of `r` from every vertex (reversed paths read
/// subwords of `r⁻¹`). More than `step_cap` reading steps gives an inconclusive
/// verdict.
pub fn long_subword_lift_check(
    s: &Spine,
    r: &ReducedWord,
    beta: f64,
    step_cap: usize,
) -> Result<LiftVerdict, AnalysisError> {
    let n = r.len();
    if !(beta > 0.0) || n == 0 {
        return Err(AnalysisError::Precondition(format!(
            "beta = {beta} must be positive"
        )));
    }
    let len = ((beta * n as f64).ceil() as usize).max(1);
    let g = &s.sigma;
    let mut departing: HashMap<(usize, Letter), HalfEdge> = HashMap::new();
    for (v, hs) in g.incidence().iter().enumerate() {
        for &h in hs {
            if departing.insert((v, g.departing_label(h)), h).is_some() {
                return Err(AnalysisError::NotImmersed(v));
            }
        }
    }
    let letters: Vec<Letter> = (0..n + len).map(|i| r.at(i)).collect();
    let results: Vec<(usize, usize, Option<LiftWitness>)> = (0..g.num_vertices)
        .into_par_iter()
        .map(|v| {
            let mut steps = 0;
            let mut paths = 0;
            for p in 0..n {
                let mut path = Vec::with_capacity(len);
                let mut at = v;
                for &l in &letters[p..p + len] {
                    steps += 1;
                    match departing.get(&(at, l)) {
                        Some(h) => {
                            path.push((h.edge, h.end == End::Tail));
                            at = g.vertex_of(HalfEdge {
                                edge: h.edge,
                                end: h.end.other(),
                            });
                        }
                        None => break,
                    }
                }
                if path.len() < len {
                    continue;
                }
                paths += 1;
                steps += len * s.fibers[path[0].0].strands.len();
                if !lifts(s, &path) {
                    return (
                        steps,
                        paths,
                        Some(LiftWitness {
                            start_vertex: v,
                            position: p,
                            path,
                        }),
                    );
                }
            }
            (steps, paths, None)
        })
        .collect();
    let steps: usize = results.iter().map(|r| r.0).sum();
    if let Some(w) = results.iter().find_map(|r| r.2.clone()) {
        return Ok(LiftVerdict::Fails { witness: w });
    }
    if steps > step_cap {
        return Ok(LiftVerdict::Inconclusive { steps });
    }
    Ok(LiftVerdict::Lifts {
        paths: results.iter().map(|r| r.1).sum(),
    })
}

/// Whether some strand over the first edge of `path` continues along L over the
/// whole path.
fn lifts(s: &Spine, path: &[(usize, bool)]) -> bool {
    let l = &s.circles;
    s.fibers[path[0].0].strands.iter().any(|&a| {
        let (_, fwd) = s.edge_image[a];
        // Walk L forward when the strand is co-oriented with the path.
        let along = fwd == path[0].1;
        let mut cur = a;
        for (t, &(e, dir)) in path.iter().enumerate() {
            if t > 0 {
                cur = if along { l.head(cur) } else { l.incoming(cur) };
            }
            let (img, f) = s.edge_image[cur];
            if img != e || (f == dir) != along {
                return false;
            }
        }
        true
    })
}

//! Relators with a planted gluing: words assembled from template designs so
//! that block matching, beachball production and template gluing all succeed.
//! Uniformly random relators of desk-scale length almost never contain the
//! repeated odd segments that block matching needs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{template_for, BuildParams, StageError};
use crate::spine::Kind;
use crate::words::{rng_stream, Letter, ReducedWord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRelator {
    pub word: ReducedWord,
    pub params: BuildParams,
    /// Number of distinct template designs the word is built from.
    pub designs: usize,
    /// Odd segments repeat with this period (in odd/even pairs).
    pub period: usize,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn pick<R: Rng>(rng: &mut R, k: u8, ok: impl Fn(Letter) -> bool) -> Option<Letter> {
    let choices: Vec<Letter> = (0..2 * k as usize)
        .map(Letter::from_index)
        .filter(|&l| ok(l))
        .collect();
    if choices.is_empty() {
        None
    } else {
        Some(choices[rng.gen_range(0..choices.len())])
    }
}

/// A reduced word of length `len` whose first letter satisfies `first_ok` and
/// whose last letter satisfies `last_ok`.
fn constrained_word(
    rng: &mut ChaCha8Rng,
    k: u8,
    len: usize,
    first_ok: &dyn Fn(Letter) -> bool,
    last_ok: &dyn Fn(Letter) -> bool,
) -> Option<Vec<Letter>> {
    for _ in 0..1000 {
        let mut w: Vec<Letter> = Vec::with_capacity(len);
        let mut ok = true;
        for i in 0..len {
            let prev = w.last().copied();
            let last = i + 1 == len;
            let l = pick(rng, k, |l| {
                prev.is_none_or(|p| l != p.inv()) && (i > 0 || first_ok(l)) && (!last || last_ok(l))
            });
            match l {
                Some(l) => w.push(l),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Some(w);
        }
    }
    None
}

/// Builds a relator from random template designs. Pair `g` of the word is an
/// odd segment `o_(g mod S)` followed by the even segment lying on path
/// `g div S` of slot `(g mod S) mod slots` of design `(g mod S) div slots`.
pub fn planted_relator(
    kind: Kind,
    d: usize,
    k: u8,
    seed: u64,
) -> Result<PlantedRelator, StageError> {
    let mut params = BuildParams::with_defaults(kind, d, k, 0, seed);
    params.n = params.lambda * params.big_n;
    params.validate()?;
    let template = template_for(&params)?;
    let deg = params.degree();
    let lambda = params.lambda;
    let slots = template.slots.len();
    let half = params.big_n / 2;
    let period = half / gcd(half, slots) * slots;
    let designs = period / slots;
    let pairs = deg * period;
    params.n = 2 * lambda * pairs;
    let piece = lambda / template.path_len();
    let mut rng = rng_stream(seed, 7);
    let fail =
        |what: &str| StageError::InvalidParams(format!("planted relator: cannot draw {what}"));

    let mut used: Vec<Vec<Vec<Letter>>> = vec![vec![Vec::new(); template.num_vertices]; designs];
    let mut path_words: Vec<Vec<Vec<Vec<Letter>>>> = Vec::with_capacity(designs);
    for used in used.iter_mut() {
        let mut edge_words = Vec::with_capacity(template.edges.len());
        for &(lo, hi) in &template.edges {
            let (at_lo, at_hi) = (used[lo].clone(), used[hi].clone());
            let w = constrained_word(
                &mut rng,
                k,
                piece,
                &|l| !at_lo.contains(&l) && (piece > 1 || !at_hi.contains(&l.inv())),
                &|l| !at_hi.contains(&l.inv()),
            )
            .ok_or_else(|| fail("template edge words"))?;
            used[lo].push(w[0]);
            used[hi].push(w[piece - 1].inv());
            edge_words.push(w);
        }
        let paths = template
            .slots
            .iter()
            .map(|s| {
                s.paths
                    .iter()
                    .map(|p| {
                        p.iter()
                            .flat_map(|&(e, f)| {
                                let w = &edge_words[e];
                                if f {
                                    w.clone()
                                } else {
                                    w.iter().rev().map(|l| l.inv()).collect()
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        path_words.push(paths);
    }

    let mut odd: Vec<Vec<Letter>> = Vec::with_capacity(period);
    for rho in 0..period {
        let prev = (rho + period - 1) % period;
        let (pd, pk) = (prev / slots, prev % slots);
        let (dd, dk) = (rho / slots, rho % slots);
        let end_v = template.slots[pk].end;
        let start_v = template.slots[dk].start;
        let at_end = used[pd][end_v].clone();
        let at_start = used[dd][start_v].clone();
        let same = (pd, end_v) == (dd, start_v);
        let mut drawn = None;
        for _ in 0..1000 {
            let w = constrained_word(&mut rng, k, lambda, &|l| !at_end.contains(&l), &|l| {
                !at_start.contains(&l.inv())
            })
            .ok_or_else(|| fail("odd segments"))?;
            // Both ends of the odd segment meet at one template vertex.
            if !(same && w[0] == w[lambda - 1].inv()) {
                drawn = Some(w);
                break;
            }
        }
        let w = drawn.ok_or_else(|| fail("odd segments with distinct departures"))?;
        used[pd][end_v].push(w[0]);
        used[dd][start_v].push(w[lambda - 1].inv());
        odd.push(w);
    }

    let dim = d.saturating_sub(1);
    let mut letters = Vec::with_capacity(params.n);
    for g in 0..pairs {
        let rho = g % period;
        let a = g / period;
        let path = match kind {
            Kind::Simplicial => a,
            Kind::Cubical => 2 * (a % dim) + a / dim,
        };
        letters.extend(&odd[rho]);
        letters.extend(&path_words[rho / slots][rho % slots][path]);
    }
    let word = ReducedWord::new(letters, true)?;
    Ok(PlantedRelator {
        word,
        params,
        designs,
        period,
    })
}

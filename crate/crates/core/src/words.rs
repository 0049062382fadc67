//! Free-group letters, reduced words and seeded relator sampling.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest rank expressible with the `a..z` alphabet.
pub const MAX_RANK: u8 = 26;

/// Upper bound on the number of relators `sample_presentation` will materialize.
pub const MAX_RELATORS: u64 = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WordError {
    #[error("rank too small: k = {0}, need k >= 2")]
    RankTooSmall(u8),
    #[error("rank too large: k = {0}, at most {MAX_RANK}")]
    RankTooLarge(u8),
    #[error("invalid letter {0:?}")]
    InvalidLetter(char),
    #[error("letter {letter} exceeds rank {rank}")]
    LetterOutOfRank { letter: Letter, rank: u8 },
    #[error("word is not reduced at position {0}")]
    NotReduced(usize),
    #[error("word is not cyclically reduced")]
    NotCyclicallyReduced,
    #[error("density must lie in (0, 1/2), got {0}")]
    BadDensity(f64),
    #[error("relator count overflow: (2k-1)^(nD) = {required:.3e} exceeds {MAX_RELATORS}")]
    RelatorOverflow { required: f64 },
}

/// A generator `x_i` or its inverse. Generators are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter {
    generator: u8,
    inverse: bool,
}

impl Letter {
    pub fn new(generator: u8, inverse: bool) -> Letter {
        assert!(
            (1..=MAX_RANK).contains(&generator),
            "generator out of range"
        );
        Letter { generator, inverse }
    }

    pub fn generator(self) -> u8 {
        self.generator
    }

    pub fn is_inverse(self) -> bool {
        self.inverse
    }

    /// +1 for a generator, -1 for an inverse.
    pub fn sign(self) -> i8 {
        if self.inverse {
            -1
        } else {
            1
        }
    }

    pub fn inv(self) -> Letter {
        Letter {
            generator: self.generator,
            inverse: !self.inverse,
        }
    }

    /// Dense index in `0..2k`: generator i maps to 2(i-1), its inverse to 2(i-1)+1.
    pub fn index(self) -> usize {
        2 * (self.generator as usize - 1) + self.inverse as usize
    }

    pub fn from_index(i: usize) -> Letter {
        Letter::new((i / 2) as u8 + 1, i % 2 == 1)
    }

    pub fn to_char(self) -> char {
        let base = if self.inverse { b'A' } else { b'a' };
        (base + self.generator - 1) as char
    }

    pub fn from_char(c: char) -> Result<Letter, WordError> {
        match c {
            'a'..='z' => Ok(Letter::new(c as u8 - b'a' + 1, false)),
            'A'..='Z' => Ok(Letter::new(c as u8 - b'A' + 1, true)),
            _ => Err(WordError::InvalidLetter(c)),
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_char())
    }
}

impl Serialize for Letter {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Letter {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Letter, D::Error> {
        let s = String::deserialize(d)?;
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Letter::from_char(c).map_err(serde::de::Error::custom),
            _ => Err(serde::de::Error::custom("expected a single letter")),
        }
    }
}

/// True iff `letters` has no adjacent cancelling pair, and, when `cyclic`,
/// no cancellation across the wraparound either.
pub fn is_reduced(letters: &[Letter], cyclic: bool) -> bool {
    first_cancellation(letters, cyclic).is_none()
}

fn first_cancellation(letters: &[Letter], cyclic: bool) -> Option<usize> {
    if let Some(i) = letters.windows(2).position(|w| w[0].inv() == w[1]) {
        return Some(i);
    }
    if cyclic && letters.len() >= 2 && letters[letters.len() - 1].inv() == letters[0] {
        return Some(letters.len() - 1);
    }
    None
}

/// A reduced word, optionally flagged as cyclically reduced.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ReducedWord {
    letters: Vec<Letter>,
    cyclic: bool,
}

impl ReducedWord {
    pub fn new(letters: Vec<Letter>, cyclic: bool) -> Result<ReducedWord, WordError> {
        if let Some(i) = first_cancellation(&letters, false) {
            return Err(WordError::NotReduced(i));
        }
        if cyclic && first_cancellation(&letters, true).is_some() {
            return Err(WordError::NotCyclicallyReduced);
        }
        Ok(ReducedWord { letters, cyclic })
    }

    pub fn empty() -> ReducedWord {
        ReducedWord {
            letters: Vec::new(),
            cyclic: true,
        }
    }

    /// Parses `s` and requires cyclic reduction.
    pub fn parse_cyclic(s: &str) -> Result<ReducedWord, WordError> {
        let w: ReducedWord = s.parse()?;
        ReducedWord::new(w.letters, true)
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn is_cyclic(&self) -> bool {
        self.cyclic
    }

    /// Largest generator index that appears.
    pub fn rank_used(&self) -> u8 {
        self.letters
            .iter()
            .map(|l| l.generator())
            .max()
            .unwrap_or(0)
    }

    /// Letter at cyclic position `i mod n`.
    pub fn at(&self, i: usize) -> Letter {
        self.letters[i % self.letters.len()]
    }

    /// The cyclic subword of length `len` starting at `start`.
    pub fn cyclic_subword(&self, start: usize, len: usize) -> Vec<Letter> {
        (0..len).map(|t| self.at(start + t)).collect()
    }

    pub fn inverse(&self) -> ReducedWord {
        ReducedWord {
            letters: self.letters.iter().rev().map(|l| l.inv()).collect(),
            cyclic: self.cyclic,
        }
    }
}

impl fmt::Display for ReducedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.letters {
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

impl FromStr for ReducedWord {
    type Err = WordError;

    /// Parses a reduced (not necessarily cyclically reduced) word.
    fn from_str(s: &str) -> Result<ReducedWord, WordError> {
        let letters = s
            .chars()
            .map(Letter::from_char)
            .collect::<Result<Vec<_>, _>>()?;
        let cyclic = is_reduced(&letters, true);
        ReducedWord::new(letters, false).map(|w| ReducedWord { cyclic, ..w })
    }
}

impl Serialize for ReducedWord {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ReducedWord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<ReducedWord, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Deterministic generator for sub-stream `stream` of the master `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_rank(k: u8) -> Result<(), WordError> {
    if k < 2 {
        return Err(WordError::RankTooSmall(k));
    }
    if k > MAX_RANK {
        return Err(WordError::RankTooLarge(k));
    }
    Ok(())
}

fn random_letter_avoiding<R: Rng>(k: u8, avoid: &[Letter], rng: &mut R) -> Letter {
    let choices: Vec<Letter> = (0..2 * k as usize)
        .map(Letter::from_index)
        .filter(|l| !avoid.contains(l))
        .collect();
    choices[rng.gen_range(0..choices.len())]
}

/// Uniform reduced word of length `n` drawn letter by letter.
pub fn random_reduced_word<R: Rng>(k: u8, n: usize, rng: &mut R) -> Vec<Letter> {
    let mut out: Vec<Letter> = Vec::with_capacity(n);
    for _ in 0..n {
        let avoid: Vec<Letter> = out.last().map(|l| vec![l.inv()]).unwrap_or_default();
        out.push(random_letter_avoiding(k, &avoid, rng));
    }
    out
}

/// How a cyclically reduced word is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    /// Reduced words drawn uniformly, rejected until cyclically reduced. Exactly uniform.
    #[default]
    Rejection,
    /// Sequential draw with the final letter redrawn to avoid wraparound cancellation.
    Sequential,
}

/// Draws a cyclically reduced word from an existing generator.
pub fn sample_cyclic_with<R: Rng>(k: u8, n: usize, sampler: Sampler, rng: &mut R) -> Vec<Letter> {
    if n == 0 {
        return Vec::new();
    }
    match sampler {
        Sampler::Rejection => loop {
            let w = random_reduced_word(k, n, rng);
            if is_reduced(&w, true) {
                return w;
            }
        },
        Sampler::Sequential => {
            if n == 1 {
                return random_reduced_word(k, 1, rng);
            }
            let mut w = random_reduced_word(k, n - 1, rng);
            let avoid = [w[n - 2].inv(), w[0].inv()];
            w.push(random_letter_avoiding(k, &avoid, rng));
            w
        }
    }
}

/// Cyclically reduced word of length `n` over `F_k`, deterministic in `(k, n, seed)`.
pub fn random_cyclically_reduced_word(
    k: u8,
    n: usize,
    seed: u64,
) -> Result<ReducedWord, WordError> {
    random_cyclically_reduced_word_with(k, n, seed, Sampler::default())
}

pub fn random_cyclically_reduced_word_with(
    k: u8,
    n: usize,
    seed: u64,
    sampler: Sampler,
) -> Result<ReducedWord, WordError> {
    check_rank(k)?;
    let mut rng = rng_stream(seed, 0);
    let letters = sample_cyclic_with(k, n, sampler, &mut rng);
    Ok(ReducedWord {
        letters,
        cyclic: true,
    })
}

/// A finite presentation `<x_1..x_k | relators>` with all relators of one length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Presentation {
    pub k: u8,
    pub relators: Vec<ReducedWord>,
}

/// Number of relators at density `density`: `floor((2k-1)^(n*density))`.
pub fn relator_count(k: u8, n: usize, density: f64) -> Result<u64, WordError> {
    if !(density > 0.0 && density < 0.5) {
        return Err(WordError::BadDensity(density));
    }
    let mut exponent = n as f64 * density;
    if (exponent - exponent.round()).abs() < 1e-9 {
        exponent = exponent.round();
    }
    let required = ((2 * k as u32 - 1) as f64).powf(exponent);
    let floored = (required * (1.0 + 1e-12)).floor();
    if floored > MAX_RELATORS as f64 {
        return Err(WordError::RelatorOverflow { required });
    }
    Ok(floored.max(1.0) as u64)
}

/// Samples a presentation at density `density`; each relator is drawn from its own sub-stream.
pub fn sample_presentation(
    k: u8,
    n: usize,
    density: f64,
    seed: u64,
) -> Result<Presentation, WordError> {
    check_rank(k)?;
    let count = relator_count(k, n, density)?;
    let relators = (0..count)
        .map(|i| {
            let mut rng = rng_stream(seed, i + 1);
            ReducedWord {
                letters: sample_cyclic_with(k, n, Sampler::default(), &mut rng),
                cyclic: true,
            }
        })
        .collect();
    Ok(Presentation { k, relators })
}

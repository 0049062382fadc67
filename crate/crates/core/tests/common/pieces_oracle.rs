use spineforge::words::{Letter, ReducedWord};

/// Longest common prefix of any two readings at distinct (text, offset) positions,
/// by direct comparison of every pair.
pub fn brute_force_piece(relators: &[ReducedWord]) -> (usize, f64) {
    let mut texts: Vec<Vec<Letter>> = Vec::new();
    for r in relators {
        texts.push(r.letters().to_vec());
        texts.push(r.inverse().letters().to_vec());
    }
    let mut best = 0;
    let mut ratio: f64 = 0.0;
    for (i, a) in texts.iter().enumerate() {
        for (j, b) in texts.iter().enumerate() {
            for p in 0..a.len() {
                for q in 0..b.len() {
                    if (i, p) >= (j, q) {
                        continue;
                    }
                    let cap = a.len().min(b.len());
                    let mut l = 0;
                    while l < cap && a[(p + l) % a.len()] == b[(q + l) % b.len()] {
                        l += 1;
                    }
                    best = best.max(l);
                    ratio = ratio.max(l as f64 / cap as f64);
                }
            }
        }
    }
    (best, ratio)
}

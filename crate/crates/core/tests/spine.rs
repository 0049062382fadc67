//! Transversal transport and cocycle holonomy on small hand-built spines and on
//! planted pipeline outputs.

use std::collections::HashMap;

use spineforge::pipeline::{build_spine, planted_relator};
use spineforge::rosegraph::End;
use spineforge::spine::{check_regularity, Kind, Spine, VertexClass};

mod common;
use common::engineered::*;

/// Holonomy composed directly from the walk. Traversal `s` meets the sink through
/// its step neighbour `s+1` (even `s`) or `s-1` (odd `s`), and the source through
/// the other one. A transversal traversal is carried to the traversal of the next
/// edge that turns toward the same third edge at the shared vertex.
fn walk_holonomy(walk: &[usize], start: usize) -> Vec<usize> {
    let n = walk.len();
    let neighbour_at = |s: usize, sink: bool| -> usize {
        if s.is_multiple_of(2) == sink {
            (s + 1) % n
        } else {
            (s + n - 1) % n
        }
    };
    let over = |edge: usize, skip: usize| -> Vec<usize> {
        (0..n).filter(|&s| walk[s] == edge && s != skip).collect()
    };
    let transversal = over(walk[start], start);
    let mut current = transversal.clone();
    for step in 0..n {
        let t = (start + step) % n;
        let sink = t.is_multiple_of(2);
        let next = (t + 1) % n;
        for c in current.iter_mut() {
            let third = walk[neighbour_at(*c, sink)];
            let hits: Vec<usize> = over(walk[next], next)
                .into_iter()
                .filter(|&s| walk[neighbour_at(s, sink)] == third)
                .collect();
            assert_eq!(hits.len(), 1, "walk {walk:?} step {t}");
            *c = hits[0];
        }
    }
    current
        .iter()
        .map(|c| transversal.iter().position(|t| t == c).unwrap())
        .collect()
}

/// Every closed walk of length 12 whose sink passages and source passages each
/// use every pair of distinct edges exactly once.
fn all_walks() -> Vec<Vec<usize>> {
    fn go(walk: &mut Vec<usize>, used: &mut [[[bool; 4]; 4]; 2], out: &mut Vec<Vec<usize>>) {
        let t = walk.len();
        let cur = walk[t - 1];
        if t == 12 {
            if cur != walk[0] && !used[1][cur][walk[0]] {
                out.push(walk.clone());
            }
            return;
        }
        let side = (t - 1) % 2;
        for nx in 0..4 {
            if nx == cur || used[side][cur][nx] {
                continue;
            }
            used[side][cur][nx] = true;
            used[side][nx][cur] = true;
            walk.push(nx);
            go(walk, used, out);
            walk.pop();
            used[side][cur][nx] = false;
            used[side][nx][cur] = false;
        }
    }
    let mut out = Vec::new();
    go(&mut vec![0], &mut [[[false; 4]; 4]; 2], &mut out);
    out
}

#[test]
fn one_swapped_pair_is_detected_as_a_transposition() {
    for (walk, expected) in [(GOOD, vec![0, 1]), (SWAPPED, vec![1, 0])] {
        let s = two_vertex_spine(&walk);
        assert_eq!(s.classify_vertices(), vec![VertexClass::Genuine; 2]);
        let rep = check_regularity(&s, Some(12));
        assert!(rep.r1.pass && rep.r2.pass && rep.r3.pass && rep.r4.pass);
        assert_eq!(walk_holonomy(&walk, 0), expected);
        assert_eq!(s.cocycle_holonomy(0).unwrap(), expected);
        assert_eq!(rep.r5.pass, expected == vec![0, 1]);
        assert_eq!(rep.holonomies[0].identity, expected == vec![0, 1]);
    }
}

#[test]
fn holonomy_matches_the_walk_oracle_on_every_two_vertex_spine() {
    let walks = all_walks();
    assert_eq!(walks.len(), 1320);
    let mut nontrivial = 0;
    for walk in &walks {
        let s = two_vertex_spine(walk);
        let rep = check_regularity(&s, None);
        assert!(rep.r1.pass && rep.r2.pass && rep.r3.pass, "{walk:?}");
        let base = walk_holonomy(walk, 0);
        for start in 0..walk.len() {
            let h = s.cocycle_holonomy_from(0, start).unwrap();
            assert_eq!(h, walk_holonomy(walk, start), "{walk:?} from {start}");
            // Rotating the base point conjugates; in S_2 the element is unchanged.
            assert_eq!(h, base);
        }
        if base != vec![0, 1] {
            nontrivial += 1;
        }
    }
    assert!(nontrivial > 0 && nontrivial < walks.len());
}

#[test]
fn d2_transversal_is_a_single_strand() {
    let pr = planted_relator(Kind::Simplicial, 2, 3, 3).unwrap();
    let out = build_spine(&pr.word, &pr.params).unwrap();
    for c in 0..out.spine.circles.copies {
        assert_eq!(out.spine.cocycle_holonomy(c).unwrap(), vec![0]);
    }
}

/// Checks every transport at genuine vertices along each component: it is a
/// bijection and, for cubical spines, commutes with the antipodal pairing.
fn check_transports(s: &Spine) {
    let classes = s.classify_vertices();
    let l = &s.circles;
    for a in 0..l.num_edges() {
        let h_in = s.half_edge_of(a, End::Head);
        let v = s.sigma.vertex_of(h_in);
        if classes[v] != VertexClass::Genuine {
            continue;
        }
        let b = l.head(a);
        let h_out = s.half_edge_of(b, End::Tail);
        let pairs = s.transversal_transport(a, h_in, h_out).unwrap();
        let map: HashMap<usize, usize> = pairs.iter().copied().collect();
        let mut targets: Vec<usize> = map.values().copied().collect();
        targets.sort();
        targets.dedup();
        assert_eq!(targets.len(), map.len());
        assert_eq!(
            map.len(),
            s.glue_degree() - if s.kind.has_pairing() { 2 } else { 1 }
        );
        if s.kind.has_pairing() {
            let fin = &s.fibers[h_in.edge];
            let fout = &s.fibers[h_out.edge];
            for (&x, &y) in &map {
                let ax = fin.antipode(x).unwrap();
                assert_eq!(fout.antipode(y), Some(map[&ax]));
            }
        }
    }
}

#[test]
fn transports_on_planted_spines_are_bijections_and_respect_the_pairing() {
    for (kind, d, k) in [(Kind::Simplicial, 3, 3), (Kind::Cubical, 3, 4)] {
        let pr = planted_relator(kind, d, k, 5).unwrap();
        let out = build_spine(&pr.word, &pr.params).unwrap();
        check_transports(&out.spine);
        let s = &out.spine;
        let n = s.circles.len();
        for c in 0..s.circles.copies {
            let base = s.cocycle_holonomy(c).unwrap();
            for start in [n / 7, n / 3, n - 1] {
                let h = s.cocycle_holonomy_from(c, start).unwrap();
                let identity = |p: &[usize]| p.iter().enumerate().all(|(i, &x)| i == x);
                assert_eq!(identity(&h), identity(&base));
            }
        }
    }
}

#[test]
fn d3_corner_transport_matches_pair_enumeration() {
    let pr = planted_relator(Kind::Simplicial, 3, 3, 5).unwrap();
    let s = build_spine(&pr.word, &pr.params).unwrap().spine;
    let classes = s.classify_vertices();
    let l = &s.circles;
    let a = (0..l.num_edges())
        .find(|&a| classes[s.sigma.vertex_of(s.half_edge_of(a, End::Head))] == VertexClass::Genuine)
        .unwrap();
    let h_in = s.half_edge_of(a, End::Head);
    let h_out = s.half_edge_of(l.head(a), End::Tail);
    let v = s.sigma.vertex_of(h_in);
    // All strand passages at the corner as unordered half-edge pairs.
    let mut passages = Vec::new();
    for e in 0..l.num_edges() {
        let h = s.half_edge_of(e, End::Head);
        if s.sigma.vertex_of(h) == v {
            let (next, h2) = s.continuation(e, h);
            passages.push((e, h, next, h2));
        }
    }
    assert_eq!(passages.len(), 6);
    let pair_of = |x: usize, h| {
        passages
            .iter()
            .find_map(|&(e, he, nx, h2)| {
                if e == x && he == h {
                    Some(h2)
                } else if nx == x && h2 == h {
                    Some(he)
                } else {
                    None
                }
            })
            .unwrap()
    };
    let transport = s.transversal_transport(a, h_in, h_out).unwrap();
    assert_eq!(transport.len(), 2);
    for (x, y) in transport {
        assert_eq!(pair_of(x, h_in), pair_of(y, h_out));
    }
}

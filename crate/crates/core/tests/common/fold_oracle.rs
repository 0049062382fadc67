use spineforge::rosegraph::{
    apply_partition, CircleFamily, EdgePartition, GraphError, LabeledGraph,
};
use spineforge::words::{is_reduced, Letter, ReducedWord};

/// Pairwise scan for two distinct half-edges departing one vertex with one label.
pub fn oracle_immersed(g: &LabeledGraph) -> bool {
    let mut halves = Vec::new();
    for e in &g.edges {
        halves.push((e.tail, e.label));
        halves.push((e.head, e.label.inv()));
    }
    for i in 0..halves.len() {
        for j in i + 1..halves.len() {
            if halves[i] == halves[j] {
                return false;
            }
        }
    }
    true
}

pub enum OracleOutcome {
    Inconsistent,
    Illegal,
    Legal(LabeledGraph),
}

/// Naive quotient: vertex classes by repeated relabeling, then complete Stallings
/// folding; the quotient is legal iff folding changes nothing.
pub fn oracle_quotient(l: &CircleFamily, classes: &[Vec<(usize, bool)>]) -> OracleOutcome {
    let n = l.num_edges();
    let mut vclass: Vec<usize> = (0..n).collect();
    let merge = |vclass: &mut Vec<usize>, a: usize, b: usize| {
        let (ca, cb) = (vclass[a], vclass[b]);
        if ca != cb {
            let (keep, drop) = (ca.min(cb), ca.max(cb));
            for c in vclass.iter_mut() {
                if *c == drop {
                    *c = keep;
                }
            }
        }
    };
    let mut reps = Vec::new();
    for class in classes {
        let base = *class.iter().min().unwrap();
        let class: Vec<(usize, bool)> = class.iter().map(|&(e, f)| (e, f == base.1)).collect();
        let (e0, f0) = (base.0, true);
        let lab0 = if f0 { l.label(e0) } else { l.label(e0).inv() };
        for &(e, f) in &class {
            let lab = if f { l.label(e) } else { l.label(e).inv() };
            if lab != lab0 {
                return OracleOutcome::Inconsistent;
            }
            let (t0, h0) = if f0 {
                (l.tail(e0), l.head(e0))
            } else {
                (l.head(e0), l.tail(e0))
            };
            let (t, h) = if f {
                (l.tail(e), l.head(e))
            } else {
                (l.head(e), l.tail(e))
            };
            merge(&mut vclass, t0, t);
            merge(&mut vclass, h0, h);
        }
        reps.push((class.iter().map(|m| m.0).min().unwrap(), e0, f0, lab0));
    }
    reps.sort();
    // Vertex names ordered by smallest member.
    let mut names: Vec<usize> = Vec::new();
    for v in 0..n {
        if !names.contains(&vclass[v]) {
            names.push(vclass[v]);
        }
    }
    let name = |v: usize| names.iter().position(|&c| c == vclass[v]).unwrap();
    let mut edges: Vec<(usize, usize, Letter)> = reps
        .iter()
        .map(|&(_, e0, f0, lab)| {
            let (t, h) = if f0 {
                (l.tail(e0), l.head(e0))
            } else {
                (l.head(e0), l.tail(e0))
            };
            (name(t), name(h), lab)
        })
        .collect();
    let mut g = LabeledGraph::new(names.len());
    for &(t, h, lab) in &edges {
        g.add_edge(t, h, lab);
    }
    // Stallings folding on a copy.
    let mut vmap: Vec<usize> = (0..names.len()).collect();
    let mut folded_any = false;
    loop {
        let mut fold = None;
        'outer: for i in 0..edges.len() {
            for j in 0..edges.len() {
                if i == j {
                    continue;
                }
                let (ti, hi, li) = edges[i];
                let (tj, hj, lj) = edges[j];
                let ends_i = [(vmap[ti], li, vmap[hi]), (vmap[hi], li.inv(), vmap[ti])];
                let ends_j = [(vmap[tj], lj, vmap[hj]), (vmap[hj], lj.inv(), vmap[tj])];
                for a in ends_i {
                    for b in ends_j {
                        if a.0 == b.0 && a.1 == b.1 {
                            fold = Some((i, j, a.2, b.2));
                            break 'outer;
                        }
                    }
                }
            }
        }
        match fold {
            None => break,
            Some((_, j, x, y)) => {
                folded_any = true;
                let (keep, drop) = (x.min(y), x.max(y));
                for v in vmap.iter_mut() {
                    if *v == drop {
                        *v = keep;
                    }
                }
                edges.remove(j);
            }
        }
    }
    if folded_any {
        OracleOutcome::Illegal
    } else {
        OracleOutcome::Legal(g)
    }
}

/// Compares `apply_partition` with the fold oracle on one partition.
pub fn agreement(l: &CircleFamily, classes: &[Vec<(usize, bool)>]) -> Result<(), String> {
    let p = EdgePartition::from_classes(l.num_edges(), classes).map_err(|e| e.to_string())?;
    let got = apply_partition(l, &p);
    let mut full: Vec<Vec<(usize, bool)>> = classes.to_vec();
    for e in 0..l.num_edges() {
        if !classes.iter().flatten().any(|m| m.0 == e) {
            full.push(vec![(e, true)]);
        }
    }
    match (oracle_quotient(l, &full), got) {
        (OracleOutcome::Inconsistent, Err(GraphError::InconsistentLabels { .. })) => Ok(()),
        (OracleOutcome::Illegal, Err(GraphError::IllegalQuotient { .. })) => Ok(()),
        (OracleOutcome::Legal(g), Ok(q)) if g == q.graph && oracle_immersed(&q.graph) => Ok(()),
        (_, got) => Err(format!(
            "disagreement on {} x{} {classes:?}: {got:?}",
            l.word, l.copies
        )),
    }
}

pub fn check_agreement(l: &CircleFamily, classes: &[Vec<(usize, bool)>]) {
    agreement(l, classes).unwrap();
}

pub fn all_cyclic_words(k: u8, n: usize) -> Vec<ReducedWord> {
    let alphabet: Vec<Letter> = (0..2 * k as usize).map(Letter::from_index).collect();
    let mut out = Vec::new();
    for mut code in 0..alphabet.len().pow(n as u32) {
        let mut w = Vec::new();
        for _ in 0..n {
            w.push(alphabet[code % alphabet.len()]);
            code /= alphabet.len();
        }
        if is_reduced(&w, true) {
            out.push(ReducedWord::new(w, true).unwrap());
        }
    }
    out
}

/// Every partition of `0..n` into singletons and pairs (singletons omitted).
pub fn pairings(n: usize) -> Vec<Vec<(usize, usize)>> {
    fn rec(rest: &[usize], acc: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        match rest.split_first() {
            None => out.push(acc.clone()),
            Some((&first, tail)) => {
                rec(tail, acc, out);
                for (i, &other) in tail.iter().enumerate() {
                    acc.push((first, other));
                    let remaining: Vec<usize> = tail
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, &x)| x)
                        .collect();
                    rec(&remaining, acc, out);
                    acc.pop();
                }
            }
        }
    }
    let mut out = Vec::new();
    rec(&(0..n).collect::<Vec<_>>(), &mut Vec::new(), &mut out);
    out
}

/// Orients the second member of a pair so labels agree when possible.
pub fn orient(l: &CircleFamily, a: usize, b: usize) -> Vec<(usize, bool)> {
    let fwd = l.label(a) == l.label(b) || l.label(a) != l.label(b).inv();
    vec![(a, true), (b, fwd)]
}

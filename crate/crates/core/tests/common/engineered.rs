use std::collections::{BTreeMap, HashMap};

use spineforge::rosegraph::{circles_from_word, EdgePartition};
use spineforge::spine::{Kind, Spine};
use spineforge::words::{Letter, ReducedWord};

/// Labels of the four edges running from the source vertex to the sink vertex.
pub fn edge_letters() -> [Letter; 4] {
    [
        Letter::new(1, false),
        Letter::new(2, false),
        Letter::new(3, false),
        Letter::new(1, true),
    ]
}

/// A d=3 simplicial spine on two vertices joined by four edges. One circle walks
/// the edges in the order `walk`, alternately forward (even steps) and backward.
pub fn two_vertex_spine(walk: &[usize]) -> Spine {
    let x = edge_letters();
    let letters = walk
        .iter()
        .enumerate()
        .map(|(t, &i)| if t % 2 == 0 { x[i] } else { x[i].inv() })
        .collect();
    let l = circles_from_word(&ReducedWord::new(letters, true).unwrap(), 1).unwrap();
    let mut classes = vec![Vec::new(); 4];
    for (t, &i) in walk.iter().enumerate() {
        classes[i].push((t, t % 2 == 0));
    }
    let p = EdgePartition::from_classes(l.num_edges(), &classes).unwrap();
    Spine::from_partition(Kind::Simplicial, 3, l, p, &HashMap::new(), BTreeMap::new()).unwrap()
}

pub const GOOD: [usize; 12] = [0, 1, 0, 2, 0, 3, 1, 2, 3, 1, 2, 3];
/// `GOOD` with the passages at steps 8 and 9 exchanged.
pub const SWAPPED: [usize; 12] = [0, 1, 0, 2, 0, 3, 1, 2, 1, 3, 2, 3];

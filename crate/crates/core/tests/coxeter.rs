use nalgebra::DMatrix;
use proptest::prelude::*;
use spineforge::coxeter::{
    classify, gram_matrix, vertex_figure_signatures, Classification, CoxeterDiagram, DiagramKind,
};

use Classification::*;
use DiagramKind::{Cube, Simplex};

fn class(kind: DiagramKind, m: u32, d: usize) -> Classification {
    classify(&CoxeterDiagram::new(kind, m, d).unwrap()).unwrap()
}

/// (negative, zero) eigenvalue counts of a dense symmetric matrix.
fn dense_signature(m: &DMatrix<f64>) -> (usize, usize) {
    let eig = m.clone().symmetric_eigen().eigenvalues;
    let neg = eig.iter().filter(|&&x| x < -1e-7).count();
    let zero = eig.iter().filter(|&&x| x.abs() <= 1e-7).count();
    (neg, zero)
}

/// Classification computed from dense eigenvalues of the Gram matrix and of
/// every principal submatrix with one row and column removed.
fn dense_classify(kind: DiagramKind, m: u32, d: usize) -> Classification {
    let g = gram_matrix(&CoxeterDiagram::new(kind, m, d).unwrap());
    let n = g.size();
    let full = DMatrix::from_fn(n, n, |i, j| g.entries[i][j]);
    match dense_signature(&full) {
        (0, 0) => return Spherical,
        (0, _) => return Euclidean,
        (1, 0) => {}
        other => panic!("unexpected signature {other:?}"),
    }
    let figures: Vec<(usize, usize)> = (0..n)
        .map(|v| dense_signature(&full.clone().remove_row(v).remove_column(v)))
        .collect();
    if figures.iter().any(|&(neg, _)| neg > 0) {
        Superideal
    } else if figures.iter().all(|&f| f == (0, 0)) {
        Compact
    } else {
        Ideal
    }
}

#[test]
fn finite_and_euclidean_families() {
    for d in 2..=10 {
        assert_eq!(class(Simplex, 3, d), Spherical, "A_(d+1), d = {d}");
        assert_eq!(class(Simplex, 4, d), Spherical, "BC_(d+1), d = {d}");
        assert_eq!(class(Cube, 3, d), Spherical, "BC_(d+1), d = {d}");
        assert_eq!(class(Cube, 4, d), Euclidean, "cubic honeycomb, d = {d}");
    }
}

#[test]
fn hyperbolic_cells_that_agree_with_the_example_lists() {
    for m in 7..=50 {
        assert_eq!(class(Simplex, m, 2), Compact, "m = {m}");
    }
    assert_eq!(class(Simplex, 6, 3), Ideal);
    for m in 7..=20 {
        assert_eq!(class(Simplex, m, 3), Superideal, "m = {m}");
    }
    for d in 5..=10 {
        for m in 5..=12 {
            assert_eq!(class(Simplex, m, d), Superideal, "({m},{d})");
            assert_eq!(class(Cube, m, d), Superideal, "({m},{d})");
        }
    }
    for m in 6..=12 {
        assert_eq!(class(Simplex, m, 4), Superideal, "m = {m}");
    }
    assert_eq!(class(Cube, 5, 3), Compact);
    for m in 7..=12 {
        assert_eq!(class(Cube, m, 3), Superideal, "m = {m}");
    }
    assert_eq!(class(Cube, 5, 4), Compact);
    for m in 6..=12 {
        assert_eq!(class(Cube, m, 4), Superideal, "m = {m}");
    }
}

/// The two cells where the vertex-figure criterion differs from the example
/// lists: the {3,3,3,5} honeycomb is compact, and {4,3,6} has ideal vertices.
#[test]
fn boundary_cells_follow_the_vertex_figures() {
    assert_eq!(class(Simplex, 5, 4), Compact);
    assert_eq!(dense_classify(Simplex, 5, 4), Compact);
    assert_eq!(class(Cube, 6, 3), Ideal);
    assert_eq!(dense_classify(Cube, 6, 3), Ideal);
    let figs = vertex_figure_signatures(&CoxeterDiagram::new(Cube, 6, 3).unwrap()).unwrap();
    assert_eq!(figs.iter().filter(|s| s.zero == 1).count(), 1);
}

#[test]
fn agrees_with_dense_eigenvalues() {
    for kind in [Simplex, Cube] {
        for m in 3..=20 {
            for d in 2..=10 {
                assert_eq!(
                    class(kind, m, d),
                    dense_classify(kind, m, d),
                    "{kind} ({m},{d})"
                );
            }
        }
    }
}

#[test]
fn class_is_monotone_in_m() {
    for kind in [Simplex, Cube] {
        for d in 2..=10 {
            let classes: Vec<Classification> = (3..=30).map(|m| class(kind, m, d)).collect();
            assert!(
                classes.windows(2).all(|w| w[0] <= w[1]),
                "{kind} d = {d}: {classes:?}"
            );
        }
    }
}

proptest! {
    #[test]
    fn gram_is_symmetric_tridiagonal(m in 3u32..200, d in 2usize..30, cube in any::<bool>()) {
        let kind = if cube { Cube } else { Simplex };
        let g = gram_matrix(&CoxeterDiagram::new(kind, m, d).unwrap());
        prop_assert_eq!(g.size(), d + 1);
        for i in 0..=d {
            prop_assert_eq!(g.entries[i][i], 1.0);
            for j in 0..=d {
                prop_assert_eq!(g.entries[i][j], g.entries[j][i]);
                if i.abs_diff(j) > 1 {
                    prop_assert_eq!(g.entries[i][j], 0.0);
                }
            }
        }
        let first = -(std::f64::consts::PI / m as f64).cos();
        prop_assert!((g.entries[0][1] - first).abs() < 1e-15);
    }
}

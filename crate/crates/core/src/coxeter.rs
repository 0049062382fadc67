//! Gram matrices of the linear diagrams for the simplex groups Δ(m,d) and cube
//! groups ⧄(m,d), and their classification by signature and vertex figures.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Eigenvalues within this distance of zero are confirmed exactly when possible.
pub const ZERO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum CoxeterError {
    #[error("invalid diagram: {0}")]
    InvalidDiagram(String),
    #[error("indeterminate (increase precision): eigenvalue within {tol:e} of zero for labels {labels:?}")]
    Indeterminate { labels: Vec<u32>, tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiagramKind {
    Simplex,
    Cube,
}

impl FromStr for DiagramKind {
    type Err = CoxeterError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "simplex" | "simplicial" => Ok(DiagramKind::Simplex),
            "cube" | "cubical" => Ok(DiagramKind::Cube),
            _ => Err(CoxeterError::InvalidDiagram(format!("unknown kind {s:?}"))),
        }
    }
}

impl fmt::Display for DiagramKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiagramKind::Simplex => "simplex",
            DiagramKind::Cube => "cube",
        })
    }
}

/// Ordered so that the class index grows with m along each family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Spherical,
    Euclidean,
    Compact,
    Ideal,
    Superideal,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Spherical => "spherical",
            Classification::Euclidean => "euclidean",
            Classification::Compact => "compact",
            Classification::Ideal => "ideal",
            Classification::Superideal => "superideal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoxeterDiagram {
    pub kind: DiagramKind,
    pub m: u32,
    pub d: usize,
}

impl CoxeterDiagram {
    pub fn new(kind: DiagramKind, m: u32, d: usize) -> Result<CoxeterDiagram, CoxeterError> {
        if m < 3 {
            return Err(CoxeterError::InvalidDiagram(format!("m = {m} < 3")));
        }
        if d < 2 {
            return Err(CoxeterError::InvalidDiagram(format!("d = {d} < 2")));
        }
        Ok(CoxeterDiagram { kind, m, d })
    }

    pub fn nodes(&self) -> usize {
        self.d + 1
    }

    /// Labels of the d edges of the linear diagram, in order.
    pub fn labels(&self) -> Vec<u32> {
        let mut labels = vec![3; self.d];
        labels[0] = self.m;
        if self.kind == DiagramKind::Cube {
            labels[self.d - 1] = 4;
        }
        labels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    pub entries: Vec<Vec<f64>>,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.entries.len()
    }
}

fn cos_pi_over(label: u32) -> f64 {
    match label {
        2 => 0.0,
        3 => 0.5,
        4 => std::f64::consts::FRAC_1_SQRT_2,
        6 => 0.75f64.sqrt(),
        _ => (std::f64::consts::PI / label as f64).cos(),
    }
}

/// `4·cos²(π/label)` when it is an integer (labels 2, 3, 4, 6).
fn exact_cos2_quarters(label: u32) -> Option<i64> {
    match label {
        2 => Some(0),
        3 => Some(1),
        4 => Some(2),
        6 => Some(3),
        _ => None,
    }
}

pub fn gram_matrix(diag: &CoxeterDiagram) -> GramMatrix {
    let n = diag.nodes();
    let mut entries = vec![vec![0.0; n]; n];
    for (i, row) in entries.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for (i, &l) in diag.labels().iter().enumerate() {
        let c = -cos_pi_over(l);
        entries[i][i + 1] = c;
        entries[i + 1][i] = c;
    }
    GramMatrix { entries }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub positive: usize,
    pub zero: usize,
    pub negative: usize,
}

impl Signature {
    fn add(self, o: Signature) -> Signature {
        Signature {
            positive: self.positive + o.positive,
            zero: self.zero + o.zero,
            negative: self.negative + o.negative,
        }
    }

    pub fn is_positive_definite(&self) -> bool {
        self.zero == 0 && self.negative == 0
    }

    pub fn is_indefinite(&self) -> bool {
        self.negative > 0
    }
}

/// Number of eigenvalues below `shift` of the chain Gram matrix with unit diagonal
/// and squared off-diagonals `off2`, by the pivot recurrence of its LDLᵀ factorization.
fn count_below(off2: &[f64], shift: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut q = 1.0 - shift;
    for k in 0..=off2.len() {
        if k > 0 {
            q = (1.0 - shift) - off2[k - 1] / q;
        }
        if q.abs() < tiny {
            q = -tiny;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Exact determinant of the chain times `4^nodes`, when every label has a
/// rational squared cosine.
fn exact_scaled_det(labels: &[u32]) -> Option<BigInt> {
    // E_k = 4·E_{k-1} − 4·p_k·E_{k-2}, where p_k = 4cos²(π/l_k) and E_k = 4^k·D_k.
    let mut prev = BigInt::from(1);
    let mut cur = BigInt::from(4);
    for &l in labels {
        let p = exact_cos2_quarters(l)?;
        let next = &cur * 4 - &prev * (4 * p);
        prev = cur;
        cur = next;
    }
    Some(cur)
}

/// Signature of one connected linear chain.
fn chain_signature(labels: &[u32]) -> Result<Signature, CoxeterError> {
    let n = labels.len() + 1;
    let off2: Vec<f64> = labels.iter().map(|&l| cos_pi_over(l).powi(2)).collect();
    let below_lo = count_below(&off2, -ZERO_TOLERANCE);
    let below_hi = count_below(&off2, ZERO_TOLERANCE);
    let (negative, zero) = if below_hi == below_lo {
        (below_lo, 0)
    } else {
        // A chain with nonzero off-diagonals has simple eigenvalues, so at most
        // one sits near zero; the exact determinant decides it.
        let det = exact_scaled_det(labels).ok_or_else(|| CoxeterError::Indeterminate {
            labels: labels.to_vec(),
            tol: ZERO_TOLERANCE,
        })?;
        if det.is_zero() {
            (below_lo, below_hi - below_lo)
        } else if det.is_negative() == (below_lo % 2 == 1) {
            (below_lo, 0)
        } else {
            (below_lo + 1, 0)
        }
    };
    Ok(Signature {
        positive: n - negative - zero,
        zero,
        negative,
    })
}

/// Signature of the subdiagram on the given nodes of a linear diagram.
fn subdiagram_signature(labels: &[u32], keep: &[bool]) -> Result<Signature, CoxeterError> {
    let mut total = Signature {
        positive: 0,
        zero: 0,
        negative: 0,
    };
    let mut i = 0;
    while i < keep.len() {
        if !keep[i] {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < keep.len() && keep[j + 1] {
            j += 1;
        }
        total = total.add(chain_signature(&labels[i..j])?);
        i = j + 1;
    }
    Ok(total)
}

pub fn signature(diag: &CoxeterDiagram) -> Result<Signature, CoxeterError> {
    chain_signature(&diag.labels())
}

/// Signatures of the vertex figures, the subdiagrams with one node deleted.
pub fn vertex_figure_signatures(diag: &CoxeterDiagram) -> Result<Vec<Signature>, CoxeterError> {
    let labels = diag.labels();
    (0..diag.nodes())
        .map(|v| {
            let keep: Vec<bool> = (0..diag.nodes()).map(|u| u != v).collect();
            subdiagram_signature(&labels, &keep)
        })
        .collect()
}

pub fn classify(diag: &CoxeterDiagram) -> Result<Classification, CoxeterError> {
    let sig = signature(diag)?;
    if sig.is_positive_definite() {
        return Ok(Classification::Spherical);
    }
    if sig.negative == 0 {
        return Ok(Classification::Euclidean);
    }
    if sig.negative > 1 || sig.zero > 0 {
        return Err(CoxeterError::InvalidDiagram(format!(
            "signature {sig:?} is neither spherical, euclidean nor hyperbolic"
        )));
    }
    let figures = vertex_figure_signatures(diag)?;
    Ok(if figures.iter().any(Signature::is_indefinite) {
        Classification::Superideal
    } else if figures.iter().all(Signature::is_positive_definite) {
        Classification::Compact
    } else {
        Classification::Ideal
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRow {
    pub kind: DiagramKind,
    pub m: u32,
    pub d: usize,
    pub class: Option<Classification>,
    pub error: Option<String>,
}

/// One row per (kind, m, d) in the given ranges, in that nesting order.
pub fn classification_table(
    kinds: &[DiagramKind],
    ms: std::ops::RangeInclusive<u32>,
    ds: std::ops::RangeInclusive<usize>,
) -> Result<Vec<ClassificationRow>, CoxeterError> {
    let mut rows = Vec::new();
    for &kind in kinds {
        for m in ms.clone() {
            for d in ds.clone() {
                let diag = CoxeterDiagram::new(kind, m, d)?;
                let (class, error) = match classify(&diag) {
                    Ok(c) => (Some(c), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                rows.push(ClassificationRow {
                    kind,
                    m,
                    d,
                    class,
                    error,
                });
            }
        }
    }
    Ok(rows)
}

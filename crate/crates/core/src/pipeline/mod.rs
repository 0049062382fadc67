//! The construction pipeline: normalize the relator length, cut L into blocks,
//! match and glue blocks into beachball chains, clear the remainder, glue the
//! reservoir along hypercube or lens templates, and assemble the spine.

mod blocks;
mod planted;
mod reservoir;

pub use blocks::{
    glue_matched, match_blocks, module_of_subset, normalize_length, resolve_unmatched,
    segment_blocks, Block, BlockStructure, Matching, Normalization,
};
pub use planted::{planted_relator, PlantedRelator};
pub use reservoir::{
    adjust_cocycles, clear_remainder, glue_reservoir, swap_beachballs, symmetrize, template_for,
    ClearStats, CocycleReport, ReservoirStats, SymmetrizeReport,
};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moves::{GlueParams, GluingState, MoveError, TraceEvent};
use crate::rosegraph::{circles_from_word, GraphError};
use crate::spine::{check_regularity, Kind, Spine, SpineError, SpineReport};
use crate::words::{ReducedWord, WordError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Params,
    Normalize,
    Segment,
    Match,
    Resolve,
    GlueMatched,
    ClearRemainder,
    GlueReservoir,
    Symmetrize,
    AdjustCocycles,
    Assemble,
    Verify,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StageError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("normalization failed: {0}")]
    NormalizationFailed(String),
    #[error("divisibility violated: {0}")]
    Divisibility(String),
    #[error("resolution failed at block {block}: {reason}")]
    ResolutionFailed { block: usize, reason: String },
    #[error("reservoir exhausted (deficit {deficit}): {detail}")]
    ReservoirExhausted { deficit: usize, detail: String },
    #[error("cover search failed: {0}")]
    CoverSearchFailed(String),
    #[error("cocycle adjustment failed: {0}")]
    CocycleAdjustmentFailed(String),
    #[error("spine is not regular: {0}")]
    NotRegular(String),
    #[error(transparent)]
    Move(#[from] MoveError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Spine(#[from] SpineError),
    #[error(transparent)]
    Words(#[from] WordError),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("stage {stage}: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    pub source: StageError,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<StageError>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError {
            stage,
            source: e.into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildParams {
    pub kind: Kind,
    pub d: usize,
    pub k: u8,
    pub n: usize,
    pub lambda: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub copies: usize,
    pub seed: u64,
    pub retry_budget: usize,
}

impl BuildParams {
    /// λ = 4𝔡, N = 8λ, one copy of L per copy-subset.
    pub fn with_defaults(kind: Kind, d: usize, k: u8, n: usize, seed: u64) -> BuildParams {
        let deg = if d >= 2 { kind.glue_degree(d) } else { 1 };
        let lambda = 4 * deg;
        BuildParams {
            kind,
            d,
            k,
            n,
            lambda,
            big_n: 8 * lambda,
            copies: deg,
            seed,
            retry_budget: 10_000,
        }
    }

    pub fn degree(&self) -> usize {
        self.kind.glue_degree(self.d)
    }

    pub fn glue_params(&self) -> GlueParams {
        GlueParams {
            kind: self.kind,
            d: self.d,
            lambda: self.lambda,
        }
    }

    /// Length of the template paths a λ-segment is cut into.
    pub fn path_len(&self) -> usize {
        match self.kind {
            Kind::Simplicial => self.d,
            Kind::Cubical => self.d - 1,
        }
    }

    pub fn validate(&self) -> Result<(), StageError> {
        let bad = |m: String| Err(StageError::InvalidParams(m));
        if self.d < 2 {
            return bad(format!("d = {} must be at least 2", self.d));
        }
        let deg = self.degree();
        let gens = 2 * self.k as usize - 1;
        let needed = match self.kind {
            Kind::Simplicial => self.d + 1,
            Kind::Cubical => 2 * self.d + 1,
        };
        if self.k < 2 || gens < needed {
            return bad(format!("2k-1 = {gens} is below {needed}"));
        }
        if self.lambda == 0 || !self.lambda.is_multiple_of(deg) {
            return bad(format!(
                "lambda = {} is not a positive multiple of {deg}",
                self.lambda
            ));
        }
        if !self.lambda.is_multiple_of(self.path_len()) {
            return bad(format!(
                "lambda = {} is not divisible by the path length {}",
                self.lambda,
                self.path_len()
            ));
        }
        if !self.big_n.is_multiple_of(2) || self.big_n < 8 * self.lambda {
            return bad(format!(
                "N = {} must be even and at least 8 lambda",
                self.big_n
            ));
        }
        if self.copies == 0 || !self.copies.is_multiple_of(deg) {
            return bad(format!(
                "copies = {} is not a positive multiple of {deg}",
                self.copies
            ));
        }
        if self.n < self.lambda * self.big_n {
            return bad(format!(
                "n = {} is shorter than one block ({})",
                self.n,
                self.lambda * self.big_n
            ));
        }
        Ok(())
    }

    /// Parses a flat `key = value` file; `#` starts a comment. Unlisted keys keep
    /// the defaults for the given kind and d.
    pub fn from_kv(text: &str) -> Result<BuildParams, StageError> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                StageError::InvalidParams(format!("line {}: expected key = value", no + 1))
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        fn num<T: std::str::FromStr>(
            map: &BTreeMap<String, String>,
            key: &str,
        ) -> Result<Option<T>, StageError> {
            map.get(key)
                .map(|v| {
                    v.parse::<T>().map_err(|_| {
                        StageError::InvalidParams(format!("{key}: cannot parse {v:?}"))
                    })
                })
                .transpose()
        }
        for key in map.keys() {
            if ![
                "kind",
                "d",
                "k",
                "n",
                "lambda",
                "N",
                "copies",
                "seed",
                "retry_budget",
            ]
            .contains(&key.as_str())
            {
                return Err(StageError::InvalidParams(format!("unknown key {key}")));
            }
        }
        let kind: Kind = match map.get("kind") {
            Some(v) => v.parse().map_err(StageError::InvalidParams)?,
            None => Kind::Simplicial,
        };
        let need = |key: &str| StageError::InvalidParams(format!("missing key {key}"));
        let d: usize = num(&map, "d")?.ok_or_else(|| need("d"))?;
        let k: u8 = num(&map, "k")?.ok_or_else(|| need("k"))?;
        let n: usize = num(&map, "n")?.ok_or_else(|| need("n"))?;
        let seed: u64 = num(&map, "seed")?.unwrap_or(0);
        let mut p = BuildParams::with_defaults(kind, d, k, n, seed);
        if let Some(v) = num(&map, "lambda")? {
            p.lambda = v;
            p.big_n = 8 * v;
        }
        if let Some(v) = num(&map, "N")? {
            p.big_n = v;
        }
        if let Some(v) = num(&map, "copies")? {
            p.copies = v;
        }
        if let Some(v) = num(&map, "retry_budget")? {
            p.retry_budget = v;
        }
        Ok(p)
    }

    pub fn to_kv(&self) -> String {
        let kind = match self.kind {
            Kind::Simplicial => "simplicial",
            Kind::Cubical => "cubical",
        };
        format!(
            "kind = {kind}\nd = {}\nk = {}\nn = {}\nlambda = {}\nN = {}\ncopies = {}\nseed = {}\nretry_budget = {}\n",
            self.d, self.k, self.n, self.lambda, self.big_n, self.copies, self.seed, self.retry_budget
        )
    }
}

/// Per-stage measurements of one build.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildStats {
    pub normalization_groups: usize,
    pub blocks: usize,
    pub tuples: usize,
    pub unmatched_fraction: f64,
    pub copies_multiplier: usize,
    /// Free edges in the remainder right after glue_matched.
    pub remainder_edges: usize,
    pub total_edges: usize,
    pub clear: ClearStats,
    pub reservoir: ReservoirStats,
    pub symmetrize: SymmetrizeReport,
    pub cocycles: CocycleReport,
    pub min_top_edge_ok: bool,
}

#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub spine: Spine,
    pub report: SpineReport,
    pub trace: Vec<TraceEvent>,
    pub stats: BuildStats,
}

/// Builds Σ from the glued state, attaching the antipodal modules recorded by
/// the lens gluings.
pub fn assemble_spine(st: &GluingState) -> Result<Spine, SpineError> {
    let p = st.params;
    let mut spine = Spine::from_partition(
        p.kind,
        p.d,
        st.circles.clone(),
        st.partition.clone(),
        &st.fiber_order,
        BTreeMap::new(),
    )?;
    if p.kind.has_pairing() {
        let mut modules: BTreeMap<usize, Vec<_>> = BTreeMap::new();
        for placement in &st.placements {
            for pairs in &placement.vertex_modules {
                for &[(e1, end1), (e2, end2)] in pairs {
                    let h1 = spine.half_edge_of(e1, end1);
                    let h2 = spine.half_edge_of(e2, end2);
                    let v = spine.sigma.vertex_of(h1);
                    modules.entry(v).or_default().push([h1, h2]);
                }
            }
        }
        spine.vertex_modules = modules;
    }
    Ok(spine)
}

fn initial_state(r: &ReducedWord, params: &BuildParams) -> Result<GluingState, PipelineError> {
    let deg = params.degree();
    let circles = circles_from_word(r, params.copies).at(Stage::Params)?;
    let subsets = (0..params.copies).map(|c| c % deg).collect();
    Ok(GluingState::new(params.glue_params(), circles, subsets))
}

/// Reconstructs the state after trace step `upto` of a build of `r`: the
/// segmentation is recomputed and the later events are replayed onto it.
pub fn replay_state(
    r: &ReducedWord,
    params: &BuildParams,
    trace: &[TraceEvent],
    upto: usize,
) -> Result<GluingState, PipelineError> {
    params.validate().at(Stage::Params)?;
    let mut st = initial_state(r, params)?;
    let norm = normalize_length(&st, params).at(Stage::Normalize)?;
    segment_blocks(&mut st, params, &norm).at(Stage::Segment)?;
    if trace.first().map(|e| e.op.as_str()) != Some("segment_blocks") {
        return Err(PipelineError {
            stage: Stage::Segment,
            source: StageError::InvalidParams("trace does not start with segment_blocks".into()),
        });
    }
    let end = (upto + 1).min(trace.len());
    GluingState::replay(&st, &trace[1..end.max(1)]).at(Stage::Verify)
}

/// Runs every stage up to and including reservoir gluing and symmetrization.
pub fn build_state(
    r: &ReducedWord,
    params: &BuildParams,
) -> Result<(GluingState, BuildStats), PipelineError> {
    params.validate().at(Stage::Params)?;
    if r.len() != params.n {
        return Err(PipelineError {
            stage: Stage::Params,
            source: StageError::InvalidParams(format!(
                "relator has length {}, n = {}",
                r.len(),
                params.n
            )),
        });
    }
    let mut st = initial_state(r, params)?;
    let mut stats = BuildStats {
        total_edges: st.circles.num_edges(),
        ..BuildStats::default()
    };

    let norm = normalize_length(&st, params).at(Stage::Normalize)?;
    stats.normalization_groups = norm.groups.len();
    let mut bs = segment_blocks(&mut st, params, &norm).at(Stage::Segment)?;
    st.check_legal().at(Stage::Segment)?;
    stats.blocks = bs.blocks.len();

    let mut matching = match_blocks(&st, &bs, params);
    stats.unmatched_fraction = matching.unmatched_fraction;
    stats.copies_multiplier =
        resolve_unmatched(&mut st, &mut bs, &mut matching, params).at(Stage::Resolve)?;
    stats.tuples = matching.tuples.len();

    glue_matched(&mut st, &bs, &matching).at(Stage::GlueMatched)?;
    st.check_legal().at(Stage::GlueMatched)?;
    stats.remainder_edges = st.remainder.iter().map(|&s| st.segments[s].arc.len).sum();

    stats.clear = clear_remainder(&mut st, params).at(Stage::ClearRemainder)?;
    st.check_legal().at(Stage::ClearRemainder)?;
    stats.reservoir = glue_reservoir(&mut st, params).at(Stage::GlueReservoir)?;
    st.check_legal().at(Stage::GlueReservoir)?;
    stats.symmetrize = symmetrize(&st);
    Ok((st, stats))
}

/// The full pipeline. Succeeds when the assembled spine satisfies R1-R5.
pub fn build_spine(r: &ReducedWord, params: &BuildParams) -> Result<BuildOutput, PipelineError> {
    let (mut st, mut stats) = build_state(r, params)?;
    stats.cocycles = adjust_cocycles(&mut st, params).at(Stage::AdjustCocycles)?;
    let spine = assemble_spine(&st).at(Stage::Assemble)?;
    let report = check_regularity(&spine, None);
    stats.min_top_edge_ok = report.min_top_edge.is_some_and(|m| m >= params.lambda);
    if !report.all_pass() {
        let failed: Vec<&str> = [
            ("R1", &report.r1),
            ("R2", &report.r2),
            ("R3", &report.r3),
            ("R4", &report.r4),
            ("R5", &report.r5),
        ]
        .iter()
        .filter(|(_, c)| !c.pass)
        .map(|(name, _)| *name)
        .collect();
        return Err(PipelineError {
            stage: Stage::Verify,
            source: StageError::NotRegular(failed.join(", ")),
        });
    }
    Ok(BuildOutput {
        spine,
        report,
        trace: st.trace,
        stats,
    })
}

/// SHA-256 over the digests of a trace, in order.
pub fn trace_hash(trace: &[TraceEvent]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for ev in trace {
        h.update(ev.op.as_bytes());
        h.update(ev.digest.as_bytes());
    }
    hex::encode(h.finalize())
}

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use spineforge::analysis::{bead_decompose, histogram_csv, piece_stats, BeadParams};
use spineforge::coxeter::{classification_table, DiagramKind};
use spineforge::pipeline::{
    build_spine, planted_relator, replay_state, trace_hash, BuildParams, PipelineError, Stage,
};
use spineforge::spine::{
    check_regularity, mapping_complex_stats, Kind, Spine, SpineJson, SpineReport,
};
use spineforge::words::{random_cyclically_reduced_word, sample_presentation, ReducedWord};
use thiserror::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;
const EXIT_MISMATCH: u8 = 4;

#[derive(Debug, Error)]
enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Stage(PipelineError),
    #[error("verification mismatch: {0}")]
    Mismatch(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => EXIT_CONFIG,
            CliError::Stage(e) if e.stage == Stage::Params => EXIT_CONFIG,
            CliError::Stage(_) => EXIT_STAGE,
            CliError::Mismatch(_) => EXIT_MISMATCH,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "spineforge",
    version,
    about = "Build and verify regular spines of one-relator groups"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a spine for a relator and write spine.json, report.json and trace.jsonl.
    Build(BuildArgs),
    /// Re-check a stored spine.json and compare with its stored report.
    Verify(VerifyArgs),
    /// Classify the simplex and cube Coxeter diagrams over a range, as CSV.
    Classify(ClassifyArgs),
    /// Piece statistics and bead decomposition of random relators.
    Analyze(AnalyzeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Dot,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Simplicial,
    Cubical,
}

impl From<KindArg> for Kind {
    fn from(k: KindArg) -> Kind {
        match k {
            KindArg::Simplicial => Kind::Simplicial,
            KindArg::Cubical => Kind::Cubical,
        }
    }
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    k: u8,
    /// Relator length; defaults to 2·λ·N.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    lambda: Option<usize>,
    #[arg(long = "bigN", alias = "big-n")]
    big_n: Option<usize>,
    #[arg(long)]
    copies: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "retry-budget")]
    retry_budget: Option<usize>,
    /// Use this cyclically reduced relator instead of sampling one.
    #[arg(long, conflicts_with = "planted")]
    relator: Option<String>,
    /// Use a relator assembled from template designs, which the pipeline can glue.
    #[arg(long)]
    planted: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "json")]
    format: Vec<Format>,
    /// Also write the gluing state after this trace step to state.json.
    #[arg(long = "replay-to")]
    replay_to: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Path to spine.json.
    spine: PathBuf,
    /// Stored report to compare with; defaults to report.json next to the spine.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long, value_enum, default_value = "both")]
    kind: DiagramSelect,
    #[arg(long = "m-min", default_value_t = 3)]
    m_min: u32,
    #[arg(long = "m-max", default_value_t = 10)]
    m_max: u32,
    #[arg(long = "d-min", default_value_t = 2)]
    d_min: usize,
    #[arg(long = "d-max", default_value_t = 8)]
    d_max: usize,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    k: u8,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample a presentation at this density instead of a single relator.
    #[arg(long)]
    density: Option<f64>,
    #[arg(long, default_value_t = 0.3)]
    delta: f64,
    /// Lip constant; defaults to 0.2·δ/log(2k−1).
    #[arg(long = "C")]
    c: Option<f64>,
    /// Copies glued along each lip.
    #[arg(long, default_value_t = 2)]
    degree: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "json")]
    format: Vec<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DiagramSelect {
    Simplex,
    Cube,
    Both,
}

impl DiagramSelect {
    fn kinds(self) -> Vec<DiagramKind> {
        match self {
            DiagramSelect::Simplex => vec![DiagramKind::Simplex],
            DiagramSelect::Cube => vec![DiagramKind::Cube],
            DiagramSelect::Both => vec![DiagramKind::Simplex, DiagramKind::Cube],
        }
    }
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn to_json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(v).expect("serializable value");
    bytes.push(b'\n');
    bytes
}

/// Report file contents: everything needed to compare a later verification.
#[derive(Serialize, Deserialize)]
struct StoredReport {
    params: BuildParams,
    relator_source: String,
    trace_hash: String,
    report: SpineReport,
    stats: serde_json::Value,
    complex: Option<serde_json::Value>,
}

fn run_build(a: &BuildArgs) -> Result<bool, CliError> {
    let kind: Kind = a.kind.into();
    let (word, mut params, source) = if a.planted {
        let pr =
            planted_relator(kind, a.d, a.k, a.seed).map_err(|e| CliError::Config(e.to_string()))?;
        (pr.word, pr.params, "planted".to_string())
    } else {
        let mut p = BuildParams::with_defaults(kind, a.d, a.k, 0, a.seed);
        if let Some(l) = a.lambda {
            p.lambda = l;
        }
        if let Some(b) = a.big_n {
            p.big_n = b;
        }
        match &a.relator {
            Some(text) => {
                let w = ReducedWord::parse_cyclic(text)
                    .map_err(|e| CliError::Config(format!("relator: {e}")))?;
                p.n = w.len();
                (w, p, "given".to_string())
            }
            None => {
                p.n = a.n.unwrap_or(2 * p.lambda * p.big_n);
                p.validate().map_err(|e| CliError::Config(e.to_string()))?;
                let w = random_cyclically_reduced_word(a.k, p.n, a.seed)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                (w, p, "random".to_string())
            }
        }
    };
    if let Some(c) = a.copies {
        params.copies = c;
    }
    if let Some(b) = a.retry_budget {
        params.retry_budget = b;
    }
    params
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let out = build_spine(&word, &params).map_err(CliError::Stage)?;
    let complex = mapping_complex_stats(&out.spine, &out.report)
        .ok()
        .map(|c| serde_json::to_value(c).expect("serializable"));
    let stored = StoredReport {
        params: params.clone(),
        relator_source: source,
        trace_hash: trace_hash(&out.trace),
        report: out.report.clone(),
        stats: serde_json::to_value(&out.stats).expect("serializable"),
        complex,
    };
    write_atomic(
        &a.out.join("spine.json"),
        &to_json_bytes(&out.spine.to_json()),
    )?;
    write_atomic(&a.out.join("report.json"), &to_json_bytes(&stored))?;
    let mut trace = Vec::new();
    for ev in &out.trace {
        serde_json::to_writer(&mut trace, ev).expect("serializable");
        trace.push(b'\n');
    }
    write_atomic(&a.out.join("trace.jsonl"), &trace)?;
    if a.format.contains(&Format::Dot) {
        let glued: Vec<bool> = out
            .spine
            .fibers
            .iter()
            .map(|f| f.strands.len() > 1)
            .collect();
        let dot = out.spine.sigma.to_dot("sigma", Some(&glued));
        write_atomic(&a.out.join("spine.dot"), dot.as_bytes())?;
    }
    if a.format.contains(&Format::Csv) {
        let mut counts = std::collections::BTreeMap::new();
        for len in out.spine.topological_edge_lengths() {
            *counts.entry(len).or_insert(0usize) += 1;
        }
        let mut csv = String::from("topological_edge_length,count\n");
        for (len, c) in counts {
            let _ = writeln!(csv, "{len},{c}");
        }
        write_atomic(&a.out.join("edges.csv"), csv.as_bytes())?;
    }
    if let Some(step) = a.replay_to {
        let st = replay_state(&word, &params, &out.trace, step).map_err(CliError::Stage)?;
        let state = json!({
            "step": step.min(out.trace.len() - 1),
            "digest": st.digest(),
            "classes": st.partition.canonical_classes(),
        });
        write_atomic(&a.out.join("state.json"), &to_json_bytes(&state))?;
    }
    Ok(out.report.all_pass())
}

/// JSON pointer of a serde path such as `sigma.edges[3].u`.
fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

fn parse_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        CliError::Config(format!(
            "parse error in {} at pointer \"{}\": {}",
            path.display(),
            json_pointer(e.path()),
            e.inner()
        ))
    })
}

fn pass_fields(r: &SpineReport) -> serde_json::Value {
    json!({
        "r1": r.r1.pass,
        "r2": r.r2.pass,
        "r3": r.r3.pass,
        "r4": r.r4.pass,
        "r5": r.r5.pass,
        "holonomy_identity": r.holonomies.iter().map(|h| h.identity).collect::<Vec<_>>(),
    })
}

fn run_verify(a: &VerifyArgs) -> Result<bool, CliError> {
    let j: SpineJson = parse_file(&a.spine)?;
    let spine = Spine::from_json(&j).map_err(|e| CliError::Config(format!("spine.json: {e}")))?;
    let report = check_regularity(&spine, None);
    let mut stdout = std::io::stdout();
    let _ = stdout.write_all(&to_json_bytes(&report));
    let stored_path = a
        .report
        .clone()
        .unwrap_or_else(|| a.spine.with_file_name("report.json"));
    if stored_path.exists() {
        let stored: StoredReport = parse_file(&stored_path)?;
        let (now, then) = (pass_fields(&report), pass_fields(&stored.report));
        if serde_json::to_vec(&now).ok() != serde_json::to_vec(&then).ok() {
            return Err(CliError::Mismatch(format!(
                "stored {then} but recomputed {now}"
            )));
        }
    } else if a.report.is_some() {
        return Err(CliError::Config(format!(
            "report {} not found",
            stored_path.display()
        )));
    }
    if !report.all_pass() {
        let failed: Vec<String> = [
            ("R1", &report.r1),
            ("R2", &report.r2),
            ("R3", &report.r3),
            ("R4", &report.r4),
            ("R5", &report.r5),
        ]
        .iter()
        .filter(|(_, c)| !c.pass)
        .map(|(name, c)| format!("{name} ({} violations)", c.violations))
        .collect();
        return Err(CliError::Mismatch(format!("failed {}", failed.join(", "))));
    }
    Ok(true)
}

fn run_classify(a: &ClassifyArgs) -> Result<bool, CliError> {
    if a.m_min < 3 || a.d_min < 2 || a.m_min > a.m_max || a.d_min > a.d_max {
        return Err(CliError::Config(
            "need 3 ≤ m-min ≤ m-max and 2 ≤ d-min ≤ d-max".into(),
        ));
    }
    let kinds = a.kind.kinds();
    let rows = classification_table(&kinds, a.m_min..=a.m_max, a.d_min..=a.d_max)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "m", "d", "class", "error"])
        .expect("in-memory write");
    for r in &rows {
        w.write_record([
            r.kind.to_string(),
            r.m.to_string(),
            r.d.to_string(),
            r.class.map(|c| c.to_string()).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory write");
    match &a.out {
        Some(p) => write_atomic(p, &bytes)?,
        None => {
            let _ = std::io::stdout().write_all(&bytes);
        }
    }
    Ok(true)
}

fn run_analyze(a: &AnalyzeArgs) -> Result<bool, CliError> {
    if a.k < 2 {
        return Err(CliError::Config("k must be at least 2".into()));
    }
    let relators = match a.density {
        Some(density) => {
            sample_presentation(a.k, a.n, density, a.seed)
                .map_err(|e| CliError::Config(e.to_string()))?
                .relators
        }
        None => vec![random_cyclically_reduced_word(a.k, a.n, a.seed)
            .map_err(|e| CliError::Config(e.to_string()))?],
    };
    let stats = piece_stats(&relators).map_err(|e| CliError::Config(e.to_string()))?;
    let c =
        a.c.unwrap_or(0.2 * a.delta / ((2 * a.k as u32 - 1) as f64).ln());
    let params = BeadParams {
        delta: a.delta,
        c,
        degree: a.degree,
        k: a.k,
        seed: a.seed,
    };
    let beads = match bead_decompose(&relators[0], params) {
        Ok(b) => json!({ "ok": true, "decomposition": b }),
        Err(e @ spineforge::analysis::AnalysisError::Precondition(_)) => {
            return Err(CliError::Config(e.to_string()))
        }
        Err(e) => json!({ "ok": false, "error": e.to_string() }),
    };
    let report = json!({
        "k": a.k,
        "n": a.n,
        "seed": a.seed,
        "relators": relators.len(),
        "max_piece": stats.max_piece,
        "pieces_ratio": stats.ratio,
        "beads": beads,
    });
    write_atomic(&a.out.join("analysis.json"), &to_json_bytes(&report))?;
    if a.format.contains(&Format::Csv) {
        write_atomic(&a.out.join("pieces.csv"), histogram_csv(&stats).as_bytes())?;
    }
    Ok(true)
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("SPINEFORGE_THREADS") {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Config(format!(
                "SPINEFORGE_THREADS={v:?} is not a positive integer"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Build(a) => run_build(a),
        Command::Verify(a) => run_verify(a),
        Command::Classify(a) => run_classify(a),
        Command::Analyze(a) => run_analyze(a),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("completed with failures; see the written report");
            ExitCode::from(EXIT_MISMATCH)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

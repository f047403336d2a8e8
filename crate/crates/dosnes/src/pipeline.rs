//! End-to-end pipeline: ingest, normalize, embed, diagnose, export.
//!
//! [`run_pipeline`] wires the stages behind the CLI. [`run_figure1_experiment`]
//! is the self-contained synthetic comparison: embed a random symmetric
//! uniform matrix twice with flat t-SNE, once normalized matrix-wise only
//! and once projected to doubly stochastic, and report how sphere-like each
//! embedding is. Doubly stochastic normalization pulls the layout onto a
//! ring/sphere shell; raw normalization does not.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::diagnostics::{proposition_report, sphericity, q_row_uniformity, SphericityReport};
use crate::ingest::{
    build_affinity, export_embedding, load_bipartite, load_edge_list, load_vectors,
    render_snapshot, AffinityConfig, ExportFormat, IngestError,
};
use crate::matrix::{symmetrize, RectNonnegMatrix, SparseSymMatrix};
use crate::normalize::{
    random_walk_ds, sinkhorn_knopp, NormalizationReport, NormalizeError, SinkhornConfig,
};
use crate::sne::{
    run, Embedding, KernelKind, OptimizerConfig, RunTrace, SneError, TargetDistribution,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("input error: {0}")]
    Input(String),
    #[error("normalization failed: {0}")]
    Normalization(#[from] NormalizeError),
    #[error("optimization failed: {0}")]
    Optimization(SneError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Process exit code the CLI maps this error to: 2 input, 3
    /// normalization, 4 optimization, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Input(_) => 2,
            PipelineError::Normalization(_) => 3,
            PipelineError::Optimization(_) => 4,
            PipelineError::Io(_) => 5,
        }
    }

    /// Short stage tag for machine-parsable error lines.
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Input(_) => "input",
            PipelineError::Normalization(_) => "normalize",
            PipelineError::Optimization(_) => "optimize",
            PipelineError::Io(_) => "io",
        }
    }
}

fn ingest_stage(e: IngestError) -> PipelineError {
    match e {
        IngestError::Io(io) => PipelineError::Io(io),
        other => PipelineError::Input(other.to_string()),
    }
}

fn sne_stage(e: SneError) -> PipelineError {
    match e {
        SneError::EmptyTarget | SneError::TooFewPoints(_) => PipelineError::Input(e.to_string()),
        other => PipelineError::Optimization(other),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    EdgeList,
    Bipartite,
    Vectors,
}

impl FromStr for InputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "edge-list" => Ok(Self::EdgeList),
            "bipartite" => Ok(Self::Bipartite),
            "vectors" => Ok(Self::Vectors),
            other => Err(format!(
                "unknown input format {other:?}; expected edge-list, bipartite, or vectors"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    Sinkhorn,
    RandomWalk,
    None,
}

impl FromStr for Normalization {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sinkhorn" => Ok(Self::Sinkhorn),
            "random-walk" => Ok(Self::RandomWalk),
            "none" => Ok(Self::None),
            other => Err(format!(
                "unknown normalization {other:?}; expected sinkhorn, random-walk, or none"
            )),
        }
    }
}

/// Picks CSV or JSON export from the output file extension.
pub fn export_format_for(path: &Path) -> ExportFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("json") => ExportFormat::Json,
        _ => ExportFormat::Csv,
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub format: InputFormat,
    pub normalization: Normalization,
    pub kernel: KernelKind,
    pub optimizer: OptimizerConfig,
    pub affinity: AffinityConfig,
    pub sinkhorn: SinkhornConfig,
    pub out_coords: PathBuf,
    pub out_report: PathBuf,
    pub out_snapshot: Option<PathBuf>,
    pub viewpoints: Vec<[f64; 3]>,
}

impl PipelineConfig {
    /// Defaults for a symmetric graph input: Sinkhorn normalization, Cauchy
    /// kernel, sphere mode in 3-D.
    pub fn new(
        input: impl Into<PathBuf>,
        out_coords: impl Into<PathBuf>,
        out_report: impl Into<PathBuf>,
    ) -> Self {
        Self {
            input: input.into(),
            format: InputFormat::EdgeList,
            normalization: Normalization::Sinkhorn,
            kernel: KernelKind::Cauchy,
            optimizer: OptimizerConfig::default(),
            affinity: AffinityConfig::perplexity(10.0),
            sinkhorn: SinkhornConfig::default(),
            out_coords: out_coords.into(),
            out_report: out_report.into(),
            out_snapshot: None,
            viewpoints: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.optimizer.validate().map_err(|e| PipelineError::Input(e.to_string()))?;
        if self.normalization == Normalization::RandomWalk && self.format == InputFormat::EdgeList
        {
            return Err(PipelineError::Input(
                "random-walk normalization needs bipartite or vector input; \
                 use sinkhorn for symmetric graphs"
                    .to_string(),
            ));
        }
        if !(self.sinkhorn.tol > 0.0) || self.sinkhorn.max_iters == 0 {
            return Err(PipelineError::Input(format!(
                "sinkhorn settings need tol > 0 and max_iters >= 1, got tol {} max_iters {}",
                self.sinkhorn.tol, self.sinkhorn.max_iters
            )));
        }
        for vp in &self.viewpoints {
            let norm = vp.iter().map(|v| v * v).sum::<f64>();
            if norm <= 0.0 || !norm.is_finite() {
                return Err(PipelineError::Input(format!("viewpoint {vp:?} must be nonzero")));
            }
        }
        Ok(())
    }
}

/// Echo of the effective settings, embedded in the report so runs are
/// self-describing.
#[derive(Debug, Clone, Serialize)]
pub struct SettingsEcho {
    pub input: String,
    pub format: InputFormat,
    pub normalization: Normalization,
    pub kernel: KernelKind,
    pub sphere: bool,
    pub dim: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub max_iters: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputSummary {
    pub nodes: usize,
    pub entries: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizationSummary {
    pub iterations: usize,
    pub initial_kl: Option<f64>,
    pub final_kl: f64,
    pub final_radius: Option<f64>,
    pub final_centroid_norm: f64,
    /// Largest per-iteration radius CV seen after projection (sphere mode).
    pub radius_cv_max: Option<f64>,
}

impl OptimizationSummary {
    fn from_trace(trace: &RunTrace) -> Self {
        Self {
            iterations: trace.iterations,
            initial_kl: trace.kl.first().copied(),
            final_kl: trace.final_kl,
            final_radius: trace.final_radius,
            final_centroid_norm: trace.final_centroid_norm,
            radius_cv_max: trace.radius_cv.iter().copied().fold(None, |acc, cv| {
                Some(acc.map_or(cv, |m: f64| m.max(cv)))
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PropositionSummary {
    pub rows: usize,
    pub prop1_rows_holding: usize,
    pub prop2_rows_holding: usize,
    pub prop3_verdict: bool,
    pub prop3_row_sum_spread: f64,
    pub prop3_norm_spread: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub settings: SettingsEcho,
    pub input: InputSummary,
    pub normalization: Option<NormalizationReport>,
    pub optimization: OptimizationSummary,
    pub sphericity: SphericityReport,
    pub propositions: PropositionSummary,
    pub q_row_cv: f64,
    pub coords_path: String,
    pub snapshot_paths: Vec<String>,
}

const PROP3_TOL: f64 = 1e-6;
const DEFAULT_VIEWPOINT: [f64; 3] = [0.0, 0.0, 1.0];

/// Runs the full pipeline and writes the embedding, the diagnostics report,
/// and any snapshots to disk. Returns the report that was written.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport, PipelineError> {
    cfg.validate()?;

    let file = File::open(&cfg.input)?;
    let reader = BufReader::new(file);
    let mut warnings = Vec::new();

    // Ingest + normalize down to a target distribution.
    let (target, norm_report, nodes, entries) = match cfg.format {
        InputFormat::EdgeList => {
            let (s, warns) = load_edge_list(reader).map_err(ingest_stage)?;
            warnings = warns;
            let nodes = s.node_count();
            let entries = s.entry_count();
            let (target, report) = normalize_symmetric(&s, cfg)?;
            (target, report, nodes, entries)
        }
        InputFormat::Bipartite => {
            let b = load_bipartite(reader).map_err(ingest_stage)?;
            let nodes = b.row_count();
            let entries = b.iter().count();
            let (target, report) = normalize_rectangular(&b, cfg)?;
            (target, report, nodes, entries)
        }
        InputFormat::Vectors => {
            let data = load_vectors(reader).map_err(ingest_stage)?;
            let b = build_affinity(&data, &cfg.affinity).map_err(ingest_stage)?;
            let nodes = b.row_count();
            let entries = b.iter().count();
            let (target, report) = normalize_rectangular(&b, cfg)?;
            (target, report, nodes, entries)
        }
    };

    // Embed.
    let (y, trace) = run(&target, cfg.kernel, &cfg.optimizer).map_err(sne_stage)?;

    // Diagnose.
    let props = proposition_report(&y, PROP3_TOL);
    let sph = sphericity(&y);
    let q_cv = q_row_uniformity(&y, cfg.kernel);

    // Export coordinates.
    let coords_file = File::create(&cfg.out_coords)?;
    export_embedding(
        &y,
        None,
        BufWriter::new(coords_file),
        export_format_for(&cfg.out_coords),
    )
    .map_err(|e| match e {
        IngestError::Io(io) => PipelineError::Io(io),
        other => PipelineError::Input(other.to_string()),
    })?;

    // Snapshots, one per viewpoint, 3-D only.
    let mut snapshot_paths = Vec::new();
    if let Some(base) = &cfg.out_snapshot {
        if y.dim() == 3 {
            let viewpoints: &[[f64; 3]] = if cfg.viewpoints.is_empty() {
                &[DEFAULT_VIEWPOINT]
            } else {
                &cfg.viewpoints
            };
            for (idx, vp) in viewpoints.iter().enumerate() {
                let path = snapshot_path(base, idx, viewpoints.len());
                let file = File::create(&path)?;
                render_snapshot(&y, *vp, BufWriter::new(file)).map_err(|e| match e {
                    IngestError::Io(io) => PipelineError::Io(io),
                    other => PipelineError::Input(other.to_string()),
                })?;
                snapshot_paths.push(path.display().to_string());
            }
        } else {
            log::warn!("snapshots need a 3-dimensional embedding; skipping");
        }
    }

    let report = PipelineReport {
        settings: SettingsEcho {
            input: cfg.input.display().to_string(),
            format: cfg.format,
            normalization: cfg.normalization,
            kernel: cfg.kernel,
            sphere: cfg.optimizer.sphere_mode,
            dim: cfg.optimizer.dim,
            seed: cfg.optimizer.seed,
            learning_rate: cfg.optimizer.learning_rate,
            max_iters: cfg.optimizer.max_iters,
        },
        input: InputSummary { nodes, entries, warnings },
        normalization: norm_report,
        optimization: OptimizationSummary::from_trace(&trace),
        sphericity: sph,
        propositions: PropositionSummary {
            rows: y.len(),
            prop1_rows_holding: props.prop1_rows_holding,
            prop2_rows_holding: props.prop2_rows_holding,
            prop3_verdict: props.prop3.verdict,
            prop3_row_sum_spread: props.prop3.row_sum_spread,
            prop3_norm_spread: props.prop3.norm_spread,
        },
        q_row_cv: q_cv,
        coords_path: cfg.out_coords.display().to_string(),
        snapshot_paths,
    };

    let report_file = File::create(&cfg.out_report)?;
    let mut writer = BufWriter::new(report_file);
    serde_json::to_writer_pretty(&mut writer, &report)
        .map_err(|e| PipelineError::Io(std::io::Error::other(e)))?;
    writeln!(writer)?;

    Ok(report)
}

fn normalize_symmetric(
    s: &SparseSymMatrix,
    cfg: &PipelineConfig,
) -> Result<(TargetDistribution, Option<NormalizationReport>), PipelineError> {
    match cfg.normalization {
        Normalization::Sinkhorn => {
            let (aff, report) = sinkhorn_knopp(s, &cfg.sinkhorn)?;
            let target = TargetDistribution::from_affinity(&aff).map_err(sne_stage)?;
            Ok((target, Some(report)))
        }
        Normalization::RandomWalk => Err(PipelineError::Input(
            "random-walk normalization needs bipartite or vector input".to_string(),
        )),
        Normalization::None => {
            let target = TargetDistribution::from_matrix(s).map_err(sne_stage)?;
            Ok((target, None))
        }
    }
}

fn normalize_rectangular(
    b: &RectNonnegMatrix,
    cfg: &PipelineConfig,
) -> Result<(TargetDistribution, Option<NormalizationReport>), PipelineError> {
    match cfg.normalization {
        Normalization::RandomWalk => {
            let (aff, report) = random_walk_ds(b)?;
            let target = TargetDistribution::from_affinity(&aff).map_err(sne_stage)?;
            Ok((target, Some(report)))
        }
        Normalization::Sinkhorn => {
            let s = symmetrize(b).map_err(|e| {
                PipelineError::Input(format!(
                    "sinkhorn needs square input ({e}); use random-walk for rectangular data"
                ))
            })?;
            let (aff, report) = sinkhorn_knopp(&s, &cfg.sinkhorn)?;
            let target = TargetDistribution::from_affinity(&aff).map_err(sne_stage)?;
            Ok((target, Some(report)))
        }
        Normalization::None => {
            let s = symmetrize(b).map_err(|e| {
                PipelineError::Input(format!("raw targets need square input ({e})"))
            })?;
            let target = TargetDistribution::from_matrix(&s).map_err(sne_stage)?;
            Ok((target, None))
        }
    }
}

fn snapshot_path(base: &Path, idx: usize, total: usize) -> PathBuf {
    if total == 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("snapshot");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("svg");
    base.with_file_name(format!("{stem}_{}.{ext}", idx + 1))
}

/// Comparison of matrix-wise vs doubly stochastic normalization on a random
/// symmetric uniform matrix, both embedded with flat 2-D t-SNE from the
/// same initialization.
#[derive(Debug, Clone, Serialize)]
pub struct Figure1Report {
    pub n: usize,
    pub seed: u64,
    pub raw_radius_cv: f64,
    pub ds_radius_cv: f64,
    pub raw_final_kl: f64,
    pub ds_final_kl: f64,
    pub raw_iterations: usize,
    pub ds_iterations: usize,
    pub sinkhorn_iterations: usize,
    pub sinkhorn_max_row_dev: f64,
    pub sinkhorn_max_col_dev: f64,
    #[serde(skip)]
    pub raw_snapshot_svg: String,
    #[serde(skip)]
    pub ds_snapshot_svg: String,
}

/// Generates a dense symmetric matrix of iid uniform(0,1) entries with zero
/// diagonal, embeds it twice with flat t-SNE (Cauchy kernel, 2-D, no sphere
/// projection) — once normalized matrix-wise only and once Sinkhorn
/// normalized — and writes the numeric comparison as JSON to `sink`. The
/// top-view snapshots of both embeddings are returned in the report.
pub fn run_figure1_experiment(
    n: usize,
    seed: u64,
    max_iters: usize,
    mut sink: impl Write,
) -> Result<Figure1Report, PipelineError> {
    if n < 50 {
        return Err(PipelineError::Input(format!(
            "the comparison experiment needs n >= 50, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(n - 1); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mut w: f64 = rng.random();
            while w <= 0.0 {
                w = rng.random();
            }
            rows[i].push((j, w));
            rows[j].push((i, w));
        }
    }
    let s = SparseSymMatrix::from_rows_unchecked(n, rows);

    let raw_target = TargetDistribution::from_matrix(&s).map_err(sne_stage)?;
    let (ds_aff, sinkhorn_report) = sinkhorn_knopp(&s, &SinkhornConfig::default())?;
    let ds_target = TargetDistribution::from_affinity(&ds_aff).map_err(sne_stage)?;

    let opt = OptimizerConfig {
        dim: 2,
        sphere_mode: false,
        seed,
        max_iters,
        ..OptimizerConfig::default()
    };
    let (raw_y, raw_trace) = run(&raw_target, KernelKind::Cauchy, &opt).map_err(sne_stage)?;
    let (ds_y, ds_trace) = run(&ds_target, KernelKind::Cauchy, &opt).map_err(sne_stage)?;

    let report = Figure1Report {
        n,
        seed,
        raw_radius_cv: sphericity(&raw_y).radius_cv,
        ds_radius_cv: sphericity(&ds_y).radius_cv,
        raw_final_kl: raw_trace.final_kl,
        ds_final_kl: ds_trace.final_kl,
        raw_iterations: raw_trace.iterations,
        ds_iterations: ds_trace.iterations,
        sinkhorn_iterations: sinkhorn_report.iterations,
        sinkhorn_max_row_dev: sinkhorn_report.max_row_dev,
        sinkhorn_max_col_dev: sinkhorn_report.max_col_dev,
        raw_snapshot_svg: snapshot_of_flat(&raw_y)?,
        ds_snapshot_svg: snapshot_of_flat(&ds_y)?,
    };

    serde_json::to_writer_pretty(&mut sink, &report)
        .map_err(|e| PipelineError::Io(std::io::Error::other(e)))?;
    writeln!(sink)?;
    Ok(report)
}

/// Renders a 2-D embedding as its top view: lift to z = 0 and look down +z,
/// so every marker is full opacity and cx/cy are the plane coordinates.
fn snapshot_of_flat(y: &Embedding) -> Result<String, PipelineError> {
    let mut coords = Vec::with_capacity(y.len() * 3);
    for i in 0..y.len() {
        let p = y.point(i);
        coords.extend([p[0], p[1], 0.0]);
    }
    let lifted = Embedding::from_coords(y.len(), 3, coords).map_err(sne_stage)?;
    let mut out = Vec::new();
    render_snapshot(&lifted, DEFAULT_VIEWPOINT, &mut out).map_err(ingest_stage)?;
    String::from_utf8(out).map_err(|e| PipelineError::Input(e.to_string()))
}

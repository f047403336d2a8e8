//! Command-line driver for the dosnes pipeline.
//!
//! Two modes: the regular pipeline (ingest -> normalize -> embed ->
//! diagnose -> export) and `--figure1 N`, the synthetic comparison of
//! matrix-wise vs doubly stochastic normalization. Settings come from
//! defaults, then an optional `key = value` config file, then command-line
//! flags; later sources win. Errors print as a single machine-parsable
//! stderr line and map to exit codes 2 (input), 3 (normalization),
//! 4 (optimization), 5 (I/O).

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Parser;

use dosnes::ingest::{AffinityConfig, AffinityMode};
use dosnes::pipeline::{
    run_figure1_experiment, run_pipeline, InputFormat, Normalization, PipelineConfig,
    PipelineError,
};
use dosnes::KernelKind;

#[derive(Parser, Debug)]
#[command(
    name = "dosnes",
    version,
    about = "Doubly stochastic neighbor embedding on spheres",
    long_about = None
)]
struct Args {
    /// Config file of `key = value` lines; command-line flags win.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Input data file.
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,

    /// Input format: edge-list | bipartite | vectors.
    #[arg(long, value_name = "FORMAT")]
    format: Option<String>,

    /// Normalization: sinkhorn | random-walk | none.
    #[arg(long, value_name = "METHOD")]
    normalize: Option<String>,

    /// Output kernel: gaussian | cauchy.
    #[arg(long, value_name = "KERNEL")]
    kernel: Option<String>,

    /// Constrain the embedding to a centered sphere (requires --dim 3).
    #[arg(long, value_name = "BOOL")]
    sphere: Option<bool>,

    /// Embedding dimension, 2 or 3.
    #[arg(long, value_name = "D")]
    dim: Option<usize>,

    /// Maximum optimizer iterations.
    #[arg(long, value_name = "N")]
    iters: Option<usize>,

    /// Learning rate.
    #[arg(long, value_name = "RATE")]
    lr: Option<f64>,

    /// RNG seed for initialization and projection nudges.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,

    /// Perplexity for vector affinities.
    #[arg(long, value_name = "P")]
    perplexity: Option<f64>,

    /// Neighbor count for vector affinities.
    #[arg(long, value_name = "K")]
    k: Option<usize>,

    /// Affinity weighting for vector input: binary | perplexity.
    #[arg(long, value_name = "MODE")]
    affinity: Option<String>,

    /// Embedding output path (.csv or .json).
    #[arg(long, value_name = "FILE")]
    out_coords: Option<PathBuf>,

    /// Diagnostics report output path (JSON).
    #[arg(long, value_name = "FILE")]
    out_report: Option<PathBuf>,

    /// Snapshot output path (SVG); indexed when several viewpoints are set.
    #[arg(long, value_name = "FILE")]
    out_snapshot: Option<PathBuf>,

    /// Viewpoint "x,y,z" for snapshots; repeatable.
    #[arg(long = "viewpoint", value_name = "X,Y,Z")]
    viewpoints: Vec<String>,

    /// Run the synthetic uniform-vs-doubly-stochastic comparison at size N
    /// instead of the pipeline.
    #[arg(long, value_name = "N")]
    figure1: Option<usize>,
}

const CONFIG_KEYS: &[&str] = &[
    "input",
    "format",
    "normalize",
    "kernel",
    "sphere",
    "dim",
    "iters",
    "lr",
    "seed",
    "perplexity",
    "k",
    "affinity",
    "out-coords",
    "out-report",
    "out-snapshot",
    "viewpoint",
    "momentum",
    "momentum-final",
    "momentum-switch-iter",
    "exaggeration",
    "exaggeration-iters",
    "sinkhorn-tol",
    "sinkhorn-max-iters",
    "rel-obj-tol",
];

/// Parsed config file: repeated keys accumulate (used by `viewpoint`).
struct FileConfig(BTreeMap<String, Vec<String>>);

impl FileConfig {
    fn empty() -> Self {
        Self(BTreeMap::new())
    }

    fn load(path: &PathBuf) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)?;
        let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PipelineError::Input(format!(
                    "config line {}: expected `key = value`, got {line:?}",
                    idx + 1
                ))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(PipelineError::Input(format!(
                    "config line {}: unknown key {key:?}",
                    idx + 1
                )));
            }
            map.entry(key).or_default().push(value);
        }
        Ok(Self(map))
    }

    fn last(&self, key: &str) -> Option<&str> {
        self.0.get(key).and_then(|v| v.last()).map(String::as_str)
    }

    fn all(&self, key: &str) -> &[String] {
        self.0.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, PipelineError>
    where
        T::Err: Display,
    {
        self.last(key)
            .map(|raw| {
                raw.parse::<T>().map_err(|e| {
                    PipelineError::Input(format!("config key {key:?}: bad value {raw:?}: {e}"))
                })
            })
            .transpose()
    }
}

fn parse_flag<T: FromStr>(name: &str, value: Option<&String>) -> Result<Option<T>, PipelineError>
where
    T::Err: Display,
{
    value
        .map(|raw| {
            raw.parse::<T>()
                .map_err(|e| PipelineError::Input(format!("--{name}: bad value {raw:?}: {e}")))
        })
        .transpose()
}

fn parse_viewpoint(raw: &str) -> Result<[f64; 3], PipelineError> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(PipelineError::Input(format!(
            "viewpoint {raw:?}: expected three comma-separated numbers"
        )));
    }
    let mut out = [0.0; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part.parse().map_err(|_| {
            PipelineError::Input(format!("viewpoint {raw:?}: {part:?} is not a number"))
        })?;
    }
    Ok(out)
}

fn main() {
    env_logger::init();
    let args = Args::parse();
    if let Err(e) = execute(args) {
        let reason = e.to_string().replace('\n', " ");
        eprintln!("dosnes: error stage={} code={}: {}", e.stage(), e.exit_code(), reason);
        std::process::exit(e.exit_code());
    }
}

fn execute(args: Args) -> Result<(), PipelineError> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::empty(),
    };

    let seed: u64 = match args.seed {
        Some(s) => s,
        None => file.parse("seed")?.unwrap_or(0),
    };
    let iters: usize = match args.iters {
        Some(i) => i,
        None => file.parse("iters")?.unwrap_or(1000),
    };

    if let Some(n) = args.figure1 {
        return run_figure1(n, seed, iters, &args, &file);
    }

    let input: PathBuf = match args.input.clone().or(file.parse("input")?) {
        Some(p) => p,
        None => {
            return Err(PipelineError::Input(
                "no input file; pass --input or set it in the config file".to_string(),
            ))
        }
    };
    let out_coords: PathBuf = args
        .out_coords
        .clone()
        .or(file.parse("out-coords")?)
        .unwrap_or_else(|| PathBuf::from("embedding.csv"));
    let out_report: PathBuf = args
        .out_report
        .clone()
        .or(file.parse("out-report")?)
        .unwrap_or_else(|| PathBuf::from("report.json"));

    let mut cfg = PipelineConfig::new(input, out_coords, out_report);
    cfg.out_snapshot = args.out_snapshot.clone().or(file.parse("out-snapshot")?);

    let format: Option<InputFormat> = parse_flag("format", args.format.as_ref())?
        .map(Some)
        .unwrap_or(file.parse("format")?);
    if let Some(f) = format {
        cfg.format = f;
    }

    // Defaults depend on the input shape: symmetric graphs balance with
    // Sinkhorn, rectangular and vector inputs use the closed-form walk.
    cfg.normalization = match cfg.format {
        InputFormat::EdgeList => Normalization::Sinkhorn,
        InputFormat::Bipartite | InputFormat::Vectors => Normalization::RandomWalk,
    };
    if let Some(n) = parse_flag::<Normalization>("normalize", args.normalize.as_ref())?
        .map(Some)
        .unwrap_or(file.parse("normalize")?)
    {
        cfg.normalization = n;
    }

    if let Some(kernel) = parse_flag::<KernelKind>("kernel", args.kernel.as_ref())?
        .map(Some)
        .unwrap_or(file.parse("kernel")?)
    {
        cfg.kernel = kernel;
    }

    cfg.optimizer.seed = seed;
    cfg.optimizer.max_iters = iters;
    if let Some(dim) = args.dim.map(Some).unwrap_or(file.parse("dim")?) {
        cfg.optimizer.dim = dim;
        if dim == 2 && args.sphere.is_none() && file.last("sphere").is_none() {
            cfg.optimizer.sphere_mode = false;
        }
    }
    if let Some(sphere) = args.sphere.map(Some).unwrap_or(file.parse("sphere")?) {
        cfg.optimizer.sphere_mode = sphere;
    }
    if let Some(lr) = args.lr.map(Some).unwrap_or(file.parse("lr")?) {
        cfg.optimizer.learning_rate = lr;
    }
    if let Some(v) = file.parse("momentum")? {
        cfg.optimizer.momentum_initial = v;
    }
    if let Some(v) = file.parse("momentum-final")? {
        cfg.optimizer.momentum_final = v;
    }
    if let Some(v) = file.parse("momentum-switch-iter")? {
        cfg.optimizer.momentum_switch_iter = v;
    }
    if let Some(v) = file.parse("exaggeration")? {
        cfg.optimizer.exaggeration = v;
    }
    if let Some(v) = file.parse("exaggeration-iters")? {
        cfg.optimizer.exaggeration_iters = v;
    }
    if let Some(v) = file.parse("rel-obj-tol")? {
        cfg.optimizer.rel_obj_tol = v;
    }
    if let Some(v) = file.parse("sinkhorn-tol")? {
        cfg.sinkhorn.tol = v;
    }
    if let Some(v) = file.parse("sinkhorn-max-iters")? {
        cfg.sinkhorn.max_iters = v;
    }

    let mode: Option<String> =
        args.affinity.clone().or_else(|| file.last("affinity").map(str::to_string));
    let mode = match mode.as_deref() {
        None | Some("perplexity") => AffinityMode::Perplexity,
        Some("binary") => AffinityMode::Binary,
        Some(other) => {
            return Err(PipelineError::Input(format!(
                "unknown affinity mode {other:?}; expected binary or perplexity"
            )))
        }
    };
    let perplexity =
        args.perplexity.map(Some).unwrap_or(file.parse("perplexity")?).unwrap_or(10.0);
    let k = args.k.map(Some).unwrap_or(file.parse("k")?);
    cfg.affinity = AffinityConfig { k, perplexity, mode };

    let viewpoint_strings: Vec<String> = if args.viewpoints.is_empty() {
        file.all("viewpoint").to_vec()
    } else {
        args.viewpoints.clone()
    };
    cfg.viewpoints =
        viewpoint_strings.iter().map(|s| parse_viewpoint(s)).collect::<Result<_, _>>()?;

    let report = run_pipeline(&cfg)?;
    println!(
        "embedded {} points in {} iterations (final KL {:.6})",
        report.propositions.rows, report.optimization.iterations, report.optimization.final_kl
    );
    println!("coords: {}", report.coords_path);
    for p in &report.snapshot_paths {
        println!("snapshot: {p}");
    }
    println!("report: {}", cfg.out_report.display());
    Ok(())
}

fn run_figure1(
    n: usize,
    seed: u64,
    iters: usize,
    args: &Args,
    file: &FileConfig,
) -> Result<(), PipelineError> {
    let out_report: Option<PathBuf> = args.out_report.clone().or(file.parse("out-report")?);
    let report = match &out_report {
        Some(path) => {
            let sink = File::create(path)?;
            run_figure1_experiment(n, seed, iters, sink)?
        }
        None => {
            let stdout = std::io::stdout();
            run_figure1_experiment(n, seed, iters, stdout.lock())?
        }
    };

    if let Some(base) = args.out_snapshot.clone().or(file.parse("out-snapshot")?) {
        let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("figure1");
        let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("svg");
        let raw_path = base.with_file_name(format!("{stem}_raw.{ext}"));
        let ds_path = base.with_file_name(format!("{stem}_ds.{ext}"));
        File::create(&raw_path)?.write_all(report.raw_snapshot_svg.as_bytes())?;
        File::create(&ds_path)?.write_all(report.ds_snapshot_svg.as_bytes())?;
        println!("snapshot: {}", raw_path.display());
        println!("snapshot: {}", ds_path.display());
    }
    if let Some(path) = &out_report {
        println!(
            "figure1 n={n} seed={seed}: raw radius CV {:.4}, doubly stochastic radius CV {:.4}",
            report.raw_radius_cv, report.ds_radius_cv
        );
        println!("report: {}", path.display());
    }
    Ok(())
}

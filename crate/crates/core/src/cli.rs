//! The `ridgecov` command line: `gen`, `ridge`, `select` and `compare`.
//!
//! Every option can also come from a `key = value` config file passed with
//! `--config`; keys are the long flag names without dashes, and flags given
//! on the command line win. Diagnostics go to stderr, data goes to files in
//! `--output-dir`, and each run writes one JSON file echoing its resolved
//! configuration.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::coverage::{compare, Manifold};
use crate::datasets::{generate, Kind, Shape, SyntheticSpec};
use crate::io;
use crate::kde::{normal_reference_bandwidth, PointCloud};
use crate::risk::{
    bandwidth_grid, default_grid, select_bandwidth, Method, Objective, Selection, Spacing,
    DEFAULT_REPLICATES,
};
use crate::scms::{extract_ridge, Mesh, ScmsConfig, Tolerance};

#[derive(Debug, Parser)]
#[command(name = "ridgecov", version, about = "Density ridges with coverage-risk bandwidth selection")]
pub struct Cli {
    /// key=value config file; command-line flags override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (results do not depend on this)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic sample and its ground-truth curve
    Gen(GenArgs),
    /// Extract the density ridge at a fixed bandwidth
    Ridge(RidgeArgs),
    /// Select the bandwidth by minimizing the estimated coverage risk
    Select(SelectArgs),
    /// Coverage diagram, losses and Hausdorff distance between two point sets
    Compare(CompareArgs),
}

#[derive(Debug, Args, Default)]
pub struct SyntheticArgs {
    /// spiral | three_spirals | helix | noisy_circle
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Gaussian noise level (default: 5% of the curve extent)
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub pitch: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct ScmsArgs {
    /// Absolute stopping tolerance on the projected step (default 1e-6·h)
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// data | grid:<resolution>
    #[arg(long)]
    pub mesh: Option<String>,
    #[arg(long)]
    pub threshold_frac: Option<f64>,
    /// log_density (default) | density: matrix whose eigenvectors steer SCMS
    #[arg(long)]
    pub subspace: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct GenArgs {
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct RidgeArgs {
    /// Input CSV (alternatively, generator flags)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Column names to read, e.g. ra,dec
    #[arg(long)]
    pub columns: Option<String>,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub h: Option<f64>,
    #[command(flatten)]
    pub scms: ScmsArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SelectArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub columns: Option<String>,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    /// min:max:count:geom|lin (default: 12 geometric points on [h̄/20, h̄])
    #[arg(long)]
    pub grid: Option<String>,
    /// split | bootstrap
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// l1 | l2
    #[arg(long)]
    pub objective: Option<String>,
    #[command(flatten)]
    pub scms: ScmsArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the ridge at the selected bandwidth
    #[arg(long)]
    pub emit_ridge: bool,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct CompareArgs {
    /// Two CSV files: the first is A (M1), the second B (M2)
    #[arg(long, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub columns: Option<String>,
    /// min:max:count:lin|geom (default: 101 points on [0, Hausdorff])
    #[arg(long)]
    pub radii: Option<String>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

/// Failure of a CLI run, with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(msg: impl Display) -> Self {
        Self {
            code: 2,
            message: msg.to_string(),
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        let code = match e {
            crate::Error::InvalidInput(_) | crate::Error::DimensionMismatch { .. } => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Values from the `--config` file.
#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .or_else(|| line.split_once(':'))
                .ok_or_else(|| CliError::usage(format!("config line {}: expected key = value", no + 1)))?;
            let key = k.trim().trim_start_matches("--").replace('-', "_");
            values.insert(key, v.trim().trim_matches('"').to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Flag value if given, else the config value for `key`.
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::usage(format!("config key '{key}': {e}")))
            })
            .transpose()
    }

    fn pick_string(&self, flag: Option<String>, key: &str) -> Option<String> {
        flag.or_else(|| self.values.get(key).cloned())
    }

    fn flag(&self, flag: bool, key: &str) -> CliResult<bool> {
        Ok(flag || self.pick::<bool>(None, key)?.unwrap_or(false))
    }
}

pub fn parse_mesh(s: &str) -> CliResult<Mesh> {
    match s {
        "data" | "data_points" => Ok(Mesh::DataPoints),
        _ => {
            let res = s
                .strip_prefix("grid:")
                .and_then(|r| r.parse::<f64>().ok())
                .ok_or_else(|| CliError::usage(format!("bad mesh '{s}' (expected data or grid:<res>)")))?;
            Ok(Mesh::Grid { resolution: res })
        }
    }
}

/// Parses `min:max:count:geom|lin`.
pub fn parse_grid(s: &str) -> CliResult<(f64, f64, usize, Spacing)> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::usage(format!("bad grid '{s}' (expected min:max:count:geom|lin)"));
    if parts.len() != 4 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    let spacing = match parts[3] {
        "geom" => Spacing::Geometric,
        "lin" => Spacing::Linear,
        _ => return Err(bad()),
    };
    Ok((lo, hi, count, spacing))
}

fn radii_grid(s: &str) -> CliResult<Vec<f64>> {
    let (lo, hi, count, spacing) = parse_grid(s)?;
    if !(lo >= 0.0 && hi >= lo && hi.is_finite()) || count == 0 {
        return Err(CliError::usage("radius grid needs 0 <= min <= max and count >= 1"));
    }
    if spacing == Spacing::Geometric || lo > 0.0 {
        return Ok(bandwidth_grid(lo.max(f64::MIN_POSITIVE), hi, count, spacing)?);
    }
    Ok((0..count)
        .map(|i| if count == 1 { lo } else { hi * i as f64 / (count - 1) as f64 })
        .collect())
}

fn scms_config(args: ScmsArgs, cfg: &ConfigFile) -> CliResult<ScmsConfig> {
    let mut out = ScmsConfig::default();
    if let Some(t) = cfg.pick(args.tolerance, "tolerance")? {
        out.tolerance = Tolerance::Absolute(t);
    }
    if let Some(m) = cfg.pick(args.max_iters, "max_iters")? {
        out.max_iterations = m;
    }
    if let Some(m) = cfg.pick_string(args.mesh, "mesh") {
        out.mesh = parse_mesh(&m)?;
    }
    if let Some(f) = cfg.pick(args.threshold_frac, "threshold_frac")? {
        out.density_threshold_fraction = f;
    }
    if let Some(v) = cfg.pick_string(args.subspace, "subspace") {
        out.subspace = v.parse()?;
    }
    out.validate()?;
    Ok(out)
}

fn synthetic_spec(args: SyntheticArgs, seed: u64, cfg: &ConfigFile) -> CliResult<Option<SyntheticSpec>> {
    let Some(kind) = cfg.pick_string(args.kind, "kind") else {
        return Ok(None);
    };
    let kind: Kind = kind.parse()?;
    let mut shape = Shape::default_for(kind);
    let radius = cfg.pick(args.radius, "radius")?;
    let pitch = cfg.pick(args.pitch, "pitch")?;
    match &mut shape {
        Shape::Spiral { pitch: p } | Shape::ThreeSpirals { pitch: p } => {
            if let Some(v) = pitch {
                *p = v;
            }
        }
        Shape::Helix { radius: r, pitch: p } => {
            if let Some(v) = radius {
                *r = v;
            }
            if let Some(v) = pitch {
                *p = v;
            }
        }
        Shape::NoisyCircle { radius: r } => {
            if let Some(v) = radius {
                *r = v;
            }
        }
    }
    let n = cfg.pick(args.n, "n")?.unwrap_or(1000);
    let noise = match cfg.pick(args.noise, "noise")? {
        Some(s) => s,
        None => shape.default_noise(),
    };
    Ok(Some(SyntheticSpec::new(shape, n, noise, seed)))
}

fn split_columns(s: &Option<String>) -> Option<Vec<String>> {
    s.as_ref()
        .map(|c| c.split(',').map(|x| x.trim().to_string()).collect())
}

fn read_cloud(path: &Path, columns: &Option<Vec<String>>) -> CliResult<PointCloud> {
    let names: Option<Vec<&str>> = columns.as_ref().map(|c| c.iter().map(String::as_str).collect());
    let loaded = io::load_csv(path, names.as_deref())?;
    if loaded.skipped_rows > 0 {
        eprintln!(
            "warning: {}: skipped {} malformed row(s)",
            path.display(),
            loaded.skipped_rows
        );
    }
    Ok(loaded.cloud)
}

fn output_dir(dir: Option<PathBuf>, cfg: &ConfigFile) -> CliResult<PathBuf> {
    let dir = dir
        .or_else(|| cfg.pick_string(None, "output_dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError { code: 1, message: format!("cannot create {}: {e}", dir.display()) })?;
    Ok(dir)
}

/// Loads `--input` or generates from the synthetic flags.
fn input_cloud(
    input: Option<PathBuf>,
    columns: &Option<String>,
    synthetic: SyntheticArgs,
    seed: u64,
    cfg: &ConfigFile,
) -> CliResult<(PointCloud, serde_json::Value)> {
    let input = input.or_else(|| cfg.pick_string(None, "input").map(PathBuf::from));
    let columns = split_columns(&cfg.pick_string(columns.clone(), "columns"));
    if let Some(path) = input {
        let cloud = read_cloud(&path, &columns)?;
        return Ok((cloud, json!({ "path": path.display().to_string(), "columns": columns })));
    }
    match synthetic_spec(synthetic, seed, cfg)? {
        Some(spec) => Ok((generate(&spec)?.0, json!({ "synthetic": spec }))),
        None => Err(CliError::usage("provide --input or a synthetic --kind")),
    }
}

fn metadata(command: &str, config: serde_json::Value, results: serde_json::Value) -> serde_json::Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "results": results,
    })
}

fn ridge_json(ridge: &crate::scms::RidgeSet, cfg: &ScmsConfig) -> serde_json::Value {
    json!({
        "bandwidth": ridge.bandwidth,
        "points": ridge.len(),
        "density_threshold": ridge.density_threshold,
        "source_size": ridge.source_size,
        "scms": cfg,
    })
}

pub fn cmd_gen(args: GenArgs, cfg: &ConfigFile) -> CliResult<()> {
    let seed = cfg.pick(args.seed, "seed")?.unwrap_or(0);
    let mut synthetic = args.synthetic;
    if synthetic.kind.is_none() && cfg.pick_string(None, "kind").is_none() {
        synthetic.kind = Some("noisy_circle".into());
    }
    let spec = synthetic_spec(synthetic, seed, cfg)?.expect("kind present");
    let (cloud, truth) = generate(&spec)?;
    let dir = output_dir(args.output_dir, cfg)?;
    io::save_point_cloud(dir.join("sample.csv"), &cloud)?;
    io::save_point_cloud(dir.join("truth.csv"), truth.points())?;
    io::save_json(
        dir.join("gen.json"),
        &metadata(
            "gen",
            json!({ "spec": spec }),
            json!({ "sample_rows": cloud.len(), "truth_rows": truth.len() }),
        ),
    )?;
    Ok(())
}

pub fn cmd_ridge(args: RidgeArgs, cfg: &ConfigFile) -> CliResult<()> {
    let h = cfg
        .pick(args.h, "h")?
        .ok_or_else(|| CliError::usage("--h is required"))?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(CliError::usage(format!("--h must be positive, got {h}")));
    }
    let seed = cfg.pick(args.seed, "seed")?.unwrap_or(0);
    let scms = scms_config(args.scms, cfg)?;
    let (cloud, source) = input_cloud(args.input, &args.columns, args.synthetic, seed, cfg)?;
    let dir = output_dir(args.output_dir, cfg)?;
    let ridge = extract_ridge(&cloud, h, &scms)?;
    if ridge.is_empty() {
        eprintln!("warning: ridge at h = {h} is empty");
    }
    io::save_ridge(dir.join("ridge.csv"), &ridge)?;
    io::save_json(
        dir.join("ridge.json"),
        &metadata(
            "ridge",
            json!({ "input": source, "h": h, "seed": seed, "scms": scms }),
            ridge_json(&ridge, &scms),
        ),
    )?;
    Ok(())
}

pub fn cmd_select(args: SelectArgs, cfg: &ConfigFile) -> CliResult<()> {
    let seed = cfg.pick(args.seed, "seed")?.unwrap_or(0);
    let scms = scms_config(args.scms, cfg)?;
    let method: Method = cfg.pick_string(args.method, "method").as_deref().unwrap_or("split").parse()?;
    let objective: Objective = cfg
        .pick_string(args.objective, "objective")
        .as_deref()
        .unwrap_or("l1")
        .parse()?;
    let replicates = cfg.pick(args.replicates, "replicates")?.unwrap_or(DEFAULT_REPLICATES);
    if replicates == 0 {
        return Err(CliError::usage("--replicates must be at least 1"));
    }
    let emit_ridge = cfg.flag(args.emit_ridge, "emit_ridge")?;
    let (cloud, source) = input_cloud(args.input, &args.columns, args.synthetic, seed, cfg)?;
    let grid_spec = cfg.pick_string(args.grid, "grid");
    let grid = match &grid_spec {
        Some(g) => {
            let (lo, hi, count, spacing) = parse_grid(g)?;
            bandwidth_grid(lo, hi, count, spacing)?
        }
        None => default_grid(&cloud)?,
    };
    let h_bar = normal_reference_bandwidth(&cloud)?;
    if grid.iter().all(|&h| h > h_bar) {
        return Err(CliError::usage(format!(
            "every grid bandwidth exceeds the normal reference bandwidth h_bar = {h_bar}"
        )));
    }
    let dir = output_dir(args.output_dir, cfg)?;
    let opts = Selection {
        method,
        objective,
        replicates,
        scms: scms.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let curve = select_bandwidth(&cloud, &grid, &opts, &mut rng)?;
    io::save_risk_curve(dir.join("risk_curve.csv"), &curve)?;
    let mut results = json!({
        "h_star": curve.h_star,
        "h_bar": curve.h_bar,
        "entries": curve.entries.len(),
    });
    if emit_ridge {
        let ridge = extract_ridge(&cloud, curve.h_star, &scms)?;
        if ridge.is_empty() {
            eprintln!("warning: ridge at h* = {} is empty", curve.h_star);
        }
        io::save_ridge(dir.join("ridge.csv"), &ridge)?;
        results["ridge"] = ridge_json(&ridge, &scms);
    }
    io::save_json(
        dir.join("risk_curve.json"),
        &metadata(
            "select",
            json!({
                "input": source,
                "grid": grid_spec,
                "grid_values": grid,
                "method": method,
                "objective": objective,
                "replicates": replicates,
                "seed": seed,
                "scms": scms,
                "emit_ridge": emit_ridge,
            }),
            results,
        ),
    )?;
    Ok(())
}

pub fn cmd_compare(args: CompareArgs, cfg: &ConfigFile) -> CliResult<()> {
    let mut inputs = args.input;
    if inputs.is_empty() {
        if let Some(v) = cfg.pick_string(None, "input") {
            inputs = v.split(',').map(|s| PathBuf::from(s.trim())).collect();
        }
    }
    if inputs.len() != 2 {
        return Err(CliError::usage("compare needs exactly two --input files"));
    }
    let columns = split_columns(&cfg.pick_string(args.columns, "columns"));
    let a = Manifold::curve(read_cloud(&inputs[0], &columns)?);
    let b = Manifold::curve(read_cloud(&inputs[1], &columns)?);
    let radii_spec = cfg.pick_string(args.radii, "radii");
    let radii = match &radii_spec {
        Some(s) => radii_grid(s)?,
        None => Vec::new(),
    };
    let dir = output_dir(args.output_dir, cfg)?;
    let cmp = compare(&a, &b, &radii)?;
    io::save_coverage(dir.join("coverage.csv"), &cmp.diagram)?;
    io::save_json(
        dir.join("compare.json"),
        &metadata(
            "compare",
            json!({
                "a": inputs[0].display().to_string(),
                "b": inputs[1].display().to_string(),
                "columns": columns,
                "radii": radii_spec,
            }),
            json!({
                "loss1": cmp.losses.loss1,
                "loss2": cmp.losses.loss2,
                "hausdorff": cmp.hausdorff,
            }),
        ),
    )?;
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let threads = cfg.pick(cli.threads, "threads")?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError { code: 1, message: format!("thread pool: {e}") })?;
    pool.install(|| match cli.command {
        Command::Gen(a) => cmd_gen(a, &cfg),
        Command::Ridge(a) => cmd_ridge(a, &cfg),
        Command::Select(a) => cmd_select(a, &cfg),
        Command::Compare(a) => cmd_compare(a, &cfg),
    })
}

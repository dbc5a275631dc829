//! Command-line interface: `register`, `benchmark`, and `evaluate`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::benchgen::{builtin_shapes, generate_pair, random_rotation, CrossSourceSpec};
use crate::error::{Error, Result};
use crate::geometry::{apply_transform, PointCloud, SimilarityTransform, TransformRecord};
use crate::icp::{icp_register, IcpConfig};
use crate::io::{load_cloud_auto, write_cloud, CloudFormat};
use crate::metrics::{transform_error, RegistrationReport};
use crate::preprocess::containing_box;
use crate::solver::{derive_seed, gctr_register, GctrConfig};

#[derive(Parser)]
#[command(name = "gctr", version, about = "Cross-source point cloud registration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a source cloud onto a target cloud
    Register(RegisterArgs),
    /// Run both methods over synthetic pairs and write a CSV report
    Benchmark(BenchmarkArgs),
    /// Compare two transform documents
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Gctr,
    Icp,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Gctr => "gctr",
            Method::Icp => "icp",
        }
    }
}

#[derive(Args)]
struct RegisterArgs {
    /// Cloud to move (PLY or XYZ)
    #[arg(long)]
    source: PathBuf,
    /// Reference cloud the source is registered onto
    #[arg(long)]
    target: PathBuf,
    /// JSON config file with optional "gctr" and "icp" sections
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Method::Gctr)]
    method: Method,
    /// Write the transform document here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the transformed source cloud
    #[arg(long)]
    out_cloud: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Builtin shape: sphere, torus, lshape, bumps
    #[arg(long, default_value = "torus")]
    shape: String,
    /// JSON perturbation spec file
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Number of independently seeded pairs
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Output directory for report.csv
    #[arg(long)]
    out: PathBuf,
    /// JSON config file with optional "gctr" and "icp" sections
    #[arg(long)]
    config: Option<PathBuf>,
    /// Record wall-clock runtimes (makes the CSV nondeterministic)
    #[arg(long)]
    measure_runtime: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Estimated transform document
    #[arg(long)]
    est: PathBuf,
    /// Ground-truth transform document
    #[arg(long)]
    gt: PathBuf,
}

/// Registration output document; `matrix` and `r` are row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformDocument {
    pub matrix: [f64; 16],
    pub s: f64,
    pub r: [f64; 9],
    pub t: [f64; 3],
    pub method: String,
    pub runtime_seconds: f64,
    pub converged: bool,
}

impl TransformDocument {
    pub fn new(transform: &SimilarityTransform, method: &str, runtime_seconds: f64, converged: bool) -> Self {
        let h = transform.to_homogeneous();
        let mut matrix = [0.0; 16];
        for row in 0..4 {
            for col in 0..4 {
                matrix[row * 4 + col] = h[(row, col)];
            }
        }
        let record = TransformRecord::from(transform);
        Self {
            matrix,
            s: record.s,
            r: record.r,
            t: record.t,
            method: method.to_string(),
            runtime_seconds,
            converged,
        }
    }

    pub fn transform(&self) -> Result<SimilarityTransform> {
        SimilarityTransform::try_from(&TransformRecord { s: self.s, r: self.r, t: self.t })
    }
}

/// Per-run solver settings, read from one JSON file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gctr: GctrConfig,
    pub icp: IcpConfig,
}

/// How `benchmark` perturbs each synthetic pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSpec {
    pub n_points: usize,
    pub shape_seed: u64,
    pub density_keep_a: f64,
    pub density_keep_b: f64,
    /// Noise std as a fraction of the base diameter.
    pub noise_sigma_a: f64,
    pub noise_sigma_b: f64,
    pub outlier_frac: f64,
    pub crop_frac: f64,
    /// Planted scale; omit for a uniform draw from [0.5, 2].
    pub scale: Option<f64>,
    /// Planted translation bound as a fraction of the base diameter.
    pub translation_frac: f64,
    pub seed: u64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            n_points: 2000,
            shape_seed: 0,
            density_keep_a: 1.0,
            density_keep_b: 0.5,
            noise_sigma_a: 0.005,
            noise_sigma_b: 0.005,
            outlier_frac: 0.05,
            crop_frac: 0.15,
            scale: None,
            translation_frac: 0.25,
            seed: 0,
        }
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        location: path.display().to_string(),
        message: e.to_string(),
    })
}

fn load_run_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => read_json(p),
        None => Ok(RunConfig::default()),
    }
}

fn write_format_for(path: &Path) -> Result<CloudFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|s| s.to_ascii_lowercase());
    match ext.as_deref() {
        Some("ply") => Ok(CloudFormat::PlyBinaryLe),
        Some("xyz") | Some("txt") => Ok(CloudFormat::Xyz),
        _ => Err(Error::UnsupportedFormat(path.display().to_string())),
    }
}

fn run_method(
    method: Method,
    target: &PointCloud,
    source: &PointCloud,
    cfg: &RunConfig,
) -> Result<(SimilarityTransform, bool)> {
    match method {
        Method::Gctr => match gctr_register(target, source, &cfg.gctr) {
            Ok(res) => Ok((res.transform, res.converged)),
            Err(failure) => Err(failure.error),
        },
        Method::Icp => {
            let res = icp_register(target, source, &cfg.icp)?;
            Ok((res.transform, res.converged))
        }
    }
}

fn cmd_register(args: RegisterArgs) -> Result<()> {
    let cfg = load_run_config(&args.config)?;
    let target = load_cloud_auto(&args.target)?;
    let source = load_cloud_auto(&args.source)?;
    let start = Instant::now();
    let (transform, converged) = run_method(args.method, &target, &source, &cfg)?;
    let runtime = start.elapsed().as_secs_f64();
    let doc = TransformDocument::new(&transform, args.method.name(), runtime, converged);
    let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
    text.push('\n');
    match &args.out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    if let Some(path) = &args.out_cloud {
        let format = write_format_for(path)?;
        write_cloud(&apply_transform(&transform, &source), path, format)?;
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let est_doc: TransformDocument = read_json(&args.est)?;
    let gt_doc: TransformDocument = read_json(&args.gt)?;
    let est = est_doc.transform()?;
    let gt = gt_doc.transform()?;
    let (tm, log_tm, r_err_deg, t_err, s_err) = transform_error(&est, &gt);
    let out = serde_json::json!({
        "tm": tm,
        "log_tm": log_tm,
        "r_err_deg": r_err_deg,
        "t_err": t_err,
        "s_err": s_err,
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("metrics serialize"));
    Ok(())
}

const CSV_HEADER: &str = "seed,method,tm,log_tm,r_err_deg,t_err,s_err,runtime_seconds,converged\n";

fn csv_row(seed: &str, r: &RegistrationReport, converged: &str) -> String {
    let log_tm = r.log_tm.unwrap_or(f64::NEG_INFINITY);
    format!(
        "{seed},{},{},{log_tm},{},{},{},{},{converged}\n",
        r.method, r.tm, r.r_err_deg, r.t_err, r.s_err, r.runtime_seconds
    )
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn aggregate_row(method: Method, reports: &[RegistrationReport]) -> String {
    let pick = |f: fn(&RegistrationReport) -> f64| {
        let mut values: Vec<f64> = reports.iter().map(f).collect();
        median(&mut values)
    };
    let tm = pick(|r| r.tm);
    let log_tm = pick(|r| r.log_tm.unwrap_or(f64::NEG_INFINITY));
    let r_err = pick(|r| r.r_err_deg);
    let t_err = pick(|r| r.t_err);
    let s_err = pick(|r| r.s_err);
    let runtime = pick(|r| r.runtime_seconds);
    let converged = reports.iter().filter(|r| r.converged).count() as f64 / reports.len() as f64;
    format!(
        "median,{},{tm},{log_tm},{r_err},{t_err},{s_err},{runtime},{converged}\n",
        method.name()
    )
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<()> {
    if args.seeds == 0 {
        return Err(Error::InvalidConfig("--seeds must be at least 1".into()));
    }
    let cfg = load_run_config(&args.config)?;
    let spec: PerturbationSpec = match &args.spec {
        Some(p) => read_json(p)?,
        None => PerturbationSpec::default(),
    };
    let base = builtin_shapes(&args.shape, spec.n_points, spec.shape_seed)?;
    let diam = containing_box(&base)?.diameter;

    let mut per_method: [Vec<RegistrationReport>; 2] = [Vec::new(), Vec::new()];
    for seed_idx in 0..args.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, seed_idx, 0, 0));
        let scale = spec.scale.unwrap_or_else(|| rng.gen_range(0.5..2.0));
        let rotation = random_rotation(&mut rng);
        let bound = spec.translation_frac * diam;
        let translation = if bound > 0.0 {
            nalgebra::Vector3::new(
                rng.gen_range(-bound..bound),
                rng.gen_range(-bound..bound),
                rng.gen_range(-bound..bound),
            )
        } else {
            nalgebra::Vector3::zeros()
        };
        let planted = SimilarityTransform::new(scale, rotation, translation)?;
        let cs_spec = CrossSourceSpec {
            density_keep_a: spec.density_keep_a,
            density_keep_b: spec.density_keep_b,
            noise_sigma_a: spec.noise_sigma_a,
            noise_sigma_b: spec.noise_sigma_b,
            outlier_frac: spec.outlier_frac,
            crop_frac: spec.crop_frac,
            transform: planted,
            seed: derive_seed(spec.seed, seed_idx, 1, 0),
        };
        let pair = generate_pair(&base, &cs_spec)?;
        let expected = pair.ground_truth.inverse();
        for (slot, method) in [Method::Gctr, Method::Icp].into_iter().enumerate() {
            let start = Instant::now();
            let outcome = run_method(method, &pair.cloud_a, &pair.cloud_b, &cfg);
            let runtime = if args.measure_runtime { start.elapsed().as_secs_f64() } else { 0.0 };
            let (est, converged) = match outcome {
                Ok((t, c)) => (t, c),
                Err(_) => (SimilarityTransform::identity(), false),
            };
            per_method[slot].push(RegistrationReport::new(method.name(), &est, &expected, runtime, converged));
        }
    }

    let mut csv = String::from(CSV_HEADER);
    for reports in &per_method {
        for (seed_idx, report) in reports.iter().enumerate() {
            csv.push_str(&csv_row(&seed_idx.to_string(), report, if report.converged { "true" } else { "false" }));
        }
    }
    for (slot, method) in [Method::Gctr, Method::Icp].into_iter().enumerate() {
        csv.push_str(&aggregate_row(method, &per_method[slot]));
    }
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("report.csv"), csv)?;
    Ok(())
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Parse { .. }
        | Error::UnsupportedFormat(_)
        | Error::Io(_)
        | Error::InvalidConfig(_)
        | Error::InvalidTransform(_)
        | Error::UnknownShape(_) => 2,
        _ => 1,
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Register(args) => cmd_register(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::Evaluate(args) => cmd_evaluate(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_and_version_exit_zero() {
        assert_eq!(run(["gctr", "--help"]), 0);
        assert_eq!(run(["gctr", "--version"]), 0);
        assert_eq!(run(["gctr", "register", "--help"]), 0);
    }

    #[test]
    fn unknown_subcommand_exits_two() {
        assert_eq!(run(["gctr", "frobnicate"]), 2);
        assert_eq!(run(["gctr"]), 2);
        assert_eq!(run(["gctr", "register"]), 2);
    }

    #[test]
    fn median_handles_odd_even_and_sentinels() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&mut [f64::NEG_INFINITY, 1.0, 2.0]), 1.0);
        assert_eq!(format!("{}", f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn transform_document_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = crate::benchgen::random_similarity(&mut rng, 0.5..2.0, 1.0);
        let doc = TransformDocument::new(&t, "gctr", 0.0, true);
        let json = serde_json::to_string(&doc).unwrap();
        let parsed: TransformDocument = serde_json::from_str(&json).unwrap();
        let back = parsed.transform().unwrap();
        assert!((back.to_homogeneous() - t.to_homogeneous()).abs().max() < 1e-12);
    }

    #[test]
    fn perturbation_spec_rejects_unknown_fields() {
        let err = serde_json::from_str::<PerturbationSpec>("{\"bogus\": 1}");
        assert!(err.is_err());
        let ok = serde_json::from_str::<PerturbationSpec>("{\"crop_frac\": 0.2}").unwrap();
        assert_eq!(ok.crop_frac, 0.2);
        assert_eq!(ok.n_points, 2000);
    }
}

//! Subcommands, run configuration and the benchmark harness behind the
//! `handcascade` binary.
//!
//! Every command reads its inputs from disk and writes its outputs
//! atomically; re-running with the same inputs, configuration and seed
//! reproduces the outputs byte for byte (benchmark timings aside).

mod bench;
mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use bench::{
    run_bench, BenchConfig, BenchReport, EnsembleBench, ScanBench, Speedup, Timing, REFERENCE_ENSEMBLE_SPEEDUP,
    REFERENCE_SCAN_SPEEDUP,
};
pub use config::RunConfig;

use crate::cascade::{audit_filtration, sample_labels, train_model, CascadeModel};
use crate::detect::{detect_top_n, Candidate, ScanConfig, ScanMode};
use crate::error::{Error, Result};
use crate::eval::{evaluate, FrameDetections, GroundTruth, MetricsTable};
use crate::geometry::DepthImage;
use crate::pose_tree::{build_hierarchy, kmeans_quantize, PoseClass};
use crate::synth::{generate_dataset, Dataset, DatasetManifest, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(
    name = "handcascade",
    version,
    about = "Hand pose detection with hierarchical rejector cascades"
)]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for data-parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Global seed for synthesis, training and benchmarking.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset into an existing directory.
    Synth(SynthArgs),
    /// Cluster a dataset's poses and build the class hierarchy.
    Quantize(QuantizeArgs),
    /// Train a cascade model on a dataset.
    Train(TrainArgs),
    /// Scan frames and write the top candidates as JSON lines.
    Detect(DetectArgs),
    /// Score detections against a dataset's ground truth.
    Eval(EvalArgs),
    /// Time the implicit ensemble and the sparse scan against their baselines.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Args)]
pub struct QuantizeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training report (default: next to the model, `.report.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub members: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory, or a directory of PGM frames.
    #[arg(long)]
    pub frames: PathBuf,
    /// JSON-lines output, one frame per line.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub topn: Option<usize>,
    /// Scan every valid pixel on a fine grid instead of the sparse grid.
    #[arg(long)]
    pub dense: bool,
    /// Grid spacing of the dense scan, px.
    #[arg(long, default_value_t = 4)]
    pub dense_stride: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset holding the ground truth.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub detections: PathBuf,
    /// Metrics CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Run metadata (default: next to the CSV, `.meta.json`).
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Model that produced the detections, hashed into the metadata.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// JSON report (printed summary only when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
}

/// Writes through a temporary file and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::json(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Lower-case hex SHA-256 of a file.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    let mut name = stem;
    name.push(suffix);
    path.with_file_name(name)
}

pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<DatasetManifest> {
    let manifest = generate_dataset(&cfg.synth, out)?;
    log::info!(
        "wrote {} samples and {} background frames to {}",
        manifest.samples.len(),
        manifest.backgrounds.len(),
        out.display()
    );
    Ok(manifest)
}

#[derive(Debug, Serialize)]
struct QuantizeFile<'a> {
    classes: usize,
    levels: usize,
    seed: u64,
    assignments: &'a [usize],
    objective: &'a [f64],
    pose_classes: &'a [PoseClass],
    parents: Vec<Option<usize>>,
    leaf_classes: Vec<Option<usize>>,
}

pub fn cmd_quantize(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let t = &cfg.train;
    let dataset = Dataset::load(data)?;
    let n = dataset.manifest.samples.len();
    if t.classes > n {
        return Err(Error::invalid(format!("K = {} exceeds the {n} samples", t.classes)));
    }
    let scan = cfg.scan.unwrap_or_default();
    let labels = sample_labels(&dataset, &scan)?;
    let q = kmeans_quantize(&labels, t.classes, t.seed, t.kmeans_iters)?;
    let tree = build_hierarchy(&q.classes, t.levels)?;
    write_json(
        out,
        &QuantizeFile {
            classes: t.classes,
            levels: t.levels,
            seed: t.seed,
            assignments: &q.assignments,
            objective: &q.objective,
            pose_classes: &q.classes,
            parents: tree.parents(),
            leaf_classes: tree.leaf_classes(),
        },
    )
}

#[derive(Debug, Serialize)]
struct TrainReportFile<'a> {
    config: &'a crate::cascade::TrainConfig,
    samples: usize,
    windows: usize,
    positives: usize,
    negatives: usize,
    tree_nodes: usize,
    leaves: usize,
    filtration_violations: usize,
    kmeans_objective: Option<f64>,
    #[serde(flatten)]
    report: &'a crate::cascade::TrainingReport,
}

pub fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path, report: Option<&Path>) -> Result<CascadeModel> {
    let dataset = Dataset::load(data)?;
    let scan = cfg.scan.unwrap_or_default();
    let trained = train_model(&dataset, &scan, &cfg.train)?;
    let violations = audit_filtration(
        &trained.tree,
        &trained.model.ensembles,
        &trained.set,
        &trained.report,
        trained.model.shape(),
    )?;
    if violations > 0 {
        return Err(Error::Internal(format!(
            "{violations} training examples bypassed an ancestor"
        )));
    }
    let positives = trained.set.classes.iter().filter(|c| c.is_some()).count();
    write_atomic(out, &trained.model.to_json()?)?;
    let report_path = report
        .map(Path::to_path_buf)
        .unwrap_or_else(|| sibling(out, ".report.json"));
    write_json(
        &report_path,
        &TrainReportFile {
            config: &cfg.train,
            samples: dataset.manifest.samples.len(),
            windows: trained.set.len(),
            positives,
            negatives: trained.set.len() - positives,
            tree_nodes: trained.tree.len(),
            leaves: trained.tree.leaves().len(),
            filtration_violations: violations,
            kmeans_objective: trained.quantization.objective.last().copied(),
            report: &trained.report,
        },
    )?;
    log::info!(
        "trained {} classes over {} nodes; model {}, report {}",
        trained.model.classes(),
        trained.tree.len(),
        out.display(),
        report_path.display()
    );
    Ok(trained.model)
}

/// One frame of detector output as written to the JSON-lines file.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct DetectionRecord {
    pub frame: usize,
    pub file: String,
    pub considered: usize,
    pub locations: usize,
    pub windows: usize,
    pub candidates: Vec<Candidate>,
}

/// Frames to scan: a dataset's samples (ids kept) or every `.pgm` in a
/// directory in name order (numbered from 0).
fn list_frames(dir: &Path) -> Result<Vec<(usize, PathBuf, String)>> {
    if dir.join(MANIFEST_FILE).exists() {
        let d = Dataset::load(dir)?;
        return Ok(d
            .manifest
            .samples
            .iter()
            .map(|s| (s.id, d.frame_path(&s.depth_file), s.depth_file.clone()))
            .collect());
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    files.sort();
    Ok(files
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            (i, p, name)
        })
        .collect())
}

#[derive(Debug, Serialize)]
struct DetectMeta<'a> {
    model_sha256: String,
    frames: usize,
    skipped: &'a [String],
    mode: ScanMode,
    scan: ScanConfig,
}

/// Scan settings for a model: the configured ones, or the model's own, with
/// the model's hand size either way.
pub fn effective_scan(cfg: &RunConfig, model: &CascadeModel) -> ScanConfig {
    ScanConfig {
        hand_size: model.scan.hand_size,
        ..cfg.scan.unwrap_or(model.scan)
    }
}

pub fn cmd_detect(
    cfg: &RunConfig,
    model_path: &Path,
    frames: &Path,
    out: &Path,
    mode: ScanMode,
) -> Result<Vec<DetectionRecord>> {
    let model = CascadeModel::load(model_path)?;
    let scan = effective_scan(cfg, &model);
    scan.validate()?;
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (id, path, name) in list_frames(frames)? {
        let frame = match DepthImage::read_pgm(&path) {
            Ok(f) => f,
            Err(e @ Error::Pgm { .. }) => {
                log::warn!("skipping frame {id}: {e}");
                skipped.push(name);
                continue;
            }
            Err(e) => return Err(e),
        };
        let d = detect_top_n(&frame, &model, &scan, mode)?;
        records.push(DetectionRecord {
            frame: id,
            file: name,
            considered: d.considered,
            locations: d.locations,
            windows: d.windows,
            candidates: d.candidates,
        });
    }
    let mut bytes = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut bytes, r).map_err(|e| Error::json(out, e))?;
        bytes.push(b'\n');
    }
    write_atomic(out, &bytes)?;
    write_json(
        &sibling(out, ".meta.json"),
        &DetectMeta {
            model_sha256: sha256_file(model_path)?,
            frames: records.len(),
            skipped: &skipped,
            mode,
            scan,
        },
    )?;
    log::info!("wrote {} frames of detections to {}", records.len(), out.display());
    Ok(records)
}

/// Reads a JSON-lines detections file.
pub fn read_detections(path: &Path) -> Result<Vec<FrameDetections>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
        .collect()
}

#[derive(Debug, Serialize)]
struct EvalMeta<'a> {
    config: &'a crate::eval::EvalConfig,
    frames: usize,
    missing_frames: &'a [usize],
    omitted: &'a [String],
    manifest_sha256: String,
    detections_sha256: String,
    model_sha256: Option<String>,
}

pub fn cmd_eval(
    cfg: &RunConfig,
    data: &Path,
    detections: &Path,
    out: &Path,
    meta: Option<&Path>,
    model: Option<&Path>,
) -> Result<MetricsTable> {
    let dataset = Dataset::load(data)?;
    let dets = read_detections(detections)?;
    let truth: Vec<GroundTruth> = dataset.manifest.samples.iter().map(GroundTruth::from_sample).collect();
    let table = evaluate(&truth, &dets, &cfg.eval)?;
    write_atomic(out, table.to_csv().as_bytes())?;
    let meta_path = meta
        .map(Path::to_path_buf)
        .unwrap_or_else(|| sibling(out, ".meta.json"));
    write_json(
        &meta_path,
        &EvalMeta {
            config: &cfg.eval,
            frames: table.frames,
            missing_frames: &table.missing_frames,
            omitted: &table.omitted,
            manifest_sha256: sha256_file(&data.join(MANIFEST_FILE))?,
            detections_sha256: sha256_file(detections)?,
            model_sha256: model.map(sha256_file).transpose()?,
        },
    )?;
    Ok(table)
}

pub fn cmd_bench(cfg: &RunConfig, model_path: &Path, data: &Path, out: Option<&Path>) -> Result<BenchReport> {
    let model = CascadeModel::load(model_path)?;
    let scan = effective_scan(cfg, &model);
    let dataset = Dataset::load(data)?;
    let frames = dataset
        .manifest
        .samples
        .iter()
        .take(cfg.bench.frames)
        .map(|s| dataset.read_frame(&s.depth_file))
        .collect::<Result<Vec<_>>>()?;
    let report = run_bench(&model, &frames, &scan, &cfg.bench)?;
    println!("{}", report.summary());
    if let Some(out) = out {
        write_json(out, &report)?;
    }
    Ok(report)
}

/// Loads the configuration and applies the global flags.
fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    cfg.apply_seed();
    match &cli.command {
        Command::Synth(a) => {
            if let Some(c) = a.count {
                cfg.synth.count = c;
            }
        }
        Command::Quantize(QuantizeArgs { classes, levels, .. }) => {
            if let Some(k) = classes {
                cfg.train.classes = *k;
            }
            if let Some(l) = levels {
                cfg.train.levels = *l;
            }
        }
        Command::Train(a) => {
            if let Some(k) = a.classes {
                cfg.train.classes = k;
            }
            if let Some(l) = a.levels {
                cfg.train.levels = l;
            }
            if let Some(m) = a.members {
                cfg.train.ensemble.members = m;
            }
        }
        Command::Detect(a) => {
            if let Some(n) = a.topn {
                let mut scan = cfg
                    .scan
                    .unwrap_or_else(|| read_model_scan(&a.model).unwrap_or_default());
                scan.top_n = n;
                cfg.scan = Some(scan);
            }
        }
        Command::Eval(_) => {}
        Command::Bench(a) => {
            if let Some(r) = a.repetitions {
                cfg.bench.repetitions = r;
            }
            if let Some(f) = a.frames {
                cfg.bench.frames = f;
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_model_scan(path: &Path) -> Option<ScanConfig> {
    CascadeModel::load(path).ok().map(|m| m.scan)
}

/// Runs one parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    }
    let cfg = resolve(cli)?;
    match &cli.command {
        Command::Synth(a) => cmd_synth(&cfg, &a.out).map(drop),
        Command::Quantize(a) => cmd_quantize(&cfg, &a.data, &a.out),
        Command::Train(a) => cmd_train(&cfg, &a.data, &a.out, a.report.as_deref()).map(drop),
        Command::Detect(a) => {
            let mode = if a.dense {
                ScanMode::Dense { stride: a.dense_stride }
            } else {
                ScanMode::Sparse
            };
            cmd_detect(&cfg, &a.model, &a.frames, &a.out, mode).map(drop)
        }
        Command::Eval(a) => cmd_eval(
            &cfg,
            &a.data,
            &a.detections,
            &a.out,
            a.meta.as_deref(),
            a.model.as_deref(),
        )
        .map(drop),
        Command::Bench(a) => cmd_bench(&cfg, &a.model, &a.data, a.out.as_deref()).map(drop),
    }
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 success, 1 invalid input, 2 I/O, 3 internal.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(main_with_args(["handcascade", "frobnicate"]), 1);
        assert_eq!(main_with_args(["handcascade", "train"]), 1);
        assert_eq!(main_with_args(["handcascade", "--help"]), 0);
    }

    #[test]
    fn missing_inputs_exit_with_two() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("nothing");
        let out = dir.path().join("m.json");
        let code = main_with_args([
            "handcascade".as_ref(),
            "train".as_ref(),
            "--data".as_ref(),
            data.as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn bad_config_exits_with_one() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, br#"{"train": {"classes": 0}}"#).unwrap();
        let code = main_with_args([
            "handcascade".as_ref(),
            "--config".as_ref(),
            cfg.as_os_str(),
            "synth".as_ref(),
            "--out".as_ref(),
            dir.path().as_os_str(),
        ]);
        assert_eq!(code, 1);
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"x").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"x");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn sibling_names() {
        assert_eq!(
            sibling(Path::new("d/m.json"), ".report.json"),
            PathBuf::from("d/m.report.json")
        );
        assert_eq!(
            sibling(Path::new("metrics.csv"), ".meta.json"),
            PathBuf::from("metrics.meta.json")
        );
    }
}

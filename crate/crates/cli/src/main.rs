//! `dctir`: compressed-domain image retrieval from the command line.
//!
//! Every command writes a [`RunManifest`] (by default next to its primary
//! output) whether it succeeds or not. Failures print a JSON object to stderr
//! and exit nonzero: 2 for unsupported JPEGs or invalid dataset specs, 3 for
//! corrupt JPEG streams, 1 otherwise.

mod bench;
mod inspect;
mod manifest;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use dctir::eval::{Difficulty, GroundTruth};
use dctir::jpeg::{self, JpegError};
use dctir::nn::{Checkpoint, NnError};
use dctir::retrieval::{self, RetrievalError, RetrievalIndex};
use dctir::synthetic::{self, SyntheticError, SyntheticSpec};
use dctir::workflow::{self, ExperimentConfig, WorkflowError};
use serde::Serialize;

use manifest::{sidecar, ErrorInfo, RunManifest};

#[derive(Parser)]
#[command(name = "dctir", version, about = "Image retrieval on JPEG DCT coefficients")]
struct Cli {
    /// Manifest path; defaults to `<output>.manifest.json`.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump markers, tables and coefficient statistics of a JPEG file.
    Inspect(InspectArgs),
    /// Generate a labelled synthetic dataset with retrieval ground truth.
    GenSynthetic(GenArgs),
    /// Train a model on `<data>/<class>/*.jpg`.
    Train(TrainArgs),
    /// Extract and store features for a gallery directory.
    Index(IndexArgs),
    /// Rank the gallery for one query image.
    Search(SearchArgs),
    /// mAP per difficulty, with and without re-ranking.
    Evaluate(EvalArgs),
    /// Time training and extraction for DCT and RGB inputs.
    Bench(BenchArgs),
}

#[derive(Args)]
struct InspectArgs {
    file: PathBuf,
    /// Print one quantized block: block row and column.
    #[arg(long, num_args = 2, value_names = ["ROW", "COL"])]
    block: Option<Vec<usize>>,
    /// Component for --block.
    #[arg(long, default_value_t = 0)]
    component: usize,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Dataset directory to create.
    #[arg(long)]
    output: PathBuf,
    /// Dataset spec JSON; unspecified fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    images_per_class: Option<usize>,
    #[arg(long)]
    queries_per_class: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    gallery: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RerankFlags {
    /// Re-rank the top block by verified inliers.
    #[arg(long)]
    rerank: bool,
    /// Global ranking only.
    #[arg(long)]
    no_rerank: bool,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    query: PathBuf,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Crop the query to x1 y1 x2 y2 (pixels) first.
    #[arg(long, num_args = 4, value_names = ["X1", "Y1", "X2", "Y2"])]
    bbox: Option<Vec<f64>>,
    #[command(flatten)]
    rerank: RerankFlags,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Report only this protocol (E, M or H).
    #[arg(long)]
    difficulty: Option<Difficulty>,
    /// Without either flag, or with both, both rankings are reported.
    #[command(flatten)]
    rerank: RerankFlags,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Training layout, `<data>/<class>/*.jpg`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Use at most this many images, spread across the classes.
    #[arg(long, default_value_t = 16)]
    max_images: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

struct Failure {
    code: i32,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn new(code: i32, kind: &'static str, message: impl ToString) -> Self {
        Failure { code, kind, message: message.to_string() }
    }
}

fn jpeg_kind(e: &JpegError) -> (i32, &'static str) {
    match e {
        JpegError::UnsupportedFormat(_) => (2, "unsupported_format"),
        _ => (3, "corrupt_stream"),
    }
}

impl From<WorkflowError> for Failure {
    fn from(e: WorkflowError) -> Self {
        let kind = match &e {
            WorkflowError::Layout(_) => "dataset_layout",
            WorkflowError::Image { source, .. } | WorkflowError::Jpeg(source) => jpeg_kind(source).1,
            WorkflowError::Pipeline(_) => "pipeline",
            WorkflowError::Nn(NnError::Diverged { .. }) => "diverged",
            WorkflowError::Nn(NnError::CorruptCheckpoint(_)) => "corrupt_checkpoint",
            WorkflowError::Nn(_) => "model",
            WorkflowError::Retrieval(RetrievalError::ChecksumMismatch) => "model_mismatch",
            WorkflowError::Retrieval(RetrievalError::VersionMismatch { .. } | RetrievalError::CorruptIndex(_)) => "corrupt_index",
            WorkflowError::Retrieval(_) => "retrieval",
            WorkflowError::Eval(_) => "ground_truth",
            WorkflowError::Synthetic(SyntheticError::InvalidSpec(_)) => "invalid_spec",
            WorkflowError::Synthetic(_) => "synthetic",
            WorkflowError::Json(_) => "config",
            WorkflowError::Io(_) => "io",
        };
        Failure::new(1, kind, e)
    }
}

macro_rules! from_via_workflow {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                WorkflowError::from(e).into()
            }
        }
    )*};
}
from_via_workflow!(std::io::Error, serde_json::Error, NnError, RetrievalError, dctir::eval::EvalError);

fn load_config(path: &Option<PathBuf>, m: &mut RunManifest) -> Result<ExperimentConfig, Failure> {
    match path {
        Some(p) => {
            m.input(p);
            Ok(ExperimentConfig::load(p)?)
        }
        None => Ok(ExperimentConfig::default()),
    }
}

/// Writes `value` as pretty JSON to `output`, or to stdout.
fn emit<T: Serialize>(value: &T, output: &Option<PathBuf>, m: &mut RunManifest) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)?;
    emit_text(&(text + "\n"), output, m)
}

fn emit_text(text: &str, output: &Option<PathBuf>, m: &mut RunManifest) -> Result<(), Failure> {
    match output {
        Some(p) => {
            std::fs::write(p, text)?;
            m.output(p);
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_inspect(a: &InspectArgs, m: &mut RunManifest) -> Result<(), Failure> {
    m.input(&a.file);
    m.config(&serde_json::json!({ "block": a.block, "component": a.component, "json": a.json }));
    let data = std::fs::read(&a.file)?;
    let name = a.file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let block = a.block.as_ref().map(|b| (a.component, b[0], b[1]));
    let report = inspect::inspect(&name, &data, block).map_err(|e| match e {
        inspect::InspectError::Jpeg(e) => {
            let (code, kind) = jpeg_kind(&e);
            Failure::new(code, kind, e)
        }
        inspect::InspectError::BlockOutOfRange(msg) => Failure::new(1, "invalid_argument", msg),
    })?;
    if a.json {
        emit(&report, &a.output, m)
    } else {
        emit_text(&inspect::render_text(&report), &a.output, m)
    }
}

fn cmd_gen_synthetic(a: &GenArgs, m: &mut RunManifest) -> Result<(), Failure> {
    let mut spec = match &a.config {
        Some(p) => {
            m.input(p);
            serde_json::from_slice::<SyntheticSpec>(&std::fs::read(p)?)
                .map_err(|e| Failure::new(2, "invalid_spec", e))?
        }
        None => SyntheticSpec::default(),
    };
    spec.seed = a.seed.unwrap_or(spec.seed);
    spec.classes = a.classes.unwrap_or(spec.classes);
    spec.images_per_class = a.images_per_class.unwrap_or(spec.images_per_class);
    spec.queries_per_class = a.queries_per_class.unwrap_or(spec.queries_per_class);
    spec.size = a.size.unwrap_or(spec.size);
    m.config(&spec);
    m.seed = Some(spec.seed);
    spec.validate().map_err(|e| Failure::new(2, "invalid_spec", e))?;
    let ds = m.time("generate", || synthetic::generate(&spec)).map_err(WorkflowError::from)?;
    let manifest = m.time("write", || synthetic::write_dataset(&ds, &a.output)).map_err(WorkflowError::from)?;
    for f in &manifest.files {
        m.output(&a.output.join(&f.path));
    }
    m.output(&a.output.join(synthetic::GROUND_TRUTH_FILE));
    m.output(&a.output.join(synthetic::DATASET_MANIFEST_FILE));
    eprintln!(
        "wrote {} training, {} gallery and {} query images to {}",
        manifest.train.len(),
        manifest.gallery.len(),
        manifest.queries.len(),
        a.output.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    classes: &'a [String],
    log: &'a dctir::nn::TrainLog,
}

fn cmd_train(a: &TrainArgs, m: &mut RunManifest) -> Result<(), Failure> {
    let mut cfg = load_config(&a.config, m)?;
    cfg.train.seed = a.seed.unwrap_or(cfg.train.seed);
    cfg.train.epochs = a.epochs.unwrap_or(cfg.train.epochs);
    m.input(&a.data);
    m.config(&cfg);
    m.seed = Some(cfg.train.seed);
    let (ckpt, log, classes) = m.time("train", || {
        workflow::train_dir(&a.data, &cfg, |e| {
            eprintln!(
                "epoch {:>3} lr {:.2e} loss {:.4} (arcface {:.4}, attention {:.4}) tau {:.4} {:.1}s",
                e.epoch, e.lr, e.loss, e.arcface_loss, e.attention_loss, e.tau, e.seconds
            )
        })
    })?;
    // the snapshot records the class count actually trained
    m.config(&ExperimentConfig { model: ckpt.config.clone(), ..cfg });
    ckpt.save(&a.output)?;
    m.output(&a.output);
    let log_path = PathBuf::from(format!("{}.log.json", a.output.display()));
    std::fs::write(&log_path, serde_json::to_vec_pretty(&TrainOutput { classes: &classes, log: &log })?)?;
    m.output(&log_path);
    Ok(())
}

fn cmd_index(a: &IndexArgs, m: &mut RunManifest) -> Result<(), Failure> {
    let cfg = load_config(&a.config, m)?;
    m.config(&cfg.retrieval);
    m.input(&a.checkpoint);
    m.input(&a.gallery);
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let index = m.time("extract", || workflow::index_dir(&ckpt, &a.gallery, &cfg.retrieval))?;
    index.save(&a.output)?;
    m.output(&a.output);
    eprintln!("indexed {} images", index.len());
    Ok(())
}

#[derive(Serialize)]
struct RankedHit {
    rank: usize,
    id: String,
    cosine: f64,
    global_rank: usize,
    inliers: Option<usize>,
}

#[derive(Serialize)]
struct SearchOutput {
    query: String,
    rerank: bool,
    top_k: usize,
    hits: Vec<RankedHit>,
}

fn load_artifacts(index: &Path, checkpoint: &Path, m: &mut RunManifest) -> Result<(RetrievalIndex, Checkpoint), Failure> {
    m.input(index);
    m.input(checkpoint);
    let idx = RetrievalIndex::load(index)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    idx.check_model(&ckpt)?;
    Ok((idx, ckpt))
}

fn cmd_search(a: &SearchArgs, m: &mut RunManifest) -> Result<(), Failure> {
    if a.rerank.rerank && a.rerank.no_rerank {
        return Err(Failure::new(1, "invalid_argument", "--rerank and --no-rerank are exclusive for search"));
    }
    let rerank = !a.rerank.no_rerank;
    let cfg = load_config(&a.config, m)?;
    m.config(&serde_json::json!({ "retrieval": cfg.retrieval, "rerank": rerank, "top_k": a.top_k, "bbox": a.bbox }));
    let (index, ckpt) = load_artifacts(&a.index, &a.checkpoint, m)?;
    m.input(&a.query);
    let bytes = std::fs::read(&a.query)?;
    let img = jpeg::parse_jpeg(&bytes).map_err(|source| WorkflowError::Image { path: a.query.clone(), source })?;
    let bbox = a.bbox.as_ref().map(|b| [b[0], b[1], b[2], b[3]]);
    let feats = m.time("extract", || workflow::query_features(&ckpt, &img, bbox, &cfg.retrieval))?;
    let qid = a.query.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut hits = m.time("search", || retrieval::search(&index, &qid, &feats, &cfg.retrieval, rerank));
    hits.truncate(a.top_k);
    let hits = hits
        .into_iter()
        .enumerate()
        .map(|(i, h)| RankedHit { rank: i + 1, id: h.id, cosine: h.cosine, global_rank: h.global_rank, inliers: h.inliers })
        .collect();
    emit(&SearchOutput { query: qid, rerank, top_k: a.top_k, hits }, &a.output, m)
}

fn cmd_evaluate(a: &EvalArgs, m: &mut RunManifest) -> Result<(), Failure> {
    let cfg = load_config(&a.config, m)?;
    m.config(&cfg);
    let (index, ckpt) = load_artifacts(&a.index, &a.checkpoint, m)?;
    m.input(&a.queries);
    m.input(&a.gt);
    let gt = GroundTruth::load(&a.gt)?;
    let mut report = m.time("evaluate", || workflow::evaluate(&index, &ckpt, &a.queries, &gt, &cfg))?;
    let only = match (a.rerank.rerank, a.rerank.no_rerank) {
        (true, false) => Some(true),
        (false, true) => Some(false),
        _ => None,
    };
    report.rows.retain(|r| only.map_or(true, |o| r.rerank == o) && a.difficulty.map_or(true, |d| r.report.difficulty == d));
    for r in &report.rows {
        eprintln!(
            "{:<14} {}: mAP {:.4} over {} queries",
            if r.rerank { "global + local" } else { "global" },
            r.report.difficulty,
            r.report.map,
            r.report.per_query.len()
        );
    }
    emit(&report, &a.output, m)
}

fn cmd_bench(a: &BenchArgs, m: &mut RunManifest) -> Result<(), Failure> {
    if a.repeats == 0 {
        return Err(Failure::new(1, "invalid_argument", "need at least one repeat"));
    }
    let cfg = load_config(&a.config, m)?;
    m.config(&serde_json::json!({ "experiment": cfg, "repeats": a.repeats, "max_images": a.max_images }));
    m.input(&a.data);
    let (data, classes) = workflow::load_training_set(&a.data)?;
    let data = bench::subsample(data, a.max_images);
    let report = m.time("bench", || bench::run(&data, classes.len(), &cfg, a.repeats))?;
    for r in &report.rows {
        eprintln!(
            "{:<4} {:>3} channels {}x{}: {:.3} s/epoch (var {:.2e}), {:.4} s/image extraction",
            r.name, r.channels, r.size[0], r.size[1], r.epoch_seconds.mean, r.epoch_seconds.variance, r.extract_seconds_per_image.mean
        );
    }
    emit(&report, &a.output, m)
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Inspect(_) => "inspect",
            Command::GenSynthetic(_) => "gen-synthetic",
            Command::Train(_) => "train",
            Command::Index(_) => "index",
            Command::Search(_) => "search",
            Command::Evaluate(_) => "evaluate",
            Command::Bench(_) => "bench",
        }
    }

    fn default_manifest(&self) -> PathBuf {
        let output = match self {
            Command::Inspect(a) => a.output.as_deref(),
            Command::GenSynthetic(a) => return a.output.join("run_manifest.json"),
            Command::Train(a) => Some(a.output.as_path()),
            Command::Index(a) => Some(a.output.as_path()),
            Command::Search(a) => a.output.as_deref(),
            Command::Evaluate(a) => a.output.as_deref(),
            Command::Bench(a) => a.output.as_deref(),
        };
        output.map(sidecar).unwrap_or_else(|| PathBuf::from(format!("dctir-{}.manifest.json", self.name())))
    }

    fn run(&self, m: &mut RunManifest) -> Result<(), Failure> {
        match self {
            Command::Inspect(a) => cmd_inspect(a, m),
            Command::GenSynthetic(a) => cmd_gen_synthetic(a, m),
            Command::Train(a) => cmd_train(a, m),
            Command::Index(a) => cmd_index(a, m),
            Command::Search(a) => cmd_search(a, m),
            Command::Evaluate(a) => cmd_evaluate(a, m),
            Command::Bench(a) => cmd_bench(a, m),
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("DCTIR_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::new(1, "invalid_argument", format!("DCTIR_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::new(1, "threads", e))
}

fn main() {
    let cli = Cli::parse();
    let mut m = RunManifest::new(cli.command.name());
    let start = Instant::now();
    let result = configure_threads().and_then(|_| cli.command.run(&mut m));
    m.timings.insert("total".into(), start.elapsed().as_secs_f64());
    if let Err(f) = &result {
        m.exit_code = f.code;
        m.error = Some(ErrorInfo { kind: f.kind.to_string(), message: f.message.clone() });
    }
    let path = cli.manifest.clone().unwrap_or_else(|| cli.command.default_manifest());
    if let Err(e) = m.write(&path) {
        eprintln!("warning: could not write manifest {}: {e}", path.display());
    }
    if let Some(err) = &m.error {
        eprintln!("{}", serde_json::json!({ "error": err, "exit_code": m.exit_code }));
        std::process::exit(m.exit_code);
    }
}

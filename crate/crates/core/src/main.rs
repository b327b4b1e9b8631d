use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use mixfreq::corpus::{
    corpus_stats, detect_boundaries, fill_captions, gen_tasks, stitch, Annotation, ClipBoundarySet,
    CorpusStats, FeatureStream, MockCaptioner, QaRecord,
};
use mixfreq::encoding::{FileBackend, MockEncoder, TemporalTokenTable, VisualBackend};
use mixfreq::grounding::GroundingProtocol;
use mixfreq::jsonl::{read_jsonl, write_jsonl};
use mixfreq::metrics::{EvalRecord, JudgeBackend, MetricReport, MockJudge};
use mixfreq::mma::MmaParams;
use mixfreq::orchestrator::{
    run_batch, run_batch_oracle, Backends, BatchEntry, BatchMode, BatchOptions, InferenceConfig,
    LanguageBackend, MockBackend, MockFixtures, QaItem, RemoteBackend, RemoteConfig,
};
use mixfreq::{selftest, Error, Matrix};

#[derive(Parser)]
#[command(
    name = "mixfreq",
    version,
    about = "Mixed-frequency video question answering and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Round one only: write the grounded segment of every item.
    Ground(RunArgs),
    /// Both rounds: write full dialogue traces.
    Answer(AnswerArgs),
    /// Score predictions against references.
    Eval(EvalArgs),
    /// Corpus construction tools.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Gradient checks, round trips and metric fixtures.
    Selftest {
        /// Directory holding `metrics.json`; defaults to the embedded copy.
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Mock,
    Remote,
}

#[derive(Args)]
struct RunArgs {
    /// JSONL of question items or generated corpus records.
    #[arg(long)]
    dataset: PathBuf,
    /// Directory of `<video_id>/<frame>.mat` patch features; mock features when absent.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mock")]
    backend: BackendKind,
    /// `host:port` of a remote language backend.
    #[arg(long)]
    endpoint: Option<String>,
    /// Mock reply table (JSON); without it the mock replays each item's ground truth.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    nh: usize,
    #[arg(long, default_value_t = 1000)]
    nbins: usize,
    #[arg(long, default_value_t = 64)]
    tokens_per_frame: usize,
    /// Low-frequency stride in frames; one frame per second when absent.
    #[arg(long)]
    low_interval: Option<usize>,
    /// Skip round one and use each item's ground-truth segments.
    #[arg(long)]
    inject_gt: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Feature width of mock frames and of the temporal and mixing parameters.
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Patch tokens per mock frame before pooling.
    #[arg(long, default_value_t = 256)]
    patches: usize,
    #[arg(long, default_value_t = 60_000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 2)]
    retries: u32,
    #[arg(long, default_value_t = 4)]
    max_concurrency: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnswerArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Also write prediction records for `eval`.
    #[arg(long)]
    predictions_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum JudgeKind {
    None,
    Mock,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Reference records, question items or corpus records.
    #[arg(long)]
    references: PathBuf,
    #[arg(long, value_enum, default_value = "none")]
    judge: JudgeKind,
    /// Write the report as JSON as well.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StreamArgs {
    /// Feature stream in matrix text format, one row per frame.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    fps: f64,
    #[arg(long, default_value = "video")]
    video_id: String,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Detect shot cuts.
    Split(StreamArgs),
    /// Detect cuts, or read them with `--boundaries`, then stitch.
    Stitch {
        #[command(flatten)]
        stream: StreamArgs,
        #[arg(long)]
        boundaries: Option<PathBuf>,
    },
    /// Generate question-answer records from annotations.
    Gen {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        nbins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Task and clip-count summary of one or more record files.
    Stats {
        #[arg(required = true)]
        records: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_BACKEND: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_backend() => EXIT_BACKEND,
        Some(Error::Shape(_) | Error::Numeric(_)) => EXIT_FAILURE,
        _ => EXIT_USAGE,
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DatasetLine {
    Record(QaRecord),
    Item(QaItem),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ReferenceLine {
    Record(QaRecord),
    Item(QaItem),
    Eval(EvalRecord),
}

fn load_items(path: &Path) -> anyhow::Result<Vec<QaItem>> {
    let lines: Vec<DatasetLine> =
        read_jsonl(path).with_context(|| format!("reading {}", path.display()))?;
    lines
        .into_iter()
        .map(|l| match l {
            DatasetLine::Record(r) => Ok(r.to_item()?),
            DatasetLine::Item(i) => Ok(i),
        })
        .collect()
}

fn load_references(path: &Path) -> anyhow::Result<Vec<EvalRecord>> {
    let lines: Vec<ReferenceLine> =
        read_jsonl(path).with_context(|| format!("reading {}", path.display()))?;
    lines
        .into_iter()
        .map(|l| match l {
            ReferenceLine::Record(r) => Ok(r.to_item()?.to_reference()),
            ReferenceLine::Item(i) => Ok(i.to_reference()),
            ReferenceLine::Eval(e) => Ok(e),
        })
        .collect()
}

fn run(args: &RunArgs, mode: BatchMode) -> anyhow::Result<(Vec<BatchEntry>, bool)> {
    let items = load_items(&args.dataset)?;
    let proto = GroundingProtocol::new(args.nbins)?;
    let cfg = InferenceConfig {
        low_interval_frames: args.low_interval,
        high_target_count: args.nh,
        proto,
        tokens_per_frame: args.tokens_per_frame,
        injected_segments: None,
    };
    let opts = BatchOptions {
        mode,
        jobs: args.jobs,
        inject_ground_truth: args.inject_gt,
    };
    let visual: Box<dyn VisualBackend> = match &args.features {
        Some(dir) => {
            if !dir.is_dir() {
                bail!(Error::Argument(format!(
                    "features directory {} not found",
                    dir.display()
                )));
            }
            Box::new(FileBackend::new(dir))
        }
        None => Box::new(MockEncoder::new(args.seed, args.patches, args.dim)?),
    };
    let temporal = TemporalTokenTable::seeded(args.nbins, args.dim, args.seed)?;
    let mma = MmaParams::seeded(args.dim, args.seed);

    let oracle = matches!(args.backend, BackendKind::Mock) && args.fixtures.is_none();
    let language: Box<dyn LanguageBackend> = match args.backend {
        BackendKind::Mock => match &args.fixtures {
            Some(path) => {
                let raw = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let fx: MockFixtures = serde_json::from_str(&raw).map_err(Error::from)?;
                Box::new(MockBackend::new(&fx)?)
            }
            None => Box::new(MockBackend::constant("")),
        },
        BackendKind::Remote => {
            let Some(endpoint) = &args.endpoint else {
                bail!(Error::Argument("--backend remote needs --endpoint".into()));
            };
            Box::new(RemoteBackend::new(RemoteConfig {
                endpoint: endpoint.clone(),
                timeout: Duration::from_millis(args.timeout_ms),
                retries: args.retries,
                max_concurrency: args.max_concurrency,
            }))
        }
    };
    let backends = Backends {
        visual: visual.as_ref(),
        language: language.as_ref(),
        temporal: &temporal,
        mma: &mma,
    };
    let entries = if oracle {
        run_batch_oracle(&items, &backends, &cfg, &opts)?
    } else {
        run_batch(&items, &backends, &cfg, &opts)?
    };
    let mut failed = false;
    for e in &entries {
        if let Some(err) = &e.trace.error {
            eprintln!("item {}: {err}", e.item_id);
            failed = true;
        }
    }
    Ok((entries, failed))
}

fn finish(failed: bool) -> anyhow::Result<()> {
    if failed {
        bail!(Error::Backend("one or more items failed".into()));
    }
    Ok(())
}

fn cmd_ground(args: &RunArgs) -> anyhow::Result<()> {
    let (entries, failed) = run(args, BatchMode::GroundOnly)?;
    let preds: Vec<EvalRecord> = entries
        .iter()
        .map(|e| EvalRecord {
            answer_text: None,
            ..e.to_prediction()
        })
        .collect();
    write_jsonl(&args.out, &preds)?;
    finish(failed)
}

fn cmd_answer(args: &AnswerArgs) -> anyhow::Result<()> {
    let (entries, failed) = run(&args.run, BatchMode::Answer)?;
    write_jsonl(&args.run.out, &entries)?;
    if let Some(path) = &args.predictions_out {
        let preds: Vec<EvalRecord> = entries.iter().map(BatchEntry::to_prediction).collect();
        write_jsonl(path, &preds)?;
    }
    finish(failed)
}

fn cmd_eval(args: &EvalArgs) -> anyhow::Result<()> {
    let preds: Vec<EvalRecord> = read_jsonl(&args.predictions)
        .with_context(|| format!("reading {}", args.predictions.display()))?;
    let refs = load_references(&args.references)?;
    let judge: Option<&dyn JudgeBackend> = match args.judge {
        JudgeKind::None => None,
        JudgeKind::Mock => Some(&MockJudge),
    };
    let report = MetricReport::evaluate(&preds, &refs, judge)?;
    print!("{}", report.to_table());
    if let Some(out) = &args.out {
        fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(())
}

fn load_stream(args: &StreamArgs) -> anyhow::Result<FeatureStream> {
    let text = fs::read_to_string(&args.features)
        .with_context(|| format!("reading {}", args.features.display()))?;
    Ok(FeatureStream::new(
        args.video_id.clone(),
        Matrix::from_text(&text)?,
        args.fps,
    )?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn cmd_corpus(cmd: &CorpusCommand) -> anyhow::Result<()> {
    match cmd {
        CorpusCommand::Split(args) => {
            let stream = load_stream(args)?;
            write_json(&args.out, &detect_boundaries(&stream, args.threshold)?)
        }
        CorpusCommand::Stitch {
            stream: args,
            boundaries,
        } => {
            let stream = load_stream(args)?;
            let cuts: ClipBoundarySet = match boundaries {
                Some(path) => {
                    let raw = fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    let b: ClipBoundarySet = serde_json::from_str(&raw).map_err(Error::from)?;
                    ClipBoundarySet::new(b.duration_s, b.boundaries_s)?
                }
                None => detect_boundaries(&stream, args.threshold)?,
            };
            write_json(&args.out, &stitch(&cuts, &stream))
        }
        CorpusCommand::Gen {
            annotations,
            seed,
            nbins,
            out,
        } => {
            let anns: Vec<Annotation> = read_jsonl(annotations)
                .with_context(|| format!("reading {}", annotations.display()))?;
            let proto = GroundingProtocol::new(*nbins)?;
            let mut records = Vec::new();
            for mut ann in anns {
                fill_captions(&mut ann, &MockCaptioner)?;
                records.extend(gen_tasks(&ann, &proto, *seed)?);
            }
            write_jsonl(out, &records)?;
            Ok(())
        }
        CorpusCommand::Stats { records, out } => {
            let mut total = CorpusStats::default();
            for path in records {
                let recs: Vec<QaRecord> =
                    read_jsonl(path).with_context(|| format!("reading {}", path.display()))?;
                total = total.merge(&corpus_stats(&recs));
            }
            let text = serde_json::to_string_pretty(&total)? + "\n";
            print!("{text}");
            if let Some(out) = out {
                fs::write(out, text)?;
            }
            Ok(())
        }
    }
}

fn cmd_selftest(fixtures: Option<&Path>) -> anyhow::Result<bool> {
    let report = selftest::run(fixtures)?;
    for c in &report.checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let passed = report.checks.iter().filter(|c| c.passed).count();
    println!("{passed}/{} checks passed", report.checks.len());
    Ok(report.all_passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Ground(args) => cmd_ground(args).map(|()| true),
        Command::Answer(args) => cmd_answer(args).map(|()| true),
        Command::Eval(args) => cmd_eval(args).map(|()| true),
        Command::Corpus(cmd) => cmd_corpus(cmd).map(|()| true),
        Command::Selftest { fixtures } => cmd_selftest(fixtures.as_deref()),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILURE),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use specmon_core::classifier::TaskKind;
use specmon_core::datasets::{SplitPolicy, SplitSpec};
use specmon_core::features::NormalizePolicy;

#[derive(Debug, Parser)]
#[command(
    name = "specmon",
    version,
    about = "Classify RF IQ captures by protocol and transmitter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus of labeled recordings.
    Generate(GenerateArgs),
    /// Check a corpus, write missing sidecars for a directory layout, and list what was found.
    Ingest(IngestArgs),
    /// Train a classifier on a corpus.
    Train(TrainArgs),
    /// Score a checkpoint on the held-out split of a corpus.
    Evaluate(EvaluateArgs),
    /// Predict a class for every window of one recording.
    Classify(ClassifyArgs),
    /// Write the 256-unit hidden activations of the held-out split.
    ExportEmbeddings(EvaluateArgs),
    /// Print what a checkpoint contains.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct GenerateArgs {
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Scenario JSON; the built-in default scenario otherwise.
    #[arg(long, value_name = "FILE")]
    pub scenario: Option<PathBuf>,
    /// Replaces the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replaces the scenario SNR; `inf` writes a noiseless corpus.
    #[arg(long = "snr-db", value_name = "F", allow_negative_numbers = true)]
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct IngestArgs {
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct SplitArgs {
    /// Train, validation and test window counts.
    #[arg(long, value_name = "A,B,C", value_parser = parse_split, default_value = "38000,2000,10000")]
    pub split: [usize; 3],
    #[arg(long = "split-policy", value_name = "random|by_offset", value_parser = parse_policy, default_value = "random")]
    pub split_policy: SplitPolicy,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SplitArgs {
    pub fn spec(&self) -> SplitSpec {
        SplitSpec {
            sizes: self.split,
            policy: self.split_policy,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_task)]
    pub task: TaskKind,
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long = "batch-size", default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, value_name = "none|unit_rms", value_parser = parse_normalize, default_value = "none")]
    pub normalize: NormalizePolicy,
    /// Validation passes per epoch.
    #[arg(long = "evals-per-epoch", default_value_t = 1)]
    pub evals_per_epoch: usize,
    /// Training windows used to re-estimate batch-norm statistics before each validation pass; 0 disables.
    #[arg(long = "bn-recalibration", default_value_t = 256)]
    pub bn_recalibration: usize,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Must match the checkpoint's task when given.
    #[arg(long, value_parser = parse_task)]
    pub task: Option<TaskKind>,
    /// Window counts; the split stored in the checkpoint otherwise.
    #[arg(long, value_name = "A,B,C", value_parser = parse_split)]
    pub split: Option<[usize; 3]>,
    #[arg(long = "split-policy", value_name = "random|by_offset", value_parser = parse_policy)]
    pub split_policy: Option<SplitPolicy>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct ClassifyArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Interleaved little-endian f32 IQ; standard input when omitted or `-`.
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Directory for predictions.csv; standard output when omitted.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct InspectArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    s.parse().map_err(|_| {
        format!("unknown task {s:?}, expected one of {{protocol, transmitter, joint}}")
    })
}

fn parse_policy(s: &str) -> Result<SplitPolicy, String> {
    s.parse().map_err(|e: specmon_core::Error| e.to_string())
}

fn parse_normalize(s: &str) -> Result<NormalizePolicy, String> {
    s.parse().map_err(|e: specmon_core::Error| e.to_string())
}

fn parse_split(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b, c] = parts[..] else {
        return Err(format!("expected three comma-separated counts, got {s:?}"));
    };
    let n = |p: &str| {
        p.parse::<usize>()
            .map_err(|_| format!("{p:?} is not a window count"))
    };
    Ok([n(a)?, n(b)?, n(c)?])
}

/// Failure to produce a valid [`Command`]: clap's own error, or a path that
/// does not exist.
#[derive(Debug)]
pub enum UsageError {
    Clap(clap::Error),
    Path(String),
}

impl UsageError {
    /// Help and version requests are reported through this type too.
    pub fn is_informational(&self) -> bool {
        matches!(self, UsageError::Clap(e) if !e.use_stderr())
    }
}

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            UsageError::Clap(e) => write!(f, "{}", e.render()),
            UsageError::Path(msg) => write!(f, "error: {msg}"),
        }
    }
}

pub fn parse_args<I, S>(argv: I) -> Result<Command, UsageError>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(UsageError::Clap)?;
    validate_paths(&cli.command)?;
    Ok(cli.command)
}

fn validate_paths(cmd: &Command) -> Result<(), UsageError> {
    let dir = |flag: &str, p: &Path| {
        if p.is_dir() {
            Ok(())
        } else {
            Err(UsageError::Path(format!(
                "--{flag} {}: no such directory",
                p.display()
            )))
        }
    };
    let file = |flag: &str, p: &Path| {
        if p.is_file() {
            Ok(())
        } else {
            Err(UsageError::Path(format!(
                "--{flag} {}: no such file",
                p.display()
            )))
        }
    };
    match cmd {
        Command::Generate(a) => {
            if let Some(s) = &a.scenario {
                file("scenario", s)?;
            }
        }
        Command::Ingest(a) => dir("data", &a.data)?,
        Command::Train(a) => dir("data", &a.data)?,
        Command::Evaluate(a) | Command::ExportEmbeddings(a) => {
            file("checkpoint", &a.checkpoint)?;
            dir("data", &a.data)?;
        }
        Command::Classify(a) => {
            file("checkpoint", &a.checkpoint)?;
            if let Some(d) = a.data.as_deref().filter(|d| *d != Path::new("-")) {
                file("data", d)?;
            }
        }
        Command::Inspect(a) => file("checkpoint", &a.checkpoint)?,
    }
    Ok(())
}

//! Argument definitions and dispatch for the `spd` binary.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use spd_core::netcore::Objective;
use spd_core::protocol::ProtocolKind;

use crate::config::ConfigFile;
use crate::error::{invalid, Result};

#[derive(Debug, Parser)]
#[command(name = "spd", version, about = "Self-supervised pretraining with SPD, PaDiM scoring and evaluation protocols")]
pub struct Cli {
    /// Flat key=value file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Base seed for everything random.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a textured corpus with stamped defects and exact masks.
    Synth(SynthArgs),
    /// Build a manifest CSV from an `<object>/{normal,anomaly,masks}` tree.
    Scan(ScanArgs),
    /// Write train/test assignments for every run of a protocol.
    Split(SplitArgs),
    /// Write one SPD triplet and a CutPaste view of an image.
    AugmentPreview(PreviewArgs),
    /// Train an encoder and save a `.spdckpt` checkpoint.
    Pretrain(PretrainArgs),
    /// Fit or apply patch Gaussians on checkpoint features.
    Padim {
        #[command(subcommand)]
        command: PadimCommand,
    },
    /// Metrics and curves from a score CSV.
    Eval(EvalArgs),
    /// Metrics of the two built-in toy score sets.
    ToyMetrics(OutArgs),
    /// Split, fit and score every run of a protocol, then average.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Subcommand)]
pub enum PadimCommand {
    Fit(PadimFitArgs),
    Score(PadimScoreArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    /// Image side length.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub anomaly_fraction: Option<f64>,
    #[arg(long)]
    pub object: Option<String>,
    /// Comma list of stripes, checker, blobs.
    #[arg(long)]
    pub textures: Option<String>,
    /// Comma list of spot, scratch, missing-patch.
    #[arg(long)]
    pub defects: Option<String>,
    #[arg(long)]
    pub defect_min: Option<usize>,
    #[arg(long)]
    pub defect_max: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Dataset root.
    pub root: PathBuf,
    /// Manifest CSV to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Flags shared by commands that run a protocol.
#[derive(Debug, Args)]
pub struct ProtocolArgs {
    /// one-class, high-shot or k-shot.
    #[arg(long, value_parser = parse_protocol)]
    pub protocol: Option<ProtocolKind>,
    /// Shots per class for k-shot.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Seed that fixes the k-shot pool; defaults to the base seed.
    #[arg(long)]
    pub pool_seed: Option<u64>,
    #[arg(long)]
    pub object: Option<String>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Split CSV to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreviewArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Side length of the views.
    #[arg(long)]
    pub size: Option<usize>,
}

/// Where training or scoring images come from.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Root that manifest paths are relative to.
    #[arg(long)]
    pub data: PathBuf,
    /// Manifest or split CSV.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Run to use when the CSV holds several.
    #[arg(long)]
    pub run: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// simclr, simsiam or supervised.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Objective>,
    /// Weight of the SPD term; 0 disables it.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Contrastive temperature.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Network input side length.
    #[arg(long)]
    pub input_size: Option<usize>,
    /// Supervised mode: also add the cosine SPD term.
    #[arg(long)]
    pub spd_cosine: Option<bool>,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PadimKnobs {
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_channels: Option<usize>,
    #[arg(long)]
    pub smooth_sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PadimFitArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub knobs: PadimKnobs,
    /// `.padim` file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PadimScoreArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory for scores, metrics and curves.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// CSV with `id,label,score`.
    #[arg(long)]
    pub scores: PathBuf,
    /// Metrics JSON to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for `roc.csv` and `pr.csv`.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    pub knobs: PadimKnobs,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_protocol(s: &str) -> std::result::Result<ProtocolKind, String> {
    ProtocolKind::parse(s).map_err(|_| "expected one-class, high-shot or k-shot".to_string())
}

fn parse_mode(s: &str) -> std::result::Result<Objective, String> {
    Objective::parse(s).ok_or_else(|| "expected simclr, simsiam or supervised".to_string())
}

/// Settings resolved against the config file.
pub(crate) struct Ctx {
    pub cfg: ConfigFile,
    pub seed: u64,
}

impl Ctx {
    pub fn protocol(&self, flag: Option<ProtocolKind>) -> Result<ProtocolKind> {
        match (flag, self.cfg.raw("protocol")) {
            (Some(p), _) => Ok(p),
            (None, Some(s)) => parse_protocol(s).map_err(|e| invalid!("config protocol '{s}': {e}")),
            (None, None) => Ok(ProtocolKind::OneClass),
        }
    }

    pub fn mode(&self, flag: Option<Objective>) -> Result<Objective> {
        match (flag, self.cfg.raw("mode")) {
            (Some(m), _) => Ok(m),
            (None, Some(s)) => parse_mode(s).map_err(|e| invalid!("config mode '{s}': {e}")),
            (None, None) => Ok(Objective::SimClr),
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let seed = cfg.pick(cli.seed, "seed", 0)?;
    let ctx = Ctx { cfg, seed };
    match cli.command {
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Scan(a) => commands::scan(&ctx, a),
        Command::Split(a) => commands::split(&ctx, a),
        Command::AugmentPreview(a) => commands::augment_preview(&ctx, a),
        Command::Pretrain(a) => commands::pretrain(&ctx, a),
        Command::Padim { command: PadimCommand::Fit(a) } => commands::padim_fit(&ctx, a),
        Command::Padim { command: PadimCommand::Score(a) } => commands::padim_score(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::ToyMetrics(a) => commands::toy_metrics(&ctx, a),
        Command::Benchmark(a) => commands::benchmark(&ctx, a),
    }
}

//! The `scgan` command line.

use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::data::synthetic::{generate_synthetic, SyntheticTask, TaskKind};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_dirs, EvalOptions, ExtractorKind, DEFAULT_FEATURE_SEED};
use crate::models::TranslationModel;
use crate::train::{fit_with, resolve_checkpoint, TrainConfig};
use crate::translate::{translate_dir, Direction};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "scgan", version, about = "Self-supervised CycleGAN for unpaired image translation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic two-domain dataset with a known translation.
    SynthData(SynthArgs),
    /// Train from a `key = value` config file.
    Train(TrainArgs),
    /// Translate a directory of PNGs with a trained checkpoint.
    Translate(TranslateArgs),
    /// Compute FID and KID between two directories of PNGs.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "channel-swap", value_parser = parse_task)]
    pub task: TaskKind,
    #[arg(long, default_value_t = 200)]
    pub n_train: usize,
    #[arg(long, default_value_t = 50)]
    pub n_test: usize,
    #[arg(long, default_value_t = 64)]
    pub size: i64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// A checkpoint directory, or a run directory with `latest.txt`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input_dir: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, value_parser = parse_direction)]
    pub direction: Direction,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub real_dir: PathBuf,
    #[arg(long)]
    pub fake_dir: PathBuf,
    #[arg(long, default_value = "random-conv", value_parser = parse_extractor)]
    pub extractor: ExtractorKind,
    #[arg(long, default_value_t = DEFAULT_FEATURE_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub subset_size: usize,
    #[arg(long, default_value_t = 10)]
    pub n_subsets: usize,
    /// Also write the report to this file.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn parse_task(s: &str) -> std::result::Result<TaskKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_direction(s: &str) -> std::result::Result<Direction, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_extractor(s: &str) -> std::result::Result<ExtractorKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Exit code for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn resolved(title: &str, pairs: &[(&str, String)]) -> String {
    let mut s = format!("# {title}\n");
    for (k, v) in pairs {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

fn synth_data(a: &SynthArgs) -> Result<()> {
    eprint!(
        "{}",
        resolved(
            "synth-data",
            &[
                ("out", a.out.display().to_string()),
                ("task", a.task.to_string()),
                ("n_train", a.n_train.to_string()),
                ("n_test", a.n_test.to_string()),
                ("size", a.size.to_string()),
                ("seed", a.seed.to_string()),
                ("overwrite", a.overwrite.to_string()),
            ],
        )
    );
    let task = SyntheticTask {
        kind: a.task,
        n_train: a.n_train,
        n_test: a.n_test,
        size: a.size,
        seed: a.seed,
    };
    generate_synthetic(&task, &a.out, a.overwrite)?;
    eprintln!("wrote {} images to {}", 2 * (a.n_train + a.n_test), a.out.display());
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let cfg = TrainConfig::load(&a.config)?;
    eprint!("# train ({})\n{}", cfg.model_name(), cfg.to_kv_string());
    let start = Instant::now();
    let state = fit_with(&cfg, |t| {
        if let Some(last) = t.state.history.last() {
            eprintln!(
                "epoch {}/{} step {} total {:.4} cyc {:.4} ({:.0}s)",
                t.state.epoch,
                cfg.epochs,
                t.state.global_step,
                last.losses.total,
                last.losses.cyc,
                start.elapsed().as_secs_f64()
            );
        }
        ControlFlow::Continue(())
    })?;
    eprintln!("finished at epoch {} after {} steps", state.epoch, state.global_step);
    Ok(())
}

fn translate(a: &TranslateArgs) -> Result<()> {
    eprint!(
        "{}",
        resolved(
            "translate",
            &[
                ("checkpoint", a.checkpoint.display().to_string()),
                ("input_dir", a.input_dir.display().to_string()),
                ("output_dir", a.output_dir.display().to_string()),
                ("direction", a.direction.to_string()),
            ],
        )
    );
    let model = TranslationModel::load(&resolve_checkpoint(&a.checkpoint)?)?;
    let written = translate_dir(&model, &a.input_dir, &a.output_dir, a.direction)?;
    eprintln!("translated {} images", written.len());
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    eprint!(
        "{}",
        resolved(
            "evaluate",
            &[
                ("real_dir", a.real_dir.display().to_string()),
                ("fake_dir", a.fake_dir.display().to_string()),
                ("extractor", a.extractor.to_string()),
                ("seed", a.seed.to_string()),
                ("subset_size", a.subset_size.to_string()),
                ("n_subsets", a.n_subsets.to_string()),
                (
                    "output",
                    a.output.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "-".into()),
                ),
            ],
        )
    );
    let opts = EvalOptions {
        extractor: a.extractor,
        seed: a.seed,
        subset_size: a.subset_size,
        n_subsets: a.n_subsets,
    };
    let report = evaluate_dirs(&a.real_dir, &a.fake_dir, &opts)?;
    let json = serde_json::to_string(&report)?;
    println!("{json}");
    if let Some(path) = &a.output {
        std::fs::write(path, format!("{json}\n")).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::SynthData(a) => synth_data(a),
        Command::Train(a) => train(a),
        Command::Translate(a) => translate(a),
        Command::Evaluate(a) => evaluate(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

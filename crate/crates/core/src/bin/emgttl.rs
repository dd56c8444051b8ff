use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emgttl::cli::{self, CliError, Overrides, ReportArgs};
use emgttl::dataset::SynthSpec;
use emgttl::verify::Suite;

#[derive(Parser)]
#[command(name = "emgttl", version, about = "sEMG patch-transformer pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct TrainFlags {
    /// Overrides dataset.manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

impl From<TrainFlags> for Overrides {
    fn from(f: TrainFlags) -> Self {
        Overrides {
            manifest: f.manifest,
            epochs: f.epochs,
            seed: f.seed,
            learning_rate: f.learning_rate,
            batch_size: f.batch_size,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset.
    Synth {
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 2)]
        subjects: usize,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 2.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 2000.0)]
        rate_hz: f64,
        #[arg(long, default_value_t = 5)]
        channels: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train from scratch and write a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Transfer a checkpoint's encoder to a new task and train.
    Finetune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Print metrics of a checkpoint on the configured split as JSON.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Variant study: CSV of mean and spread of test accuracy.
    Report {
        #[arg(long)]
        config: PathBuf,
        /// JSON list of variants; the four published ones by default.
        #[arg(long)]
        variants: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        /// Window and step pairs in milliseconds.
        #[arg(long, default_value = "500:250,250:100")]
        windows: String,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Run invariant suites.
    Verify {
        #[arg(long, default_value = "all")]
        suite: Suite,
    },
}

fn run(command: Command) -> Result<String, CliError> {
    match command {
        Command::Synth {
            classes,
            subjects,
            trials,
            duration_s,
            rate_hz,
            channels,
            seed,
            out,
        } => {
            let spec = SynthSpec {
                num_classes: classes,
                subjects,
                trials_per_class: trials,
                duration_s,
                sample_rate_hz: rate_hz,
                channels,
            };
            cli::cmd_synth(&spec, seed, &out)
        }
        Command::Train { config, out, flags } => cli::cmd_train(&config, &out, &flags.into()),
        Command::Finetune {
            config,
            from,
            out,
            flags,
        } => cli::cmd_finetune(&config, &from, &out, &flags.into()),
        Command::Eval { ckpt, config } => cli::cmd_eval(&ckpt, &config),
        Command::Report {
            config,
            variants,
            seeds,
            windows,
            flags,
        } => cli::cmd_report(&ReportArgs {
            config: &config,
            variants: variants.as_deref(),
            seeds,
            geometries: cli::parse_geometries(&windows)?,
            overrides: flags.into(),
        }),
        Command::Verify { suite } => cli::cmd_verify(suite),
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match run(args.command) {
        Ok(stdout) => {
            print!("{stdout}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("emgttl: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

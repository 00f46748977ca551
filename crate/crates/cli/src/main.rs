mod config;
mod generate;
mod replay;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "discotag",
    version,
    about = "Tag suggestion bandits: data generation, log replay and reporting"
)]
struct Cli {
    /// TOML configuration file; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed overriding the configuration file.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory [generate: data, replay: out, report: next to the CSV].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Suppress progress messages on standard error.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic catalog with training and test session logs.
    Generate,
    /// Replay training logs through each policy and score them per round.
    Replay {
        /// Directory with catalog.jsonl, train.jsonl and test.jsonl,
        /// overriding the configured data paths.
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        /// Also run MCM with the context half of its input zeroed, reported
        /// as `mcm_noctx`.
        #[arg(long)]
        ablate_context: bool,
        /// Replay policies on separate threads. Output is unchanged.
        #[arg(long)]
        parallel_policies: bool,
    },
    /// Summarize a replay report.
    Report {
        /// Report CSV written by `replay`.
        csv: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportMode::Summary)]
        mode: ReportMode,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportMode {
    /// Aligned table on standard output plus summary.json.
    Summary,
    /// One `round<TAB>f1` file per policy.
    Plot,
}

/// Options shared by every command.
pub struct Globals {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

impl Globals {
    pub fn progress(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn with_defaults_help(cmd: clap::Command) -> clap::Command {
    let gen = toml::to_string(&discotag::datagen::GenConfig::default()).expect("defaults serialize");
    let exp = toml::to_string(&config::ExperimentConfig::default()).expect("defaults serialize");
    cmd.mut_subcommand("generate", |c| {
        c.after_help(format!("Configuration keys and their defaults:\n\n{gen}"))
    })
    .mut_subcommand("replay", |c| {
        c.after_help(format!(
            "Configuration keys and their defaults (data paths resolve against the config file's directory):\n\n{exp}"
        ))
    })
    .after_help("Exit codes: 0 success, 2 configuration or input error, 3 numerical divergence.")
}

/// 3 for numerical divergence, 2 for every other failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    let diverged = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<discotag::Error>(),
            Some(discotag::Error::NumericalDivergence)
        )
    });
    if diverged {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let matches = with_defaults_help(Cli::command()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let globals = Globals {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        quiet: cli.quiet,
    };
    let result = match cli.command {
        Command::Generate => generate::run(&globals),
        Command::Replay {
            data,
            ablate_context,
            parallel_policies,
        } => replay::run(&globals, data.as_deref(), ablate_context, parallel_policies),
        Command::Report { csv, mode } => report::run(&globals, &csv, mode),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use supobs::harness::commands::{self, CommonOpts};

#[derive(Parser)]
#[command(name = "supobs", version, about = "Supervisory multi-observer estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment (or sweep / certificate) TOML file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the input seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv.
    Simulate(Common),
    /// Static vs dynamic sweep over the grid resolutions of a sweep file.
    Table(Common),
    /// Write the parameter grid to grid.csv.
    Sample(Common),
    /// Check the LMI certificates in a gains file.
    VerifyLmi(Common),
    /// Design gains for every grid point and write gains.toml.
    SynthesizeGains(Common),
    /// Persistence-of-excitation diagnostics from output_errors.csv.
    PeCheck {
        #[command(flatten)]
        common: Common,
        /// Output-error CSV (default: <out>/output_errors.csv).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Window length T_f in seconds (default: 5/lambda from --config).
        #[arg(long)]
        window: Option<f64>,
    },
}

fn opts(c: &Common) -> CommonOpts {
    CommonOpts {
        config: c.config.clone(),
        out: c.out.clone(),
        seed: c.seed,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let quiet = match &cli.command {
        Command::Simulate(c)
        | Command::Table(c)
        | Command::Sample(c)
        | Command::VerifyLmi(c)
        | Command::SynthesizeGains(c) => c.quiet,
        Command::PeCheck { common, .. } => common.quiet,
    };
    env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or(if quiet { "error" } else { "warn" }),
    )
    .init();
    let (common, result) = match &cli.command {
        Command::Simulate(c) => (c, commands::cmd_simulate(&opts(c))),
        Command::Table(c) => (c, commands::cmd_table(&opts(c))),
        Command::Sample(c) => (c, commands::cmd_sample(&opts(c))),
        Command::VerifyLmi(c) => (c, commands::cmd_verify_lmi(&opts(c))),
        Command::SynthesizeGains(c) => (c, commands::cmd_synthesize_gains(&opts(c))),
        Command::PeCheck {
            common,
            trace,
            window,
        } => (
            common,
            commands::cmd_pe_check(&opts(common), trace.as_deref(), *window),
        ),
    };
    match result {
        Ok(lines) => {
            if !common.quiet {
                for l in lines {
                    println!("{l}");
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

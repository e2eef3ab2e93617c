use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gencoord_cli::{cmd_filter, cmd_least_action, cmd_linear_analysis, cmd_simulate, reference, RunConfig, RunOptions};

#[derive(Parser)]
#[command(
    name = "gencoord",
    version,
    about = "Generalized-coordinate simulation, least-action paths and filtering"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate an ensemble of noisy trajectories.
    Simulate(RunArgs),
    /// Descend the Lagrangian for each configured λ.
    LeastAction(RunArgs),
    /// Run the generalized filter on synthetic or recorded observations.
    Filter(RunArgs),
    /// Tabulate closed-form means and covariances of a linear model.
    LinearAnalysis(RunArgs),
    /// Print the configuration reference page as Markdown.
    ConfigReference,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed, overriding the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Exit successfully even if a run blew up or failed.
    #[arg(long)]
    allow_blowup: bool,
}

type Runner = fn(&RunConfig, &RunOptions) -> anyhow::Result<()>;

fn run(cli: Cli) -> anyhow::Result<()> {
    let (args, runner): (RunArgs, Runner) = match cli.command {
        Cmd::ConfigReference => {
            print!("{}", reference::render());
            return Ok(());
        }
        Cmd::Simulate(a) => (a, |c, o| cmd_simulate(c, o).map(drop)),
        Cmd::LeastAction(a) => (a, |c, o| cmd_least_action(c, o).map(drop)),
        Cmd::Filter(a) => (a, |c, o| cmd_filter(c, o).map(drop)),
        Cmd::LinearAnalysis(a) => (a, |c, o| cmd_linear_analysis(c, o).map(drop)),
    };
    let config = RunConfig::load(&args.config)?;
    let opts = RunOptions {
        out: args.out,
        seed: args.seed,
        allow_blowup: args.allow_blowup,
    };
    runner(&config, &opts)?;
    log::info!("wrote {}", opts.out_dir(&config).display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

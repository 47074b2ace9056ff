use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fairchoice::{config, runner};

#[derive(Parser)]
#[command(
    name = "fairchoice",
    version,
    about = "Fairness-aware re-ranking experiments"
)]
struct Cli {
    /// Override the seed from the config or genspec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset in the CSV input schemas.
    Generate { genspec: PathBuf, outdir: PathBuf },
    /// Run an experiment config (or grid) into an output directory.
    Run { config: PathBuf, outdir: PathBuf },
    /// Recompute and print the summary of a run or grid directory.
    Summarize { outdir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli) -> fairchoice::Result<()> {
    match &cli.command {
        Command::Generate { genspec, outdir } => {
            let mut spec = config::parse_genspec(genspec)?;
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let data = runner::generate_dataset(&spec, outdir)?;
            if !cli.quiet {
                println!(
                    "wrote {} users, {} items, {} recommendation rows to {}",
                    data.users.len(),
                    data.items.len(),
                    data.recommendations.iter().map(|l| l.len()).sum::<usize>(),
                    outdir.display()
                );
            }
        }
        Command::Run {
            config: path,
            outdir,
        } => {
            let mut cfg = config::parse_config(path)?;
            if let Some(seed) = cli.seed {
                cfg = cfg.with_seed(seed);
            }
            let reports = runner::run_experiment(&cfg, outdir)?;
            if !cli.quiet {
                print!("{}", runner::render_reports(&reports));
            }
        }
        Command::Summarize { outdir } => {
            let reports = runner::summarize(outdir)?;
            if !cli.quiet {
                print!("{}", runner::render_reports(&reports));
            }
        }
    }
    Ok(())
}

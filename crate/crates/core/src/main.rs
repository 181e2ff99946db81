use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use doa_em::harness::{self, Algorithm, ExperimentConfig};
use doa_em::{Error, SearchKind};

#[derive(Parser, Debug)]
#[command(name = "doa-em", version, about = "SAGE / AECM DOA estimation experiments")]
struct Cli {
    /// Log progress and warnings (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one algorithm on one seed and write its convergence trace.
    Run(RunArgs),
    /// Run SAGE and AECM on consecutive seeds and write a summary table.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML experiment file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    search: Option<SearchKind>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    #[arg(long)]
    out: PathBuf,
}

fn load(path: Option<&PathBuf>) -> doa_em::Result<ExperimentConfig> {
    match path {
        Some(p) => harness::load_config(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(args: RunArgs) -> doa_em::Result<()> {
    let mut config = load(args.config.as_ref())?;
    if let Some(a) = args.algorithm {
        config.algorithm = a;
    }
    if let Some(s) = args.search {
        config.search = s;
    }
    if let Some(k) = args.iters {
        config.iterations = k;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let outcome = harness::run_experiment(&config)?;
    harness::emit_trace(&outcome.trace, &args.out)?;
    let stats = harness::RunStats::from_trace(&outcome.trace);
    log::info!(
        "{} / {}: final DOAs {:?} deg, iterations to 1 deg: {:?}",
        config.algorithm,
        config.search,
        stats.final_doas_deg,
        stats.iterations_to_threshold
    );
    Ok(())
}

fn compare(args: CompareArgs) -> doa_em::Result<()> {
    if args.seeds == 0 {
        return Err(Error::Invalid {
            field: "seeds".into(),
            reason: "need at least one seed".into(),
        });
    }
    let config = load(args.config.as_ref())?;
    let summary = harness::compare_runs(&config, args.seeds)?;
    summary.emit(&args.out)?;
    log::info!(
        "AECM reached 1 deg no later than SAGE on {:.0}% of seeds",
        100.0 * summary.fraction(|r| r.aecm_not_slower())
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Compare(args) => compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

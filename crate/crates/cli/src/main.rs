use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tailclust_cli::{list_experiments, run_experiment, RunError};

/// Run a tailclust experiment from a JSON configuration.
#[derive(Parser, Debug)]
#[command(name = "tailclust", version)]
struct Args {
    /// Experiment name, or `list` for the catalog.
    experiment: String,
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "TAILCLUST_OUT", default_value = "tailclust-out", hide = true)]
    default_out: PathBuf,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    if args.experiment == "list" {
        for (name, description, anchor) in list_experiments() {
            println!("{name:<16} {description} [{anchor}]");
        }
        return ExitCode::SUCCESS;
    }
    if let Some(k) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    let Some(path) = args.config else {
        eprintln!("error: --config is required for {}", args.experiment);
        return ExitCode::from(2);
    };
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: reading {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    match run_experiment(&args.experiment, &text, args.seed, args.out.as_deref(), &args.default_out) {
        Ok((pass, dir)) => {
            println!("{}: {} ({})", args.experiment, if pass { "pass" } else { "fail" }, dir.join("report.json").display());
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(RunError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(RunError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

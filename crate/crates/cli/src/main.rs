use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use ubot_cli::{run, Experiment, ExperimentConfig};

/// Unbalanced minibatch optimal transport experiments.
#[derive(Debug, Parser)]
#[command(name = "ubot", version)]
struct Args {
    experiment: Experiment,
    /// JSON parameter block; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Full-size defaults (10,000-point, 5,000-iteration flow).
    #[arg(long)]
    paper_scale: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match &args.config {
        Some(path) => ExperimentConfig::load(args.experiment, path, args.seed, args.out.clone(), args.paper_scale),
        None => ExperimentConfig::from_json(args.experiment, "{}", args.seed, args.out.clone(), PathBuf::new(), args.paper_scale),
    };
    match cfg.and_then(|cfg| run(&cfg)) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ubot: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

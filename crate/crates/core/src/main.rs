use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ulsim::cli::commands::{cmd_run, cmd_settling, default_jobs, parse_list};
use ulsim::cli::config::{parse_variants, ExperimentSpec};
use ulsim::overlay::OverlayGraph;
use ulsim::stats::Alternative;

#[derive(Parser)]
#[command(name = "ulsim", version, about = "Adaptive peer-to-peer lookup simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every fitness variant over several seeds and write traces and a report.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated fitness functions, e.g. F2,F4.
        #[arg(long)]
        fitness: Option<String>,
        /// two_sided, a_greater or a_less.
        #[arg(long, default_value = "two_sided")]
        alternative: String,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Settling time of the averaged global QHR versus the adaptation period.
    Settling {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated adaptation periods in seconds.
        #[arg(long, default_value = "1,3,5,7,10,15")]
        ta: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        fitness: Option<String>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Write the initial topology as an edge list.
    Topology {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_spec(
    config: Option<&PathBuf>,
    runs: Option<usize>,
    seed: Option<u64>,
    fitness: Option<&String>,
) -> ulsim::Result<ExperimentSpec> {
    let mut spec = match config {
        Some(path) => ExperimentSpec::from_file(path)?,
        None => ExperimentSpec::default(),
    };
    if let Some(r) = runs {
        spec.runs = r;
    }
    if let Some(s) = seed {
        spec.base_seed = s;
        spec.scenario.seed = s;
    }
    if let Some(f) = fitness {
        spec.variants = parse_variants(f)?;
    }
    spec.validate()?;
    Ok(spec)
}

fn execute(cli: Cli) -> ulsim::Result<()> {
    match cli.command {
        Command::Run { config, out, runs, seed, fitness, alternative, jobs } => {
            let spec = load_spec(config.as_ref(), runs, seed, fitness.as_ref())?;
            let alternative: Alternative = alternative.parse()?;
            let outputs = cmd_run(&spec, &out, jobs.unwrap_or_else(default_jobs), alternative)?;
            eprintln!("wrote {} files to {}", outputs.files.len(), out.display());
        }
        Command::Settling { config, ta, out, runs, seed, fitness, jobs } => {
            let spec = load_spec(config.as_ref(), runs, seed, fitness.as_ref())?;
            let ta: Vec<f64> = parse_list(&ta)?;
            let rows = cmd_settling(&spec, &ta, Some(&out), jobs.unwrap_or_else(default_jobs))?;
            eprintln!("wrote {} rows to {}", rows.len(), out.join("settling.csv").display());
        }
        Command::Topology { config, out } => {
            let spec = load_spec(config.as_ref(), None, None, None)?;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.base_seed);
            let graph = OverlayGraph::generate(&spec.scenario.topology, &mut rng)?;
            graph.write_edges(BufWriter::new(File::create(&out)?))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

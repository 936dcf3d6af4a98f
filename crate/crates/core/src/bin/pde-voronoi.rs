use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pde_voronoi::config::{parse_override, Experiment, ExperimentConfig};
use pde_voronoi::runner::{output_dir, run_experiment};
use pde_voronoi::verify::{render_table, run_all};

#[derive(Parser)]
#[command(
    name = "pde-voronoi",
    version,
    about = "Tessellations from PDEs, checked against the exact oracle"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Nearest-site or power rasterization.
    Voronoi(RunArgs),
    /// Brownian colonization game.
    Colonize(RunArgs),
    /// Superposed heat kernels and ray monotonicity probes.
    Heat(RunArgs),
    /// Fast marching fronts and their collision set.
    Eikonal(RunArgs),
    /// The shrinking Brenier map of a power diagram.
    Transport(RunArgs),
    /// Harmonic tessellation of a perforated box.
    Harmonic(RunArgs),
    /// Run every acceptance criterion and print a pass/fail table.
    Verify,
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Nodes per side.
    #[arg(long)]
    grid: Option<usize>,
    /// Output directory (defaults to $PDE_VORONOI_OUT/<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` settings, applied after the file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn run(experiment: Experiment, args: RunArgs) -> pde_voronoi::Result<i32> {
    let text = args.config.as_ref().map(std::fs::read_to_string).transpose()?;
    let mut pairs = args
        .overrides
        .iter()
        .map(|o| parse_override(o))
        .collect::<pde_voronoi::Result<Vec<_>>>()?;
    if let Some(seed) = args.seed {
        pairs.push(("seed".into(), seed.to_string()));
    }
    if let Some(grid) = args.grid {
        pairs.push(("grid".into(), grid.to_string()));
    }
    if let Some(out) = args.out {
        pairs.push(("out".into(), out.display().to_string()));
    }
    let cfg = ExperimentConfig::load(experiment, text.as_deref(), &pairs)?;
    let manifest = run_experiment(&cfg)?;
    for a in &manifest.assertions {
        let mark = if a.pass { "ok  " } else { "FAIL" };
        println!("{mark} {} = {:.4e} (tolerance {:.4e})", a.name, a.value, a.tolerance);
    }
    for n in &manifest.notes {
        println!("note: {n}");
    }
    println!("artifacts in {}", output_dir(&cfg).display());
    Ok(manifest.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Verify => {
            let reports = run_all();
            print!("{}", render_table(&reports));
            return if reports.iter().all(|r| r.pass()) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            };
        }
        Command::Voronoi(a) => (Experiment::Voronoi, a),
        Command::Colonize(a) => (Experiment::Colonize, a),
        Command::Heat(a) => (Experiment::Heat, a),
        Command::Eikonal(a) => (Experiment::Eikonal, a),
        Command::Transport(a) => (Experiment::Transport, a),
        Command::Harmonic(a) => (Experiment::Harmonic, a),
    };
    match run(experiment, args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

//! Drive an experiment from config text, the way the command line does.

use pde_voronoi::config::{parse_override, Experiment, ExperimentConfig};
use pde_voronoi::runner::run_experiment;

const CONFIG: &str = "
# eikonal run on a coarse grid
sources = 6
seed = 42
grid = 128
tau = 1
";

fn main() -> pde_voronoi::Result<()> {
    let out = std::env::temp_dir().join("pde-voronoi-example");
    let overrides = [
        parse_override("snapshots=3")?,
        ("out".to_string(), out.display().to_string()),
    ];
    let cfg = ExperimentConfig::load(Experiment::Eikonal, Some(CONFIG), &overrides)?;
    let manifest = run_experiment(&cfg)?;
    for f in &manifest.files {
        println!("{:<16} {}", f.name, &f.sha256[..16]);
    }
    for a in &manifest.assertions {
        println!(
            "{}: {} ({:.3} vs {})",
            a.name,
            if a.pass { "ok" } else { "FAILED" },
            a.value,
            a.tolerance
        );
    }
    println!("exit code would be {}", manifest.exit_code());

    let rejected = ExperimentConfig::resolve(Experiment::Transport, &[parse_override("lambda=1.3")?]);
    println!("lambda = 1.3: {}", rejected.unwrap_err());
    Ok(())
}

//! The colonization game with the default parameters: 4 sources, 100
//! particles each, 500 steps of size 0.1, coalition radius 0.01.

use pde_voronoi::colonize::{render_swarm, run_colonization, SimParams};
use pde_voronoi::geom::GridSpec;
use pde_voronoi::io::label_ppm;

fn main() -> pde_voronoi::Result<()> {
    let params = SimParams::default();
    let run = run_colonization(&params)?;
    let m = &run.metrics;
    println!("sources: {:?}", run.sites.sites());
    println!(
        "share of trajectory points inside their own cell: {:.4}",
        m.global_fraction
    );
    for (i, f) in m.per_source_fraction.iter().enumerate() {
        println!("  source {i}: {f:.4}");
    }
    println!("{} coalitions, {} wall resets", m.n_coalitions, m.n_boundary_resets);

    let g = GridSpec::square(256, params.domain)?;
    let out = std::env::temp_dir().join("swarm.ppm");
    std::fs::write(&out, label_ppm(&render_swarm(&run.state, &g)))?;
    println!("territories drawn to {}", out.display());
    Ok(())
}

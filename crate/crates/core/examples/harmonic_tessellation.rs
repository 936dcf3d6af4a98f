//! Harmonic potential around three small disks in a truncated box, and the
//! labeling obtained by climbing it.

use pde_voronoi::geom::Point;
use pde_voronoi::harmonic::{harmonic_tessellation, PerforatedProblem};
use pde_voronoi::io::label_ppm;

fn main() -> pde_voronoi::Result<()> {
    let disks = vec![Point::new(-0.5, -0.3), Point::new(0.6, -0.2), Point::new(0.0, 0.6)];
    let p = PerforatedProblem::in_box(disks, 0.1, 256, 4.0)?;
    let t = harmonic_tessellation(&p)?;
    let r = &t.report;
    println!(
        "SOR (omega {:.4}) converged in {} sweeps, last update {:.1e}",
        p.omega(),
        r.solver_iterations,
        r.residual
    );
    println!("maximum principle holds: {}", r.maximum_principle);
    println!("unassigned fraction {:.4}", r.unassigned_fraction);
    println!(
        "disagreement with Voronoi away from the edges {:.4}",
        r.mismatch_vs_voronoi
    );

    let out = std::env::temp_dir().join("harmonic.ppm");
    std::fs::write(&out, label_ppm(&t.labels))?;
    println!("tessellation drawn to {}", out.display());
    Ok(())
}

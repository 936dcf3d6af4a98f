//! Arrival times from every site at once, and the node set where two
//! independent fronts arrive within one grid spacing of each other.

use pde_voronoi::eikonal::{extract_singular_set, fast_march, max_distance_error, per_source_distance_stack};
use pde_voronoi::geom::{
    boundary_nodes, hausdorff_nodes, random_site_set, rasterize_tessellation, GridSpec, Mode, Rect,
};
use pde_voronoi::io::mask_pgm;

fn main() -> pde_voronoi::Result<()> {
    let sites = random_site_set(5, Rect::square(2.0), 0.2, 0.5, 600)?;
    let g = GridSpec::square(256, sites.domain())?;
    let h = g.h();

    let field = fast_march(&sites, &g)?;
    println!("max |T - d| = {:.3}h", max_distance_error(&field, &sites) / h);

    let stack = per_source_distance_stack(&sites, &g)?;
    let singular = extract_singular_set(&stack, h);
    let edges = boundary_nodes(&rasterize_tessellation(&sites, &g, Mode::Voronoi));
    let d = hausdorff_nodes(&g, &singular.nodes, &edges);
    println!(
        "{} collision nodes, {:.2}h from the Voronoi edges",
        singular.nodes.len(),
        d / h
    );

    let out = std::env::temp_dir().join("collision.pgm");
    std::fs::write(&out, mask_pgm(&g, &singular.nodes))?;
    println!("collision set drawn to {}", out.display());
    Ok(())
}

//! Nearest-site and power labelings of the same sites, written as colour previews.
//!
//! cargo run --release --example voronoi_oracle

use pde_voronoi::geom::{random_site_set, rasterize_tessellation, GridSpec, Mode, Rect};
use pde_voronoi::io::label_ppm;

fn main() -> pde_voronoi::Result<()> {
    let sites = random_site_set(5, Rect::square(2.0), 0.2, 0.5, 1)?;
    let g = GridSpec::square(256, sites.domain())?;

    let voronoi = rasterize_tessellation(&sites, &g, Mode::Voronoi);
    let weighted = sites.clone().with_weights(vec![0.0, 0.15, -0.1, 0.05, 0.2])?;
    let power = rasterize_tessellation(&weighted, &g, Mode::Power);

    println!("voronoi node counts {:?}", voronoi.counts(sites.len()));
    println!("power node counts   {:?}", power.counts(sites.len()));

    let dir = std::env::temp_dir();
    std::fs::write(dir.join("voronoi.ppm"), label_ppm(&voronoi))?;
    std::fs::write(dir.join("power.ppm"), label_ppm(&power))?;
    println!("previews written to {}", dir.display());
    Ok(())
}

//! Ray profiles of superposed heat kernels, and the largest time at which all
//! of them still decrease away from their site.

use pde_voronoi::geom::{random_site_set, Rect};
use pde_voronoi::heat::{
    empirical_t, path_minimum_probe, radial_monotonicity_probe, ray_fan, HeatConfig, ProbeVerdict,
};

fn main() -> pde_voronoi::Result<()> {
    let sites = random_site_set(4, Rect::square(2.0), 0.2, 0.5, 301)?;
    let cfg = HeatConfig::equal(sites, 1e-3)?;
    let (delta, epsilon, ds) = (0.02, 0.05, 0.005);
    let thetas = ray_fan(64);

    let mut tally = [0usize; 3];
    for i in 0..cfg.sites.len() {
        for &th in &thetas {
            let verdict = radial_monotonicity_probe(&cfg, i, th, delta, epsilon, ds)?.verdict;
            tally[verdict as usize] += 1;
        }
    }
    println!(
        "t = 1e-3: {} decreasing, {} violated, {} empty",
        tally[ProbeVerdict::Decreasing as usize],
        tally[ProbeVerdict::Violated as usize],
        tally[ProbeVerdict::EmptyRange as usize]
    );

    let all: Vec<usize> = (0..cfg.sites.len()).collect();
    let t = empirical_t(&cfg, &all, &thetas, delta, epsilon, ds)?;
    println!("every ray decreases up to t = {:.4e}", t.t);

    let m = path_minimum_probe(&cfg, 0, 1, 4000)?;
    println!(
        "minimum between sites 0 and 1 sits {:.2e} from the cell boundary",
        m.boundary_distance
    );
    Ok(())
}

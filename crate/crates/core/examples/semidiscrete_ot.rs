//! Uniform measure to three point masses: the power-cell plan against an exact
//! min-cost flow on a fine atomization of the square.

use pde_voronoi::geom::{random_site_set, GridSpec, Rect};
use pde_voronoi::transport::{discrete_ot_oracle, semidiscrete_limit_cost, TransportConfig};

fn main() -> pde_voronoi::Result<()> {
    let sites = random_site_set(3, Rect::square(2.0), 0.2, 0.5, 700)?;
    let cfg = TransportConfig::new(sites.clone(), 0.5, GridSpec::square(256, sites.domain())?)?;
    let limit = semidiscrete_limit_cost(&cfg, cfg.grid());
    let ot = discrete_ot_oracle(&cfg, 400)?;
    println!("power-cell plan cost   {:.6}", limit.cost_zero);
    println!("min-cost flow, {} atoms {:.6}", ot.atoms, ot.cost);
    println!(
        "relative gap           {:.3}%",
        100.0 * (ot.cost - limit.cost_zero) / limit.cost_zero
    );
    Ok(())
}

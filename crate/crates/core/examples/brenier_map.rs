//! The potential whose gradient shrinks every power cell toward its site,
//! checked as a Monge–Ampère solution and as a transport map.

use pde_voronoi::geom::{random_site_set, GridSpec, Rect};
use pde_voronoi::transport::{transport_report, TransportConfig};

fn main() -> pde_voronoi::Result<()> {
    let sites = random_site_set(4, Rect::square(2.0), 0.2, 0.5, 701)?.with_weights(vec![0.0, 0.05, -0.05, 0.02])?;
    let lambda = 0.5;
    let cfg =
        TransportConfig::new(sites.clone(), lambda, GridSpec::square(256, sites.domain())?)?.with_samples(100_000);
    let r = transport_report(&cfg, 0)?;

    println!("pushforward: {} misplaced samples", r.pushforward.violations.len());
    for (i, c) in r.pushforward.cells.iter().enumerate() {
        println!(
            "  cell {i}: expected {:.4}, observed {:.4}",
            c.expected_share, c.observed_share
        );
    }
    for m in &r.brenier_residuals {
        println!("  test function {:<6} residual {:.2e}", m.xi, m.residual);
    }
    println!(
        "det Hessian off by at most {:.2e} from {}",
        r.hessian.max_det_error,
        lambda * lambda
    );
    for j in &r.jumps {
        println!(
            "  gradient jump {}|{}: {:.6} vs {:.6}",
            j.i, j.j, j.measured, j.analytic
        );
    }
    println!(
        "cost {:.6} = (1 - lambda)^2 x {:.6}",
        r.cost.cost_lambda, r.cost.cost_zero
    );
    Ok(())
}

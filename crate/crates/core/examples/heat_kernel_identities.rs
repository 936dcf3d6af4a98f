use pde_voronoi::geom::{random_site_set, rasterize_tessellation, GridSpec, Mode, Point, Rect, SiteSet};
use pde_voronoi::heat::{
    dominant_kernel_label, field_mass, heat_field, padded_grid, require_cutlocus_free, torus_semigroup_defect,
    HeatConfig,
};

fn main() -> pde_voronoi::Result<()> {
    let sites = random_site_set(4, Rect::square(2.0), 0.2, 0.5, 300)?;
    let g = GridSpec::square(256, sites.domain())?;
    let oracle = rasterize_tessellation(&sites, &g, Mode::Voronoi);
    for t in [1e-4, 1e-2, 1.0] {
        let cfg = HeatConfig::equal(sites.clone(), t)?;
        let same = dominant_kernel_label(&cfg, &g).labels == oracle.labels;
        let pg = padded_grid(&sites, 10.0 * t.sqrt(), t.sqrt() / 10.0)?;
        let mass = field_mass(&heat_field(&cfg, &pg));
        println!("t = {t:e}: dominant kernel equals Voronoi: {same}, mass {mass:.10}");
    }

    let defect = torus_semigroup_defect(Point::new(0.2, 0.3), Point::new(0.7, 0.6), 0.01, 0.01, 1.0, 128)?;
    println!("torus semigroup relative defect {defect:.2e}");

    let lonely = SiteSet::torus(vec![Point::new(0.5, 0.5)], 1.0)?;
    let err = require_cutlocus_free(&lonely, &GridSpec::square(32, lonely.domain())?).unwrap_err();
    println!("single site on the torus: {err}");
    Ok(())
}

//! Run a few acceptance criteria from code instead of through `pde-voronoi verify`.

use pde_voronoi::verify::{criterion_1, criterion_4, criterion_5, render_table};

fn main() {
    let reports = vec![criterion_1(), criterion_4(), criterion_5()];
    print!("{}", render_table(&reports));
}

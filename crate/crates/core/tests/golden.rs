//! Byte-level regression of the colour preview against a stored pilot image.

use pde_voronoi::geom::{rasterize_tessellation, GridSpec, Mode, Point, Rect, SiteSet};
use pde_voronoi::io::{label_ppm, PALETTE};

const GOLDEN: &[u8] = include_bytes!("golden/voronoi4_64.ppm");

fn four_sites() -> SiteSet {
    let pts = vec![
        Point::new(0.45, 0.5),
        Point::new(1.55, 0.4),
        Point::new(0.6, 1.5),
        Point::new(1.45, 1.6),
    ];
    SiteSet::new(pts, Rect::square(2.0)).unwrap()
}

fn render() -> Vec<u8> {
    let s = four_sites();
    let g = GridSpec::square(64, s.domain()).unwrap();
    label_ppm(&rasterize_tessellation(&s, &g, Mode::Voronoi))
}

#[test]
fn four_site_preview_matches_golden() {
    assert_eq!(render(), GOLDEN);
}

#[test]
fn golden_has_one_colour_per_quadrant() {
    let header = b"P6\n64 64\n255\n";
    assert!(GOLDEN.starts_with(header));
    let px = |col: usize, row: usize| {
        let o = header.len() + 3 * (row * 64 + col);
        [GOLDEN[o], GOLDEN[o + 1], GOLDEN[o + 2]]
    };
    // Rows run from the top of the domain down.
    assert_eq!(px(0, 63), PALETTE[0]);
    assert_eq!(px(63, 63), PALETTE[1]);
    assert_eq!(px(0, 0), PALETTE[2]);
    assert_eq!(px(63, 0), PALETTE[3]);
}

#[test]
fn rendering_is_byte_stable() {
    assert_eq!(render(), render());
}

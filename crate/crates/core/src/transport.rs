//! The explicit convex potential of a power diagram and its transport map.
//!
//! For `λ ∈ (0,1)`
//!
//! ```text
//! Φ_λ(x) = ½|x|² + (λ−1)/2 · min_i (|x − x_i|² + w_i)
//! ```
//!
//! is piecewise quadratic with Hessian `λ I` inside every power cell `V_i`, so
//! its gradient `x ↦ x_i + λ(x − x_i)` shrinks each cell toward its site. The
//! map pushes the uniform measure on `Ω` onto the uniform density `1/λ²`
//! (volume normalized) on the shrunken cells `V_i^λ`, and it jumps by
//! `(1−λ)|x_i − x_j|` across every shared cell boundary. As `λ → 0` the map
//! collapses each cell onto its site, which is the semi-discrete optimal
//! transport plan; a small exact discrete solver checks the limiting cost.
//!
//! Measures on `Ω` are normalized by `1/|Ω|` rather than by rescaling the
//! domain. Grid quadratures sum row partials in a fixed order so results do
//! not depend on the thread count.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geom::{
    boundary_distance, power_label, rasterize_tessellation, GridSpec, LabelGrid, Mode, Point, SiteSet, Topology,
    UNASSIGNED,
};

/// Power gap at or below which a point counts as lying on a cell boundary.
pub const BOUNDARY_GAP: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct TransportConfig {
    sites: SiteSet,
    lambda: f64,
    grid: GridSpec,
    samples: usize,
    seed: u64,
    areas: Vec<f64>,
}

impl TransportConfig {
    /// Validates `λ` and that every power cell is hit by at least one node of `grid`.
    pub fn new(sites: SiteSet, lambda: f64, grid: GridSpec) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(invalid("lambda", format!("{lambda} is outside (0, 1)")));
        }
        if sites.topology() != Topology::Plane {
            return Err(Error::Topology("plane"));
        }
        if grid.domain != sites.domain() {
            return Err(invalid("grid", "grid must cover the site domain"));
        }
        let areas = cell_areas(&sites, &grid);
        if let Some(i) = areas.iter().position(|&a| a == 0.0) {
            return Err(Error::EmptyCell(i));
        }
        Ok(Self {
            sites,
            lambda,
            grid,
            samples: 100_000,
            seed: 0,
            areas,
        })
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn sites(&self) -> &SiteSet {
        &self.sites
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Grid-measure areas of the power cells.
    pub fn cell_areas(&self) -> &[f64] {
        &self.areas
    }

    fn volume(&self) -> f64 {
        self.sites.domain().area()
    }
}

/// Power-cell areas in grid measure: node count times `h²`.
pub fn cell_areas(s: &SiteSet, g: &GridSpec) -> Vec<f64> {
    let node_area = g.h() * g.h();
    rasterize_tessellation(s, g, Mode::Power)
        .counts(s.len())
        .into_iter()
        .map(|c| c as f64 * node_area)
        .collect()
}

/// `Φ_λ` for any `λ`; [`phi_lambda`] is the validated entry point.
pub fn phi(x: Point, s: &SiteSet, lambda: f64) -> f64 {
    let m = s
        .sites()
        .iter()
        .zip(s.weights())
        .map(|(&p, &w)| (x - p).norm2() + w)
        .fold(f64::INFINITY, f64::min);
    0.5 * x.norm2() + 0.5 * (lambda - 1.0) * m
}

pub fn phi_lambda(x: Point, cfg: &TransportConfig) -> f64 {
    phi(x, &cfg.sites, cfg.lambda)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MapValue {
    pub y: Point,
    pub label: usize,
    /// The origin lies on a power boundary; `label` is the tie-break.
    pub on_boundary: bool,
}

/// `∇Φ_λ` with the cell chosen by power label.
pub fn gradient(x: Point, s: &SiteSet, lambda: f64) -> MapValue {
    let n = power_label(x, s);
    let c = s.site(n.label);
    MapValue {
        y: x + (x - c) * (lambda - 1.0),
        label: n.label,
        on_boundary: n.gap <= BOUNDARY_GAP,
    }
}

pub fn brenier_map(x: Point, cfg: &TransportConfig) -> MapValue {
    gradient(x, &cfg.sites, cfg.lambda)
}

/// Whether `y ∈ V_i^λ`: its pre-image about `x_i` lies in `Ω` and in `V_i`.
pub fn image_cell_membership(y: Point, i: usize, cfg: &TransportConfig) -> bool {
    let c = cfg.sites.site(i);
    let pre = c + (y - c) * (1.0 / cfg.lambda);
    cfg.sites.domain().contains_closed(pre) && power_label(pre, &cfg.sites).label == i
}

/// The image cell containing `y`, if any.
pub fn image_cell_of(y: Point, cfg: &TransportConfig) -> Option<usize> {
    (0..cfg.sites.len()).find(|&i| image_cell_membership(y, i, cfg))
}

/// Labels of the shrunken cells on a grid; nodes outside every image are unassigned.
pub fn image_cell_grid(cfg: &TransportConfig, g: &GridSpec) -> LabelGrid {
    let labels = (0..g.len())
        .into_par_iter()
        .map(|idx| image_cell_of(g.point(idx), cfg).map_or(UNASSIGNED, |i| i as u32))
        .collect();
    LabelGrid {
        spec: *g,
        labels,
        gaps: None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MappedSample {
    pub x: Point,
    pub label: usize,
    pub on_boundary: bool,
    pub y: Point,
}

/// `cfg.samples()` uniform points of `Ω` and their images, in draw order.
pub fn pushforward_samples(cfg: &TransportConfig) -> Vec<MappedSample> {
    let d = cfg.sites.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let xs: Vec<Point> = (0..cfg.samples)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            Point::new(d.x0 + u * d.width(), d.y0 + v * d.height())
        })
        .collect();
    xs.into_par_iter()
        .map(|x| {
            let m = brenier_map(x, cfg);
            MappedSample {
                x,
                label: m.label,
                on_boundary: m.on_boundary,
                y: m.y,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellMass {
    pub oracle_area: f64,
    pub expected_share: f64,
    pub observed_share: f64,
    pub sigma: f64,
    /// Estimated density of the image measure on `V_i^λ`, against `1/(λ²|Ω|)`.
    pub image_density: f64,
    pub within_4_sigma: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PushforwardReport {
    pub samples: usize,
    pub boundary_skipped: usize,
    pub violations: Vec<MappedSample>,
    pub cells: Vec<CellMass>,
    pub expected_density: f64,
}

impl PushforwardReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty() && self.cells.iter().all(|c| c.within_4_sigma)
    }
}

/// Maps uniform samples, checks containment in the origin's image cell and
/// compares the share landing in each image cell with `|V_i|/|Ω|`.
pub fn pushforward_check(cfg: &TransportConfig) -> PushforwardReport {
    let samples = pushforward_samples(cfg);
    pushforward_report(cfg, &samples)
}

pub fn pushforward_report(cfg: &TransportConfig, samples: &[MappedSample]) -> PushforwardReport {
    let n = cfg.sites.len();
    let hits: Vec<Option<usize>> = samples.par_iter().map(|s| image_cell_of(s.y, cfg)).collect();
    let mut counts = vec![0usize; n];
    let mut violations = Vec::new();
    let mut boundary_skipped = 0;
    for (s, hit) in samples.iter().zip(&hits) {
        if let Some(i) = hit {
            counts[*i] += 1;
        }
        if s.on_boundary {
            boundary_skipped += 1;
        } else if !image_cell_membership(s.y, s.label, cfg) {
            violations.push(*s);
        }
    }
    let m = samples.len().max(1) as f64;
    let vol = cfg.volume();
    let lam2 = cfg.lambda * cfg.lambda;
    let cells = (0..n)
        .map(|i| {
            let p = cfg.areas[i] / vol;
            let observed = counts[i] as f64 / m;
            let sigma = (p * (1.0 - p) / m).sqrt();
            CellMass {
                oracle_area: cfg.areas[i],
                expected_share: p,
                observed_share: observed,
                sigma,
                image_density: observed / (lam2 * cfg.areas[i]),
                within_4_sigma: (observed - p).abs() <= 4.0 * sigma,
            }
        })
        .collect();
    PushforwardReport {
        samples: samples.len(),
        boundary_skipped,
        violations,
        cells,
        expected_density: 1.0 / (lam2 * vol),
    }
}

/// Test functions `{1, y₁, y₂, y₁², y₁y₂, y₂², y₁³, y₂³}`.
pub const MONOMIALS: [&str; 8] = ["1", "y1", "y2", "y1^2", "y1*y2", "y2^2", "y1^3", "y2^3"];

fn monomials(y: Point) -> [f64; 8] {
    let (a, b) = (y.x, y.y);
    [1.0, a, b, a * a, a * b, b * b, a * a * a, b * b * b]
}

/// Midpoint-rule sums over the grid with a thread-independent reduction order.
fn grid_sum<const K: usize>(g: &GridSpec, f: impl Fn(Point) -> [f64; K] + Sync) -> [f64; K] {
    let h = g.h();
    let rows: Vec<[f64; K]> = (0..g.ny)
        .into_par_iter()
        .map(|iy| {
            let mut acc = [0.0; K];
            for ix in 0..g.nx {
                let v = f(g.node(ix, iy));
                for k in 0..K {
                    acc[k] += v[k];
                }
            }
            acc
        })
        .collect();
    sum_rows(rows, h * h)
}

/// `a·p ≤ b`.
#[derive(Clone, Copy, Debug)]
struct HalfPlane {
    a: Point,
    b: f64,
}

impl HalfPlane {
    fn slack(&self, p: Point) -> f64 {
        self.b - self.a.dot(p)
    }
}

/// Power cell `i` of `s` as half-planes, domain walls excluded.
fn power_halfplanes(s: &SiteSet, i: usize) -> Vec<HalfPlane> {
    let (xi, wi) = (s.site(i), s.weights()[i]);
    (0..s.len())
        .filter(|&j| j != i)
        .map(|j| {
            let (xj, wj) = (s.site(j), s.weights()[j]);
            HalfPlane {
                a: (xj - xi) * 2.0,
                b: xj.norm2() - xi.norm2() + wj - wi,
            }
        })
        .collect()
}

/// Image cell `V_i^λ`: points whose pre-image lies in `V_i ∩ Ω`.
fn image_halfplanes(cfg: &TransportConfig, i: usize) -> Vec<HalfPlane> {
    let d = cfg.sites.domain();
    let xi = cfg.sites.site(i);
    let lam = cfg.lambda;
    let walls = [
        HalfPlane {
            a: Point::new(-1.0, 0.0),
            b: -d.x0,
        },
        HalfPlane {
            a: Point::new(1.0, 0.0),
            b: d.x1,
        },
        HalfPlane {
            a: Point::new(0.0, -1.0),
            b: -d.y0,
        },
        HalfPlane {
            a: Point::new(0.0, 1.0),
            b: d.y1,
        },
    ];
    power_halfplanes(&cfg.sites, i)
        .into_iter()
        .chain(walls)
        .map(|hp| HalfPlane {
            a: hp.a,
            b: lam * (hp.b - hp.a.dot(xi)) + hp.a.dot(xi),
        })
        .collect()
}

/// Sutherland–Hodgman clip of a convex polygon by one half-plane.
fn clip(poly: &[Point], hp: HalfPlane) -> Vec<Point> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let (p, q) = (poly[k], poly[(k + 1) % poly.len()]);
        let (sp, sq) = (hp.slack(p), hp.slack(q));
        if sp >= 0.0 {
            out.push(p);
        }
        if (sp >= 0.0) != (sq >= 0.0) {
            out.push(p + (q - p) * (sp / (sp - sq)));
        }
    }
    out
}

/// Degree-3 exact integral over a convex polygon, fanned into triangles.
fn polygon_integral<const K: usize>(poly: &[Point], f: &impl Fn(Point) -> [f64; K]) -> [f64; K] {
    // Four-point triangle rule: centroid weight −27/48, three points 25/48.
    let mut acc = [0.0; K];
    for k in 1..poly.len().saturating_sub(1) {
        let (a, b, c) = (poly[0], poly[k], poly[k + 1]);
        let area = 0.5 * ((b - a).x * (c - a).y - (b - a).y * (c - a).x).abs();
        let at = |u: f64, v: f64| a + (b - a) * u + (c - a) * v;
        let nodes = [
            (at(1.0 / 3.0, 1.0 / 3.0), -27.0 / 48.0),
            (at(0.2, 0.2), 25.0 / 48.0),
            (at(0.6, 0.2), 25.0 / 48.0),
            (at(0.2, 0.6), 25.0 / 48.0),
        ];
        for (p, w) in nodes {
            let v = f(p);
            for j in 0..K {
                acc[j] += v[j] * w * area;
            }
        }
    }
    acc
}

/// Midpoint rule on grid cells lying inside one region; cells crossed by a
/// region boundary are clipped and integrated exactly. `f(k, p)` is the
/// integrand on region `k`; outside every region it is zero.
fn cut_cell_sum<const K: usize>(
    g: &GridSpec,
    regions: &[Vec<HalfPlane>],
    f: impl Fn(usize, Point) -> [f64; K] + Sync,
) -> [f64; K] {
    let h = g.h();
    let rows: Vec<[f64; K]> = (0..g.ny)
        .into_par_iter()
        .map(|iy| {
            let mut acc = [0.0; K];
            for ix in 0..g.nx {
                let c = g.node(ix, iy);
                let r = 0.5 * h;
                let square = [
                    Point::new(c.x - r, c.y - r),
                    Point::new(c.x + r, c.y - r),
                    Point::new(c.x + r, c.y + r),
                    Point::new(c.x - r, c.y + r),
                ];
                for (k, planes) in regions.iter().enumerate() {
                    let cuts: Vec<HalfPlane> = planes
                        .iter()
                        .copied()
                        .filter(|hp| square.iter().any(|&p| hp.slack(p) < 0.0))
                        .collect();
                    let v = if cuts.is_empty() {
                        f(k, c).map(|v| v * h * h)
                    } else if cuts.iter().any(|hp| square.iter().all(|&p| hp.slack(p) < 0.0)) {
                        continue;
                    } else {
                        let poly = cuts.iter().fold(square.to_vec(), |poly, &hp| clip(&poly, hp));
                        polygon_integral(&poly, &|p| f(k, p))
                    };
                    for j in 0..K {
                        acc[j] += v[j];
                    }
                }
            }
            acc
        })
        .collect();
    sum_rows(rows, 1.0)
}

fn sum_rows<const K: usize>(rows: Vec<[f64; K]>, scale: f64) -> [f64; K] {
    let mut total = [0.0; K];
    for r in rows {
        for k in 0..K {
            total[k] += r[k];
        }
    }
    total.map(|t| t * scale)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonomialResidual {
    pub xi: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// `∫ ξ g dy` against `∫ ξ∘∇Φ_λ f dx` for each monomial, both on grid `g`.
/// Grid cells inside one image cell (left) or one power cell (right) use the
/// midpoint rule; cells crossed by a boundary are clipped and integrated
/// exactly, so the residual carries the `O(h²)` midpoint error only.
pub fn brenier_residual(cfg: &TransportConfig, g: &GridSpec) -> Vec<MonomialResidual> {
    let vol = cfg.volume();
    let density = 1.0 / (cfg.lambda * cfg.lambda * vol);
    let n = cfg.sites.len();
    let images: Vec<Vec<HalfPlane>> = (0..n).map(|i| image_halfplanes(cfg, i)).collect();
    let cells: Vec<Vec<HalfPlane>> = (0..n).map(|i| power_halfplanes(&cfg.sites, i)).collect();
    let lam = cfg.lambda;
    let lhs = cut_cell_sum(g, &images, |_, y| monomials(y).map(|v| v * density));
    let rhs = cut_cell_sum(g, &cells, |i, x| {
        let xi = cfg.sites.site(i);
        monomials(xi + (x - xi) * lam).map(|v| v / vol)
    });
    MONOMIALS
        .iter()
        .enumerate()
        .map(|(k, &xi)| MonomialResidual {
            xi,
            lhs: lhs[k],
            rhs: rhs[k],
            residual: (lhs[k] - rhs[k]).abs(),
        })
        .collect()
}

/// Central-difference Hessian `[[fxx, fxy], [fxy, fyy]]`.
pub fn fd_hessian(f: impl Fn(Point) -> f64, x: Point, step: f64) -> [[f64; 2]; 2] {
    let e1 = Point::new(step, 0.0);
    let e2 = Point::new(0.0, step);
    let f0 = f(x);
    let h2 = step * step;
    let fxx = (f(x + e1) - 2.0 * f0 + f(x - e1)) / h2;
    let fyy = (f(x + e2) - 2.0 * f0 + f(x - e2)) / h2;
    let fxy = (f(x + e1 + e2) - f(x + e1 - e2) - f(x - e1 + e2) + f(x - e1 - e2)) / (4.0 * h2);
    [[fxx, fxy], [fxy, fyy]]
}

/// Central-difference gradient.
pub fn fd_gradient(f: impl Fn(Point) -> f64, x: Point, step: f64) -> Point {
    let e1 = Point::new(step, 0.0);
    let e2 = Point::new(0.0, step);
    Point::new(
        (f(x + e1) - f(x - e1)) / (2.0 * step),
        (f(x + e2) - f(x - e2)) / (2.0 * step),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HessianReport {
    pub checked: usize,
    pub skipped: usize,
    pub max_det_error: f64,
    /// Largest entry of `|H − λI|`.
    pub max_entry_error: f64,
    pub tolerance: f64,
}

impl HessianReport {
    pub fn pass(&self) -> bool {
        self.max_det_error <= self.tolerance && self.max_entry_error <= self.tolerance
    }
}

/// Finite-difference Hessian of `Φ_λ` at points farther than `10·step` from
/// every power boundary; closer points are skipped.
pub fn hessian_determinant_check(cfg: &TransportConfig, points: &[Point], step: f64) -> HessianReport {
    hessian_check_at(&cfg.sites, cfg.lambda, points, step)
}

/// [`hessian_determinant_check`] for any `λ`, including values outside `(0, 1)`.
pub fn hessian_check_at(s: &SiteSet, lambda: f64, points: &[Point], step: f64) -> HessianReport {
    let mut report = HessianReport {
        checked: 0,
        skipped: 0,
        max_det_error: 0.0,
        max_entry_error: 0.0,
        tolerance: 1e-6,
    };
    for &x in points {
        if boundary_distance(x, s, Mode::Power) <= 10.0 * step {
            report.skipped += 1;
            continue;
        }
        let h = fd_hessian(|p| phi(p, s, lambda), x, step);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let entry = (h[0][0] - lambda)
            .abs()
            .max((h[1][1] - lambda).abs())
            .max(h[0][1].abs());
        report.checked += 1;
        report.max_det_error = report.max_det_error.max((det - lambda * lambda).abs());
        report.max_entry_error = report.max_entry_error.max(entry);
    }
    report
}

/// Uniform points of `Ω` at distance more than `clearance` from every power boundary.
pub fn interior_points(cfg: &TransportConfig, count: usize, clearance: f64, seed: u64) -> Vec<Point> {
    let d = cfg.sites.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut tries = 0usize;
    while out.len() < count && tries < 1000 * count.max(1) {
        tries += 1;
        let x = Point::new(
            d.x0 + rng.random::<f64>() * d.width(),
            d.y0 + rng.random::<f64>() * d.height(),
        );
        if boundary_distance(x, &cfg.sites, Mode::Power) > clearance {
            out.push(x);
        }
    }
    out
}

/// Cell pairs sharing a grid edge in the power rasterization, `i < j`, sorted.
pub fn adjacent_pairs(lg: &LabelGrid) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for idx in 0..lg.labels.len() {
        let a = lg.labels[idx];
        for nb in lg.spec.neighbors4(idx) {
            let b = lg.labels[nb];
            if a != b && a != UNASSIGNED && b != UNASSIGNED {
                pairs.push((a.min(b) as usize, a.max(b) as usize));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientJump {
    pub i: usize,
    pub j: usize,
    pub point: Point,
    pub measured: f64,
    pub analytic: f64,
}

/// Normal offset used to take one-sided limits of the map.
pub const JUMP_OFFSET: f64 = 1e-6;

/// Jump of `∇Φ_λ` across the shared boundary of cells `i` and `j`.
///
/// Adjacency comes from the power rasterization on the config grid; the
/// evaluation point is the projection of a boundary edge midpoint onto the
/// exact power bisector.
pub fn gradient_jump(cfg: &TransportConfig, i: usize, j: usize) -> Result<GradientJump> {
    let s = &cfg.sites;
    if i >= s.len() || j >= s.len() || i == j {
        return Err(Error::NotAdjacent(i, j));
    }
    let lg = rasterize_tessellation(s, &cfg.grid, Mode::Power);
    let (xi, xj) = (s.site(i), s.site(j));
    let d = xj - xi;
    let c = xj.norm2() - xi.norm2() + s.weights()[j] - s.weights()[i];
    let normal = d * (1.0 / d.norm());
    let (li, lj) = (i as u32, j as u32);
    let mut best: Option<(f64, Point)> = None;
    for idx in 0..lg.labels.len() {
        if lg.labels[idx] != li {
            continue;
        }
        for nb in lg.spec.neighbors4(idx) {
            if lg.labels[nb] != lj {
                continue;
            }
            let m = (lg.spec.point(idx) + lg.spec.point(nb)) * 0.5;
            let x = m - d * ((2.0 * m.dot(d) - c) / (2.0 * d.norm2()));
            let lo = gradient(x - normal * JUMP_OFFSET, s, cfg.lambda);
            let hi = gradient(x + normal * JUMP_OFFSET, s, cfg.lambda);
            if lo.label != i || hi.label != j {
                continue;
            }
            // prefer the point farthest from any third cell
            let clearance = third_cell_clearance(x, s, i, j);
            if best.is_none_or(|(b, _)| clearance > b) {
                best = Some((clearance, x));
            }
        }
    }
    let (_, x) = best.ok_or(Error::NotAdjacent(i, j))?;
    let lo = gradient(x - normal * JUMP_OFFSET, s, cfg.lambda);
    let hi = gradient(x + normal * JUMP_OFFSET, s, cfg.lambda);
    Ok(GradientJump {
        i,
        j,
        point: x,
        measured: (hi.y - lo.y).norm(),
        analytic: (1.0 - cfg.lambda) * d.norm(),
    })
}

fn third_cell_clearance(x: Point, s: &SiteSet, i: usize, j: usize) -> f64 {
    let own = (x - s.site(i)).norm2() + s.weights()[i];
    (0..s.len())
        .filter(|&k| k != i && k != j)
        .map(|k| ((x - s.site(k)).norm2() + s.weights()[k] - own) / (2.0 * (s.site(k) - s.site(i)).norm()))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvexityVerdict {
    pub triples: usize,
    pub failures: usize,
    /// Smallest `½Φ(a) + ½Φ(b) − (λ/8)|a−b|² − Φ((a+b)/2)` observed.
    pub min_slack: f64,
}

impl ConvexityVerdict {
    pub fn pass(&self) -> bool {
        self.failures == 0
    }
}

/// Strong midpoint convexity with modulus `λ` on random pairs of `Ω`.
pub fn convexity_probe(cfg: &TransportConfig, n_triples: usize, seed: u64) -> ConvexityVerdict {
    let d = cfg.sites.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        Point::new(
            d.x0 + rng.random::<f64>() * d.width(),
            d.y0 + rng.random::<f64>() * d.height(),
        )
    };
    let mut failures = 0;
    let mut min_slack = f64::INFINITY;
    for _ in 0..n_triples {
        let (a, b) = (draw(), draw());
        let slack = midpoint_slack(cfg, a, b);
        min_slack = min_slack.min(slack);
        if slack < -1e-12 {
            failures += 1;
        }
    }
    ConvexityVerdict {
        triples: n_triples,
        failures,
        min_slack,
    }
}

pub fn midpoint_slack(cfg: &TransportConfig, a: Point, b: Point) -> f64 {
    let f = |p| phi_lambda(p, cfg);
    0.5 * f(a) + 0.5 * f(b) - cfg.lambda / 8.0 * (a - b).norm2() - f((a + b) * 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LimitCost {
    /// `∫ |x − ∇Φ_λ(x)|² dμ`.
    pub cost_lambda: f64,
    /// `∫ |x − x_{i(x)}|² dμ`, the `λ → 0` plan.
    pub cost_zero: f64,
}

/// Quadrature of both transport costs on grid `g`, `μ` uniform on `Ω`.
pub fn semidiscrete_limit_cost(cfg: &TransportConfig, g: &GridSpec) -> LimitCost {
    let vol = cfg.volume();
    let [cl, c0] = grid_sum(g, |x| {
        let m = brenier_map(x, cfg);
        [(x - m.y).norm2(), (x - cfg.sites.site(m.label)).norm2()]
    });
    LimitCost {
        cost_lambda: cl / vol,
        cost_zero: c0 / vol,
    }
}

/// Costs of `x ↦ x_{σ(i(x))}` for `count` random relabelings `σ`.
pub fn permutation_costs(cfg: &TransportConfig, g: &GridSpec, count: usize, seed: u64) -> Vec<f64> {
    let n = cfg.sites.len();
    let vol = cfg.volume();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut sigma: Vec<usize> = (0..n).collect();
            sigma.shuffle(&mut rng);
            let [c] = grid_sum(g, |x| {
                [(x - cfg.sites.site(sigma[power_label(x, &cfg.sites).label])).norm2()]
            });
            c / vol
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteOt {
    pub atoms: usize,
    pub cost: f64,
    /// Cost of sending every atom to its power-cell site.
    pub nearest_plan_cost: f64,
    /// Target masses had to be rounded to the atom resolution.
    pub renormalized: bool,
}

/// Units of flow per atom; target masses are rounded to `1/(m·ATOM_UNITS)`.
pub const ATOM_UNITS: i64 = 1000;

/// Exact optimal cost from `m` equal-mass grid atoms of `Ω` to the sites with
/// masses `|V_i|/|Ω|`. `m` must be a perfect square no larger than 400.
pub fn discrete_ot_oracle(cfg: &TransportConfig, m: usize) -> Result<DiscreteOt> {
    let k = (m as f64).sqrt().round() as usize;
    if m == 0 || m > 400 || k * k != m {
        return Err(invalid("m", "atom count must be a perfect square in 1..=400"));
    }
    let d = cfg.sites.domain();
    let atoms: Vec<Point> = (0..k * k)
        .map(|a| {
            let (ix, iy) = (a % k, a / k);
            Point::new(
                d.x0 + (ix as f64 + 0.5) * d.width() / k as f64,
                d.y0 + (iy as f64 + 0.5) * d.height() / k as f64,
            )
        })
        .collect();
    let total = m as i64 * ATOM_UNITS;
    let vol = cfg.volume();
    let exact: Vec<f64> = cfg.areas.iter().map(|a| a / vol * total as f64).collect();
    let (demand, renormalized) = round_to_total(&exact, total);
    let supply = vec![ATOM_UNITS; m];
    let cost = transport_cost(&atoms, &supply, cfg.sites.sites(), &demand)?;
    let nearest_plan_cost = atoms
        .iter()
        .map(|&a| (a - cfg.sites.site(power_label(a, &cfg.sites).label)).norm2())
        .sum::<f64>()
        / m as f64;
    Ok(DiscreteOt {
        atoms: m,
        cost,
        nearest_plan_cost,
        renormalized,
    })
}

/// Largest-remainder rounding of non-negative reals to integers summing to `total`.
fn round_to_total(values: &[f64], total: i64) -> (Vec<i64>, bool) {
    let mut out: Vec<i64> = values.iter().map(|v| v.floor() as i64).collect();
    let exact = values.iter().all(|v| v.fract() == 0.0);
    let mut short = total - out.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].fract().total_cmp(&values[a].fract()).then(a.cmp(&b)));
    let mut k = 0;
    while short > 0 {
        out[order[k % order.len()]] += 1;
        short -= 1;
        k += 1;
    }
    while short < 0 {
        let i = order[order.len() - 1 - (k % order.len())];
        if out[i] > 0 {
            out[i] -= 1;
            short += 1;
        }
        k += 1;
    }
    (out, !exact)
}

/// Exact squared-distance transport cost between integer-weighted point sets,
/// normalized by the total mass. Successive shortest paths on the bipartite
/// network with Dijkstra on reduced costs.
pub fn transport_cost(from: &[Point], supply: &[i64], to: &[Point], demand: &[i64]) -> Result<f64> {
    let total: i64 = supply.iter().sum();
    if total != demand.iter().sum::<i64>() || supply.iter().chain(demand).any(|&v| v < 0) {
        return Err(invalid(
            "marginals",
            "supply and demand must be non-negative with equal totals",
        ));
    }
    if total == 0 {
        return Ok(0.0);
    }
    let (na, nb) = (from.len(), to.len());
    let src = na + nb;
    let sink = src + 1;
    let mut net = FlowNetwork::new(na + nb + 2);
    for (a, &s) in supply.iter().enumerate() {
        net.add_edge(src, a, s, 0.0);
    }
    for (a, &p) in from.iter().enumerate() {
        for (b, &q) in to.iter().enumerate() {
            net.add_edge(a, na + b, total, (p - q).norm2());
        }
    }
    for (b, &dm) in demand.iter().enumerate() {
        net.add_edge(na + b, sink, dm, 0.0);
    }
    let cost = net.min_cost_flow(src, sink, total)?;
    Ok(cost / total as f64)
}

struct Edge {
    to: usize,
    cap: i64,
    cost: f64,
}

struct FlowNetwork {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

#[derive(PartialEq)]
struct Dist(f64, usize);

impl Eq for Dist {}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl FlowNetwork {
    fn new(n: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); n],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: f64) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, cap, cost });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge {
            to: from,
            cap: 0,
            cost: -cost,
        });
    }

    fn min_cost_flow(&mut self, s: usize, t: usize, want: i64) -> Result<f64> {
        let n = self.adj.len();
        let mut potential = vec![0.0; n];
        let mut flow = 0;
        let mut cost = 0.0;
        while flow < want {
            let mut dist = vec![f64::INFINITY; n];
            let mut prev = vec![usize::MAX; n];
            dist[s] = 0.0;
            let mut heap = BinaryHeap::from([Dist(0.0, s)]);
            while let Some(Dist(du, u)) = heap.pop() {
                if du > dist[u] {
                    continue;
                }
                for &e in &self.adj[u] {
                    let edge = &self.edges[e];
                    if edge.cap == 0 {
                        continue;
                    }
                    // reduced costs are non-negative up to rounding
                    let reduced = (edge.cost + potential[u] - potential[edge.to]).max(0.0);
                    let nd = du + reduced;
                    if nd < dist[edge.to] {
                        dist[edge.to] = nd;
                        prev[edge.to] = e;
                        heap.push(Dist(nd, edge.to));
                    }
                }
            }
            if !dist[t].is_finite() {
                return Err(invalid("marginals", "no feasible transport plan"));
            }
            for v in 0..n {
                if dist[v].is_finite() {
                    potential[v] += dist[v];
                }
            }
            let mut push = want - flow;
            let mut v = t;
            while v != s {
                let e = prev[v];
                push = push.min(self.edges[e].cap);
                v = self.edges[e ^ 1].to;
            }
            let mut v = t;
            while v != s {
                let e = prev[v];
                self.edges[e].cap -= push;
                self.edges[e ^ 1].cap += push;
                cost += push as f64 * self.edges[e].cost;
                v = self.edges[e ^ 1].to;
            }
            flow += push;
        }
        Ok(cost)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransportReport {
    pub lambda: f64,
    pub n_sites: usize,
    pub pushforward: PushforwardReport,
    pub brenier_residuals: Vec<MonomialResidual>,
    pub hessian: HessianReport,
    pub jumps: Vec<GradientJump>,
    pub convexity: ConvexityVerdict,
    pub cost: LimitCost,
    pub discrete_ot: Option<DiscreteOt>,
}

/// Every transport check on the config grid; the discrete oracle runs when `atoms > 0`.
pub fn transport_report(cfg: &TransportConfig, atoms: usize) -> Result<TransportReport> {
    let g = cfg.grid;
    let fd = 1e-4;
    let points = interior_points(cfg, 100, 10.0 * fd, cfg.seed ^ 0x5eed);
    let lg = rasterize_tessellation(&cfg.sites, &g, Mode::Power);
    let jumps = adjacent_pairs(&lg)
        .into_iter()
        .map(|(i, j)| gradient_jump(cfg, i, j))
        .collect::<Result<Vec<_>>>()?;
    Ok(TransportReport {
        lambda: cfg.lambda,
        n_sites: cfg.sites.len(),
        pushforward: pushforward_check(cfg),
        brenier_residuals: brenier_residual(cfg, &g),
        hessian: hessian_determinant_check(cfg, &points, fd),
        jumps,
        convexity: convexity_probe(cfg, 10_000, cfg.seed.wrapping_add(1)),
        cost: semidiscrete_limit_cost(cfg, &g),
        discrete_ot: if atoms > 0 {
            Some(discrete_ot_oracle(cfg, atoms)?)
        } else {
            None
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;
    use proptest::prelude::*;
    use rand::Rng;

    fn pair(lambda: f64) -> TransportConfig {
        let dom = Rect::new(-1.0, 3.0, -1.0, 1.0).unwrap();
        let s = SiteSet::new(vec![Point::new(0.0, 0.0), Point::new(2.0, 0.0)], dom).unwrap();
        TransportConfig::new(s, lambda, GridSpec::new(64, 32, dom).unwrap()).unwrap()
    }

    fn random_config(n: usize, lambda: f64, seed: u64, grid: usize) -> TransportConfig {
        let dom = Rect::square(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| Point::new(0.1 + 1.8 * rng.random::<f64>(), 0.1 + 1.8 * rng.random::<f64>()))
            .collect();
        let s = SiteSet::new(pts, dom).unwrap();
        TransportConfig::new(s, lambda, GridSpec::square(grid, dom).unwrap()).unwrap()
    }

    #[test]
    fn phi_hand_values() {
        let dom = Rect::new(-2.0, 2.0, -2.0, 2.0).unwrap();
        let one = SiteSet::new(vec![Point::new(0.0, 0.0)], dom).unwrap();
        let cfg = TransportConfig::new(one, 0.5, GridSpec::square(8, dom).unwrap()).unwrap();
        assert!((phi_lambda(Point::new(1.0, 0.0), &cfg) - 0.25).abs() < 1e-15);
        assert!((phi_lambda(Point::new(0.5, 0.0), &pair(0.5)) - 0.0625).abs() < 1e-15);
        let b = Point::new(1.0, 0.3);
        let s = pair(0.5);
        let left = 0.5 * b.norm2() - 0.25 * (b - s.sites().site(0)).norm2();
        let right = 0.5 * b.norm2() - 0.25 * (b - s.sites().site(1)).norm2();
        assert_eq!(left, right);
        assert_eq!(phi_lambda(b, &s), left);
    }

    #[test]
    fn map_hand_values() {
        let cfg = pair(0.5);
        let m = brenier_map(Point::new(0.5, 0.0), &cfg);
        assert_eq!(m.y, Point::new(0.25, 0.0));
        assert!(!m.on_boundary);
        assert!(image_cell_membership(m.y, 0, &cfg));
        assert_eq!(brenier_map(cfg.sites().site(1), &cfg).y, cfg.sites().site(1));
        assert!(brenier_map(Point::new(1.0, 0.5), &cfg).on_boundary);
        assert!(image_cell_membership(cfg.sites().site(0), 0, &cfg));
        assert!(!image_cell_membership(Point::new(0.6, 0.0), 0, &cfg));
    }

    #[test]
    fn lambda_out_of_range_is_rejected() {
        let dom = Rect::square(2.0);
        let s = SiteSet::new(vec![Point::new(1.0, 1.0)], dom).unwrap();
        let g = GridSpec::square(8, dom).unwrap();
        for l in [0.0, 1.0, 1.3, -0.2, f64::NAN] {
            assert!(TransportConfig::new(s.clone(), l, g).is_err());
        }
    }

    #[test]
    fn empty_power_cell_is_rejected() {
        let dom = Rect::square(2.0);
        let s = SiteSet::new(vec![Point::new(0.5, 1.0), Point::new(1.5, 1.0)], dom)
            .unwrap()
            .with_weights(vec![0.0, 10.0])
            .unwrap();
        let err = TransportConfig::new(s, 0.5, GridSpec::square(16, dom).unwrap()).unwrap_err();
        assert!(matches!(err, Error::EmptyCell(1)));
    }

    #[test]
    fn map_matches_fd_gradient() {
        let cfg = random_config(5, 0.4, 3, 64);
        for x in interior_points(&cfg, 200, 1e-3, 9) {
            let g = fd_gradient(|p| phi_lambda(p, &cfg), x, 1e-5);
            let m = brenier_map(x, &cfg).y;
            assert!((g - m).norm() < 1e-6, "{x:?}");
        }
    }

    #[test]
    fn map_is_affine_with_lambda_identity_inside_a_cell() {
        let cfg = random_config(4, 0.3, 11, 64);
        let pts = interior_points(&cfg, 50, 0.05, 2);
        for &x in &pts {
            let i = brenier_map(x, &cfg).label;
            let (a, b) = (x + Point::new(0.01, 0.0), x + Point::new(0.0, 0.01));
            let t = |p| brenier_map(p, &cfg);
            assert_eq!(t(a).label, i);
            assert_eq!(t(b).label, i);
            let da = (t(a).y - t(x).y) * (1.0 / 0.01);
            let db = (t(b).y - t(x).y) * (1.0 / 0.01);
            assert!((da - Point::new(0.3, 0.0)).norm() < 1e-12);
            assert!((db - Point::new(0.0, 0.3)).norm() < 1e-12);
        }
    }

    #[test]
    fn pushforward_pair_splits_evenly() {
        let dom = Rect::square(2.0);
        let s = SiteSet::new(vec![Point::new(0.5, 1.0), Point::new(1.5, 1.0)], dom).unwrap();
        let cfg = TransportConfig::new(s, 0.5, GridSpec::square(128, dom).unwrap()).unwrap();
        let r = pushforward_check(&cfg);
        assert!(r.violations.is_empty());
        assert!(r.pass(), "{:?}", r.cells);
        for c in &r.cells {
            assert!((c.expected_share - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn pushforward_single_site() {
        let dom = Rect::square(2.0);
        let s = SiteSet::new(vec![Point::new(0.7, 1.2)], dom).unwrap();
        let cfg = TransportConfig::new(s, 0.3, GridSpec::square(16, dom).unwrap())
            .unwrap()
            .with_samples(5000);
        let r = pushforward_check(&cfg);
        assert!(r.violations.is_empty());
        assert_eq!(r.cells[0].observed_share, 1.0);
        assert_eq!(r.boundary_skipped, 0);
    }

    #[test]
    fn residual_of_constant_and_symmetric_moment() {
        let dom = Rect::square(2.0);
        let s = SiteSet::new(vec![Point::new(1.0, 1.0)], dom).unwrap();
        let cfg = TransportConfig::new(s, 0.5, GridSpec::square(128, dom).unwrap()).unwrap();
        let r = brenier_residual(&cfg, &GridSpec::square(128, dom).unwrap());
        assert!((r[0].rhs - 1.0).abs() < 1e-12);
        assert!(r[0].residual < 1e-12);
        // first moments are the site coordinates on both sides
        assert!((r[1].lhs - 1.0).abs() < 1e-12 && (r[1].rhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn halfplanes_agree_with_membership() {
        let cfg = random_config(5, 0.4, 21, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inside = |planes: &[HalfPlane], p: Point| planes.iter().all(|hp| hp.slack(p) > 1e-9);
        for _ in 0..20_000 {
            let p = Point::new(2.0 * rng.random::<f64>(), 2.0 * rng.random::<f64>());
            for i in 0..5 {
                let img = image_halfplanes(&cfg, i);
                if inside(&img, p) {
                    assert!(image_cell_membership(p, i, &cfg));
                }
                if image_cell_membership(p, i, &cfg) && img.iter().all(|hp| hp.slack(p).abs() > 1e-9) {
                    assert!(inside(&img, p));
                }
                if inside(&power_halfplanes(cfg.sites(), i), p) {
                    assert_eq!(power_label(p, cfg.sites()).label, i);
                }
            }
        }
    }

    #[test]
    fn clipped_quadrature_is_exact_for_cubics() {
        let tri = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        let [a, x3, xy] = polygon_integral(&tri, &|p: Point| [1.0, p.x.powi(3), p.x * p.y]);
        assert!((a - 0.5).abs() < 1e-15);
        assert!((x3 - 0.05).abs() < 1e-15);
        assert!((xy - 1.0 / 24.0).abs() < 1e-15);
        let square = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let half = clip(
            &square,
            HalfPlane {
                a: Point::new(1.0, 1.0),
                b: 1.0,
            },
        );
        let [area] = polygon_integral(&half, &|_| [1.0]);
        assert!((area - 0.5).abs() < 1e-15);
    }

    #[test]
    fn residuals_shrink_under_refinement() {
        let cfg = random_config(3, 0.5, 8, 64);
        let dom = Rect::square(2.0);
        let coarse = brenier_residual(&cfg, &GridSpec::square(64, dom).unwrap());
        let fine = brenier_residual(&cfg, &GridSpec::square(128, dom).unwrap());
        for (c, f) in coarse.iter().zip(&fine) {
            assert!(f.residual < 5e-3);
            assert!(
                f.residual < c.residual || f.residual.max(c.residual) < 1e-12,
                "{c:?} {f:?}"
            );
        }
    }

    #[test]
    fn hessian_is_lambda_identity() {
        for lambda in [0.5, 0.9] {
            let cfg = random_config(4, lambda, 5, 64);
            let pts = interior_points(&cfg, 100, 1e-3, 1);
            let r = hessian_determinant_check(&cfg, &pts, 1e-4);
            assert_eq!(r.checked, 100);
            assert!(r.pass(), "{r:?}");
        }
        let cfg = random_config(3, 0.5, 5, 64);
        let near = 1.0 - 1e-6;
        let pts = interior_points(&cfg, 20, 1e-3, 1);
        let r = hessian_check_at(cfg.sites(), near, &pts, 1e-4);
        assert!(r.max_det_error < 1e-6);
        for &x in &pts {
            assert!((gradient(x, cfg.sites(), near).y - x).norm() < 1e-5);
        }
    }

    #[test]
    fn hessian_skips_points_near_boundaries() {
        let cfg = pair(0.5);
        let r = hessian_determinant_check(&cfg, &[Point::new(1.0, 0.2), Point::new(0.3, 0.1)], 1e-4);
        assert_eq!((r.checked, r.skipped), (1, 1));
    }

    #[test]
    fn jump_hand_values() {
        let j = gradient_jump(&pair(0.5), 0, 1).unwrap();
        assert!((j.measured - 1.0).abs() < 1e-4);
        assert!((j.point.x - 1.0).abs() < 1e-12);
        let j = gradient_jump(&pair(0.9), 0, 1).unwrap();
        assert!((j.measured - 0.2).abs() < 1e-4);
    }

    #[test]
    fn jump_law_on_random_instances() {
        for seed in 0..4 {
            let cfg = random_config(5, 0.35, seed, 128);
            let pairs = adjacent_pairs(&rasterize_tessellation(cfg.sites(), cfg.grid(), Mode::Power));
            assert!(!pairs.is_empty());
            for (i, j) in pairs {
                let r = gradient_jump(&cfg, i, j).unwrap();
                assert!((r.measured - r.analytic).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn non_adjacent_cells_are_an_error() {
        let dom = Rect::new(0.0, 4.0, 0.0, 1.0).unwrap();
        let s = SiteSet::new(
            vec![Point::new(0.5, 0.5), Point::new(2.0, 0.5), Point::new(3.5, 0.5)],
            dom,
        )
        .unwrap();
        let cfg = TransportConfig::new(s, 0.5, GridSpec::new(64, 16, dom).unwrap()).unwrap();
        assert!(matches!(gradient_jump(&cfg, 0, 2), Err(Error::NotAdjacent(0, 2))));
        assert!(gradient_jump(&cfg, 0, 1).is_ok());
    }

    #[test]
    fn convexity() {
        let cfg = random_config(5, 0.3, 7, 64);
        assert!(convexity_probe(&cfg, 10_000, 1).pass());
        let a = Point::new(0.4, 0.4);
        assert!(midpoint_slack(&cfg, a, a).abs() < 1e-15);
        let dom = Rect::square(2.0);
        let one = SiteSet::new(vec![Point::new(1.0, 1.0)], dom).unwrap();
        let cfg = TransportConfig::new(one, 0.6, GridSpec::square(8, dom).unwrap()).unwrap();
        let v = convexity_probe(&cfg, 1000, 3);
        assert!(v.pass() && v.min_slack.abs() < 1e-12);
    }

    #[test]
    fn cost_identity_and_relabelings() {
        let cfg = random_config(4, 0.5, 13, 256);
        let c = semidiscrete_limit_cost(&cfg, cfg.grid());
        let l2 = (1.0 - cfg.lambda()) * (1.0 - cfg.lambda());
        assert!((c.cost_lambda - l2 * c.cost_zero).abs() <= 1e-12 * c.cost_zero);
        for p in permutation_costs(&cfg, cfg.grid(), 20, 4) {
            assert!(c.cost_zero <= p + 1e-12);
        }
    }

    #[test]
    fn single_site_ot_is_second_moment() {
        let dom = Rect::square(2.0);
        let s = SiteSet::new(vec![Point::new(0.8, 1.1)], dom).unwrap();
        let cfg = TransportConfig::new(s, 0.5, GridSpec::square(32, dom).unwrap()).unwrap();
        let r = discrete_ot_oracle(&cfg, 16).unwrap();
        let atoms: Vec<Point> = (0..16)
            .map(|a| Point::new(0.25 + 0.5 * (a % 4) as f64, 0.25 + 0.5 * (a / 4) as f64))
            .collect();
        let moment = atoms.iter().map(|&a| (a - Point::new(0.8, 1.1)).norm2()).sum::<f64>() / 16.0;
        assert!((r.cost - moment).abs() < 1e-12);
        assert!(!r.renormalized);
    }

    #[test]
    fn ot_matches_nearest_plan_with_its_own_marginals() {
        let cfg = random_config(3, 0.5, 21, 64);
        let k = 10;
        let atoms: Vec<Point> = (0..k * k)
            .map(|a| Point::new((a % k) as f64 * 0.2 + 0.1, (a / k) as f64 * 0.2 + 0.1))
            .collect();
        let mut demand = vec![0i64; 3];
        for &a in &atoms {
            demand[power_label(a, cfg.sites()).label] += 1;
        }
        let nearest = atoms
            .iter()
            .map(|&a| (a - cfg.sites().site(power_label(a, cfg.sites()).label)).norm2())
            .sum::<f64>()
            / atoms.len() as f64;
        let exact = transport_cost(&atoms, &vec![1; k * k], cfg.sites().sites(), &demand).unwrap();
        assert!((exact - nearest).abs() < 1e-12);
        let r = discrete_ot_oracle(&cfg, 400).unwrap();
        assert!(r.cost <= r.nearest_plan_cost + 1e-12 || r.renormalized);
    }

    #[test]
    fn ot_rejects_bad_atom_counts() {
        let cfg = random_config(2, 0.5, 1, 16);
        assert!(discrete_ot_oracle(&cfg, 401).is_err());
        assert!(discrete_ot_oracle(&cfg, 50).is_err());
    }

    #[test]
    fn rounding_hits_total() {
        let (v, flagged) = round_to_total(&[1.5, 1.5, 1.0], 4);
        assert_eq!(v.iter().sum::<i64>(), 4);
        assert!(flagged);
        assert_eq!(round_to_total(&[2.0, 2.0], 4), (vec![2, 2], false));
    }

    proptest! {
        #[test]
        fn weight_shift_invariance(seed in 0u64..500, shift in -5.0f64..5.0, lambda in 0.05f64..0.95) {
            let cfg = random_config(4, lambda, seed, 16);
            let w: Vec<f64> = cfg.sites().weights().iter().map(|w| w + shift).collect();
            let shifted = cfg.sites().clone().with_weights(w).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..32 {
                let x = Point::new(2.0 * rng.random::<f64>(), 2.0 * rng.random::<f64>());
                let a = gradient(x, cfg.sites(), lambda);
                let b = gradient(x, &shifted, lambda);
                prop_assert_eq!(a.label, b.label);
                prop_assert_eq!(a.y, b.y);
                let d = phi(x, &shifted, lambda) - phi(x, cfg.sites(), lambda);
                prop_assert!((d - (lambda - 1.0) * shift / 2.0).abs() < 1e-12);
            }
        }
    }
}

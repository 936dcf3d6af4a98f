//! Exact geometric ground truth.
//!
//! Sites, the nearest-site and power labelings evaluated straight from their
//! definitions, uniform grid sampling, and the discrepancy metrics every other
//! module is scored with. Nothing here is approximate except the sampling of
//! the plane by grid nodes.

use std::ops::{Add, Mul, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Label value for nodes that belong to no cell.
pub const UNASSIGNED: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Unit vector at angle `theta` from the +x axis.
    pub fn polar(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Axis-aligned rectangle `[x0,x1] × [y0,y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if !(x0.is_finite() && x1.is_finite() && y0.is_finite() && y1.is_finite()) {
            return Err(invalid("domain", "non-finite bound"));
        }
        if x1 <= x0 || y1 <= y0 {
            return Err(invalid("domain", "empty rectangle"));
        }
        Ok(Self { x0, x1, y0, y1 })
    }

    pub fn square(side: f64) -> Self {
        Self {
            x0: 0.0,
            x1: side,
            y0: 0.0,
            y1: side,
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains_open(&self, p: Point) -> bool {
        p.x > self.x0 && p.x < self.x1 && p.y > self.y0 && p.y < self.y1
    }

    pub fn contains_closed(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn expanded(&self, margin: f64) -> Self {
        Self {
            x0: self.x0 - margin,
            x1: self.x1 + margin,
            y0: self.y0 - margin,
            y1: self.y1 + margin,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Topology {
    Plane,
    /// Flat torus `[0,L)²` with period `L`.
    Torus {
        period: f64,
    },
}

impl Topology {
    pub fn name(&self) -> &'static str {
        match self {
            Topology::Plane => "plane",
            Topology::Torus { .. } => "torus",
        }
    }
}

const TRANSLATES: [(f64, f64); 9] = [
    (0.0, 0.0),
    (-1.0, -1.0),
    (-1.0, 0.0),
    (-1.0, 1.0),
    (0.0, -1.0),
    (0.0, 1.0),
    (1.0, -1.0),
    (1.0, 0.0),
    (1.0, 1.0),
];

/// Squared distance between `x` and `y` under the given topology.
pub fn metric_distance2(x: Point, y: Point, topology: Topology) -> f64 {
    match topology {
        Topology::Plane => (x - y).norm2(),
        Topology::Torus { period } => TRANSLATES
            .iter()
            .map(|&(kx, ky)| (x - y + Point::new(kx * period, ky * period)).norm2())
            .fold(f64::INFINITY, f64::min),
    }
}

/// Distance on the plane, or the minimum over the nine periodic images on the torus.
pub fn metric_distance(x: Point, y: Point, topology: Topology) -> f64 {
    metric_distance2(x, y, topology).sqrt()
}

/// The image of `y` (among its nine translates) closest to `x`.
pub fn nearest_image(x: Point, y: Point, topology: Topology) -> Point {
    match topology {
        Topology::Plane => y,
        Topology::Torus { period } => {
            let mut best = y;
            let mut best_d2 = f64::INFINITY;
            for &(kx, ky) in &TRANSLATES {
                let img = y + Point::new(kx * period, ky * period);
                let d2 = (x - img).norm2();
                if d2 < best_d2 {
                    best_d2 = d2;
                    best = img;
                }
            }
            best
        }
    }
}

/// The N generator points, their power weights and the domain they live in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteSet {
    sites: Vec<Point>,
    weights: Vec<f64>,
    domain: Rect,
    topology: Topology,
}

impl SiteSet {
    /// Sites on the plane with zero weights.
    pub fn new(sites: Vec<Point>, domain: Rect) -> Result<Self> {
        let n = sites.len();
        Self::build(sites, vec![0.0; n], domain, Topology::Plane)
    }

    /// Sites on the flat torus `[0,L)²`.
    pub fn torus(sites: Vec<Point>, period: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(invalid("period", "must be positive"));
        }
        let n = sites.len();
        Self::build(sites, vec![0.0; n], Rect::square(period), Topology::Torus { period })
    }

    pub fn with_weights(self, weights: Vec<f64>) -> Result<Self> {
        Self::build(self.sites, weights, self.domain, self.topology)
    }

    fn build(sites: Vec<Point>, weights: Vec<f64>, domain: Rect, topology: Topology) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidSiteSet("at least one site is required".into()));
        }
        if weights.len() != sites.len() {
            return Err(Error::InvalidSiteSet(format!(
                "{} weights for {} sites",
                weights.len(),
                sites.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidSiteSet("non-finite weight".into()));
        }
        for (i, &p) in sites.iter().enumerate() {
            let inside = match topology {
                Topology::Plane => domain.contains_open(p),
                // the torus fundamental cell is half-open
                Topology::Torus { period } => p.x >= 0.0 && p.x < period && p.y >= 0.0 && p.y < period,
            };
            if !inside {
                return Err(Error::InvalidSiteSet(format!(
                    "site {i} ({}, {}) outside domain",
                    p.x, p.y
                )));
            }
        }
        for i in 0..sites.len() {
            for j in 0..i {
                if metric_distance2(sites[i], sites[j], topology) == 0.0 {
                    return Err(Error::InvalidSiteSet(format!("sites {j} and {i} coincide")));
                }
            }
        }
        Ok(Self {
            sites,
            weights,
            domain,
            topology,
        })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Point] {
        &self.sites
    }

    pub fn site(&self, i: usize) -> Point {
        self.sites[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in 0..i {
                best = best.min(metric_distance(self.sites[i], self.sites[j], self.topology));
            }
        }
        best
    }

    /// Largest pairwise site distance (zero for a single site).
    pub fn diameter(&self) -> f64 {
        let mut best: f64 = 0.0;
        for i in 0..self.len() {
            for j in 0..i {
                best = best.max(metric_distance(self.sites[i], self.sites[j], self.topology));
            }
        }
        best
    }
}

/// `n` sites drawn uniformly from `domain` shrunk by `margin`, redrawn until
/// every pair is at least `min_separation` apart.
pub fn random_site_set(n: usize, domain: Rect, margin: f64, min_separation: f64, seed: u64) -> Result<SiteSet> {
    let inner = domain.expanded(-margin);
    if !(inner.x1 > inner.x0 && inner.y1 > inner.y0) {
        return Err(invalid("margin", "leaves no room for sites"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<Point> = Vec::with_capacity(n);
    let mut tries = 0usize;
    while pts.len() < n {
        tries += 1;
        if tries > 100_000 {
            return Err(invalid("min_separation", format!("cannot place {n} sites")));
        }
        let p = Point::new(
            inner.x0 + rng.random::<f64>() * inner.width(),
            inner.y0 + rng.random::<f64>() * inner.height(),
        );
        if pts.iter().all(|&q| (p - q).norm() >= min_separation) {
            pts.push(p);
        }
    }
    SiteSet::new(pts, domain)
}

/// Winning site index plus the separation to the runner-up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nearest {
    pub label: usize,
    /// Runner-up value minus winning value; `0` on a cell boundary, `∞` for one site.
    pub gap: f64,
}

fn argmin_with_gap(values: impl Iterator<Item = f64>) -> (usize, f64, f64) {
    let mut best = (0usize, f64::INFINITY);
    let mut second = f64::INFINITY;
    for (i, v) in values.enumerate() {
        if v < best.1 {
            second = best.1;
            best = (i, v);
        } else if v < second {
            second = v;
        }
    }
    (best.0, best.1, second)
}

/// `argmin_i d(x, x_i)` with lowest-index tie-break.
pub fn nearest_site_label(x: Point, s: &SiteSet) -> Nearest {
    let topo = s.topology;
    // squared distances keep the comparison identical to power_label with equal weights
    let (label, d1, d2) = argmin_with_gap(s.sites.iter().map(|&p| metric_distance2(x, p, topo)));
    Nearest {
        label,
        gap: d2.sqrt() - d1.sqrt(),
    }
}

/// `argmin_i d²(x, x_i) + w_i` with lowest-index tie-break.
///
/// Weights enter relative to the smallest one, so equal weights reproduce
/// [`nearest_site_label`] bit for bit.
pub fn power_label(x: Point, s: &SiteSet) -> Nearest {
    let topo = s.topology;
    let w0 = s.min_weight();
    let (label, p1, p2) = argmin_with_gap(
        s.sites
            .iter()
            .zip(&s.weights)
            .map(|(&p, &w)| metric_distance2(x, p, topo) + (w - w0)),
    );
    Nearest { label, gap: p2 - p1 }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Voronoi,
    Power,
}

/// Exact Euclidean distance from `x` to the boundary of the cell containing it.
///
/// Cells are intersections of half-planes, so the distance to the boundary is
/// the distance to the nearest competing bisector line. On the torus the
/// competitors are all nine images of every other site; the winner's own
/// images (the cut locus) are not cell boundary.
pub fn boundary_distance(x: Point, s: &SiteSet, mode: Mode) -> f64 {
    let topo = s.topology;
    let w0 = s.min_weight();
    let weight = |i: usize| match mode {
        Mode::Voronoi => 0.0,
        Mode::Power => s.weights[i] - w0,
    };
    let label = match mode {
        Mode::Voronoi => nearest_site_label(x, s).label,
        Mode::Power => power_label(x, s).label,
    };
    let own = nearest_image(x, s.sites[label], topo);
    let own_power = (x - own).norm2() + weight(label);
    let mut best = f64::INFINITY;
    for j in 0..s.len() {
        if j == label {
            continue;
        }
        let base = nearest_image(own, s.sites[j], topo);
        let images: &[(f64, f64)] = match topo {
            Topology::Plane => &TRANSLATES[..1],
            Topology::Torus { .. } => &TRANSLATES,
        };
        let period = match topo {
            Topology::Torus { period } => period,
            Topology::Plane => 0.0,
        };
        for &(kx, ky) in images {
            let c = base + Point::new(kx * period, ky * period);
            let sep = (own - c).norm();
            let diff = (x - c).norm2() + weight(j) - own_power;
            best = best.min(diff.max(0.0) / (2.0 * sep));
        }
    }
    best
}

/// Uniform cell-centred sampling of a rectangle with square cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub domain: Rect,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, domain: Rect) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2x2 nodes, got {nx}x{ny}")));
        }
        let hx = domain.width() / nx as f64;
        let hy = domain.height() / ny as f64;
        if ((hx - hy) / hx).abs() > 1e-12 {
            return Err(Error::InvalidGrid(format!("cells are not square ({hx} vs {hy})")));
        }
        Ok(Self { nx, ny, domain })
    }

    /// `n × n` nodes over a square domain.
    pub fn square(n: usize, domain: Rect) -> Result<Self> {
        let ny = (n as f64 * domain.height() / domain.width()).round() as usize;
        Self::new(n, ny, domain)
    }

    pub fn h(&self) -> f64 {
        self.domain.width() / self.nx as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn node(&self, ix: usize, iy: usize) -> Point {
        let h = self.h();
        Point::new(
            self.domain.x0 + (ix as f64 + 0.5) * h,
            self.domain.y0 + (iy as f64 + 0.5) * h,
        )
    }

    pub fn point(&self, idx: usize) -> Point {
        let (ix, iy) = self.coords(idx);
        self.node(ix, iy)
    }

    /// Node nearest to `p`, clamped to the grid.
    pub fn nearest_node(&self, p: Point) -> (usize, usize) {
        let h = self.h();
        let fx = ((p.x - self.domain.x0) / h - 0.5).round();
        let fy = ((p.y - self.domain.y0) / h - 0.5).round();
        let ix = fx.clamp(0.0, (self.nx - 1) as f64) as usize;
        let iy = fy.clamp(0.0, (self.ny - 1) as f64) as usize;
        (ix, iy)
    }

    /// 4-neighbours of a node that lie on the grid.
    pub fn neighbors4(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (ix, iy) = self.coords(idx);
        let nx = self.nx;
        let ny = self.ny;
        [
            (ix > 0).then(|| idx - 1),
            (ix + 1 < nx).then(|| idx + 1),
            (iy > 0).then(|| idx - nx),
            (iy + 1 < ny).then(|| idx + nx),
        ]
        .into_iter()
        .flatten()
    }

    /// Euclidean distance between two nodes.
    pub fn node_distance(&self, a: usize, b: usize) -> f64 {
        (self.point(a) - self.point(b)).norm()
    }
}

/// An integer cell label per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelGrid {
    pub spec: GridSpec,
    pub labels: Vec<u32>,
    /// Oracle gap per node, recorded when the grid was produced by the oracle.
    pub gaps: Option<Vec<f64>>,
}

impl LabelGrid {
    pub fn filled(spec: GridSpec, label: u32) -> Self {
        Self {
            spec,
            labels: vec![label; spec.len()],
            gaps: None,
        }
    }

    pub fn label(&self, ix: usize, iy: usize) -> u32 {
        self.labels[self.spec.index(ix, iy)]
    }

    /// Node counts per label `0..n`; unassigned nodes are not counted.
    pub fn counts(&self, n: usize) -> Vec<usize> {
        let mut counts = vec![0; n];
        for &l in &self.labels {
            if l != UNASSIGNED && (l as usize) < n {
                counts[l as usize] += 1;
            }
        }
        counts
    }

    pub fn unassigned_fraction(&self) -> f64 {
        self.labels.iter().filter(|&&l| l == UNASSIGNED).count() as f64 / self.labels.len() as f64
    }
}

/// Real value per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.spec.index(ix, iy)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Label every node by its nearest site (or power cell). Records oracle gaps.
pub fn rasterize_tessellation(s: &SiteSet, g: &GridSpec, mode: Mode) -> LabelGrid {
    let (labels, gaps): (Vec<u32>, Vec<f64>) = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let x = g.point(idx);
            let r = match mode {
                Mode::Voronoi => nearest_site_label(x, s),
                Mode::Power => power_label(x, s),
            };
            (r.label as u32, r.gap)
        })
        .unzip();
    LabelGrid {
        spec: *g,
        labels,
        gaps: Some(gaps),
    }
}

/// Fraction of disagreeing nodes among those whose reference gap exceeds `band`.
///
/// `reference` supplies the gaps; without recorded gaps every node counts.
/// Unassigned nodes in either grid count as disagreements.
pub fn mismatch_fraction(a: &LabelGrid, reference: &LabelGrid, band: f64) -> Result<f64> {
    if a.spec != reference.spec {
        return Err(Error::GridMismatch);
    }
    let mut considered = 0usize;
    let mut wrong = 0usize;
    for idx in 0..a.labels.len() {
        if let Some(gaps) = &reference.gaps {
            if gaps[idx] <= band {
                continue;
            }
        }
        considered += 1;
        let (la, lb) = (a.labels[idx], reference.labels[idx]);
        if la == UNASSIGNED || lb == UNASSIGNED || la != lb {
            wrong += 1;
        }
    }
    Ok(if considered == 0 {
        0.0
    } else {
        wrong as f64 / considered as f64
    })
}

/// Nodes with a 4-neighbour carrying a different assigned label, ascending.
pub fn boundary_nodes(g: &LabelGrid) -> Vec<usize> {
    (0..g.labels.len())
        .filter(|&idx| {
            let l = g.labels[idx];
            l != UNASSIGNED
                && g.spec
                    .neighbors4(idx)
                    .any(|n| g.labels[n] != UNASSIGNED && g.labels[n] != l)
        })
        .collect()
}

/// Symmetric Hausdorff distance between two node sets of the same grid.
pub fn hausdorff_nodes(spec: &GridSpec, a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let directed = |from: &[usize], to: &[usize]| {
        from.par_iter()
            .map(|&p| {
                to.iter()
                    .map(|&q| spec.node_distance(p, q))
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| 0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_sites() -> SiteSet {
        SiteSet::new(
            vec![Point::new(0.0, 0.0), Point::new(2.0, 0.0)],
            Rect::new(-1.0, 3.0, -1.0, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn plane_distance_is_pythagorean() {
        let d = metric_distance(Point::new(0.0, 0.0), Point::new(3.0, 4.0), Topology::Plane);
        assert_eq!(d, 5.0);
    }

    #[test]
    fn torus_distance_wraps() {
        let d = metric_distance(
            Point::new(0.1, 0.0),
            Point::new(1.9, 0.0),
            Topology::Torus { period: 2.0 },
        );
        assert!((d - 0.2).abs() < 1e-12);
        let p = Point::new(0.7, 1.3);
        assert_eq!(metric_distance(p, p, Topology::Torus { period: 2.0 }), 0.0);
    }

    #[test]
    fn nearest_label_and_gap() {
        let s = two_sites();
        let r = nearest_site_label(Point::new(0.5, 0.0), &s);
        assert_eq!(r.label, 0);
        assert!((r.gap - 1.0).abs() < 1e-15);
        let r = nearest_site_label(Point::new(1.0, 0.0), &s);
        assert_eq!((r.label, r.gap), (0, 0.0));
    }

    #[test]
    fn power_label_moves_the_boundary() {
        let s = two_sites();
        assert_eq!(power_label(Point::new(0.9, 0.0), &s).label, 0);
        let w = s.with_weights(vec![0.0, 1.0]).unwrap();
        // boundary at x = 1.25
        assert_eq!(power_label(Point::new(1.2, 0.0), &w).label, 0);
        assert_eq!(power_label(Point::new(1.3, 0.0), &w).label, 1);
        assert!((power_label(Point::new(1.25, 0.0), &w).gap).abs() < 1e-12);
    }

    #[test]
    fn site_set_validation() {
        let dom = Rect::square(1.0);
        assert!(SiteSet::new(vec![], dom).is_err());
        assert!(SiteSet::new(vec![Point::new(0.5, 0.5), Point::new(0.5, 0.5)], dom).is_err());
        assert!(SiteSet::new(vec![Point::new(1.0, 0.5)], dom).is_err());
        assert!(SiteSet::torus(vec![Point::new(0.0, 0.5)], 1.0).is_ok());
    }

    #[test]
    fn grid_requires_square_cells() {
        assert!(GridSpec::new(4, 4, Rect::new(0.0, 1.0, 0.0, 2.0).unwrap()).is_err());
        assert!(GridSpec::new(1, 1, Rect::square(1.0)).is_err());
        let g = GridSpec::new(4, 8, Rect::new(0.0, 1.0, 0.0, 2.0).unwrap()).unwrap();
        assert_eq!(g.node(0, 0), Point::new(0.125, 0.125));
        assert_eq!(g.nearest_node(Point::new(0.9, 1.9)), (3, 7));
    }

    #[test]
    fn single_site_labels_everything_zero() {
        let s = SiteSet::new(vec![Point::new(0.3, 0.6)], Rect::square(1.0)).unwrap();
        let g = GridSpec::square(32, Rect::square(1.0)).unwrap();
        let lg = rasterize_tessellation(&s, &g, Mode::Voronoi);
        assert!(lg.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let s = SiteSet::new(vec![Point::new(0.3, 0.5), Point::new(0.7, 0.5)], Rect::square(1.0)).unwrap();
        let g = GridSpec::square(64, Rect::square(1.0)).unwrap();
        let c = rasterize_tessellation(&s, &g, Mode::Voronoi).counts(2);
        assert!(c[0].abs_diff(c[1]) <= 64);
    }

    #[test]
    fn mismatch_counts() {
        let g = GridSpec::square(256, Rect::square(1.0)).unwrap();
        let a = LabelGrid::filled(g, 0);
        let mut b = LabelGrid::filled(g, 1);
        assert_eq!(mismatch_fraction(&a, &a, 0.0).unwrap(), 0.0);
        assert_eq!(mismatch_fraction(&a, &b, 0.0).unwrap(), 1.0);
        b = a.clone();
        b.labels[1234] = 3;
        assert_eq!(mismatch_fraction(&b, &a, 0.0).unwrap(), 1.0 / 65536.0);
        b.labels[17] = UNASSIGNED;
        assert_eq!(mismatch_fraction(&b, &a, 0.0).unwrap(), 2.0 / 65536.0);
        let other = LabelGrid::filled(GridSpec::square(8, Rect::square(1.0)).unwrap(), 0);
        assert!(matches!(mismatch_fraction(&a, &other, 0.0), Err(Error::GridMismatch)));
    }

    #[test]
    fn boundary_of_half_planes() {
        let g = GridSpec::square(10, Rect::square(1.0)).unwrap();
        assert!(boundary_nodes(&LabelGrid::filled(g, 2)).is_empty());
        let mut lg = LabelGrid::filled(g, 0);
        for iy in 0..10 {
            for ix in 5..10 {
                lg.labels[g.index(ix, iy)] = 1;
            }
        }
        let b = boundary_nodes(&lg);
        assert_eq!(b.len(), 20);
        assert!(b.iter().all(|&i| matches!(g.coords(i).0, 4 | 5)));
    }

    #[test]
    fn boundary_distance_to_bisector() {
        let s = two_sites();
        let d = boundary_distance(Point::new(0.25, 0.7), &s, Mode::Voronoi);
        assert!((d - 0.75).abs() < 1e-12);
        let w = s.with_weights(vec![0.0, 1.0]).unwrap();
        let d = boundary_distance(Point::new(1.0, 0.0), &w, Mode::Power);
        assert!((d - 0.25).abs() < 1e-12);
        let t = SiteSet::torus(vec![Point::new(0.25, 0.5), Point::new(0.75, 0.5)], 1.0).unwrap();
        // wrap-around boundary at x = 0 is as close as the one at x = 0.5
        let d = boundary_distance(Point::new(0.1, 0.5), &t, Mode::Voronoi);
        assert!((d - 0.1).abs() < 1e-12);
    }

    #[test]
    fn hausdorff_of_shifted_column() {
        let g = GridSpec::square(10, Rect::square(1.0)).unwrap();
        let a: Vec<usize> = (0..10).map(|iy| g.index(3, iy)).collect();
        let b: Vec<usize> = (0..10).map(|iy| g.index(5, iy)).collect();
        assert!((hausdorff_nodes(&g, &a, &b) - 0.2).abs() < 1e-12);
        assert_eq!(hausdorff_nodes(&g, &[], &[]), 0.0);
        assert!(hausdorff_nodes(&g, &a, &[]).is_infinite());
    }

    fn dyadic(k: i32) -> f64 {
        k as f64 / 1024.0
    }

    proptest::proptest! {
        #[test]
        fn equal_weights_reproduce_voronoi(seed in 0u64..500, w in -4i32..4) {
            let s = random_site_set(2 + (seed % 5) as usize, Rect::square(2.0), 0.05, 0.05, seed).unwrap();
            let n = s.len();
            let p = s.clone().with_weights(vec![dyadic(w * 300); n]).unwrap();
            let g = GridSpec::square(64, Rect::square(2.0)).unwrap();
            let v = rasterize_tessellation(&s, &g, Mode::Voronoi);
            proptest::prop_assert_eq!(rasterize_tessellation(&p, &g, Mode::Power).labels, v.labels);
        }

        #[test]
        fn dyadic_weight_shift_is_invisible(seed in 0u64..500, shift in -2048i32..2048) {
            let s = random_site_set(2 + (seed % 5) as usize, Rect::square(2.0), 0.05, 0.05, seed).unwrap();
            let n = s.len();
            let w: Vec<f64> = (0..n).map(|i| dyadic(((seed as i32 * 37 + i as i32 * 101) % 256) - 128)).collect();
            let shifted: Vec<f64> = w.iter().map(|&x| x + dyadic(shift)).collect();
            let g = GridSpec::square(64, Rect::square(2.0)).unwrap();
            let a = rasterize_tessellation(&s.clone().with_weights(w).unwrap(), &g, Mode::Power);
            let b = rasterize_tessellation(&s.with_weights(shifted).unwrap(), &g, Mode::Power);
            proptest::prop_assert_eq!(a.labels, b.labels);
        }
    }
}

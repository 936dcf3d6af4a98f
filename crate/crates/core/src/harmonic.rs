//! Harmonic potential of a perforated box and its steepest-ascent tessellation.
//!
//! Small disks around the sites hold `u = 1`, the outer box holds `u = 0`,
//! and `Δu = 0` in between is solved by red-black successive over-relaxation
//! on the 5-point stencil. Next to a disk or the box wall the stencil arm is
//! shortened to the exact crossing distance, which keeps the scheme second
//! order even though the disks are stored as node masks. Following `∇u` uphill from a node ends in one of
//! the disks, and the disk reached labels the node.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geom::{
    mismatch_fraction, rasterize_tessellation, GridSpec, LabelGrid, Mode, Point, Rect, ScalarField, SiteSet, Topology,
    UNASSIGNED,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    /// Inside the disk of this site; held at `u = 1`.
    Disk(u32),
    /// Outermost ring of the grid; held at `u = 0`.
    Outer,
}

#[derive(Clone, Debug)]
pub struct PerforatedProblem {
    sites: SiteSet,
    radius: f64,
    grid: GridSpec,
    tol: f64,
    omega: f64,
    max_sweeps: usize,
    mask: Vec<NodeKind>,
    stencils: Vec<Stencil>,
}

/// `u_C = Σ weight_k · u[neighbour_k] + fixed` for an interior node.
#[derive(Clone, Copy, Debug, Default)]
struct Stencil {
    neighbours: [usize; 4],
    weights: [f64; 4],
    fixed: f64,
}

/// Distance from `c` along unit `dir` to the circle of `radius` about `centre`,
/// for `c` outside the circle; `None` if the ray misses it.
fn ray_circle(c: Point, dir: Point, centre: Point, radius: f64) -> Option<f64> {
    let m = c - centre;
    let b = m.dot(dir);
    let disc = b * b - (m.norm2() - radius * radius);
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t >= 0.0).then_some(t)
}

/// Shortley–Weller stencil: arm lengths (in units of `h`) shrink to the
/// boundary crossing, where the Dirichlet value enters `fixed`.
fn build_stencil(idx: usize, grid: &GridSpec, mask: &[NodeKind], sites: &SiteSet, radius: f64) -> Stencil {
    let h = grid.h();
    let c = grid.point(idx);
    let d = grid.domain;
    let nx = grid.nx;
    let dirs = [
        (idx + 1, Point::new(1.0, 0.0), d.x1 - c.x),
        (idx - 1, Point::new(-1.0, 0.0), c.x - d.x0),
        (idx + nx, Point::new(0.0, 1.0), d.y1 - c.y),
        (idx - nx, Point::new(0.0, -1.0), c.y - d.y0),
    ];
    // (arm, known value) per direction; arm 1 with no value means an unknown neighbour
    let arms: Vec<(f64, Option<f64>)> = dirs
        .iter()
        .map(|&(n, dir, wall)| match mask[n] {
            NodeKind::Interior => (1.0, None),
            NodeKind::Disk(k) => {
                let t = ray_circle(c, dir, sites.site(k as usize), radius).unwrap_or(h).min(h);
                ((t / h).max(1e-3), Some(1.0))
            }
            NodeKind::Outer => (wall / h, Some(0.0)),
        })
        .collect();
    let mut st = Stencil::default();
    let mut diag = 0.0;
    for axis in 0..2 {
        let (a, b) = (arms[2 * axis], arms[2 * axis + 1]);
        diag += 1.0 / (a.0 * b.0);
        for (k, arm, other) in [(2 * axis, a, b), (2 * axis + 1, b, a)] {
            let w = 1.0 / (arm.0 * (arm.0 + other.0));
            match arm.1 {
                None => {
                    st.neighbours[k] = dirs[k].0;
                    st.weights[k] = w;
                }
                Some(v) => {
                    st.neighbours[k] = idx;
                    st.fixed += w * v;
                }
            }
        }
    }
    st.weights = st.weights.map(|w| w / diag);
    st.fixed /= diag;
    st
}

/// Over-relaxation factor that is optimal for the Laplacian on an `n × n` square.
pub fn optimal_omega(n: usize) -> f64 {
    2.0 / (1.0 + (PI / n as f64).sin())
}

/// Square box around the site hull, padded by `max(factor · diameter, 1)`.
pub fn truncation_box(points: &[Point], factor: f64) -> Result<Rect> {
    if points.is_empty() {
        return Err(Error::InvalidSiteSet("no sites".into()));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let diam = Point::new(x1 - x0, y1 - y0).norm();
    let half = 0.5 * (x1 - x0).max(y1 - y0) + (factor * diam).max(1.0);
    let c = Point::new(0.5 * (x0 + x1), 0.5 * (y0 + y1));
    Rect::new(c.x - half, c.x + half, c.y - half, c.y + half)
}

impl PerforatedProblem {
    /// Disks of `radius` around each site on `grid`, whose domain must be the site domain.
    pub fn new(sites: SiteSet, radius: f64, grid: GridSpec) -> Result<Self> {
        if sites.topology() != Topology::Plane {
            return Err(Error::Topology("plane"));
        }
        if grid.domain != sites.domain() {
            return Err(invalid("grid", "grid must cover the site domain"));
        }
        let h = grid.h();
        if radius.is_nan() || radius < 2.0 * h {
            return Err(invalid(
                "radius",
                format!("disk radius {radius} is below 2h = {}", 2.0 * h),
            ));
        }
        let d = sites.domain();
        for (i, &p) in sites.sites().iter().enumerate() {
            let clearance = (p.x - d.x0).min(d.x1 - p.x).min(p.y - d.y0).min(d.y1 - p.y) - radius;
            if clearance < 2.0 * h {
                return Err(invalid("radius", format!("disk {i} is closer than 2h to the box")));
            }
        }
        if sites.len() > 1 && sites.min_separation() <= 2.0 * radius {
            return Err(invalid("radius", "disks overlap"));
        }
        let mask: Vec<NodeKind> = (0..grid.len())
            .map(|idx| {
                let (ix, iy) = grid.coords(idx);
                if ix == 0 || iy == 0 || ix + 1 == grid.nx || iy + 1 == grid.ny {
                    return NodeKind::Outer;
                }
                let x = grid.point(idx);
                match sites.sites().iter().position(|&p| (x - p).norm() <= radius) {
                    Some(i) => NodeKind::Disk(i as u32),
                    None => NodeKind::Interior,
                }
            })
            .collect();
        if !mask.contains(&NodeKind::Interior) {
            return Err(invalid("radius", "no interior nodes remain"));
        }
        let stencils = (0..grid.len())
            .into_par_iter()
            .map(|idx| match mask[idx] {
                NodeKind::Interior => build_stencil(idx, &grid, &mask, &sites, radius),
                _ => Stencil::default(),
            })
            .collect();
        Ok(Self {
            sites,
            radius,
            omega: optimal_omega(grid.nx.max(grid.ny)),
            grid,
            tol: 1e-8,
            max_sweeps: 50_000,
            mask,
            stencils,
        })
    }

    /// Sites in a [`truncation_box`] sampled by an `n × n` grid.
    pub fn in_box(points: Vec<Point>, radius: f64, n: usize, box_factor: f64) -> Result<Self> {
        let dom = truncation_box(&points, box_factor)?;
        let sites = SiteSet::new(points, dom)?;
        Self::new(sites, radius, GridSpec::square(n, dom)?)
    }

    pub fn with_tol(mut self, tol: f64) -> Result<Self> {
        if tol.is_nan() || tol <= 0.0 {
            return Err(invalid("tol", "tolerance must be positive"));
        }
        self.tol = tol;
        Ok(self)
    }

    pub fn with_omega(mut self, omega: f64) -> Result<Self> {
        if !(omega > 1.0 && omega < 2.0) {
            return Err(invalid("omega", format!("{omega} is outside (1, 2)")));
        }
        self.omega = omega;
        Ok(self)
    }

    pub fn with_max_sweeps(mut self, max_sweeps: usize) -> Self {
        self.max_sweeps = max_sweeps;
        self
    }

    pub fn sites(&self) -> &SiteSet {
        &self.sites
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn mask(&self) -> &[NodeKind] {
        &self.mask
    }

    /// Index of the disk containing `x`, if any.
    pub fn disk_at(&self, x: Point) -> Option<usize> {
        self.sites.sites().iter().position(|&p| (x - p).norm() <= self.radius)
    }
}

#[derive(Clone, Debug)]
pub struct HarmonicSolution {
    pub field: ScalarField,
    pub sweeps: usize,
    /// Largest update of the final sweep.
    pub residual: f64,
    /// Largest update of every sweep.
    pub history: Vec<f64>,
}

impl HarmonicSolution {
    /// Sweeps after the first whose largest update exceeds the previous one.
    pub fn residual_increases(&self) -> usize {
        self.history
            .get(1..)
            .unwrap_or(&[])
            .windows(2)
            .filter(|w| w[1] > w[0] + 1e-15)
            .count()
    }
}

/// Bilinear interpolation of a node field; `None` outside the node hull.
pub fn interpolate(u: &ScalarField, x: Point) -> Option<f64> {
    let g = &u.spec;
    let h = g.h();
    let fx = (x.x - g.domain.x0) / h - 0.5;
    let fy = (x.y - g.domain.y0) / h - 0.5;
    if !(fx >= 0.0 && fy >= 0.0 && fx <= (g.nx - 1) as f64 && fy <= (g.ny - 1) as f64) {
        return None;
    }
    let ix = (fx.floor() as usize).min(g.nx - 2);
    let iy = (fy.floor() as usize).min(g.ny - 2);
    let (tx, ty) = (fx - ix as f64, fy - iy as f64);
    let bottom = u.value(ix, iy) * (1.0 - tx) + u.value(ix + 1, iy) * tx;
    let top = u.value(ix, iy + 1) * (1.0 - tx) + u.value(ix + 1, iy + 1) * tx;
    Some(bottom * (1.0 - ty) + top * ty)
}

/// Red-black SOR until the largest update of a sweep is below the tolerance.
///
/// Each colour is updated from a snapshot of the other colour, so the result
/// does not depend on how rows are split across threads.
pub fn solve_harmonic(p: &PerforatedProblem) -> Result<HarmonicSolution> {
    let g = p.grid;
    let nx = g.nx;
    let mut u: Vec<f64> = p
        .mask
        .iter()
        .map(|k| match k {
            NodeKind::Disk(_) => 1.0,
            _ => 0.0,
        })
        .collect();
    let mut history = Vec::new();
    let mut updates = vec![0.0; g.len()];
    for sweep in 1..=p.max_sweeps {
        let mut max_update: f64 = 0.0;
        for colour in 0..2 {
            updates.par_chunks_mut(nx).enumerate().for_each(|(iy, row)| {
                for (ix, slot) in row.iter_mut().enumerate() {
                    let idx = iy * nx + ix;
                    *slot = 0.0;
                    if (ix + iy) % 2 != colour || p.mask[idx] != NodeKind::Interior {
                        continue;
                    }
                    let st = &p.stencils[idx];
                    let mut target = st.fixed;
                    for k in 0..4 {
                        target += st.weights[k] * u[st.neighbours[k]];
                    }
                    *slot = p.omega * (target - u[idx]);
                }
            });
            for (v, d) in u.iter_mut().zip(&updates) {
                *v += d;
                max_update = max_update.max(d.abs());
            }
        }
        history.push(max_update);
        if max_update < p.tol {
            return Ok(HarmonicSolution {
                field: ScalarField { spec: g, values: u },
                sweeps: sweep,
                residual: max_update,
                history,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: p.max_sweeps,
        residual: history.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// Interior values lie strictly in `(0, 1)` and no interior node exceeds all
/// four neighbours by more than the solver tolerance.
pub fn maximum_principle_check(u: &ScalarField, p: &PerforatedProblem) -> bool {
    let nx = u.spec.nx;
    (0..u.spec.len()).into_par_iter().all(|idx| {
        if p.mask[idx] != NodeKind::Interior {
            return true;
        }
        let v = u.values[idx];
        if !(v > 0.0 && v < 1.0) {
            return false;
        }
        let nb = [idx - 1, idx + 1, idx - nx, idx + nx];
        !nb.iter().all(|&n| v > u.values[n] + p.tol)
    })
}

/// Node gradients by central differences, one-sided on the grid edge.
fn node_gradients(u: &ScalarField) -> Vec<Point> {
    let g = u.spec;
    let h = g.h();
    (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let (ix, iy) = g.coords(idx);
            let diff = |lo: usize, hi: usize, span: f64| (u.values[hi] - u.values[lo]) / span;
            let gx = match (ix > 0, ix + 1 < g.nx) {
                (true, true) => diff(idx - 1, idx + 1, 2.0 * h),
                (false, _) => diff(idx, idx + 1, h),
                (_, false) => diff(idx - 1, idx, h),
            };
            let gy = match (iy > 0, iy + 1 < g.ny) {
                (true, true) => diff(idx - g.nx, idx + g.nx, 2.0 * h),
                (false, _) => diff(idx, idx + g.nx, h),
                (_, false) => diff(idx - g.nx, idx, h),
            };
            Point::new(gx, gy)
        })
        .collect()
}

/// Bilinear interpolation of node values; `None` outside the node hull.
fn bilinear(g: &GridSpec, values: &[Point], x: Point) -> Option<Point> {
    let h = g.h();
    let fx = (x.x - g.domain.x0) / h - 0.5;
    let fy = (x.y - g.domain.y0) / h - 0.5;
    if !(fx >= 0.0 && fy >= 0.0 && fx <= (g.nx - 1) as f64 && fy <= (g.ny - 1) as f64) {
        return None;
    }
    let ix = (fx.floor() as usize).min(g.nx - 2);
    let iy = (fy.floor() as usize).min(g.ny - 2);
    let (tx, ty) = (fx - ix as f64, fy - iy as f64);
    let at = |i, j| values[g.index(i, j)];
    let bottom = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
    let top = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
    Some(bottom * (1.0 - ty) + top * ty)
}

/// Step cap for a single streamline.
pub const MAX_ASCENT_STEPS: usize = 10_000;

/// Gradient magnitude below which a streamline is treated as stagnant.
pub const STAGNATION: f64 = 1e-12;

/// Precomputed gradients of a solved field for repeated streamline tracing.
#[derive(Clone, Debug)]
pub struct AscentField {
    spec: GridSpec,
    grads: Vec<Point>,
}

impl AscentField {
    pub fn new(u: &ScalarField) -> Self {
        Self {
            spec: u.spec,
            grads: node_gradients(u),
        }
    }

    /// Follows `∇u/|∇u|` with step `h/2` until a disk is entered.
    pub fn label(&self, p: &PerforatedProblem, x0: Point) -> u32 {
        let step = 0.5 * self.spec.h();
        let mut x = x0;
        for _ in 0..MAX_ASCENT_STEPS {
            if let Some(i) = p.disk_at(x) {
                return i as u32;
            }
            let Some(grad) = bilinear(&self.spec, &self.grads, x) else {
                return UNASSIGNED;
            };
            let n = grad.norm();
            if n.is_nan() || n < STAGNATION {
                return UNASSIGNED;
            }
            x = x + grad * (step / n);
        }
        UNASSIGNED
    }
}

pub fn steepest_ascent_label(u: &ScalarField, p: &PerforatedProblem, x0: Point) -> u32 {
    AscentField::new(u).label(p, x0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HarmonicReport {
    pub unassigned_fraction: f64,
    pub mismatch_vs_voronoi: f64,
    pub solver_iterations: usize,
    pub residual: f64,
    /// Sweeps whose largest update grew; over-relaxation near the optimum oscillates.
    pub residual_increases: usize,
    pub maximum_principle: bool,
}

#[derive(Clone, Debug)]
pub struct HarmonicTessellation {
    pub solution: HarmonicSolution,
    pub labels: LabelGrid,
    pub report: HarmonicReport,
}

/// Solves, labels every node by steepest ascent and compares with the
/// Voronoi labeling outside a `2h` band.
///
/// Disk nodes carry their own label. The unassigned fraction counts interior
/// nodes only; the outer ring is traced too but its corners have no gradient.
pub fn harmonic_tessellation(p: &PerforatedProblem) -> Result<HarmonicTessellation> {
    let solution = solve_harmonic(p)?;
    let ascent = AscentField::new(&solution.field);
    let g = p.grid;
    let labels = (0..g.len())
        .into_par_iter()
        .map(|idx| match p.mask[idx] {
            NodeKind::Disk(i) => i,
            _ => ascent.label(p, g.point(idx)),
        })
        .collect();
    let labels = LabelGrid {
        spec: g,
        labels,
        gaps: None,
    };
    let oracle = rasterize_tessellation(&p.sites, &g, Mode::Voronoi);
    let interior: Vec<usize> = (0..g.len()).filter(|&i| p.mask[i] == NodeKind::Interior).collect();
    let unassigned = interior.iter().filter(|&&i| labels.labels[i] == UNASSIGNED).count();
    let report = HarmonicReport {
        unassigned_fraction: unassigned as f64 / interior.len() as f64,
        mismatch_vs_voronoi: mismatch_fraction(&labels, &oracle, 2.0 * g.h())?,
        solver_iterations: solution.sweeps,
        residual: solution.residual,
        residual_increases: solution.residual_increases(),
        maximum_principle: maximum_principle_check(&solution.field, p),
    };
    Ok(HarmonicTessellation {
        solution,
        labels,
        report,
    })
}

/// `Σ (1/2π) ln|x − x_i|`.
pub fn log_superposition(x: Point, s: &SiteSet) -> f64 {
    s.sites().iter().map(|&p| (x - p).norm().ln()).sum::<f64>() / (2.0 * PI)
}

#[derive(Clone, Debug)]
pub struct LogField {
    pub field: ScalarField,
    /// Nodes within `h/2` of a site, evaluated at distance `h/2` instead.
    pub clamped: Vec<usize>,
}

pub fn log_superposition_field(s: &SiteSet, g: &GridSpec) -> Result<LogField> {
    if s.topology() != Topology::Plane {
        return Err(Error::Topology("plane"));
    }
    let floor = 0.5 * g.h();
    let (values, flags): (Vec<f64>, Vec<bool>) = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let x = g.point(idx);
            let mut clamped = false;
            let sum: f64 = s
                .sites()
                .iter()
                .map(|&p| {
                    let r = (x - p).norm();
                    if r < floor {
                        clamped = true;
                    }
                    r.max(floor).ln()
                })
                .sum();
            (sum / (2.0 * PI), clamped)
        })
        .unzip();
    Ok(LogField {
        field: ScalarField { spec: *g, values },
        clamped: flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i).collect(),
    })
}

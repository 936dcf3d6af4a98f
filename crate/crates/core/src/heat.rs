//! Heat-kernel superposition on the plane and the flat torus.
//!
//! `u(x,t) = Σ w_i p_t(x_i, x)` with the Gaussian kernel (plus periodic
//! images on the torus). Besides evaluating the field, this module probes the
//! short-time behaviour that ties it to the Voronoi cells of the sources: ray
//! profiles that decrease inside every cell away from its boundary, minima
//! along inter-site paths that sit near cell boundaries, the distance-gap
//! function of a cell and closed-form kernel gradient bounds.
//!
//! Probes work with `ln u` through a log-sum-exp so that small times do not
//! underflow the comparison.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::geom::{
    boundary_distance, metric_distance, nearest_image, nearest_site_label, GridSpec, LabelGrid, Mode, Point, Rect,
    ScalarField, SiteSet, Topology,
};

/// Relative slack when testing strict decrease.
pub const DECREASE_SLACK: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq)]
pub struct HeatConfig {
    pub sites: SiteSet,
    /// Initial masses, one per site.
    pub masses: Vec<f64>,
    pub t: f64,
    /// Periodic image cutoff (torus only).
    pub images: usize,
}

/// Image cutoff for which the discarded tail is below `1e-14` of the kernel.
pub fn image_cutoff(t: f64, period: f64) -> usize {
    ((4.0 * t * 35.0).sqrt() / period).ceil() as usize + 1
}

impl HeatConfig {
    pub fn new(sites: SiteSet, masses: Vec<f64>, t: f64) -> Result<Self> {
        if masses.len() != sites.len() {
            return Err(invalid("masses", "one mass per site is required"));
        }
        if masses.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(invalid("masses", "masses must be positive"));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(invalid("t", "time must be positive"));
        }
        let images = match sites.topology() {
            Topology::Plane => 0,
            Topology::Torus { period } => image_cutoff(t, period),
        };
        Ok(Self {
            sites,
            masses,
            t,
            images,
        })
    }

    /// Unit masses on every site.
    pub fn equal(sites: SiteSet, t: f64) -> Result<Self> {
        let n = sites.len();
        Self::new(sites, vec![1.0; n], t)
    }

    pub fn at_time(&self, t: f64) -> Result<Self> {
        Self::new(self.sites.clone(), self.masses.clone(), t)
    }

    fn topology(&self) -> Topology {
        self.sites.topology()
    }

    /// `ln(w_i p_t(x_i, x))` for one site, image sum included on the torus.
    fn log_term(&self, i: usize, x: Point) -> f64 {
        let xi = self.sites.site(i);
        let lw = self.masses[i].ln();
        let norm = -(4.0 * PI * self.t).ln();
        match self.topology() {
            Topology::Plane => lw + norm - (x - xi).norm2() / (4.0 * self.t),
            Topology::Torus { period } => lw + log_image_sum(x, xi, self.t, period, self.images),
        }
    }

    /// `ln u(x, t)`.
    pub fn log_value(&self, x: Point) -> f64 {
        log_sum_exp((0..self.sites.len()).map(|i| self.log_term(i, x)))
    }

    pub fn value(&self, x: Point) -> f64 {
        (0..self.sites.len())
            .map(|i| {
                self.masses[i]
                    * heat_kernel(self.sites.site(i), x, self.t, self.topology(), self.images.max(1))
                        .expect("config time is positive")
            })
            .sum()
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: Vec<f64> = terms.collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

fn log_image_sum(x: Point, y: Point, t: f64, period: f64, k: usize) -> f64 {
    let k = k as i64;
    let norm = -(4.0 * PI * t).ln();
    log_sum_exp((-k..=k).flat_map(|kx| {
        (-k..=k).map(move |ky| {
            let img = x - y + Point::new(kx as f64 * period, ky as f64 * period);
            norm - img.norm2() / (4.0 * t)
        })
    }))
}

/// Gaussian heat kernel; image sum over `|k|∞ ≤ images` on the torus.
pub fn heat_kernel(x: Point, y: Point, t: f64, topology: Topology, images: usize) -> Result<f64> {
    if t.is_nan() || t <= 0.0 {
        return Err(invalid("t", "time must be positive"));
    }
    let c = 1.0 / (4.0 * PI * t);
    Ok(match topology {
        Topology::Plane => c * (-(x - y).norm2() / (4.0 * t)).exp(),
        Topology::Torus { period } => {
            let k = images as i64;
            // |x - y| per axis keeps the sum bit-symmetric in x and y
            let dx = (x.x - y.x).abs();
            let dy = (x.y - y.y).abs();
            let mut sum = 0.0;
            for kx in -k..=k {
                for ky in -k..=k {
                    let d = Point::new(dx + kx as f64 * period, dy + ky as f64 * period);
                    sum += (-d.norm2() / (4.0 * t)).exp();
                }
            }
            c * sum
        }
    })
}

pub fn heat_field(cfg: &HeatConfig, g: &GridSpec) -> ScalarField {
    let values = (0..g.len())
        .into_par_iter()
        .map(|idx| cfg.value(g.point(idx)))
        .collect();
    ScalarField { spec: *g, values }
}

/// Midpoint-rule integral of a field over its grid.
pub fn field_mass(f: &ScalarField) -> f64 {
    let h = f.spec.h();
    f.values.iter().sum::<f64>() * h * h
}

/// Grid around the site hull padded by `pad` on every side, spacing at most `h`.
pub fn padded_grid(sites: &SiteSet, pad: f64, h: f64) -> Result<GridSpec> {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in sites.sites() {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let side = (x1 - x0).max(y1 - y0) + 2.0 * pad;
    let n = (side / h).ceil() as usize;
    let c = Point::new(0.5 * (x0 + x1), 0.5 * (y0 + y1));
    let half = 0.5 * n as f64 * h;
    GridSpec::new(n, n, Rect::new(c.x - half, c.x + half, c.y - half, c.y + half)?)
}

/// Label by the largest single-source term `w_i p_t(x_i, x)`.
///
/// On the plane this is the power cell of `d² − 4t ln w_i`; the offsets are
/// taken relative to the largest mass so that equal masses reproduce the
/// nearest-site comparison exactly.
pub fn dominant_kernel_label(cfg: &HeatConfig, g: &GridSpec) -> LabelGrid {
    let n = cfg.sites.len();
    let labels = match cfg.topology() {
        Topology::Plane => {
            let lmax = cfg.masses.iter().map(|w| w.ln()).fold(f64::NEG_INFINITY, f64::max);
            let offsets: Vec<f64> = cfg.masses.iter().map(|w| 4.0 * cfg.t * (lmax - w.ln())).collect();
            (0..g.len())
                .into_par_iter()
                .map(|idx| {
                    let x = g.point(idx);
                    let mut best = (0u32, f64::INFINITY);
                    for (i, off) in offsets.iter().enumerate() {
                        let score = (x - cfg.sites.site(i)).norm2() + off;
                        if score < best.1 {
                            best = (i as u32, score);
                        }
                    }
                    best.0
                })
                .collect()
        }
        Topology::Torus { .. } => (0..g.len())
            .into_par_iter()
            .map(|idx| {
                let x = g.point(idx);
                let mut best = (0u32, f64::NEG_INFINITY);
                for i in 0..n {
                    let v = cfg.log_term(i, x);
                    if v > best.1 {
                        best = (i as u32, v);
                    }
                }
                best.0
            })
            .collect(),
    };
    LabelGrid {
        spec: *g,
        labels,
        gaps: None,
    }
}

/// Point reached from site `i` after arc length `s` in direction `theta`.
fn ray_point(cfg: &HeatConfig, i: usize, dir: Point, s: f64) -> Point {
    let p = cfg.sites.site(i) + dir * s;
    match cfg.topology() {
        Topology::Plane => p,
        Topology::Torus { period } => Point::new(p.x.rem_euclid(period), p.y.rem_euclid(period)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RaySample {
    pub s: f64,
    pub u: f64,
    pub log_u: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeVerdict {
    Decreasing,
    Violated,
    EmptyRange,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RayProbe {
    pub site: usize,
    pub theta: f64,
    pub ds: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub samples: Vec<RaySample>,
    pub verdict: ProbeVerdict,
}

/// Sample `u` along the ray from site `i` over its admissible range.
///
/// Admissible samples have `s > delta`, stay in the site's own cell at
/// distance more than `epsilon` from its boundary and, on the plane, inside
/// the domain. The admissible set is an interval because the distance to the
/// boundary of a convex cell is concave along the ray.
pub fn radial_monotonicity_probe(
    cfg: &HeatConfig,
    i: usize,
    theta: f64,
    delta: f64,
    epsilon: f64,
    ds: f64,
) -> Result<RayProbe> {
    if ds.is_nan() || ds <= 0.0 {
        return Err(invalid("ds", "sample step must be positive"));
    }
    let dir = Point::polar(theta);
    let s_max = match cfg.topology() {
        Topology::Plane => cfg.sites.domain().diameter(),
        Topology::Torus { period } => period * std::f64::consts::SQRT_2,
    };
    let mut samples = Vec::new();
    let mut k = 1usize;
    loop {
        let s = k as f64 * ds;
        k += 1;
        if s > s_max {
            break;
        }
        if s <= delta {
            continue;
        }
        let x = ray_point(cfg, i, dir, s);
        if cfg.topology() == Topology::Plane && !cfg.sites.domain().contains_open(x) {
            break;
        }
        if nearest_site_label(x, &cfg.sites).label != i {
            break;
        }
        if boundary_distance(x, &cfg.sites, Mode::Voronoi) <= epsilon {
            if samples.is_empty() {
                continue;
            }
            break;
        }
        let log_u = cfg.log_value(x);
        samples.push(RaySample {
            s,
            u: log_u.exp(),
            log_u,
        });
    }
    let verdict = if samples.is_empty() {
        ProbeVerdict::EmptyRange
    } else if samples.windows(2).all(|w| strictly_below(w[1].log_u, w[0].log_u)) {
        ProbeVerdict::Decreasing
    } else {
        ProbeVerdict::Violated
    };
    Ok(RayProbe {
        site: i,
        theta,
        ds,
        delta,
        epsilon,
        samples,
        verdict,
    })
}

/// `u_next < u_prev − slack·u_prev`, expressed on logarithms.
fn strictly_below(log_next: f64, log_prev: f64) -> bool {
    log_next < log_prev + (-DECREASE_SLACK).ln_1p()
}

/// Directions `2πk/n`.
pub fn ray_fan(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect()
}

/// Do all rays of every listed site pass at time `t`?
pub fn all_rays_decrease(
    cfg: &HeatConfig,
    sites: &[usize],
    thetas: &[f64],
    delta: f64,
    epsilon: f64,
    ds: f64,
) -> Result<bool> {
    let jobs: Vec<(usize, f64)> = sites
        .iter()
        .flat_map(|&i| thetas.iter().map(move |&th| (i, th)))
        .collect();
    let results: Result<Vec<bool>> = jobs
        .par_iter()
        .map(|&(i, th)| {
            radial_monotonicity_probe(cfg, i, th, delta, epsilon, ds).map(|p| p.verdict != ProbeVerdict::Violated)
        })
        .collect();
    Ok(results?.into_iter().all(|b| b))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EmpiricalT {
    pub t: f64,
    /// Set when even the smallest time in the search range fails.
    pub none_passed: bool,
}

pub const T_MIN: f64 = 1e-6;
pub const T_MAX: f64 = 1.0;

/// Largest `t ∈ (T_MIN, T_MAX)` at which every ray of the listed sites passes.
///
/// Geometric bisection until the bracket ratio is below `1.001`.
pub fn empirical_t(
    template: &HeatConfig,
    sites: &[usize],
    thetas: &[f64],
    delta: f64,
    epsilon: f64,
    ds: f64,
) -> Result<EmpiricalT> {
    let passes =
        |t: f64| -> Result<bool> { all_rays_decrease(&template.at_time(t)?, sites, thetas, delta, epsilon, ds) };
    if passes(T_MAX)? {
        return Ok(EmpiricalT {
            t: T_MAX,
            none_passed: false,
        });
    }
    if !passes(T_MIN)? {
        return Ok(EmpiricalT {
            t: T_MIN,
            none_passed: true,
        });
    }
    let (mut lo, mut hi) = (T_MIN, T_MAX);
    while hi / lo > 1.001 {
        let mid = (lo * hi).sqrt();
        if passes(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(EmpiricalT {
        t: lo,
        none_passed: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathMinimum {
    /// Arc length from site `i` to the sampled minimum.
    pub s: f64,
    pub point: Point,
    pub log_u: f64,
    /// Distance from the minimum to the nearest cell boundary.
    pub boundary_distance: f64,
}

/// Minimum of `u` over `n_samples` interior points of the segment `x_i → x_j`.
pub fn path_minimum_probe(cfg: &HeatConfig, i: usize, j: usize, n_samples: usize) -> Result<PathMinimum> {
    if i == j {
        return Err(invalid("j", "endpoints must differ"));
    }
    if n_samples == 0 {
        return Err(invalid("n_samples", "must be positive"));
    }
    let a = cfg.sites.site(i);
    let b = nearest_image(a, cfg.sites.site(j), cfg.topology());
    let len = (b - a).norm();
    let mut best: Option<(f64, Point, f64)> = None;
    for k in 1..=n_samples {
        let frac = k as f64 / (n_samples + 1) as f64;
        let mut x = a + (b - a) * frac;
        if let Topology::Torus { period } = cfg.topology() {
            x = Point::new(x.x.rem_euclid(period), x.y.rem_euclid(period));
        }
        let v = cfg.log_value(x);
        if best.is_none_or(|(bv, _, _)| v < bv) {
            best = Some((v, x, frac * len));
        }
    }
    let (log_u, point, s) = best.expect("at least one sample");
    Ok(PathMinimum {
        s,
        point,
        log_u,
        boundary_distance: boundary_distance(point, &cfg.sites, Mode::Voronoi),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapFunction {
    /// `min Φ` over the nodes of the shrunken cell.
    pub alpha: f64,
    /// `alpha²`.
    pub phi: f64,
}

/// Distance gap of cell `i` away from its boundary.
///
/// Over grid nodes of cell `i` farther than `epsilon` from the cell boundary,
/// minimises `Φ(x) = min_{j≠i} d(x,x_j) − d(x,x_i)`. `None` when no node
/// qualifies.
pub fn gap_function_phi(s: &SiteSet, i: usize, epsilon: f64, g: &GridSpec) -> Option<GapFunction> {
    let topo = s.topology();
    let alpha = (0..g.len())
        .into_par_iter()
        .filter_map(|idx| {
            let x = g.point(idx);
            if nearest_site_label(x, s).label != i || boundary_distance(x, s, Mode::Voronoi) <= epsilon {
                return None;
            }
            let di = metric_distance(x, s.site(i), topo);
            let other = (0..s.len())
                .filter(|&j| j != i)
                .map(|j| metric_distance(x, s.site(j), topo))
                .fold(f64::INFINITY, f64::min);
            Some(other - di)
        })
        .reduce_with(f64::min)?;
    Some(GapFunction {
        alpha,
        phi: alpha * alpha,
    })
}

/// `|∇_y p_t(x,y)|` of the planar kernel at distance `d`.
pub fn kernel_gradient_norm(d: f64, t: f64) -> f64 {
    d / (2.0 * t) / (4.0 * PI * t) * (-d * d / (4.0 * t)).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientBoundReport {
    pub t_range: (f64, f64),
    pub d_range: (f64, f64),
    pub mesh: (usize, usize),
    /// Smallest `C` with `ln|∇p| ≤ C + (n−1) ln t − d²/4t + ln d` on the mesh.
    pub c_up: f64,
    /// Largest `C` with `ln|∂_s p| ≥ C − (1+n/2) ln t − d²/4t + ln d` on the mesh.
    pub c_low: f64,
    /// Spread of the lower-bound residual over the mesh.
    pub c_low_spread: f64,
    pub finite: bool,
    /// Doubling `d` lowers `|∇p|` at every mesh point with `d² > 2t`.
    pub tail_dominance: bool,
}

/// Fit the kernel gradient bound constants on a log-spaced `(t, d)` mesh, `n = 2`.
pub fn kernel_gradient_bound_check(
    t_range: (f64, f64),
    d_range: (f64, f64),
    nt: usize,
    nd: usize,
) -> Result<GradientBoundReport> {
    if !(t_range.0 > 0.0 && t_range.1 >= t_range.0 && d_range.0 > 0.0 && d_range.1 >= d_range.0) {
        return Err(invalid("range", "ranges must be positive and ordered"));
    }
    if nt < 2 || nd < 2 {
        return Err(invalid("mesh", "need at least two points per axis"));
    }
    let n = 2.0;
    let logspace =
        |(a, b): (f64, f64), k: usize, m: usize| (a.ln() + (b.ln() - a.ln()) * k as f64 / (m - 1) as f64).exp();
    let mut c_up = f64::NEG_INFINITY;
    let mut low_min = f64::INFINITY;
    let mut low_max = f64::NEG_INFINITY;
    let mut tail = true;
    for a in 0..nt {
        let t = logspace(t_range, a, nt);
        for b in 0..nd {
            let d = logspace(d_range, b, nd);
            let g = kernel_gradient_norm(d, t);
            // log of the closed form, exact even where g underflows
            let lg = d.ln() - (2.0 * t).ln() - (4.0 * PI * t).ln() - d * d / (4.0 * t);
            let up = lg - ((n - 1.0) * t.ln() - d * d / (4.0 * t) + d.ln());
            let low = lg - (-(1.0 + n / 2.0) * t.ln() - d * d / (4.0 * t) + d.ln());
            c_up = c_up.max(up);
            low_min = low_min.min(low);
            low_max = low_max.max(low);
            if d * d > 2.0 * t && g > 0.0 && kernel_gradient_norm(2.0 * d, t) >= g {
                tail = false;
            }
        }
    }
    Ok(GradientBoundReport {
        t_range,
        d_range,
        mesh: (nt, nd),
        c_up,
        c_low: low_min,
        c_low_spread: low_max - low_min,
        finite: c_up.is_finite() && low_min.is_finite(),
        tail_dominance: tail,
    })
}

/// Per site: is the minimising translate unique by more than `h` at every node of its cell?
pub fn torus_cutlocus_check(s: &SiteSet, g: &GridSpec) -> Result<Vec<bool>> {
    let Topology::Torus { period } = s.topology() else {
        return Err(Error::Topology("torus"));
    };
    let h = g.h();
    let mut ok = vec![true; s.len()];
    let fails: Vec<usize> = (0..g.len())
        .into_par_iter()
        .filter_map(|idx| {
            let x = g.point(idx);
            let i = nearest_site_label(x, s).label;
            let xi = s.site(i);
            let mut d: Vec<f64> = (-1..=1)
                .flat_map(|kx| (-1..=1).map(move |ky| (kx, ky)))
                .map(|(kx, ky)| (x - xi + Point::new(kx as f64 * period, ky as f64 * period)).norm())
                .collect();
            d.sort_by(f64::total_cmp);
            (d[1] - d[0] <= h).then_some(i)
        })
        .collect();
    for i in fails {
        ok[i] = false;
    }
    Ok(ok)
}

/// The precondition form of [`torus_cutlocus_check`]: the first failing site
/// becomes [`Error::CutLocus`].
pub fn require_cutlocus_free(s: &SiteSet, g: &GridSpec) -> Result<()> {
    match torus_cutlocus_check(s, g)?.iter().position(|&ok| !ok) {
        Some(i) => Err(Error::CutLocus(i)),
        None => Ok(()),
    }
}

/// Relative error of `∫ p_t(x,y) p_s(y,z) dy ≈ p_{t+s}(x,z)` on an `n × n` torus grid.
pub fn torus_semigroup_defect(x: Point, z: Point, t: f64, s: f64, period: f64, n: usize) -> Result<f64> {
    let g = GridSpec::square(n, Rect::square(period))?;
    let topo = Topology::Torus { period };
    let kt = image_cutoff(t, period);
    let ks = image_cutoff(s, period);
    let h = g.h();
    let conv: f64 = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let y = g.point(idx);
            heat_kernel(x, y, t, topo, kt).unwrap() * heat_kernel(y, z, s, topo, ks).unwrap()
        })
        .sum::<f64>()
        * h
        * h;
    let exact = heat_kernel(x, z, t + s, topo, image_cutoff(t + s, period))?;
    Ok((conv - exact).abs() / exact)
}

//! Multi-source fast marching for `|∇T| = 1`.
//!
//! Arrival times approximate the distance to the site set; the upwind
//! provenance of each node gives a labeling, and the places where the fronts
//! of two different sources arrive at nearly the same time form the
//! collision (singular) set that traces the Voronoi boundary.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{GridSpec, LabelGrid, ScalarField, SiteSet, Topology, UNASSIGNED};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeState {
    Far,
    Narrow,
    Accepted,
}

#[derive(Clone, Debug)]
pub struct ArrivalField {
    pub spec: GridSpec,
    pub times: Vec<f64>,
    pub labels: Vec<u32>,
    pub states: Vec<NodeState>,
    /// Node indices in the order they were accepted.
    pub order: Vec<usize>,
}

impl ArrivalField {
    pub fn time_field(&self) -> ScalarField {
        ScalarField {
            spec: self.spec,
            values: self.times.clone(),
        }
    }

    pub fn label_grid(&self) -> LabelGrid {
        LabelGrid {
            spec: self.spec,
            labels: self.labels.clone(),
            gaps: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate {
    time: f64,
    node: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // min-heap on (time, node)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// How the arrival times around each site are seeded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceInit {
    /// Time zero at the node nearest the site.
    Snap,
    /// Exact distance at every node within `radius` grid spacings of the site
    /// (and at the nearest node).
    Exact { radius: f64 },
}

/// Seeding used by [`fast_march`]: exact distances within two grid spacings.
pub const DEFAULT_INIT: SourceInit = SourceInit::Exact { radius: 2.0 };

/// First-order upwind solve of `|∇T| = 1` from every site at once.
pub fn fast_march(s: &SiteSet, g: &GridSpec) -> Result<ArrivalField> {
    fast_march_with(s, g, DEFAULT_INIT)
}

pub fn fast_march_with(s: &SiteSet, g: &GridSpec, init: SourceInit) -> Result<ArrivalField> {
    if s.topology() != Topology::Plane {
        return Err(Error::Topology("plane"));
    }
    let n = g.len();
    let h = g.h();
    let mut times = vec![f64::INFINITY; n];
    let mut labels = vec![UNASSIGNED; n];
    let mut states = vec![NodeState::Far; n];
    let mut heap = BinaryHeap::new();
    for (k, &p) in s.sites().iter().enumerate() {
        let (ix, iy) = g.nearest_node(p);
        let mut seeds = vec![(g.index(ix, iy), 0.0)];
        if let SourceInit::Exact { radius } = init {
            let r = (radius.ceil() as isize).max(1);
            seeds.clear();
            for dy in -r..=r {
                for dx in -r..=r {
                    let (jx, jy) = (ix as isize + dx, iy as isize + dy);
                    if jx < 0 || jy < 0 || jx >= g.nx as isize || jy >= g.ny as isize {
                        continue;
                    }
                    let idx = g.index(jx as usize, jy as usize);
                    let d = (g.point(idx) - p).norm();
                    if d <= radius * h || (dx, dy) == (0, 0) {
                        seeds.push((idx, d));
                    }
                }
            }
        }
        for (idx, t) in seeds {
            // a shared node keeps the earlier time, then the lower site index
            if t < times[idx] {
                times[idx] = t;
                labels[idx] = k as u32;
                states[idx] = NodeState::Narrow;
                heap.push(Candidate { time: t, node: idx });
            }
        }
    }
    let mut order = Vec::with_capacity(n);
    while let Some(Candidate { time, node }) = heap.pop() {
        if states[node] == NodeState::Accepted || time > times[node] {
            continue;
        }
        states[node] = NodeState::Accepted;
        order.push(node);
        let neighbors: Vec<usize> = g.neighbors4(node).collect();
        for nb in neighbors {
            if states[nb] == NodeState::Accepted {
                continue;
            }
            let (t_new, l_new) = upwind_update(g, nb, &times, &labels, &states, h);
            if t_new < times[nb] {
                times[nb] = t_new;
                labels[nb] = l_new;
                states[nb] = NodeState::Narrow;
                heap.push(Candidate { time: t_new, node: nb });
            }
        }
    }
    Ok(ArrivalField {
        spec: *g,
        times,
        labels,
        states,
        order,
    })
}

/// Smallest accepted neighbour carrying `label` along one axis.
fn axis_min(
    a: Option<usize>,
    b: Option<usize>,
    label: u32,
    times: &[f64],
    labels: &[u32],
    states: &[NodeState],
) -> f64 {
    [a, b]
        .into_iter()
        .flatten()
        .filter(|&idx| states[idx] == NodeState::Accepted && labels[idx] == label)
        .map(|idx| times[idx])
        .fold(f64::INFINITY, f64::min)
}

/// Upwind quadratic per neighbouring label; the smallest candidate wins,
/// lowest label on ties. Only neighbours of one label are combined, so two
/// colliding fronts never feed a single update.
fn upwind_update(g: &GridSpec, idx: usize, times: &[f64], labels: &[u32], states: &[NodeState], h: f64) -> (f64, u32) {
    let (ix, iy) = g.coords(idx);
    let left = (ix > 0).then(|| idx - 1);
    let right = (ix + 1 < g.nx).then(|| idx + 1);
    let down = (iy > 0).then(|| idx - g.nx);
    let up = (iy + 1 < g.ny).then(|| idx + g.nx);
    let mut best = (f64::INFINITY, UNASSIGNED);
    for nb in [left, right, down, up].into_iter().flatten() {
        if states[nb] != NodeState::Accepted {
            continue;
        }
        let label = labels[nb];
        let a = axis_min(left, right, label, times, labels, states);
        let b = axis_min(down, up, label, times, labels, states);
        let t = if a.is_finite() && b.is_finite() && (a - b).abs() < h {
            0.5 * (a + b + (2.0 * h * h - (a - b) * (a - b)).sqrt())
        } else {
            a.min(b) + h
        };
        if t < best.0 || (t == best.0 && label < best.1) {
            best = (t, label);
        }
    }
    best
}

/// One independent fast-march per site; field `k` approximates `d(x, x_k)`.
pub fn per_source_distance_stack(s: &SiteSet, g: &GridSpec) -> Result<Vec<ScalarField>> {
    per_source_distance_stack_with(s, g, DEFAULT_INIT)
}

pub fn per_source_distance_stack_with(s: &SiteSet, g: &GridSpec, init: SourceInit) -> Result<Vec<ScalarField>> {
    (0..s.len())
        .into_par_iter()
        .map(|k| {
            let single = SiteSet::new(vec![s.site(k)], s.domain())?;
            Ok(fast_march_with(&single, g, init)?.time_field())
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingularSet {
    pub nodes: Vec<usize>,
    pub tau: f64,
}

fn two_smallest(stack: &[ScalarField], idx: usize) -> (usize, f64, f64) {
    let mut best = (0usize, f64::INFINITY);
    let mut second = f64::INFINITY;
    for (k, f) in stack.iter().enumerate() {
        let v = f.values[idx];
        if v < best.1 {
            second = best.1;
            best = (k, v);
        } else if v < second {
            second = v;
        }
    }
    (best.0, best.1, second)
}

/// Nodes where the two earliest fronts arrive less than `tau` apart.
///
/// `tau = h` keeps the set within about two spacings of the true edges; a
/// wider band fattens it near triple junctions where fronts meet at shallow
/// angles.
pub fn extract_singular_set(stack: &[ScalarField], tau: f64) -> SingularSet {
    let Some(first) = stack.first() else {
        return SingularSet { nodes: Vec::new(), tau };
    };
    let nodes = (0..first.spec.len())
        .into_par_iter()
        .filter(|&idx| {
            let (_, a, b) = two_smallest(stack, idx);
            b - a < tau
        })
        .collect();
    SingularSet { nodes, tau }
}

/// Label grids of the fronts at each snapshot time.
pub fn front_snapshots(stack: &[ScalarField], times: &[f64]) -> Vec<LabelGrid> {
    let Some(first) = stack.first() else {
        return Vec::new();
    };
    let spec = first.spec;
    times
        .iter()
        .map(|&t_star| {
            let labels = (0..spec.len())
                .into_par_iter()
                .map(|idx| {
                    let (k, a, _) = two_smallest(stack, idx);
                    if a <= t_star {
                        k as u32
                    } else {
                        UNASSIGNED
                    }
                })
                .collect();
            LabelGrid {
                spec,
                labels,
                gaps: None,
            }
        })
        .collect()
}

/// Pointwise minimum over the stack.
pub fn stack_minimum(stack: &[ScalarField]) -> Option<ScalarField> {
    let first = stack.first()?;
    let values = (0..first.spec.len())
        .map(|idx| stack.iter().map(|f| f.values[idx]).fold(f64::INFINITY, f64::min))
        .collect();
    Some(ScalarField {
        spec: first.spec,
        values,
    })
}

/// Largest `|T − d(x, P)|` over the grid.
pub fn max_distance_error(field: &ArrivalField, s: &SiteSet) -> f64 {
    (0..field.spec.len())
        .into_par_iter()
        .map(|idx| {
            let x = field.spec.point(idx);
            let d = s.sites().iter().map(|&p| (x - p).norm()).fold(f64::INFINITY, f64::min);
            (field.times[idx] - d).abs()
        })
        .reduce(|| 0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Point, Rect};

    #[test]
    fn neighbours_of_a_node_source_get_h() {
        let g = GridSpec::square(16, Rect::square(1.0)).unwrap();
        let src = g.node(7, 9);
        let s = SiteSet::new(vec![src], Rect::square(1.0)).unwrap();
        let f = fast_march(&s, &g).unwrap();
        let h = g.h();
        for nb in g.neighbors4(g.index(7, 9)) {
            assert!((f.times[nb] - h).abs() < 1e-15);
        }
        assert!(f.states.iter().all(|&st| st == NodeState::Accepted));
        assert!(f.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn acceptance_order_is_monotone() {
        let g = GridSpec::square(40, Rect::square(1.0)).unwrap();
        let s = SiteSet::new(
            vec![Point::new(0.2, 0.3), Point::new(0.8, 0.7), Point::new(0.4, 0.9)],
            Rect::square(1.0),
        )
        .unwrap();
        let f = fast_march(&s, &g).unwrap();
        assert_eq!(f.order.len(), g.len());
        assert!(f.order.windows(2).all(|w| f.times[w[0]] <= f.times[w[1]]));
        // the four nodes around each site
        let diag = h_sqrt2(&g);
        for k in 0..3 {
            let p = s.site(k);
            let fx = ((p.x - g.domain.x0) / g.h() - 0.5).floor() as usize;
            let fy = ((p.y - g.domain.y0) / g.h() - 0.5).floor() as usize;
            for (ix, iy) in [(fx, fy), (fx + 1, fy), (fx, fy + 1), (fx + 1, fy + 1)] {
                assert!(f.times[g.index(ix, iy)] <= diag);
            }
        }
    }

    #[test]
    fn snapped_source_seeds_one_node() {
        let g = GridSpec::square(16, Rect::square(1.0)).unwrap();
        let s = SiteSet::new(vec![Point::new(0.46, 0.6)], Rect::square(1.0)).unwrap();
        let f = fast_march_with(&s, &g, SourceInit::Snap).unwrap();
        assert_eq!(f.times.iter().filter(|&&t| t == 0.0).count(), 1);
        let (ix, iy) = g.nearest_node(s.site(0));
        for nb in g.neighbors4(g.index(ix, iy)) {
            assert!((f.times[nb] - g.h()).abs() < 1e-15);
        }
    }

    #[test]
    fn labels_match_the_oracle_off_the_band() {
        let dom = Rect::square(2.0);
        let g = GridSpec::square(128, dom).unwrap();
        for seed in 0..4 {
            let s = crate::geom::random_site_set(5, dom, 0.1, 0.2, seed).unwrap();
            let f = fast_march(&s, &g).unwrap();
            let oracle = crate::geom::rasterize_tessellation(&s, &g, crate::geom::Mode::Voronoi);
            let band = 2.0 * h_sqrt2(&g);
            assert_eq!(
                crate::geom::mismatch_fraction(&f.label_grid(), &oracle, band).unwrap(),
                0.0
            );
            let stack = per_source_distance_stack(&s, &g).unwrap();
            let min = stack_minimum(&stack).unwrap();
            assert!(min.max_abs_diff(&f.time_field()) <= 2.0 * g.h());
        }
    }

    fn h_sqrt2(g: &GridSpec) -> f64 {
        g.h() * std::f64::consts::SQRT_2
    }

    #[test]
    fn torus_is_rejected() {
        let s = SiteSet::torus(vec![Point::new(0.5, 0.5)], 1.0).unwrap();
        let g = GridSpec::square(8, Rect::square(1.0)).unwrap();
        assert!(matches!(fast_march(&s, &g), Err(Error::Topology(_))));
    }

    #[test]
    fn lone_source_has_no_singular_set() {
        let g = GridSpec::square(32, Rect::square(1.0)).unwrap();
        let s = SiteSet::new(vec![Point::new(0.3, 0.3)], Rect::square(1.0)).unwrap();
        let stack = per_source_distance_stack(&s, &g).unwrap();
        assert!(extract_singular_set(&stack, 2.0 * g.h()).nodes.is_empty());
        assert_eq!(stack[0], fast_march(&s, &g).unwrap().time_field());
    }

    #[test]
    fn snapshots_grow() {
        let g = GridSpec::square(48, Rect::square(2.0)).unwrap();
        let s = SiteSet::new(vec![Point::new(0.5, 0.5), Point::new(1.5, 1.2)], Rect::square(2.0)).unwrap();
        let stack = per_source_distance_stack_with(&s, &g, SourceInit::Snap).unwrap();
        let snaps = front_snapshots(&stack, &[0.0, 0.3, 0.6, 5.0]);
        assert_eq!(snaps[0].labels.iter().filter(|&&l| l != UNASSIGNED).count(), 2);
        for w in snaps.windows(2) {
            for idx in 0..g.len() {
                if w[0].labels[idx] != UNASSIGNED {
                    assert_eq!(w[1].labels[idx], w[0].labels[idx]);
                }
            }
        }
        assert_eq!(snaps[3].unassigned_fraction(), 0.0);
    }

    #[test]
    fn bisector_is_singular() {
        let dom = Rect::square(2.0);
        let g = GridSpec::square(100, dom).unwrap();
        let s = SiteSet::new(vec![Point::new(0.01, 1.01), Point::new(1.99, 1.01)], dom).unwrap();
        let stack = per_source_distance_stack(&s, &g).unwrap();
        let tau = 2.0 * g.h();
        let set = extract_singular_set(&stack, tau);
        assert!(!set.nodes.is_empty());
        for &n in &set.nodes {
            assert!((g.point(n).x - 1.0).abs() <= 1.5 * tau, "{:?}", g.point(n));
        }
    }
}

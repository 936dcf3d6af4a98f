//! Agent-based colonization game.
//!
//! `m` Brownian explorers leave each of `n` randomly placed sources and take
//! Gaussian steps of size `h`. An explorer whose candidate step leaves the
//! open domain, or (after a short warm-up) lands within `epsilon` of any
//! trajectory point already laid down by a rival source, is sent back to its
//! own source. The trajectory cloud of each source then approximates its
//! Voronoi cell.
//!
//! Every particle owns an independent ChaCha stream, particles are processed
//! source-major in a fixed order, and the points laid down during a step only
//! become visible to coalition tests once the whole step has been processed.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geom::{nearest_site_label, GridSpec, LabelGrid, Point, Rect, SiteSet, UNASSIGNED};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub n_sources: usize,
    pub particles_per_source: usize,
    pub iterations: usize,
    /// Standard deviation of each Gaussian step, in domain units.
    pub step: f64,
    /// Coalition radius.
    pub epsilon: f64,
    /// Iterations before coalition checks start.
    pub warmup: usize,
    pub domain: Rect,
    pub seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            n_sources: 4,
            particles_per_source: 100,
            iterations: 500,
            step: 0.1,
            epsilon: 0.01,
            warmup: 5,
            domain: Rect::square(2.0),
            seed: 0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_sources < 1 {
            return Err(invalid("n_sources", "need at least one source"));
        }
        if self.particles_per_source < 1 {
            return Err(invalid("particles_per_source", "must be at least 1"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(invalid("step", "must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid("epsilon", "must be positive"));
        }
        Ok(())
    }

    pub fn n_particles(&self) -> usize {
        self.n_sources * self.particles_per_source
    }
}

/// Positions, homes and full history of every explorer.
#[derive(Clone, Debug)]
pub struct SwarmState {
    sources: Vec<Point>,
    particles_per_source: usize,
    step: f64,
    /// Iteration-major history: `history[t * P + p]`.
    history: Vec<Point>,
    rngs: Vec<ChaCha8Rng>,
    t: usize,
    pub n_coalitions: usize,
    pub n_boundary_resets: usize,
}

impl SwarmState {
    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn n_particles(&self) -> usize {
        self.sources.len() * self.particles_per_source
    }

    pub fn sources(&self) -> &[Point] {
        &self.sources
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    /// Source index owning particle `p`.
    pub fn source_of(&self, p: usize) -> usize {
        p / self.particles_per_source
    }

    pub fn home(&self, p: usize) -> Point {
        self.sources[self.source_of(p)]
    }

    pub fn position(&self, p: usize) -> Point {
        self.history[self.t * self.n_particles() + p]
    }

    pub fn positions(&self) -> &[Point] {
        let n = self.n_particles();
        &self.history[self.t * n..]
    }

    /// Positions of particle `p` at iterations `0..=t`.
    pub fn trajectory(&self, p: usize) -> impl Iterator<Item = Point> + '_ {
        let n = self.n_particles();
        (0..=self.t).map(move |k| self.history[k * n + p])
    }

    /// `(source, point)` for every stored trajectory point, iteration-major.
    pub fn all_points(&self) -> impl Iterator<Item = (usize, Point)> + '_ {
        let n = self.n_particles();
        self.history
            .iter()
            .enumerate()
            .map(move |(k, &pt)| (self.source_of(k % n), pt))
    }

    /// `(source, particle, iteration, point)` rows for CSV dumps.
    pub fn rows(&self) -> impl Iterator<Item = (usize, usize, usize, Point)> + '_ {
        let n = self.n_particles();
        let m = self.particles_per_source;
        self.history
            .iter()
            .enumerate()
            .map(move |(k, &pt)| ((k % n) / m, (k % n) % m, k / n, pt))
    }
}

/// Uniform spatial hash over every stored trajectory point, tagged by source.
#[derive(Clone, Debug)]
pub struct CoalitionIndex {
    bucket: f64,
    cells: HashMap<(i64, i64), Vec<(Point, u32)>>,
    len: usize,
}

impl CoalitionIndex {
    pub fn new(epsilon: f64) -> Self {
        Self {
            bucket: epsilon,
            cells: HashMap::new(),
            len: 0,
        }
    }

    fn key(&self, p: Point) -> (i64, i64) {
        ((p.x / self.bucket).floor() as i64, (p.y / self.bucket).floor() as i64)
    }

    pub fn insert(&mut self, p: Point, source: usize) {
        let k = self.key(p);
        self.cells.entry(k).or_default().push((p, source as u32));
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Is any point of a source other than `source` strictly within `epsilon` of `p`?
    pub fn opposing_within(&self, p: Point, source: usize, epsilon: f64) -> bool {
        let (kx, ky) = self.key(p);
        let eps2 = epsilon * epsilon;
        let src = source as u32;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(bucket) = self.cells.get(&(kx + dx, ky + dy)) {
                    if bucket.iter().any(|&(q, s)| s != src && (q - p).norm2() < eps2) {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Linear scan over the full history, as the reference coalition rule.
pub fn exhaustive_coalition(state: &SwarmState, source: usize, candidate: Point, epsilon: f64) -> bool {
    state
        .all_points()
        .any(|(s, q)| s != source && (q - candidate).norm() < epsilon)
}

pub fn init_swarm(params: &SimParams) -> Result<(SiteSet, SwarmState, CoalitionIndex)> {
    params.validate()?;
    let d = params.domain;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let sources: Vec<Point> = (0..params.n_sources)
        .map(|_| {
            Point::new(
                d.x0 + rng.random::<f64>() * d.width(),
                d.y0 + rng.random::<f64>() * d.height(),
            )
        })
        .collect();
    let sites = SiteSet::new(sources.clone(), d)?;
    let n = params.n_particles();
    let rngs = (0..n)
        .map(|p| {
            let mut r = ChaCha8Rng::seed_from_u64(params.seed);
            r.set_stream(p as u64 + 1);
            r
        })
        .collect();
    let history: Vec<Point> = (0..n).map(|p| sources[p / params.particles_per_source]).collect();
    let mut index = CoalitionIndex::new(params.epsilon);
    for (p, &pt) in history.iter().enumerate() {
        index.insert(pt, p / params.particles_per_source);
    }
    let state = SwarmState {
        sources,
        particles_per_source: params.particles_per_source,
        step: params.step,
        history,
        rngs,
        t: 0,
        n_coalitions: 0,
        n_boundary_resets: 0,
    };
    Ok((sites, state, index))
}

/// What happened to one particle during a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Moved,
    BoundaryReset,
    CoalitionReset,
}

/// Advance every particle by one iteration. Returns the per-particle outcomes.
pub fn step_swarm(state: &mut SwarmState, params: &SimParams, index: &mut CoalitionIndex) -> Vec<StepOutcome> {
    step_with(state, params, index, |_, idx, source, cand| {
        idx.opposing_within(cand, source, params.epsilon)
    })
}

/// Same as [`step_swarm`] but resolves coalitions with the exhaustive scan.
pub fn step_swarm_exhaustive(
    state: &mut SwarmState,
    params: &SimParams,
    index: &mut CoalitionIndex,
) -> Vec<StepOutcome> {
    step_with(state, params, index, |st, _, source, cand| {
        exhaustive_coalition(st, source, cand, params.epsilon)
    })
}

fn step_with<F>(
    state: &mut SwarmState,
    params: &SimParams,
    index: &mut CoalitionIndex,
    coalition: F,
) -> Vec<StepOutcome>
where
    F: Fn(&SwarmState, &CoalitionIndex, usize, Point) -> bool,
{
    let n = state.n_particles();
    let d = params.domain;
    let h = params.step;
    let draws: Vec<(f64, f64)> = state
        .rngs
        .iter_mut()
        .map(|r| (r.sample(StandardNormal), r.sample(StandardNormal)))
        .collect();
    let base = state.t * n;
    let mut next = Vec::with_capacity(n);
    let mut outcomes = Vec::with_capacity(n);
    for (p, &(rx, ry)) in draws.iter().enumerate() {
        let source = state.source_of(p);
        let pos = state.history[base + p];
        let cand = Point::new(pos.x + h * rx, pos.y + h * ry);
        let outcome = if cand.x >= d.x1 || cand.x <= d.x0 || cand.y >= d.y1 || cand.y <= d.y0 {
            StepOutcome::BoundaryReset
        } else if state.t >= params.warmup && coalition(state, index, source, cand) {
            StepOutcome::CoalitionReset
        } else {
            StepOutcome::Moved
        };
        next.push(match outcome {
            StepOutcome::Moved => cand,
            _ => state.sources[source],
        });
        outcomes.push(outcome);
    }
    for (p, &pt) in next.iter().enumerate() {
        index.insert(pt, state.source_of(p));
    }
    state.n_boundary_resets += outcomes.iter().filter(|&&o| o == StepOutcome::BoundaryReset).count();
    state.n_coalitions += outcomes.iter().filter(|&&o| o == StepOutcome::CoalitionReset).count();
    state.history.extend(next);
    state.t += 1;
    outcomes
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColonizeMetrics {
    /// Share of each source's trajectory points that lie in its own Voronoi cell.
    pub per_source_fraction: Vec<f64>,
    pub global_fraction: f64,
    pub n_coalitions: usize,
    pub n_boundary_resets: usize,
}

pub fn colonize_metrics(sites: &SiteSet, state: &SwarmState) -> ColonizeMetrics {
    let n = sites.len();
    let mut hits = vec![0usize; n];
    let mut totals = vec![0usize; n];
    for (s, p) in state.all_points() {
        totals[s] += 1;
        if nearest_site_label(p, sites).label == s {
            hits[s] += 1;
        }
    }
    let per_source_fraction = hits.iter().zip(&totals).map(|(&h, &t)| h as f64 / t as f64).collect();
    let global_fraction = hits.iter().sum::<usize>() as f64 / totals.iter().sum::<usize>() as f64;
    ColonizeMetrics {
        per_source_fraction,
        global_fraction,
        n_coalitions: state.n_coalitions,
        n_boundary_resets: state.n_boundary_resets,
    }
}

pub struct Colonization {
    pub sites: SiteSet,
    pub state: SwarmState,
    pub metrics: ColonizeMetrics,
}

pub fn run_colonization(params: &SimParams) -> Result<Colonization> {
    let (sites, mut state, mut index) = init_swarm(params)?;
    for _ in 0..params.iterations {
        step_swarm(&mut state, params, &mut index);
    }
    let metrics = colonize_metrics(&sites, &state);
    Ok(Colonization { sites, state, metrics })
}

/// Label each node by the source of the nearest trajectory point within `2h`.
pub fn render_swarm(state: &SwarmState, g: &GridSpec) -> LabelGrid {
    let radius = 2.0 * state.step;
    let bucket = g.h();
    let key = |p: Point| {
        (
            ((p.x - g.domain.x0) / bucket).floor() as i64,
            ((p.y - g.domain.y0) / bucket).floor() as i64,
        )
    };
    let mut cells: HashMap<(i64, i64), Vec<(Point, u32)>> = HashMap::new();
    for (s, p) in state.all_points() {
        cells.entry(key(p)).or_default().push((p, s as u32));
    }
    let max_ring = (radius / bucket).ceil() as i64 + 1;
    let labels = (0..g.len())
        .map(|idx| {
            let x = g.point(idx);
            let (kx, ky) = key(x);
            let mut best: Option<(f64, u32)> = None;
            for r in 0..=max_ring {
                // every point in ring r is at least (r - 1) buckets away
                let lower = (r - 1).max(0) as f64 * bucket;
                if lower > radius || best.is_some_and(|(d, _)| lower > d) {
                    break;
                }
                for dx in -r..=r {
                    for dy in -r..=r {
                        if dx.abs() != r && dy.abs() != r {
                            continue;
                        }
                        let Some(pts) = cells.get(&(kx + dx, ky + dy)) else {
                            continue;
                        };
                        for &(q, s) in pts {
                            let d = (q - x).norm();
                            if d <= radius && best.is_none_or(|(bd, bs)| d < bd || (d == bd && s < bs)) {
                                best = Some((d, s));
                            }
                        }
                    }
                }
            }
            best.map_or(UNASSIGNED, |(_, s)| s)
        })
        .collect();
    LabelGrid {
        spec: *g,
        labels,
        gaps: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n_sources: usize, m: usize, iterations: usize, seed: u64) -> SimParams {
        SimParams {
            n_sources,
            particles_per_source: m,
            iterations,
            seed,
            ..SimParams::default()
        }
    }

    #[test]
    fn init_places_everyone_at_home() {
        let p = small(4, 100, 10, 7);
        let (sites, state, index) = init_swarm(&p).unwrap();
        assert_eq!(state.n_particles(), 400);
        assert_eq!(index.len(), 400);
        for q in 0..400 {
            assert_eq!(state.position(q), sites.site(q / 100));
        }
        let (again, _, _) = init_swarm(&p).unwrap();
        assert_eq!(sites, again);
        let (other, _, _) = init_swarm(&small(4, 100, 10, 8)).unwrap();
        assert_ne!(sites, other);
    }

    #[test]
    fn lone_source_never_coalesces() {
        let p = small(1, 20, 100, 3);
        let run = run_colonization(&p).unwrap();
        assert_eq!(run.metrics.n_coalitions, 0);
        assert!(run.metrics.n_boundary_resets > 0 || run.state.iteration() == 100);
        assert_eq!(run.metrics.global_fraction, 1.0);
    }

    #[test]
    fn wall_crossing_sends_particle_home() {
        let p = SimParams {
            n_sources: 1,
            particles_per_source: 1,
            step: 10.0,
            ..small(1, 1, 1, 11)
        };
        let (_, mut state, mut index) = init_swarm(&p).unwrap();
        // a step of std 10 from inside [0,2]^2 essentially always leaves the box
        let out = step_swarm(&mut state, &p, &mut index);
        if out[0] == StepOutcome::BoundaryReset {
            assert_eq!(state.position(0), state.home(0));
        }
        let mut resets = 0;
        for _ in 0..50 {
            if step_swarm(&mut state, &p, &mut index)[0] == StepOutcome::BoundaryReset {
                resets += 1;
                assert_eq!(state.position(0), state.home(0));
            }
        }
        assert!(resets > 40);
    }

    #[test]
    fn history_grows_by_population_each_step() {
        let p = small(3, 5, 20, 1);
        let (_, mut state, mut index) = init_swarm(&p).unwrap();
        for t in 1..=20 {
            step_swarm(&mut state, &p, &mut index);
            assert_eq!(index.len(), 15 * (t + 1));
            for q in 0..15 {
                assert_eq!(state.trajectory(q).count(), t + 1);
                assert!(p.domain.contains_closed(state.position(q)));
            }
        }
    }

    #[test]
    fn no_coalition_during_warmup() {
        let p = SimParams {
            warmup: 1000,
            epsilon: 0.5,
            ..small(2, 10, 30, 2)
        };
        let run = run_colonization(&p).unwrap();
        assert_eq!(run.metrics.n_coalitions, 0);
    }

    #[test]
    fn render_without_motion_marks_only_sources() {
        let p = small(2, 3, 0, 5);
        let run = run_colonization(&p).unwrap();
        let g = GridSpec::square(64, p.domain).unwrap();
        let lg = render_swarm(&run.state, &g);
        for idx in 0..g.len() {
            let x = g.point(idx);
            let near: Vec<f64> = run.sites.sites().iter().map(|&s| (s - x).norm()).collect();
            let inside = near.iter().any(|&d| d <= 0.2);
            assert_eq!(lg.labels[idx] != UNASSIGNED, inside);
        }
        assert_eq!(run.metrics.global_fraction, 1.0);
    }
}

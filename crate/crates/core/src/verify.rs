//! The acceptance suite as a library: nine criteria, each a list of named
//! assertions with the measured value and the tolerance it was held to.
//!
//! Instances come from fixed seeds, so every number printed by
//! `pde-voronoi verify` is reproducible. Each criterion also carries its own
//! wall-clock budget as an assertion.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::colonize::{init_swarm, run_colonization, step_swarm, step_swarm_exhaustive, SimParams};
use crate::config::{Experiment, ExperimentConfig};
use crate::eikonal::{extract_singular_set, fast_march, max_distance_error, per_source_distance_stack};
use crate::error::Result;
use crate::geom::{
    boundary_nodes, hausdorff_nodes, mismatch_fraction, random_site_set, rasterize_tessellation, GridSpec, Mode, Point,
    Rect, SiteSet,
};
use crate::harmonic::{harmonic_tessellation, log_superposition_field, PerforatedProblem};
use crate::heat::{
    dominant_kernel_label, empirical_t, field_mass, gap_function_phi, heat_field, padded_grid, path_minimum_probe,
    radial_monotonicity_probe, ray_fan, torus_semigroup_defect, HeatConfig, ProbeVerdict,
};
use crate::runner::run_experiment;
use crate::transport::{brenier_residual, transport_report, TransportConfig};

/// One checked quantity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl Assertion {
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            pass: value <= tolerance,
            value,
            tolerance,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            pass: value >= tolerance,
            value,
            tolerance,
        }
    }

    /// A boolean check, recorded as value 1 (held) or 0 against tolerance 1.
    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            pass: ok,
            value: if ok { 1.0 } else { 0.0 },
            tolerance: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub id: usize,
    pub title: &'static str,
    pub assertions: Vec<Assertion>,
    /// Reported quantities that carry no pass/fail verdict.
    pub notes: Vec<String>,
    pub seconds: f64,
    /// Set when the criterion could not be evaluated at all.
    pub error: Option<String>,
}

impl CriterionReport {
    pub fn pass(&self) -> bool {
        self.error.is_none() && self.assertions.iter().all(|a| a.pass)
    }

    pub fn assertion(&self, name: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.name == name)
    }
}

struct Body {
    assertions: Vec<Assertion>,
    notes: Vec<String>,
}

impl Body {
    fn new() -> Self {
        Self {
            assertions: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn push(&mut self, a: Assertion) {
        self.assertions.push(a);
    }
}

fn timed(id: usize, title: &'static str, budget: f64, f: impl FnOnce() -> Result<Body>) -> CriterionReport {
    let start = Instant::now();
    let outcome = f();
    let seconds = start.elapsed().as_secs_f64();
    let (mut assertions, notes, error) = match outcome {
        Ok(b) => (b.assertions, b.notes, None),
        Err(e) => (Vec::new(), Vec::new(), Some(e.to_string())),
    };
    assertions.push(Assertion::at_most("runtime_s", seconds, budget));
    CriterionReport {
        id,
        title,
        assertions,
        notes,
        seconds,
        error,
    }
}

const SIDE: f64 = 2.0;
const MARGIN: f64 = 0.2;
const SEPARATION: f64 = 0.5;
const FAMILY_SIZES: [usize; 5] = [3, 4, 5, 3, 4];

/// Criterion 1 instances: `N = 2 + k mod 5`.
pub fn oracle_instance(k: usize) -> Result<SiteSet> {
    random_site_set(2 + k % 5, Rect::square(SIDE), MARGIN, SEPARATION, 100 + k as u64)
}

/// The five plane instances of the heat criteria.
pub fn heat_instance(k: usize) -> Result<SiteSet> {
    random_site_set(FAMILY_SIZES[k], Rect::square(SIDE), MARGIN, SEPARATION, 300 + k as u64)
}

pub fn eikonal_instance(k: usize) -> Result<SiteSet> {
    random_site_set(5, Rect::square(SIDE), MARGIN, SEPARATION, 600 + k as u64)
}

pub fn transport_instance(k: usize) -> Result<SiteSet> {
    random_site_set(FAMILY_SIZES[k], Rect::square(SIDE), MARGIN, SEPARATION, 700 + k as u64)
}

/// Weights on a 1/1024 lattice, so shifting them by another lattice value is exact.
fn dyadic_weights(n: usize, k: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (((i * 37 + k * 11) % 97) as f64 - 48.0) / 1024.0)
        .collect()
}

pub fn criterion_1() -> CriterionReport {
    timed(1, "oracle identity", 5.0, || {
        let mut equal_mismatch = 0usize;
        let mut shift_mismatch = 0usize;
        for k in 0..20 {
            let s = oracle_instance(k)?;
            let g = GridSpec::square(256, s.domain())?;
            let vor = rasterize_tessellation(&s, &g, Mode::Voronoi);
            let level = 0.3 + 0.01 * k as f64;
            let eq = s.clone().with_weights(vec![level; s.len()])?;
            let pow = rasterize_tessellation(&eq, &g, Mode::Power);
            equal_mismatch += vor.labels.iter().zip(&pow.labels).filter(|(a, b)| a != b).count();

            let w = dyadic_weights(s.len(), k);
            let shift = (k as f64 - 7.0) * 0.125;
            let base = rasterize_tessellation(&s.clone().with_weights(w.clone())?, &g, Mode::Power);
            let moved = s.clone().with_weights(w.iter().map(|v| v + shift).collect())?;
            let moved = rasterize_tessellation(&moved, &g, Mode::Power);
            shift_mismatch += base.labels.iter().zip(&moved.labels).filter(|(a, b)| a != b).count();
        }
        let mut b = Body::new();
        b.push(Assertion::at_most(
            "equal_weight_mismatched_nodes",
            equal_mismatch as f64,
            0.0,
        ));
        b.push(Assertion::at_most(
            "weight_shift_mismatched_nodes",
            shift_mismatch as f64,
            0.0,
        ));
        Ok(b)
    })
}

const HEAT_T: f64 = 1e-3;
const DELTA: f64 = 0.02;
const EPSILON: f64 = 0.05;
const RAYS: usize = 64;
const DS: f64 = 0.005;

pub fn criterion_2() -> CriterionReport {
    timed(2, "heat monotonicity", 30.0, || {
        let thetas = ray_fan(RAYS);
        let mut violations = 0usize;
        let mut empty = 0usize;
        let mut min_t = f64::INFINITY;
        let mut worst_eps_ratio = f64::INFINITY;
        let mut worst_delta_ratio = f64::INFINITY;
        let mut b = Body::new();
        for k in 0..5 {
            let cfg = HeatConfig::equal(heat_instance(k)?, HEAT_T)?;
            let all: Vec<usize> = (0..cfg.sites.len()).collect();
            for &i in &all {
                for &th in &thetas {
                    match radial_monotonicity_probe(&cfg, i, th, DELTA, EPSILON, DS)?.verdict {
                        ProbeVerdict::Violated => violations += 1,
                        ProbeVerdict::EmptyRange => empty += 1,
                        ProbeVerdict::Decreasing => {}
                    }
                }
            }
            let base = empirical_t(&cfg, &all, &thetas, DELTA, EPSILON, DS)?;
            let wide_eps = empirical_t(&cfg, &all, &thetas, DELTA, 2.0 * EPSILON, DS)?;
            let wide_delta = empirical_t(&cfg, &all, &thetas, 2.0 * DELTA, EPSILON, DS)?;
            b.notes.push(format!(
                "instance {k}: empirical T {:.4e}, doubled epsilon {:.4e}, doubled delta {:.4e}",
                base.t, wide_eps.t, wide_delta.t
            ));
            min_t = min_t.min(if base.none_passed { 0.0 } else { base.t });
            worst_eps_ratio = worst_eps_ratio.min(wide_eps.t / base.t);
            worst_delta_ratio = worst_delta_ratio.min(wide_delta.t / base.t);
        }
        b.notes.push(format!("{empty} rays had an empty admissible range"));
        let step = 1.0 / 1.001;
        b.push(Assertion::at_most("monotonicity_violations", violations as f64, 0.0));
        b.push(Assertion::at_least("min_empirical_t", min_t, 1e-4));
        b.push(Assertion::at_least(
            "empirical_t_ratio_doubled_epsilon",
            worst_eps_ratio,
            step,
        ));
        b.push(Assertion::at_least(
            "empirical_t_ratio_doubled_delta",
            worst_delta_ratio,
            step,
        ));
        Ok(b)
    })
}

pub fn criterion_3() -> CriterionReport {
    timed(3, "heat path minima", 30.0, || {
        let mut worst: f64 = 0.0;
        let mut segments = 0usize;
        for k in 0..5 {
            let cfg = HeatConfig::equal(heat_instance(k)?, HEAT_T)?;
            let n = cfg.sites.len();
            for i in 0..n {
                for j in i + 1..n {
                    worst = worst.max(path_minimum_probe(&cfg, i, j, 4000)?.boundary_distance);
                    segments += 1;
                }
            }
        }
        let mut b = Body::new();
        b.notes.push(format!("{segments} segments probed"));
        b.push(Assertion::at_most("max_minimum_boundary_distance", worst, EPSILON));
        Ok(b)
    })
}

pub fn criterion_4() -> CriterionReport {
    timed(4, "kernel identities", 30.0, || {
        let s = heat_instance(0)?;
        let g = GridSpec::square(256, s.domain())?;
        let vor = rasterize_tessellation(&s, &g, Mode::Voronoi);
        let mut b = Body::new();
        for t in [1e-4, 1e-2, 1.0] {
            let cfg = HeatConfig::equal(s.clone(), t)?;
            let lg = dominant_kernel_label(&cfg, &g);
            let diff = lg.labels.iter().zip(&vor.labels).filter(|(a, c)| a != c).count();
            b.push(Assertion::at_most(
                format!("dominant_label_mismatch_t{t:e}"),
                diff as f64,
                0.0,
            ));

            let masses: Vec<f64> = (0..s.len()).map(|i| 0.5 + 0.25 * i as f64).collect();
            let total: f64 = masses.iter().sum();
            let cfg = HeatConfig::new(s.clone(), masses, t)?;
            let pg = padded_grid(&s, 10.0 * t.sqrt(), t.sqrt() / 10.0)?;
            let mass = field_mass(&heat_field(&cfg, &pg));
            b.push(Assertion::at_most(
                format!("mass_relative_error_t{t:e}"),
                (mass - total).abs() / total,
                1e-4,
            ));
        }
        let defect = torus_semigroup_defect(Point::new(0.2, 0.3), Point::new(0.7, 0.6), 0.01, 0.01, 1.0, 128)?;
        b.push(Assertion::at_most("torus_semigroup_relative_error", defect, 1e-3));
        Ok(b)
    })
}

pub fn criterion_5() -> CriterionReport {
    timed(5, "gap function", 30.0, || {
        let eps = [0.05, 0.1, 0.2];
        let mut min_phi = f64::INFINITY;
        let mut decreases = 0usize;
        let mut b = Body::new();
        for k in 0..3 {
            let s = heat_instance(k)?;
            let g = GridSpec::square(256, s.domain())?;
            for i in 0..s.len() {
                let phis: Vec<f64> = eps
                    .iter()
                    .map(|&e| gap_function_phi(&s, i, e, &g).map_or(0.0, |p| p.phi))
                    .collect();
                min_phi = min_phi.min(phis.iter().copied().fold(f64::INFINITY, f64::min));
                decreases += phis.windows(2).filter(|w| w[1] < w[0]).count();
            }
        }
        b.push(Assertion::at_least("min_phi", min_phi, f64::MIN_POSITIVE));
        b.push(Assertion::at_most("phi_decreases", decreases as f64, 0.0));
        Ok(b)
    })
}

pub fn criterion_6() -> CriterionReport {
    timed(6, "eikonal", 20.0, || {
        let dom = Rect::square(SIDE);
        let mut b = Body::new();
        let mut worst_err_h: f64 = 0.0;
        let mut worst_ratio = f64::INFINITY;
        for p in [
            Point::new(0.713, 0.871),
            Point::new(1.2345, 0.4321),
            Point::new(0.5012, 1.6187),
        ] {
            let s = SiteSet::new(vec![p], dom)?;
            let fine = GridSpec::square(256, dom)?;
            let coarse = GridSpec::square(128, dom)?;
            let e_fine = max_distance_error(&fast_march(&s, &fine)?, &s);
            let e_coarse = max_distance_error(&fast_march(&s, &coarse)?, &s);
            worst_err_h = worst_err_h.max(e_fine / fine.h());
            worst_ratio = worst_ratio.min(e_coarse / e_fine);
        }
        b.push(Assertion::at_most("single_source_error_in_h", worst_err_h, 2.0));
        b.push(Assertion::at_least("refinement_error_ratio", worst_ratio, 1.5));

        let mut mismatch: f64 = 0.0;
        let mut hausdorff_h: f64 = 0.0;
        let mut hausdorff_2h: f64 = 0.0;
        for k in 0..10 {
            let s = eikonal_instance(k)?;
            let g = GridSpec::square(256, s.domain())?;
            let h = g.h();
            let oracle = rasterize_tessellation(&s, &g, Mode::Voronoi);
            let field = fast_march(&s, &g)?;
            mismatch = mismatch.max(mismatch_fraction(
                &field.label_grid(),
                &oracle,
                2.0 * std::f64::consts::SQRT_2 * h,
            )?);
            let stack = per_source_distance_stack(&s, &g)?;
            let edges = boundary_nodes(&oracle);
            let sing = extract_singular_set(&stack, h).nodes;
            hausdorff_h = hausdorff_h.max(hausdorff_nodes(&g, &sing, &edges) / h);
            let wide = extract_singular_set(&stack, 2.0 * h).nodes;
            hausdorff_2h = hausdorff_2h.max(hausdorff_nodes(&g, &wide, &edges) / h);
        }
        b.push(Assertion::at_most("label_mismatch_outside_band", mismatch, 0.0));
        b.push(Assertion::at_most("singular_set_hausdorff_in_h", hausdorff_h, 3.0));
        b.notes.push(format!(
            "with a 2h arrival band the Hausdorff distance is {hausdorff_2h:.2}h"
        ));
        Ok(b)
    })
}

pub fn criterion_7() -> CriterionReport {
    timed(7, "transport", 60.0, || {
        let mut b = Body::new();
        let mut violations = 0usize;
        let mut sigma_failures = 0usize;
        let mut max_z: f64 = 0.0;
        let mut residual: f64 = 0.0;
        let mut not_decreasing = 0usize;
        let mut hess: f64 = 0.0;
        let mut min_checked = usize::MAX;
        let mut jump: f64 = 0.0;
        let mut identity: f64 = 0.0;
        let mut ot: f64 = 0.0;
        let mut convexity_failures = 0usize;
        for k in 0..5 {
            let s = transport_instance(k)?;
            let n = s.len();
            for lambda in [0.25, 0.5, 0.9] {
                let fine = GridSpec::square(512, s.domain())?;
                let cfg = TransportConfig::new(s.clone(), lambda, fine)?
                    .with_samples(100_000)
                    .with_seed(k as u64);
                let atoms = if n == 3 { 400 } else { 0 };
                let r = transport_report(&cfg, atoms)?;
                violations += r.pushforward.violations.len();
                for c in &r.pushforward.cells {
                    sigma_failures += usize::from(!c.within_4_sigma);
                    if c.sigma > 0.0 {
                        max_z = max_z.max((c.observed_share - c.expected_share).abs() / c.sigma);
                    }
                }
                let coarse = brenier_residual(&cfg, &GridSpec::square(256, s.domain())?);
                for (f, c) in r.brenier_residuals.iter().zip(&coarse) {
                    residual = residual.max(f.residual);
                    let floor = f.residual < 1e-12 && c.residual < 1e-12;
                    not_decreasing += usize::from(!(floor || f.residual < c.residual));
                }
                hess = hess.max(r.hessian.max_det_error);
                min_checked = min_checked.min(r.hessian.checked);
                for j in &r.jumps {
                    jump = jump.max((j.measured - j.analytic).abs());
                }
                let want = (1.0 - lambda).powi(2) * r.cost.cost_zero;
                identity = identity.max((r.cost.cost_lambda - want).abs() / want);
                convexity_failures += r.convexity.failures;
                if let Some(d) = r.discrete_ot {
                    ot = ot.max((d.cost - r.cost.cost_zero).abs() / r.cost.cost_zero);
                }
            }
        }
        b.notes.push(format!("largest per-cell z score {max_z:.2}"));
        b.push(Assertion::at_most("containment_violations", violations as f64, 0.0));
        b.push(Assertion::at_most("cells_outside_4_sigma", sigma_failures as f64, 0.0));
        b.push(Assertion::at_most("max_brenier_residual", residual, 5e-3));
        b.push(Assertion::at_most(
            "residuals_not_decreasing_under_refinement",
            not_decreasing as f64,
            0.0,
        ));
        b.push(Assertion::at_most("max_hessian_det_error", hess, 1e-6));
        b.push(Assertion::at_least("hessian_points_checked", min_checked as f64, 100.0));
        b.push(Assertion::at_most("max_gradient_jump_error", jump, 1e-4));
        b.push(Assertion::at_most("cost_identity_relative_error", identity, 1e-3));
        b.push(Assertion::at_most("discrete_ot_relative_gap", ot, 0.05));
        b.push(Assertion::at_most("convexity_failures", convexity_failures as f64, 0.0));
        Ok(b)
    })
}

/// Calibrated by a pilot run over seeds 0 to 5, which stayed above 0.97.
pub const COLONIZE_MIN_FRACTION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Lockstep {
    pub disagreements: usize,
    /// Coalition resets seen along the way, so a zero above is not vacuous.
    pub coalitions: usize,
}

/// Steps the indexed and the exhaustive coalition searches in lockstep and
/// counts particle outcomes (and position sets) that differ.
pub fn coalition_lockstep(params: &SimParams) -> Result<Lockstep> {
    let (_, mut fast, mut fast_index) = init_swarm(params)?;
    let (mut slow, mut slow_index) = (fast.clone(), fast_index.clone());
    let mut disagreements = 0;
    for _ in 0..params.iterations {
        let a = step_swarm(&mut fast, params, &mut fast_index);
        let b = step_swarm_exhaustive(&mut slow, params, &mut slow_index);
        disagreements += a.iter().zip(&b).filter(|(x, y)| x != y).count();
        if fast.positions() != slow.positions() {
            disagreements += 1;
        }
    }
    Ok(Lockstep {
        disagreements,
        coalitions: fast.n_coalitions,
    })
}

fn manifest_bytes(dir: &std::path::Path) -> Result<Vec<u8>> {
    let cfg = ExperimentConfig::resolve(Experiment::Colonize, &[("out".to_string(), dir.display().to_string())])?;
    run_experiment(&cfg)?;
    Ok(std::fs::read(dir.join("manifest.json"))?)
}

pub fn criterion_8() -> CriterionReport {
    timed(8, "colonization", 60.0, || {
        let mut b = Body::new();
        let run = run_colonization(&SimParams::default())?;
        b.push(Assertion::at_least(
            "global_correct_fraction",
            run.metrics.global_fraction,
            COLONIZE_MIN_FRACTION,
        ));
        b.notes.push(format!(
            "{} coalitions and {} boundary resets",
            run.metrics.n_coalitions, run.metrics.n_boundary_resets
        ));
        let small = SimParams {
            n_sources: 2,
            particles_per_source: 10,
            iterations: 50,
            // Wide enough that coalitions actually happen in 50 steps.
            epsilon: 0.05,
            ..SimParams::default()
        };
        let lock = coalition_lockstep(&small)?;
        b.push(Assertion::at_most(
            "coalition_disagreements",
            lock.disagreements as f64,
            0.0,
        ));
        b.push(Assertion::at_least("lockstep_coalitions", lock.coalitions as f64, 1.0));
        let root = std::env::temp_dir().join(format!("pde-voronoi-verify-{}", std::process::id()));
        let first = manifest_bytes(&root.join("a"));
        let second = manifest_bytes(&root.join("b"));
        let _ = std::fs::remove_dir_all(&root);
        b.push(Assertion::holds("identical_manifests", first? == second?));
        Ok(b)
    })
}

pub fn criterion_9() -> CriterionReport {
    timed(9, "harmonic", 30.0, || {
        let mut b = Body::new();
        let tol = 1e-8;
        let cases = [
            ("single_disk", vec![Point::new(0.0, 0.0)]),
            ("two_disks", vec![Point::new(-0.5, 0.0), Point::new(0.5, 0.0)]),
        ];
        for (name, pts) in cases {
            let p = PerforatedProblem::in_box(pts, 0.1, 256, 4.0)?.with_tol(tol)?;
            let t = harmonic_tessellation(&p)?;
            b.push(Assertion::holds(
                format!("{name}_maximum_principle"),
                t.report.maximum_principle,
            ));
            b.push(Assertion::at_most(format!("{name}_residual"), t.report.residual, tol));
        }
        let three = vec![Point::new(-0.5, -0.3), Point::new(0.6, -0.2), Point::new(0.0, 0.6)];
        let t = harmonic_tessellation(&PerforatedProblem::in_box(three, 0.1, 256, 4.0)?.with_tol(tol)?)?;
        b.push(Assertion::at_most(
            "three_disk_unassigned_fraction",
            t.report.unassigned_fraction,
            0.01,
        ));
        b.notes.push(format!(
            "three disks: mismatch vs Voronoi {:.4}, {} sweeps, {} sweeps with a larger update than the previous",
            t.report.mismatch_vs_voronoi, t.report.solver_iterations, t.report.residual_increases
        ));

        // Nodes land exactly at radius 1 and radius e from a site at the origin.
        let e = std::f64::consts::E;
        let mut closed = 0.0f64;
        for (r, want) in [(1.0, 0.0), (e, 1.0 / (2.0 * std::f64::consts::PI))] {
            let dom = Rect::new(-1.5 * r, 1.5 * r, -1.5 * r, 1.5 * r)?;
            let s = SiteSet::new(vec![Point::new(0.0, 0.0)], dom)?;
            let g = GridSpec::square(3, dom)?;
            let f = log_superposition_field(&s, &g)?;
            closed = closed.max((f.field.value(2, 1) - want).abs());
        }
        b.push(Assertion::at_most("log_superposition_closed_form_error", closed, 1e-12));
        Ok(b)
    })
}

/// Every criterion in order.
pub fn run_all() -> Vec<CriterionReport> {
    vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
        criterion_9(),
    ]
}

/// Fixed-width pass/fail table, one block per criterion.
pub fn render_table(reports: &[CriterionReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let verdict = if r.pass() { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "[{verdict}] criterion {} ({}) {:.2}s", r.id, r.title, r.seconds);
        if let Some(e) = &r.error {
            let _ = writeln!(out, "       error: {e}");
        }
        for a in &r.assertions {
            let mark = if a.pass { "ok " } else { "BAD" };
            let _ = writeln!(
                out,
                "       {mark} {:<44} {:>12.4e}  tol {:.4e}",
                a.name, a.value, a.tolerance
            );
        }
        for n in &r.notes {
            let _ = writeln!(out, "       note: {n}");
        }
    }
    let passed = reports.iter().filter(|r| r.pass()).count();
    let _ = writeln!(out, "{passed}/{} criteria passed", reports.len());
    out
}

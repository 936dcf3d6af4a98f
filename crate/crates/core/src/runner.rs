//! One experiment per invocation: build the instance from a config, run the
//! owning module, write artifacts and a manifest that hashes every file.
//!
//! The manifest carries no timings or paths, so two runs of the same config
//! produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use crate::colonize::{render_swarm, run_colonization, SimParams};
use crate::config::{Experiment, ExperimentConfig, OUT_ENV};
use crate::eikonal::{
    extract_singular_set, fast_march_with, front_snapshots, max_distance_error, per_source_distance_stack_with,
    SourceInit,
};
use crate::error::{Error, Result};
use crate::geom::{
    boundary_nodes, hausdorff_nodes, mismatch_fraction, random_site_set, rasterize_tessellation, GridSpec, Mode, Rect,
    SiteSet, Topology,
};
use crate::harmonic::{harmonic_tessellation, log_superposition_field, truncation_box, PerforatedProblem};
use crate::heat::{
    dominant_kernel_label, heat_field, path_minimum_probe, radial_monotonicity_probe, ray_fan, require_cutlocus_free,
    HeatConfig, ProbeVerdict,
};
use crate::io::{label_ppm, mask_pgm, ArtifactWriter, FileEntry};
use crate::transport::{pushforward_samples, transport_report, TransportConfig};
use crate::verify::Assertion;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub experiment: Experiment,
    pub config_echo: BTreeMap<String, String>,
    pub files: Vec<FileEntry>,
    pub assertions: Vec<Assertion>,
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn pass(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    /// 0 when every assertion held, 2 otherwise. Errors never reach a manifest and map to 1.
    pub fn exit_code(&self) -> i32 {
        if self.pass() {
            0
        } else {
            2
        }
    }
}

/// `out`, else `$PDE_VORONOI_OUT/<experiment>`, else `pde-voronoi-out/<experiment>`.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = &cfg.out {
        return dir.clone();
    }
    let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("pde-voronoi-out"), PathBuf::from);
    root.join(cfg.experiment.name())
}

struct Run {
    out: ArtifactWriter,
    assertions: Vec<Assertion>,
    notes: Vec<String>,
}

/// Runs the experiment and writes `manifest.json` last.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Manifest> {
    let mut run = Run {
        out: ArtifactWriter::create(output_dir(cfg))?,
        assertions: Vec::new(),
        notes: Vec::new(),
    };
    match cfg.experiment {
        Experiment::Voronoi => voronoi(cfg, &mut run)?,
        Experiment::Colonize => colonize(cfg, &mut run)?,
        Experiment::Heat => heat(cfg, &mut run)?,
        Experiment::Eikonal => eikonal(cfg, &mut run)?,
        Experiment::Transport => transport(cfg, &mut run)?,
        Experiment::Harmonic => harmonic(cfg, &mut run)?,
    }
    let dir = run.out.dir().to_path_buf();
    let manifest = Manifest {
        experiment: cfg.experiment,
        config_echo: cfg.echo().clone(),
        files: run.out.into_files(),
        assertions: run.assertions,
        notes: run.notes,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    std::fs::write(dir.join("manifest.json"), bytes)?;
    Ok(manifest)
}

fn voronoi(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let s = cfg.site_set()?;
    let mode = cfg.mode()?;
    let g = GridSpec::square(cfg.grid(), s.domain())?;
    let lg = rasterize_tessellation(&s, &g, mode);
    run.out.write_labels("labels", &lg, s.len(), s.topology())?;
    run.out.write("labels.ppm", &label_ppm(&lg))?;
    let counts = lg.counts(s.len());
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        run.notes.push(format!("cell {i} holds no grid node"));
    }
    run.out.write_json(
        "report.json",
        &serde_json::json!({ "mode": mode, "node_counts": counts }),
    )?;
    run.assertions
        .push(Assertion::at_most("unassigned_fraction", lg.unassigned_fraction(), 0.0));
    Ok(())
}

fn colonize(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    if !cfg.raw("sites").is_empty() || !cfg.raw("weights").is_empty() {
        return Err(Error::Config(
            "key `sites`: colonize draws its own sources from `seed`".into(),
        ));
    }
    let params = SimParams {
        n_sources: cfg.get("sources")?,
        particles_per_source: cfg.get("particles")?,
        iterations: cfg.get("iterations")?,
        step: cfg.get("step")?,
        epsilon: cfg.get("epsilon")?,
        warmup: cfg.get("warmup")?,
        domain: cfg.domain()?,
        seed: cfg.seed(),
    };
    let c = run_colonization(&params)?;
    let g = GridSpec::square(cfg.grid(), params.domain)?;
    let mut csv = String::from("source,particle,iteration,x,y\n");
    for (s, p, t, pt) in c.state.rows() {
        let _ = writeln!(csv, "{s},{p},{t},{},{}", pt.x, pt.y);
    }
    run.out.write("trajectories.csv", csv.as_bytes())?;
    let swarm = render_swarm(&c.state, &g);
    run.out.write_labels("swarm", &swarm, c.sites.len(), Topology::Plane)?;
    run.out.write("swarm.ppm", &label_ppm(&swarm))?;
    run.out.write(
        "oracle.ppm",
        &label_ppm(&rasterize_tessellation(&c.sites, &g, Mode::Voronoi)),
    )?;
    run.out.write_json(
        "report.json",
        &serde_json::json!({ "sources": c.sites.sites(), "metrics": c.metrics }),
    )?;
    run.assertions.push(Assertion::at_least(
        "global_correct_fraction",
        c.metrics.global_fraction,
        cfg.get("min_fraction")?,
    ));
    Ok(())
}

fn heat_sites(cfg: &ExperimentConfig) -> Result<SiteSet> {
    match cfg.raw("topology") {
        "torus" => {
            let period: f64 = cfg.get("period")?;
            let pts = if cfg.raw("sites").is_empty() {
                let sep = cfg.get::<f64>("min_separation")?.min(0.3 * period);
                random_site_set(cfg.get("sources")?, Rect::square(period), 0.0, sep, cfg.seed())?
                    .sites()
                    .to_vec()
            } else {
                cfg.site_set()?.sites().to_vec()
            };
            SiteSet::torus(pts, period)
        }
        _ => cfg.site_set(),
    }
}

fn heat(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let s = heat_sites(cfg)?;
    let g = GridSpec::square(cfg.grid(), s.domain())?;
    if s.topology() != Topology::Plane {
        require_cutlocus_free(&s, &g)?;
    }
    let masses = match cfg.list("masses")? {
        m if m.is_empty() => vec![1.0; s.len()],
        m => m,
    };
    let hc = HeatConfig::new(s.clone(), masses, cfg.get("t")?)?;
    let (delta, epsilon, ds): (f64, f64, f64) = (cfg.get("delta")?, cfg.get("epsilon")?, cfg.get("ds")?);
    run.out
        .write_scalar("field", &heat_field(&hc, &g), s.len(), s.topology())?;
    run.out
        .write_labels("dominant", &dominant_kernel_label(&hc, &g), s.len(), s.topology())?;

    let mut csv = String::from("site,theta,s,log_u\n");
    let (mut violations, mut empty) = (0usize, 0usize);
    for i in 0..s.len() {
        for th in ray_fan(cfg.get("rays")?) {
            let probe = radial_monotonicity_probe(&hc, i, th, delta, epsilon, ds)?;
            match probe.verdict {
                ProbeVerdict::Violated => violations += 1,
                ProbeVerdict::EmptyRange => empty += 1,
                ProbeVerdict::Decreasing => {}
            }
            for smp in &probe.samples {
                let _ = writeln!(csv, "{i},{th},{},{}", smp.s, smp.log_u);
            }
        }
    }
    run.out.write("rays.csv", csv.as_bytes())?;
    if empty > 0 {
        run.notes.push(format!("{empty} rays have an empty admissible range"));
    }
    let mut worst: f64 = 0.0;
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            worst = worst.max(path_minimum_probe(&hc, i, j, 4000)?.boundary_distance);
        }
    }
    run.assertions
        .push(Assertion::at_most("monotonicity_violations", violations as f64, 0.0));
    if s.len() > 1 {
        run.assertions
            .push(Assertion::at_most("max_path_minimum_boundary_distance", worst, epsilon));
    }
    Ok(())
}

fn eikonal(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let s = cfg.site_set()?;
    let g = GridSpec::square(cfg.grid(), s.domain())?;
    let h = g.h();
    let init = match cfg.raw("init") {
        "snap" => SourceInit::Snap,
        _ => SourceInit::Exact {
            radius: cfg.get("init_radius")?,
        },
    };
    let field = fast_march_with(&s, &g, init)?;
    let stack = per_source_distance_stack_with(&s, &g, init)?;
    let tau = cfg.get::<f64>("tau")? * h;
    let singular = extract_singular_set(&stack, tau);
    let oracle = rasterize_tessellation(&s, &g, Mode::Voronoi);
    let labels = field.label_grid();
    run.out
        .write_scalar("arrival", &field.time_field(), s.len(), s.topology())?;
    run.out.write_labels("labels", &labels, s.len(), s.topology())?;
    run.out.write("labels.ppm", &label_ppm(&labels))?;
    run.out.write("singular.pgm", &mask_pgm(&g, &singular.nodes))?;
    let t_max = field
        .times
        .iter()
        .copied()
        .filter(|t| t.is_finite())
        .fold(0.0, f64::max);
    let k: usize = cfg.get("snapshots")?;
    let times: Vec<f64> = (1..=k).map(|j| t_max * j as f64 / k as f64).collect();
    for (j, snap) in front_snapshots(&stack, &times).iter().enumerate() {
        run.out.write(&format!("front_{j}.ppm"), &label_ppm(snap))?;
    }
    let mismatch = mismatch_fraction(&labels, &oracle, 2.0 * std::f64::consts::SQRT_2 * h)?;
    let hausdorff = hausdorff_nodes(&g, &singular.nodes, &boundary_nodes(&oracle));
    let err = max_distance_error(&field, &s);
    run.out.write_json(
        "report.json",
        &serde_json::json!({
            "h": h,
            "tau": tau,
            "max_distance_error": err,
            "label_mismatch": mismatch,
            "singular_hausdorff": hausdorff,
            "singular_nodes": singular.nodes.len(),
            "snapshot_times": times,
        }),
    )?;
    run.notes.push(format!("max |T - d| is {:.3}h", err / h));
    run.assertions
        .push(Assertion::at_most("label_mismatch_outside_band", mismatch, 0.0));
    if s.len() > 1 {
        run.assertions
            .push(Assertion::at_most("singular_set_hausdorff_in_h", hausdorff / h, 3.0));
    }
    Ok(())
}

fn transport(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let s = cfg.site_set()?;
    let g = GridSpec::square(cfg.grid(), s.domain())?;
    let tc = TransportConfig::new(s.clone(), cfg.get("lambda")?, g)?
        .with_samples(cfg.get("samples")?)
        .with_seed(cfg.seed());
    let r = transport_report(&tc, cfg.get("atoms")?)?;
    run.out.write_json("report.json", &r)?;
    let cells = rasterize_tessellation(&s, &g, Mode::Power);
    run.out.write_labels("cells", &cells, s.len(), s.topology())?;
    let mut csv = String::from("x1,x2,label,on_boundary,y1,y2\n");
    for m in pushforward_samples(&tc) {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            m.x.x,
            m.x.y,
            m.label,
            u8::from(m.on_boundary),
            m.y.x,
            m.y.y
        );
    }
    run.out.write("samples.csv", csv.as_bytes())?;

    let a = &mut run.assertions;
    a.push(Assertion::at_most(
        "containment_violations",
        r.pushforward.violations.len() as f64,
        0.0,
    ));
    let outside = r.pushforward.cells.iter().filter(|c| !c.within_4_sigma).count();
    a.push(Assertion::at_most("cells_outside_4_sigma", outside as f64, 0.0));
    let residual = r.brenier_residuals.iter().map(|m| m.residual).fold(0.0, f64::max);
    a.push(Assertion::at_most("max_brenier_residual", residual, 5e-3));
    a.push(Assertion::at_most(
        "max_hessian_det_error",
        r.hessian.max_det_error,
        1e-6,
    ));
    let jump = r
        .jumps
        .iter()
        .map(|j| (j.measured - j.analytic).abs())
        .fold(0.0, f64::max);
    a.push(Assertion::at_most("max_gradient_jump_error", jump, 1e-4));
    let lambda = tc.lambda();
    let want = (1.0 - lambda).powi(2) * r.cost.cost_zero;
    a.push(Assertion::at_most(
        "cost_identity_relative_error",
        (r.cost.cost_lambda - want).abs() / want,
        1e-3,
    ));
    if let Some(d) = &r.discrete_ot {
        a.push(Assertion::at_most(
            "discrete_ot_relative_gap",
            (d.cost - r.cost.cost_zero).abs() / r.cost.cost_zero,
            0.05,
        ));
    }
    a.push(Assertion::at_most(
        "convexity_failures",
        r.convexity.failures as f64,
        0.0,
    ));
    Ok(())
}

fn harmonic(cfg: &ExperimentConfig, run: &mut Run) -> Result<()> {
    let points = cfg.site_set()?.sites().to_vec();
    let n = cfg.grid();
    let factor: f64 = cfg.get("box_factor")?;
    let dom = truncation_box(&points, factor)?;
    let h = dom.width() / n as f64;
    let radius = match cfg.raw("radius") {
        "auto" => 2.5 * h,
        _ => cfg.get("radius")?,
    };
    let tol: f64 = cfg.get("tol")?;
    let configure = |p: PerforatedProblem| -> Result<PerforatedProblem> {
        let p = p.with_tol(tol)?.with_max_sweeps(cfg.get("max_sweeps")?);
        match cfg.raw("omega") {
            "optimal" => Ok(p),
            _ => p.with_omega(cfg.get("omega")?),
        }
    };
    let p = configure(PerforatedProblem::new(
        SiteSet::new(points.clone(), dom)?,
        radius,
        GridSpec::square(n, dom)?,
    )?)?;
    let t = harmonic_tessellation(&p)?;

    // Same spacing, half the padding: how much does the truncation move the labels?
    let half_dom = truncation_box(&points, 0.5 * factor)?;
    let half_n = (half_dom.width() / h).round() as usize;
    let half = configure(PerforatedProblem::new(
        SiteSet::new(points.clone(), half_dom)?,
        radius,
        GridSpec::square(half_n, half_dom)?,
    )?)
    .and_then(|q| harmonic_tessellation(&q));

    let log = log_superposition_field(p.sites(), p.grid())?;
    run.out
        .write_scalar("potential", &t.solution.field, points.len(), Topology::Plane)?;
    run.out
        .write_labels("labels", &t.labels, points.len(), Topology::Plane)?;
    run.out.write("labels.ppm", &label_ppm(&t.labels))?;
    run.out
        .write_scalar("log_superposition", &log.field, points.len(), Topology::Plane)?;
    let sensitivity = half.as_ref().ok().map(|q| {
        serde_json::json!({
            "box_factor": 0.5 * factor,
            "unassigned_fraction": q.report.unassigned_fraction,
            "mismatch_vs_voronoi": q.report.mismatch_vs_voronoi,
        })
    });
    run.out.write_json(
        "report.json",
        &serde_json::json!({
            "radius": radius,
            "box": dom,
            "omega": p.omega(),
            "report": t.report,
            "truncation_sensitivity": sensitivity,
        }),
    )?;
    run.notes.push(format!(
        "mismatch vs Voronoi {:.4} (box factor {factor}){}",
        t.report.mismatch_vs_voronoi,
        match &half {
            Ok(q) => format!(", {:.4} at box factor {}", q.report.mismatch_vs_voronoi, 0.5 * factor),
            Err(e) => format!(", sensitivity run failed: {e}"),
        }
    ));
    run.assertions
        .push(Assertion::holds("maximum_principle", t.report.maximum_principle));
    run.assertions
        .push(Assertion::at_most("residual", t.report.residual, tol));
    run.assertions.push(Assertion::at_most(
        "unassigned_fraction",
        t.report.unassigned_fraction,
        0.01,
    ));
    Ok(())
}

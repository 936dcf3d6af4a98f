//! Seeds fully determine artifacts, and the indexed coalition search agrees
//! with the exhaustive scan.

use pde_voronoi::colonize::SimParams;
use pde_voronoi::config::{Experiment, ExperimentConfig};
use pde_voronoi::runner::run_experiment;
use pde_voronoi::verify::coalition_lockstep;

fn manifest_bytes(experiment: Experiment, extra: &[(&str, &str)]) -> Vec<u8> {
    let tmp = tempfile::tempdir().unwrap();
    let mut pairs: Vec<(String, String)> = extra.iter().map(|&(k, v)| (k.into(), v.into())).collect();
    pairs.push(("out".into(), tmp.path().display().to_string()));
    let cfg = ExperimentConfig::resolve(experiment, &pairs).unwrap();
    run_experiment(&cfg).unwrap();
    std::fs::read(tmp.path().join("manifest.json")).unwrap()
}

#[test]
fn colonize_manifests_repeat() {
    let a = manifest_bytes(Experiment::Colonize, &[("seed", "3"), ("iterations", "100")]);
    let b = manifest_bytes(Experiment::Colonize, &[("seed", "3"), ("iterations", "100")]);
    assert_eq!(a, b);
    let c = manifest_bytes(Experiment::Colonize, &[("seed", "4"), ("iterations", "100")]);
    assert_ne!(a, c);
}

#[test]
fn every_experiment_repeats_at_small_scale() {
    for e in Experiment::ALL {
        let extra: &[(&str, &str)] = match e {
            Experiment::Transport => &[("grid", "64"), ("samples", "5000"), ("atoms", "100")],
            Experiment::Colonize => &[("grid", "64"), ("iterations", "50")],
            Experiment::Harmonic => &[("grid", "256")],
            _ => &[("grid", "64")],
        };
        assert_eq!(manifest_bytes(e, extra), manifest_bytes(e, extra), "{e}");
    }
}

#[test]
fn coalition_index_matches_exhaustive_scan() {
    for epsilon in [0.01, 0.05, 0.2] {
        for seed in 0..3 {
            let params = SimParams {
                n_sources: 2,
                particles_per_source: 10,
                iterations: 50,
                epsilon,
                seed,
                ..SimParams::default()
            };
            let lock = coalition_lockstep(&params).unwrap();
            assert_eq!(lock.disagreements, 0, "epsilon {epsilon} seed {seed}");
            if epsilon >= 0.05 {
                assert!(lock.coalitions > 0, "epsilon {epsilon} seed {seed} never triggered");
            }
        }
    }
}

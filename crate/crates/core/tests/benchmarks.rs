use std::path::{Path, PathBuf};

use homwave_core::harness::{Experiment, ExperimentConfig};

fn bench(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../benchmarks").join(name)
}

#[test]
fn every_benchmark_loads_and_validates() {
    for name in ["b1.json", "b2.json", "b3.json", "b4.json"] {
        let cfg = ExperimentConfig::load(&bench(name), &[]).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(cfg.epsilons.iter().all(|e| *e > 0.0 && *e <= 1.0), "{name}");
        assert!(cfg.grid.points_per_period >= 16, "{name}");
    }
}

#[test]
fn one_dimensional_benchmarks_have_harmonic_mean_coefficients() {
    let b1 = Experiment::build(ExperimentConfig::load(&bench("b1.json"), &[]).unwrap()).unwrap();
    assert!((b1.effective.g0_real[(0, 0)] - 1.6).abs() < 1e-10);
    let b2 = Experiment::build(ExperimentConfig::load(&bench("b2.json"), &[]).unwrap()).unwrap();
    assert!((b2.effective.g0_real[(0, 0)] - 3f64.sqrt()).abs() < 1e-6);
}

#[test]
fn two_dimensional_benchmarks_are_exploratory() {
    for name in ["b3.json", "b4.json"] {
        let cfg = ExperimentConfig::load(&bench(name), &[]).unwrap();
        assert!(cfg.acceptance.exploratory, "{name}");
        let exp = Experiment::build(cfg).unwrap();
        let g0 = &exp.effective.g0_real;
        assert!((g0 - g0.transpose()).amax() < 1e-10, "{name}");
        let (lower, upper) = exp.effective.bracket_gaps();
        assert!(lower >= -1e-9 && upper >= -1e-9, "{name}");
    }
    // Layers normal to the first axis: harmonic mean across, arithmetic mean along.
    let b3 = Experiment::build(ExperimentConfig::load(&bench("b3.json"), &[]).unwrap()).unwrap();
    assert!((b3.effective.g0_real[(0, 0)] - 1.6).abs() < 1e-10);
    assert!((b3.effective.g0_real[(1, 1)] - 2.5).abs() < 1e-10);
}

#[test]
fn overrides_reach_the_loaded_config() {
    let cfg = ExperimentConfig::load(&bench("b1.json"), &["grid.points_per_period=64".into(), "epsilons=[0.5]".into()]).unwrap();
    assert_eq!(cfg.grid.points_per_period, 64);
    assert_eq!(cfg.epsilons, vec![0.5]);
}

//! End-to-end runs through the configuration-driven driver.

use std::fs;
use std::path::Path;

use lela_core::config::{Epsilon, GridConfig, InitialConfig, OutputConfig, SimulationConfig};
use lela_core::diagnostics::constraint_residuals;
use lela_core::driver::{epsilon_sweep, initdata, prepare_initial, run};
use lela_core::evolve::{rhs, Model};
use lela_core::io::read_state;
use lela_core::seeds::Seed;
use lela_core::smoothing::MollifierKernel;
use lela_core::*;

fn config(dir: &Path, initial: InitialConfig) -> SimulationConfig {
    SimulationConfig {
        grid: GridConfig { n1: 8, n2: 8, n3: 9, mode: Mode::Slab },
        initial,
        t_final: 0.01,
        output: OutputConfig { directory: dir.to_path_buf(), snapshot_stride: 0 },
        ..SimulationConfig::default()
    }
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let initial = InitialConfig::Construct { seed: Seed::Shear, order: 1, max_iter: 50 };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&config(&a, initial.clone())).unwrap();
    run(&config(&b, initial)).unwrap();
    for file in ["series.csv", "final.lela"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file} differs");
    }
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir.path().join("first"), InitialConfig::Builtin { name: Seed::ElasticShear });
    run(&cfg).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("first/manifest.json")).unwrap()).unwrap();
    let mut replay: SimulationConfig = serde_json::from_value(manifest["config"].clone()).unwrap();
    assert_eq!(replay, cfg);
    replay.output.directory = dir.path().join("second");
    run(&replay).unwrap();
    assert_eq!(fs::read(dir.path().join("first/final.lela")).unwrap(), fs::read(dir.path().join("second/final.lela")).unwrap());
}

#[test]
fn final_snapshot_restarts_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir.path().join("a"), InitialConfig::Builtin { name: Seed::Shear });
    let out = run(&cfg).unwrap();
    let (state, _) = read_state(&dir.path().join("a/final.lela")).unwrap();
    assert_eq!(state, out.final_state);

    let restart = SimulationConfig {
        initial: InitialConfig::Snapshot { path: dir.path().join("a/final.lela") },
        output: OutputConfig { directory: dir.path().join("b"), snapshot_stride: 0 },
        ..cfg
    };
    let (s0, _, _) = prepare_initial(&restart).unwrap();
    assert_eq!(s0, out.final_state);
}

/// Constructed data satisfy the propagated constraints at `t = 0`.
#[test]
fn constructed_data_start_on_the_constraint_set() {
    let dir = tempfile::tempdir().unwrap();
    for seed in [Seed::Shear, Seed::ElasticShear] {
        let mut cfg = config(dir.path(), InitialConfig::Construct { seed, order: 1, max_iter: 50 });
        cfg.grid = GridConfig { n1: 16, n2: 16, n3: 17, mode: Mode::Slab };
        cfg.epsilon = Epsilon(1e3);
        let data = initdata(&cfg).unwrap();
        let (s0, f0) = data.initial_state();
        let model = Model::new(f0.clone(), EquationOfState::linear(1e3), MollifierKernel::new(s0.grid(), 0.0).unwrap());
        let geo = model.geometry(&s0).unwrap();
        let rates = rhs(&s0, &geo, &f0, &model.eos).unwrap();
        let r = constraint_residuals(&s0, &geo, &f0, &model.eos, &rates, None);
        assert_eq!(r.f_identity, 0.0, "{seed}");
        assert!(r.div_v < 1e-8, "{seed}: {r:?}");
        assert!(r.div_f < 1e-8, "{seed}: {r:?}");
        assert!(dir.path().join("initial_state.lela").exists());
    }
}

#[test]
fn sweep_rejects_decreasing_epsilon_and_short_lists() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), InitialConfig::Construct { seed: Seed::Shear, order: 1, max_iter: 50 });
    assert!(matches!(epsilon_sweep(&cfg, &[1e3, 1e2, 1e4], 2), Err(Error::Config(_))));
    assert!(matches!(epsilon_sweep(&cfg, &[1e2, 1e3], 2), Err(Error::Config(_))));
}

#[test]
fn failing_sweep_member_still_writes_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), InitialConfig::Construct { seed: Seed::Shear, order: 1, max_iter: 50 });
    cfg.epsilon_min = 500.0;
    let err = epsilon_sweep(&cfg, &[1e2, 1e3, 1e4], 2).unwrap_err();
    assert_eq!(err.exit_code(), 5);
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert_eq!(saved["complete"], false);
    assert_eq!(saved["members"].as_array().unwrap().len(), 0);
}

//! End-to-end runs on small ensembles.

use lattice_coherence::commands;
use lattice_coherence::config::RunConfig;
use lattice_coherence::output::Stamp;
use lattice_coherence::pipeline::{bloch_trajectory, coherence_run, gradient_scan, linspace, Scenario};
use lattice_coherence::units;

fn small(n: usize) -> Scenario {
    let mut sc = Scenario::default();
    sc.ensemble.n_samples = n;
    sc
}

#[test]
fn width_grows_during_the_hold() {
    let times: Vec<f64> = linspace(0.0, 40e-3, 9);
    let run = coherence_run(&small(32), &times).unwrap();
    let w: Vec<f64> = run.snapshots.iter().map(|s| s.width().unwrap()).collect();
    assert!(w[w.len() - 1] > 5.0 * w[0], "{w:?}");
    let c: Vec<f64> = run.snapshots.iter().map(|s| s.coherence).collect();
    assert!(c[0] > 0.9 && c[c.len() - 1] < 0.2, "{c:?}");
}

#[test]
fn isolated_holds_do_not_depend_on_the_tilt_in_the_comoving_frame() {
    let sc = small(8);
    let pts = gradient_scan(&sc, &[units::hz_to_rad(700.0), units::hz_to_rad(1900.0)], 10e-3).unwrap();
    assert!(pts.iter().all(|p| p.isolated));
    let (a, b) = (&pts[0].snapshot.profile.density, &pts[1].snapshot.profile.density);
    let peak = a.iter().copied().fold(0.0, f64::max);
    assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-6 * peak));
}

#[test]
fn bloch_trajectory_sweeps_the_zone_once_per_period() {
    let sc = small(1);
    let times = linspace(0.0, 3e-3, 121);
    let tr = bloch_trajectory(&sc, &times).unwrap();
    let period = tr.period.unwrap();
    assert!((period / (1.0 / 900.0) - 1.0).abs() < 0.01);
    assert!(tr.drift_per_ms < 1e-8);
}

#[test]
fn depth_sweep_table_has_one_row_per_depth() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.analysis.depths = "5:24:1".into();
    let out = commands::cmd_params(&cfg, &cfg.depths().unwrap(), dir.path()).unwrap();
    let text = std::fs::read_to_string(&out.files[0]).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 21);
    assert!(rows[0].starts_with("depth_u,gamma_hz"));
}

#[test]
fn tables_are_stamped_with_the_configuration() {
    let cfg = RunConfig::default();
    let table = commands::params_table(&cfg, &[10.0]).unwrap();
    let stamp = Stamp {
        config_hash: cfg.hash(),
        seed: cfg.ensemble.seed,
    };
    let text = table.to_csv(&stamp).unwrap();
    assert!(text.contains(&format!("# config_hash={}", cfg.hash())));
    assert!(text.contains("# seed=1"));
}

use std::process::Command;

use qdbh::validate::{corner_exactness, identity_grid, sm_identities, Mutations};

fn qdbh() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qdbh"));
    c.env("RUST_LOG", "error");
    c
}

#[test]
fn perturbed_bx_breaks_the_identity_group() {
    let clean = sm_identities(&identity_grid(50), Mutations::default());
    assert!(clean.iter().all(|c| c.passed), "{clean:?}");
    let broken = sm_identities(
        &identity_grid(50),
        Mutations {
            perturb_bx: true,
            ..Mutations::default()
        },
    );
    assert!(broken.iter().any(|c| !c.passed));
}

#[test]
fn single_state_corner_breaks_the_exactness_group() {
    let checks = corner_exactness(Mutations {
        force_corner_m1: true,
        ..Mutations::default()
    });
    assert!(checks.iter().all(|c| !c.passed));
    assert!(checks
        .iter()
        .all(|c| c.detail.as_deref().unwrap_or("").starts_with("UNCONVERGED")));
}

#[test]
fn solve_prints_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"name":"one","model":{"u":10.0,"j":5.0},"n_max":3,"sizes":[{"lattice":"2"}],"g_values":[1.0]}"#,
    )
    .unwrap();
    let out = qdbh()
        .args(["solve", "--config", cfg.to_str().unwrap(), "--g", "0"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((rec["parity"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(rec["method"], "iterative");
}

#[test]
fn bad_configuration_is_rejected_with_all_problems() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"name":"bad name","model":{"u":-1.0,"j":5.0},"n_max":0,"sizes":[],"g_values":[]}"#,
    )
    .unwrap();
    let out = qdbh()
        .args(["sweep", "--config", cfg.to_str().unwrap()])
        .env("QDBH_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in ["name", "u must be", "n_max", "sizes", "g_values"] {
        assert!(err.contains(needle), "missing '{needle}' in {err}");
    }
}

#[test]
fn sweep_honours_the_output_environment_variable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"name":"envrun","model":{"u":10.0,"j":5.0},"n_max":2,"sizes":[{"lattice":"2"},{"lattice":"3"}],"g_values":[0.0,1.0],"workers":1}"#,
    )
    .unwrap();
    let out = qdbh()
        .args(["sweep", "--config", cfg.to_str().unwrap()])
        .env("QDBH_OUTPUT_DIR", dir.path().join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/envrun.csv").exists());
    assert!(dir.path().join("out/envrun.jsonl").exists());
}

#[test]
fn map_spin_reports_coefficients_and_deviation() {
    let out = qdbh()
        .args(["map-spin", "--u", "100", "--j", "50", "--alpha2", "1", "--sites", "2"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let r = 1f64.tanh().sqrt();
    assert!((v["coefficients"]["b_x"].as_f64().unwrap() - (r + 1.0 / r)).abs() < 1e-12);
    assert!(v["mapping"]["max_deviation"].as_f64().unwrap() < 1e-8);
}

#[test]
fn unknown_preset_is_an_error() {
    let out = qdbh().args(["sweep", "--preset", "fig9"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fig2"));
}

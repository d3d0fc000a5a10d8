use std::path::Path;

use qdbh::analyze::{analyze_csv, analyze_rows, AnalyzeOptions, COLLAPSE_FILE, COLLAPSE_SVG, PEAK_FILE};
use qdbh::config::{ModelSpec, RunConfig, SizeSpec, SolverSpec};
use qdbh::store::{read_csv, read_records, SweepStore, CSV_COLUMNS};
use qdbh::sweep::run_sweep;

fn small_config(name: &str) -> RunConfig {
    RunConfig {
        name: name.into(),
        model: ModelSpec {
            u: 10.0,
            j: 5.0,
            gamma: 1.0,
            standard_convention: true,
            delta: None,
            eta: None,
        },
        n_max: 3,
        sizes: vec![SizeSpec::new("2"), SizeSpec::new("3")],
        solver: SolverSpec::default(),
        g_values: vec![0.0, 1.0, 2.0, 4.0],
        seed: 7,
        workers: 1,
        output: Default::default(),
    }
}

fn csv_header(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().next().unwrap().split(',').map(str::to_string).collect()
}

#[test]
fn sweep_writes_one_record_per_point_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config("small");
    let store = SweepStore::open(dir.path(), &cfg.name).unwrap();
    let first = run_sweep(&cfg, &store).unwrap();
    assert_eq!((first.total, first.computed, first.skipped, first.failed), (8, 8, 0, 0));
    assert_eq!(csv_header(store.csv_path()), CSV_COLUMNS);
    let rows = read_csv(store.csv_path()).unwrap();
    assert_eq!(rows.len(), 8);
    for row in rows.iter().filter(|r| r.g_over_gamma == 0.0) {
        assert!((row.parity.unwrap() - 1.0).abs() < 1e-6);
        assert!(row.entropy.unwrap() <= 1e-6);
    }

    // rerunning computes nothing and leaves the record file untouched
    let before = std::fs::read(store.jsonl_path()).unwrap();
    let second = run_sweep(&cfg, &SweepStore::open(dir.path(), &cfg.name).unwrap()).unwrap();
    assert_eq!((second.computed, second.skipped), (0, 8));
    assert_eq!(std::fs::read(store.jsonl_path()).unwrap(), before);

    // a new drive value only computes the missing points
    let mut more = cfg.clone();
    more.g_values.push(3.0);
    assert_eq!(more.hash(), cfg.hash());
    let third = run_sweep(&more, &store).unwrap();
    assert_eq!((third.computed, third.skipped), (2, 8));
    assert_eq!(read_csv(store.csv_path()).unwrap().len(), 10);
}

#[test]
fn records_round_trip_field_for_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config("trip");
    cfg.g_values = vec![0.5, 2.0];
    let store = SweepStore::open(dir.path(), &cfg.name).unwrap();
    run_sweep(&cfg, &store).unwrap();
    let records = store.records().unwrap();
    assert_eq!(records.len(), 4);
    let text: String = records
        .iter()
        .map(|r| serde_json::to_string(r).unwrap() + "\n")
        .collect();
    let copy = dir.path().join("copy.jsonl");
    std::fs::write(&copy, text).unwrap();
    assert_eq!(read_records(&copy).unwrap(), records);
    let rows = read_csv(store.csv_path()).unwrap();
    for r in &records {
        let row = rows
            .iter()
            .find(|x| x.size == r.size && x.g_over_gamma == r.g_over_gamma)
            .unwrap();
        assert_eq!(row.parity, r.parity);
        assert_eq!(row.entropy, r.entropy);
        assert_eq!(row.method, r.method);
        assert_eq!(row.converged, r.converged);
    }
}

#[test]
fn interrupted_last_line_is_ignored() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config("cut");
    cfg.g_values = vec![1.0];
    let store = SweepStore::open(dir.path(), &cfg.name).unwrap();
    run_sweep(&cfg, &store).unwrap();
    let mut text = std::fs::read_to_string(store.jsonl_path()).unwrap();
    text.push_str("{\"config_hash\":\"abc\",\"size\":");
    std::fs::write(store.jsonl_path(), text).unwrap();
    assert_eq!(store.records().unwrap().len(), 2);
}

#[test]
fn same_seed_gives_the_same_observables() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = small_config("seeded");
    cfg.g_values = vec![2.0];
    cfg.solver.method = Some(qdbh_core::liouvillian::SolverMethod::Eigen);
    let ra = {
        let s = SweepStore::open(a.path(), &cfg.name).unwrap();
        run_sweep(&cfg, &s).unwrap();
        s.records().unwrap()
    };
    let rb = {
        let s = SweepStore::open(b.path(), &cfg.name).unwrap();
        run_sweep(&cfg, &s).unwrap();
        s.records().unwrap()
    };
    for x in &ra {
        let y = rb.iter().find(|y| y.size == x.size).unwrap();
        assert!((x.parity.unwrap() - y.parity.unwrap()).abs() < 1e-8);
        assert!((x.entropy.unwrap() - y.entropy.unwrap()).abs() < 1e-8);
    }
}

#[test]
fn invalid_configuration_reports_every_problem() {
    let mut cfg = small_config("");
    cfg.n_max = 0;
    cfg.g_values = vec![-1.0, f64::NAN];
    cfg.sizes.push(SizeSpec::new("2x2"));
    cfg.sizes.push(SizeSpec::new("nonsense"));
    let err = cfg.validate().unwrap_err();
    assert!(err.problems.len() >= 5, "{err}");
    let dir = tempfile::tempdir().unwrap();
    let store = SweepStore::open(dir.path(), "bad").unwrap();
    assert!(run_sweep(&cfg, &store).is_err());
    assert!(store.records().unwrap().is_empty());
}

#[test]
fn analysis_needs_two_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = analyze_csv(&dir.path().join("none.csv"), dir.path(), &AnalyzeOptions::default()).unwrap_err();
    assert!(missing.to_string().contains("does not exist"));
    let empty = analyze_rows(&[], dir.path(), &AnalyzeOptions::default()).unwrap_err();
    let msg = empty.to_string();
    assert!(msg.contains("no points") && msg.contains("two lattice sizes"), "{msg}");
}

#[test]
fn analysis_writes_every_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config("report");
    let store = SweepStore::open(dir.path(), &cfg.name).unwrap();
    run_sweep(&cfg, &store).unwrap();
    let out = dir.path().join("analysis");
    let report = analyze_csv(store.csv_path(), &out, &AnalyzeOptions::default()).unwrap();
    assert_eq!(report.collapse.dimensionality, 1);
    assert_eq!(report.collapse.exponents, qdbh_core::scaling::Exponents::ISING_2D);
    for name in [COLLAPSE_FILE, PEAK_FILE, COLLAPSE_SVG] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let svg = std::fs::read_to_string(out.join(COLLAPSE_SVG)).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
}

//! Acceptance criteria 1-8, one PASS/FAIL line each.
//!
//! Runs as a plain binary so the verdict lines are always visible. The
//! process fails when a binding criterion fails outside the documented
//! desk-scale limitations (see the README).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use qdbh::config::RunConfig;
use qdbh::presets::preset;
use qdbh::store::{PointRecord, SweepStore};
use qdbh::sweep::run_sweep;
use qdbh::validate::{
    corner_comparison, corner_exactness, identity_grid, mapping_deviation, sm_identities, solver_agreement,
    AgreementPoint, Check, Mutations,
};
use qdbh_core::lattice::Shape;
use qdbh_core::liouvillian::{SolverMethod, SteadyStateOptions};
use qdbh_core::scaling::{collapse_quality, find_crossing, fit_entropy_peak, Exponents, ScalingDataset, ScalingRecord};

const LOG2: f64 = std::f64::consts::LN_2;

struct Verdict {
    passed: bool,
    /// Failing but within a documented limitation (or explicitly non-binding).
    excused: bool,
    summary: String,
    lines: Vec<String>,
}

impl Verdict {
    fn from_checks(checks: &[Check], summary: &str) -> Self {
        Verdict {
            passed: !checks.is_empty() && checks.iter().all(|c| c.passed),
            excused: false,
            summary: summary.to_string(),
            lines: checks.iter().map(describe).collect(),
        }
    }
}

fn describe(c: &Check) -> String {
    let value = c.value.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into());
    let mark = if c.passed { "ok  " } else { "FAIL" };
    let detail = c.detail.as_deref().map(|d| format!(" ({d})")).unwrap_or_default();
    format!("{mark} {}: {value} <= {:.0e}{detail}", c.name, c.tolerance)
}

fn sweep(cfg: &RunConfig, root: &Path) -> anyhow::Result<Vec<PointRecord>> {
    let store = SweepStore::open(&root.join(&cfg.name), &cfg.name)?;
    run_sweep(cfg, &store)?;
    store.records_for(&cfg.hash())
}

fn is_corner_3x3(r: &PointRecord) -> bool {
    r.method == SolverMethod::Corner && r.size == "3x3"
}

/// Zero- and strong-drive limits of every preset.
fn limits(root: &Path, fig4: &[PointRecord], all: &mut Vec<PointRecord>) -> anyhow::Result<Verdict> {
    let mut runs: Vec<(String, Vec<PointRecord>)> = Vec::new();
    for name in ["fig2", "fig3"] {
        let mut cfg = preset(name)?;
        let top = cfg.g_values.iter().cloned().fold(0.0, f64::max);
        cfg.g_values = vec![0.0, top];
        let recs = sweep(&cfg, root)?;
        all.extend(recs.iter().cloned());
        runs.push((name.into(), recs));
    }
    runs.push(("fig4".into(), fig4.to_vec()));

    let mut lines = Vec::new();
    let mut passed = true;
    let mut only_3x3 = true;
    for (name, recs) in &runs {
        let top = recs.iter().map(|r| r.g_over_gamma).fold(0.0, f64::max);
        for r in recs {
            let (Some(p), Some(s)) = (r.parity, r.entropy) else {
                lines.push(format!(
                    "FAIL {name} {} G={}: {}",
                    r.size,
                    r.g_over_gamma,
                    r.error.as_deref().unwrap_or("no result")
                ));
                passed = false;
                only_3x3 = false;
                continue;
            };
            let ok = if r.g_over_gamma == 0.0 {
                (p - 1.0).abs() <= 1e-6 && s <= 1e-6
            } else if r.g_over_gamma == top && r.n_sites >= 2 {
                (s - LOG2).abs() <= 0.1 && p.abs() <= 0.1
            } else {
                continue;
            };
            let tag = if r.converged { "" } else { " [unconverged]" };
            lines.push(format!(
                "{} {name} {} G={}: parity {p:.3e}, entropy {s:.4}{tag}",
                if ok { "ok  " } else { "FAIL" },
                r.size,
                r.g_over_gamma
            ));
            if !ok {
                passed = false;
                only_3x3 &= is_corner_3x3(r);
            }
        }
    }
    Ok(Verdict {
        passed,
        excused: !passed && only_3x3,
        summary: "Π → 1, S → 0 at G = 0; S → log 2, |Π| ≤ 0.1 at the largest G".into(),
        lines,
    })
}

fn agreement() -> Verdict {
    let p = |shape, n_max, u, j, g| AgreementPoint { shape, n_max, u, j, g };
    let points = vec![
        p(Shape::Chain(1), 8, 10.0, 0.0, 2.0),
        p(Shape::Chain(1), 12, 4.0, 0.0, 3.0),
        p(Shape::Chain(1), 10, 40.0, 0.0, 16.0),
        p(Shape::Chain(2), 4, 10.0, 5.0, 1.0),
        p(Shape::Chain(2), 5, 20.0, 10.0, 4.0),
        p(Shape::Chain(2), 6, 20.0, 10.0, 8.0),
        p(Shape::Chain(3), 3, 5.0, 2.5, 1.0),
        p(Shape::Chain(3), 4, 4.0, 2.0, 1.5),
        p(Shape::Rect(2, 2), 2, 10.0, 5.0, 3.0),
        p(Shape::Chain(4), 2, 10.0, 5.0, 1.5),
        p(Shape::Chain(5), 1, 10.0, 5.0, 2.0),
    ];
    let checks = solver_agreement(&points, &SteadyStateOptions::default());
    Verdict::from_checks(&checks, "direct, eigen, iterative and evolution routes agree (D ≤ 200)")
}

fn corner() -> Verdict {
    let mut checks = corner_exactness(Mutations::default());
    for shape in [Shape::Chain(4), Shape::Rect(2, 2)] {
        let name = format!("{} n_max=2 G=3 truncated", shape.label());
        checks.push(
            match corner_comparison(shape, 2, 10.0, 5.0, 3.0, &[20, 35, 50, 65], 1e-3) {
                Ok(c) => {
                    let mut check = Check::measured(name, c.error(), 2e-3)
                        .with_detail(format!("M = {}, drift converged = {}", c.m, c.converged));
                    check.passed &= c.converged && !c.exact_merges;
                    check
                }
                Err(e) => Check::failed(name, 2e-3, e.to_string()),
            },
        );
    }
    Verdict::from_checks(
        &checks,
        "corner method: exact at full M, converged and within 2e-3 when truncated",
    )
}

fn identities() -> Verdict {
    let checks = sm_identities(&identity_grid(50), Mutations::default());
    Verdict::from_checks(&checks, "B_xB_y = A_-, B_x² = A_+ + 2, B_y² = A_+ - 2, cat matrix of â")
}

fn mapping() -> Verdict {
    let checks = mapping_deviation(&[1, 2, 3], &[0.5, 1.0, 2.0]);
    Verdict::from_checks(&checks, "projected Hamiltonian equals the spin model")
}

fn planted(g_c: f64, e: Exponents) -> Vec<ScalingRecord> {
    let master = |x: f64| 0.8 / (1.0 + (0.9 * x).exp());
    let mut out = Vec::new();
    for n in [4usize, 9, 16, 25] {
        let l = (n as f64).sqrt();
        for k in 0..=30 {
            let g = 0.5 + 0.05 * k as f64;
            out.push(ScalingRecord {
                size: n.to_string(),
                n_sites: n,
                g,
                parity: master((g - g_c) * l.powf(1.0 / e.nu)) / l.powf(e.beta / e.nu),
                entropy: 0.0,
                converged: true,
            });
        }
    }
    out
}

fn scaling_engine() -> anyhow::Result<Verdict> {
    let e = Exponents::ISING_3D;
    let ds = ScalingDataset::new(planted(1.2, e), 2)?;
    let mut checks = Vec::new();
    let crossing = find_crossing(&ds)?;
    checks.push(Check::measured("planted G_c = 1.2", (crossing.g_c - 1.2).abs(), 0.01));
    let good = collapse_quality(&ds, 1.2)?;
    let bad = collapse_quality(
        &ds.clone().with_exponents(Exponents {
            beta: 2.0 * e.beta,
            nu: e.nu,
        }),
        1.2,
    )?;
    checks.push(
        Check::measured("collapse quality ratio (truth / doubled β)", good / bad, 0.1)
            .with_detail(format!("{good:.3e} vs {bad:.3e}")),
    );
    for kappa in [0.29, 0.44, 0.80] {
        let mut recs = Vec::new();
        for n in [2usize, 3, 4, 5, 6] {
            let g_peak = 2.0 + 0.3 / n as f64;
            for k in 0..=40 {
                let g = 0.5 + 0.1 * k as f64;
                recs.push(ScalingRecord {
                    size: n.to_string(),
                    n_sites: n,
                    g,
                    parity: 0.0,
                    entropy: 0.7 * (n as f64).powf(kappa) * (-(g - g_peak).powi(2) / 0.8).exp(),
                    converged: true,
                });
            }
        }
        let fit = fit_entropy_peak(&ScalingDataset::new(recs, 1)?)?;
        checks.push(Check::measured(
            format!("planted κ = {kappa}"),
            (fit.kappa - kappa).abs(),
            0.005,
        ));
    }
    Ok(Verdict::from_checks(
        &checks,
        "crossing, collapse quality and κ recovered from planted data",
    ))
}

fn trend(fig4: &[PointRecord]) -> anyhow::Result<Verdict> {
    let recs = fig4
        .iter()
        .filter_map(|r| {
            Some(ScalingRecord {
                size: r.size.clone(),
                n_sites: r.n_sites,
                g: r.g_over_gamma,
                parity: r.parity?,
                entropy: r.entropy?,
                converged: r.converged,
            })
        })
        .collect();
    let ds = ScalingDataset::new(recs, 1)?;
    let c = find_crossing(&ds)?;
    let mut lines = vec![format!("median crossing G_c = {:.3} (IQR {:.3})", c.g_c, c.uncertainty)];
    for p in &c.crossings {
        lines.push(format!("  sizes {} / {}: {:.3}", p.size_a, p.size_b, p.g));
    }
    let passed = (1.2..=2.4).contains(&c.g_c);
    Ok(Verdict {
        passed,
        excused: true,
        summary: "fig4 rescaled parity crosses within G/γ ∈ [1.2, 2.4] (non-binding)".into(),
        lines,
    })
}

fn symmetry(records: &[PointRecord]) -> Verdict {
    let mut lines = Vec::new();
    let mut checked = 0;
    for r in records.iter().filter(|r| r.converged && r.succeeded()) {
        checked += 1;
        let (p, s) = (r.parity.unwrap(), r.entropy.unwrap());
        let comm = r.parity_commutator.unwrap_or(f64::INFINITY);
        let log_d = r.log_dim.unwrap_or(0.0);
        let tol = 1e-12;
        if comm > 1e-6 || p.abs() > 1.0 + tol || s < -tol || s > log_d + tol {
            lines.push(format!(
                "FAIL {} G={}: ‖[ρ,Π]‖ {comm:.2e}, Π {p}, S {s} (log D {log_d})",
                r.size, r.g_over_gamma
            ));
        }
    }
    let worst = records
        .iter()
        .filter(|r| r.converged)
        .filter_map(|r| r.parity_commutator)
        .fold(0.0, f64::max);
    lines.push(format!("{checked} converged states, largest ‖[ρ,Π]‖_max = {worst:.2e}"));
    Verdict {
        passed: checked > 0 && lines.len() == 1,
        excused: false,
        summary: "‖[ρ,Π]‖ ≤ 1e-6, Π ∈ [-1, 1], S ∈ [0, log D] for every converged sweep state".into(),
        lines,
    }
}

fn report(id: usize, started: Instant, verdict: anyhow::Result<Verdict>) -> (bool, bool) {
    let secs = started.elapsed().as_secs_f64();
    let verdict = verdict.unwrap_or_else(|e| Verdict {
        passed: false,
        excused: false,
        summary: format!("error: {e:#}"),
        lines: vec![],
    });
    for line in &verdict.lines {
        println!("    {line}");
    }
    let tag = match (verdict.passed, verdict.excused) {
        (true, _) => "PASS",
        (false, true) => "FAIL (documented limitation)",
        (false, false) => "FAIL",
    };
    println!("criterion {id}: {tag} - {} [{secs:.1} s]", verdict.summary);
    std::io::stdout().flush().ok();
    (verdict.passed, verdict.excused)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).expect("scratch directory");

    let mut results = Vec::new();
    let mut sweep_records = Vec::new();

    // the full fig4 sweep feeds criteria 1, 7 and 8
    let t = Instant::now();
    let fig4 = preset("fig4").and_then(|cfg| sweep(&cfg, &root));
    let fig4_secs = t.elapsed().as_secs_f64();
    let fig4 = match fig4 {
        Ok(r) => r,
        Err(e) => {
            println!("fig4 sweep failed: {e:#}");
            Vec::new()
        }
    };
    println!("fig4 sweep: {} records in {fig4_secs:.1} s", fig4.len());
    sweep_records.extend(fig4.iter().cloned());

    let t = Instant::now();
    results.push(report(1, t, limits(&root, &fig4, &mut sweep_records)));
    let t = Instant::now();
    results.push(report(2, t, Ok(agreement())));
    let t = Instant::now();
    results.push(report(3, t, Ok(corner())));
    let t = Instant::now();
    results.push(report(4, t, Ok(identities())));
    let t = Instant::now();
    results.push(report(5, t, Ok(mapping())));
    let t = Instant::now();
    results.push(report(6, t, scaling_engine()));
    let t = Instant::now();
    results.push(report(7, t, trend(&fig4)));
    let t = Instant::now();
    results.push(report(8, t, Ok(symmetry(&sweep_records))));

    let passed = results.iter().filter(|r| r.0).count();
    let excused = results.iter().filter(|r| !r.0 && r.1).count();
    let failed = results.len() - passed - excused;
    println!("acceptance: {passed} passed, {excused} failed within documented limitations, {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}

use qdbh_core::scaling::{
    collapse_quality, find_crossing, fit_entropy_peak, rescale, unscale, Exponents, Pchip, ScalingDataset,
    ScalingRecord,
};

/// Parity curves obeying exact one-parameter scaling around `g_c`.
fn planted_parity(g_c: f64, e: Exponents, sizes: &[usize], dimensionality: usize) -> Vec<ScalingRecord> {
    let master = |x: f64| 0.8 / (1.0 + (0.9 * x).exp());
    let mut out = Vec::new();
    for &n in sizes {
        let l = if dimensionality == 2 {
            (n as f64).sqrt()
        } else {
            n as f64
        };
        for k in 0..=30 {
            let g = 0.5 + 0.05 * k as f64;
            let x = (g - g_c) * l.powf(1.0 / e.nu);
            out.push(ScalingRecord {
                size: n.to_string(),
                n_sites: n,
                g,
                parity: master(x) / l.powf(e.beta / e.nu),
                entropy: 0.0,
                converged: true,
            });
        }
    }
    out
}

#[test]
fn crossing_of_planted_3d_ising_data() {
    let e = Exponents::ISING_3D;
    let ds = ScalingDataset::new(planted_parity(1.2, e, &[4, 9, 16, 25], 2), 2).unwrap();
    let c = find_crossing(&ds).unwrap();
    assert!((c.g_c - 1.2).abs() < 0.01, "G_c = {}", c.g_c);
    assert_eq!(c.crossings.len(), 6);
    let good = collapse_quality(&ds, 1.2).unwrap();
    let doubled = ds.clone().with_exponents(Exponents {
        beta: 2.0 * e.beta,
        nu: e.nu,
    });
    let bad = collapse_quality(&doubled, 1.2).unwrap();
    assert!(bad >= 10.0 * good, "quality {good:.3e} vs doubled β {bad:.3e}");
}

#[test]
fn crossing_of_planted_2d_ising_chains() {
    let e = Exponents::ISING_2D;
    let ds = ScalingDataset::new(planted_parity(1.8, e, &[2, 3, 4, 5], 1), 1).unwrap();
    assert_eq!(ds.exponents, e);
    let c = find_crossing(&ds).unwrap();
    assert!((c.g_c - 1.8).abs() < 0.01, "G_c = {}", c.g_c);
}

#[test]
fn unconverged_records_are_excluded_by_default() {
    let e = Exponents::ISING_3D;
    let mut recs = planted_parity(1.2, e, &[4, 9], 2);
    for r in recs.iter_mut().filter(|r| r.n_sites == 9) {
        r.converged = false;
    }
    let ds = ScalingDataset::new(recs, 2).unwrap();
    assert!(find_crossing(&ds).is_err());
    let mut with = ds.clone();
    with.include_unconverged = true;
    assert!(find_crossing(&with).is_ok());
}

#[test]
fn rescaling_round_trips() {
    let e = Exponents::ISING_2D;
    let ds = ScalingDataset::new(planted_parity(1.8, e, &[2, 5], 1), 1).unwrap();
    for p in rescale(&ds, 1.8) {
        let (g, parity) = unscale(p.x, p.y, p.l, 1.8, e);
        assert!((g - p.g).abs() < 1e-12);
        let orig = ds.records.iter().find(|r| r.size == p.size && r.g == p.g).unwrap();
        assert!((parity - orig.parity).abs() < 1e-12);
    }
}

#[test]
fn entropy_peak_exponents_are_recovered() {
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
        let fit = fit_entropy_peak(&ScalingDataset::new(recs, 1).unwrap()).unwrap();
        assert!((fit.kappa - kappa).abs() < 0.005, "κ {kappa} fitted as {}", fit.kappa);
        assert!(!fit.underdetermined);
        assert!(fit.r_squared > 0.999);
    }
}

#[test]
fn peak_at_the_sweep_edge_is_unresolved() {
    let recs: Vec<ScalingRecord> = [2usize, 3]
        .iter()
        .flat_map(|&n| {
            (0..10).map(move |k| ScalingRecord {
                size: n.to_string(),
                n_sites: n,
                g: k as f64,
                parity: 0.0,
                entropy: 0.1 * k as f64,
                converged: true,
            })
        })
        .collect();
    assert!(fit_entropy_peak(&ScalingDataset::new(recs, 1).unwrap()).is_err());
}

#[test]
fn pchip_interpolates_monotone_data_without_overshoot() {
    let x = [0.0, 1.0, 2.0, 3.0, 4.0];
    let y = [1.0, 0.9, 0.2, 0.15, 0.1];
    let p = Pchip::new(&x, &y).unwrap();
    let mut prev = f64::INFINITY;
    for k in 0..=400 {
        let v = p.eval(4.0 * k as f64 / 400.0);
        assert!(v <= prev + 1e-15 && (0.1 - 1e-15..=1.0 + 1e-15).contains(&v));
        prev = v;
    }
}

//! Sweep execution: every `(lattice, G/γ)` point of a configuration, solved
//! on a worker pool and appended to the store as it finishes.

use std::time::Instant;

use anyhow::bail;
use qdbh_core::corner::convergence_sweep;
use qdbh_core::density::DensityMatrix;
use qdbh_core::fock::FockSpace;
use qdbh_core::lattice::LatticeGeometry;
use qdbh_core::liouvillian::{steady_state, Liouvillian, SolverMethod};
use qdbh_core::observables::{evaluate, parity_commutator_norm, BasisOperators, Provenance};
use rayon::prelude::*;

use crate::config::{ResolvedSize, RunConfig};
use crate::store::{PointKey, PointRecord, SweepStore};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SweepSummary {
    pub total: usize,
    pub computed: usize,
    pub skipped: usize,
    pub failed: usize,
    pub unconverged: usize,
}

struct Solved {
    rho: DensityMatrix,
    ops: BasisOperators,
    method: SolverMethod,
    m: Option<usize>,
    residual: f64,
    converged: bool,
    iterations: Option<usize>,
    max_discarded_weight: Option<f64>,
    history: Option<Vec<qdbh_core::corner::ConvergenceEntry>>,
}

fn solve(cfg: &RunConfig, size: &ResolvedSize, g: f64) -> qdbh_core::Result<Solved> {
    let geom = LatticeGeometry::from_shape(size.shape)?;
    let fock = FockSpace::new(size.n_max)?;
    let params = cfg.model.params(g)?;
    match size.method {
        SolverMethod::Corner => {
            let conv = convergence_sweep(
                &params,
                &geom,
                &fock,
                &size.m_list,
                cfg.solver.corner.convergence_tol,
                &cfg.corner_options(),
            )?;
            let max_discarded_weight = Some(conv.result.max_discarded_weight());
            let iterations = Some(conv.result.diagnostics.iter().map(|d| d.iterations).sum());
            Ok(Solved {
                residual: conv.result.residual,
                rho: conv.result.rho,
                ops: conv.result.operators,
                method: SolverMethod::Corner,
                m: Some(conv.m),
                converged: conv.converged,
                iterations,
                max_discarded_weight,
                history: Some(conv.history),
            })
        }
        method => {
            let liou = Liouvillian::for_lattice(&params, &geom, &fock)?;
            let opts = cfg.steady_options();
            let res = steady_state(&liou, method, &opts)?;
            let ops = BasisOperators::fock(&fock, geom.n_sites())?;
            Ok(Solved {
                rho: res.rho,
                ops,
                method,
                m: None,
                residual: res.residual,
                converged: true,
                iterations: Some(res.iterations),
                max_discarded_weight: None,
                history: None,
            })
        }
    }
}

/// Solves one point. Failures are captured in the record, never raised.
pub fn solve_point(cfg: &RunConfig, hash: &str, size: &ResolvedSize, g: f64) -> PointRecord {
    let start = Instant::now();
    let mut record = PointRecord {
        config_hash: hash.to_string(),
        size: size.label.clone(),
        n_sites: size.shape.n_sites(),
        dimensionality: size.shape.dimensionality(),
        g_over_gamma: g,
        parity: None,
        entropy: None,
        n_per_site: None,
        parity_commutator: None,
        log_dim: None,
        method: size.method,
        m: None,
        n_max: size.n_max,
        residual: None,
        converged: false,
        iterations: None,
        max_discarded_weight: None,
        corner_history: None,
        wall_time_s: 0.0,
        error: None,
    };
    let outcome = solve(cfg, size, g).and_then(|s| {
        let provenance = Provenance {
            method: s.method,
            m: s.m,
            n_max: size.n_max,
            residual: s.residual,
            converged: s.converged,
        };
        let obs = evaluate(&s.rho, &s.ops, provenance, false)?;
        let comm = parity_commutator_norm(&s.rho, &s.ops)?;
        Ok((s, obs, comm))
    });
    match outcome {
        Ok((s, obs, comm)) => {
            record.parity = Some(obs.parity);
            record.entropy = Some(obs.entropy);
            record.n_per_site = Some(obs.n_per_site);
            record.parity_commutator = Some(comm);
            record.log_dim = Some((s.rho.dim() as f64).ln());
            record.m = s.m;
            record.residual = Some(s.residual);
            record.converged = s.converged;
            record.iterations = s.iterations;
            record.max_discarded_weight = s.max_discarded_weight;
            record.corner_history = s.history;
        }
        Err(e) => {
            log::warn!("{} at G = {g}: {e}", size.label);
            record.error = Some(e.to_string());
        }
    }
    record.wall_time_s = start.elapsed().as_secs_f64();
    record
}

/// Runs every point of `cfg` that `store` does not hold yet, then refreshes
/// the CSV view. Fails only if every attempted point failed.
pub fn run_sweep(cfg: &RunConfig, store: &SweepStore) -> anyhow::Result<SweepSummary> {
    cfg.validate()?;
    let hash = cfg.hash();
    let sizes = cfg.resolved_sizes()?;
    let done = store.completed(&hash)?;
    let all: Vec<(usize, f64)> = (0..sizes.len())
        .flat_map(|k| cfg.g_values.iter().map(move |&g| (k, g)))
        .collect();
    let todo: Vec<(usize, f64)> = all
        .iter()
        .copied()
        .filter(|&(k, g)| !done.contains(&PointKey::new(&hash, &sizes[k].label, g)))
        .collect();
    let mut summary = SweepSummary {
        total: all.len(),
        skipped: all.len() - todo.len(),
        ..SweepSummary::default()
    };
    log::info!(
        "sweep '{}' ({}): {} points, {} already done",
        cfg.name,
        &hash[..12],
        summary.total,
        summary.skipped
    );

    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    let results: Vec<anyhow::Result<PointRecord>> = pool.install(|| {
        todo.par_iter()
            .map(|&(k, g)| {
                let record = solve_point(cfg, &hash, &sizes[k], g);
                store.append(&record)?;
                log::info!(
                    "{} G = {g}: parity {:?}, entropy {:?}, {:.2} s",
                    record.size,
                    record.parity,
                    record.entropy,
                    record.wall_time_s
                );
                Ok(record)
            })
            .collect()
    });
    for r in results {
        let r = r?;
        summary.computed += 1;
        if !r.succeeded() {
            summary.failed += 1;
        } else if !r.converged {
            summary.unconverged += 1;
        }
    }
    store.write_csv(&store.records_for(&hash)?)?;
    if summary.computed > 0 && summary.failed == summary.computed {
        bail!("all {} attempted points failed", summary.computed);
    }
    Ok(summary)
}

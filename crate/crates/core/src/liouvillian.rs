//! The Lindblad generator and its steady-state solvers.
//!
//! Vectorization is column stacking, `vec(X)[i + j·D] = X[i, j]`, with the
//! Kronecker product's first factor on the slow (column) index, so that
//! `vec(A X B) = (Bᵀ ⊗ A) vec(X)`. In this convention
//!
//! `L = -i(I⊗H - Hᵀ⊗I) + Σ_k [Γ_k*⊗Γ_k - ½(I⊗Γ_k†Γ_k + (Γ_k†Γ_k)ᵀ⊗I)]`.

use std::sync::OnceLock;
use std::time::Instant;

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use num_complex::Complex64 as c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::{hermitize, BasisTag, DensityMatrix};
use crate::error::{Error, Result};
use crate::fock::{checked_power, parity_signs, FockSpace, DEFAULT_DIM_CAP};
use crate::krylov::{norm, GmresOptions};
use crate::lattice::{build_hamiltonian_capped, build_jump_operators_capped, LatticeGeometry, ModelParams};
use crate::operator::Operator;
use crate::sector::{EigenOptions, Sector, SectorSystem};
use crate::sparse::SparseOperator;

const ZERO: c64 = c64::new(0.0, 0.0);
const I: c64 = c64::new(0.0, 1.0);

/// Default cap on the number of rows of the vectorized generator.
pub const DEFAULT_DIRECT_CAP: usize = 40_000;

pub struct Liouvillian {
    h: Operator,
    jumps: Vec<Operator>,
    basis: BasisTag,
    grading: Option<Vec<i8>>,
    superop: OnceLock<SparseOperator>,
}

/// Builds the generator and its `D² × D²` superoperator eagerly.
pub fn vectorize_lindbladian(h: &SparseOperator, jumps: &[SparseOperator]) -> Result<Liouvillian> {
    let liou = Liouvillian::new(
        Operator::Sparse(h.clone()),
        jumps.iter().cloned().map(Operator::Sparse).collect(),
        BasisTag::Generic { dim: h.dim() },
    )?;
    liou.superoperator(usize::MAX)?;
    Ok(liou)
}

impl Liouvillian {
    /// Generator with Hamiltonian `h` and jump operators `jumps`; the
    /// superoperator is built only when requested.
    pub fn new(h: Operator, jumps: Vec<Operator>, basis: BasisTag) -> Result<Self> {
        let d = h.dim();
        if basis.dim() != d {
            return Err(Error::DimensionMismatch {
                context: "Liouvillian basis",
                expected: basis.dim(),
                found: d,
            });
        }
        for j in &jumps {
            if j.dim() != d {
                return Err(Error::DimensionMismatch {
                    context: "jump operator",
                    expected: d,
                    found: j.dim(),
                });
            }
        }
        Ok(Self {
            h,
            jumps,
            basis,
            grading: None,
            superop: OnceLock::new(),
        })
    }

    /// Lattice generator in the Fock basis, graded by photon-number parity.
    pub fn for_lattice(params: &ModelParams, geom: &LatticeGeometry, fock: &FockSpace) -> Result<Self> {
        Self::for_lattice_capped(params, geom, fock, DEFAULT_DIM_CAP)
    }

    pub fn for_lattice_capped(
        params: &ModelParams,
        geom: &LatticeGeometry,
        fock: &FockSpace,
        cap: usize,
    ) -> Result<Self> {
        let n = geom.n_sites();
        let h = build_hamiltonian_capped(params, geom, fock, cap)?;
        let jumps = build_jump_operators_capped(params, geom, fock, cap)?;
        let basis = BasisTag::Fock {
            n_max: fock.n_max(),
            n_sites: n,
        };
        Self::new(
            Operator::Sparse(h),
            jumps.into_iter().map(Operator::Sparse).collect(),
            basis,
        )?
        .with_grading(parity_signs(fock, n, cap)?)
    }

    /// Attaches a ±1 grading under which `H` is even and each jump has definite parity.
    pub fn with_grading(mut self, signs: Vec<i8>) -> Result<Self> {
        if signs.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "Liouvillian grading",
                expected: self.dim(),
                found: signs.len(),
            });
        }
        self.grading = Some(signs);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn basis(&self) -> BasisTag {
        self.basis
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.h
    }

    pub fn jumps(&self) -> &[Operator] {
        &self.jumps
    }

    pub fn grading(&self) -> Option<&[i8]> {
        self.grading.as_deref()
    }

    /// Upper bound `2‖H‖∞ + 2Σ‖Γ†Γ‖∞` on the generator's norm; residual tolerances scale with it.
    pub fn norm_scale(&self) -> f64 {
        let k: f64 = self.jumps.iter().map(|g| g.adjoint().matmul(g).inf_norm()).sum();
        (2.0 * self.h.inf_norm() + 2.0 * k).max(1e-300)
    }

    /// The vectorized generator; fails when `D²` exceeds `cap`.
    pub fn superoperator(&self, cap: usize) -> Result<&SparseOperator> {
        if let Some(s) = self.superop.get() {
            return Ok(s);
        }
        let d = self.dim();
        checked_power(d, 2, cap)?;
        let h = self.h.to_sparse();
        let id = SparseOperator::identity(d);
        let mut terms = vec![id.kron(&h).scale(-I), h.transpose().kron(&id).scale(I)];
        for g in &self.jumps {
            let g = g.to_sparse();
            let k = g.adjoint().matmul(&g);
            terms.push(g.conj().kron(&g));
            terms.push(id.kron(&k).scale(c64::new(-0.5, 0.0)));
            terms.push(k.transpose().kron(&id).scale(c64::new(-0.5, 0.0)));
        }
        let l = crate::sparse::sum_operators(terms.iter()).expect("non-empty");
        Ok(self.superop.get_or_init(|| l))
    }

    /// `L(ρ) = -i[H, ρ] + Σ_k (Γ_k ρ Γ_k† - ½{Γ_k†Γ_k, ρ})` on a dense matrix.
    pub fn apply_dense(&self, rho: faer::MatRef<'_, c64>) -> Mat<c64> {
        let hr = self.h.mul_dense(rho);
        // ρH = (Hρ†)† for Hermitian H
        let rh = self.h.mul_dense(rho.adjoint().to_owned().as_ref()).adjoint().to_owned();
        let mut out = Mat::from_fn(rho.nrows(), rho.ncols(), |i, j| -I * (hr[(i, j)] - rh[(i, j)]));
        for g in &self.jumps {
            let gr = g.mul_dense(rho);
            let grg = g.mul_dense(gr.adjoint().to_owned().as_ref()).adjoint().to_owned();
            let gd = g.adjoint();
            let kr = gd.mul_dense(gr.as_ref());
            let rk = gd
                .mul_dense(g.mul_dense(rho.adjoint().to_owned().as_ref()).as_ref())
                .adjoint()
                .to_owned();
            out += grg;
            out -= (kr + rk) * faer::Scale(c64::new(0.5, 0.0));
        }
        out
    }

    pub fn sector_system(&self) -> Result<SectorSystem> {
        let trivial;
        let signs = match &self.grading {
            Some(s) => s.as_slice(),
            None => {
                trivial = vec![1i8; self.dim()];
                trivial.as_slice()
            }
        };
        SectorSystem::new(&self.h, &self.jumps, signs)
    }

    fn density(&self, m: Mat<c64>) -> Result<DensityMatrix> {
        let rho = DensityMatrix::from_unnormalized(self.basis, m)?;
        match &self.grading {
            Some(g) => rho.with_grading(g.clone()),
            None => Ok(rho),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Sparse LU on the trace-bordered superoperator.
    Direct,
    /// Shift-invert Arnoldi for the eigenvalue of smallest modulus.
    Eigen,
    /// Preconditioned GMRES with a rank-one trace constraint.
    Iterative,
    /// Long-time Runge-Kutta evolution.
    Evolution,
    /// Corner-space renormalization.
    Corner,
}

impl SolverMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverMethod::Direct => "direct",
            SolverMethod::Eigen => "eigen",
            SolverMethod::Iterative => "iterative",
            SolverMethod::Evolution => "evolution",
            SolverMethod::Corner => "corner",
        }
    }
}

impl std::str::FromStr for SolverMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "direct" => SolverMethod::Direct,
            "eigen" => SolverMethod::Eigen,
            "iterative" => SolverMethod::Iterative,
            "evolution" => SolverMethod::Evolution,
            "corner" => SolverMethod::Corner,
            other => return Err(Error::InvalidInput(format!("unknown solver method '{other}'"))),
        })
    }
}

#[derive(Clone, Debug)]
pub struct SteadyStateResult {
    pub rho: DensityMatrix,
    /// `‖L vec(ρ)‖₂`.
    pub residual: f64,
    pub method: SolverMethod,
    pub iterations: usize,
    pub wall_time_s: f64,
    /// Modulus of the slowest decaying even-sector mode, when computed.
    pub even_gap: Option<f64>,
    /// Modulus of the slowest odd-sector mode, when computed.
    pub odd_gap: Option<f64>,
    /// Set when the odd-sector mode is within tolerance of zero: the returned
    /// state is then the parity-even projection of a near-degenerate null space.
    pub near_degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SteadyStateOptions {
    /// Residual target relative to [`Liouvillian::norm_scale`].
    pub tol: f64,
    pub direct_cap: usize,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub max_iter: usize,
    pub krylov_dim: usize,
    /// Relative threshold below which an eigenvalue counts as zero.
    pub degeneracy_tol: f64,
    /// Also compute the slowest odd-sector mode (costs one more Arnoldi run).
    pub probe_odd_sector: bool,
    pub seed: u64,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            direct_cap: DEFAULT_DIRECT_CAP,
            gmres_tol: 1e-11,
            gmres_restart: 40,
            max_iter: 3000,
            krylov_dim: 12,
            degeneracy_tol: 1e-8,
            probe_odd_sector: true,
            seed: 0x5eed,
        }
    }
}

impl SteadyStateOptions {
    pub(crate) fn gmres(&self) -> GmresOptions {
        GmresOptions {
            tol: self.gmres_tol,
            restart: self.gmres_restart,
            max_iter: self.max_iter,
        }
    }

    fn eigen(&self, n_eigs: usize, seed: u64) -> EigenOptions {
        EigenOptions {
            tol: 1e-10,
            krylov_dim: self.krylov_dim,
            max_restarts: 30,
            n_eigs,
            inner_tol: self.gmres_tol.min(1e-12),
            inner_restart: self.gmres_restart,
            inner_max_iter: self.max_iter,
            seed,
        }
    }
}

fn check_residual(residual: f64, liou: &Liouvillian, opts: &SteadyStateOptions, iterations: usize) -> Result<()> {
    if !residual.is_finite() || residual > opts.tol * liou.norm_scale() {
        return Err(Error::NotConverged { iterations, residual });
    }
    Ok(())
}

/// Sparse LU on the square bordered system `[[L, s·vec(I)], [s·vec(I)ᵀ, 0]] [x; μ] = [0; s]`.
/// For a unique null vector this is the exact solution of the trace-augmented
/// least-squares problem (with `μ = 0`).
pub fn steady_state_direct(liou: &Liouvillian, opts: &SteadyStateOptions) -> Result<SteadyStateResult> {
    let start = Instant::now();
    let d = liou.dim();
    let l = liou.superoperator(opts.direct_cap)?;
    let n = d * d;
    let s = liou.norm_scale();
    let mut triplets: Vec<Triplet<usize, usize, c64>> = l.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
    for i in 0..d {
        triplets.push(Triplet::new(i + i * d, n, c64::new(s, 0.0)));
        triplets.push(Triplet::new(n, i + i * d, c64::new(s, 0.0)));
    }
    let a = SparseColMat::<usize, c64>::try_new_from_triplets(n + 1, n + 1, &triplets)
        .map_err(|e| Error::Linalg(format!("bordered matrix assembly: {e:?}")))?;
    let lu = a
        .sp_lu()
        .map_err(|e| Error::Singular(format!("sparse LU failed: {e:?}")))?;
    let mut rhs = Mat::<c64>::zeros(n + 1, 1);
    rhs[(n, 0)] = c64::new(s, 0.0);
    let x = lu.solve(&rhs);
    if (0..n + 1).any(|i| !x[(i, 0)].re.is_finite() || !x[(i, 0)].im.is_finite()) {
        return Err(Error::Singular("bordered system has no finite solution".into()));
    }
    let m = Mat::from_fn(d, d, |i, j| x[(i + j * d, 0)]);
    let raw_residual = norm(&l.apply(&(0..n).map(|k| x[(k, 0)]).collect::<Vec<_>>()));
    if raw_residual > opts.tol.sqrt() * s || x[(n, 0)].norm() > opts.tol.sqrt() * s {
        return Err(Error::Singular(format!(
            "null space is degenerate or ill-conditioned (residual {raw_residual:.3e})"
        )));
    }
    let rho = liou.density(m)?;
    let residual = frobenius(liou.apply_dense(rho.matrix()).as_ref());
    check_residual(residual, liou, opts, 1)?;
    Ok(SteadyStateResult {
        rho,
        residual,
        method: SolverMethod::Direct,
        iterations: 1,
        wall_time_s: start.elapsed().as_secs_f64(),
        even_gap: None,
        odd_gap: None,
        near_degenerate: false,
    })
}

/// Preconditioned GMRES in the even parity sector.
pub fn steady_state_iterative(liou: &Liouvillian, opts: &SteadyStateOptions) -> Result<SteadyStateResult> {
    let start = Instant::now();
    let sys = liou.sector_system()?;
    let sv = sys.steady_state(&opts.gmres(), None)?;
    let rho = liou.density(sys.assemble(&sv.x))?;
    let residual = frobenius(liou.apply_dense(rho.matrix()).as_ref());
    check_residual(residual, liou, opts, sv.iterations)?;
    Ok(SteadyStateResult {
        rho,
        residual,
        method: SolverMethod::Iterative,
        iterations: sv.iterations,
        wall_time_s: start.elapsed().as_secs_f64(),
        even_gap: None,
        odd_gap: None,
        near_degenerate: false,
    })
}

/// Shift-invert Arnoldi for the eigenvector of smallest `|λ|`, with inner
/// preconditioned GMRES solves. A second, deflated pass measures the next
/// even-sector eigenvalue; if it is also zero the steady state is not unique.
pub fn steady_state_eigen(liou: &Liouvillian, opts: &SteadyStateOptions) -> Result<SteadyStateResult> {
    let start = Instant::now();
    let sys = liou.sector_system()?;
    let shift = c64::new(-1e-2 * sys.decay_scale().max(1e-3 * sys.scale()), 0.0);
    let zero_tol = opts.degeneracy_tol * liou.norm_scale();

    let (pairs, it1) = sys.eigs_near(Sector::Even, shift, None, &opts.eigen(1, opts.seed))?;
    let (lambda0, mut x) = pairs
        .into_iter()
        .next()
        .ok_or_else(|| Error::Linalg("empty sector".into()))?;
    if lambda0.norm() > zero_tol.max(1e-6 * sys.scale()) {
        return Err(Error::Singular(format!("smallest eigenvalue {lambda0} is not zero")));
    }
    sys.normalize_state(&mut x)?;
    let mut iterations = it1;

    let even_gap = if sys.sector_len(Sector::Even) > 1 {
        let (pairs, it2) = sys.eigs_near(Sector::Even, shift, Some(&x), &opts.eigen(1, opts.seed ^ 0x9e37))?;
        iterations += it2;
        pairs.first().map(|p| p.0.norm())
    } else {
        None
    };
    if let Some(gap) = even_gap {
        if gap <= zero_tol {
            return Err(Error::DegenerateSteadyState { gap });
        }
    }
    let odd_gap = if opts.probe_odd_sector && sys.sector_len(Sector::Odd) > 0 {
        let (pairs, it3) = sys.eigs_near(Sector::Odd, shift, None, &opts.eigen(1, opts.seed ^ 0x7f4a))?;
        iterations += it3;
        pairs.first().map(|p| p.0.norm())
    } else {
        None
    };
    let near_degenerate = odd_gap.is_some_and(|g| g <= zero_tol);
    if near_degenerate {
        log::warn!("odd-sector eigenvalue within {zero_tol:.1e} of zero; returning the parity-even steady state");
    }

    let rho = liou.density(sys.assemble(&x))?;
    let residual = frobenius(liou.apply_dense(rho.matrix()).as_ref());
    check_residual(residual, liou, opts, iterations)?;
    Ok(SteadyStateResult {
        rho,
        residual,
        method: SolverMethod::Eigen,
        iterations,
        wall_time_s: start.elapsed().as_secs_f64(),
        even_gap,
        odd_gap,
        near_degenerate,
    })
}

/// Largest `|λ|` of the superoperator by power iteration, with a 10% margin.
pub fn spectral_radius_estimate(l: &SparseOperator, seed: u64) -> f64 {
    let n = l.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<c64> = (0..n)
        .map(|_| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let mut est = 0.0;
    for _ in 0..60 {
        let nv = norm(&v);
        if nv == 0.0 {
            return 0.0;
        }
        for x in v.iter_mut() {
            *x /= nv;
        }
        let w = l.apply(&v);
        est = norm(&w);
        v = w;
    }
    1.1 * est
}

/// Fixed-step classical Runge-Kutta integration of `dρ/dt = L(ρ)` on the
/// vectorized generator. Requires `dt · r < 2.5` for the estimated spectral
/// radius `r` and aborts if the trace drifts by more than `1e-8`.
pub fn time_evolve(rho0: &DensityMatrix, liou: &Liouvillian, t_final: f64, dt: f64) -> Result<DensityMatrix> {
    time_evolve_capped(rho0, liou, t_final, dt, DEFAULT_DIRECT_CAP)
}

pub fn time_evolve_capped(
    rho0: &DensityMatrix,
    liou: &Liouvillian,
    t_final: f64,
    dt: f64,
    cap: usize,
) -> Result<DensityMatrix> {
    if rho0.basis() != liou.basis() {
        return Err(Error::BasisMismatch(format!(
            "{:?} vs {:?}",
            rho0.basis(),
            liou.basis()
        )));
    }
    if !(dt > 0.0) || !(t_final >= 0.0) {
        return Err(Error::InvalidInput("time step must be > 0 and final time >= 0".into()));
    }
    let l = liou.superoperator(cap)?;
    let radius = spectral_radius_estimate(l, 17);
    if dt * radius >= 2.5 {
        return Err(Error::Unstable(format!(
            "dt = {dt:.3e} exceeds the RK4 stability bound 2.5 / {radius:.3e}"
        )));
    }
    let d = liou.dim();
    let steps = (t_final / dt).ceil() as usize;
    let h = if steps == 0 { 0.0 } else { t_final / steps as f64 };
    let m0 = rho0.matrix();
    let mut x: Vec<c64> = (0..d * d).map(|k| m0[(k % d, k / d)]).collect();
    let tr0: c64 = (0..d).map(|i| x[i + i * d]).sum();
    let trace = |x: &[c64]| -> c64 { (0..d).map(|i| x[i + i * d]).sum() };
    let mut tmp = vec![ZERO; d * d];
    let mut k1 = vec![ZERO; d * d];
    let mut k2 = vec![ZERO; d * d];
    let mut k3 = vec![ZERO; d * d];
    let mut k4 = vec![ZERO; d * d];
    for step in 0..steps {
        l.matvec(&x, &mut k1);
        for i in 0..x.len() {
            tmp[i] = x[i] + k1[i] * (0.5 * h);
        }
        l.matvec(&tmp, &mut k2);
        for i in 0..x.len() {
            tmp[i] = x[i] + k2[i] * (0.5 * h);
        }
        l.matvec(&tmp, &mut k3);
        for i in 0..x.len() {
            tmp[i] = x[i] + k3[i] * h;
        }
        l.matvec(&tmp, &mut k4);
        for i in 0..x.len() {
            x[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
        if step % 256 == 255 || step + 1 == steps {
            let drift = (trace(&x) - tr0).norm();
            if !(drift <= 1e-8) {
                return Err(Error::Unstable(format!(
                    "trace drift {drift:.3e} after {} steps",
                    step + 1
                )));
            }
        }
    }
    let m = Mat::from_fn(d, d, |i, j| x[i + j * d]);
    let m = hermitize(m.as_ref());
    let rho = DensityMatrix::new(liou.basis(), m)
        .or_else(|_| DensityMatrix::from_unnormalized(liou.basis(), Mat::from_fn(d, d, |i, j| x[i + j * d])))?;
    match liou.grading() {
        Some(g) => rho.with_grading(g.to_vec()),
        None => Ok(rho),
    }
}

/// Steady state by long-time evolution from the maximally mixed state.
pub fn steady_state_evolution(
    liou: &Liouvillian,
    t_final: f64,
    opts: &SteadyStateOptions,
) -> Result<SteadyStateResult> {
    let start = Instant::now();
    let l = liou.superoperator(opts.direct_cap)?;
    let dt = 2.0 / spectral_radius_estimate(l, 17).max(1e-300);
    let rho0 = DensityMatrix::maximally_mixed(liou.basis());
    let rho = time_evolve_capped(&rho0, liou, t_final, dt, opts.direct_cap)?;
    let residual = frobenius(liou.apply_dense(rho.matrix()).as_ref());
    Ok(SteadyStateResult {
        rho,
        residual,
        method: SolverMethod::Evolution,
        iterations: (t_final / dt).ceil() as usize,
        wall_time_s: start.elapsed().as_secs_f64(),
        even_gap: None,
        odd_gap: None,
        near_degenerate: false,
    })
}

/// Dispatches to the solver named by `method` (corner excluded).
pub fn steady_state(liou: &Liouvillian, method: SolverMethod, opts: &SteadyStateOptions) -> Result<SteadyStateResult> {
    match method {
        SolverMethod::Direct => steady_state_direct(liou, opts),
        SolverMethod::Eigen => steady_state_eigen(liou, opts),
        SolverMethod::Iterative => steady_state_iterative(liou, opts),
        SolverMethod::Evolution => steady_state_evolution(liou, 200.0, opts),
        SolverMethod::Corner => Err(Error::InvalidInput(
            "corner solves need a lattice; use the corner module".into(),
        )),
    }
}

pub(crate) fn frobenius(m: faer::MatRef<'_, c64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

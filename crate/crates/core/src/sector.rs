//! Matrix-free Lindbladian action restricted to parity sectors, with a
//! Sylvester preconditioner built from the effective non-Hermitian Hamiltonian.
//!
//! With a ±1 grading of the basis (photon-number parity), `H` is block diagonal
//! and every jump operator is either even or odd. A density matrix splits into
//! the even Liouville sector (blocks ee, oo), which holds the steady state, and
//! the odd sector (blocks eo, oe), whose slowest mode signals symmetry breaking.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, MatRef};
use num_complex::Complex64 as c64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::krylov::{arnoldi, gmres, norm, GmresOptions, RitzPair};
use crate::operator::{Block, Operator};

const I: c64 = c64::new(0.0, 1.0);
const ZERO: c64 = c64::new(0.0, 0.0);
/// Relative size of a block that still counts as zero when checking the grading.
const GRADING_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sector {
    /// Blocks (even, even) and (odd, odd).
    Even,
    /// Blocks (even, odd) and (odd, even).
    Odd,
}

impl Sector {
    fn blocks(self) -> [(usize, usize); 2] {
        match self {
            Sector::Even => [(0, 0), (1, 1)],
            Sector::Odd => [(0, 1), (1, 0)],
        }
    }
}

struct GradedJump {
    odd: bool,
    /// `blocks[s]` maps sector `s ^ odd` into sector `s`.
    blocks: [Option<Block>; 2],
}

struct SylvesterFactor {
    v: Mat<c64>,
    v_inv: Mat<c64>,
    v_inv_adj: Mat<c64>,
    v_adj: Mat<c64>,
    lambda: Vec<c64>,
}

pub struct SectorSystem {
    dims: [usize; 2],
    index: [Vec<usize>; 2],
    h_eff: [Option<Block>; 2],
    jumps: Vec<GradedJump>,
    factors: [SylvesterFactor; 2],
    scale: f64,
    decay: f64,
    regularizer: f64,
}

impl SectorSystem {
    /// Splits `h` and `jumps` by the grading `signs` (entries ±1). Fails if an
    /// operator mixes even and odd parts.
    pub fn new(h: &Operator, jumps: &[Operator], signs: &[i8]) -> Result<Self> {
        Self::build(h, jumps, None, signs)
    }

    /// Like [`SectorSystem::new`], but with the anticommutator term `-½{K, ρ}`
    /// taken from `decay` instead of `Σ Γ†Γ`. With `K ≥ Σ Γ†Γ` the generator
    /// loses trace, and its steady state is the leading eigenvector
    /// (see [`SectorSystem::leading_state`]).
    pub fn with_decay(h: &Operator, jumps: &[Operator], decay: &Operator, signs: &[i8]) -> Result<Self> {
        Self::build(h, jumps, Some(decay), signs)
    }

    fn build(h: &Operator, jumps: &[Operator], decay: Option<&Operator>, signs: &[i8]) -> Result<Self> {
        let d = h.dim();
        if signs.len() != d {
            return Err(Error::DimensionMismatch {
                context: "sector grading",
                expected: d,
                found: signs.len(),
            });
        }
        for j in jumps.iter().chain(decay) {
            if j.dim() != d {
                return Err(Error::DimensionMismatch {
                    context: "jump operator",
                    expected: d,
                    found: j.dim(),
                });
            }
        }
        let index: [Vec<usize>; 2] = [
            (0..d).filter(|&i| signs[i] >= 0).collect(),
            (0..d).filter(|&i| signs[i] < 0).collect(),
        ];
        let dims = [index[0].len(), index[1].len()];

        let parity_of = |op: &Operator| -> Result<bool> {
            let scale = op.inf_norm().max(1e-300);
            let mut even = false;
            let mut odd = false;
            for (r, c, v) in op.entries(GRADING_TOLERANCE * scale) {
                if v.norm() > GRADING_TOLERANCE * scale {
                    if signs[r] == signs[c] {
                        even = true;
                    } else {
                        odd = true;
                    }
                }
            }
            if even && odd {
                return Err(Error::InvalidInput("operator does not have definite parity".into()));
            }
            Ok(odd)
        };

        if parity_of(h)? {
            return Err(Error::InvalidInput("Hamiltonian must be parity even".into()));
        }
        if let Some(k) = decay {
            if parity_of(k)? {
                return Err(Error::InvalidInput("decay operator must be parity even".into()));
            }
        }
        let mut k: Option<Operator> = None;
        let mut graded = Vec::with_capacity(jumps.len());
        for j in jumps {
            let odd = parity_of(j)?;
            let jj = j.adjoint().matmul(j);
            k = Some(match k {
                None => jj,
                Some(acc) => acc.add_scaled(&jj, c64::new(1.0, 0.0)),
            });
            let blocks = [0usize, 1].map(|s| {
                let src = if odd { 1 - s } else { s };
                if dims[s] == 0 || dims[src] == 0 {
                    None
                } else {
                    j.block(&index[s], &index[src])
                }
            });
            graded.push(GradedJump { odd, blocks });
        }
        if let Some(decay) = decay {
            k = Some(decay.clone());
        }
        let h_eff = match &k {
            Some(k) => h.add_scaled(k, c64::new(0.0, -0.5)),
            None => h.clone(),
        };
        let mut scale = 0.0f64;
        let mut max_decay = 0.0f64;
        let mut factors = Vec::with_capacity(2);
        let mut blocks = Vec::with_capacity(2);
        for s in 0..2 {
            let block = if dims[s] == 0 {
                None
            } else {
                h_eff.block(&index[s], &index[s])
            };
            let dense = match &block {
                Some(b) => b.to_dense(),
                None => Mat::<c64>::zeros(dims[s], dims[s]),
            };
            let f = sylvester_factor(dense.as_ref())?;
            for l in &f.lambda {
                scale = scale.max(l.norm());
                max_decay = max_decay.max(-l.im);
            }
            factors.push(f);
            blocks.push(block);
        }
        let mut factors = factors.into_iter();
        let mut blocks = blocks.into_iter();
        let scale = scale.max(1e-300);
        Ok(Self {
            dims,
            index,
            h_eff: [blocks.next().unwrap(), blocks.next().unwrap()],
            jumps: graded,
            factors: [factors.next().unwrap(), factors.next().unwrap()],
            scale,
            decay: max_decay,
            regularizer: 1e-3 * max_decay.max(1e-12 * scale),
        })
    }

    /// Hilbert-space dimension.
    pub fn dim(&self) -> usize {
        self.dims[0] + self.dims[1]
    }

    pub fn sector_dims(&self) -> [usize; 2] {
        self.dims
    }

    /// Largest modulus of the effective-Hamiltonian spectrum; sets the scale of `L`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Largest decay rate `-Im λ` of the effective Hamiltonian.
    pub fn decay_scale(&self) -> f64 {
        self.decay
    }

    /// Length of a flattened vector in `sector`.
    pub fn sector_len(&self, sector: Sector) -> usize {
        sector.blocks().iter().map(|&(s, t)| self.dims[s] * self.dims[t]).sum()
    }

    fn offsets(&self, sector: Sector) -> [(usize, usize, usize); 2] {
        let [(s0, t0), (s1, t1)] = sector.blocks();
        let n0 = self.dims[s0] * self.dims[t0];
        [(s0, t0, 0), (s1, t1, n0)]
    }

    fn view<'a>(&self, x: &'a [c64], sector: Sector, s: usize) -> MatRef<'a, c64> {
        let (bs, bt, off) = self.offsets(sector).into_iter().find(|o| o.0 == s).unwrap();
        let len = self.dims[bs] * self.dims[bt];
        MatRef::from_column_major_slice(&x[off..off + len], self.dims[bs], self.dims[bt])
    }

    /// `(L - shift) x` for a vector in `sector`.
    pub fn apply(&self, sector: Sector, x: &[c64], shift: c64) -> Vec<c64> {
        let mut y = vec![ZERO; x.len()];
        for (s, t, off) in self.offsets(sector) {
            let (ds, dt) = (self.dims[s], self.dims[t]);
            if ds == 0 || dt == 0 {
                continue;
            }
            let xb = self.view(x, sector, s);
            let mut out = Mat::<c64>::from_fn(ds, dt, |i, j| -shift * xb[(i, j)]);
            if let Some(h) = &self.h_eff[s] {
                let hx = h.mul_dense(xb);
                out += hx * faer::Scale(-I);
            }
            if let Some(h) = &self.h_eff[t] {
                // X·H_t† = (H_t·X†)†
                let hxd = h.mul_dense(xb.adjoint().to_owned().as_ref());
                out += hxd.adjoint() * faer::Scale(I);
            }
            for jump in &self.jumps {
                let (s2, t2) = if jump.odd { (1 - s, 1 - t) } else { (s, t) };
                let (Some(gs), Some(gt)) = (&jump.blocks[s], &jump.blocks[t]) else {
                    continue;
                };
                if self.dims[s2] == 0 || self.dims[t2] == 0 {
                    continue;
                }
                let xin = self.view(x, sector, s2);
                let left = gs.mul_dense(xin);
                let both = gt.mul_dense(left.adjoint().to_owned().as_ref());
                out += both.adjoint();
            }
            let dst = &mut y[off..off + ds * dt];
            for j in 0..dt {
                for i in 0..ds {
                    dst[i + j * ds] = out[(i, j)];
                }
            }
        }
        y
    }

    /// Approximate inverse of `L - shift` that neglects the jump (recycling) terms.
    pub fn precondition(&self, sector: Sector, y: &[c64], shift: c64) -> Vec<c64> {
        let mut x = vec![ZERO; y.len()];
        for (s, t, off) in self.offsets(sector) {
            let (ds, dt) = (self.dims[s], self.dims[t]);
            if ds == 0 || dt == 0 {
                continue;
            }
            let (fs, ft) = (&self.factors[s], &self.factors[t]);
            let yb = self.view(y, sector, s);
            let mut z = &fs.v_inv * yb * &ft.v_inv_adj;
            for j in 0..dt {
                for i in 0..ds {
                    let den = -I * (fs.lambda[i] - ft.lambda[j].conj()) - shift - self.regularizer;
                    z[(i, j)] /= den;
                }
            }
            let xb = &fs.v * z * &ft.v_adj;
            let dst = &mut x[off..off + ds * dt];
            for j in 0..dt {
                for i in 0..ds {
                    dst[i + j * ds] = xb[(i, j)];
                }
            }
        }
        x
    }

    /// Trace of an even-sector vector.
    pub fn trace(&self, x: &[c64]) -> c64 {
        let mut tr = ZERO;
        for (s, _, off) in self.offsets(Sector::Even) {
            let d = self.dims[s];
            for i in 0..d {
                tr += x[off + i + i * d];
            }
        }
        tr
    }

    /// Even-sector vector of the identity matrix.
    pub fn identity(&self) -> Vec<c64> {
        let mut x = vec![ZERO; self.sector_len(Sector::Even)];
        for (s, _, off) in self.offsets(Sector::Even) {
            let d = self.dims[s];
            for i in 0..d {
                x[off + i + i * d] = c64::new(1.0, 0.0);
            }
        }
        x
    }

    /// Scatters an even-sector vector into a full `D × D` matrix.
    pub fn assemble(&self, x: &[c64]) -> Mat<c64> {
        let d = self.dim();
        let mut m = Mat::<c64>::zeros(d, d);
        for (s, _, _) in self.offsets(Sector::Even) {
            let b = self.view(x, Sector::Even, s);
            let idx = &self.index[s];
            for j in 0..idx.len() {
                for i in 0..idx.len() {
                    m[(idx[i], idx[j])] = b[(i, j)];
                }
            }
        }
        m
    }

    /// Gathers the even-sector blocks of a full matrix.
    pub fn restrict(&self, m: MatRef<'_, c64>) -> Vec<c64> {
        let mut x = vec![ZERO; self.sector_len(Sector::Even)];
        for (s, _, off) in self.offsets(Sector::Even) {
            let idx = &self.index[s];
            let d = idx.len();
            for j in 0..d {
                for i in 0..d {
                    x[off + i + j * d] = m[(idx[i], idx[j])];
                }
            }
        }
        x
    }

    /// Hermitizes each diagonal block and normalizes the trace to one.
    pub fn normalize_state(&self, x: &mut [c64]) -> Result<()> {
        let tr = self.trace(x);
        if tr.norm() < 1e-300 || !tr.re.is_finite() {
            return Err(Error::Singular("steady-state candidate has zero trace".into()));
        }
        for v in x.iter_mut() {
            *v /= tr;
        }
        for (s, _, off) in self.offsets(Sector::Even) {
            let d = self.dims[s];
            for j in 0..d {
                for i in 0..=j {
                    let a = x[off + i + j * d];
                    let b = x[off + j + i * d];
                    let h = (a + b.conj()) * 0.5;
                    x[off + i + j * d] = h;
                    x[off + j + i * d] = h.conj();
                }
            }
        }
        Ok(())
    }

    /// Steady state by GMRES on `L(x) + c·Tr(x)·I/D = c·I/D`, whose unique
    /// solution is the trace-one null vector of `L` in the even sector.
    pub fn steady_state(&self, opts: &GmresOptions, x0: Option<&[c64]>) -> Result<SteadyVector> {
        self.bordered_solve(opts, x0, ZERO)
    }

    /// Trace-one solution of `(L - shift) x + c·Tr(x)·I/D = c·I/D`.
    fn bordered_solve(&self, opts: &GmresOptions, x0: Option<&[c64]>, shift: c64) -> Result<SteadyVector> {
        let c = c64::new(self.scale, 0.0);
        let r: Vec<c64> = self.identity().into_iter().map(|v| v / self.dim() as f64).collect();
        let b: Vec<c64> = r.iter().map(|v| c * v).collect();
        let apply = |x: &[c64]| {
            let mut y = self.apply(Sector::Even, x, shift);
            let t = c * self.trace(x);
            for (yi, ri) in y.iter_mut().zip(&r) {
                *yi += t * ri;
            }
            y
        };
        let precond = |y: &[c64]| self.precondition(Sector::Even, y, shift);
        let out = gmres(apply, precond, &b, x0, opts)?;
        let mut x = out.x;
        self.normalize_state(&mut x)?;
        let residual = norm(&self.apply(Sector::Even, &x, shift));
        Ok(SteadyVector {
            x,
            iterations: out.iterations,
            residual,
        })
    }

    /// Eigenvalues of `L` in `sector` closest to `shift` by shift-invert Arnoldi.
    /// Returns `(eigenvalue, eigenvector)` pairs ordered by distance to `shift`.
    ///
    /// With `deflate = Some(x1)` (a trace-one even-sector vector of the null
    /// space) the iterated operator is `v ↦ T v - x1·Tr(T v)`, which maps the
    /// known steady state to zero while keeping every other eigenvalue; any
    /// further null vector then shows up as an eigenvalue at zero.
    pub fn eigs_near(
        &self,
        sector: Sector,
        shift: c64,
        deflate: Option<&[c64]>,
        opts: &EigenOptions,
    ) -> Result<(Vec<(c64, Vec<c64>)>, usize)> {
        if deflate.is_some() && sector != Sector::Even {
            return Err(Error::InvalidInput(
                "deflation is defined for the even sector only".into(),
            ));
        }
        let n = self.sector_len(sector);
        if n == 0 {
            return Ok((Vec::new(), 0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut start: Vec<c64> = (0..n)
            .map(|_| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        if let Some(x1) = deflate {
            let t = self.trace(&start);
            for (si, xi) in start.iter_mut().zip(x1) {
                *si -= t * xi;
            }
        }
        let inner = GmresOptions {
            tol: opts.inner_tol,
            restart: opts.inner_restart,
            max_iter: opts.inner_max_iter,
        };
        let counter = std::cell::Cell::new(0usize);
        let solve = |v: &[c64]| -> Result<Vec<c64>> {
            let out = gmres(
                |x: &[c64]| self.apply(sector, x, shift),
                |y: &[c64]| self.precondition(sector, y, shift),
                v,
                None,
                &inner,
            )?;
            counter.set(counter.get() + out.iterations);
            let mut y = out.x;
            if let Some(x1) = deflate {
                let t = self.trace(&y);
                for (yi, xi) in y.iter_mut().zip(x1) {
                    *yi -= t * xi;
                }
            }
            Ok(y)
        };
        let want = opts.n_eigs.min(n);
        let mut last: Vec<RitzPair> = Vec::new();
        for _ in 0..opts.max_restarts.max(1) {
            last = arnoldi(solve, &start, opts.krylov_dim.max(want + 1))?;
            let converged = last.iter().take(want).all(|p| p.residual <= opts.tol * p.value.norm());
            if converged {
                break;
            }
            // explicit restart from the wanted Ritz vectors
            start = vec![ZERO; n];
            for p in last.iter().take(want) {
                for (s, v) in start.iter_mut().zip(&p.vector) {
                    *s += v;
                }
            }
        }
        let worst = last
            .iter()
            .take(want)
            .map(|p| p.residual / p.value.norm().max(1e-300))
            .fold(0.0, f64::max);
        if worst > opts.tol {
            return Err(Error::NotConverged {
                iterations: counter.get(),
                residual: worst,
            });
        }
        let pairs = last
            .into_iter()
            .take(want)
            .map(|p| (shift + 1.0 / p.value, p.vector))
            .collect();
        Ok((pairs, counter.get()))
    }
}

/// Normalized even-sector steady state with its residual `‖L x‖₂`.
impl SectorSystem {
    /// Leading even-sector eigenpair of a generator that may lose trace.
    ///
    /// Fixed point of `x ← bordered solve at shift λ`, `λ ← Tr(L x)`: at the
    /// leading eigenvalue `λ₀` the bordered system returns its eigenvector,
    /// and the map contracts by roughly `|λ₀| / gap`, so a generator that
    /// preserves trace is done after one solve.
    pub fn leading_state(&self, opts: &GmresOptions, x0: Option<&[c64]>, max_updates: usize) -> Result<LeadingState> {
        let mut value = ZERO;
        let mut iterations = 0;
        let mut start = x0.map(<[c64]>::to_vec);
        let mut last = f64::INFINITY;
        for _ in 0..max_updates.max(1) {
            let sv = self.bordered_solve(opts, start.as_deref(), value)?;
            iterations += sv.iterations;
            let next = self.trace(&self.apply(Sector::Even, &sv.x, ZERO));
            let step = (next - value).norm();
            value = next;
            let residual = norm(&self.apply(Sector::Even, &sv.x, value));
            last = residual;
            if step <= opts.tol * self.scale {
                return Ok(LeadingState {
                    value,
                    x: sv.x,
                    iterations,
                    residual,
                });
            }
            start = Some(sv.x);
        }
        Err(Error::NotConverged {
            iterations,
            residual: last,
        })
    }
}

#[derive(Clone, Debug)]
pub struct LeadingState {
    /// Eigenvalue; `-value.re` is the rate at which the state loses trace.
    pub value: c64,
    pub x: Vec<c64>,
    pub iterations: usize,
    /// `‖L x - value·x‖` for the normalized `x`.
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct SteadyVector {
    pub x: Vec<c64>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct EigenOptions {
    /// Relative Ritz residual target for the shift-inverted operator.
    pub tol: f64,
    pub krylov_dim: usize,
    pub max_restarts: usize,
    pub n_eigs: usize,
    pub inner_tol: f64,
    pub inner_restart: usize,
    pub inner_max_iter: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            krylov_dim: 12,
            max_restarts: 30,
            n_eigs: 2,
            inner_tol: 1e-12,
            inner_restart: 40,
            inner_max_iter: 3000,
            seed: 0x5eed,
        }
    }
}

fn sylvester_factor(m: MatRef<'_, c64>) -> Result<SylvesterFactor> {
    let n = m.nrows();
    if n == 0 {
        let e = Mat::<c64>::zeros(0, 0);
        return Ok(SylvesterFactor {
            v: e.clone(),
            v_inv: e.clone(),
            v_inv_adj: e.clone(),
            v_adj: e,
            lambda: Vec::new(),
        });
    }
    let evd = m
        .eigen()
        .map_err(|e| Error::Linalg(format!("effective Hamiltonian eigensolver: {e:?}")))?;
    let v = evd.U().to_owned();
    let lambda: Vec<c64> = (0..n).map(|i| evd.S()[i]).collect();
    let v_inv = v.partial_piv_lu().inverse();
    if v_inv
        .col_iter()
        .any(|c| c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()))
    {
        return Err(Error::Linalg("effective Hamiltonian is not diagonalizable".into()));
    }
    Ok(SylvesterFactor {
        v_adj: v.adjoint().to_owned(),
        v_inv_adj: v_inv.adjoint().to_owned(),
        v,
        v_inv,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{annihilation_op, number_op, parity_signs, FockSpace};
    use crate::sparse::SparseOperator;

    fn kerr_site(n_max: usize) -> (Operator, Vec<Operator>, Vec<i8>) {
        let fock = FockSpace::new(n_max).unwrap();
        let a = annihilation_op(&fock);
        let ad = a.adjoint();
        let h = &(&number_op(&fock) * 0.7) + &(&ad.matmul(&ad).matmul(&a).matmul(&a) * 2.0);
        let h = &h + &(&(&ad.matmul(&ad) + &a.matmul(&a)) * 1.5);
        let jumps = vec![Operator::Sparse(a.clone()), Operator::Sparse(&a.matmul(&a) * 0.8)];
        (Operator::Sparse(h), jumps, parity_signs(&fock, 1, 1 << 20).unwrap())
    }

    fn dense_lindblad(h: &Mat<c64>, jumps: &[Mat<c64>], x: &Mat<c64>) -> Mat<c64> {
        let mut out = (h * x - x * h) * faer::Scale(-I);
        for g in jumps {
            let gd = g.adjoint().to_owned();
            let k = &gd * g;
            out += g * x * &gd;
            out -= (&k * x + x * &k) * faer::Scale(c64::new(0.5, 0.0));
        }
        out
    }

    #[test]
    fn sector_action_matches_dense_lindbladian() {
        let (h, jumps, signs) = kerr_site(5);
        let sys = SectorSystem::new(&h, &jumps, &signs).unwrap();
        let hd = h.to_dense();
        let jd: Vec<Mat<c64>> = jumps.iter().map(|j| j.to_dense()).collect();
        let d = sys.dim();
        // parity-block-diagonal test matrix
        let x = Mat::from_fn(d, d, |i, j| {
            if signs[i] == signs[j] {
                c64::new((i * 7 + j) as f64 * 0.01, (i as f64 - j as f64) * 0.02)
            } else {
                ZERO
            }
        });
        let y_ref = dense_lindblad(&hd, &jd, &x);
        let y = sys.assemble(&sys.apply(Sector::Even, &sys.restrict(x.as_ref()), ZERO));
        for i in 0..d {
            for j in 0..d {
                assert!((y[(i, j)] - y_ref[(i, j)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn odd_sector_action_matches_dense_lindbladian() {
        let (h, jumps, signs) = kerr_site(4);
        let sys = SectorSystem::new(&h, &jumps, &signs).unwrap();
        let d = sys.dim();
        let x = Mat::from_fn(d, d, |i, j| {
            if signs[i] != signs[j] {
                c64::new((i + 2 * j) as f64 * 0.1, 0.05 * i as f64)
            } else {
                ZERO
            }
        });
        let y_ref = dense_lindblad(
            &h.to_dense(),
            &jumps.iter().map(|j| j.to_dense()).collect::<Vec<_>>(),
            &x,
        );
        // gather odd-sector layout by hand
        let mut v = Vec::new();
        for (s, t) in Sector::Odd.blocks() {
            for j in &sys.index[t] {
                for i in &sys.index[s] {
                    v.push(x[(*i, *j)]);
                }
            }
        }
        let y = sys.apply(Sector::Odd, &v, ZERO);
        let mut k = 0;
        for (s, t) in Sector::Odd.blocks() {
            for j in &sys.index[t] {
                for i in &sys.index[s] {
                    assert!((y[k] - y_ref[(*i, *j)]).norm() < 1e-12);
                    k += 1;
                }
            }
        }
    }

    #[test]
    fn preconditioner_inverts_jump_free_part() {
        let fock = FockSpace::new(4).unwrap();
        let h = Operator::Sparse(&number_op(&fock) * 1.3);
        let signs = parity_signs(&fock, 1, 1 << 20).unwrap();
        let sys = SectorSystem::new(&h, &[], &signs).unwrap();
        let shift = c64::new(-0.2, 0.0);
        let y: Vec<c64> = (0..sys.sector_len(Sector::Even))
            .map(|i| c64::new(i as f64, 1.0))
            .collect();
        let x = sys.precondition(Sector::Even, &y, shift);
        let back = sys.apply(Sector::Even, &x, shift);
        // exact up to the tiny regularizer
        for (a, b) in back.iter().zip(&y) {
            assert!((a - b).norm() < 1e-9 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn steady_state_of_damped_kerr_site_is_a_null_vector() {
        let (h, jumps, signs) = kerr_site(8);
        let sys = SectorSystem::new(&h, &jumps, &signs).unwrap();
        let ss = sys.steady_state(&GmresOptions::default(), None).unwrap();
        assert!(ss.residual < 1e-8 * sys.scale());
        assert!((sys.trace(&ss.x) - 1.0).norm() < 1e-12);
    }

    #[test]
    fn ungraded_operator_is_rejected() {
        let fock = FockSpace::new(2).unwrap();
        let a = annihilation_op(&fock);
        let mixed = &a + &SparseOperator::identity(3);
        let signs = parity_signs(&fock, 1, 1 << 20).unwrap();
        assert!(SectorSystem::new(&Operator::Sparse(mixed), &[], &signs).is_err());
    }
}

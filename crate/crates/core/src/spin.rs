//! Two-level description of each resonator in the basis of even and odd
//! Schrödinger cat states, and the quantum XY Hamiltonian it produces.
//!
//! With `|C±⟩ ∝ |α⟩ ± |−α⟩`, the annihilation operator maps the cat space
//! onto itself: `a|C+⟩ = α (N−/N+) |C−⟩` and `a|C−⟩ = α (N+/N−) |C+⟩`, i.e.
//! `a = (α/2)(B_x σ_x − i B_y σ_y)` with `|C+⟩ = |↑⟩`. Substituting into the
//! lattice Hamiltonian term by term gives, per site, the constants
//!
//! * detuning `−Δ|α|²(B_x² + B_y²)/4` plus the field `−(Δ|α|²A−/2) σ_z`,
//! * Kerr `(U/2)|α|⁴` (because `a²` acts as `α²` on the cat space),
//! * drive `(G α*² + G* α²)/2`,
//!
//! and the hopping `−(J|α|²/4d) [(A+ + 2) σ_x σ_x' + (A+ − 2) σ_y σ_y']` per bond.

use faer::{Mat, Side};
use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{annihilation_op, embed_site_op_capped, FockSpace, DEFAULT_DIM_CAP};
use crate::lattice::{build_hamiltonian, LatticeGeometry, ModelParams};
use crate::liouvillian::{steady_state_iterative, Liouvillian, SteadyStateOptions};
use crate::sparse::{sum_operators, SparseOperator};

const ZERO: c64 = c64::new(0.0, 0.0);
/// Largest tolerated norm deficit of a truncated cat state.
pub const CAT_NORM_TOLERANCE: f64 = 1e-8;
/// Largest spin lattice for [`build_xy_hamiltonian`].
pub const SPIN_SITE_CAP: usize = 20;

/// Cutoff `⌈|α|² + 8√(|α|²+1)⌉` at which the cat states are orthonormal to
/// about `1e-10`.
pub fn recommended_n_max(alpha: c64) -> usize {
    let n = alpha.norm_sqr();
    (n + 8.0 * (n + 1.0).sqrt()).ceil() as usize
}

/// Cutoff `⌈|α|² + 12√(|α|²+1)⌉ + 8` for projecting the Hamiltonian: the
/// Kerr term weighs the Fock tail by `n²`, so it needs a wider margin than
/// [`recommended_n_max`].
pub fn mapping_n_max(alpha: c64) -> usize {
    let n = alpha.norm_sqr();
    (n + 12.0 * (n + 1.0).sqrt()).ceil() as usize + 8
}

/// Even and odd cat states of amplitude `alpha` in a truncated Fock space.
#[derive(Clone, Debug)]
pub struct CatBasis {
    alpha: c64,
    n_max: usize,
    plus: Vec<c64>,
    minus: Vec<c64>,
}

impl CatBasis {
    pub fn alpha(&self) -> c64 {
        self.alpha
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `|C+⟩` in the Fock basis.
    pub fn plus(&self) -> &[c64] {
        &self.plus
    }

    /// `|C−⟩` in the Fock basis.
    pub fn minus(&self) -> &[c64] {
        &self.minus
    }

    /// `N+ = √(cosh|α|² / e^{|α|²})`.
    pub fn n_plus(&self) -> f64 {
        norm_plus(self.alpha.norm_sqr())
    }

    /// `N− = √(sinh|α|² / e^{|α|²})`.
    pub fn n_minus(&self) -> f64 {
        norm_minus(self.alpha.norm_sqr())
    }

    /// Column `s` is `|C+⟩` (`s = 0`) or `|C−⟩` (`s = 1`).
    pub fn vectors(&self) -> Mat<c64> {
        Mat::from_fn(
            self.plus.len(),
            2,
            |i, s| if s == 0 { self.plus[i] } else { self.minus[i] },
        )
    }
}

fn norm_plus(n: f64) -> f64 {
    // cosh(n)/e^n = (1 + e^{-2n})/2
    ((1.0 + (-2.0 * n).exp()) / 2.0).sqrt()
}

fn norm_minus(n: f64) -> f64 {
    (-(-2.0 * n).exp_m1() / 2.0).sqrt()
}

/// Builds `|C±⟩` from their Fock amplitudes `α^k/√k! / √cosh|α|²` (even `k`)
/// and `α^k/√k! / √sinh|α|²` (odd `k`). At `α = 0` the odd state is its limit `|1⟩`.
pub fn cat_states(alpha: c64, fock: &FockSpace) -> Result<CatBasis> {
    if !alpha.re.is_finite() || !alpha.im.is_finite() {
        return Err(Error::InvalidInput("cat amplitude must be finite".into()));
    }
    let d = fock.dim();
    let n = alpha.norm_sqr();
    let mut plus = vec![ZERO; d];
    let mut minus = vec![ZERO; d];
    if n == 0.0 {
        plus[0] = c64::new(1.0, 0.0);
        if d < 2 {
            return Err(Error::TruncationInsufficient {
                n_max: fock.n_max(),
                deficit: 1.0,
            });
        }
        minus[1] = c64::new(1.0, 0.0);
    } else {
        // |α⟩ has amplitudes e^{-|α|²/2} α^k/√k!, and ‖|α⟩ ± |−α⟩‖ = 2N±
        let (np, nm) = (norm_plus(n), norm_minus(n));
        let mut coef = c64::new((-n / 2.0).exp(), 0.0);
        for k in 0..d {
            if k > 0 {
                coef = coef * alpha / (k as f64).sqrt();
            }
            if k % 2 == 0 {
                plus[k] = coef / np;
            } else {
                minus[k] = coef / nm;
            }
        }
    }
    for v in [&mut plus, &mut minus] {
        let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let deficit = 1.0 - norm2;
        if deficit > CAT_NORM_TOLERANCE {
            return Err(Error::TruncationInsufficient {
                n_max: fock.n_max(),
                deficit,
            });
        }
        let s = 1.0 / norm2.sqrt();
        for z in v.iter_mut() {
            *z *= s;
        }
    }
    Ok(CatBasis {
        alpha,
        n_max: fock.n_max(),
        plus,
        minus,
    })
}

/// `⟨C^s|a|C^s'⟩` computed in the Fock basis (`s = 0` is `C+`).
pub fn annihilation_on_cats(basis: &CatBasis) -> Result<[[c64; 2]; 2]> {
    let fock = FockSpace::new(basis.n_max)?;
    let a = annihilation_op(&fock);
    let vecs = [basis.plus(), basis.minus()];
    let mut out = [[ZERO; 2]; 2];
    for (sp, col) in vecs.iter().enumerate() {
        let av = a.apply(col);
        for (s, row) in vecs.iter().enumerate() {
            out[s][sp] = row.iter().zip(&av).map(|(x, y)| x.conj() * y).sum();
        }
    }
    Ok(out)
}

/// Coefficients of the cat-basis description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinModelCoefficients {
    pub alpha: c64,
    /// `tanh|α|² + 1/tanh|α|²`.
    pub a_plus: f64,
    /// `tanh|α|² − 1/tanh|α|²`.
    pub a_minus: f64,
    /// `N−/N+ + N+/N−`.
    pub b_x: f64,
    /// `N−/N+ − N+/N−`.
    pub b_y: f64,
    /// `Δ|α|²A−/2`; the Hamiltonian contains `−h_z Σ σ_z`.
    pub h_z: f64,
    /// `(J|α|²/4d)(A+ + 2)`.
    pub c_xx: f64,
    /// `(J|α|²/4d)(A+ − 2)`.
    pub c_yy: f64,
    /// Per-site constant dropped from the spin Hamiltonian.
    pub site_constant: f64,
    pub dimensionality: usize,
}

impl SpinModelCoefficients {
    pub fn new(alpha: c64, params: &ModelParams, dimensionality: usize) -> Result<Self> {
        let n = alpha.norm_sqr();
        if n == 0.0 {
            return Err(Error::InvalidInput("the spin description needs α ≠ 0".into()));
        }
        if dimensionality == 0 {
            return Err(Error::InvalidInput("dimensionality must be >= 1".into()));
        }
        let t = n.tanh();
        let a_plus = t + 1.0 / t;
        let a_minus = t - 1.0 / t;
        let r = t.sqrt(); // N−/N+
        let b_x = r + 1.0 / r;
        let b_y = r - 1.0 / r;
        let hop = params.j_hop * n / (4.0 * dimensionality as f64);
        let drive = (params.g * alpha.conj() * alpha.conj()).re; // (Gα*² + G*α²)/2
        let site_constant = -params.delta * n * (b_x * b_x + b_y * b_y) / 4.0 + params.u * n * n / 2.0 + drive;
        Ok(Self {
            alpha,
            a_plus,
            a_minus,
            b_x,
            b_y,
            h_z: params.delta * n * a_minus / 2.0,
            c_xx: hop * (a_plus + 2.0),
            c_yy: hop * (a_plus - 2.0),
            site_constant,
            dimensionality,
        })
    }

    /// `(α/2)(B_x σ_x − i B_y σ_y)`.
    pub fn annihilation_matrix(&self) -> [[c64; 2]; 2] {
        let h = self.alpha / 2.0;
        [[ZERO, h * (self.b_x - self.b_y)], [h * (self.b_x + self.b_y), ZERO]]
    }
}

fn pauli(entries: [[c64; 2]; 2]) -> SparseOperator {
    SparseOperator::from_triplets(
        2,
        (0..2)
            .flat_map(|r| (0..2).map(move |c| (r, c)))
            .map(|(r, c)| (r, c, entries[r][c])),
    )
}

pub fn sigma_x() -> SparseOperator {
    let one = c64::new(1.0, 0.0);
    pauli([[ZERO, one], [one, ZERO]])
}

pub fn sigma_y() -> SparseOperator {
    let i = c64::new(0.0, 1.0);
    pauli([[ZERO, -i], [i, ZERO]])
}

/// `σ_z = diag(1, −1)`, with `|↑⟩ = |C+⟩` first.
pub fn sigma_z() -> SparseOperator {
    pauli([[c64::new(1.0, 0.0), ZERO], [ZERO, c64::new(-1.0, 0.0)]])
}

/// `H_XY = −h_z Σ σ_z − Σ_bonds w [c_xx σ_x σ_x' + c_yy σ_y σ_y']` on `2^N` states.
pub fn build_xy_hamiltonian(coeffs: &SpinModelCoefficients, geom: &LatticeGeometry) -> Result<SparseOperator> {
    let n = geom.n_sites();
    if n > SPIN_SITE_CAP {
        return Err(Error::DimensionCap {
            dim: 1u128 << n.min(127),
            cap: 1 << SPIN_SITE_CAP,
        });
    }
    let cap = 1usize << SPIN_SITE_CAP;
    let embed = |op: &SparseOperator, j: usize| embed_site_op_capped(op, j, n, cap);
    let (sx, sy, sz) = (sigma_x(), sigma_y(), sigma_z());
    let mut terms = Vec::new();
    for j in 0..n {
        terms.push(embed(&sz, j)?.scale(c64::new(-coeffs.h_z, 0.0)));
    }
    for b in geom.bonds() {
        let xx = embed(&sx, b.a)?.matmul(&embed(&sx, b.b)?);
        let yy = embed(&sy, b.a)?.matmul(&embed(&sy, b.b)?);
        terms.push(xx.scale(c64::new(-coeffs.c_xx * b.weight, 0.0)));
        terms.push(yy.scale(c64::new(-coeffs.c_yy * b.weight, 0.0)));
    }
    let h = sum_operators(terms.iter()).ok_or_else(|| Error::InvalidInput("empty lattice".into()))?;
    h.into_checked_hermitian()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MappingReport {
    /// Largest `|entry|` of `P H P − constant − H_XY`.
    pub max_deviation: f64,
    /// Constant subtracted (all sites).
    pub constant: f64,
    /// Largest deviation of the cat states from orthonormality.
    pub orthonormality_defect: f64,
    pub coefficients: SpinModelCoefficients,
}

/// Projects the lattice Hamiltonian onto the product cat basis, removes the
/// predicted constant and compares with [`build_xy_hamiltonian`].
pub fn validate_mapping(
    alpha: c64,
    params: &ModelParams,
    geom: &LatticeGeometry,
    fock: &FockSpace,
) -> Result<MappingReport> {
    let n = geom.n_sites();
    let coeffs = SpinModelCoefficients::new(alpha, params, geom.dimensionality())?;
    let cats = cat_states(alpha, fock)?;
    let h = build_hamiltonian(params, geom, fock)?;
    let d = fock.dim();
    let big = fock.lattice_dim(n, DEFAULT_DIM_CAP)?;
    let spins = 1usize << n;
    // V[f, s]: product of cat amplitudes, site 0 slowest in both indices
    let v = Mat::from_fn(big, spins, |f, s| {
        let mut amp = c64::new(1.0, 0.0);
        let (mut fr, mut sr) = (f, s);
        for _ in 0..n {
            let (k, bit) = (fr % d, sr % 2);
            amp *= if bit == 0 { cats.plus[k] } else { cats.minus[k] };
            fr /= d;
            sr /= 2;
        }
        amp
    });
    let hv = h.mul_dense(v.as_ref());
    let projected = v.adjoint() * &hv;
    let overlap = v.adjoint() * &v;
    let xy = build_xy_hamiltonian(&coeffs, geom)?.to_dense();
    let constant = n as f64 * coeffs.site_constant;
    let mut max_deviation = 0.0f64;
    let mut orthonormality_defect = 0.0f64;
    for j in 0..spins {
        for i in 0..spins {
            let c = if i == j { constant } else { 0.0 };
            max_deviation = max_deviation.max((projected[(i, j)] - c - xy[(i, j)]).norm());
            let e = if i == j { 1.0 } else { 0.0 };
            orthonormality_defect = orthonormality_defect.max((overlap[(i, j)] - e).norm());
        }
    }
    Ok(MappingReport {
        max_deviation,
        constant,
        orthonormality_defect,
        coefficients: coeffs,
    })
}

/// Estimates `α` from the single-site steady state: the cat amplitude whose
/// even state best overlaps the dominant even eigenvector of `ρ_ss`. The
/// phase is taken from `⟨a²⟩` (on the cat space `a² = α²`), the modulus from
/// a scan followed by golden-section refinement.
pub fn extract_alpha(params: &ModelParams, fock: &FockSpace) -> Result<c64> {
    let geom = LatticeGeometry::chain(1)?;
    let liou = Liouvillian::for_lattice(params, &geom, fock)?;
    let ss = steady_state_iterative(&liou, &SteadyStateOptions::default())?;
    let rho = ss.rho.matrix();
    let d = fock.dim();
    let even: Vec<usize> = (0..d).step_by(2).collect();
    let sub = Mat::from_fn(even.len(), even.len(), |i, j| rho[(even[i], even[j])]);
    let evd = sub
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Linalg(format!("{e:?}")))?;
    let top = even.len() - 1; // ascending eigenvalues
    let mut psi = vec![ZERO; d];
    for (i, &k) in even.iter().enumerate() {
        psi[k] = evd.U()[(i, top)];
    }
    let a = annihilation_op(fock);
    let a2 = a.matmul(&a);
    let a2_mean: c64 = a2.triplets().map(|(r, c, v)| v * rho[(c, r)]).sum();
    let phase = if a2_mean.norm() > 0.0 { a2_mean.arg() / 2.0 } else { 0.0 };
    let unit = c64::from_polar(1.0, phase);
    let overlap = |r: f64| -> f64 {
        match cat_states(unit * r, fock) {
            Ok(c) => c
                .plus
                .iter()
                .zip(&psi)
                .map(|(x, y)| x.conj() * y)
                .sum::<c64>()
                .norm_sqr(),
            Err(_) => 0.0,
        }
    };
    let r_max = (fock.n_max() as f64).sqrt();
    let steps = 200;
    let grid: Vec<f64> = (0..=steps).map(|k| r_max * k as f64 / steps as f64).collect();
    let best = (0..grid.len())
        .max_by(|&i, &j| overlap(grid[i]).total_cmp(&overlap(grid[j])))
        .expect("non-empty grid");
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(steps)];
    let r = golden_section_max(overlap, lo, hi, 1e-10);
    Ok(unit * r)
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

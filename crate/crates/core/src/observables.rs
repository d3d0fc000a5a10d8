//! Steady-state observables: parity, von Neumann entropy, photon densities and
//! two-site correlations.

use faer::Side;
use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::density::{BasisTag, DensityMatrix, POSITIVITY_TOLERANCE};
use crate::error::{Error, Result};
use crate::fock::{annihilation_op, embed_site_op_capped, number_op, parity_op_capped, FockSpace, DEFAULT_DIM_CAP};
use crate::liouvillian::SolverMethod;
use crate::operator::Operator;

/// Eigenvalues at or below this are left out of the entropy sum.
pub const ENTROPY_FLOOR: f64 = 1e-14;
/// Largest imaginary part of `Tr(ρΠ)` that is discarded silently.
pub const IMAGINARY_TOLERANCE: f64 = 1e-10;

/// Operators needed for observables, all expressed in one basis.
#[derive(Clone, Debug)]
pub struct BasisOperators {
    basis: BasisTag,
    parity: Operator,
    annihilators: Vec<Operator>,
    numbers: Vec<Operator>,
}

impl BasisOperators {
    pub fn new(basis: BasisTag, parity: Operator, annihilators: Vec<Operator>, numbers: Vec<Operator>) -> Result<Self> {
        let d = basis.dim();
        if annihilators.len() != numbers.len() {
            return Err(Error::InvalidInput(
                "one number operator per annihilator is required".into(),
            ));
        }
        for op in std::iter::once(&parity).chain(&annihilators).chain(&numbers) {
            if op.dim() != d {
                return Err(Error::DimensionMismatch {
                    context: "basis operator",
                    expected: d,
                    found: op.dim(),
                });
            }
        }
        Ok(Self {
            basis,
            parity,
            annihilators,
            numbers,
        })
    }

    /// Lattice operators in the Fock basis.
    pub fn fock(fock: &FockSpace, n_sites: usize) -> Result<Self> {
        let a = annihilation_op(fock);
        let n = number_op(fock);
        let mut annihilators = Vec::with_capacity(n_sites);
        let mut numbers = Vec::with_capacity(n_sites);
        for j in 0..n_sites {
            annihilators.push(Operator::Sparse(embed_site_op_capped(&a, j, n_sites, DEFAULT_DIM_CAP)?));
            numbers.push(Operator::Sparse(embed_site_op_capped(&n, j, n_sites, DEFAULT_DIM_CAP)?));
        }
        Self::new(
            BasisTag::Fock {
                n_max: fock.n_max(),
                n_sites,
            },
            Operator::Sparse(parity_op_capped(fock, n_sites, DEFAULT_DIM_CAP)?),
            annihilators,
            numbers,
        )
    }

    pub fn basis(&self) -> BasisTag {
        self.basis
    }

    pub fn n_sites(&self) -> usize {
        self.annihilators.len()
    }

    pub fn parity(&self) -> &Operator {
        &self.parity
    }

    pub fn annihilator(&self, site: usize) -> Result<&Operator> {
        self.annihilators.get(site).ok_or(Error::SiteOutOfRange {
            site,
            n_sites: self.n_sites(),
        })
    }

    pub fn number(&self, site: usize) -> Result<&Operator> {
        self.numbers.get(site).ok_or(Error::SiteOutOfRange {
            site,
            n_sites: self.n_sites(),
        })
    }

    /// Diagonal of the parity operator, if it is diagonal.
    pub fn parity_diagonal(&self) -> Option<Vec<f64>> {
        let entries = self.parity.entries(0.0);
        if entries.iter().any(|(r, c, _)| r != c) {
            return None;
        }
        let mut d = vec![0.0; self.parity.dim()];
        for (r, _, v) in entries {
            d[r] = v.re;
        }
        Some(d)
    }

    fn check(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.basis() != self.basis {
            return Err(Error::BasisMismatch(format!(
                "state in {:?}, operators in {:?}",
                rho.basis(),
                self.basis
            )));
        }
        Ok(())
    }
}

/// `Tr(ρ O)`.
pub fn expectation(rho: &DensityMatrix, op: &Operator) -> Result<c64> {
    if op.dim() != rho.dim() {
        return Err(Error::BasisMismatch(format!(
            "operator dimension {} vs state dimension {}",
            op.dim(),
            rho.dim()
        )));
    }
    let m = rho.matrix();
    Ok(op.entries(0.0).into_iter().map(|(r, c, v)| v * m[(c, r)]).sum())
}

/// `Tr(ρΠ)` by direct entry sum, after checking that the operators live in
/// the state's basis and that the imaginary part is negligible.
pub fn parity_expectation(rho: &DensityMatrix, ops: &BasisOperators) -> Result<f64> {
    ops.check(rho)?;
    parity_expectation_with(rho, ops.parity())
}

/// `Tr(ρΠ)` for an explicitly supplied parity operator.
pub fn parity_expectation_with(rho: &DensityMatrix, pi: &Operator) -> Result<f64> {
    let z = expectation(rho, pi)?;
    if z.im.abs() > IMAGINARY_TOLERANCE {
        return Err(Error::InvalidState(format!(
            "parity expectation has imaginary part {:.3e}",
            z.im
        )));
    }
    Ok(z.re)
}

/// `Σ_k λ_k ⟨v_k|Π|v_k⟩` over the eigen-decomposition of `ρ`; an independent
/// route to [`parity_expectation`].
pub fn parity_expectation_eigen(rho: &DensityMatrix, ops: &BasisOperators) -> Result<f64> {
    ops.check(rho)?;
    let evd = rho
        .matrix()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Linalg(format!("{e:?}")))?;
    let u = evd.U();
    let pi = ops.parity().to_dense();
    let pu = &pi * u;
    let mut total = 0.0;
    for k in 0..rho.dim() {
        let lam = evd.S()[k].re;
        let mut z = c64::new(0.0, 0.0);
        for i in 0..rho.dim() {
            z += u[(i, k)].conj() * pu[(i, k)];
        }
        total += lam * z.re;
    }
    Ok(total)
}

/// `S = -Σ λ log λ` (natural log) over eigenvalues above [`ENTROPY_FLOOR`].
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    let ev = rho.eigenvalues();
    if let Some(&min) = ev.first() {
        if min < -POSITIVITY_TOLERANCE {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
    }
    Ok(-ev
        .iter()
        .filter(|&&l| l > ENTROPY_FLOOR)
        .map(|&l| l * l.ln())
        .sum::<f64>())
}

/// `max_ij |[ρ, Π]_ij|`: zero for a state that commutes with the parity.
pub fn parity_commutator_norm(rho: &DensityMatrix, ops: &BasisOperators) -> Result<f64> {
    ops.check(rho)?;
    let m = rho.matrix();
    let d = rho.dim();
    if let Some(pi) = ops.parity_diagonal() {
        let mut worst = 0.0f64;
        for j in 0..d {
            for i in 0..d {
                worst = worst.max(m[(i, j)].norm() * (pi[j] - pi[i]).abs());
            }
        }
        return Ok(worst);
    }
    let pi = ops.parity().to_dense();
    let comm = m * &pi - &pi * m;
    let mut worst = 0.0f64;
    for j in 0..d {
        for i in 0..d {
            worst = worst.max(comm[(i, j)].norm());
        }
    }
    Ok(worst)
}

/// `⟨n_j⟩` for every site.
pub fn site_density(rho: &DensityMatrix, ops: &BasisOperators) -> Result<Vec<f64>> {
    ops.check(rho)?;
    (0..ops.n_sites())
        .map(|j| expectation(rho, ops.number(j)?).map(|z| z.re))
        .collect()
}

/// `⟨a†_j a_j'⟩`. In a corner basis this is the product of the projected
/// annihilators, which is exact only inside the retained space.
pub fn correlation(rho: &DensityMatrix, ops: &BasisOperators, j: usize, jp: usize) -> Result<c64> {
    ops.check(rho)?;
    let a_j = ops.annihilator(j)?;
    let a_jp = ops.annihilator(jp)?;
    // Tr(ρ a_j† a_j') = Tr(a_j' ρ a_j†) = Σ_{(r,c)} conj(a_j[r,c]) (a_j' ρ)[r,c]
    let x = a_jp.mul_dense(rho.matrix());
    Ok(a_j.entries(0.0).into_iter().map(|(r, c, v)| v.conj() * x[(r, c)]).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: SolverMethod,
    /// Corner dimension, for corner results.
    pub m: Option<usize>,
    pub n_max: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub parity: f64,
    pub entropy: f64,
    pub n_per_site: f64,
    pub densities: Vec<f64>,
    /// Row-major `⟨a†_j a_j'⟩` as `(re, im)` pairs, when requested.
    pub correlations: Option<Vec<Vec<(f64, f64)>>>,
    pub provenance: Provenance,
}

/// All observables of one steady state.
pub fn evaluate(
    rho: &DensityMatrix,
    ops: &BasisOperators,
    provenance: Provenance,
    with_correlations: bool,
) -> Result<ObservableRecord> {
    let parity = parity_expectation(rho, ops)?;
    let entropy = von_neumann_entropy(rho)?;
    let densities = site_density(rho, ops)?;
    let n_per_site = densities.iter().sum::<f64>() / densities.len().max(1) as f64;
    let correlations = if with_correlations {
        let n = ops.n_sites();
        let mut table = Vec::with_capacity(n);
        for j in 0..n {
            let mut row = Vec::with_capacity(n);
            for jp in 0..n {
                let z = correlation(rho, ops, j, jp)?;
                row.push((z.re, z.im));
            }
            table.push(row);
        }
        Some(table)
    } else {
        None
    };
    Ok(ObservableRecord {
        parity,
        entropy,
        n_per_site,
        densities,
        correlations,
        provenance,
    })
}

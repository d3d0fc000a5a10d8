//! Dense density matrices tagged with the basis they are expressed in.

use std::sync::OnceLock;

use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HERMITICITY_TOLERANCE: f64 = 1e-10;
pub const TRACE_TOLERANCE: f64 = 1e-10;
pub const POSITIVITY_TOLERANCE: f64 = 1e-8;

/// Identifies the basis of a density matrix or operator so that quantities
/// from different bases are never combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisTag {
    /// Tensor product of truncated Fock spaces.
    Fock { n_max: usize, n_sites: usize },
    /// A corner space, identified by a process-unique id.
    Corner { id: u64, dim: usize },
    /// Any other basis of the given dimension.
    Generic { dim: usize },
}

impl BasisTag {
    pub fn dim(&self) -> usize {
        match *self {
            BasisTag::Fock { n_max, n_sites } => (n_max + 1).pow(n_sites as u32),
            BasisTag::Corner { dim, .. } | BasisTag::Generic { dim } => dim,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DensityMatrix {
    basis: BasisTag,
    data: Mat<c64>,
    /// Optional ±1 grading; when the state is block diagonal in it the
    /// spectrum is computed block by block.
    grading: Option<Vec<i8>>,
    eigenvalues: OnceLock<Vec<f64>>,
}

impl DensityMatrix {
    /// Wraps `data` after checking Hermiticity, unit trace and positivity.
    pub fn new(basis: BasisTag, data: Mat<c64>) -> Result<Self> {
        let rho = Self::unchecked(basis, data)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Hermitizes and trace-normalizes `data`, then validates.
    pub fn from_unnormalized(basis: BasisTag, data: Mat<c64>) -> Result<Self> {
        let mut data = hermitize(data.as_ref());
        let tr: c64 = (0..data.nrows()).map(|i| data[(i, i)]).sum();
        if !(tr.re.abs() > 0.0) || !tr.re.is_finite() {
            return Err(Error::InvalidState(format!("trace {tr} cannot be normalized")));
        }
        let inv = 1.0 / tr.re;
        for j in 0..data.ncols() {
            for i in 0..data.nrows() {
                data[(i, j)] *= inv;
            }
        }
        Self::new(basis, data)
    }

    fn unchecked(basis: BasisTag, data: Mat<c64>) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::DimensionMismatch {
                context: "density matrix (square)",
                expected: data.nrows(),
                found: data.ncols(),
            });
        }
        if basis.dim() != data.nrows() {
            return Err(Error::DimensionMismatch {
                context: "density matrix basis",
                expected: basis.dim(),
                found: data.nrows(),
            });
        }
        Ok(Self {
            basis,
            data,
            grading: None,
            eigenvalues: OnceLock::new(),
        })
    }

    /// `|ψ⟩⟨ψ|` for a normalized `ψ`.
    pub fn pure(basis: BasisTag, psi: &[c64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let m = Mat::from_fn(psi.len(), psi.len(), |i, j| psi[i] * psi[j].conj() / (norm * norm));
        Self::new(basis, m)
    }

    pub fn maximally_mixed(basis: BasisTag) -> Self {
        let d = basis.dim();
        let m = Mat::from_fn(d, d, |i, j| {
            if i == j {
                c64::new(1.0 / d as f64, 0.0)
            } else {
                c64::new(0.0, 0.0)
            }
        });
        Self::unchecked(basis, m).expect("square by construction")
    }

    /// Attaches a ±1 grading (e.g. photon-number parity) of the basis.
    pub fn with_grading(mut self, grading: Vec<i8>) -> Result<Self> {
        if grading.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "density matrix grading",
                expected: self.dim(),
                found: grading.len(),
            });
        }
        self.grading = Some(grading);
        self.eigenvalues = OnceLock::new();
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let defect = hermiticity_defect(self.data.as_ref());
        if defect > HERMITICITY_TOLERANCE {
            return Err(Error::InvalidState(format!("not Hermitian (defect {defect:.3e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).norm() > TRACE_TOLERANCE {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = self.eigenvalues().first().copied().unwrap_or(0.0);
        if min < -POSITIVITY_TOLERANCE {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    pub fn basis(&self) -> BasisTag {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> MatRef<'_, c64> {
        self.data.as_ref()
    }

    pub fn into_matrix(self) -> Mat<c64> {
        self.data
    }

    pub fn grading(&self) -> Option<&[i8]> {
        self.grading.as_deref()
    }

    pub fn trace(&self) -> c64 {
        (0..self.dim()).map(|i| self.data[(i, i)]).sum()
    }

    /// Ascending eigenvalues, computed once.
    pub fn eigenvalues(&self) -> &[f64] {
        self.eigenvalues.get_or_init(|| {
            let mut ev = match &self.grading {
                Some(g) if max_off_sector(self.data.as_ref(), g) <= 1e-12 => {
                    let mut all = Vec::with_capacity(self.dim());
                    for sign in [1i8, -1] {
                        let idx: Vec<usize> = (0..g.len()).filter(|&i| g[i] == sign).collect();
                        if idx.is_empty() {
                            continue;
                        }
                        let block = Mat::from_fn(idx.len(), idx.len(), |i, j| self.data[(idx[i], idx[j])]);
                        all.extend(hermitian_eigenvalues(block.as_ref()));
                    }
                    all
                }
                _ => hermitian_eigenvalues(self.data.as_ref()),
            };
            ev.sort_by(|a, b| a.total_cmp(b));
            ev
        })
    }

    /// `½ Σ |eig(ρ - σ)|`.
    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        if self.basis != other.basis {
            return Err(Error::BasisMismatch(format!("{:?} vs {:?}", self.basis, other.basis)));
        }
        let diff = &self.data - &other.data;
        let diff = hermitize(diff.as_ref());
        Ok(0.5
            * hermitian_eigenvalues(diff.as_ref())
                .iter()
                .map(|x| x.abs())
                .sum::<f64>())
    }

    /// `max |ρ_ij (g_j - g_i)|`, i.e. the max-norm of `[ρ, G]` for diagonal `G = diag(g)`.
    pub fn commutator_with_diagonal(&self, g: &[f64]) -> Result<f64> {
        if g.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "diagonal commutator",
                expected: self.dim(),
                found: g.len(),
            });
        }
        let mut worst = 0.0f64;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                worst = worst.max((self.data[(i, j)] * (g[j] - g[i])).norm());
            }
        }
        Ok(worst)
    }
}

pub(crate) fn hermitize(m: MatRef<'_, c64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

pub(crate) fn hermiticity_defect(m: MatRef<'_, c64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..=j.min(m.nrows() - 1) {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn max_off_sector(m: MatRef<'_, c64>, g: &[i8]) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if g[i] != g[j] {
                worst = worst.max(m[(i, j)].norm());
            }
        }
    }
    worst
}

/// Eigenvalues of a Hermitian matrix (the lower triangle is read).
pub fn hermitian_eigenvalues(m: MatRef<'_, c64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.self_adjoint_eigenvalues(Side::Lower)
        .expect("Hermitian eigenvalue iteration does not fail on finite input")
}

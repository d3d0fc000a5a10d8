//! Truncated single-mode Fock space and its embedding into lattice operators.
//!
//! Tensor-index convention: site 0 is the slowest-varying index, so the
//! lattice basis state `|n_0, n_1, ..., n_{N-1}>` has flat index
//! `Σ_j n_j · dim^(N-1-j)`.

use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

/// Default cap on the lattice Hilbert-space dimension.
pub const DEFAULT_DIM_CAP: usize = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockSpace {
    n_max: usize,
}

impl FockSpace {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::InvalidInput("Fock cutoff n_max must be >= 1".into()));
        }
        Ok(Self { n_max })
    }

    #[inline]
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n_max + 1
    }

    /// `dim^n_sites`, or an error when it exceeds `cap`.
    pub fn lattice_dim(&self, n_sites: usize, cap: usize) -> Result<usize> {
        checked_power(self.dim(), n_sites, cap)
    }

    /// Photon numbers `(n_0, ..., n_{N-1})` of the lattice basis state `index`.
    pub fn occupations(&self, index: usize, n_sites: usize) -> Vec<usize> {
        let d = self.dim();
        let mut occ = vec![0; n_sites];
        let mut rest = index;
        for slot in occ.iter_mut().rev() {
            *slot = rest % d;
            rest /= d;
        }
        occ
    }
}

pub(crate) fn checked_power(base: usize, exp: usize, cap: usize) -> Result<usize> {
    let mut dim: u128 = 1;
    for _ in 0..exp {
        dim *= base as u128;
        if dim > cap as u128 {
            // report the full size where it still fits, otherwise the partial product
            let full = (base as u128).checked_pow(exp as u32).unwrap_or(dim);
            return Err(Error::DimensionCap { dim: full, cap });
        }
    }
    Ok(dim as usize)
}

/// Annihilation operator with `<n-1|a|n> = √n`.
pub fn annihilation_op(fock: &FockSpace) -> SparseOperator {
    let d = fock.dim();
    SparseOperator::from_triplets(d, (1..d).map(|n| (n - 1, n, c64::new((n as f64).sqrt(), 0.0))))
}

/// Number operator `a†a`, diagonal `(0, 1, ..., n_max)`.
pub fn number_op(fock: &FockSpace) -> SparseOperator {
    let diag: Vec<c64> = (0..fock.dim()).map(|n| c64::new(n as f64, 0.0)).collect();
    SparseOperator::diagonal(&diag).tagged_hermitian(true)
}

/// `I ⊗ … ⊗ op ⊗ … ⊗ I` with `op` at position `site`, using [`DEFAULT_DIM_CAP`].
pub fn embed_site_op(op: &SparseOperator, site: usize, n_sites: usize) -> Result<SparseOperator> {
    embed_site_op_capped(op, site, n_sites, DEFAULT_DIM_CAP)
}

pub fn embed_site_op_capped(op: &SparseOperator, site: usize, n_sites: usize, cap: usize) -> Result<SparseOperator> {
    if site >= n_sites {
        return Err(Error::SiteOutOfRange { site, n_sites });
    }
    let d = op.dim();
    checked_power(d, n_sites, cap)?;
    let left = d.pow(site as u32);
    let right = d.pow((n_sites - site - 1) as u32);
    // Direct construction: (i_left, r, i_right) x (i_left, c, i_right).
    let mut triplets = Vec::with_capacity(op.nnz() * left * right);
    for l in 0..left {
        for (r, c, v) in op.triplets() {
            let base_r = (l * d + r) * right;
            let base_c = (l * d + c) * right;
            for k in 0..right {
                triplets.push((base_r + k, base_c + k, v));
            }
        }
    }
    let dim = left * d * right;
    Ok(SparseOperator::from_triplets(dim, triplets).tagged_hermitian(op.is_hermitian()))
}

/// Parity of the total photon number, diagonal `(-1)^{Σ_j n_j}`.
pub fn parity_op(fock: &FockSpace, n_sites: usize) -> Result<SparseOperator> {
    parity_op_capped(fock, n_sites, DEFAULT_DIM_CAP)
}

pub fn parity_op_capped(fock: &FockSpace, n_sites: usize, cap: usize) -> Result<SparseOperator> {
    let diag: Vec<c64> = parity_signs(fock, n_sites, cap)?
        .into_iter()
        .map(|s| c64::new(s as f64, 0.0))
        .collect();
    Ok(SparseOperator::diagonal(&diag).tagged_hermitian(true))
}

/// `(-1)^{Σ_j n_j}` for every lattice basis state.
pub fn parity_signs(fock: &FockSpace, n_sites: usize, cap: usize) -> Result<Vec<i8>> {
    let dim = fock.lattice_dim(n_sites, cap)?;
    let d = fock.dim();
    let mut signs = vec![1i8; dim];
    for (idx, s) in signs.iter_mut().enumerate() {
        let mut rest = idx;
        let mut total = 0usize;
        for _ in 0..n_sites {
            total += rest % d;
            rest /= d;
        }
        if total % 2 == 1 {
            *s = -1;
        }
    }
    Ok(signs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::Mat;

    fn basis(dim: usize, i: usize) -> Vec<c64> {
        let mut v = vec![c64::new(0.0, 0.0); dim];
        v[i] = c64::new(1.0, 0.0);
        v
    }

    fn dense_kron(a: &Mat<c64>, b: &Mat<c64>) -> Mat<c64> {
        let (n, m) = (a.nrows(), b.nrows());
        Mat::from_fn(n * m, n * m, |i, j| a[(i / m, j / m)] * b[(i % m, j % m)])
    }

    #[test]
    fn ladder_entries() {
        let fock = FockSpace::new(4).unwrap();
        let a = annihilation_op(&fock);
        assert!((a.get(1, 2).re - 2f64.sqrt()).abs() < 1e-14);
        for r in 0..fock.dim() {
            assert_eq!(a.get(r, 0), c64::new(0.0, 0.0));
        }
    }

    #[test]
    fn number_from_ladder_matches_dense_product() {
        let fock = FockSpace::new(5).unwrap();
        let a = annihilation_op(&fock).to_dense();
        let n = a.adjoint() * &a;
        for i in 0..fock.dim() {
            for j in 0..fock.dim() {
                let expected = if i == j { i as f64 } else { 0.0 };
                assert!((n[(i, j)].re - expected).abs() < 1e-14 && n[(i, j)].im.abs() < 1e-14);
            }
        }
        let sparse_n = annihilation_op(&fock).adjoint().matmul(&annihilation_op(&fock));
        let (lhs, rhs) = (sparse_n.as_diagonal().unwrap(), number_op(&fock).as_diagonal().unwrap());
        assert!(lhs.iter().zip(&rhs).all(|(x, y)| (x - y).norm() < 1e-14));
    }

    #[test]
    fn canonical_commutator_on_truncated_block() {
        let fock = FockSpace::new(6).unwrap();
        let a = annihilation_op(&fock);
        let comm = &a.matmul(&a.adjoint()) - &a.adjoint().matmul(&a);
        for i in 0..fock.n_max() {
            for j in 0..fock.n_max() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((comm.get(i, j).re - expected).abs() < 1e-12);
            }
        }
        // the top row carries the truncation defect
        assert!((comm.get(6, 6).re + 6.0).abs() < 1e-12);
    }

    #[test]
    fn embed_acts_on_named_site() {
        let fock = FockSpace::new(2).unwrap();
        let a0 = embed_site_op(&annihilation_op(&fock), 0, 2).unwrap();
        // |1>⊗|0> has index 1*3 + 0 = 3, |0>⊗|0> is index 0
        let out = a0.apply(&basis(9, 3));
        assert!((out[0].re - 1.0).abs() < 1e-15);
        assert!(out.iter().enumerate().all(|(i, v)| i == 0 || v.norm() == 0.0));
    }

    #[test]
    fn embed_identity_is_identity() {
        let fock = FockSpace::new(2).unwrap();
        let id = SparseOperator::identity(fock.dim());
        for k in 0..3 {
            let e = embed_site_op(&id, k, 3).unwrap();
            assert_eq!(e, SparseOperator::identity(27).tagged_hermitian(true));
        }
    }

    #[test]
    fn embed_number_matches_dense_kron() {
        let fock = FockSpace::new(2).unwrap();
        let n = number_op(&fock);
        let e = embed_site_op(&n, 1, 2).unwrap();
        let oracle = dense_kron(&Mat::<c64>::identity(3, 3), &n.to_dense());
        let dense = e.to_dense();
        for i in 0..9 {
            for j in 0..9 {
                assert!((dense[(i, j)] - oracle[(i, j)]).norm() < 1e-15);
            }
        }
        // |1>⊗|2> -> eigenvalue 2
        assert_eq!(e.get(5, 5), c64::new(2.0, 0.0));
        assert_eq!(e.nnz(), n.nnz() * 3);
    }

    #[test]
    fn embed_errors() {
        let fock = FockSpace::new(3).unwrap();
        let a = annihilation_op(&fock);
        assert!(matches!(embed_site_op(&a, 2, 2), Err(Error::SiteOutOfRange { .. })));
        assert!(matches!(
            embed_site_op_capped(&a, 0, 12, 1000),
            Err(Error::DimensionCap { .. })
        ));
    }

    #[test]
    fn parity_examples() {
        let fock = FockSpace::new(3).unwrap();
        let p1 = parity_op(&fock, 1).unwrap();
        assert_eq!(p1.get(0, 0).re, 1.0);
        assert_eq!(p1.get(3, 3).re, -1.0);
        let p2 = parity_op(&fock, 2).unwrap();
        // |1>⊗|1> has index 1*4 + 1 = 5
        assert_eq!(p2.get(5, 5).re, 1.0);
        let sq = p2.matmul(&p2);
        assert_eq!(sq.as_diagonal().unwrap(), vec![c64::new(1.0, 0.0); 16]);
    }

    #[test]
    fn disjoint_site_operators_commute() {
        let fock = FockSpace::new(3).unwrap();
        let a = annihilation_op(&fock);
        let ad = a.adjoint();
        for (i, j) in [(0, 1), (1, 3), (2, 0)] {
            let x = embed_site_op(&a, i, 4).unwrap();
            let y = embed_site_op(&ad, j, 4).unwrap();
            let defect = (&x.matmul(&y) - &y.matmul(&x)).max_abs();
            assert!(defect <= 1e-14);
        }
    }
}

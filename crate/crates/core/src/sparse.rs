//! Square complex sparse matrices in compressed-row layout.

use std::ops::{Add, Mul, Sub};

use faer::{Mat, MatRef};
use num_complex::Complex64 as c64;

use crate::error::{Error, Result};

/// Entries with modulus at or below this value are never stored.
pub const DROP_TOLERANCE: f64 = 1e-15;

/// Relative bound on `max|M - M†| / max|M|` for an operator tagged Hermitian.
pub const HERMITIAN_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<c64>,
    hermitian: bool,
}

impl SparseOperator {
    /// Builds an operator from `(row, col, value)` triplets. Duplicates are
    /// summed and entries below [`DROP_TOLERANCE`] are dropped.
    pub fn from_triplets<I>(dim: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, c64)>,
    {
        let mut entries: Vec<(usize, usize, c64)> = triplets.into_iter().collect();
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut rows = Vec::with_capacity(entries.len());
        let mut iter = entries.into_iter().peekable();
        while let Some((r, c, mut v)) = iter.next() {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside {dim}x{dim}");
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if r2 == r && c2 == c {
                    v += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            if v.norm() > DROP_TOLERANCE {
                rows.push(r);
                col_idx.push(c);
                values.push(v);
            }
        }
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            dim,
            row_ptr,
            col_idx,
            values,
            hermitian: false,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_triplets(dim, std::iter::empty())
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![c64::new(1.0, 0.0); dim]).tagged_hermitian(true)
    }

    pub fn diagonal(diag: &[c64]) -> Self {
        Self::from_triplets(diag.len(), diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    /// Builds from a dense square matrix, dropping tiny entries.
    pub fn from_dense(m: MatRef<'_, c64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let n = m.nrows();
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                t.push((i, j, m[(i, j)]));
            }
        }
        Self::from_triplets(n, t)
    }

    /// Sets the Hermiticity tag without checking it.
    pub fn tagged_hermitian(mut self, hermitian: bool) -> Self {
        self.hermitian = hermitian;
        self
    }

    /// Tags the operator Hermitian after verifying `max|M - M†| <= 1e-12 max|M|`.
    pub fn into_checked_hermitian(self) -> Result<Self> {
        let defect = self.hermiticity_defect();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        if defect > HERMITIAN_TOLERANCE * scale {
            return Err(Error::InvalidInput(format!(
                "operator tagged Hermitian has max|M - M†| = {defect:.3e} (scale {scale:.3e})"
            )));
        }
        Ok(self.tagged_hermitian(true))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[c64] {
        &self.values
    }

    /// Stored entries of row `r` as `(col, value)` pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, c64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// All stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, c64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> c64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => c64::new(0.0, 0.0),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest entry of `|M - M†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let adj = self.adjoint();
        (self - &adj).max_abs()
    }

    pub fn adjoint(&self) -> Self {
        let out = Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (c, r, v.conj())));
        out.tagged_hermitian(self.hermitian)
    }

    pub fn transpose(&self) -> Self {
        let out = Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (c, r, v)));
        out.tagged_hermitian(self.hermitian)
    }

    pub fn conj(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = v.conj());
        out
    }

    pub fn scale(&self, s: c64) -> Self {
        let mut out = Self::from_triplets(self.dim, self.triplets().map(|(r, c, v)| (r, c, v * s)));
        out.hermitian = self.hermitian && s.im == 0.0;
        out
    }

    /// Kronecker product `self ⊗ other`; `self` carries the slow index.
    pub fn kron(&self, other: &Self) -> Self {
        let d = other.dim;
        let mut t = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, v1) in self.triplets() {
            for (r2, c2, v2) in other.triplets() {
                t.push((r1 * d + r2, c1 * d + c2, v1 * v2));
            }
        }
        Self::from_triplets(self.dim * d, t).tagged_hermitian(self.hermitian && other.hermitian)
    }

    /// Sparse product `self · other` (Gustavson row-by-row accumulation).
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut acc = vec![c64::new(0.0, 0.0); n];
        let mut mark = vec![usize::MAX; n];
        let mut touched = Vec::new();
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in 0..n {
            touched.clear();
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = c64::new(0.0, 0.0);
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                if acc[c].norm() > DROP_TOLERANCE {
                    col_idx.push(c);
                    values.push(acc[c]);
                }
            }
            row_ptr[r + 1] = col_idx.len();
        }
        Self {
            dim: n,
            row_ptr,
            col_idx,
            values,
            hermitian: false,
        }
    }

    /// `y = self · x`.
    pub fn matvec(&self, x: &[c64], y: &mut [c64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = c64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yr = s;
        }
    }

    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        let mut y = vec![c64::new(0.0, 0.0); self.dim];
        self.matvec(x, &mut y);
        y
    }

    /// Sparse × dense product.
    pub fn mul_dense(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        assert_eq!(x.nrows(), self.dim);
        let mut out = Mat::<c64>::zeros(self.dim, x.ncols());
        for j in 0..x.ncols() {
            let xc = x.col(j);
            for r in 0..self.dim {
                let mut s = c64::new(0.0, 0.0);
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    s += self.values[k] * xc[self.col_idx[k]];
                }
                out[(r, j)] = s;
            }
        }
        out
    }

    pub fn to_dense(&self) -> Mat<c64> {
        let mut m = Mat::<c64>::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn trace(&self) -> c64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Diagonal entries, or `None` if any off-diagonal entry is stored.
    pub fn as_diagonal(&self) -> Option<Vec<c64>> {
        if self.triplets().any(|(r, c, _)| r != c) {
            return None;
        }
        Some((0..self.dim).map(|i| self.get(i, i)).collect())
    }

    fn combine(&self, other: &Self, sign: f64) -> Self {
        assert_eq!(self.dim, other.dim, "operator dimension mismatch");
        let t = self
            .triplets()
            .chain(other.triplets().map(|(r, c, v)| (r, c, v * sign)));
        Self::from_triplets(self.dim, t).tagged_hermitian(self.hermitian && other.hermitian)
    }
}

impl Add for &SparseOperator {
    type Output = SparseOperator;
    fn add(self, rhs: Self) -> SparseOperator {
        self.combine(rhs, 1.0)
    }
}

impl Sub for &SparseOperator {
    type Output = SparseOperator;
    fn sub(self, rhs: Self) -> SparseOperator {
        self.combine(rhs, -1.0)
    }
}

impl Mul for &SparseOperator {
    type Output = SparseOperator;
    fn mul(self, rhs: Self) -> SparseOperator {
        self.matmul(rhs)
    }
}

impl Mul<c64> for &SparseOperator {
    type Output = SparseOperator;
    fn mul(self, rhs: c64) -> SparseOperator {
        self.scale(rhs)
    }
}

impl Mul<f64> for &SparseOperator {
    type Output = SparseOperator;
    fn mul(self, rhs: f64) -> SparseOperator {
        self.scale(c64::new(rhs, 0.0))
    }
}

/// Sum of operators; `None` for an empty list.
pub fn sum_operators<'a, I>(ops: I) -> Option<SparseOperator>
where
    I: IntoIterator<Item = &'a SparseOperator>,
{
    let mut iter = ops.into_iter();
    let first = iter.next()?.clone();
    let dim = first.dim();
    let hermitian = first.is_hermitian();
    let mut all_herm = hermitian;
    let mut t: Vec<(usize, usize, c64)> = first.triplets().collect();
    for op in iter {
        assert_eq!(op.dim(), dim);
        all_herm &= op.is_hermitian();
        t.extend(op.triplets());
    }
    Some(SparseOperator::from_triplets(dim, t).tagged_hermitian(all_herm))
}

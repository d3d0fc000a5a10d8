//! Operators stored either sparse (lattice Fock basis) or dense (corner spaces),
//! and rectangular blocks of them used by the sector solvers.

use faer::{Mat, MatRef};
use num_complex::Complex64 as c64;

use crate::sparse::SparseOperator;

/// Square operator on a finite basis.
#[derive(Clone, Debug)]
pub enum Operator {
    Sparse(SparseOperator),
    Dense(Mat<c64>),
}

impl From<SparseOperator> for Operator {
    fn from(op: SparseOperator) -> Self {
        Operator::Sparse(op)
    }
}

impl From<Mat<c64>> for Operator {
    fn from(m: Mat<c64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "operator must be square");
        Operator::Dense(m)
    }
}

impl Operator {
    pub fn dim(&self) -> usize {
        match self {
            Operator::Sparse(s) => s.dim(),
            Operator::Dense(m) => m.nrows(),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> c64 {
        match self {
            Operator::Sparse(s) => s.get(r, c),
            Operator::Dense(m) => m[(r, c)],
        }
    }

    pub fn adjoint(&self) -> Self {
        match self {
            Operator::Sparse(s) => Operator::Sparse(s.adjoint()),
            Operator::Dense(m) => Operator::Dense(m.adjoint().to_owned()),
        }
    }

    /// Operator product; dense if either factor is dense.
    pub fn matmul(&self, rhs: &Self) -> Self {
        match (self, rhs) {
            (Operator::Sparse(a), Operator::Sparse(b)) => Operator::Sparse(a.matmul(b)),
            (Operator::Sparse(a), Operator::Dense(b)) => Operator::Dense(a.mul_dense(b.as_ref())),
            (Operator::Dense(a), Operator::Sparse(b)) => {
                // A·B = (B†·A†)†
                let t = b.adjoint().mul_dense(a.adjoint().to_owned().as_ref());
                Operator::Dense(t.adjoint().to_owned())
            }
            (Operator::Dense(a), Operator::Dense(b)) => Operator::Dense(a * b),
        }
    }

    /// `self + s·rhs`.
    pub fn add_scaled(&self, rhs: &Self, s: c64) -> Self {
        match (self, rhs) {
            (Operator::Sparse(a), Operator::Sparse(b)) => Operator::Sparse(a + &b.scale(s)),
            _ => {
                let mut m = self.to_dense();
                let b = rhs.to_dense();
                for j in 0..m.ncols() {
                    for i in 0..m.nrows() {
                        m[(i, j)] += s * b[(i, j)];
                    }
                }
                Operator::Dense(m)
            }
        }
    }

    pub fn to_dense(&self) -> Mat<c64> {
        match self {
            Operator::Sparse(s) => s.to_dense(),
            Operator::Dense(m) => m.clone(),
        }
    }

    pub fn to_sparse(&self) -> SparseOperator {
        match self {
            Operator::Sparse(s) => s.clone(),
            Operator::Dense(m) => SparseOperator::from_dense(m.as_ref()),
        }
    }

    /// `self · x` for a dense `x`.
    pub fn mul_dense(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        match self {
            Operator::Sparse(s) => s.mul_dense(x),
            Operator::Dense(m) => m * x,
        }
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        match self {
            Operator::Sparse(s) => (0..s.dim())
                .map(|r| s.row(r).map(|(_, v)| v.norm()).sum::<f64>())
                .fold(0.0, f64::max),
            Operator::Dense(m) => (0..m.nrows())
                .map(|r| (0..m.ncols()).map(|c| m[(r, c)].norm()).sum::<f64>())
                .fold(0.0, f64::max),
        }
    }

    /// Stored `(row, col, value)` entries with modulus above `tol`.
    pub fn entries(&self, tol: f64) -> Vec<(usize, usize, c64)> {
        match self {
            Operator::Sparse(s) => s.triplets().filter(|t| t.2.norm() > tol).collect(),
            Operator::Dense(m) => {
                let mut out = Vec::new();
                for j in 0..m.ncols() {
                    for i in 0..m.nrows() {
                        if m[(i, j)].norm() > tol {
                            out.push((i, j, m[(i, j)]));
                        }
                    }
                }
                out
            }
        }
    }

    /// Rectangular sub-block `rows × cols`, or `None` when it is identically zero.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> Option<Block> {
        match self {
            Operator::Sparse(s) => {
                let mut col_pos = vec![usize::MAX; s.dim()];
                for (k, &c) in cols.iter().enumerate() {
                    col_pos[c] = k;
                }
                let mut row_ptr = Vec::with_capacity(rows.len() + 1);
                let mut col_idx = Vec::new();
                let mut values = Vec::new();
                row_ptr.push(0);
                for &r in rows {
                    for (c, v) in s.row(r) {
                        if col_pos[c] != usize::MAX {
                            col_idx.push(col_pos[c]);
                            values.push(v);
                        }
                    }
                    row_ptr.push(col_idx.len());
                }
                if values.is_empty() {
                    return None;
                }
                Some(Block::Sparse(CsrBlock {
                    nrows: rows.len(),
                    ncols: cols.len(),
                    row_ptr,
                    col_idx,
                    values,
                }))
            }
            Operator::Dense(m) => {
                let b = Mat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])]);
                let any = (0..b.ncols()).any(|j| (0..b.nrows()).any(|i| b[(i, j)] != c64::new(0.0, 0.0)));
                any.then_some(Block::Dense(b))
            }
        }
    }
}

/// Rectangular compressed-row block.
#[derive(Clone, Debug)]
pub struct CsrBlock {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<c64>,
}

#[derive(Clone, Debug)]
pub enum Block {
    Sparse(CsrBlock),
    Dense(Mat<c64>),
}

impl Block {
    pub fn nrows(&self) -> usize {
        match self {
            Block::Sparse(b) => b.nrows,
            Block::Dense(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Block::Sparse(b) => b.ncols,
            Block::Dense(m) => m.ncols(),
        }
    }

    /// `self · x`.
    pub fn mul_dense(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        debug_assert_eq!(x.nrows(), self.ncols());
        match self {
            Block::Dense(m) => m * x,
            Block::Sparse(b) => {
                let mut out = Mat::<c64>::zeros(b.nrows, x.ncols());
                for j in 0..x.ncols() {
                    let xc = x.col(j);
                    let mut oc = out.col_mut(j);
                    for r in 0..b.nrows {
                        let mut s = c64::new(0.0, 0.0);
                        for k in b.row_ptr[r]..b.row_ptr[r + 1] {
                            s += b.values[k] * xc[b.col_idx[k]];
                        }
                        oc[r] = s;
                    }
                }
                out
            }
        }
    }

    pub fn to_dense(&self) -> Mat<c64> {
        match self {
            Block::Dense(m) => m.clone(),
            Block::Sparse(b) => {
                let mut m = Mat::<c64>::zeros(b.nrows, b.ncols);
                for r in 0..b.nrows {
                    for k in b.row_ptr[r]..b.row_ptr[r + 1] {
                        m[(r, b.col_idx[k])] += b.values[k];
                    }
                }
                m
            }
        }
    }
}

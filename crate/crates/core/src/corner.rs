//! Corner-space renormalization: steady states of large lattices from a
//! hierarchy of merged sub-lattice blocks.
//!
//! The lattice is split recursively (longer axis first, ties along `y`) down
//! to leaves of at most `base_sites` sites, which are solved exactly. Two
//! blocks `A`, `B` are merged by diagonalizing their steady states
//! `ρ_A = Σ p_i |φ_i⟩⟨φ_i|`, `ρ_B = Σ q_j |χ_j⟩⟨χ_j|` (within each parity
//! sector, so every corner state has definite parity) and keeping the `M`
//! products `|φ_i⟩|χ_j⟩` with the largest `p_i q_j`. The generator of `A ∪ B`
//! — block Hamiltonians, the bonds joining them and every jump operator — is
//! projected onto that corner space and its steady state becomes the block
//! state for the next level. A bond enters the first merge whose block holds
//! both of its sites, so the periodic closure is added by the final merge
//! along each axis.
//!
//! Jump operators are projected as `PΓP`, while the anticommutator keeps the
//! projected loss rate `P(Σ Γ†Γ)P`: a corner state whose jumps lead out of
//! the corner space still decays instead of becoming a spurious dark state.
//! The corner generator then loses trace at a small rate, and the block state
//! is its leading eigenvector (largest real part), normalized to unit trace;
//! the rate is reported per merge as a truncation diagnostic. Since every
//! jump acts on one site, `P(Σ Γ†Γ)P` is carried exactly through the
//! hierarchy. Without truncation the rate is zero and the result is exact.
//! Blocks of equal extent have the same steady state by translation
//! invariance and are solved once.

use std::collections::HashMap;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::density::{hermitize, BasisTag, DensityMatrix};
use crate::error::{Error, Result};
use crate::fock::{annihilation_op, embed_site_op_capped, number_op, parity_signs, FockSpace};
use crate::lattice::{
    build_hamiltonian_capped, build_jump_operators_capped, Bond, LatticeGeometry, ModelParams, Shape,
};
use crate::liouvillian::{steady_state_direct, steady_state_iterative, Liouvillian, SteadyStateOptions};
use crate::observables::{parity_expectation, von_neumann_entropy, BasisOperators};
use crate::operator::Operator;
use crate::sector::SectorSystem;
use crate::sparse::SparseOperator;

const ZERO: c64 = c64::new(0.0, 0.0);
/// Product weights at or below this are never extended as ties.
const WEIGHT_FLOOR: f64 = 1e-12;
/// Relative spread within which product weights count as tied.
const TIE_TOLERANCE: f64 = 1e-9;
/// Leaves are solved with dense block operators; this bounds their dimension.
const MAX_LEAF_DIM: usize = 4096;
/// Bound on the eigenvalue updates when solving a trace-losing corner generator.
const MAX_LEAK_UPDATES: usize = 50;

static NEXT_BASIS_ID: AtomicU64 = AtomicU64::new(1);

/// Width and height of a rectangular block (`wy = 1` for chains).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Extent {
    pub wx: usize,
    pub wy: usize,
}

impl Extent {
    pub fn n_sites(&self) -> usize {
        self.wx * self.wy
    }

    fn of(shape: Shape) -> Self {
        match shape {
            Shape::Chain(l) => Extent { wx: l, wy: 1 },
            Shape::Rect(lx, ly) => Extent { wx: lx, wy: ly },
        }
    }
}

impl std::fmt::Display for Extent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.wx, self.wy)
    }
}

/// Splits a block into two halves with the offset of the second, or `None` for leaves.
fn split(ext: Extent, base_sites: usize) -> Option<(Extent, Extent, (usize, usize))> {
    if ext.n_sites() <= base_sites {
        return None;
    }
    if ext.wy >= ext.wx {
        let h = ext.wy / 2;
        Some((
            Extent { wx: ext.wx, wy: h },
            Extent {
                wx: ext.wx,
                wy: ext.wy - h,
            },
            (0, h),
        ))
    } else {
        let h = ext.wx / 2;
        Some((
            Extent { wx: h, wy: ext.wy },
            Extent {
                wx: ext.wx - h,
                wy: ext.wy,
            },
            (h, 0),
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub left: Extent,
    pub right: Extent,
    pub result: Extent,
    /// Corner dimension requested for `result`.
    pub m: usize,
}

/// Ordered merges building the full lattice; each extent is merged once and
/// every step only uses leaves or results of earlier steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeSchedule {
    shape: Shape,
    base_sites: usize,
    leaves: Vec<Extent>,
    steps: Vec<MergeStep>,
}

impl MergeSchedule {
    /// Schedule with the same corner dimension `m` at every merge.
    pub fn new(shape: Shape, base_sites: usize, m: usize) -> Result<Self> {
        if base_sites == 0 {
            return Err(Error::InvalidInput("base_sites must be >= 1".into()));
        }
        if m == 0 {
            return Err(Error::InvalidInput("corner dimension must be >= 1".into()));
        }
        let mut leaves = Vec::new();
        let mut steps = Vec::new();
        fn visit(ext: Extent, base: usize, m: usize, leaves: &mut Vec<Extent>, steps: &mut Vec<MergeStep>) {
            if leaves.contains(&ext) || steps.iter().any(|s| s.result == ext) {
                return;
            }
            match split(ext, base) {
                None => leaves.push(ext),
                Some((l, r, _)) => {
                    visit(l, base, m, leaves, steps);
                    visit(r, base, m, leaves, steps);
                    steps.push(MergeStep {
                        left: l,
                        right: r,
                        result: ext,
                        m,
                    });
                }
            }
        }
        visit(Extent::of(shape), base_sites, m, &mut leaves, &mut steps);
        let schedule = Self {
            shape,
            base_sites,
            leaves,
            steps,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    /// Overrides the corner dimension of each step, in step order.
    pub fn with_step_dims(mut self, ms: &[usize]) -> Result<Self> {
        if ms.len() != self.steps.len() {
            return Err(Error::DimensionMismatch {
                context: "per-step corner dimensions",
                expected: self.steps.len(),
                found: ms.len(),
            });
        }
        if ms.contains(&0) {
            return Err(Error::InvalidInput("corner dimension must be >= 1".into()));
        }
        for (s, &m) in self.steps.iter_mut().zip(ms) {
            s.m = m;
        }
        Ok(self)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn base_sites(&self) -> usize {
        self.base_sites
    }

    pub fn leaves(&self) -> &[Extent] {
        &self.leaves
    }

    pub fn steps(&self) -> &[MergeStep] {
        &self.steps
    }

    /// Checks that the final block is the lattice and every merge uses
    /// already-available blocks whose sizes add up.
    pub fn validate(&self) -> Result<()> {
        let target = Extent::of(self.shape);
        let mut available: Vec<Extent> = self.leaves.clone();
        for s in &self.steps {
            if !available.contains(&s.left) || !available.contains(&s.right) {
                return Err(Error::InvalidInput(format!(
                    "merge into {} uses an unavailable block",
                    s.result
                )));
            }
            if s.left.n_sites() + s.right.n_sites() != s.result.n_sites() {
                return Err(Error::InvalidInput(format!(
                    "merge into {} does not conserve sites",
                    s.result
                )));
            }
            available.push(s.result);
        }
        let last = self.steps.last().map(|s| s.result).or(self.leaves.first().copied());
        if last != Some(target) {
            return Err(Error::InvalidInput("schedule does not end at the full lattice".into()));
        }
        Ok(())
    }

    fn m_for(&self, ext: Extent) -> usize {
        self.steps
            .iter()
            .find(|s| s.result == ext)
            .map(|s| s.m)
            .unwrap_or(usize::MAX)
    }
}

#[derive(Clone, Debug)]
pub struct CornerOptions {
    /// Largest leaf, in sites.
    pub base_sites: usize,
    /// Largest tolerated discarded weight `1 - Σ_kept p_i q_j` at any merge.
    pub discard_bound: f64,
    /// Track the map from corner states to Fock states while the Fock
    /// dimension of a block stays at or below this.
    pub embedding_cap: usize,
    pub steady: SteadyStateOptions,
}

impl Default for CornerOptions {
    fn default() -> Self {
        Self {
            base_sites: 2,
            discard_bound: 0.5,
            embedding_cap: 4096,
            steady: SteadyStateOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeDiagnostic {
    pub left: Extent,
    pub right: Extent,
    pub result: Extent,
    pub m_requested: usize,
    /// Retained dimension after tie extension.
    pub m_kept: usize,
    /// `dim(A) · dim(B)`.
    pub product_dim: usize,
    pub kept_weight: f64,
    pub discarded_weight: f64,
    /// Smallest retained product weight.
    pub smallest_kept: f64,
    /// `‖L ρ - λ ρ‖` for the leading eigenpair `λ`, `ρ` of the corner generator.
    pub residual: f64,
    /// `-Re λ`: trace lost per unit time through jumps leaving the corner space.
    pub leak_rate: f64,
    pub iterations: usize,
}

impl MergeDiagnostic {
    /// True when nothing was truncated.
    pub fn is_exact(&self) -> bool {
        self.m_kept == self.product_dim
    }
}

/// Steady state of one block, with its operators in its own basis.
#[derive(Clone)]
struct Block {
    /// Position of each local site relative to the block origin.
    offsets: Vec<(usize, usize)>,
    h: Mat<c64>,
    jumps: Vec<Mat<c64>>,
    /// `Σ Γ†Γ` over the block's jump operators, projected on its basis.
    decay: Mat<c64>,
    a: Vec<Mat<c64>>,
    n: Vec<Mat<c64>>,
    parity: Vec<i8>,
    rho: DensityMatrix,
    /// Columns are the basis states written in the block's Fock basis
    /// (local site order, first site slowest).
    embedding: Option<Mat<c64>>,
    residual: f64,
}

impl Block {
    fn dim(&self) -> usize {
        self.parity.len()
    }
}

/// Result of a corner-space calculation.
#[derive(Clone, Debug)]
pub struct CornerResult {
    pub rho: DensityMatrix,
    /// Parity, annihilators and number operators in the corner basis,
    /// indexed by lattice site.
    pub operators: BasisOperators,
    /// `‖L_corner(ρ)‖_F` of the final corner generator.
    pub residual: f64,
    pub diagnostics: Vec<MergeDiagnostic>,
    pub schedule: MergeSchedule,
    pub wall_time_s: f64,
    n_max: usize,
    /// Corner-to-Fock map in local site order, with the lattice site of each local site.
    embedding: Option<(Mat<c64>, Vec<usize>)>,
}

impl CornerResult {
    /// Corner dimension of the final state.
    pub fn dim(&self) -> usize {
        self.rho.dim()
    }

    /// True when no merge truncated anything, so the result equals the exact
    /// solution up to solver tolerance.
    pub fn is_exact(&self) -> bool {
        self.diagnostics.iter().all(MergeDiagnostic::is_exact)
    }

    /// Largest discarded weight over all merges.
    pub fn max_discarded_weight(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.discarded_weight).fold(0.0, f64::max)
    }

    /// The state mapped back to the lattice Fock basis (site 0 slowest), when
    /// the embedding was tracked.
    pub fn fock_density(&self) -> Option<Result<DensityMatrix>> {
        let (phi, sites) = self.embedding.as_ref()?;
        Some(self.fock_density_inner(phi.as_ref(), sites))
    }

    fn fock_density_inner(&self, phi: MatRef<'_, c64>, sites: &[usize]) -> Result<DensityMatrix> {
        let local = phi * self.rho.matrix() * phi.adjoint();
        let d = self.n_max + 1;
        let n = sites.len();
        let dim = local.nrows();
        // local index -> lattice index
        let perm: Vec<usize> = (0..dim)
            .map(|idx| {
                let mut rest = idx;
                let mut occ = vec![0usize; n];
                for k in (0..n).rev() {
                    occ[sites[k]] = rest % d;
                    rest /= d;
                }
                occ.iter().fold(0, |acc, &o| acc * d + o)
            })
            .collect();
        let mut m = Mat::<c64>::zeros(dim, dim);
        for j in 0..dim {
            for i in 0..dim {
                m[(perm[i], perm[j])] = local[(i, j)];
            }
        }
        DensityMatrix::from_unnormalized(
            BasisTag::Fock {
                n_max: self.n_max,
                n_sites: n,
            },
            m,
        )
    }
}

struct Context<'a> {
    params: &'a ModelParams,
    geom: &'a LatticeGeometry,
    fock: &'a FockSpace,
    schedule: &'a MergeSchedule,
    opts: &'a CornerOptions,
    lattice: Extent,
    cache: HashMap<Extent, Rc<Block>>,
    diagnostics: Vec<MergeDiagnostic>,
}

impl Context<'_> {
    fn site(&self, x: usize, y: usize) -> usize {
        x * self.lattice.wy + y
    }

    fn solve(&mut self, ext: Extent) -> Result<Rc<Block>> {
        if let Some(b) = self.cache.get(&ext) {
            return Ok(b.clone());
        }
        let block = match split(ext, self.opts.base_sites) {
            None => self.leaf(ext)?,
            Some((l, r, off)) => {
                let a = self.solve(l)?;
                let b = self.solve(r)?;
                self.merge(ext, l, &a, r, &b, off)?
            }
        };
        let block = Rc::new(block);
        self.cache.insert(ext, block.clone());
        Ok(block)
    }

    fn local_geometry(&self, ext: Extent, offsets: &[(usize, usize)]) -> LatticeGeometry {
        let sites: Vec<usize> = offsets.iter().map(|&(x, y)| self.site(x, y)).collect();
        let bonds = self
            .geom
            .bonds()
            .iter()
            .filter_map(|b| {
                let la = sites.iter().position(|&s| s == b.a)?;
                let lb = sites.iter().position(|&s| s == b.b)?;
                Some(Bond {
                    a: la,
                    b: lb,
                    weight: b.weight,
                })
            })
            .collect();
        let shape = match self.geom.shape() {
            Shape::Chain(_) => Shape::Chain(ext.wx),
            Shape::Rect(..) => Shape::Rect(ext.wx, ext.wy),
        };
        LatticeGeometry::with_bonds(shape, bonds)
    }

    fn leaf(&self, ext: Extent) -> Result<Block> {
        let offsets: Vec<(usize, usize)> = (0..ext.wx).flat_map(|x| (0..ext.wy).map(move |y| (x, y))).collect();
        let n = offsets.len();
        let geom = self.local_geometry(ext, &offsets);
        let dim = self.fock.lattice_dim(n, MAX_LEAF_DIM)?;
        let h = build_hamiltonian_capped(self.params, &geom, self.fock, MAX_LEAF_DIM)?;
        let jumps = build_jump_operators_capped(self.params, &geom, self.fock, MAX_LEAF_DIM)?;
        let parity = parity_signs(self.fock, n, MAX_LEAF_DIM)?;
        let liou = Liouvillian::new(
            Operator::Sparse(h.clone()),
            jumps.iter().cloned().map(Operator::Sparse).collect(),
            BasisTag::Generic { dim },
        )?
        .with_grading(parity.clone())?;
        let ss = match steady_state_iterative(&liou, &self.opts.steady) {
            Err(Error::NotConverged { residual, .. }) => {
                log::debug!("leaf {ext}: GMRES stalled at {residual:.2e}, using the direct solver");
                steady_state_direct(&liou, &self.opts.steady)?
            }
            other => other?,
        };
        let a1 = annihilation_op(self.fock);
        let n1 = number_op(self.fock);
        let embed = |op: &SparseOperator| -> Result<Vec<Mat<c64>>> {
            (0..n)
                .map(|j| embed_site_op_capped(op, j, n, MAX_LEAF_DIM).map(|o| o.to_dense()))
                .collect()
        };
        let decay = jumps.iter().fold(Mat::<c64>::zeros(dim, dim), |acc, j| {
            let jd = j.to_dense();
            acc + jd.adjoint() * &jd
        });
        Ok(Block {
            offsets,
            h: h.to_dense(),
            jumps: jumps.iter().map(SparseOperator::to_dense).collect(),
            decay,
            a: embed(&a1)?,
            n: embed(&n1)?,
            parity,
            rho: ss.rho,
            embedding: (dim <= self.opts.embedding_cap).then(|| Mat::<c64>::identity(dim, dim)),
            residual: ss.residual,
        })
    }

    fn merge(
        &mut self,
        ext: Extent,
        le: Extent,
        a: &Block,
        re: Extent,
        b: &Block,
        off: (usize, usize),
    ) -> Result<Block> {
        let m_req = self.schedule.m_for(ext);
        let basis = merge_spaces(&a.rho, &b.rho, m_req)?;
        if basis.discarded_weight > self.opts.discard_bound {
            return Err(Error::CornerTooSmall {
                discarded: basis.discarded_weight,
                bound: self.opts.discard_bound,
            });
        }
        let m = basis.dim();
        let reduce_a = |o: &Mat<c64>| basis.reduce(o.as_ref(), BlockSide::A);
        let reduce_b = |o: &Mat<c64>| basis.reduce(o.as_ref(), BlockSide::B);
        let a_a: Vec<Mat<c64>> = a.a.iter().map(reduce_a).collect::<Result<_>>()?;
        let a_b: Vec<Mat<c64>> = b.a.iter().map(reduce_b).collect::<Result<_>>()?;

        // Hamiltonian: both blocks plus the bonds joining them
        let mut h =
            &basis.lift(reduce_a(&a.h)?.as_ref(), BlockSide::A) + &basis.lift(reduce_b(&b.h)?.as_ref(), BlockSide::B);
        let offsets: Vec<(usize, usize)> = a
            .offsets
            .iter()
            .copied()
            .chain(b.offsets.iter().map(|&(x, y)| (x + off.0, y + off.1)))
            .collect();
        let sites: Vec<usize> = offsets.iter().map(|&(x, y)| self.site(x, y)).collect();
        let na = a.offsets.len();
        let prefactor = self.params.j_hop / (2.0 * self.geom.dimensionality() as f64);
        if self.params.j_hop != 0.0 {
            for bond in self.geom.bonds() {
                let (pa, pb) = match (
                    sites.iter().position(|&s| s == bond.a),
                    sites.iter().position(|&s| s == bond.b),
                ) {
                    (Some(x), Some(y)) => (x, y),
                    _ => continue,
                };
                let (x, y) = match (pa < na, pb < na) {
                    (true, false) => (pa, pb - na),
                    (false, true) => (pb, pa - na),
                    _ => continue,
                };
                let ax = a_a[x].as_ref();
                let by = a_b[y].as_ref();
                let hop = &basis.lift_product(ax.adjoint().to_owned().as_ref(), by)
                    + &basis.lift_product(ax, by.adjoint().to_owned().as_ref());
                h += &hop * faer::Scale(c64::new(-prefactor * bond.weight, 0.0));
            }
        }
        let h = hermitize(h.as_ref());
        let lift_all = |ops_a: &[Mat<c64>], ops_b: &[Mat<c64>], reduced: bool| -> Result<Vec<Mat<c64>>> {
            let mut out = Vec::with_capacity(ops_a.len() + ops_b.len());
            for o in ops_a {
                let r = if reduced { o.clone() } else { reduce_a(o)? };
                out.push(basis.lift(r.as_ref(), BlockSide::A));
            }
            for o in ops_b {
                let r = if reduced { o.clone() } else { reduce_b(o)? };
                out.push(basis.lift(r.as_ref(), BlockSide::B));
            }
            Ok(out)
        };
        let jumps = lift_all(&a.jumps, &b.jumps, false)?;
        let decay = hermitize(
            (&basis.lift(reduce_a(&a.decay)?.as_ref(), BlockSide::A)
                + &basis.lift(reduce_b(&b.decay)?.as_ref(), BlockSide::B))
                .as_ref(),
        );
        let lifted_a = lift_all(&a_a, &a_b, true)?;
        let lifted_n = lift_all(&a.n, &b.n, false)?;
        let parity = basis.parity.clone();

        // corner steady state, started from the product of the block states
        let tag = BasisTag::Generic { dim: m };
        let jump_ops: Vec<Operator> = jumps.iter().cloned().map(Operator::Dense).collect();
        let sys = SectorSystem::with_decay(
            &Operator::Dense(h.clone()),
            &jump_ops,
            &Operator::Dense(decay.clone()),
            &parity,
        )?;
        let guess = Mat::from_fn(m, m, |k, l| if k == l { c64::new(basis.pairs[k].2, 0.0) } else { ZERO });
        let x0 = sys.restrict(guess.as_ref());
        let lead = sys.leading_state(&self.opts.steady.gmres(), Some(&x0), MAX_LEAK_UPDATES)?;
        let residual = lead.residual;
        if !residual.is_finite() || residual > self.opts.steady.tol * sys.scale() {
            return Err(Error::NotConverged {
                iterations: lead.iterations,
                residual,
            });
        }
        let rho = DensityMatrix::from_unnormalized(tag, sys.assemble(&lead.x))?.with_grading(parity.clone())?;

        let embedding = match (&a.embedding, &b.embedding) {
            (Some(ea), Some(eb)) if ea.nrows() * eb.nrows() <= self.opts.embedding_cap => {
                let ea = ea * &basis.u_a;
                let eb = eb * &basis.u_b;
                let (ra, rb) = (ea.nrows(), eb.nrows());
                let (sa, sb) = (&basis.slot_a, &basis.slot_b);
                Some(Mat::from_fn(ra * rb, m, |r, k| {
                    ea[(r / rb, sa[k])] * eb[(r % rb, sb[k])]
                }))
            }
            _ => None,
        };

        self.diagnostics.push(MergeDiagnostic {
            left: le,
            right: re,
            result: ext,
            m_requested: m_req,
            m_kept: m,
            product_dim: basis.product_dim,
            kept_weight: basis.kept_weight,
            discarded_weight: basis.discarded_weight,
            smallest_kept: basis.pairs.last().map(|t| t.2).unwrap_or(0.0),
            residual,
            leak_rate: -lead.value.re,
            iterations: lead.iterations,
        });
        log::debug!(
            "merged {le} + {re} -> {ext}: M = {m} of {}, discarded {:.3e}, leak rate {:.3e}, residual {residual:.3e}",
            basis.product_dim,
            basis.discarded_weight,
            -lead.value.re
        );
        Ok(Block {
            offsets,
            h,
            jumps,
            decay,
            a: lifted_a,
            n: lifted_n,
            parity,
            rho,
            embedding,
            residual,
        })
    }
}

/// Which factor of a product space an operator acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockSide {
    A,
    B,
}

/// Corner space spanned by products of eigenvectors of two block states.
#[derive(Clone, Debug)]
pub struct CornerBasis {
    /// `(i, j, p_i q_j)` by descending weight; `i`, `j` index the eigenvectors
    /// of `ρ_A`, `ρ_B` sorted by descending eigenvalue.
    pairs: Vec<(usize, usize, f64)>,
    /// Eigenvectors of `ρ_A` (columns) that occur in some pair.
    u_a: Mat<c64>,
    u_b: Mat<c64>,
    /// Column of `u_a` / `u_b` used by each pair.
    slot_a: Vec<usize>,
    slot_b: Vec<usize>,
    parity: Vec<i8>,
    dims: (usize, usize),
    product_dim: usize,
    kept_weight: f64,
    discarded_weight: f64,
}

impl CornerBasis {
    pub fn dim(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize, f64)] {
        &self.pairs
    }

    /// Parity of each corner state (product of the block parities).
    pub fn parity(&self) -> &[i8] {
        &self.parity
    }

    pub fn product_dim(&self) -> usize {
        self.product_dim
    }

    pub fn kept_weight(&self) -> f64 {
        self.kept_weight
    }

    pub fn discarded_weight(&self) -> f64 {
        self.discarded_weight
    }

    pub fn is_exact(&self) -> bool {
        self.dim() == self.product_dim
    }

    /// Corner basis vectors written in the product basis `A ⊗ B` (A slow).
    pub fn vectors(&self) -> Mat<c64> {
        let (da, db) = self.dims;
        Mat::from_fn(da * db, self.dim(), |r, k| {
            self.u_a[(r / db, self.slot_a[k])] * self.u_b[(r % db, self.slot_b[k])]
        })
    }

    fn reduce(&self, op: MatRef<'_, c64>, side: BlockSide) -> Result<Mat<c64>> {
        let (u, d) = match side {
            BlockSide::A => (&self.u_a, self.dims.0),
            BlockSide::B => (&self.u_b, self.dims.1),
        };
        if op.nrows() != d || op.ncols() != d {
            return Err(Error::DimensionMismatch {
                context: "projected block operator",
                expected: d,
                found: op.nrows(),
            });
        }
        Ok(u.adjoint() * op * u)
    }

    /// `⟨k|O ⊗ I|l⟩` (or `I ⊗ O`) from the reduced block matrix.
    fn lift(&self, reduced: MatRef<'_, c64>, side: BlockSide) -> Mat<c64> {
        let m = self.dim();
        let (own, other) = match side {
            BlockSide::A => (&self.slot_a, &self.slot_b),
            BlockSide::B => (&self.slot_b, &self.slot_a),
        };
        Mat::from_fn(m, m, |k, l| {
            if other[k] == other[l] {
                reduced[(own[k], own[l])]
            } else {
                ZERO
            }
        })
    }

    fn lift_product(&self, ra: MatRef<'_, c64>, rb: MatRef<'_, c64>) -> Mat<c64> {
        let m = self.dim();
        let (sa, sb) = (&self.slot_a, &self.slot_b);
        Mat::from_fn(m, m, |k, l| ra[(sa[k], sa[l])] * rb[(sb[k], sb[l])])
    }
}

/// Keeps the `m` products of eigenvectors of `rho_a` and `rho_b` with the
/// largest weights `p_i q_j`, extended to the end of a tie. Eigenvectors are
/// computed within each sector of the states' gradings, so corner states
/// have definite parity. `m` larger than the product dimension keeps everything.
pub fn merge_spaces(rho_a: &DensityMatrix, rho_b: &DensityMatrix, m: usize) -> Result<CornerBasis> {
    if m == 0 {
        return Err(Error::InvalidInput("corner dimension must be >= 1".into()));
    }
    let sa = SectorEigen::new(rho_a)?;
    let sb = SectorEigen::new(rho_b)?;
    let mut products: Vec<(usize, usize, f64)> = Vec::with_capacity(sa.p.len() * sb.p.len());
    for (i, &p) in sa.p.iter().enumerate() {
        for (j, &q) in sb.p.iter().enumerate() {
            products.push((i, j, p.max(0.0) * q.max(0.0)));
        }
    }
    products.sort_by(|x, y| y.2.total_cmp(&x.2).then(x.0.cmp(&y.0)).then(x.1.cmp(&y.1)));
    let product_dim = products.len();
    let mut keep = m.min(product_dim);
    let w_last = products[keep - 1].2;
    if w_last > WEIGHT_FLOOR {
        while keep < product_dim && products[keep].2 >= w_last * (1.0 - TIE_TOLERANCE) {
            keep += 1;
        }
    }
    if keep < product_dim {
        // Eigenvectors with weight at the rounding level are arbitrary directions;
        // a partial selection of them leaves near-conserved modes in the corner space.
        keep = products[..keep]
            .iter()
            .take_while(|t| t.2 > WEIGHT_FLOOR)
            .count()
            .max(1);
    }
    products.truncate(keep);
    let total: f64 = sa.p.iter().map(|p| p.max(0.0)).sum::<f64>() * sb.p.iter().map(|q| q.max(0.0)).sum::<f64>();
    let kept_weight: f64 = products.iter().map(|t| t.2).sum();
    let (slot_a, cols_a) = compress(products.iter().map(|t| t.0), sa.p.len());
    let (slot_b, cols_b) = compress(products.iter().map(|t| t.1), sb.p.len());
    let parity = products.iter().map(|t| sa.parity[t.0] * sb.parity[t.1]).collect();
    Ok(CornerBasis {
        u_a: select_columns(sa.u.as_ref(), &cols_a),
        u_b: select_columns(sb.u.as_ref(), &cols_b),
        slot_a,
        slot_b,
        parity,
        dims: (rho_a.dim(), rho_b.dim()),
        product_dim,
        kept_weight,
        discarded_weight: (total - kept_weight).max(0.0),
        pairs: products,
    })
}

/// Projects an operator acting on one block onto the corner space:
/// `⟨φ_i χ_j| O ⊗ I |φ_i' χ_j'⟩ = ⟨φ_i|O|φ_i'⟩ δ_jj'` (and likewise for `B`).
pub fn project_operator(op: &Operator, side: BlockSide, basis: &CornerBasis) -> Result<Mat<c64>> {
    let reduced = basis.reduce(op.to_dense().as_ref(), side)?;
    Ok(basis.lift(reduced.as_ref(), side))
}

/// Projects `O_A ⊗ O_B` onto the corner space.
pub fn project_product(op_a: &Operator, op_b: &Operator, basis: &CornerBasis) -> Result<Mat<c64>> {
    let ra = basis.reduce(op_a.to_dense().as_ref(), BlockSide::A)?;
    let rb = basis.reduce(op_b.to_dense().as_ref(), BlockSide::B)?;
    Ok(basis.lift_product(ra.as_ref(), rb.as_ref()))
}

/// Eigen-decomposition of a state within each sector of its grading.
struct SectorEigen {
    /// Eigenvectors as columns, sorted by decreasing eigenvalue.
    u: Mat<c64>,
    p: Vec<f64>,
    parity: Vec<i8>,
}

impl SectorEigen {
    fn new(rho: &DensityMatrix) -> Result<Self> {
        let d = rho.dim();
        let m = hermitize(rho.matrix());
        let trivial = vec![1i8; d];
        let grading = rho.grading().unwrap_or(&trivial);
        let mut cols: Vec<(f64, i8, Vec<c64>)> = Vec::with_capacity(d);
        for sign in [1i8, -1] {
            let idx: Vec<usize> = (0..d).filter(|&i| grading[i] == sign).collect();
            if idx.is_empty() {
                continue;
            }
            let sub = Mat::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])]);
            let evd = sub
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::Linalg(format!("block state eigensolver: {e:?}")))?;
            for k in 0..idx.len() {
                let mut v = vec![ZERO; d];
                for (i, &r) in idx.iter().enumerate() {
                    v[r] = evd.U()[(i, k)];
                }
                cols.push((evd.S()[k].re, sign, v));
            }
        }
        cols.sort_by(|x, y| y.0.total_cmp(&x.0));
        let u = Mat::from_fn(d, d, |i, k| cols[k].2[i]);
        Ok(Self {
            u,
            p: cols.iter().map(|c| c.0).collect(),
            parity: cols.iter().map(|c| c.1).collect(),
        })
    }
}

/// Maps the indices produced by `it` onto the sorted set of distinct values;
/// returns the compressed index of each item and the original index of each slot.
fn compress(it: impl Iterator<Item = usize> + Clone, n: usize) -> (Vec<usize>, Vec<usize>) {
    let mut used = vec![false; n];
    for i in it.clone() {
        used[i] = true;
    }
    let cols: Vec<usize> = (0..n).filter(|&i| used[i]).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &c) in cols.iter().enumerate() {
        slot[c] = k;
    }
    (it.map(|i| slot[i]).collect(), cols)
}

fn select_columns(u: MatRef<'_, c64>, cols: &[usize]) -> Mat<c64> {
    Mat::from_fn(u.nrows(), cols.len(), |i, k| u[(i, cols[k])])
}

/// Corner-space steady state of the lattice `geom` following `schedule`.
pub fn corner_steady_state(
    params: &ModelParams,
    geom: &LatticeGeometry,
    fock: &FockSpace,
    schedule: &MergeSchedule,
    opts: &CornerOptions,
) -> Result<CornerResult> {
    let start = Instant::now();
    params.validate()?;
    schedule.validate()?;
    if schedule.shape() != geom.shape() {
        return Err(Error::InvalidInput(format!(
            "schedule is for {} but the lattice is {}",
            schedule.shape().label(),
            geom.shape().label()
        )));
    }
    if schedule.base_sites() != opts.base_sites {
        return Err(Error::InvalidInput(
            "schedule and options disagree on base_sites".into(),
        ));
    }
    let lattice = Extent::of(geom.shape());
    let mut ctx = Context {
        params,
        geom,
        fock,
        schedule,
        opts,
        lattice,
        cache: HashMap::new(),
        diagnostics: Vec::new(),
    };
    let top = ctx.solve(lattice)?;
    let diagnostics = std::mem::take(&mut ctx.diagnostics);
    drop(ctx);
    let top = Rc::try_unwrap(top).unwrap_or_else(|rc| (*rc).clone());

    let dim = top.dim();
    let basis = BasisTag::Corner {
        id: NEXT_BASIS_ID.fetch_add(1, Ordering::Relaxed),
        dim,
    };
    let sites: Vec<usize> = top.offsets.iter().map(|&(x, y)| x * lattice.wy + y).collect();
    let n_sites = sites.len();
    let mut a_by_site: Vec<Option<Operator>> = vec![None; n_sites];
    let mut n_by_site: Vec<Option<Operator>> = vec![None; n_sites];
    for (k, &s) in sites.iter().enumerate() {
        a_by_site[s] = Some(Operator::Dense(top.a[k].clone()));
        n_by_site[s] = Some(Operator::Dense(top.n[k].clone()));
    }
    let parity_diag: Vec<c64> = top.parity.iter().map(|&s| c64::new(s as f64, 0.0)).collect();
    let operators = BasisOperators::new(
        basis,
        Operator::Sparse(SparseOperator::diagonal(&parity_diag).tagged_hermitian(true)),
        a_by_site
            .into_iter()
            .map(|o| o.expect("every site is covered"))
            .collect(),
        n_by_site
            .into_iter()
            .map(|o| o.expect("every site is covered"))
            .collect(),
    )?;
    let rho = DensityMatrix::from_unnormalized(basis, top.rho.into_matrix())?.with_grading(top.parity)?;
    Ok(CornerResult {
        rho,
        operators,
        residual: top.residual,
        diagnostics,
        schedule: schedule.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
        n_max: fock.n_max(),
        embedding: top.embedding.map(|e| (e, sites)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceEntry {
    pub m: usize,
    pub parity: Option<f64>,
    pub entropy: Option<f64>,
    pub max_discarded_weight: Option<f64>,
    /// Set when the calculation at this `M` failed.
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct CornerConvergence {
    /// The accepted result: the first converged one, otherwise the one at the largest `M`.
    pub result: CornerResult,
    pub m: usize,
    /// False marks the result as unconverged in `M`.
    pub converged: bool,
    pub history: Vec<ConvergenceEntry>,
}

/// Runs the corner calculation for increasing `M` and accepts the first
/// result whose parity and entropy moved by less than `tol` from the previous
/// `M` (or that involved no truncation at all). If none qualifies, the
/// largest-`M` result is returned with `converged = false`.
pub fn convergence_sweep(
    params: &ModelParams,
    geom: &LatticeGeometry,
    fock: &FockSpace,
    m_list: &[usize],
    tol: f64,
    opts: &CornerOptions,
) -> Result<CornerConvergence> {
    if m_list.is_empty() {
        return Err(Error::InvalidInput("empty list of corner dimensions".into()));
    }
    let mut ms = m_list.to_vec();
    ms.sort_unstable();
    ms.dedup();
    let mut history = Vec::new();
    let mut previous: Option<(f64, f64)> = None;
    let mut last: Option<(CornerResult, usize)> = None;
    let mut last_error = None;
    for &m in &ms {
        let schedule = MergeSchedule::new(geom.shape(), opts.base_sites, m)?;
        match corner_steady_state(params, geom, fock, &schedule, opts) {
            Ok(res) => {
                let parity = parity_expectation(&res.rho, &res.operators)?;
                let entropy = von_neumann_entropy(&res.rho)?;
                history.push(ConvergenceEntry {
                    m,
                    parity: Some(parity),
                    entropy: Some(entropy),
                    max_discarded_weight: Some(res.max_discarded_weight()),
                    error: None,
                });
                let settled = previous.is_some_and(|(p, s)| (p - parity).abs() < tol && (s - entropy).abs() < tol);
                if settled || res.is_exact() {
                    return Ok(CornerConvergence {
                        result: res,
                        m,
                        converged: true,
                        history,
                    });
                }
                previous = Some((parity, entropy));
                last = Some((res, m));
            }
            Err(e @ (Error::CornerTooSmall { .. } | Error::NotConverged { .. })) => {
                log::warn!("corner calculation at M = {m} failed: {e}");
                history.push(ConvergenceEntry {
                    m,
                    parity: None,
                    entropy: None,
                    max_discarded_weight: None,
                    error: Some(e.to_string()),
                });
                previous = None;
                last_error = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    match last {
        Some((result, m)) => {
            log::warn!("corner results did not converge in M up to {m}");
            Ok(CornerConvergence {
                result,
                m,
                converged: false,
                history,
            })
        }
        None => Err(last_error.expect("at least one M was tried")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules_cover_the_lattice() {
        let s = MergeSchedule::new(Shape::Chain(4), 2, 10).unwrap();
        assert_eq!(s.leaves(), &[Extent { wx: 2, wy: 1 }]);
        assert_eq!(s.steps().len(), 1);
        let s = MergeSchedule::new(Shape::Chain(5), 2, 10).unwrap();
        assert_eq!(s.steps().last().unwrap().result, Extent { wx: 5, wy: 1 });
        let s = MergeSchedule::new(Shape::Rect(4, 4), 2, 10).unwrap();
        // 4x4 -> 4x2 -> 2x2 -> 2x1 leaves
        assert_eq!(s.leaves(), &[Extent { wx: 2, wy: 1 }]);
        let results: Vec<Extent> = s.steps().iter().map(|st| st.result).collect();
        assert_eq!(
            results,
            vec![
                Extent { wx: 2, wy: 2 },
                Extent { wx: 4, wy: 2 },
                Extent { wx: 4, wy: 4 }
            ]
        );
        assert!(MergeSchedule::new(Shape::Chain(3), 0, 4).is_err());
        assert!(MergeSchedule::new(Shape::Chain(3), 1, 0).is_err());
        assert!(s.clone().with_step_dims(&[1, 2]).is_err());
    }

    #[test]
    fn compress_keeps_order() {
        let (idx, cols) = compress([5usize, 2, 5, 7].into_iter(), 8);
        assert_eq!(cols, vec![2, 5, 7]);
        assert_eq!(idx, vec![1, 0, 1, 2]);
    }

    #[test]
    fn single_leaf_lattice_is_solved_directly() {
        let params = ModelParams::standard_convention(10.0, 4.0, 2.0, 1.0).unwrap();
        let geom = LatticeGeometry::chain(2).unwrap();
        let fock = FockSpace::new(3).unwrap();
        let schedule = MergeSchedule::new(Shape::Chain(2), 2, 1).unwrap();
        let res = corner_steady_state(&params, &geom, &fock, &schedule, &CornerOptions::default()).unwrap();
        assert!(res.diagnostics.is_empty());
        assert_eq!(res.dim(), 16);
        assert!(res.fock_density().is_some());
    }

    fn diag_state(p: &[f64]) -> DensityMatrix {
        let m = Mat::from_fn(p.len(), p.len(), |i, j| if i == j { c64::new(p[i], 0.0) } else { ZERO });
        DensityMatrix::new(BasisTag::Generic { dim: p.len() }, m).unwrap()
    }

    #[test]
    fn merge_keeps_largest_products_and_whole_ties() {
        let rho = diag_state(&[0.9, 0.1]);
        let basis = merge_spaces(&rho, &rho, 2).unwrap();
        let w: Vec<f64> = basis.pairs().iter().map(|t| t.2).collect();
        assert_eq!(basis.dim(), 3);
        assert!((w[0] - 0.81).abs() < 1e-15 && (w[1] - 0.09).abs() < 1e-15 && (w[2] - 0.09).abs() < 1e-15);
        assert!((basis.discarded_weight() - 0.01).abs() < 1e-15);
        assert!(merge_spaces(&rho, &rho, 0).is_err());
        let full = merge_spaces(&rho, &rho, 100).unwrap();
        assert!(full.is_exact());
    }

    #[test]
    fn pure_blocks_give_a_rank_one_corner() {
        let rho = diag_state(&[1.0, 0.0, 0.0]);
        let basis = merge_spaces(&rho, &rho, 1).unwrap();
        assert_eq!(basis.dim(), 1);
        assert!((basis.kept_weight() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_projects_to_identity() {
        let rho = diag_state(&[0.5, 0.3, 0.2]);
        let basis = merge_spaces(&rho, &rho, 4).unwrap();
        let id = Operator::Dense(Mat::<c64>::identity(3, 3));
        for side in [BlockSide::A, BlockSide::B] {
            let p = project_operator(&id, side, &basis).unwrap();
            for i in 0..basis.dim() {
                for j in 0..basis.dim() {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((p[(i, j)] - c64::new(e, 0.0)).norm() < 1e-14);
                }
            }
        }
        let wrong = Operator::Dense(Mat::<c64>::identity(2, 2));
        assert!(project_operator(&wrong, BlockSide::A, &basis).is_err());
    }
}

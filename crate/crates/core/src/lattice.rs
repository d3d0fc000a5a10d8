//! Lattice geometry, model parameters, and the driven-dissipative Bose-Hubbard
//! Hamiltonian with its one- and two-photon loss channels.

use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{annihilation_op, embed_site_op_capped, number_op, FockSpace, DEFAULT_DIM_CAP};
use crate::sparse::{sum_operators, SparseOperator};

/// Lattice shape. 2D sites are numbered `x * ly + y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Chain(usize),
    Rect(usize, usize),
}

impl Shape {
    pub fn n_sites(&self) -> usize {
        match *self {
            Shape::Chain(l) => l,
            Shape::Rect(lx, ly) => lx * ly,
        }
    }

    pub fn dimensionality(&self) -> usize {
        match self {
            Shape::Chain(_) => 1,
            Shape::Rect(..) => 2,
        }
    }

    /// Linear size used in finite-size scaling: `N` in 1D, `√N` in 2D.
    pub fn linear_size(&self) -> f64 {
        match *self {
            Shape::Chain(l) => l as f64,
            Shape::Rect(lx, ly) => ((lx * ly) as f64).sqrt(),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Shape::Chain(l) => format!("{l}"),
            Shape::Rect(lx, ly) => format!("{lx}x{ly}"),
        }
    }

    /// Parses `"4"` as a chain and `"2x3"` as a rectangle.
    pub fn parse(label: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("cannot parse lattice size '{label}'"));
        match label.split_once(['x', 'X', '×']) {
            Some((a, b)) => Ok(Shape::Rect(
                a.trim().parse().map_err(|_| bad())?,
                b.trim().parse().map_err(|_| bad())?,
            )),
            None => Ok(Shape::Chain(label.trim().parse().map_err(|_| bad())?)),
        }
    }
}

/// Nearest-neighbour pair stored once, with its multiplicity on the periodic lattice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeGeometry {
    shape: Shape,
    bonds: Vec<Bond>,
}

impl LatticeGeometry {
    /// Periodic chain. `l = 1` is a single site with no bonds; for `l = 2` the
    /// two bonds of the ring collapse onto one pair of weight 2.
    pub fn chain(l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidInput("chain length must be >= 1".into()));
        }
        let mut pairs = Vec::new();
        for i in 0..l {
            pairs.push((i, (i + 1) % l));
        }
        Ok(Self {
            shape: Shape::Chain(l),
            bonds: merge_pairs(pairs),
        })
    }

    /// Periodic `lx × ly` rectangle with both extents at least 2.
    pub fn rectangular(lx: usize, ly: usize) -> Result<Self> {
        if lx < 2 || ly < 2 {
            return Err(Error::InvalidInput(format!(
                "2D lattices need both extents >= 2, got {lx}x{ly}"
            )));
        }
        let mut pairs = Vec::new();
        for x in 0..lx {
            for y in 0..ly {
                let s = x * ly + y;
                pairs.push((s, ((x + 1) % lx) * ly + y));
                pairs.push((s, x * ly + (y + 1) % ly));
            }
        }
        Ok(Self {
            shape: Shape::Rect(lx, ly),
            bonds: merge_pairs(pairs),
        })
    }

    pub fn from_shape(shape: Shape) -> Result<Self> {
        match shape {
            Shape::Chain(l) => Self::chain(l),
            Shape::Rect(lx, ly) => Self::rectangular(lx, ly),
        }
    }

    /// Geometry with an explicit bond list (used for open sub-blocks).
    pub fn with_bonds(shape: Shape, bonds: Vec<Bond>) -> Self {
        Self { shape, bonds }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn n_sites(&self) -> usize {
        self.shape.n_sites()
    }

    pub fn dimensionality(&self) -> usize {
        self.shape.dimensionality()
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    /// Summed bond weight touching each site.
    pub fn coordination(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.n_sites()];
        for b in &self.bonds {
            z[b.a] += b.weight;
            z[b.b] += b.weight;
        }
        z
    }
}

fn merge_pairs(pairs: Vec<(usize, usize)>) -> Vec<Bond> {
    let mut bonds: Vec<Bond> = Vec::new();
    for (i, j) in pairs {
        if i == j {
            continue;
        }
        let (a, b) = (i.min(j), i.max(j));
        match bonds.iter_mut().find(|bd| bd.a == a && bd.b == b) {
            Some(bd) => bd.weight += 1.0,
            None => bonds.push(Bond { a, b, weight: 1.0 }),
        }
    }
    bonds.sort_by_key(|b| (b.a, b.b));
    bonds
}

/// Model parameters, all energies and rates in units of the one-photon loss rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Pump-cavity detuning Δ.
    pub delta: f64,
    /// Kerr energy U.
    pub u: f64,
    /// Two-photon drive amplitude G.
    pub g: c64,
    /// Hopping J.
    pub j_hop: f64,
    /// One-photon loss rate γ.
    pub gamma: f64,
    /// Two-photon loss rate η.
    pub eta: f64,
}

impl ModelParams {
    pub fn new(delta: f64, u: f64, g: c64, j_hop: f64, gamma: f64, eta: f64) -> Result<Self> {
        let p = Self {
            delta,
            u,
            g,
            j_hop,
            gamma,
            eta,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with `Δ = -|J|` and `η = γ`.
    pub fn standard_convention(u: f64, g: f64, j_hop: f64, gamma: f64) -> Result<Self> {
        Self::new(-j_hop.abs(), u, c64::new(g, 0.0), j_hop, gamma, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.gamma > 0.0) {
            problems.push(format!("gamma must be > 0 (got {})", self.gamma));
        }
        if !(self.eta >= 0.0) {
            problems.push(format!("eta must be >= 0 (got {})", self.eta));
        }
        if !(self.u >= 0.0) {
            problems.push(format!("u must be >= 0 (got {})", self.u));
        }
        let all = [
            self.delta, self.u, self.g.re, self.g.im, self.j_hop, self.gamma, self.eta,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            problems.push("parameters must be finite".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(problems.join("; ")))
        }
    }

    pub fn follows_standard_convention(&self) -> bool {
        (self.delta + self.j_hop.abs()).abs() <= 1e-12 * (1.0 + self.j_hop.abs())
            && (self.eta - self.gamma).abs() <= 1e-12 * self.gamma
    }

    pub fn with_g(mut self, g: f64) -> Self {
        self.g = c64::new(g, 0.0);
        self
    }
}

/// Single-site part `-Δ n + (U/2) a†² a² + (G/2) a†² + (G*/2) a²`.
pub fn site_hamiltonian(params: &ModelParams, fock: &FockSpace) -> SparseOperator {
    let a = annihilation_op(fock);
    let ad = a.adjoint();
    let a2 = a.matmul(&a);
    let ad2 = ad.matmul(&ad);
    let n = number_op(fock);
    let kerr = ad2.matmul(&a2);
    let terms = [
        n.scale(c64::new(-params.delta, 0.0)),
        kerr.scale(c64::new(params.u / 2.0, 0.0)),
        ad2.scale(params.g / 2.0),
        a2.scale(params.g.conj() / 2.0),
    ];
    sum_operators(terms.iter()).expect("non-empty").tagged_hermitian(true)
}

/// Full lattice Hamiltonian; hopping prefactor `J/(2d)` times the bond weight.
pub fn build_hamiltonian(params: &ModelParams, geom: &LatticeGeometry, fock: &FockSpace) -> Result<SparseOperator> {
    build_hamiltonian_capped(params, geom, fock, DEFAULT_DIM_CAP)
}

pub fn build_hamiltonian_capped(
    params: &ModelParams,
    geom: &LatticeGeometry,
    fock: &FockSpace,
    cap: usize,
) -> Result<SparseOperator> {
    let n = geom.n_sites();
    fock.lattice_dim(n, cap)?;
    let h1 = site_hamiltonian(params, fock);
    let a = annihilation_op(fock);
    let mut terms = Vec::new();
    for j in 0..n {
        terms.push(embed_site_op_capped(&h1, j, n, cap)?);
    }
    if params.j_hop != 0.0 && !geom.bonds().is_empty() {
        let lowered: Vec<SparseOperator> = (0..n)
            .map(|j| embed_site_op_capped(&a, j, n, cap))
            .collect::<Result<_>>()?;
        let raised: Vec<SparseOperator> = lowered.iter().map(|x| x.adjoint()).collect();
        let prefactor = params.j_hop / (2.0 * geom.dimensionality() as f64);
        for b in geom.bonds() {
            let hop = &raised[b.a].matmul(&lowered[b.b]) + &raised[b.b].matmul(&lowered[b.a]);
            terms.push(hop.scale(c64::new(-prefactor * b.weight, 0.0)));
        }
    }
    let h = sum_operators(terms.iter()).expect("at least one site");
    h.into_checked_hermitian()
}

/// Jump operators `√γ a_j` and `√η a_j²`, grouped per site. The two-photon
/// family is omitted when `η = 0`.
pub fn build_jump_operators(
    params: &ModelParams,
    geom: &LatticeGeometry,
    fock: &FockSpace,
) -> Result<Vec<SparseOperator>> {
    build_jump_operators_capped(params, geom, fock, DEFAULT_DIM_CAP)
}

pub fn build_jump_operators_capped(
    params: &ModelParams,
    geom: &LatticeGeometry,
    fock: &FockSpace,
    cap: usize,
) -> Result<Vec<SparseOperator>> {
    let n = geom.n_sites();
    let mut out = Vec::with_capacity(2 * n);
    let pairs = site_jump_operators(params, fock);
    for j in 0..n {
        for op in &pairs {
            out.push(embed_site_op_capped(op, j, n, cap)?);
        }
    }
    Ok(out)
}

/// Single-site loss channels in the order used by [`build_jump_operators`].
pub fn site_jump_operators(params: &ModelParams, fock: &FockSpace) -> Vec<SparseOperator> {
    let a = annihilation_op(fock);
    let mut ops = vec![a.scale(c64::new(params.gamma.sqrt(), 0.0))];
    if params.eta > 0.0 {
        ops.push(a.matmul(&a).scale(c64::new(params.eta.sqrt(), 0.0)));
    }
    ops
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::parity_op;
    use faer::Mat;

    fn params(delta: f64, u: f64, g: f64, j: f64) -> ModelParams {
        ModelParams::new(delta, u, c64::new(g, 0.0), j, 1.0, 1.0).unwrap()
    }

    #[test]
    fn geometry_bond_counts() {
        let c4 = LatticeGeometry::chain(4).unwrap();
        assert_eq!(c4.bonds().len(), 4);
        assert!(c4.coordination().iter().all(|&z| z == 2.0));
        let c2 = LatticeGeometry::chain(2).unwrap();
        assert_eq!(
            c2.bonds(),
            &[Bond {
                a: 0,
                b: 1,
                weight: 2.0
            }]
        );
        assert!(LatticeGeometry::chain(1).unwrap().bonds().is_empty());
        for (lx, ly) in [(2, 2), (2, 3), (3, 3), (4, 2)] {
            let g = LatticeGeometry::rectangular(lx, ly).unwrap();
            assert!(g.coordination().iter().all(|&z| z == 4.0), "{lx}x{ly}");
            let mut seen = std::collections::HashSet::new();
            assert!(g.bonds().iter().all(|b| seen.insert((b.a, b.b))));
        }
        assert!(LatticeGeometry::rectangular(1, 2).is_err());
    }

    #[test]
    fn shape_labels_round_trip() {
        for s in [Shape::Chain(5), Shape::Rect(2, 3)] {
            assert_eq!(Shape::parse(&s.label()).unwrap(), s);
        }
        assert!((Shape::Rect(3, 3).linear_size() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn detuning_only_single_site() {
        let fock = FockSpace::new(4).unwrap();
        let geom = LatticeGeometry::chain(1).unwrap();
        let h = build_hamiltonian(&params(1.0, 0.0, 0.0, 0.0), &geom, &fock).unwrap();
        let diag = h.as_diagonal().unwrap();
        for (n, v) in diag.iter().enumerate() {
            assert_eq!(v.re, -(n as f64));
        }
    }

    #[test]
    fn kerr_term_on_two_photons() {
        let fock = FockSpace::new(4).unwrap();
        let geom = LatticeGeometry::chain(1).unwrap();
        let h = build_hamiltonian(&params(0.0, 2.0, 0.0, 0.0), &geom, &fock).unwrap();
        assert!((h.get(2, 2).re - 2.0).abs() < 1e-14);
    }

    #[test]
    fn two_site_hopping_matches_dense_construction() {
        let fock = FockSpace::new(1).unwrap();
        let geom = LatticeGeometry::chain(2).unwrap();
        let p = ModelParams::new(0.0, 0.0, c64::new(0.0, 0.0), 1.0, 1.0, 0.0).unwrap();
        let h = build_hamiltonian(&p, &geom, &fock).unwrap();
        // dense oracle: -(J/2)·2·(a†⊗a + a⊗a†) with the doubled bond
        let a = Mat::from_fn(2, 2, |i, j| {
            if i == 0 && j == 1 {
                c64::new(1.0, 0.0)
            } else {
                c64::new(0.0, 0.0)
            }
        });
        let kron = |x: &Mat<c64>, y: &Mat<c64>| Mat::from_fn(4, 4, |i, j| x[(i / 2, j / 2)] * y[(i % 2, j % 2)]);
        let ad = a.adjoint().to_owned();
        let oracle = (kron(&ad, &a) + kron(&a, &ad)) * faer::Scale(c64::new(-1.0, 0.0));
        let dense = h.to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert!((dense[(i, j)] - oracle[(i, j)]).norm() < 1e-15);
            }
        }
        // |10> is index 2, |01> is index 1
        assert!((h.get(2, 1).re + 1.0).abs() < 1e-15);
        // a single bond of weight 1 would give -1/2
        let single = LatticeGeometry::with_bonds(
            Shape::Chain(2),
            vec![Bond {
                a: 0,
                b: 1,
                weight: 1.0,
            }],
        );
        let h1 = build_hamiltonian(&p, &single, &fock).unwrap();
        assert!((h1.get(2, 1).re + 0.5).abs() < 1e-15);
    }

    #[test]
    fn parity_symmetry_and_real_symmetry() {
        let fock = FockSpace::new(3).unwrap();
        for geom in [
            LatticeGeometry::chain(3).unwrap(),
            LatticeGeometry::rectangular(2, 2).unwrap(),
        ] {
            let p = ModelParams::standard_convention(40.0, 1.7, 20.0, 1.0).unwrap();
            let h = build_hamiltonian(&p, &geom, &fock).unwrap();
            let pi = parity_op(&fock, geom.n_sites()).unwrap();
            let php = pi.matmul(&h).matmul(&pi);
            assert!((&php - &h).max_abs() <= 1e-13);
            let ht = h.transpose();
            assert!((&ht - &h).max_abs() <= 1e-13);
            assert!(h.values().iter().all(|v| v.im == 0.0));
        }
    }

    #[test]
    fn jump_operators() {
        let fock = FockSpace::new(3).unwrap();
        let single = LatticeGeometry::chain(1).unwrap();
        let p = ModelParams::new(0.0, 0.0, c64::new(0.0, 0.0), 0.0, 1.0, 4.0).unwrap();
        let jumps = build_jump_operators(&p, &single, &fock).unwrap();
        assert_eq!(jumps.len(), 2);
        assert_eq!(jumps[0].get(0, 1).re, 1.0);
        assert!((jumps[1].get(0, 2).re - 2.0 * 2f64.sqrt()).abs() < 1e-14);
        let chain = LatticeGeometry::chain(4).unwrap();
        let p = ModelParams::standard_convention(10.0, 1.0, 5.0, 1.0).unwrap();
        assert_eq!(build_jump_operators(&p, &chain, &fock).unwrap().len(), 8);
        let no_eta = ModelParams::new(0.0, 0.0, c64::new(0.0, 0.0), 0.0, 1.0, 0.0).unwrap();
        assert_eq!(build_jump_operators(&no_eta, &chain, &fock).unwrap().len(), 4);
    }

    #[test]
    fn params_validation_and_convention() {
        assert!(ModelParams::new(0.0, 1.0, c64::new(0.0, 0.0), 0.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(0.0, -1.0, c64::new(0.0, 0.0), 0.0, 1.0, 0.0).is_err());
        let p = ModelParams::standard_convention(40.0, 1.2, 20.0, 1.0).unwrap();
        assert_eq!(p.delta, -20.0);
        assert_eq!(p.eta, 1.0);
        assert!(p.follows_standard_convention());
    }
}

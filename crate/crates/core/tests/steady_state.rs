use qdbh_core::c64;
use qdbh_core::fock::{annihilation_op, FockSpace};
use qdbh_core::lattice::{LatticeGeometry, ModelParams};
use qdbh_core::liouvillian::{steady_state, Liouvillian, SolverMethod, SteadyStateOptions};
use qdbh_core::observables::{
    expectation, parity_commutator_norm, parity_expectation, von_neumann_entropy, BasisOperators,
};
use qdbh_core::operator::Operator;

/// Below threshold the quadratic (U = 0, η = 0) oscillator has a Gaussian
/// steady state whose moments follow from the closed equations
/// `d⟨a†a⟩/dt = iG(⟨a²⟩ − ⟨a†²⟩) − γ⟨a†a⟩` and
/// `d⟨a²⟩/dt = (2iΔ − γ)⟨a²⟩ − iG(2⟨a†a⟩ + 1)`.
fn gaussian_moments(delta: f64, g: f64, gamma: f64) -> (f64, c64) {
    let denom = 4.0 * delta * delta + gamma * gamma;
    let n = 2.0 * g * g / (denom - 4.0 * g * g);
    let m = c64::new(2.0 * delta, -gamma) * (g * (2.0 * n + 1.0) / denom);
    (n, m)
}

fn single_mode(delta: f64, g: f64, n_max: usize) -> (Liouvillian, FockSpace) {
    let params = ModelParams::new(delta, 0.0, c64::new(g, 0.0), 0.0, 1.0, 0.0).unwrap();
    let fock = FockSpace::new(n_max).unwrap();
    let geom = LatticeGeometry::chain(1).unwrap();
    (Liouvillian::for_lattice(&params, &geom, &fock).unwrap(), fock)
}

#[test]
fn quadratic_oscillator_matches_gaussian_moments() {
    for (delta, g) in [(-1.0, 0.3), (0.5, 0.2), (-2.0, 0.9)] {
        let (n_exact, m_exact) = gaussian_moments(delta, g, 1.0);
        let (liou, fock) = single_mode(delta, g, 30);
        let a = annihilation_op(&fock);
        let number = Operator::Sparse(a.adjoint().matmul(&a));
        let a2 = Operator::Sparse(a.matmul(&a));
        for method in [SolverMethod::Direct, SolverMethod::Iterative] {
            let res = steady_state(&liou, method, &SteadyStateOptions::default()).unwrap();
            let n = expectation(&res.rho, &number).unwrap();
            let m = expectation(&res.rho, &a2).unwrap();
            assert!(
                (n.re - n_exact).abs() < 1e-8,
                "{method:?} Δ={delta} G={g}: n {} vs {n_exact}",
                n.re
            );
            assert!(
                (m - m_exact).norm() < 1e-8,
                "{method:?} Δ={delta} G={g}: <a²> {m} vs {m_exact}"
            );
        }
    }
}

#[test]
fn undriven_lattice_relaxes_to_vacuum() {
    let params = ModelParams::standard_convention(20.0, 0.0, 10.0, 1.0).unwrap();
    let geom = LatticeGeometry::chain(3).unwrap();
    let fock = FockSpace::new(3).unwrap();
    let liou = Liouvillian::for_lattice(&params, &geom, &fock).unwrap();
    let ops = BasisOperators::fock(&fock, 3).unwrap();
    let res = steady_state(&liou, SolverMethod::Iterative, &SteadyStateOptions::default()).unwrap();
    assert!((parity_expectation(&res.rho, &ops).unwrap() - 1.0).abs() < 1e-9);
    assert!(von_neumann_entropy(&res.rho).unwrap() < 1e-8);
}

#[test]
fn all_routes_agree_on_small_lattices() {
    let cases = [
        (1usize, 8usize, 10.0, 0.0, 2.0),
        (2, 4, 10.0, 5.0, 1.5),
        (3, 2, 20.0, 10.0, 3.0),
    ];
    let opts = SteadyStateOptions::default();
    for (n, n_max, u, j, g) in cases {
        let params = ModelParams::standard_convention(u, g, j, 1.0).unwrap();
        let geom = LatticeGeometry::chain(n).unwrap();
        let fock = FockSpace::new(n_max).unwrap();
        let liou = Liouvillian::for_lattice(&params, &geom, &fock).unwrap();
        let ops = BasisOperators::fock(&fock, n).unwrap();
        let states: Vec<_> = [
            SolverMethod::Direct,
            SolverMethod::Eigen,
            SolverMethod::Iterative,
            SolverMethod::Evolution,
        ]
        .iter()
        .map(|&m| steady_state(&liou, m, &opts).unwrap().rho)
        .collect();
        for i in 0..states.len() {
            for k in i + 1..states.len() {
                let d = states[i].trace_distance(&states[k]).unwrap();
                assert!(d < 1e-5, "N={n}: routes {i} and {k} differ by {d:.2e}");
            }
            assert!(parity_commutator_norm(&states[i], &ops).unwrap() < 1e-6);
        }
    }
}

#[test]
fn corner_method_is_rejected_by_the_exact_dispatcher() {
    let (liou, _) = single_mode(-1.0, 0.3, 4);
    assert!(steady_state(&liou, SolverMethod::Corner, &SteadyStateOptions::default()).is_err());
}

//! Library results against independently constructed dense references.

use std::f64::consts::{FRAC_PI_2, LN_2};

use approx::assert_abs_diff_eq;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mipt::entropy::{von_neumann_entropy, Subsystem};
use mipt::gradient::{
    averaged_expectation_exact, branch_gradient, ensemble_gradient_exact, sample_branch,
    DEFAULT_ENUMERATION_CAP,
};
use mipt::observable::Observable;
use mipt::oracle::{gate_matrix, partial_trace};
use mipt::sim::{
    build_hea, build_xxz_hva, replay_branch, sample_sites, uniform_params, CircuitSpec, GateOp,
    MeasurementSite, StateVector,
};

fn random_state(n: usize, rng: &mut ChaCha8Rng) -> StateVector {
    let amps: Vec<Complex64> = (0..1 << n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    StateVector::from_amplitudes(amps.into_iter().map(|a| a / norm).collect()).unwrap()
}

/// `-sum l ln l` from nalgebra's Hermitian eigensolver; used only on
/// full-rank marginals of random states, where that solver is reliable.
fn dense_entropy(state: &StateVector, keep: &[usize]) -> f64 {
    let psi = DVector::from_column_slice(state.amplitudes());
    let rho = partial_trace(&psi, state.num_qubits(), keep);
    rho.symmetric_eigenvalues()
        .iter()
        .filter(|&&l| l > 1e-14)
        .map(|&l| -l * l.ln())
        .sum()
}

#[test]
fn entropy_matches_dense_density_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 2..=6 {
        for _ in 0..10 {
            let state = random_state(n, &mut rng);
            let size = rng.gen_range(1..n);
            let mut qubits: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                qubits.swap(i, rng.gen_range(0..=i));
            }
            let mut keep = qubits[..size].to_vec();
            keep.sort_unstable();
            let s = von_neumann_entropy(&state, &Subsystem::new(keep.clone(), n).unwrap()).unwrap();
            assert_abs_diff_eq!(s, dense_entropy(&state, &keep), epsilon = 1e-10);
        }
    }
}

#[test]
fn bell_pair_and_product_state() {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let c = |x: f64| Complex64::new(x, 0.0);
    let bell = StateVector::from_amplitudes(vec![c(r), c(0.0), c(0.0), c(r)]).unwrap();
    let s = von_neumann_entropy(&bell, &Subsystem::new([0], 2).unwrap()).unwrap();
    assert_abs_diff_eq!(s, LN_2, epsilon = 1e-12);

    let product = StateVector::basis(4, 0b1010).unwrap();
    for q in 0..4 {
        let s = von_neumann_entropy(&product, &Subsystem::new([q], 4).unwrap()).unwrap();
        assert_abs_diff_eq!(s, 0.0, epsilon = 1e-12);
    }
}

#[test]
fn gates_match_dense_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 4;
    for _ in 0..20 {
        let t = rng.gen_range(-6.0..6.0);
        let gates = [
            GateOp::h(1),
            GateOp::cnot(3, 0),
            GateOp::rx(2, t),
            GateOp::ry(0, t),
            GateOp::rzz(0, 3, t),
            GateOp::ryy(2, 1, t),
            GateOp::rxx(1, 3, t),
        ];
        for g in &gates {
            let mut state = random_state(n, &mut rng);
            let before = DVector::from_column_slice(state.amplitudes());
            state.apply(g).unwrap();
            let expected = gate_matrix(n, g) * before;
            for (a, b) in state.amplitudes().iter().zip(expected.iter()) {
                assert!((a - b).norm() < 1e-12, "{g:?}");
            }
        }
    }
}

fn random_circuit(rng: &mut ChaCha8Rng, n: usize, depth: usize) -> CircuitSpec {
    if rng.gen::<bool>() {
        build_xxz_hva(n, depth, &uniform_params(4 * depth, rng)).unwrap()
    } else {
        build_hea(n, depth, &uniform_params(2 * n * depth, rng)).unwrap()
    }
}

fn all_outcomes(m: usize) -> impl Iterator<Item = Vec<u8>> {
    (0..1u32 << m).map(move |mask| (0..m).map(|k| (mask >> k & 1) as u8).collect())
}

fn total_probability(c: &CircuitSpec, sites: &[MeasurementSite]) -> f64 {
    all_outcomes(sites.len())
        .map(|o| replay_branch(c, sites, &o).map_or(0.0, |(_, p)| p))
        .sum()
}

#[test]
fn branch_probabilities_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let c = random_circuit(&mut rng, 4, 3);
        let mut sites = sample_sites(4, 3, 0.5, &mut rng);
        sites.truncate(10);
        assert_abs_diff_eq!(total_probability(&c, &sites), 1.0, epsilon = 1e-9);
    }
}

#[test]
fn shifted_circuits_conserve_probability() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let c = random_circuit(&mut rng, 4, 2);
        let sites = sample_sites(4, 2, 0.4, &mut rng);
        let l = rng.gen_range(0..c.params.len());
        for at in c.param_occurrences(l) {
            for s in [FRAC_PI_2, -FRAC_PI_2] {
                let shifted = c.with_gate_shift(at, s).unwrap();
                assert_abs_diff_eq!(total_probability(&shifted, &sites), 1.0, epsilon = 1e-9);
            }
        }
    }
}

#[test]
fn born_frequencies() {
    // One RY layer then a single measurement of qubit 0.
    let c = build_hea(4, 1, &[0.9, 0.2, 0.4, 1.1, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let sites = [MeasurementSite { layer: 0, qubit: 0 }];
    let p1 = replay_branch(&c, &sites, &[1]).unwrap().1;
    let trials = 20_000;
    let mut ones = 0;
    for k in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(k);
        ones += sample_branch(&c, &sites, &mut rng).unwrap().0[0] as usize;
    }
    let freq = ones as f64 / trials as f64;
    let se = (p1 * (1.0 - p1) / trials as f64).sqrt();
    assert!((freq - p1).abs() < 3.0 * se, "freq {freq} vs p {p1}");
}

#[test]
fn gradients_are_linear_in_the_observable() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let o1: Observable = "Z0Z1".parse().unwrap();
    let o2: Observable = "X1 + 0.5*Y2Y3".parse().unwrap();
    let (alpha, beta) = (0.7, -1.9);
    let both = o1.combine(alpha, &o2, beta);
    for _ in 0..10 {
        let c = random_circuit(&mut rng, 4, 3);
        let sites = sample_sites(4, 3, 0.3, &mut rng);
        let (outcomes, _) = sample_branch(&c, &sites, &mut rng).unwrap();
        let l = rng.gen_range(0..c.params.len());
        let g = |o: &Observable| branch_gradient(&c, &sites, &outcomes, l, o).unwrap().value;
        assert_abs_diff_eq!(g(&both), alpha * g(&o1) + beta * g(&o2), epsilon = 1e-10);
        let e = |o: &Observable| {
            ensemble_gradient_exact(&c, &sites, l, o, DEFAULT_ENUMERATION_CAP)
                .unwrap()
                .value
        };
        assert_abs_diff_eq!(e(&both), alpha * e(&o1) + beta * e(&o2), epsilon = 1e-10);
    }
}

#[test]
fn ensemble_gradient_matches_enumerated_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let o = Observable::zz(0, 1);
    for _ in 0..8 {
        let c = random_circuit(&mut rng, 4, 3);
        let sites = sample_sites(4, 3, 0.3, &mut rng);
        let l = rng.gen_range(0..c.params.len());
        let at = |x: f64| {
            let mut p = c.params.clone();
            p[l] = x;
            averaged_expectation_exact(&c.with_params(&p).unwrap(), &sites, &o).unwrap()
        };
        let h = 1e-5;
        let fd = (at(c.params[l] + h) - at(c.params[l] - h)) / (2.0 * h);
        let g = ensemble_gradient_exact(&c, &sites, l, &o, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!((g.value - fd).abs() <= (1e-6 * fd.abs()).max(1e-8), "{} vs {fd}", g.value);
    }
}

//! Dense-matrix reference implementations.
//!
//! Everything here is built from explicit `2^N x 2^N` Kronecker products of
//! 2x2 matrices and shares no arithmetic with the statevector kernels. It is
//! slow and only meant for small `N` (tests and the `gradcheck` harness).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::observable::{Observable, Pauli};
use crate::sim::{check_sites, CircuitSpec, GateKind, GateOp, MeasurementSite};

type CMat = DMatrix<Complex64>;

/// Largest system the dense oracles accept.
pub const MAX_ORACLE_QUBITS: usize = 8;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn two(a: [Complex64; 4]) -> CMat {
    DMatrix::from_row_slice(2, 2, &a)
}

fn identity2() -> CMat {
    two([c(1., 0.), c(0., 0.), c(0., 0.), c(1., 0.)])
}

fn pauli(p: Pauli) -> CMat {
    match p {
        Pauli::X => two([c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
        Pauli::Y => two([c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]),
        Pauli::Z => two([c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]),
    }
}

fn projector(outcome: u8) -> CMat {
    let (a, b) = if outcome == 0 { (1., 0.) } else { (0., 1.) };
    two([c(a, 0.), c(0., 0.), c(0., 0.), c(b, 0.)])
}

/// `M_{N-1} (x) ... (x) M_0`, with identity on qubits absent from `ops`.
pub fn embed(num_qubits: usize, ops: &[(usize, CMat)]) -> CMat {
    (0..num_qubits).rev().fold(DMatrix::identity(1, 1), |acc, q| {
        let m = ops
            .iter()
            .find(|(site, _)| *site == q)
            .map(|(_, m)| m.clone())
            .unwrap_or_else(identity2);
        acc.kronecker(&m)
    })
}

/// Full matrix of a gate, constructed as `cos(t/2) I - i sin(t/2) A`.
pub fn gate_matrix(num_qubits: usize, g: &GateOp) -> CMat {
    let [a, b] = g.qubits;
    let rotation = |generator: CMat| {
        let half = 0.5 * g.angle;
        CMat::identity(1 << num_qubits, 1 << num_qubits) * c(half.cos(), 0.0) - generator * c(0.0, half.sin())
    };
    match g.kind {
        GateKind::H => {
            let r = std::f64::consts::FRAC_1_SQRT_2;
            embed(num_qubits, &[(a, two([c(r, 0.), c(r, 0.), c(r, 0.), c(-r, 0.)]))])
        }
        GateKind::Cnot => {
            embed(num_qubits, &[(a, projector(0))])
                + embed(num_qubits, &[(a, projector(1)), (b, pauli(Pauli::X))])
        }
        GateKind::Rx => rotation(embed(num_qubits, &[(a, pauli(Pauli::X))])),
        GateKind::Ry => rotation(embed(num_qubits, &[(a, pauli(Pauli::Y))])),
        GateKind::Rzz => rotation(embed(num_qubits, &[(a, pauli(Pauli::Z)), (b, pauli(Pauli::Z))])),
        GateKind::Ryy => rotation(embed(num_qubits, &[(a, pauli(Pauli::Y)), (b, pauli(Pauli::Y))])),
        GateKind::Rxx => rotation(embed(num_qubits, &[(a, pauli(Pauli::X)), (b, pauli(Pauli::X))])),
    }
}

pub fn observable_matrix(num_qubits: usize, o: &Observable) -> CMat {
    o.terms()
        .iter()
        .fold(CMat::zeros(1 << num_qubits, 1 << num_qubits), |acc, (coef, s)| {
            let ops: Vec<_> = s.factors().iter().map(|&(q, p)| (q, pauli(p))).collect();
            acc + embed(num_qubits, &ops) * c(*coef, 0.0)
        })
}

fn check_width(circuit: &CircuitSpec) -> Result<()> {
    if circuit.num_qubits > MAX_ORACLE_QUBITS {
        return Err(Error::Config(format!(
            "dense oracle limited to {MAX_ORACLE_QUBITS} qubits"
        )));
    }
    Ok(())
}

/// Unnormalized branch vector `Pi_M U_M ... Pi_1 U_1 |psi_0>`.
pub fn unnormalized_branch(
    circuit: &CircuitSpec,
    sites: &[MeasurementSite],
    outcomes: &[u8],
) -> Result<DVector<Complex64>> {
    check_width(circuit)?;
    check_sites(circuit, sites, outcomes)?;
    let n = circuit.num_qubits;
    let mut psi = DVector::from_element(1 << n, c(0., 0.));
    psi[0] = c(1., 0.);
    for g in &circuit.prep {
        psi = gate_matrix(n, g) * psi;
    }
    for (layer, gates) in circuit.layers.iter().enumerate() {
        for g in gates {
            psi = gate_matrix(n, g) * psi;
        }
        for (s, &o) in sites.iter().zip(outcomes).filter(|(s, _)| s.layer == layer) {
            psi = embed(n, &[(s.qubit, projector(o))]) * psi;
        }
    }
    Ok(psi)
}

/// `(p_M, <O>)` of a branch; `<O>` is `NaN` when `p_M = 0`.
pub fn branch_expectation(
    circuit: &CircuitSpec,
    sites: &[MeasurementSite],
    outcomes: &[u8],
    observable: &Observable,
) -> Result<(f64, f64)> {
    let psi = unnormalized_branch(circuit, sites, outcomes)?;
    let p = psi.norm_squared();
    let o = observable_matrix(circuit.num_qubits, observable);
    let weighted = (psi.adjoint() * o * &psi)[(0, 0)].re;
    Ok((p, weighted / p))
}

/// `Tr(rho O)` for the measure-and-forget channel: each site dephases its
/// qubit, `rho -> P0 rho P0 + P1 rho P1`.
pub fn channel_expectation(
    circuit: &CircuitSpec,
    sites: &[MeasurementSite],
    observable: &Observable,
) -> Result<f64> {
    check_width(circuit)?;
    check_sites(circuit, sites, &vec![0; sites.len()])?;
    let n = circuit.num_qubits;
    let dim = 1 << n;
    let mut rho = CMat::zeros(dim, dim);
    rho[(0, 0)] = c(1., 0.);
    let evolve = |rho: CMat, g: &GateOp| {
        let u = gate_matrix(n, g);
        &u * rho * u.adjoint()
    };
    for g in &circuit.prep {
        rho = evolve(rho, g);
    }
    for (layer, gates) in circuit.layers.iter().enumerate() {
        for g in gates {
            rho = evolve(rho, g);
        }
        for s in sites.iter().filter(|s| s.layer == layer) {
            let p0 = embed(n, &[(s.qubit, projector(0))]);
            let p1 = embed(n, &[(s.qubit, projector(1))]);
            rho = &p0 * &rho * &p0 + &p1 * &rho * &p1;
        }
    }
    Ok((rho * observable_matrix(n, observable)).trace().re)
}

/// Dense matrix of the state `|psi><psi|` traced down to `keep`.
pub fn partial_trace(psi: &DVector<Complex64>, num_qubits: usize, keep: &[usize]) -> CMat {
    let full = psi * psi.adjoint();
    let dim_a = 1 << keep.len();
    let mut rho = CMat::zeros(dim_a, dim_a);
    let traced: Vec<usize> = (0..num_qubits).filter(|q| !keep.contains(q)).collect();
    let index = |a: usize, b: usize| {
        let mut i = 0;
        for (j, &q) in keep.iter().enumerate() {
            i |= (a >> j & 1) << q;
        }
        for (j, &q) in traced.iter().enumerate() {
            i |= (b >> j & 1) << q;
        }
        i
    };
    for a1 in 0..dim_a {
        for a2 in 0..dim_a {
            rho[(a1, a2)] = (0..1 << traced.len())
                .map(|b| full[(index(a1, b), index(a2, b))])
                .sum();
        }
    }
    rho
}

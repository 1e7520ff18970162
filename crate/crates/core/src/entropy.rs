//! Entanglement measures of pure states.
//!
//! All entropies are von Neumann entropies in nats. Multiply by
//! [`std::f64::consts::LOG2_E`] (see [`EntropyUnit`]) to report bits.

use faer::complex_native::c64;
use faer::dyn_stack::{GlobalPodBuffer, PodStack};
use faer::linalg::{evd, svd};
use faer::{Col, Mat, Parallelism};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::StateVector;

/// Largest subsystem for which a reduced density matrix is materialized.
pub const MAX_SUBSYSTEM: usize = 12;

/// Eigenvalues below this are dropped from `-sum l ln l`.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyUnit {
    #[default]
    Nats,
    Bits,
}

impl EntropyUnit {
    pub fn convert(self, nats: f64) -> f64 {
        match self {
            EntropyUnit::Nats => nats,
            EntropyUnit::Bits => nats * std::f64::consts::LOG2_E,
        }
    }
}

/// A proper, non-empty subset of the qubits, stored sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Subsystem {
    qubits: Vec<usize>,
    num_qubits: usize,
}

impl Subsystem {
    pub fn new(qubits: impl IntoIterator<Item = usize>, num_qubits: usize) -> Result<Self> {
        let mut qubits: Vec<usize> = qubits.into_iter().collect();
        qubits.sort_unstable();
        qubits.dedup();
        if qubits.is_empty() {
            return Err(Error::InvalidSubsystem("empty".into()));
        }
        if let Some(&q) = qubits.iter().find(|&&q| q >= num_qubits) {
            return Err(Error::QubitOutOfRange {
                index: q,
                num_qubits,
            });
        }
        if qubits.len() == num_qubits {
            return Err(Error::InvalidSubsystem("covers the whole system".into()));
        }
        Ok(Self { qubits, num_qubits })
    }

    /// The contiguous half `{0, ..., N/2 - 1}`.
    pub fn half_chain(num_qubits: usize) -> Result<Self> {
        if !num_qubits.is_multiple_of(2) {
            return Err(Error::InvalidSubsystem(format!(
                "half-chain cut needs even N, got {num_qubits}"
            )));
        }
        Self::new(0..num_qubits / 2, num_qubits)
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn len(&self) -> usize {
        self.qubits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qubits.is_empty()
    }

    pub fn complement(&self) -> Self {
        let qubits = (0..self.num_qubits)
            .filter(|q| self.qubits.binary_search(q).is_err())
            .collect();
        Self {
            qubits,
            num_qubits: self.num_qubits,
        }
    }
}

/// Scatter pattern: basis index of every assignment to `qubits`.
fn patterns(qubits: &[usize]) -> Vec<usize> {
    (0..1usize << qubits.len())
        .map(|k| {
            qubits
                .iter()
                .enumerate()
                .filter(|(j, _)| k >> j & 1 == 1)
                .fold(0, |acc, (_, &q)| acc | 1 << q)
        })
        .collect()
}

/// Amplitudes reshaped to a `2^|A| x 2^|B|` matrix with rows indexed by `A`.
fn bipartite_matrix(state: &StateVector, a: &Subsystem) -> DMatrix<Complex64> {
    let rows = patterns(a.qubits());
    let cols = patterns(a.complement().qubits());
    let amps = state.amplitudes();
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| amps[rows[i] | cols[j]])
}

fn check(state: &StateVector, a: &Subsystem) -> Result<()> {
    if a.num_qubits != state.num_qubits() {
        return Err(Error::InvalidSubsystem(format!(
            "subsystem defined for {} qubits, state has {}",
            a.num_qubits,
            state.num_qubits()
        )));
    }
    Ok(())
}

/// `rho_A = Tr_{complement(A)} |psi><psi|`, indexed by the bits of `A` in
/// ascending qubit order.
pub fn reduced_density_matrix(state: &StateVector, a: &Subsystem) -> Result<DMatrix<Complex64>> {
    check(state, a)?;
    if a.len() > MAX_SUBSYSTEM {
        return Err(Error::SubsystemTooLarge(a.len()));
    }
    let m = bipartite_matrix(state, a);
    Ok(&m * m.adjoint())
}

/// `-sum l ln l` over the spectrum of a Hermitian density matrix.
pub fn entropy_of_density_matrix(rho: DMatrix<Complex64>) -> f64 {
    shannon(hermitian_eigenvalues(&to_faer(&rho)).into_iter())
}

fn to_faer(m: &DMatrix<Complex64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| c64::new(m[(i, j)].re, m[(i, j)].im))
}

fn hermitian_eigenvalues(m: &Mat<c64>) -> Vec<f64> {
    let params = Default::default();
    let req = evd::compute_hermitian_evd_req::<c64>(m.nrows(), evd::ComputeVectors::No, Parallelism::None, params)
        .expect("workspace size");
    let mut s = Col::<c64>::zeros(m.nrows());
    evd::compute_hermitian_evd(
        m.as_ref(),
        s.as_mut(),
        None,
        Parallelism::None,
        PodStack::new(&mut GlobalPodBuffer::new(req)),
        params,
    );
    (0..m.nrows()).map(|i| s.read(i).re).collect()
}

fn singular_values(m: &Mat<c64>) -> Vec<f64> {
    let dim = m.nrows().min(m.ncols());
    let params = Default::default();
    let req = svd::compute_svd_req::<c64>(
        m.nrows(),
        m.ncols(),
        svd::ComputeVectors::No,
        svd::ComputeVectors::No,
        Parallelism::None,
        params,
    )
    .expect("workspace size");
    let mut s = Col::<c64>::zeros(dim);
    svd::compute_svd(
        m.as_ref(),
        s.as_mut(),
        None,
        None,
        Parallelism::None,
        PodStack::new(&mut GlobalPodBuffer::new(req)),
        params,
    );
    (0..dim).map(|i| s.read(i).re).collect()
}

fn shannon(spectrum: impl Iterator<Item = f64>) -> f64 {
    spectrum
        .filter(|&l| l > EIGENVALUE_FLOOR)
        .map(|l| -l * l.ln())
        .sum()
}

/// Von Neumann entropy `S(A)` in nats.
pub fn von_neumann_entropy(state: &StateVector, a: &Subsystem) -> Result<f64> {
    check(state, a)?;
    if a.len() > MAX_SUBSYSTEM {
        return Err(Error::SubsystemTooLarge(a.len()));
    }
    // The nonzero spectra of rho_A and rho_B coincide; work on the smaller side.
    let b = a.complement();
    let small = if b.len() < a.len() { &b } else { a };
    // Schmidt coefficients: squared singular values of the amplitude matrix.
    let m = bipartite_matrix(state, small);
    Ok(shannon(singular_values(&to_faer(&m)).into_iter().map(|s| s * s)))
}

/// Entropy of the canonical half-chain cut `{0, ..., N/2 - 1}`.
pub fn half_chain_entropy(state: &StateVector) -> Result<f64> {
    von_neumann_entropy(state, &Subsystem::half_chain(state.num_qubits())?)
}

/// `I(a, b) = S(a) + S(b) - S(ab)`, clamped at zero.
pub fn mutual_information(state: &StateVector, a: usize, b: usize) -> Result<f64> {
    if a == b {
        return Err(Error::InvalidSubsystem(format!(
            "mutual information needs distinct qubits, got {a} twice"
        )));
    }
    let n = state.num_qubits();
    let sa = von_neumann_entropy(state, &Subsystem::new([a], n)?)?;
    let sb = von_neumann_entropy(state, &Subsystem::new([b], n)?)?;
    let sab = if n == 2 {
        0.0
    } else {
        von_neumann_entropy(state, &Subsystem::new([a, b], n)?)?
    };
    Ok((sa + sb - sab).max(0.0))
}

/// Distance between two sites on a ring of `n` sites.
pub fn ring_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b) % n;
    d.min(n - d)
}
